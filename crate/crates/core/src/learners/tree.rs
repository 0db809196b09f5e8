//! Multi-output CART regression trees and the bagged / randomized forests
//! built from them.
//!
//! Splits maximize the reduction of the summed per-output squared error;
//! leaves store the mean target vector of their samples.

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::matrix::Matrix;
use crate::rng::rng_from;

/// Nodes with fewer samples than this become leaves when no depth limit is set.
pub const DEFAULT_MIN_SAMPLES_SPLIT: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Splitter {
    /// Exhaustive threshold search per candidate feature.
    Best,
    /// One uniformly drawn threshold per candidate feature (extra trees).
    Random,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TreeParams {
    pub max_depth: Option<usize>,
    pub min_samples_split: usize,
    pub max_features: usize,
    pub splitter: Splitter,
}

#[derive(Debug, Clone)]
enum Node {
    Leaf {
        offset: usize,
    },
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
}

#[derive(Debug, Clone)]
pub struct RegressionTree {
    nodes: Vec<Node>,
    values: Vec<f64>,
    outputs: usize,
}

struct Candidate {
    feature: usize,
    threshold: f64,
    score: f64,
}

struct Builder<'a> {
    x: &'a Matrix,
    y: &'a Matrix,
    params: &'a TreeParams,
    rng: ChaCha8Rng,
    nodes: Vec<Node>,
    values: Vec<f64>,
    pairs: Vec<(f64, usize)>,
    left_sum: Vec<f64>,
}

impl RegressionTree {
    /// Grows a tree on the rows listed in `samples` (repeats allowed).
    pub fn fit(x: &Matrix, y: &Matrix, samples: &mut [usize], params: &TreeParams, seed: u64) -> Self {
        let mut b = Builder {
            x,
            y,
            params,
            rng: rng_from(seed),
            nodes: Vec::new(),
            values: Vec::new(),
            pairs: Vec::with_capacity(samples.len()),
            left_sum: vec![0.0; y.cols()],
        };
        b.build(samples, 0);
        RegressionTree {
            nodes: b.nodes,
            values: b.values,
            outputs: y.cols(),
        }
    }

    pub fn leaf_value(&self, x: &[f64]) -> &[f64] {
        let mut n = 0;
        loop {
            match self.nodes[n] {
                Node::Leaf { offset } => return &self.values[offset..offset + self.outputs],
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => n = if x[feature] <= threshold { left } else { right },
            }
        }
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn depth(&self) -> usize {
        fn walk(nodes: &[Node], n: usize) -> usize {
            match nodes[n] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => 1 + walk(nodes, left).max(walk(nodes, right)),
            }
        }
        walk(&self.nodes, 0)
    }

    /// Root split as `(feature, threshold)`, if the root is not a leaf.
    pub fn root_split(&self) -> Option<(usize, f64)> {
        match self.nodes.first()? {
            Node::Split {
                feature, threshold, ..
            } => Some((*feature, *threshold)),
            Node::Leaf { .. } => None,
        }
    }
}

impl Builder<'_> {
    fn push_leaf(&mut self, idx: &[usize]) -> usize {
        let offset = self.values.len();
        let h = self.y.cols();
        self.values.extend(std::iter::repeat(0.0).take(h));
        for &i in idx {
            for (v, t) in self.values[offset..].iter_mut().zip(self.y.row(i)) {
                *v += t;
            }
        }
        let n = idx.len() as f64;
        self.values[offset..].iter_mut().for_each(|v| *v /= n);
        self.nodes.push(Node::Leaf { offset });
        self.nodes.len() - 1
    }

    fn build(&mut self, idx: &mut [usize], depth: usize) -> usize {
        let n = idx.len();
        let depth_reached = self.params.max_depth.is_some_and(|d| depth >= d);
        if n < self.params.min_samples_split || depth_reached {
            return self.push_leaf(idx);
        }
        let h = self.y.cols();
        let mut total = vec![0.0; h];
        let mut sq = 0.0;
        for &i in idx.iter() {
            for (t, v) in total.iter_mut().zip(self.y.row(i)) {
                *t += v;
                sq += v * v;
            }
        }
        let parent_score = total.iter().map(|t| t * t).sum::<f64>() / n as f64;
        let sse = sq - parent_score;
        if sse <= 1e-12 * sq.max(1e-300) {
            return self.push_leaf(idx);
        }
        let Some(best) = self.find_split(idx, &total, parent_score, sse) else {
            return self.push_leaf(idx);
        };

        // partition in place: left = x <= threshold
        let mut split = 0;
        for k in 0..n {
            if self.x.get(idx[k], best.feature) <= best.threshold {
                idx.swap(k, split);
                split += 1;
            }
        }
        debug_assert!(split > 0 && split < n);
        let node = self.nodes.len();
        self.nodes.push(Node::Leaf { offset: 0 });
        let (l, r) = idx.split_at_mut(split);
        let left = self.build(l, depth + 1);
        let right = self.build(r, depth + 1);
        self.nodes[node] = Node::Split {
            feature: best.feature,
            threshold: best.threshold,
            left,
            right,
        };
        node
    }

    fn find_split(&mut self, idx: &[usize], total: &[f64], parent: f64, sse: f64) -> Option<Candidate> {
        let q = self.x.cols();
        let mut features: Vec<usize> = (0..q).collect();
        features.shuffle(&mut self.rng);
        let min_gain = 1e-12 * sse;
        let mut best: Option<Candidate> = None;
        let mut tried = 0;
        for f in features {
            if tried >= self.params.max_features && best.is_some() {
                break;
            }
            let cand = match self.params.splitter {
                Splitter::Best => self.best_threshold(idx, f, total),
                Splitter::Random => self.random_threshold(idx, f, total),
            };
            let Some(cand) = cand else {
                // constant feature in this node, does not count as tried
                continue;
            };
            tried += 1;
            if cand.score - parent > min_gain && best.as_ref().map_or(true, |b| cand.score > b.score) {
                best = Some(cand);
            }
        }
        best
    }

    fn best_threshold(&mut self, idx: &[usize], f: usize, total: &[f64]) -> Option<Candidate> {
        self.pairs.clear();
        self.pairs.extend(idx.iter().map(|&i| (self.x.get(i, f), i)));
        self.pairs
            .sort_unstable_by(|a, b| a.0.partial_cmp(&b.0).unwrap_or(std::cmp::Ordering::Equal));
        let n = self.pairs.len();
        if self.pairs[0].0 == self.pairs[n - 1].0 {
            return None;
        }
        self.left_sum.iter_mut().for_each(|v| *v = 0.0);
        let mut best: Option<(f64, usize)> = None;
        for k in 0..n - 1 {
            let row = self.y.row(self.pairs[k].1);
            for (l, v) in self.left_sum.iter_mut().zip(row) {
                *l += v;
            }
            if self.pairs[k].0 == self.pairs[k + 1].0 {
                continue;
            }
            let nl = (k + 1) as f64;
            let nr = (n - k - 1) as f64;
            let score: f64 = self
                .left_sum
                .iter()
                .zip(total)
                .map(|(l, t)| l * l / nl + (t - l) * (t - l) / nr)
                .sum();
            if best.map_or(true, |(s, _)| score > s) {
                best = Some((score, k));
            }
        }
        let (score, k) = best?;
        let (lo, hi) = (self.pairs[k].0, self.pairs[k + 1].0);
        let mut threshold = lo + (hi - lo) / 2.0;
        if threshold >= hi {
            threshold = lo;
        }
        Some(Candidate {
            feature: f,
            threshold,
            score,
        })
    }

    fn random_threshold(&mut self, idx: &[usize], f: usize, total: &[f64]) -> Option<Candidate> {
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for &i in idx {
            let v = self.x.get(i, f);
            lo = lo.min(v);
            hi = hi.max(v);
        }
        if lo >= hi {
            return None;
        }
        let threshold = self.rng.gen_range(lo..hi);
        self.left_sum.iter_mut().for_each(|v| *v = 0.0);
        let mut nl = 0usize;
        for &i in idx {
            if self.x.get(i, f) <= threshold {
                nl += 1;
                for (l, v) in self.left_sum.iter_mut().zip(self.y.row(i)) {
                    *l += v;
                }
            }
        }
        let nr = idx.len() - nl;
        if nl == 0 || nr == 0 {
            return None;
        }
        let score = self
            .left_sum
            .iter()
            .zip(total)
            .map(|(l, t)| l * l / nl as f64 + (t - l) * (t - l) / nr as f64)
            .sum();
        Some(Candidate {
            feature: f,
            threshold,
            score,
        })
    }
}

/// Average of independently grown trees. A single unbootstrapped tree is a
/// forest of one.
#[derive(Debug, Clone)]
pub struct Forest {
    trees: Vec<RegressionTree>,
    outputs: usize,
}

impl Forest {
    pub fn fit(
        x: &Matrix,
        y: &Matrix,
        params: &TreeParams,
        n_trees: usize,
        bootstrap: bool,
        seed: u64,
    ) -> Self {
        let m = x.rows();
        let mut rng = rng_from(seed);
        let trees = (0..n_trees)
            .map(|_| {
                let tree_seed: u64 = rng.gen();
                let mut samples: Vec<usize> = if bootstrap {
                    let mut r = rng_from(tree_seed.rotate_left(17));
                    (0..m).map(|_| r.gen_range(0..m)).collect()
                } else {
                    (0..m).collect()
                };
                RegressionTree::fit(x, y, &mut samples, params, tree_seed)
            })
            .collect();
        Forest {
            trees,
            outputs: y.cols(),
        }
    }

    pub fn trees(&self) -> &[RegressionTree] {
        &self.trees
    }

    pub(crate) fn predict_into(&self, x: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|o| *o = 0.0);
        for t in &self.trees {
            for (o, v) in out.iter_mut().zip(t.leaf_value(x)) {
                *o += v;
            }
        }
        let n = self.trees.len() as f64;
        out.iter_mut().for_each(|o| *o /= n);
        debug_assert_eq!(out.len(), self.outputs);
    }
}
