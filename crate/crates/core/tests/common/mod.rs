//! Helpers shared by the integration tests: independent reference solvers
//! (which never call into the crate's own solvers) and a driver that feeds
//! random forecast streams through a combiner.

#![allow(dead_code)]

use std::sync::Arc;

use mo_ensemble::combiner::{
    ade_fit_meta, init_state, CombinerConfig, CombinerState, ForecastBlock, MetaFit, MetaModelSet, Method, Rule,
};
use mo_ensemble::learners::{LearnerParams, LearnerSpec};
use mo_ensemble::Matrix;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// Solves `a x = b` by Gaussian elimination with partial pivoting.
pub fn gauss_solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
    let n = b.len();
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))
            .unwrap();
        a.swap(col, pivot);
        b.swap(col, pivot);
        for row in col + 1..n {
            let f = a[row][col] / a[col][col];
            for k in col..n {
                a[row][k] -= f * a[col][k];
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let s: f64 = (i + 1..n).map(|k| a[i][k] * x[k]).sum();
        x[i] = (b[i] - s) / a[i][i];
    }
    x
}

/// Ridge with an unpenalized intercept from the augmented normal equations
/// `(A'A + lambda D) beta = A'y`, `A = [X 1]`, `D = diag(1, .., 1, 0)`.
/// Returns `(coef, intercept)` for one output column.
pub fn ridge_oracle(x: &[Vec<f64>], y: &[f64], lambda: f64) -> (Vec<f64>, f64) {
    let q = x[0].len();
    let p = q + 1;
    let aug = |r: &Vec<f64>, j: usize| if j < q { r[j] } else { 1.0 };
    let mut ata = vec![vec![0.0; p]; p];
    let mut aty = vec![0.0; p];
    for (r, &yi) in x.iter().zip(y) {
        for i in 0..p {
            aty[i] += aug(r, i) * yi;
            for j in 0..p {
                ata[i][j] += aug(r, i) * aug(r, j);
            }
        }
    }
    for (j, row) in ata.iter_mut().enumerate().take(q) {
        row[j] += lambda;
    }
    let beta = gauss_solve(ata, aty);
    (beta[..q].to_vec(), beta[q])
}

pub fn random_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Vec<Vec<f64>> {
    (0..rows)
        .map(|_| (0..cols).map(|_| rng.gen_range(-3.0..3.0)).collect())
        .collect()
}

/// Mean and population standard deviation of each column.
pub fn column_moments(x: &[Vec<f64>]) -> (Vec<f64>, Vec<f64>) {
    let m = x.len() as f64;
    let q = x[0].len();
    let means: Vec<f64> = (0..q).map(|j| x.iter().map(|r| r[j]).sum::<f64>() / m).collect();
    let stds = (0..q)
        .map(|j| (x.iter().map(|r| (r[j] - means[j]).powi(2)).sum::<f64>() / m).sqrt())
        .collect();
    (means, stds)
}

/// Largest violation of the elastic-net optimality conditions on the
/// standardized problem, given raw-scale coefficients of one output.
pub fn elastic_net_kkt_violation(x: &[Vec<f64>], y: &[f64], coef: &[f64], lambda: f64, l1_ratio: f64) -> f64 {
    let m = x.len() as f64;
    let (means, stds) = column_moments(x);
    let y_mean = y.iter().sum::<f64>() / m;
    let w: Vec<f64> = coef.iter().zip(&stds).map(|(c, s)| c * s).collect();
    let z = |i: usize, j: usize| (x[i][j] - means[j]) / stds[j];
    let resid: Vec<f64> = (0..x.len())
        .map(|i| y[i] - y_mean - (0..w.len()).map(|j| z(i, j) * w[j]).sum::<f64>())
        .collect();
    let l1 = lambda * l1_ratio;
    let l2 = lambda * (1.0 - l1_ratio);
    (0..w.len())
        .map(|j| {
            let g = (0..x.len()).map(|i| z(i, j) * resid[i]).sum::<f64>() / m - l2 * w[j];
            if w[j] != 0.0 {
                (g - l1 * w[j].signum()).abs()
            } else {
                (g.abs() - l1).max(0.0)
            }
        })
        .fold(0.0, f64::max)
}

/// All training rows sorted by squared distance to `query`, then index.
pub fn brute_force_neighbors(x: &[Vec<f64>], query: &[f64]) -> Vec<(f64, usize)> {
    let mut d: Vec<(f64, usize)> = x
        .iter()
        .enumerate()
        .map(|(i, r)| (r.iter().zip(query).map(|(a, b)| (a - b) * (a - b)).sum::<f64>(), i))
        .collect();
    d.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    d
}

/// Forecasts and actual values for a run of consecutive origins.
pub struct Stream {
    pub members: usize,
    pub horizon: usize,
    pub lags: Vec<Vec<f64>>,
    pub blocks: Vec<ForecastBlock>,
    pub actuals: Matrix,
}

impl Stream {
    pub fn random(rng: &mut ChaCha8Rng, members: usize, horizon: usize, origins: usize) -> Self {
        let ids: Arc<[String]> = (0..members).map(|i| format!("m{i}")).collect();
        let scale: Vec<f64> = (0..members).map(|_| rng.gen_range(0.1..3.0)).collect();
        let actual_rows: Vec<Vec<f64>> = (0..origins)
            .map(|_| (0..horizon).map(|_| rng.gen_range(-5.0..5.0)).collect())
            .collect();
        let blocks = actual_rows
            .iter()
            .map(|a| {
                let rows: Vec<Vec<f64>> = scale
                    .iter()
                    .map(|s| a.iter().map(|v| v + s * rng.gen_range(-1.0..1.0)).collect())
                    .collect();
                ForecastBlock::new(Matrix::from_rows(&rows).unwrap(), ids.clone()).unwrap()
            })
            .collect();
        let lags = (0..origins)
            .map(|_| (0..3).map(|_| rng.gen_range(-1.0..1.0)).collect())
            .collect();
        Self {
            members,
            horizon,
            lags,
            blocks,
            actuals: Matrix::from_rows(&actual_rows).unwrap(),
        }
    }

    pub fn origins(&self) -> usize {
        self.blocks.len()
    }
}

/// Meta-models fitted on random data with a cheap linear learner.
pub fn random_meta(rng: &mut ChaCha8Rng, members: usize, horizon: usize) -> Arc<MetaModelSet> {
    let m = 20;
    let lags = Matrix::from_rows(&random_matrix(rng, m, 3)).unwrap();
    let actual = Matrix::from_rows(&random_matrix(rng, m, horizon)).unwrap();
    let preds: Vec<Matrix> = (0..members)
        .map(|_| Matrix::from_rows(&random_matrix(rng, m, horizon)).unwrap())
        .collect();
    let spec = LearnerSpec::new("META", LearnerParams::Ridge { lambda: 1.0 }).unwrap();
    match ade_fit_meta(&preds, &actual, &lags, &spec, 0).unwrap() {
        MetaFit::Fitted(set) => Arc::new(set),
        MetaFit::Fallback { .. } => unreachable!("20 rows is enough"),
    }
}

pub fn random_train_losses(rng: &mut ChaCha8Rng, members: usize, horizon: usize) -> Matrix {
    Matrix::from_rows(&(0..members)
        .map(|_| (0..horizon).map(|_| rng.gen_range(0.0..4.0)).collect::<Vec<_>>())
        .collect::<Vec<_>>())
    .unwrap()
}

pub fn new_state(
    method: Method,
    stream: &Stream,
    train_losses: &Matrix,
    meta: &Arc<MetaModelSet>,
    cfg: &CombinerConfig,
) -> CombinerState {
    let meta = (method.rule == Rule::Ade).then(|| meta.clone());
    init_state(method, stream.members, stream.horizon, Some(train_losses), meta, cfg).unwrap()
}

/// Runs the feedback / forecast loop and returns the weights used at each origin.
pub fn drive(state: &mut CombinerState, stream: &Stream) -> Vec<mo_ensemble::combiner::WeightMatrix> {
    (0..stream.origins())
        .map(|i| {
            state.advance(i, &stream.actuals).unwrap();
            let w = state.weights(&stream.lags[i]).unwrap();
            state.forecast(i, &stream.lags[i], &stream.blocks[i]).unwrap();
            w
        })
        .collect()
}
