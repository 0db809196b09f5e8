//! Brute-force k-nearest-neighbour regression in lag space.

use std::cmp::Ordering;

use super::KnnWeighting;
use crate::error::{Error, Result};
use crate::matrix::Matrix;

#[derive(Debug, Clone)]
pub struct KnnModel {
    x: Matrix,
    y: Matrix,
    k: usize,
    weighting: KnnWeighting,
}

impl KnnModel {
    pub fn fit(x: &Matrix, y: &Matrix, k: usize, weighting: KnnWeighting) -> Result<Self> {
        if x.rows() != y.rows() {
            return Err(Error::shape(format!("{} target rows", x.rows()), y.rows()));
        }
        if x.rows() < k {
            return Err(Error::InsufficientData {
                required: k,
                actual: x.rows(),
            });
        }
        Ok(Self {
            x: x.clone(),
            y: y.clone(),
            k,
            weighting,
        })
    }

    /// Training rows nearest to `query` with their squared distances, closest
    /// first; equal distances are ordered by training index.
    pub fn neighbors(&self, query: &[f64]) -> Vec<(f64, usize)> {
        let mut dist: Vec<(f64, usize)> = self
            .x
            .iter_rows()
            .enumerate()
            .map(|(i, r)| {
                let d2 = r.iter().zip(query).map(|(a, b)| (a - b) * (a - b)).sum::<f64>();
                (d2, i)
            })
            .collect();
        let cmp = |a: &(f64, usize), b: &(f64, usize)| {
            a.0.partial_cmp(&b.0).unwrap_or(Ordering::Equal).then(a.1.cmp(&b.1))
        };
        if self.k < dist.len() {
            dist.select_nth_unstable_by(self.k - 1, cmp);
            dist.truncate(self.k);
        }
        dist.sort_unstable_by(cmp);
        dist
    }

    pub(crate) fn predict_into(&self, query: &[f64], out: &mut [f64]) {
        let nn = self.neighbors(query);
        out.iter_mut().for_each(|o| *o = 0.0);
        let exact: Vec<usize> = nn.iter().filter(|(d, _)| *d == 0.0).map(|&(_, i)| i).collect();
        let weighted: Vec<(f64, usize)> = match self.weighting {
            KnnWeighting::Uniform => nn.iter().map(|&(_, i)| (1.0, i)).collect(),
            // exact matches take all the weight
            KnnWeighting::Distance if !exact.is_empty() => exact.iter().map(|&i| (1.0, i)).collect(),
            KnnWeighting::Distance => nn.iter().map(|&(d2, i)| (1.0 / d2.sqrt(), i)).collect(),
        };
        let total: f64 = weighted.iter().map(|(w, _)| w).sum();
        for (w, i) in weighted {
            for (o, t) in out.iter_mut().zip(self.y.row(i)) {
                *o += w * t;
            }
        }
        out.iter_mut().for_each(|o| *o /= total);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn model(k: usize, weighting: KnnWeighting) -> KnnModel {
        let x = Matrix::from_rows(&[[0.0], [10.0]]).unwrap();
        let y = Matrix::from_rows(&[[1.0, 2.0], [3.0, 4.0]]).unwrap();
        KnnModel::fit(&x, &y, k, weighting).unwrap()
    }

    fn predict(m: &KnnModel, q: f64) -> Vec<f64> {
        let mut out = vec![0.0; 2];
        m.predict_into(&[q], &mut out);
        out
    }

    #[test]
    fn nearest_point() {
        assert_eq!(predict(&model(1, KnnWeighting::Uniform), 1.0), vec![1.0, 2.0]);
    }

    #[test]
    fn uniform_mean_of_two() {
        assert_eq!(predict(&model(2, KnnWeighting::Uniform), 5.0), vec![2.0, 3.0]);
    }

    #[test]
    fn exact_match_under_distance_weighting() {
        assert_eq!(predict(&model(2, KnnWeighting::Distance), 0.0), vec![1.0, 2.0]);
    }

    #[test]
    fn inverse_distance_weights() {
        // d = 2 and 8: weights 1/2 and 1/8 -> 0.8 / 0.2
        let got = predict(&model(2, KnnWeighting::Distance), 2.0);
        assert!((got[0] - (0.8 * 1.0 + 0.2 * 3.0)).abs() < 1e-12);
    }

    #[test]
    fn too_few_rows_for_k() {
        let x = Matrix::from_rows(&[[0.0]]).unwrap();
        assert!(matches!(
            KnnModel::fit(&x, &x, 2, KnnWeighting::Uniform),
            Err(Error::InsufficientData { required: 2, actual: 1 })
        ));
    }
}
