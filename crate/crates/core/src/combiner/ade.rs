//! Meta-models that forecast each member's absolute error from the lag vector.

use crate::error::{Error, Result};
use crate::learners::{fit, FittedModel, LearnerSpec};
use crate::matrix::Matrix;
use crate::series::EmbeddedDataset;

/// Fewer meta-training rows than this and ADE falls back to LossTrain.
pub const MIN_META_ROWS: usize = 10;

/// One fitted error model per ensemble member, in member order.
#[derive(Debug, Clone)]
pub struct MetaModelSet {
    models: Vec<FittedModel>,
}

impl MetaModelSet {
    pub fn new(models: Vec<FittedModel>) -> Result<Self> {
        if models.is_empty() {
            return Err(Error::Empty("meta-model set"));
        }
        Ok(Self { models })
    }

    pub fn len(&self) -> usize {
        self.models.len()
    }

    pub fn is_empty(&self) -> bool {
        self.models.is_empty()
    }

    pub fn models(&self) -> &[FittedModel] {
        &self.models
    }

    /// Predicted absolute errors, `K x H`, clamped at zero.
    pub fn predict_errors(&self, lag_input: &[f64]) -> Result<Matrix> {
        let rows = self
            .models
            .iter()
            .map(|m| {
                m.predict_row(lag_input)
                    .map(|r| r.into_iter().map(|e| e.max(0.0)).collect::<Vec<_>>())
            })
            .collect::<Result<Vec<_>>>()?;
        Matrix::from_rows(&rows)
    }
}

#[derive(Debug, Clone)]
pub enum MetaFit {
    Fitted(MetaModelSet),
    /// Too few rows to train on; the caller should use LossTrain weights.
    Fallback { rows: usize },
}

/// Fits one meta-model per member on held-out data.
///
/// `predictions[k]` and `actuals` are `m x H`; `lag_inputs` is `m x q`.
/// All meta-models share one seed so identical targets give identical models.
pub fn ade_fit_meta(
    predictions: &[Matrix],
    actuals: &Matrix,
    lag_inputs: &Matrix,
    meta_spec: &LearnerSpec,
    seed: u64,
) -> Result<MetaFit> {
    let (m, h) = (actuals.rows(), actuals.cols());
    if lag_inputs.rows() != m {
        return Err(Error::shape(format!("{m} lag rows"), lag_inputs.rows()));
    }
    for p in predictions {
        if p.rows() != m || p.cols() != h {
            return Err(Error::shape(format!("{m}x{h} predictions"), format!("{}x{}", p.rows(), p.cols())));
        }
    }
    if predictions.is_empty() {
        return Err(Error::Empty("ensemble members"));
    }
    if m < MIN_META_ROWS {
        log::warn!("ADE: {m} meta-training rows (< {MIN_META_ROWS}), falling back to LossTrain");
        return Ok(MetaFit::Fallback { rows: m });
    }
    let models = predictions
        .iter()
        .map(|p| {
            let mut errors = Matrix::zeros(m, h);
            for i in 0..m {
                for j in 0..h {
                    errors.set(i, j, (p.get(i, j) - actuals.get(i, j)).abs());
                }
            }
            let data = EmbeddedDataset {
                x: lag_inputs.clone(),
                y: errors,
                lags: lag_inputs.cols(),
                horizon: h,
                origins: (0..m).collect(),
            };
            fit(meta_spec, &data, seed)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(MetaFit::Fitted(MetaModelSet::new(models)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::learners::{Depth, LearnerParams};

    fn lags(m: usize) -> Matrix {
        Matrix::from_rows(
            &(0..m)
                .map(|i| vec![(i as f64 * 0.7).sin(), (i as f64 * 0.3).cos()])
                .collect::<Vec<_>>(),
        )
        .unwrap()
    }

    fn forest() -> LearnerSpec {
        LearnerSpec::new(
            "META",
            LearnerParams::RandomForest {
                trees: 20,
                depth: Depth::Default,
            },
        )
        .unwrap()
    }

    #[test]
    fn too_few_rows_falls_back() {
        let a = Matrix::zeros(5, 2);
        let fit = ade_fit_meta(&[a.clone()], &a, &lags(5), &forest(), 1).unwrap();
        assert!(matches!(fit, MetaFit::Fallback { rows: 5 }));
    }

    #[test]
    fn perfect_member_has_zero_predicted_error() {
        let m = 30;
        let actual = Matrix::from_rows(&(0..m).map(|i| vec![i as f64, -(i as f64)]).collect::<Vec<_>>()).unwrap();
        let noisy = Matrix::from_rows(&(0..m).map(|i| vec![i as f64 + 1.0, 0.0]).collect::<Vec<_>>()).unwrap();
        let x = lags(m);
        let MetaFit::Fitted(set) = ade_fit_meta(&[actual.clone(), noisy], &actual, &x, &forest(), 3).unwrap() else {
            panic!("expected fitted meta-models");
        };
        for i in 0..m {
            let e = set.predict_errors(x.row(i)).unwrap();
            assert!(e.row(0).iter().all(|v| v.abs() <= 1e-6));
        }
    }

    #[test]
    fn identical_members_identical_meta_predictions() {
        let m = 25;
        let actual = Matrix::from_rows(&(0..m).map(|i| vec![(i as f64).sqrt()]).collect::<Vec<_>>()).unwrap();
        let pred = Matrix::from_rows(&(0..m).map(|i| vec![(i % 4) as f64]).collect::<Vec<_>>()).unwrap();
        let x = lags(m);
        let MetaFit::Fitted(set) = ade_fit_meta(&[pred.clone(), pred], &actual, &x, &forest(), 9).unwrap() else {
            panic!("expected fitted meta-models");
        };
        let e = set.predict_errors(&[0.2, -0.4]).unwrap();
        assert_eq!(e.row(0), e.row(1));
    }

    #[test]
    fn shape_mismatch() {
        let a = Matrix::zeros(12, 2);
        let b = Matrix::zeros(12, 3);
        assert!(matches!(
            ade_fit_meta(&[b], &a, &lags(12), &forest(), 0),
            Err(Error::Shape { .. })
        ));
    }
}
