//! Penalized linear regression: closed-form ridge and coordinate-descent
//! lasso / elastic net, one linear model per output column.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::matrix::Matrix;

/// Stop when the largest coefficient change in a sweep falls below this.
pub const COORDINATE_DESCENT_TOL: f64 = 1e-6;
pub const COORDINATE_DESCENT_MAX_SWEEPS: usize = 1000;

/// `y = intercept + x . coef`, with `coef` of shape `q x H`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearModel {
    pub coef: Matrix,
    pub intercept: Vec<f64>,
}

impl LinearModel {
    /// Predicts the column means of `y` whatever the input.
    pub fn intercept_only(inputs: usize, y_means: Vec<f64>) -> Self {
        Self {
            coef: Matrix::zeros(inputs, y_means.len()),
            intercept: y_means,
        }
    }

    pub(crate) fn predict_into(&self, x: &[f64], out: &mut [f64]) {
        out.copy_from_slice(&self.intercept);
        for (j, &xj) in x.iter().enumerate() {
            if xj == 0.0 {
                continue;
            }
            for (o, c) in out.iter_mut().zip(self.coef.row(j)) {
                *o += xj * c;
            }
        }
    }

    /// Builds raw-scale coefficients from coefficients fitted on standardized
    /// inputs (`z = (x - mean) / std`, zero-variance columns dropped).
    pub(crate) fn from_standardized(
        std_coef: &Matrix,
        x_means: &[f64],
        x_stds: &[f64],
        y_means: &[f64],
    ) -> Self {
        let (q, h) = (std_coef.rows(), std_coef.cols());
        let mut coef = Matrix::zeros(q, h);
        for j in 0..q {
            if x_stds[j] > 0.0 {
                for k in 0..h {
                    coef.set(j, k, std_coef.get(j, k) / x_stds[j]);
                }
            }
        }
        let intercept = (0..h)
            .map(|k| y_means[k] - (0..q).map(|j| coef.get(j, k) * x_means[j]).sum::<f64>())
            .collect();
        Self { coef, intercept }
    }
}

fn check_rows(x: &Matrix, y: &Matrix, required: usize) -> Result<()> {
    if x.rows() != y.rows() {
        return Err(Error::shape(format!("{} target rows", x.rows()), y.rows()));
    }
    if x.rows() < required {
        return Err(Error::InsufficientData {
            required,
            actual: x.rows(),
        });
    }
    Ok(())
}

/// Ridge on centered data: solves `(Xc'Xc + lambda I) w = Xc'Yc`; the
/// intercept is recovered from the means and is not penalized.
pub fn fit_ridge(x: &Matrix, y: &Matrix, lambda: f64) -> Result<LinearModel> {
    check_rows(x, y, 2)?;
    let x_means = x.column_means();
    let y_means = y.column_means();
    let (m, q, h) = (x.rows(), x.cols(), y.cols());
    let xc = DMatrix::from_fn(m, q, |i, j| x.get(i, j) - x_means[j]);
    let yc = DMatrix::from_fn(m, h, |i, k| y.get(i, k) - y_means[k]);
    let mut gram = xc.transpose() * &xc;
    for j in 0..q {
        gram[(j, j)] += lambda;
    }
    let rhs = xc.transpose() * &yc;
    let w = match gram.clone().cholesky() {
        Some(chol) => chol.solve(&rhs),
        // singular Gram (lambda = 0 with collinear columns): minimum-norm solution
        None => gram
            .svd(true, true)
            .solve(&rhs, 1e-12)
            .map_err(|e| Error::Numeric(format!("ridge solve failed: {e}")))?,
    };
    let coef = Matrix::from_nalgebra(&w);
    let intercept = (0..h)
        .map(|k| y_means[k] - (0..q).map(|j| coef.get(j, k) * x_means[j]).sum::<f64>())
        .collect();
    let model = LinearModel { coef, intercept };
    if !model.coef.all_finite() {
        return Err(Error::Numeric("ridge produced non-finite coefficients".into()));
    }
    Ok(model)
}

#[inline]
fn soft_threshold(v: f64, t: f64) -> f64 {
    if v > t {
        v - t
    } else if v < -t {
        v + t
    } else {
        0.0
    }
}

/// Cyclic coordinate descent on standardized inputs for
/// `(1/2m)|y - Zw|^2 + lambda (l1_ratio |w|_1 + (1 - l1_ratio)/2 |w|^2)`.
/// `l1_ratio = 1` is the lasso.
pub fn fit_elastic_net(x: &Matrix, y: &Matrix, lambda: f64, l1_ratio: f64) -> Result<LinearModel> {
    check_rows(x, y, 2)?;
    let (m, q, h) = (x.rows(), x.cols(), y.cols());
    let x_means = x.column_means();
    let x_stds = x.column_stds(&x_means);
    let y_means = y.column_means();

    // column-major standardized design, zero-variance columns left at zero
    let mut z = vec![0.0; m * q];
    for j in 0..q {
        if x_stds[j] > 0.0 {
            for i in 0..m {
                z[j * m + i] = (x.get(i, j) - x_means[j]) / x_stds[j];
            }
        }
    }
    let active: Vec<usize> = (0..q).filter(|&j| x_stds[j] > 0.0).collect();
    let l1 = lambda * l1_ratio;
    let denom = 1.0 + lambda * (1.0 - l1_ratio);
    let inv_m = 1.0 / m as f64;

    let mut std_coef = Matrix::zeros(q, h);
    for k in 0..h {
        let mut resid: Vec<f64> = (0..m).map(|i| y.get(i, k) - y_means[k]).collect();
        let mut w = vec![0.0; q];
        for _ in 0..COORDINATE_DESCENT_MAX_SWEEPS {
            let mut max_delta = 0.0f64;
            for &j in &active {
                let col = &z[j * m..(j + 1) * m];
                let rho = inv_m * col.iter().zip(&resid).map(|(a, b)| a * b).sum::<f64>() + w[j];
                let updated = soft_threshold(rho, l1) / denom;
                let delta = updated - w[j];
                if delta != 0.0 {
                    for (r, c) in resid.iter_mut().zip(col) {
                        *r -= delta * c;
                    }
                    w[j] = updated;
                    max_delta = max_delta.max(delta.abs());
                }
            }
            if max_delta < COORDINATE_DESCENT_TOL {
                break;
            }
        }
        for j in 0..q {
            std_coef.set(j, k, w[j]);
        }
    }
    let model = LinearModel::from_standardized(&std_coef, &x_means, &x_stds, &y_means);
    if !model.coef.all_finite() {
        return Err(Error::Numeric("coordinate descent diverged".into()));
    }
    Ok(model)
}
