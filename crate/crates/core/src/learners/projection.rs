//! Projection regressors: principal components regression and NIPALS
//! partial least squares. Both standardize the inputs, regress the centered
//! targets on a low-dimensional score space, and fold the result back into a
//! raw-scale [`LinearModel`].

use nalgebra::{DMatrix, DVector};

use super::LinearModel;
use crate::error::{Error, Result};
use crate::matrix::Matrix;

const EIGEN_REL_TOL: f64 = 1e-10;
const NIPALS_MAX_ITER: usize = 500;
const NIPALS_TOL: f64 = 1e-12;

struct Standardized {
    z: DMatrix<f64>,
    yc: DMatrix<f64>,
    x_means: Vec<f64>,
    x_stds: Vec<f64>,
    y_means: Vec<f64>,
}

fn prepare(x: &Matrix, y: &Matrix, components: usize) -> Result<Standardized> {
    if x.rows() != y.rows() {
        return Err(Error::shape(format!("{} target rows", x.rows()), y.rows()));
    }
    if components > x.cols() {
        return Err(Error::Config(format!(
            "{components} components requested for {} inputs",
            x.cols()
        )));
    }
    if x.rows() <= components {
        return Err(Error::InsufficientData {
            required: components + 1,
            actual: x.rows(),
        });
    }
    let x_means = x.column_means();
    let x_stds = x.column_stds(&x_means);
    let y_means = y.column_means();
    let z = DMatrix::from_fn(x.rows(), x.cols(), |i, j| {
        if x_stds[j] > 0.0 {
            (x.get(i, j) - x_means[j]) / x_stds[j]
        } else {
            0.0
        }
    });
    let yc = DMatrix::from_fn(y.rows(), y.cols(), |i, k| y.get(i, k) - y_means[k]);
    Ok(Standardized {
        z,
        yc,
        x_means,
        x_stds,
        y_means,
    })
}

fn degenerate(kind: &str, s: &Standardized) -> LinearModel {
    log::warn!("{kind}: inputs have zero variance, falling back to intercept-only model");
    LinearModel::intercept_only(s.x_means.len(), s.y_means.clone())
}

/// PCR: OLS of the centered targets on the top `components` principal
/// component scores of the standardized inputs.
pub fn fit_pcr(x: &Matrix, y: &Matrix, components: usize) -> Result<LinearModel> {
    let s = prepare(x, y, components)?;
    let m = x.rows() as f64;
    let cov = s.z.transpose() * &s.z / m;
    let eig = cov.symmetric_eigen();
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| {
        eig.eigenvalues[b]
            .partial_cmp(&eig.eigenvalues[a])
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.cmp(&b))
    });
    let largest = order.first().map_or(0.0, |&i| eig.eigenvalues[i]);
    if largest <= 0.0 {
        return Ok(degenerate("pcr", &s));
    }
    let kept: Vec<usize> = order
        .into_iter()
        .take(components)
        .filter(|&i| eig.eigenvalues[i] > EIGEN_REL_TOL * largest)
        .collect();
    if kept.len() < components {
        log::warn!(
            "pcr: input rank {} below requested {components} components",
            kept.len()
        );
    }
    let q = x.cols();
    let h = y.cols();
    let mut std_coef = DMatrix::<f64>::zeros(q, h);
    for &c in &kept {
        let v = eig.eigenvectors.column(c);
        let scores = &s.z * v;
        let ss = scores.dot(&scores);
        // scores are orthogonal, so the multivariate OLS decouples per component
        let gamma = s.yc.transpose() * &scores / ss;
        std_coef += v * gamma.transpose();
    }
    Ok(LinearModel::from_standardized(
        &Matrix::from_nalgebra(&std_coef),
        &s.x_means,
        &s.x_stds,
        &s.y_means,
    ))
}

/// Multi-output PLS (PLS2) by NIPALS with `components` latent directions.
pub fn fit_pls(x: &Matrix, y: &Matrix, components: usize) -> Result<LinearModel> {
    let s = prepare(x, y, components)?;
    let total_x = s.z.norm_squared();
    if total_x <= 0.0 {
        return Ok(degenerate("pls", &s));
    }
    let (q, h) = (x.cols(), y.cols());
    let mut e = s.z.clone();
    let mut f = s.yc.clone();
    let mut weights: Vec<DVector<f64>> = Vec::new();
    let mut loadings: Vec<DVector<f64>> = Vec::new();
    let mut y_loadings: Vec<DVector<f64>> = Vec::new();

    for a in 0..components {
        if e.norm_squared() <= EIGEN_REL_TOL * total_x {
            log::warn!("pls: inputs exhausted after {a} of {components} components");
            break;
        }
        let start = (0..h)
            .max_by(|&i, &j| {
                f.column(i)
                    .norm_squared()
                    .partial_cmp(&f.column(j).norm_squared())
                    .unwrap_or(std::cmp::Ordering::Equal)
                    .then(j.cmp(&i))
            })
            .unwrap_or(0);
        let mut u = f.column(start).into_owned();
        if u.norm_squared() == 0.0 {
            log::warn!("pls: targets exhausted after {a} of {components} components");
            break;
        }
        let mut t = DVector::<f64>::zeros(x.rows());
        let mut w = DVector::<f64>::zeros(q);
        for _ in 0..NIPALS_MAX_ITER {
            w = e.transpose() * &u;
            let wn = w.norm();
            if wn == 0.0 {
                break;
            }
            w /= wn;
            let t_new = &e * &w;
            let tt = t_new.dot(&t_new);
            let c = f.transpose() * &t_new / tt;
            let cc = c.dot(&c);
            if cc == 0.0 {
                t = t_new;
                break;
            }
            u = &f * &c / cc;
            let change = (&t_new - &t).norm();
            t = t_new;
            if change <= NIPALS_TOL * t.norm() {
                break;
            }
        }
        let tt = t.dot(&t);
        if tt == 0.0 || w.norm() == 0.0 {
            log::warn!("pls: degenerate direction at component {}", a + 1);
            break;
        }
        let p = e.transpose() * &t / tt;
        let c = f.transpose() * &t / tt;
        e -= &t * p.transpose();
        f -= &t * c.transpose();
        weights.push(w);
        loadings.push(p);
        y_loadings.push(c);
    }
    if weights.is_empty() {
        return Ok(degenerate("pls", &s));
    }
    let w = DMatrix::from_columns(&weights);
    let p = DMatrix::from_columns(&loadings);
    let c = DMatrix::from_columns(&y_loadings);
    let ptw = p.transpose() * &w;
    let rot = ptw
        .try_inverse()
        .ok_or_else(|| Error::Numeric("pls: singular P'W".into()))?;
    let std_coef = &w * rot * c.transpose();
    Ok(LinearModel::from_standardized(
        &Matrix::from_nalgebra(&std_coef),
        &s.x_means,
        &s.x_stds,
        &s.y_means,
    ))
}
