//! Weight transfer functions of the individual combination rules.
//!
//! Each function maps a loss summary (or regret, or predicted error) for
//! one horizon channel to a simplex vector; the `weights_*` helpers lift
//! them to a full [`WeightMatrix`] under a horizon strategy.

use super::{LossHistory, Strategy, WeightMatrix};
use crate::matrix::Matrix;

/// Guards inverse-loss weighting against zero losses.
pub const LOSS_EPSILON: f64 = 1e-8;

pub(crate) fn uniform(k: usize) -> Vec<f64> {
    vec![1.0 / k as f64; k]
}

/// Scales `raw` to sum one; falls back to uniform when that is impossible.
pub(crate) fn normalize(mut raw: Vec<f64>) -> Vec<f64> {
    let total: f64 = raw.iter().sum();
    if !(total > 0.0 && total.is_finite()) || raw.iter().any(|w| !(*w >= 0.0)) {
        return uniform(raw.len());
    }
    raw.iter_mut().for_each(|w| *w /= total);
    raw
}

/// `w_k ∝ 1 / (L_k + eps)`.
pub fn inverse_loss_weights(losses: &[f64]) -> Vec<f64> {
    normalize(losses.iter().map(|l| 1.0 / (l + LOSS_EPSILON)).collect())
}

/// One-hot on the smallest loss; ties go to the lowest index.
pub fn select_min(losses: &[f64]) -> Vec<f64> {
    let mut best = 0;
    for (i, l) in losses.iter().enumerate() {
        if *l < losses[best] {
            best = i;
        }
    }
    let mut w = vec![0.0; losses.len()];
    if !w.is_empty() {
        w[best] = 1.0;
    }
    w
}

/// `w_k ∝ exp(-eta * L_k)` computed with a max shift.
pub fn ewa_weights(scaled_cumulative_losses: &[f64], eta: f64) -> Vec<f64> {
    let min = scaled_cumulative_losses.iter().copied().fold(f64::INFINITY, f64::min);
    normalize(
        scaled_cumulative_losses
            .iter()
            .map(|l| (-eta * (l - min)).exp())
            .collect(),
    )
}

/// Fixed share mixing `(1 - alpha) v + alpha / K`.
pub fn fixed_share_mix(v: &[f64], alpha: f64) -> Vec<f64> {
    let share = alpha / v.len() as f64;
    normalize(v.iter().map(|w| (1.0 - alpha) * w + share).collect())
}

/// Polynomial potential: `w_k ∝ max(0, R_k)^(p - 1)`, uniform when no regret is positive.
pub fn mlpol_weights(regrets: &[f64], p: f64) -> Vec<f64> {
    if regrets.iter().all(|r| !(*r > 0.0)) {
        return uniform(regrets.len());
    }
    normalize(regrets.iter().map(|r| r.max(0.0).powf(p - 1.0)).collect())
}

/// Softmax of negative mean-normalized predicted errors.
pub fn ade_weights_from_errors(errors: &[f64]) -> Vec<f64> {
    let k = errors.len();
    let mean = errors.iter().map(|e| e.max(0.0)).sum::<f64>() / k as f64;
    if !(mean > 0.0 && mean.is_finite()) {
        return uniform(k);
    }
    let scaled: Vec<f64> = errors.iter().map(|e| e.max(0.0) / mean).collect();
    ewa_weights(&scaled, 1.0)
}

/// Lifts per-horizon weights (`IH` rows) and the complete-horizon vector to
/// the rows a strategy prescribes.
pub fn apply_horizon_strategy(
    per_horizon: &WeightMatrix,
    complete_horizon: &[f64],
    strategy: Strategy,
) -> WeightMatrix {
    let h = per_horizon.horizon();
    match strategy {
        Strategy::IndividualHorizon => per_horizon.clone(),
        Strategy::FirstHorizonForward => WeightMatrix::replicate(per_horizon.row(0), h),
        Strategy::LastHorizonBackward => WeightMatrix::replicate(per_horizon.row(h - 1), h),
        Strategy::CompleteHorizon => WeightMatrix::replicate(complete_horizon, h),
    }
}

/// Applies `transfer` to the loss column(s) a strategy selects from a
/// `K x H` loss matrix.
pub(crate) fn weights_from_loss_matrix(
    losses: &Matrix,
    strategy: Strategy,
    transfer: impl Fn(&[f64]) -> Vec<f64>,
) -> WeightMatrix {
    let (k, h) = (losses.rows(), losses.cols());
    let column = |c: usize| transfer(&losses.column(c));
    match strategy {
        Strategy::IndividualHorizon => {
            WeightMatrix::from_rows(&(0..h).map(column).collect::<Vec<_>>()).unwrap()
        }
        Strategy::FirstHorizonForward => WeightMatrix::replicate(&column(0), h),
        Strategy::LastHorizonBackward => WeightMatrix::replicate(&column(h - 1), h),
        Strategy::CompleteHorizon => {
            let avg: Vec<f64> = (0..k)
                .map(|i| losses.row(i).iter().sum::<f64>() / h as f64)
                .collect();
            WeightMatrix::replicate(&transfer(&avg), h)
        }
    }
}

/// Static inverse-loss weights from `K x H` training losses.
pub fn weights_losstrain(train_losses: &Matrix, strategy: Strategy) -> WeightMatrix {
    weights_from_loss_matrix(train_losses, strategy, inverse_loss_weights)
}

/// Static one-hot selection of the lowest training loss.
pub fn weights_best(train_losses: &Matrix, strategy: Strategy) -> WeightMatrix {
    weights_from_loss_matrix(train_losses, strategy, select_min)
}

fn windowed(
    history: &LossHistory,
    lambda: usize,
    strategy: Strategy,
    transfer: impl Fn(&[f64]) -> Vec<f64>,
) -> WeightMatrix {
    let (k, h) = (history.members(), history.horizon());
    let row = |channel: usize| {
        history
            .window_mae(channel, lambda)
            .map_or_else(|| uniform(k), |mae| transfer(&mae))
    };
    match strategy {
        Strategy::IndividualHorizon => {
            WeightMatrix::from_rows(&(0..h).map(row).collect::<Vec<_>>()).unwrap()
        }
        Strategy::FirstHorizonForward => WeightMatrix::replicate(&row(0), h),
        Strategy::LastHorizonBackward => WeightMatrix::replicate(&row(h - 1), h),
        Strategy::CompleteHorizon => WeightMatrix::replicate(&row(history.complete_channel()), h),
    }
}

/// Inverse-MAE weights over the last `lambda` records; uniform on cold start.
pub fn weights_window(history: &LossHistory, lambda: usize, strategy: Strategy) -> WeightMatrix {
    windowed(history, lambda, strategy, inverse_loss_weights)
}

/// Selects the member with the lowest MAE over the last `lambda` records.
pub fn weights_blast(history: &LossHistory, lambda: usize, strategy: Strategy) -> WeightMatrix {
    windowed(history, lambda, strategy, select_min)
}
