//! Per-method combination state and its feedback loop.

use std::collections::BTreeMap;
use std::sync::Arc;

use super::rules::{self, uniform};
use super::{
    combine, CombinerConfig, FeedbackMode, ForecastBlock, LossHistory, MetaModelSet, Method, Rule,
    Strategy, WeightMatrix,
};
use crate::error::{Error, Result};
use crate::matrix::Matrix;

/// Counters describing how a state was used over a run.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Diagnostics {
    pub weight_calls: usize,
    /// Weight computations made before any feedback reached the needed channels.
    pub cold_starts: usize,
    pub feedback_records: usize,
    /// ADE ran with LossTrain weights for lack of meta-training data.
    pub ade_fallback: bool,
}

/// Cumulative-loss state of EWA and fixed share for one channel.
#[derive(Debug, Clone)]
struct ExpChannel {
    t: usize,
    cumulative: Vec<f64>,
    max_loss: f64,
    log_w: Vec<f64>,
}

impl ExpChannel {
    fn new(k: usize) -> Self {
        Self {
            t: 0,
            cumulative: vec![0.0; k],
            max_loss: 0.0,
            log_w: vec![0.0; k],
        }
    }

    fn eta(&self, fixed: Option<f64>) -> f64 {
        fixed.unwrap_or_else(|| (8.0 * (self.cumulative.len() as f64).ln() / self.t as f64).sqrt())
    }

    fn scaled(&self) -> Vec<f64> {
        if self.max_loss > 0.0 {
            self.cumulative.iter().map(|c| c / self.max_loss).collect()
        } else {
            vec![0.0; self.cumulative.len()]
        }
    }

    fn exponent(&self, fixed: Option<f64>) -> Vec<f64> {
        if self.t == 0 {
            return vec![0.0; self.cumulative.len()];
        }
        let eta = self.eta(fixed);
        self.scaled().into_iter().map(|l| eta * l).collect()
    }

    fn ewa_weights(&self, fixed: Option<f64>) -> Vec<f64> {
        if self.t == 0 {
            return uniform(self.cumulative.len());
        }
        rules::ewa_weights(&self.scaled(), self.eta(fixed))
    }

    fn fs_weights(&self) -> Vec<f64> {
        softmax(&self.log_w)
    }

    /// `share = None` leaves the fixed-share weights untouched.
    fn update(&mut self, losses: &[f64], fixed: Option<f64>, share: Option<f64>) {
        let before = share.map(|_| self.exponent(fixed));
        self.t += 1;
        for (c, l) in self.cumulative.iter_mut().zip(losses) {
            *c += l;
            self.max_loss = self.max_loss.max(*l);
        }
        let (Some(alpha), Some(before)) = (share, before) else {
            return;
        };
        // the multiplicative EWA step, written as the change of the exponent
        let after = self.exponent(fixed);
        for ((w, a), b) in self.log_w.iter_mut().zip(&after).zip(&before) {
            *w -= a - b;
        }
        if alpha > 0.0 {
            let mixed = rules::fixed_share_mix(&softmax(&self.log_w), alpha);
            self.log_w = mixed.iter().map(|w| w.ln()).collect();
        } else {
            let max = self.log_w.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            self.log_w.iter_mut().for_each(|w| *w -= max);
        }
    }
}

fn softmax(log_w: &[f64]) -> Vec<f64> {
    let max = log_w.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    rules::normalize(log_w.iter().map(|w| (w - max).exp()).collect())
}

#[derive(Debug, Clone)]
struct Pending {
    forecasts: Matrix,
    /// MLpol channel weights at forecast time, `H + 1` vectors.
    snapshots: Vec<Vec<f64>>,
    observed: usize,
    ensemble_loss_complete: f64,
}

/// Everything one combination method needs across a test segment.
#[derive(Debug, Clone)]
pub struct CombinerState {
    method: Method,
    engine: Rule,
    cfg: CombinerConfig,
    members: usize,
    horizon: usize,
    static_weights: Option<WeightMatrix>,
    meta: Option<Arc<MetaModelSet>>,
    history: LossHistory,
    exp: Vec<ExpChannel>,
    regrets: Vec<Vec<f64>>,
    pending: BTreeMap<usize, Pending>,
    diagnostics: Diagnostics,
}

/// Builds a fresh state. `train_losses` (`K x H`) is required by LossTrain
/// and Best, `meta` by ADE.
pub fn init_state(
    method: Method,
    members: usize,
    horizon: usize,
    train_losses: Option<&Matrix>,
    meta: Option<Arc<MetaModelSet>>,
    cfg: &CombinerConfig,
) -> Result<CombinerState> {
    cfg.validate()?;
    if members == 0 || horizon == 0 {
        return Err(Error::Config("combiner needs at least one member and one horizon".into()));
    }
    let static_weights = match method.rule {
        Rule::LossTrain | Rule::Best => {
            let losses = check_train_losses(train_losses, members, horizon)?;
            Some(if method.rule == Rule::LossTrain {
                rules::weights_losstrain(losses, method.strategy)
            } else {
                rules::weights_best(losses, method.strategy)
            })
        }
        _ => None,
    };
    if method.rule == Rule::Ade {
        match &meta {
            None => return Err(Error::Config("ADE requires fitted meta-models".into())),
            Some(m) if m.len() != members => {
                return Err(Error::shape(format!("{members} meta-models"), m.len()))
            }
            Some(_) => {}
        }
    }
    Ok(CombinerState {
        method,
        engine: method.rule,
        cfg: cfg.clone(),
        members,
        horizon,
        static_weights,
        meta: if method.rule == Rule::Ade { meta } else { None },
        history: LossHistory::new(members, horizon),
        exp: vec![ExpChannel::new(members); horizon + 1],
        regrets: vec![vec![0.0; members]; horizon + 1],
        pending: BTreeMap::new(),
        diagnostics: Diagnostics::default(),
    })
}

fn check_train_losses(losses: Option<&Matrix>, k: usize, h: usize) -> Result<&Matrix> {
    let losses = losses.ok_or_else(|| Error::Config("training losses are required".into()))?;
    if losses.rows() != k || losses.cols() != h {
        return Err(Error::shape(format!("{k}x{h} training losses"), format!("{}x{}", losses.rows(), losses.cols())));
    }
    if !losses.all_finite() {
        return Err(Error::Numeric("non-finite training loss".into()));
    }
    Ok(losses)
}

/// The `(origin, h)` pairs whose actual value becomes known when origin
/// `current` is about to be forecast.
pub fn feedback_schedule(mode: FeedbackMode, current: usize, horizon: usize) -> Vec<(usize, usize)> {
    match mode {
        FeedbackMode::Optimistic if current > 0 => (1..=horizon).map(|h| (current - 1, h)).collect(),
        FeedbackMode::Optimistic => Vec::new(),
        FeedbackMode::Strict => (1..=horizon.min(current)).map(|h| (current - h, h)).collect(),
    }
}

impl CombinerState {
    /// An ADE method that runs on LossTrain weights.
    pub fn ade_fallback(
        strategy: Strategy,
        members: usize,
        horizon: usize,
        train_losses: &Matrix,
        cfg: &CombinerConfig,
    ) -> Result<Self> {
        let mut state = init_state(
            Method::new(Rule::LossTrain, strategy),
            members,
            horizon,
            Some(train_losses),
            None,
            cfg,
        )?;
        state.method = Method::new(Rule::Ade, strategy);
        state.diagnostics.ade_fallback = true;
        Ok(state)
    }

    pub fn method(&self) -> Method {
        self.method
    }

    pub fn history(&self) -> &LossHistory {
        &self.history
    }

    pub fn diagnostics(&self) -> &Diagnostics {
        &self.diagnostics
    }

    /// MLpol cumulative regrets of one channel.
    pub fn regrets(&self, channel: usize) -> &[f64] {
        &self.regrets[channel]
    }

    fn needed_channels(&self) -> std::ops::Range<usize> {
        match self.method.strategy {
            Strategy::IndividualHorizon => 0..self.horizon,
            Strategy::FirstHorizonForward => 0..1,
            Strategy::LastHorizonBackward => self.horizon - 1..self.horizon,
            Strategy::CompleteHorizon => self.horizon..self.horizon + 1,
        }
    }

    fn from_channels(&self, f: impl Fn(usize) -> Vec<f64>) -> WeightMatrix {
        let h = self.horizon;
        match self.method.strategy {
            Strategy::IndividualHorizon => {
                WeightMatrix::from_rows(&(0..h).map(f).collect::<Vec<_>>()).unwrap()
            }
            Strategy::FirstHorizonForward => WeightMatrix::replicate(&f(0), h),
            Strategy::LastHorizonBackward => WeightMatrix::replicate(&f(h - 1), h),
            Strategy::CompleteHorizon => WeightMatrix::replicate(&f(h), h),
        }
    }

    fn mlpol_channel(&self, c: usize) -> Vec<f64> {
        rules::mlpol_weights(&self.regrets[c], self.cfg.mlpol_p)
    }

    /// Current `H x K` weights. `lag_input` is only read by ADE.
    pub fn weights(&mut self, lag_input: &[f64]) -> Result<WeightMatrix> {
        self.diagnostics.weight_calls += 1;
        if self.engine.is_online() && self.needed_channels().any(|c| self.history.records(c).is_empty()) {
            self.diagnostics.cold_starts += 1;
        }
        let (lambda, eta) = (self.cfg.lambda, self.cfg.ewa_eta);
        Ok(match self.engine {
            Rule::Simple => WeightMatrix::uniform(self.horizon, self.members),
            Rule::LossTrain | Rule::Best => self.static_weights.clone().unwrap(),
            Rule::Window => rules::weights_window(&self.history, lambda, self.method.strategy),
            Rule::Blast => rules::weights_blast(&self.history, lambda, self.method.strategy),
            Rule::Ewa => self.from_channels(|c| self.exp[c].ewa_weights(eta)),
            Rule::FixedShare => self.from_channels(|c| self.exp[c].fs_weights()),
            Rule::MlPol => self.from_channels(|c| self.mlpol_channel(c)),
            Rule::Ade => {
                let errors = self.meta.as_ref().unwrap().predict_errors(lag_input)?;
                let h = self.horizon;
                self.from_channels(|c| {
                    if c < h {
                        rules::ade_weights_from_errors(&errors.column(c))
                    } else {
                        let avg: Vec<f64> = errors
                            .iter_rows()
                            .map(|r| r.iter().sum::<f64>() / h as f64)
                            .collect();
                        rules::ade_weights_from_errors(&avg)
                    }
                })
            }
        })
    }

    /// Combines the members' forecasts for `origin` and remembers them so
    /// later feedback can be scored.
    pub fn forecast(&mut self, origin: usize, lag_input: &[f64], block: &ForecastBlock) -> Result<Vec<f64>> {
        if block.members() != self.members || block.horizon() != self.horizon {
            return Err(Error::shape(
                format!("{}x{} forecast block", self.members, self.horizon),
                format!("{}x{}", block.members(), block.horizon()),
            ));
        }
        if self.pending.contains_key(&origin) || self.history.is_observed(origin, 1) {
            return Err(Error::Integrity(format!("origin {origin} forecast twice")));
        }
        let w = self.weights(lag_input)?;
        let combined = combine(block, &w)?;
        let snapshots = if self.engine == Rule::MlPol {
            (0..=self.horizon).map(|c| self.mlpol_channel(c)).collect()
        } else {
            Vec::new()
        };
        self.pending.insert(
            origin,
            Pending {
                forecasts: block.forecasts.clone(),
                snapshots,
                observed: 0,
                ensemble_loss_complete: 0.0,
            },
        );
        Ok(combined)
    }

    /// Records the actual value at horizon `h` (1-based) of a forecast origin.
    pub fn observe(&mut self, origin: usize, h: usize, actual: f64) -> Result<()> {
        if !actual.is_finite() {
            return Err(Error::Numeric(format!("non-finite actual at origin {origin}")));
        }
        let pending = self
            .pending
            .get(&origin)
            .ok_or_else(|| Error::Integrity(format!("feedback for unknown origin {origin}")))?;
        if h == 0 || h > self.horizon {
            return Err(Error::Integrity(format!("horizon {h} outside 1..={}", self.horizon)));
        }
        let preds = pending.forecasts.column(h - 1);
        let losses: Vec<f64> = preds.iter().map(|p| (p - actual).abs()).collect();
        let complete = self.history.record(origin, h, &losses)?;
        self.diagnostics.feedback_records += 1;
        let (eta, big_h) = (self.cfg.ewa_eta, self.horizon);

        match self.engine {
            Rule::Ewa | Rule::FixedShare => {
                let share = (self.engine == Rule::FixedShare).then_some(self.cfg.fs_alpha);
                self.exp[h - 1].update(&losses, eta, share);
                if let Some(avg) = &complete {
                    self.exp[big_h].update(avg, eta, share);
                }
            }
            Rule::MlPol => {
                let pending = self.pending.get_mut(&origin).unwrap();
                let ensemble = |w: &[f64]| -> f64 {
                    (w.iter().zip(&preds).map(|(w, p)| w * p).sum::<f64>() - actual).abs()
                };
                let loss_h = ensemble(&pending.snapshots[h - 1]);
                for (r, l) in self.regrets[h - 1].iter_mut().zip(&losses) {
                    *r += loss_h - l;
                }
                pending.ensemble_loss_complete += ensemble(&pending.snapshots[big_h]);
                if let Some(avg) = &complete {
                    let loss_ch = pending.ensemble_loss_complete / big_h as f64;
                    for (r, l) in self.regrets[big_h].iter_mut().zip(avg) {
                        *r += loss_ch - l;
                    }
                }
            }
            _ => {}
        }

        let pending = self.pending.get_mut(&origin).unwrap();
        pending.observed += 1;
        if pending.observed == big_h {
            self.pending.remove(&origin);
        }
        Ok(())
    }

    /// Delivers the feedback that becomes available before forecasting
    /// origin `current`. `actuals` row `t` holds the `H` targets of origin `t`.
    pub fn advance(&mut self, current: usize, actuals: &Matrix) -> Result<()> {
        for (origin, h) in feedback_schedule(self.cfg.feedback, current, self.horizon) {
            if origin >= actuals.rows() {
                return Err(Error::Integrity(format!("no actuals for origin {origin}")));
            }
            self.observe(origin, h, actuals.get(origin, h - 1))?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ids(k: usize) -> Arc<[String]> {
        (0..k).map(|i| format!("m{i}")).collect()
    }

    fn block(rows: &[Vec<f64>]) -> ForecastBlock {
        ForecastBlock::new(Matrix::from_rows(rows).unwrap(), ids(rows.len())).unwrap()
    }

    fn state(rule: Rule, strategy: Strategy, k: usize, h: usize, cfg: &CombinerConfig) -> CombinerState {
        let losses = Matrix::from_vec(k, h, (0..k * h).map(|i| 1.0 + i as f64).collect()).unwrap();
        init_state(Method::new(rule, strategy), k, h, Some(&losses), None, cfg).unwrap()
    }

    #[test]
    fn simple_is_uniform_and_static() {
        let mut s = state(Rule::Simple, Strategy::IndividualHorizon, 4, 2, &CombinerConfig::default());
        assert_eq!(s.weights(&[]).unwrap(), WeightMatrix::uniform(2, 4));
        let b = block(&vec![vec![1.0, 2.0]; 4]);
        s.forecast(0, &[], &b).unwrap();
        s.observe(0, 1, 5.0).unwrap();
        assert_eq!(s.weights(&[]).unwrap(), WeightMatrix::uniform(2, 4));
    }

    #[test]
    fn ade_requires_meta_and_lambda_positive() {
        let cfg = CombinerConfig::default();
        let r = init_state(Method::new(Rule::Ade, Strategy::CompleteHorizon), 2, 2, None, None, &cfg);
        assert!(matches!(r, Err(Error::Config(_))));
        let bad = CombinerConfig { lambda: 0, ..cfg };
        let r = init_state(Method::SIMPLE, 2, 2, None, None, &bad);
        assert!(matches!(r, Err(Error::Config(_))));
    }

    #[test]
    fn schedules() {
        assert_eq!(feedback_schedule(FeedbackMode::Strict, 1, 3), vec![(0, 1)]);
        assert_eq!(feedback_schedule(FeedbackMode::Strict, 5, 2), vec![(4, 1), (3, 2)]);
        assert_eq!(feedback_schedule(FeedbackMode::Optimistic, 0, 3), vec![]);
        assert_eq!(feedback_schedule(FeedbackMode::Optimistic, 2, 2), vec![(1, 1), (1, 2)]);
    }

    #[test]
    fn optimistic_row_fills_one_record_per_horizon() {
        let mut s = state(Rule::Window, Strategy::IndividualHorizon, 2, 3, &CombinerConfig::default());
        let b = block(&[vec![0.0; 3], vec![1.0; 3]]);
        let actuals = Matrix::zeros(2, 3);
        s.forecast(0, &[], &b).unwrap();
        s.advance(1, &actuals).unwrap();
        for c in 0..=3 {
            assert_eq!(s.history().records(c).len(), 1);
        }
        assert!(matches!(s.observe(0, 1, 0.0), Err(Error::Integrity(_))));
    }

    #[test]
    fn strict_single_origin_stays_uniform() {
        let cfg = CombinerConfig {
            feedback: FeedbackMode::Strict,
            ..Default::default()
        };
        for rule in Rule::PERFORMANCE_BASED {
            if matches!(rule, Rule::Ade | Rule::LossTrain | Rule::Best) {
                continue;
            }
            let mut s = state(rule, Strategy::CompleteHorizon, 3, 2, &cfg);
            s.advance(0, &Matrix::zeros(1, 2)).unwrap();
            assert_eq!(s.weights(&[]).unwrap(), WeightMatrix::uniform(2, 3), "{rule:?}");
        }
    }

    #[test]
    fn fixed_share_without_share_matches_ewa() {
        let mk = |rule| {
            state(
                rule,
                Strategy::IndividualHorizon,
                3,
                2,
                &CombinerConfig {
                    fs_alpha: 0.0,
                    ..Default::default()
                },
            )
        };
        let (mut ewa, mut fs) = (mk(Rule::Ewa), mk(Rule::FixedShare));
        let mut x = 0.3f64;
        for t in 0..60 {
            let rows: Vec<Vec<f64>> = (0..3)
                .map(|k| {
                    x = (x * 3.7 + 0.11).fract();
                    vec![x + k as f64 * 0.2, x - 0.1 * k as f64]
                })
                .collect();
            let b = block(&rows);
            ewa.forecast(t, &[], &b).unwrap();
            fs.forecast(t, &[], &b).unwrap();
            for h in 1..=2 {
                ewa.observe(t, h, 0.5).unwrap();
                fs.observe(t, h, 0.5).unwrap();
            }
            let (a, b) = (ewa.weights(&[]).unwrap(), fs.weights(&[]).unwrap());
            for h in 0..2 {
                for (p, q) in a.row(h).iter().zip(b.row(h)) {
                    assert!((p - q).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn mlpol_regret_uses_snapshot_ensemble() {
        let mut s = state(Rule::MlPol, Strategy::IndividualHorizon, 2, 1, &CombinerConfig::default());
        // uniform weights -> ensemble predicts 1, actual 0: regrets [1-0, 1-2]
        s.forecast(0, &[], &block(&[vec![0.0], vec![2.0]])).unwrap();
        s.observe(0, 1, 0.0).unwrap();
        assert_eq!(s.regrets(0), &[1.0, -1.0]);
        assert_eq!(s.regrets(1), &[1.0, -1.0]);
        assert_eq!(s.weights(&[]).unwrap().row(0), &[1.0, 0.0]);
    }

    #[test]
    fn ade_fallback_reports_ade_name() {
        let losses = Matrix::from_rows(&[[1.0], [3.0]]).unwrap();
        let mut s = CombinerState::ade_fallback(
            Strategy::IndividualHorizon,
            2,
            1,
            &losses,
            &CombinerConfig::default(),
        )
        .unwrap();
        assert_eq!(s.method().to_string(), "ADE_IH");
        assert!(s.diagnostics().ade_fallback);
        assert!((s.weights(&[]).unwrap().row(0)[0] - 0.75).abs() < 1e-8);
    }
}
