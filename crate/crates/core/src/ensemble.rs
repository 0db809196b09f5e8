//! Per-fold ensemble pipeline: nested-holdout pruning, refit on the full
//! training segment, ADE meta-training and rolling evaluation on the test
//! segment.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use rayon::prelude::*;

use crate::combiner::{
    ade_fit_meta, init_state, CombinerConfig, CombinerState, Diagnostics, ForecastBlock, MetaFit,
    MetaModelSet, Method, Rule,
};
use crate::error::{Error, Result};
use crate::learners::{default_pool, fit, FittedModel, LearnerSpec, ModelPool};
use crate::matrix::Matrix;
use crate::rng::derive_seed;
use crate::series::{embed, invert_forecast, min_embed_len, DiffSegment, EmbeddedDataset};

pub const DEFAULT_LAGS: usize = 5;
pub const DEFAULT_HORIZON: usize = 18;
pub const DEFAULT_KEEP_FRACTION: f64 = 0.75;
pub const DEFAULT_INNER_FRACTION: f64 = 0.70;
pub const DEFAULT_META_SPEC: &str = "RF_4";

/// Scale on which losses and errors are measured.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum EvalScale {
    /// Forecasts re-integrated to raw levels.
    #[default]
    Levels,
    Diffs,
}

impl EvalScale {
    pub fn name(self) -> &'static str {
        match self {
            EvalScale::Levels => "levels",
            EvalScale::Diffs => "diffs",
        }
    }
}

impl fmt::Display for EvalScale {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for EvalScale {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "levels" => Ok(EvalScale::Levels),
            "diffs" => Ok(EvalScale::Diffs),
            other => Err(Error::Config(format!("eval_scale must be levels or diffs, got `{other}`"))),
        }
    }
}

#[derive(Debug, Clone)]
pub struct EnsembleConfig {
    pub lags: usize,
    pub horizon: usize,
    pub keep_fraction: f64,
    pub inner_fraction: f64,
    pub pool: ModelPool,
    pub methods: Vec<Method>,
    pub combiner: CombinerConfig,
    pub meta_spec: LearnerSpec,
    pub eval_scale: EvalScale,
    pub seed: u64,
}

impl Default for EnsembleConfig {
    fn default() -> Self {
        let pool = default_pool();
        let meta_spec = pool.get(DEFAULT_META_SPEC).cloned().expect("RF_4 in default pool");
        Self {
            lags: DEFAULT_LAGS,
            horizon: DEFAULT_HORIZON,
            keep_fraction: DEFAULT_KEEP_FRACTION,
            inner_fraction: DEFAULT_INNER_FRACTION,
            pool,
            methods: Method::all(),
            combiner: CombinerConfig::default(),
            meta_spec,
            eval_scale: EvalScale::Levels,
            seed: 0,
        }
    }
}

impl EnsembleConfig {
    pub fn validate(&self) -> Result<()> {
        if self.lags == 0 || self.horizon == 0 {
            return Err(Error::Config("lags and horizon must be at least 1".into()));
        }
        if !(self.keep_fraction > 0.0 && self.keep_fraction <= 1.0) {
            return Err(Error::Config(format!("keep fraction must lie in (0, 1], got {}", self.keep_fraction)));
        }
        if !(self.inner_fraction > 0.0 && self.inner_fraction < 1.0) {
            return Err(Error::Config(format!("inner fraction must lie in (0, 1), got {}", self.inner_fraction)));
        }
        if self.methods.is_empty() {
            return Err(Error::Config("no combination methods configured".into()));
        }
        self.combiner.validate()
    }

    fn needs_meta(&self) -> bool {
        self.methods.iter().any(|m| m.rule == Rule::Ade)
    }
}

/// `ceil(keep_fraction * pool_size)`, at least one.
pub fn kept_count(pool_size: usize, keep_fraction: f64) -> usize {
    // guard against 0.75 * 4 landing a hair above 3
    let raw = keep_fraction * pool_size as f64;
    let rounded = raw.round();
    let n = if (raw - rounded).abs() < 1e-9 { rounded } else { raw.ceil() };
    (n as usize).clamp(1, pool_size.max(1))
}

/// Indices of the kept and discarded members: ascending score, ties by
/// position. NaN scores count as worst.
pub fn prune(scores: &[f64], keep_fraction: f64) -> (Vec<usize>, Vec<usize>) {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    let key = |i: usize| if scores[i].is_nan() { f64::INFINITY } else { scores[i] };
    order.sort_by(|&a, &b| key(a).total_cmp(&key(b)).then(a.cmp(&b)));
    let keep = kept_count(scores.len(), keep_fraction);
    let discarded = order.split_off(keep);
    (order, discarded)
}

#[derive(Debug, Clone, PartialEq)]
pub struct PruningReport {
    /// Validation MAE over all horizons, per pool spec in pool order.
    pub scores: Vec<(String, f64)>,
    pub kept: Vec<String>,
    pub discarded: Vec<String>,
}

#[derive(Debug, Clone)]
pub struct TrainedEnsemble {
    members: Vec<FittedModel>,
    ids: Arc<[String]>,
    train_losses: Matrix,
    meta: Option<Arc<MetaModelSet>>,
    ade_fallback: bool,
    pruning: PruningReport,
}

impl TrainedEnsemble {
    pub fn members(&self) -> &[FittedModel] {
        &self.members
    }

    pub fn ids(&self) -> &Arc<[String]> {
        &self.ids
    }

    /// `K x H` per-horizon validation MAE of the kept members.
    pub fn train_losses(&self) -> &Matrix {
        &self.train_losses
    }

    pub fn meta(&self) -> Option<&Arc<MetaModelSet>> {
        self.meta.as_ref()
    }

    pub fn ade_fallback(&self) -> bool {
        self.ade_fallback
    }

    pub fn pruning(&self) -> &PruningReport {
        &self.pruning
    }
}

/// Member predictions mapped onto the evaluation scale, `m x H`.
fn to_eval_scale(pred: &Matrix, seg: &DiffSegment, origins: &[usize], scale: EvalScale) -> Matrix {
    match scale {
        EvalScale::Diffs => pred.clone(),
        EvalScale::Levels => {
            let rows: Vec<Vec<f64>> = origins
                .iter()
                .enumerate()
                .map(|(i, &t)| invert_forecast(pred.row(i), seg.levels[t]))
                .collect();
            Matrix::from_rows(&rows).unwrap_or_else(|_| Matrix::zeros(0, pred.cols()))
        }
    }
}

/// Targets of an embedded segment on the evaluation scale, `m x H`.
fn actuals(data: &EmbeddedDataset, seg: &DiffSegment, scale: EvalScale) -> Matrix {
    match scale {
        EvalScale::Diffs => data.y.clone(),
        EvalScale::Levels => {
            let mut out = Matrix::zeros(data.len(), data.horizon);
            for (i, &t) in data.origins.iter().enumerate() {
                for h in 1..=data.horizon {
                    out.set(i, h - 1, seg.levels[t + h]);
                }
            }
            out
        }
    }
}

fn per_horizon_mae(pred: &Matrix, actual: &Matrix) -> Vec<f64> {
    let m = pred.rows() as f64;
    (0..pred.cols())
        .map(|h| {
            (0..pred.rows())
                .map(|i| (pred.get(i, h) - actual.get(i, h)).abs())
                .sum::<f64>()
                / m
        })
        .collect()
}

/// Prunes the pool on a nested holdout of `train`, refits the survivors on
/// all of `train` and, if any ADE method is configured, trains the
/// meta-models. `label` names the series and fold in errors and seeds.
pub fn fit_with_pruning(train: &DiffSegment, cfg: &EnsembleConfig, label: &str) -> Result<TrainedEnsemble> {
    cfg.validate()?;
    let (q, h, n) = (cfg.lags, cfg.horizon, train.len());
    let inner_len = (cfg.inner_fraction * n as f64).floor() as usize;
    let need = min_embed_len(q, h);
    if inner_len < need || n - inner_len + q < need || inner_len < q {
        let required = (need as f64 / cfg.inner_fraction.min(1.0 - cfg.inner_fraction)).ceil() as usize;
        return Err(Error::too_short(format!("training segment of {label}"), required, n));
    }
    let inner = embed(&train.diffs[..inner_len], q, h)?;
    let val_seg = train.slice(inner_len - q, n);
    let val = embed(&val_seg.diffs, q, h)?;
    let val_actual = actuals(&val, &val_seg, cfg.eval_scale);

    let specs = cfg.pool.specs();
    let scored: Vec<(f64, Option<Matrix>)> = specs
        .par_iter()
        .map(|spec| {
            let seed = derive_seed(cfg.seed, &format!("{label}/inner/{}", spec.id));
            let pred = fit(spec, &inner, seed).and_then(|m| m.predict(&val.x));
            match pred {
                Ok(p) if p.all_finite() => {
                    let p = to_eval_scale(&p, &val_seg, &val.origins, cfg.eval_scale);
                    let mae = per_horizon_mae(&p, &val_actual);
                    (mae.iter().sum::<f64>() / h as f64, Some(p))
                }
                Ok(_) => {
                    log::warn!("{label}: {} produced non-finite validation forecasts", spec.id);
                    (f64::INFINITY, None)
                }
                Err(e) => {
                    log::warn!("{label}: {} failed on the inner split: {e}", spec.id);
                    (f64::INFINITY, None)
                }
            }
        })
        .collect();

    let scores: Vec<f64> = scored.iter().map(|(s, _)| *s).collect();
    let (kept, discarded) = prune(&scores, cfg.keep_fraction);
    if let Some(&bad) = kept.iter().find(|&&i| !scores[i].is_finite()) {
        return Err(Error::Numeric(format!(
            "{label}: too many pool members failed; {} would be kept",
            specs[bad].id
        )));
    }
    let pruning = PruningReport {
        scores: specs.iter().zip(&scores).map(|(s, v)| (s.id.clone(), *v)).collect(),
        kept: kept.iter().map(|&i| specs[i].id.clone()).collect(),
        discarded: discarded.iter().map(|&i| specs[i].id.clone()).collect(),
    };

    let full = embed(&train.diffs, q, h)?;
    let members = kept
        .par_iter()
        .map(|&i| {
            let seed = derive_seed(cfg.seed, &format!("{label}/full/{}", specs[i].id));
            fit(&specs[i], &full, seed)
        })
        .collect::<Result<Vec<_>>>()?;

    let mut train_losses = Matrix::zeros(kept.len(), h);
    for (r, &i) in kept.iter().enumerate() {
        let p = scored[i].1.as_ref().unwrap();
        train_losses.row_mut(r).copy_from_slice(&per_horizon_mae(p, &val_actual));
    }

    let (mut meta, mut ade_fallback) = (None, false);
    if cfg.needs_meta() {
        let preds: Vec<Matrix> = kept.iter().map(|&i| scored[i].1.clone().unwrap()).collect();
        let seed = derive_seed(cfg.seed, &format!("{label}/ade-meta"));
        match ade_fit_meta(&preds, &val_actual, &val.x, &cfg.meta_spec, seed)? {
            MetaFit::Fitted(set) => meta = Some(Arc::new(set)),
            MetaFit::Fallback { .. } => ade_fallback = true,
        }
    }

    Ok(TrainedEnsemble {
        ids: pruning.kept.iter().cloned().collect(),
        members,
        train_losses,
        meta,
        ade_fallback,
        pruning,
    })
}

/// Outcome of one method over a test segment.
#[derive(Debug, Clone)]
pub struct MethodResult {
    pub method: Method,
    /// Combined forecasts, `origins x H`, on the evaluation scale.
    pub forecasts: Matrix,
    /// Absolute errors of the combined forecasts, `origins x H`.
    pub errors: Matrix,
    pub diagnostics: Diagnostics,
}

impl MethodResult {
    /// MAE per horizon over all test origins.
    pub fn horizon_mae(&self) -> Vec<f64> {
        let zero = Matrix::zeros(self.errors.rows(), self.errors.cols());
        per_horizon_mae(&self.errors, &zero)
    }
}

#[derive(Debug, Clone)]
pub struct RollingResult {
    /// Member forecasts per origin (`K x H` each) on the evaluation scale.
    pub member_forecasts: Vec<ForecastBlock>,
    pub actuals: Matrix,
    pub methods: Vec<MethodResult>,
}

/// Runs every configured method over the test segment. `test` must start
/// with the `q` values preceding the first forecast origin's window.
pub fn rolling_evaluate(ens: &TrainedEnsemble, test: &DiffSegment, cfg: &EnsembleConfig) -> Result<RollingResult> {
    let (q, h) = (cfg.lags, cfg.horizon);
    let data = embed(&test.diffs, q, h)?;
    let actual = actuals(&data, test, cfg.eval_scale);
    let k = ens.members.len();
    let member_preds = ens
        .members
        .iter()
        .map(|m| {
            m.predict(&data.x)
                .map(|p| to_eval_scale(&p, test, &data.origins, cfg.eval_scale))
        })
        .collect::<Result<Vec<_>>>()?;
    let blocks = (0..data.len())
        .map(|i| {
            let mut f = Matrix::zeros(k, h);
            for (r, p) in member_preds.iter().enumerate() {
                f.row_mut(r).copy_from_slice(p.row(i));
            }
            ForecastBlock::new(f, ens.ids.clone())
        })
        .collect::<Result<Vec<_>>>()?;

    let methods = cfg
        .methods
        .iter()
        .map(|&method| {
            let mut state = if method.rule == Rule::Ade && ens.meta.is_none() {
                CombinerState::ade_fallback(method.strategy, k, h, &ens.train_losses, &cfg.combiner)?
            } else {
                init_state(method, k, h, Some(&ens.train_losses), ens.meta.clone(), &cfg.combiner)?
            };
            let mut forecasts = Matrix::zeros(data.len(), h);
            let mut errors = Matrix::zeros(data.len(), h);
            for (i, block) in blocks.iter().enumerate() {
                state.advance(i, &actual)?;
                let combined = state.forecast(i, data.x.row(i), block)?;
                for (j, c) in combined.iter().enumerate() {
                    forecasts.set(i, j, *c);
                    errors.set(i, j, (c - actual.get(i, j)).abs());
                }
            }
            Ok(MethodResult {
                method,
                forecasts,
                errors,
                diagnostics: state.diagnostics().clone(),
            })
        })
        .collect::<Result<Vec<_>>>()?;

    Ok(RollingResult {
        member_forecasts: blocks,
        actuals: actual,
        methods,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::combiner::{FeedbackMode, Strategy};
    use crate::learners::{LearnerParams, ModelPool};

    #[test]
    fn kept_counts() {
        assert_eq!(kept_count(39, 0.75), 30);
        assert_eq!(kept_count(4, 0.75), 3);
        assert_eq!(kept_count(40, 0.75), 30);
        assert_eq!(kept_count(5, 1.0), 5);
        assert_eq!(kept_count(3, 0.01), 1);
    }

    #[test]
    fn prune_drops_worst_with_position_ties() {
        let (kept, dropped) = prune(&[0.0, 5.0, 1.0, 2.0], 0.75);
        assert_eq!(kept, vec![0, 2, 3]);
        assert_eq!(dropped, vec![1]);
        let (kept, _) = prune(&[1.0, 1.0, 1.0, 1.0], 0.5);
        assert_eq!(kept, vec![0, 1]);
        let (kept, dropped) = prune(&[f64::NAN, 1.0], 0.5);
        assert_eq!((kept, dropped), (vec![1], vec![0]));
    }

    fn segment(n: usize) -> DiffSegment {
        let raw: Vec<f64> = (0..=n)
            .map(|t| (t as f64 * 0.4).sin() * 3.0 + t as f64 * 0.05)
            .collect();
        DiffSegment::from_raw(&raw).unwrap()
    }

    fn small_cfg(pool: &str) -> EnsembleConfig {
        EnsembleConfig {
            lags: 3,
            horizon: 4,
            pool: ModelPool::parse(pool).unwrap(),
            meta_spec: LearnerSpec::new(
                "META",
                LearnerParams::RandomForest {
                    trees: 10,
                    depth: crate::learners::Depth::Default,
                },
            )
            .unwrap(),
            ..Default::default()
        }
    }

    #[test]
    fn pruning_keeps_three_of_four() {
        let cfg = small_cfg("A ridge lambda=0.01\nB knn k=1\nC knn k=40\nD lasso lambda=50\n");
        let ens = fit_with_pruning(&segment(150), &cfg, "s/0").unwrap();
        let p = ens.pruning();
        assert_eq!(p.kept.len(), 3);
        let score = |id: &str| p.scores.iter().find(|(s, _)| s == id).unwrap().1;
        let worst_kept = p.kept.iter().map(|id| score(id)).fold(f64::MIN, f64::max);
        let best_dropped = p.discarded.iter().map(|id| score(id)).fold(f64::MAX, f64::min);
        assert!(worst_kept <= best_dropped);
        assert_eq!(ens.members().len(), 3);
        assert_eq!(ens.train_losses().rows(), 3);
    }

    #[test]
    fn short_training_segment_is_rejected() {
        let cfg = small_cfg("A ridge lambda=1\n");
        assert!(matches!(
            fit_with_pruning(&segment(8), &cfg, "s/3"),
            Err(Error::InsufficientLength { .. })
        ));
    }

    #[test]
    fn single_member_methods_reproduce_it() {
        let mut cfg = small_cfg("A ridge lambda=1\n");
        cfg.keep_fraction = 1.0;
        let seg = segment(200);
        let ens = fit_with_pruning(&seg.slice(0, 150), &cfg, "s/0").unwrap();
        let res = rolling_evaluate(&ens, &seg.slice(147, 200), &cfg).unwrap();
        assert_eq!(res.methods.len(), 33);
        for m in &res.methods {
            for (i, b) in res.member_forecasts.iter().enumerate() {
                assert_eq!(m.forecasts.row(i), b.forecasts.row(0), "{}", m.method);
            }
        }
    }

    #[test]
    fn strict_single_origin_is_uniform() {
        let mut cfg = small_cfg("A knn k=1\nB knn k=7\n");
        cfg.keep_fraction = 1.0;
        cfg.combiner.feedback = FeedbackMode::Strict;
        cfg.methods = vec![
            Method::SIMPLE,
            Method::new(Rule::Window, Strategy::IndividualHorizon),
            Method::new(Rule::MlPol, Strategy::CompleteHorizon),
        ];
        let seg = segment(200);
        let ens = fit_with_pruning(&seg.slice(0, 150), &cfg, "s/1").unwrap();
        // q + H values give exactly one origin
        let res = rolling_evaluate(&ens, &seg.slice(147, 154), &cfg).unwrap();
        let simple = &res.methods[0].forecasts;
        for m in &res.methods {
            assert_eq!(m.forecasts.rows(), 1);
            assert_eq!(&m.forecasts, simple);
        }
    }
}
