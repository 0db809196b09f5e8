//! Forecast combination.
//!
//! A [`Method`] pairs a combination [`Rule`] with a horizon weighting
//! [`Strategy`]. Its [`CombinerState`] turns member forecasts for one origin
//! into a combined `H`-step forecast through an `H x K` [`WeightMatrix`],
//! and learns from absolute errors as actual values become available under
//! the configured [`FeedbackMode`].

mod ade;
mod history;
mod rules;
mod state;

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::matrix::Matrix;

pub use ade::{ade_fit_meta, MetaFit, MetaModelSet, MIN_META_ROWS};
pub use history::{LossHistory, LossRecord};
pub use rules::{
    ade_weights_from_errors, apply_horizon_strategy, ewa_weights, fixed_share_mix,
    inverse_loss_weights, mlpol_weights, select_min, weights_best, weights_blast,
    weights_losstrain, weights_window, LOSS_EPSILON,
};
pub use state::{feedback_schedule, init_state, CombinerState, Diagnostics};

/// Default window length of Window and Blast, in forecast origins.
pub const DEFAULT_WINDOW: usize = 50;
pub const DEFAULT_FS_ALPHA: f64 = 0.1;
pub const DEFAULT_MLPOL_P: f64 = 2.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Rule {
    Simple,
    LossTrain,
    Best,
    Window,
    Blast,
    Ewa,
    FixedShare,
    MlPol,
    Ade,
}

impl Rule {
    /// The eight rules whose weights depend on observed performance.
    pub const PERFORMANCE_BASED: [Rule; 8] = [
        Rule::Ade,
        Rule::Best,
        Rule::Blast,
        Rule::Ewa,
        Rule::FixedShare,
        Rule::LossTrain,
        Rule::MlPol,
        Rule::Window,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Rule::Simple => "Simple",
            Rule::LossTrain => "LossTrain",
            Rule::Best => "Best",
            Rule::Window => "Window",
            Rule::Blast => "Blast",
            Rule::Ewa => "EWA",
            Rule::FixedShare => "FS",
            Rule::MlPol => "MLpol",
            Rule::Ade => "ADE",
        }
    }

    /// Rules whose state changes with test-time feedback.
    pub fn is_online(self) -> bool {
        matches!(
            self,
            Rule::Window | Rule::Blast | Rule::Ewa | Rule::FixedShare | Rule::MlPol
        )
    }
}

impl FromStr for Rule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        [
            Rule::Simple,
            Rule::LossTrain,
            Rule::Best,
            Rule::Window,
            Rule::Blast,
            Rule::Ewa,
            Rule::FixedShare,
            Rule::MlPol,
            Rule::Ade,
        ]
        .into_iter()
        .find(|r| r.name().eq_ignore_ascii_case(s))
        .ok_or_else(|| Error::Config(format!("unknown combination rule `{s}`")))
    }
}

/// Which horizon's signal drives which row of the weight matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Strategy {
    /// One weight vector from losses averaged over the whole horizon.
    CompleteHorizon,
    /// Separate weights per horizon.
    IndividualHorizon,
    /// Weights of horizon 1 used for every horizon.
    FirstHorizonForward,
    /// Weights of horizon H used for every horizon.
    LastHorizonBackward,
}

impl Strategy {
    pub const ALL: [Strategy; 4] = [
        Strategy::CompleteHorizon,
        Strategy::IndividualHorizon,
        Strategy::FirstHorizonForward,
        Strategy::LastHorizonBackward,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Strategy::CompleteHorizon => "CH",
            Strategy::IndividualHorizon => "IH",
            Strategy::FirstHorizonForward => "FHF",
            Strategy::LastHorizonBackward => "LHB",
        }
    }
}

impl FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Strategy::ALL
            .into_iter()
            .find(|r| r.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::Config(format!("unknown horizon strategy `{s}`")))
    }
}

/// A rule x strategy pair, named `Rule_STRATEGY` (`Simple` has no suffix).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Method {
    pub rule: Rule,
    pub strategy: Strategy,
}

impl Method {
    pub const SIMPLE: Method = Method {
        rule: Rule::Simple,
        strategy: Strategy::IndividualHorizon,
    };

    pub fn new(rule: Rule, strategy: Strategy) -> Self {
        if rule == Rule::Simple {
            Method::SIMPLE
        } else {
            Method { rule, strategy }
        }
    }

    /// Simple plus every performance-based rule under every strategy (33).
    pub fn all() -> Vec<Method> {
        let mut out = vec![Method::SIMPLE];
        for rule in Rule::PERFORMANCE_BASED {
            for strategy in Strategy::ALL {
                out.push(Method { rule, strategy });
            }
        }
        out
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.rule == Rule::Simple {
            f.write_str("Simple")
        } else {
            write!(f, "{}_{}", self.rule.name(), self.strategy.name())
        }
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s.eq_ignore_ascii_case("simple") {
            return Ok(Method::SIMPLE);
        }
        let (rule, strategy) = s
            .rsplit_once('_')
            .ok_or_else(|| Error::Config(format!("method `{s}` is not of the form Rule_STRATEGY")))?;
        Ok(Method::new(rule.parse()?, strategy.parse()?))
    }
}

/// Whether all errors of past origins are known (`Optimistic`) or only
/// those whose target time has passed (`Strict`).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum FeedbackMode {
    #[default]
    Optimistic,
    Strict,
}

impl FeedbackMode {
    pub fn name(self) -> &'static str {
        match self {
            FeedbackMode::Optimistic => "optimistic",
            FeedbackMode::Strict => "strict",
        }
    }
}

impl FromStr for FeedbackMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "optimistic" => Ok(FeedbackMode::Optimistic),
            "strict" => Ok(FeedbackMode::Strict),
            other => Err(Error::Config(format!(
                "feedback must be optimistic or strict, got `{other}`"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CombinerConfig {
    /// Window length for Window / Blast, in forecast origins.
    pub lambda: usize,
    /// Fixed EWA learning rate; `None` uses `sqrt(8 ln K / t)`.
    pub ewa_eta: Option<f64>,
    pub fs_alpha: f64,
    pub mlpol_p: f64,
    pub feedback: FeedbackMode,
}

impl Default for CombinerConfig {
    fn default() -> Self {
        Self {
            lambda: DEFAULT_WINDOW,
            ewa_eta: None,
            fs_alpha: DEFAULT_FS_ALPHA,
            mlpol_p: DEFAULT_MLPOL_P,
            feedback: FeedbackMode::Optimistic,
        }
    }
}

impl CombinerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.lambda < 1 {
            return Err(Error::Config("lambda must be at least 1".into()));
        }
        if !(0.0..=1.0).contains(&self.fs_alpha) {
            return Err(Error::Config(format!("fs.alpha must lie in [0, 1], got {}", self.fs_alpha)));
        }
        if !(self.mlpol_p >= 1.0 && self.mlpol_p.is_finite()) {
            return Err(Error::Config(format!("mlpol.p must be >= 1, got {}", self.mlpol_p)));
        }
        if let Some(eta) = self.ewa_eta {
            if !(eta >= 0.0 && eta.is_finite()) {
                return Err(Error::Config(format!("ewa.eta must be finite and >= 0, got {eta}")));
            }
        }
        Ok(())
    }
}

/// Member forecasts for one origin: `K x H`, rows in member order.
#[derive(Debug, Clone, PartialEq)]
pub struct ForecastBlock {
    pub forecasts: Matrix,
    pub members: Arc<[String]>,
}

impl ForecastBlock {
    pub fn new(forecasts: Matrix, members: Arc<[String]>) -> Result<Self> {
        if forecasts.rows() != members.len() {
            return Err(Error::shape(
                format!("{} member rows", members.len()),
                forecasts.rows(),
            ));
        }
        if !forecasts.all_finite() {
            return Err(Error::Numeric("non-finite member forecast".into()));
        }
        Ok(Self { forecasts, members })
    }

    pub fn members(&self) -> usize {
        self.forecasts.rows()
    }

    pub fn horizon(&self) -> usize {
        self.forecasts.cols()
    }
}

/// `H x K` combination weights; every row lies on the probability simplex.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightMatrix(Matrix);

impl WeightMatrix {
    pub fn uniform(horizon: usize, members: usize) -> Self {
        let w = 1.0 / members as f64;
        WeightMatrix(Matrix::from_vec(horizon, members, vec![w; horizon * members]).unwrap())
    }

    /// Every row set to `row`.
    pub fn replicate(row: &[f64], horizon: usize) -> Self {
        let mut m = Matrix::zeros(horizon, row.len());
        for h in 0..horizon {
            m.row_mut(h).copy_from_slice(row);
        }
        WeightMatrix(m)
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        Ok(WeightMatrix(Matrix::from_rows(rows)?))
    }

    pub fn horizon(&self) -> usize {
        self.0.rows()
    }

    pub fn members(&self) -> usize {
        self.0.cols()
    }

    pub fn row(&self, h: usize) -> &[f64] {
        self.0.row(h)
    }

    pub fn as_matrix(&self) -> &Matrix {
        &self.0
    }

    /// Largest violation of non-negativity or unit row sum.
    pub fn simplex_violation(&self) -> f64 {
        self.0
            .iter_rows()
            .map(|r| {
                let neg = r.iter().fold(0.0f64, |m, &w| m.max(-w));
                let sum: f64 = r.iter().sum();
                if r.iter().any(|w| !w.is_finite()) {
                    f64::INFINITY
                } else {
                    neg.max((sum - 1.0).abs())
                }
            })
            .fold(0.0, f64::max)
    }
}

/// `out[h] = sum_k W[h][k] * forecasts[k][h]`.
pub fn combine(block: &ForecastBlock, weights: &WeightMatrix) -> Result<Vec<f64>> {
    let (k, h) = (block.members(), block.horizon());
    if weights.members() != k || weights.horizon() != h {
        return Err(Error::shape(
            format!("{h}x{k} weights"),
            format!("{}x{}", weights.horizon(), weights.members()),
        ));
    }
    Ok((0..h)
        .map(|hh| {
            weights
                .row(hh)
                .iter()
                .enumerate()
                .map(|(kk, w)| w * block.forecasts.get(kk, hh))
                .sum()
        })
        .collect())
}
