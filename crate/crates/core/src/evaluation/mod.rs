//! Monte Carlo cross-validation folds, MAE records and the result analyses
//! (ranks, percentage difference against Simple, win/draw/loss, per-horizon
//! medians).

mod analysis;
mod report;

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rand::seq::index::sample;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::rng_from;
use crate::series::DiffSegment;

pub use analysis::{
    average_rank, fractional_ranks, median, pairwise_summary, pairwise_vs_simple, per_horizon_breakdown,
    percentage_difference, win_draw_loss, HorizonMedian, Outcome, PairwiseRecord, PairwiseSummary, RankScope,
    RankSummary, WinDrawLoss, DRAW_BAND,
};
pub use report::{write_reports, ReportSummary};

pub const DEFAULT_FOLDS: usize = 10;
pub const DEFAULT_TRAIN_FRACTION: f64 = 0.6;
pub const DEFAULT_TEST_FRACTION: f64 = 0.1;

/// Raw-index bounds of one fold; `train_end == test_start`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct FoldSpec {
    pub train_start: usize,
    pub train_end: usize,
    pub test_start: usize,
    pub test_end: usize,
}

impl FoldSpec {
    pub fn train_len(&self) -> usize {
        self.train_end - self.train_start
    }

    pub fn test_len(&self) -> usize {
        self.test_end - self.test_start
    }
}

/// Samples `folds` train/test windows of `floor(train_frac n)` and
/// `floor(test_frac n)` values, sorted by start.
pub fn mccv_folds(n: usize, folds: usize, train_frac: f64, test_frac: f64, seed: u64) -> Result<Vec<FoldSpec>> {
    if folds == 0 {
        return Err(Error::Config("at least one fold is required".into()));
    }
    if !(train_frac > 0.0 && test_frac > 0.0 && train_frac + test_frac <= 1.0) {
        return Err(Error::Config(format!(
            "fold fractions must be positive and sum to at most 1, got {train_frac} and {test_frac}"
        )));
    }
    let train = (train_frac * n as f64).floor() as usize;
    let test = (test_frac * n as f64).floor() as usize;
    if train < 2 || test < 1 || train + test > n {
        let required = ((2.0 / train_frac).max(1.0 / test_frac)).ceil() as usize;
        return Err(Error::too_short("series for one fold", required, n));
    }
    let range = n - train - test + 1;
    let mut rng = rng_from(seed);
    let mut starts: Vec<usize> = if range >= folds {
        sample(&mut rng, range, folds).into_vec()
    } else {
        log::warn!("only {range} distinct fold offsets for {folds} folds; sampling with replacement");
        (0..folds).map(|_| rng.gen_range(0..range)).collect()
    };
    starts.sort_unstable();
    Ok(starts
        .into_iter()
        .map(|s| FoldSpec {
            train_start: s,
            train_end: s + train,
            test_start: s + train,
            test_end: s + train + test,
        })
        .collect())
}

/// Differences the fold's raw window and splits it into the training
/// segment and a test segment that starts with `lags` context values.
pub fn fold_segments(values: &[f64], fold: &FoldSpec, lags: usize) -> Result<(DiffSegment, DiffSegment)> {
    if fold.test_end > values.len() {
        return Err(Error::too_short("series for fold", fold.test_end, values.len()));
    }
    let seg = DiffSegment::from_raw(&values[fold.train_start..fold.test_end])?;
    let train_diffs = fold.train_len() - 1;
    if train_diffs < lags {
        return Err(Error::too_short("training segment", lags + 1, fold.train_len()));
    }
    Ok((seg.slice(0, train_diffs), seg.slice(train_diffs - lags, seg.len())))
}

/// Arithmetic mean of absolute errors.
pub fn mae(errors: &[f64]) -> Result<f64> {
    if errors.is_empty() {
        return Err(Error::Empty("error list"));
    }
    Ok(errors.iter().sum::<f64>() / errors.len() as f64)
}

/// A single forecast step or the aggregate over all steps.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Horizon {
    Step(usize),
    All,
}

impl fmt::Display for Horizon {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Horizon::Step(h) => write!(f, "{h}"),
            Horizon::All => f.write_str("all"),
        }
    }
}

impl FromStr for Horizon {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s == "all" {
            return Ok(Horizon::All);
        }
        match s.parse::<usize>() {
            Ok(h) if h >= 1 => Ok(Horizon::Step(h)),
            _ => Err(Error::Parse {
                row: 0,
                message: format!("invalid horizon `{s}`"),
            }),
        }
    }
}

impl Serialize for Horizon {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Horizon {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRecord {
    pub series_id: String,
    pub fold: usize,
    pub method: String,
    pub horizon: Horizon,
    pub mae: f64,
}

/// MAE records, one per `(series_id, fold, method, horizon)`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct MetricTable {
    records: Vec<MetricRecord>,
}

impl MetricTable {
    pub fn new(mut records: Vec<MetricRecord>) -> Result<Self> {
        if let Some(r) = records.iter().find(|r| !(r.mae >= 0.0 && r.mae.is_finite())) {
            return Err(Error::Numeric(format!(
                "invalid MAE {} for {}/{}/{}/{}",
                r.mae, r.series_id, r.fold, r.method, r.horizon
            )));
        }
        records.sort_by(|a, b| key(a).cmp(&key(b)));
        if let Some(w) = records.windows(2).find(|w| key(&w[0]) == key(&w[1])) {
            let r = &w[0];
            return Err(Error::Integrity(format!(
                "duplicate metric record {}/{}/{}/{}",
                r.series_id, r.fold, r.method, r.horizon
            )));
        }
        Ok(Self { records })
    }

    pub fn records(&self) -> &[MetricRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Method names in first-seen order of the sorted table.
    pub fn methods(&self) -> Vec<String> {
        let mut out: Vec<String> = self.records.iter().map(|r| r.method.clone()).collect();
        out.sort();
        out.dedup();
        out
    }

    /// Largest horizon step present.
    pub fn max_horizon(&self) -> usize {
        self.records
            .iter()
            .filter_map(|r| match r.horizon {
                Horizon::Step(h) => Some(h),
                Horizon::All => None,
            })
            .max()
            .unwrap_or(0)
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        for r in &self.records {
            w.serialize(r)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv(path: &Path) -> Result<Self> {
        let mut rdr = csv::Reader::from_path(path)?;
        let records = rdr
            .deserialize()
            .enumerate()
            .map(|(i, r)| {
                r.map_err(|e| Error::Parse {
                    row: i + 2,
                    message: e.to_string(),
                })
            })
            .collect::<Result<Vec<MetricRecord>>>()?;
        Self::new(records)
    }
}

fn key(r: &MetricRecord) -> (&str, usize, &str, Horizon) {
    (&r.series_id, r.fold, &r.method, r.horizon)
}
