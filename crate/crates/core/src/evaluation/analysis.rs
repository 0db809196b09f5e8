//! Rank, percentage-difference and per-horizon analyses over a [`MetricTable`].

use std::collections::BTreeMap;

use serde::Serialize;

use super::{Horizon, MetricTable};
use crate::error::{Error, Result};

/// Half-width of the draw band, in percent.
pub const DRAW_BAND: f64 = 1.0;

const BASELINE: &str = "Simple";

/// Ranks with ties sharing the average of their positions (1-based).
pub fn fractional_ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &o in &order[i..=j] {
            ranks[o] = avg;
        }
        i = j + 1;
    }
    ranks
}

pub fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    Some(if n % 2 == 1 { v[n / 2] } else { (v[n / 2 - 1] + v[n / 2]) / 2.0 })
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// The comparison unit of a rank analysis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum RankScope {
    /// Every `(series, fold)` pair ranks the methods once.
    #[serde(rename = "series_fold")]
    SeriesFold,
    /// MAEs are averaged over folds first; each series ranks once.
    #[serde(rename = "series")]
    Series,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RankSummary {
    pub method: String,
    pub scope: RankScope,
    pub mean_rank: f64,
    pub std_rank: f64,
    pub units: usize,
}

/// `series -> fold -> method -> mae` for one horizon.
fn grouped(table: &MetricTable, horizon: Horizon) -> BTreeMap<&str, BTreeMap<usize, BTreeMap<&str, f64>>> {
    let mut out: BTreeMap<&str, BTreeMap<usize, BTreeMap<&str, f64>>> = BTreeMap::new();
    for r in table.records().iter().filter(|r| r.horizon == horizon) {
        out.entry(&r.series_id)
            .or_default()
            .entry(r.fold)
            .or_default()
            .insert(&r.method, r.mae);
    }
    out
}

/// Mean and sample standard deviation of each method's fractional rank,
/// computed on the all-horizon MAE. Sorted by mean rank, then name.
pub fn average_rank(table: &MetricTable, scope: RankScope) -> Result<Vec<RankSummary>> {
    let methods = table.methods();
    if methods.is_empty() {
        return Err(Error::Empty("metric table"));
    }
    let groups = grouped(table, Horizon::All);
    let mut units: Vec<Vec<f64>> = Vec::new();
    for (series, folds) in &groups {
        let mut fold_rows = Vec::new();
        for (fold, by_method) in folds {
            let row = methods
                .iter()
                .map(|m| {
                    by_method.get(m.as_str()).copied().ok_or_else(|| {
                        Error::Completeness(format!("{m} has no record for {series} fold {fold}"))
                    })
                })
                .collect::<Result<Vec<f64>>>()?;
            fold_rows.push(row);
        }
        match scope {
            RankScope::SeriesFold => units.extend(fold_rows),
            RankScope::Series => {
                let n = fold_rows.len() as f64;
                units.push(
                    (0..methods.len())
                        .map(|j| fold_rows.iter().map(|r| r[j]).sum::<f64>() / n)
                        .collect(),
                );
            }
        }
    }
    let ranks: Vec<Vec<f64>> = units.iter().map(|u| fractional_ranks(u)).collect();
    let mut out: Vec<RankSummary> = methods
        .iter()
        .enumerate()
        .map(|(j, m)| {
            let col: Vec<f64> = ranks.iter().map(|r| r[j]).collect();
            let (mean_rank, std_rank) = mean_std(&col);
            RankSummary {
                method: m.clone(),
                scope,
                mean_rank,
                std_rank,
                units: col.len(),
            }
        })
        .collect();
    out.sort_by(|a, b| a.mean_rank.total_cmp(&b.mean_rank).then(a.method.cmp(&b.method)));
    Ok(out)
}

/// `100 (mae - baseline) / baseline`.
pub fn percentage_difference(mae: f64, baseline: f64) -> Result<f64> {
    if baseline == 0.0 {
        return Err(Error::UndefinedBaseline);
    }
    Ok(100.0 * (mae / baseline) - 100.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Outcome {
    Win,
    Draw,
    Loss,
}

impl Outcome {
    /// Draw band is inclusive on both ends.
    pub fn classify(pd: f64) -> Self {
        if pd < -DRAW_BAND {
            Outcome::Win
        } else if pd > DRAW_BAND {
            Outcome::Loss
        } else {
            Outcome::Draw
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct WinDrawLoss {
    pub win: f64,
    pub draw: f64,
    pub loss: f64,
}

pub fn win_draw_loss(pds: &[f64]) -> Result<WinDrawLoss> {
    if pds.is_empty() {
        return Err(Error::Empty("percentage differences"));
    }
    let mut counts = [0usize; 3];
    for &pd in pds {
        counts[Outcome::classify(pd) as usize] += 1;
    }
    let n = pds.len() as f64;
    Ok(WinDrawLoss {
        win: counts[0] as f64 / n,
        draw: counts[1] as f64 / n,
        loss: counts[2] as f64 / n,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PairwiseRecord {
    pub series_id: String,
    pub fold: usize,
    pub method: String,
    pub pct_diff: f64,
    pub outcome: Outcome,
}

fn require_baseline(table: &MetricTable) -> Result<()> {
    if table.records().iter().any(|r| r.method == BASELINE) {
        Ok(())
    } else {
        Err(Error::Completeness(format!("{BASELINE} missing from metric table")))
    }
}

/// Percentage difference of every non-baseline method against Simple per
/// `(series, fold)`, on the all-horizon MAE. Also returns how many records
/// were dropped because Simple's MAE was zero.
pub fn pairwise_vs_simple(table: &MetricTable) -> Result<(Vec<PairwiseRecord>, usize)> {
    require_baseline(table)?;
    let mut out = Vec::new();
    let mut excluded = 0;
    for (series, folds) in grouped(table, Horizon::All) {
        for (fold, by_method) in folds {
            let base = *by_method.get(BASELINE).ok_or_else(|| {
                Error::Completeness(format!("{BASELINE} has no record for {series} fold {fold}"))
            })?;
            for (&method, &mae) in by_method.iter().filter(|(m, _)| **m != BASELINE) {
                match percentage_difference(mae, base) {
                    Ok(pd) => out.push(PairwiseRecord {
                        series_id: series.to_string(),
                        fold,
                        method: method.to_string(),
                        pct_diff: pd,
                        outcome: Outcome::classify(pd),
                    }),
                    Err(Error::UndefinedBaseline) => excluded += 1,
                    Err(e) => return Err(e),
                }
            }
        }
    }
    Ok((out, excluded))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PairwiseSummary {
    pub method: String,
    pub mean_pct_diff: f64,
    pub median_pct_diff: f64,
    pub win: f64,
    pub draw: f64,
    pub loss: f64,
    pub units: usize,
}

pub fn pairwise_summary(records: &[PairwiseRecord]) -> Result<Vec<PairwiseSummary>> {
    let mut by_method: BTreeMap<&str, Vec<f64>> = BTreeMap::new();
    for r in records {
        by_method.entry(&r.method).or_default().push(r.pct_diff);
    }
    by_method
        .into_iter()
        .map(|(method, pds)| {
            let wdl = win_draw_loss(&pds)?;
            Ok(PairwiseSummary {
                method: method.to_string(),
                mean_pct_diff: pds.iter().sum::<f64>() / pds.len() as f64,
                median_pct_diff: median(&pds).unwrap(),
                win: wdl.win,
                draw: wdl.draw,
                loss: wdl.loss,
                units: pds.len(),
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HorizonMedian {
    pub method: String,
    pub horizon: usize,
    pub median_pct_diff: f64,
    pub units: usize,
}

/// Median over `(series, fold)` of each method's percentage difference
/// against Simple, per horizon step.
pub fn per_horizon_breakdown(table: &MetricTable) -> Result<Vec<HorizonMedian>> {
    require_baseline(table)?;
    let mut out = Vec::new();
    for h in 1..=table.max_horizon() {
        let mut by_method: BTreeMap<&str, Vec<f64>> = BTreeMap::new();
        for (series, folds) in grouped(table, Horizon::Step(h)) {
            for (fold, methods) in folds {
                let base = *methods.get(BASELINE).ok_or_else(|| {
                    Error::Completeness(format!("{BASELINE} has no horizon {h} record for {series} fold {fold}"))
                })?;
                for (&method, &mae) in methods.iter().filter(|(m, _)| **m != BASELINE) {
                    match percentage_difference(mae, base) {
                        Ok(pd) => by_method.entry(method).or_default().push(pd),
                        Err(Error::UndefinedBaseline) => {}
                        Err(e) => return Err(e),
                    }
                }
            }
        }
        for (method, pds) in by_method {
            out.push(HorizonMedian {
                method: method.to_string(),
                horizon: h,
                median_pct_diff: median(&pds).unwrap(),
                units: pds.len(),
            });
        }
    }
    out.sort_by(|a, b| a.method.cmp(&b.method).then(a.horizon.cmp(&b.horizon)));
    Ok(out)
}
