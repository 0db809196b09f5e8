//! CSV report files derived from a [`MetricTable`].

use std::path::Path;

use serde::Serialize;

use super::{
    average_rank, pairwise_summary, pairwise_vs_simple, per_horizon_breakdown, MetricTable, RankScope,
    RankSummary,
};
use crate::error::Result;

/// What [`write_reports`] produced, for logging and run metadata.
#[derive(Debug, Clone, Serialize)]
pub struct ReportSummary {
    pub ranks: Vec<RankSummary>,
    /// Pairwise records dropped because Simple's MAE was zero.
    pub undefined_baseline: usize,
    pub per_horizon_rows: usize,
}

fn write_rows<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

/// Writes `summary_ranks.csv`, `pairwise_vs_simple.csv`,
/// `pairwise_summary.csv` and `per_horizon.csv` into `dir`.
pub fn write_reports(table: &MetricTable, dir: &Path) -> Result<ReportSummary> {
    std::fs::create_dir_all(dir)?;
    let mut ranks = average_rank(table, RankScope::SeriesFold)?;
    ranks.extend(average_rank(table, RankScope::Series)?);
    write_rows(&dir.join("summary_ranks.csv"), &ranks)?;

    let (pairwise, undefined_baseline) = pairwise_vs_simple(table)?;
    if undefined_baseline > 0 {
        log::warn!("{undefined_baseline} comparisons skipped: Simple MAE was zero");
    }
    write_rows(&dir.join("pairwise_vs_simple.csv"), &pairwise)?;
    write_rows(&dir.join("pairwise_summary.csv"), &pairwise_summary(&pairwise)?)?;

    let horizons = per_horizon_breakdown(table)?;
    write_rows(&dir.join("per_horizon.csv"), &horizons)?;

    Ok(ReportSummary {
        ranks,
        undefined_baseline,
        per_horizon_rows: horizons.len(),
    })
}
