//! Batch experiments: run configuration and the series x fold driver.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::Serialize;

use crate::combiner::{FeedbackMode, Method, Rule, Strategy};
use crate::ensemble::{fit_with_pruning, rolling_evaluate, EnsembleConfig};
use crate::error::{Error, Result};
use crate::evaluation::{
    fold_segments, mccv_folds, write_reports, FoldSpec, Horizon, MetricRecord, MetricTable, ReportSummary,
    DEFAULT_FOLDS, DEFAULT_TEST_FRACTION, DEFAULT_TRAIN_FRACTION,
};
use crate::learners::{LearnerSpec, ModelPool};
use crate::rng::derive_seed;
use crate::series::{load_catalog, CatalogFormat};

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub data: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub ensemble: EnsembleConfig,
    pub folds: usize,
    pub train_fraction: f64,
    pub test_fraction: f64,
    /// Worker threads; `None` uses the rayon default.
    pub threads: Option<usize>,
    pool_path: Option<PathBuf>,
    rules: Option<Vec<Rule>>,
    strategies: Option<Vec<Strategy>>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            data: None,
            out: None,
            ensemble: EnsembleConfig::default(),
            folds: DEFAULT_FOLDS,
            train_fraction: DEFAULT_TRAIN_FRACTION,
            test_fraction: DEFAULT_TEST_FRACTION,
            threads: None,
            pool_path: None,
            rules: None,
            strategies: None,
        }
    }
}

fn parse_num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Config(format!("invalid value `{value}` for `{key}`")))
}

fn parse_list<T: std::str::FromStr<Err = Error>>(value: &str) -> Result<Vec<T>> {
    value
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(str::parse)
        .collect()
}

impl RunConfig {
    /// Reads a flat `key = value` file; `#` starts a comment.
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let mut cfg = Self::default();
        cfg.apply_text(&text)?;
        Ok(cfg)
    }

    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected key = value", i + 1)))?;
            self.set(key.trim(), value.trim())?;
        }
        Ok(())
    }

    /// Sets one configuration key.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let e = &mut self.ensemble;
        match key {
            "data" => self.data = Some(value.into()),
            "out" => self.out = Some(value.into()),
            "seed" => e.seed = parse_num(key, value)?,
            "lags" | "q" => e.lags = parse_num(key, value)?,
            "horizon" | "H" => e.horizon = parse_num(key, value)?,
            "keep_fraction" => e.keep_fraction = parse_num(key, value)?,
            "inner_fraction" => e.inner_fraction = parse_num(key, value)?,
            "pool" => self.pool_path = Some(value.into()),
            "methods" => {
                e.methods = if value == "all" {
                    Method::all()
                } else {
                    parse_list(value)?
                }
            }
            "rule" => self.rules = Some(parse_list(value)?),
            "strategy" => self.strategies = Some(parse_list(value)?),
            "lambda" => e.combiner.lambda = parse_num(key, value)?,
            "ewa.eta" => {
                e.combiner.ewa_eta = if value == "adaptive" {
                    None
                } else {
                    Some(parse_num(key, value)?)
                }
            }
            "fs.alpha" => e.combiner.fs_alpha = parse_num(key, value)?,
            "mlpol.p" => e.combiner.mlpol_p = parse_num(key, value)?,
            "ade.meta_spec" => {
                e.meta_spec = if value.contains(char::is_whitespace) {
                    LearnerSpec::parse_line(value)?
                } else {
                    crate::learners::default_pool()
                        .get(value)
                        .cloned()
                        .ok_or_else(|| Error::Config(format!("unknown meta spec `{value}`")))?
                }
            }
            "feedback" => e.combiner.feedback = value.parse()?,
            "eval_scale" => e.eval_scale = value.parse()?,
            "folds" => self.folds = parse_num(key, value)?,
            "train_fraction" => self.train_fraction = parse_num(key, value)?,
            "test_fraction" => self.test_fraction = parse_num(key, value)?,
            "threads" => self.threads = Some(parse_num(key, value)?),
            other => return Err(Error::Config(format!("unknown config key `{other}`"))),
        }
        Ok(())
    }

    pub fn set_feedback(&mut self, mode: FeedbackMode) {
        self.ensemble.combiner.feedback = mode;
    }

    /// Resolves file references and derived settings, then validates.
    pub fn finalize(&mut self) -> Result<()> {
        if let Some(path) = self.pool_path.take() {
            self.ensemble.pool = ModelPool::from_file(&path)?;
        }
        if self.rules.is_some() || self.strategies.is_some() {
            let rules = self.rules.take().unwrap_or_else(|| Rule::PERFORMANCE_BASED.to_vec());
            let strategies = self.strategies.take().unwrap_or_else(|| Strategy::ALL.to_vec());
            self.ensemble.methods = rules
                .iter()
                .filter(|r| **r != Rule::Simple)
                .flat_map(|&r| strategies.iter().map(move |&s| Method::new(r, s)))
                .collect();
        }
        let methods = &mut self.ensemble.methods;
        if !methods.contains(&Method::SIMPLE) {
            methods.insert(0, Method::SIMPLE);
        }
        let mut seen = std::collections::HashSet::new();
        methods.retain(|m| seen.insert(*m));
        if self.folds == 0 {
            return Err(Error::Config("folds must be at least 1".into()));
        }
        if self.threads == Some(0) {
            return Err(Error::Config("threads must be at least 1".into()));
        }
        self.ensemble.validate()
    }
}

/// Metric records for one method: one per horizon step plus the aggregate.
fn method_records(series: &str, fold: usize, method: &str, horizon_mae: &[f64]) -> Vec<MetricRecord> {
    let mut out: Vec<MetricRecord> = horizon_mae
        .iter()
        .enumerate()
        .map(|(h, &mae)| MetricRecord {
            series_id: series.to_string(),
            fold,
            method: method.to_string(),
            horizon: Horizon::Step(h + 1),
            mae,
        })
        .collect();
    out.push(MetricRecord {
        series_id: series.to_string(),
        fold,
        method: method.to_string(),
        horizon: Horizon::All,
        mae: horizon_mae.iter().sum::<f64>() / horizon_mae.len() as f64,
    });
    out
}

#[derive(Debug, Clone, Serialize)]
pub struct FoldDiagnostics {
    pub kept: Vec<String>,
    pub ade_fallback: bool,
    pub test_origins: usize,
}

/// Runs pruning, refit and rolling evaluation on one fold of one series.
pub fn run_fold(
    series: &str,
    values: &[f64],
    fold_index: usize,
    fold: &FoldSpec,
    cfg: &EnsembleConfig,
) -> Result<(Vec<MetricRecord>, FoldDiagnostics)> {
    let label = format!("{series}/fold{fold_index}");
    let (train, test) = fold_segments(values, fold, cfg.lags)?;
    let ens = fit_with_pruning(&train, cfg, &label)?;
    let res = rolling_evaluate(&ens, &test, cfg)?;
    let records = res
        .methods
        .iter()
        .flat_map(|m| method_records(series, fold_index, &m.method.to_string(), &m.horizon_mae()))
        .collect();
    let diag = FoldDiagnostics {
        kept: ens.pruning().kept.clone(),
        ade_fallback: ens.ade_fallback(),
        test_origins: res.actuals.rows(),
    };
    Ok((records, diag))
}

#[derive(Debug, Clone, Serialize)]
pub struct RunMeta {
    pub version: &'static str,
    pub seed: u64,
    pub data: Option<PathBuf>,
    pub lags: usize,
    pub horizon: usize,
    pub keep_fraction: f64,
    pub inner_fraction: f64,
    pub folds: usize,
    pub train_fraction: f64,
    pub test_fraction: f64,
    pub lambda: usize,
    pub ewa_eta: Option<f64>,
    pub fs_alpha: f64,
    pub mlpol_p: f64,
    pub feedback: &'static str,
    pub eval_scale: &'static str,
    pub meta_spec: String,
    pub pool: Vec<String>,
    pub methods: Vec<String>,
    pub series_total: usize,
    pub series_evaluated: usize,
    /// Per series, the reasons folds or the whole series were skipped.
    pub skipped: BTreeMap<String, Vec<String>>,
    pub ade_fallback_folds: usize,
    pub report: Option<ReportSummary>,
}

pub struct RunOutcome {
    pub table: MetricTable,
    pub meta: RunMeta,
}

/// Evaluates every series of the catalog and writes `metrics.csv`, the
/// analysis reports and `run_meta.json` into the output directory.
/// Fails only if the data cannot be read or no series produced results.
pub fn run_experiment(cfg: &RunConfig) -> Result<RunOutcome> {
    let data = cfg
        .data
        .as_ref()
        .ok_or_else(|| Error::Config("no data path given".into()))?;
    let out = cfg
        .out
        .as_ref()
        .ok_or_else(|| Error::Config("no output directory given".into()))?;
    let catalog = load_catalog(data, CatalogFormat::LongCsv)?;
    let ens = &cfg.ensemble;

    let mut skipped: BTreeMap<String, Vec<String>> = BTreeMap::new();
    let mut tasks: Vec<(&str, &[f64], usize, FoldSpec)> = Vec::new();
    for (id, series) in &catalog.series {
        let seed = derive_seed(ens.seed, &format!("folds/{id}"));
        match mccv_folds(series.len(), cfg.folds, cfg.train_fraction, cfg.test_fraction, seed) {
            Ok(folds) => tasks.extend(
                folds
                    .into_iter()
                    .enumerate()
                    .map(|(k, f)| (id.as_str(), series.values(), k, f)),
            ),
            Err(e) => {
                log::warn!("{id}: skipped: {e}");
                skipped.entry(id.clone()).or_default().push(e.to_string());
            }
        }
    }

    let run = || {
        tasks
            .par_iter()
            .map(|(id, values, k, fold)| {
                let r = run_fold(id, values, *k, fold, ens);
                match &r {
                    Ok(_) => log::info!("{id} fold {k} done"),
                    Err(e) => log::warn!("{id} fold {k} skipped: {e}"),
                }
                (*id, *k, r)
            })
            .collect::<Vec<_>>()
    };
    let results = match cfg.threads {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| Error::Config(format!("thread pool: {e}")))?
            .install(run),
        None => run(),
    };

    let mut records = Vec::new();
    let mut evaluated = std::collections::BTreeSet::new();
    let mut ade_fallback_folds = 0;
    for (id, k, r) in results {
        match r {
            Ok((recs, diag)) => {
                records.extend(recs);
                evaluated.insert(id);
                ade_fallback_folds += usize::from(diag.ade_fallback);
            }
            Err(e) => skipped.entry(id.to_string()).or_default().push(format!("fold {k}: {e}")),
        }
    }
    if records.is_empty() {
        return Err(Error::NoResults(skipped.len()));
    }
    let table = MetricTable::new(records)?;

    std::fs::create_dir_all(out)?;
    table.write_csv(&out.join("metrics.csv"))?;
    let report = write_reports(&table, out)?;

    let meta = RunMeta {
        version: env!("CARGO_PKG_VERSION"),
        seed: ens.seed,
        data: cfg.data.clone(),
        lags: ens.lags,
        horizon: ens.horizon,
        keep_fraction: ens.keep_fraction,
        inner_fraction: ens.inner_fraction,
        folds: cfg.folds,
        train_fraction: cfg.train_fraction,
        test_fraction: cfg.test_fraction,
        lambda: ens.combiner.lambda,
        ewa_eta: ens.combiner.ewa_eta,
        fs_alpha: ens.combiner.fs_alpha,
        mlpol_p: ens.combiner.mlpol_p,
        feedback: ens.combiner.feedback.name(),
        eval_scale: ens.eval_scale.name(),
        meta_spec: ens.meta_spec.to_string(),
        pool: ens.pool.specs().iter().map(|s| s.to_string()).collect(),
        methods: ens.methods.iter().map(|m| m.to_string()).collect(),
        series_total: catalog.len(),
        series_evaluated: evaluated.len(),
        skipped,
        ade_fallback_folds,
        report: Some(report),
    };
    std::fs::write(out.join("run_meta.json"), serde_json::to_string_pretty(&meta)?)?;
    Ok(RunOutcome { table, meta })
}

/// Re-runs the analyses on an existing `metrics.csv`.
pub fn report_from_metrics(metrics: &Path, out: &Path) -> Result<ReportSummary> {
    let table = MetricTable::read_csv(metrics)?;
    write_reports(&table, out)
}
