//! Series ingestion, first differencing and time delay embedding.
//!
//! Raw series enter through [`load_catalog`] (a long-format CSV), are turned
//! into first differences per fold segment, and are reshaped by [`embed`]
//! into `(lag vector, target window)` rows for multi-output regression.

use std::cmp::Ordering;
use std::collections::{BTreeMap, HashSet};
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::matrix::Matrix;

/// One univariate, regularly sampled series.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeSeries {
    id: String,
    values: Vec<f64>,
}

impl TimeSeries {
    pub fn new(id: impl Into<String>, values: Vec<f64>) -> Result<Self> {
        let id = id.into();
        if values.is_empty() {
            return Err(Error::too_short(format!("series {id}"), 1, 0));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Numeric(format!(
                "series {id} has a non-finite value at index {i}"
            )));
        }
        Ok(Self { id, values })
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// First differences of a series, keeping the levels needed to undo them.
#[derive(Debug, Clone, PartialEq)]
pub struct DifferencedSeries {
    pub parent_id: String,
    pub diffs: Vec<f64>,
    pub first_level: f64,
    pub last_level: f64,
}

impl DifferencedSeries {
    /// Cumulative sum of the differences anchored at the first level.
    pub fn integrate(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.diffs.len() + 1);
        out.push(self.first_level);
        out.extend(invert_forecast(&self.diffs, self.first_level));
        out
    }
}

pub fn difference(s: &TimeSeries) -> Result<DifferencedSeries> {
    let v = s.values();
    if v.len() < 2 {
        return Err(Error::too_short(
            format!("differencing series {}", s.id()),
            2,
            v.len(),
        ));
    }
    Ok(DifferencedSeries {
        parent_id: s.id().to_string(),
        diffs: v.windows(2).map(|w| w[1] - w[0]).collect(),
        first_level: v[0],
        last_level: v[v.len() - 1],
    })
}

/// Turns a forecast of differences into levels: `level + cumsum(diffs)`.
pub fn invert_forecast(diff_forecast: &[f64], level_at_origin: f64) -> Vec<f64> {
    diff_forecast
        .iter()
        .scan(level_at_origin, |level, d| {
            *level += d;
            Some(*level)
        })
        .collect()
}

/// A contiguous slice of a raw series in differenced form.
///
/// `levels[i]` is the raw level reached after applying `diffs[i]`, so the
/// level at forecast origin `t` is `levels[t]` and the level `h` steps later
/// is `levels[t + h]`.
#[derive(Debug, Clone, PartialEq)]
pub struct DiffSegment {
    pub diffs: Vec<f64>,
    pub levels: Vec<f64>,
}

impl DiffSegment {
    pub fn from_raw(raw: &[f64]) -> Result<Self> {
        if raw.len() < 2 {
            return Err(Error::too_short("differenced segment", 2, raw.len()));
        }
        Ok(Self {
            diffs: raw.windows(2).map(|w| w[1] - w[0]).collect(),
            levels: raw[1..].to_vec(),
        })
    }

    pub fn len(&self) -> usize {
        self.diffs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.diffs.is_empty()
    }

    pub fn slice(&self, start: usize, end: usize) -> DiffSegment {
        DiffSegment {
            diffs: self.diffs[start..end].to_vec(),
            levels: self.levels[start..end].to_vec(),
        }
    }
}

/// Auto-regression table produced by [`embed`].
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddedDataset {
    /// `m x q` lag vectors, most recent lag first.
    pub x: Matrix,
    /// `m x H` target windows.
    pub y: Matrix,
    pub lags: usize,
    pub horizon: usize,
    /// Index into the source sequence of each row's forecast origin.
    pub origins: Vec<usize>,
}

impl EmbeddedDataset {
    pub fn len(&self) -> usize {
        self.x.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.x.rows() == 0
    }
}

/// Minimum sequence length that yields one embedded row.
pub fn min_embed_len(lags: usize, horizon: usize) -> usize {
    lags + horizon
}

/// Time delay embedding: row `i` has origin `t = q - 1 + i`, inputs
/// `(s[t], s[t-1], .., s[t-q+1])` and targets `(s[t+1], .., s[t+H])`.
pub fn embed(s: &[f64], lags: usize, horizon: usize) -> Result<EmbeddedDataset> {
    if lags == 0 || horizon == 0 {
        return Err(Error::Config("lags and horizon must be positive".into()));
    }
    let required = min_embed_len(lags, horizon);
    if s.len() < required {
        return Err(Error::too_short("time delay embedding", required, s.len()));
    }
    let m = s.len() - lags - horizon + 1;
    let mut x = Matrix::zeros(m, lags);
    let mut y = Matrix::zeros(m, horizon);
    let mut origins = Vec::with_capacity(m);
    for i in 0..m {
        let t = lags - 1 + i;
        for (j, v) in x.row_mut(i).iter_mut().enumerate() {
            *v = s[t - j];
        }
        y.row_mut(i).copy_from_slice(&s[t + 1..=t + horizon]);
        origins.push(t);
    }
    Ok(EmbeddedDataset {
        x,
        y,
        lags,
        horizon,
        origins,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CatalogFormat {
    LongCsv,
}

/// All series read from one source file, keyed by id.
#[derive(Debug, Clone)]
pub struct DatasetCatalog {
    pub series: BTreeMap<String, TimeSeries>,
    pub source_path: PathBuf,
}

impl DatasetCatalog {
    pub fn len(&self) -> usize {
        self.series.len()
    }

    pub fn is_empty(&self) -> bool {
        self.series.is_empty()
    }

    pub fn get(&self, id: &str) -> Option<&TimeSeries> {
        self.series.get(id)
    }
}

const ID_COLUMN: &str = "series_id";
const TIME_COLUMN: &str = "timestamp";
const VALUE_COLUMN: &str = "value";

pub fn load_catalog(path: &Path, format: CatalogFormat) -> Result<DatasetCatalog> {
    match format {
        CatalogFormat::LongCsv => load_long_csv(path),
    }
}

fn load_long_csv(path: &Path) -> Result<DatasetCatalog> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)?;
    let headers = reader.headers()?.clone();
    let column = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::Format {
                path: path.to_path_buf(),
                message: format!("missing column `{name}`"),
            })
    };
    let (id_col, time_col, value_col) = (column(ID_COLUMN)?, column(TIME_COLUMN)?, column(VALUE_COLUMN)?);

    let mut raw: BTreeMap<String, Vec<(String, f64)>> = BTreeMap::new();
    for (i, record) in reader.records().enumerate() {
        // header is row 1
        let row = i + 2;
        let record = record?;
        let field = |c: usize| record.get(c).unwrap_or("");
        let id = field(id_col);
        let ts = field(time_col);
        let value = field(value_col);
        if id.is_empty() || ts.is_empty() {
            return Err(Error::Parse {
                row,
                message: "empty series_id or timestamp".into(),
            });
        }
        if value.is_empty() {
            return Err(Error::Parse {
                row,
                message: format!("missing value for series {id} at {ts}"),
            });
        }
        let value: f64 = value.parse().map_err(|_| Error::Parse {
            row,
            message: format!("non-numeric value `{value}`"),
        })?;
        if !value.is_finite() {
            return Err(Error::Parse {
                row,
                message: format!("non-finite value `{value}`"),
            });
        }
        raw.entry(id.to_string())
            .or_default()
            .push((ts.to_string(), value));
    }

    let mut series = BTreeMap::new();
    for (id, mut points) in raw {
        let numeric = points.iter().all(|(ts, _)| ts.parse::<f64>().is_ok());
        if numeric {
            points.sort_by(|a, b| {
                let (x, y) = (a.0.parse::<f64>().unwrap(), b.0.parse::<f64>().unwrap());
                x.partial_cmp(&y).unwrap_or(Ordering::Equal)
            });
        } else {
            points.sort_by(|a, b| a.0.cmp(&b.0));
        }
        let mut seen = HashSet::with_capacity(points.len());
        for (ts, _) in &points {
            if !seen.insert(ts.as_str()) {
                return Err(Error::Integrity(format!(
                    "duplicate timestamp {ts} for series {id}"
                )));
            }
        }
        let values = points.into_iter().map(|(_, v)| v).collect();
        series.insert(id.clone(), TimeSeries::new(id, values)?);
    }
    log::info!(
        "loaded {} series from {} (lengths {:?})",
        series.len(),
        path.display(),
        series.values().map(TimeSeries::len).collect::<Vec<_>>()
    );
    Ok(DatasetCatalog {
        series,
        source_path: path.to_path_buf(),
    })
}
