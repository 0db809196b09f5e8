//! Multi-output regression learners.
//!
//! Every learner maps a `q`-lag vector to the whole `H`-step target window in
//! one model. [`LearnerSpec`] describes a configured learner, [`fit`] trains
//! it on an [`EmbeddedDataset`] and returns an immutable [`FittedModel`].

mod knn;
mod linear;
mod projection;
mod tree;

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::series::EmbeddedDataset;

pub use knn::KnnModel;
pub use linear::{
    fit_elastic_net, fit_ridge, LinearModel, COORDINATE_DESCENT_MAX_SWEEPS,
    COORDINATE_DESCENT_TOL,
};
pub use projection::{fit_pcr, fit_pls};
pub use tree::{Forest, RegressionTree, Splitter, TreeParams, DEFAULT_MIN_SAMPLES_SPLIT};

/// Mixing parameter used by the `EN` pool member.
pub const DEFAULT_L1_RATIO: f64 = 0.5;
/// Regularization strength used by the `EN` pool member.
pub const DEFAULT_EN_LAMBDA: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Family {
    Bagging,
    RandomForest,
    ExtraTrees,
    Knn,
    Lasso,
    Ridge,
    ElasticNet,
    Pls,
    Pcr,
    Tree,
}

impl Family {
    pub fn name(self) -> &'static str {
        match self {
            Family::Bagging => "bagging",
            Family::RandomForest => "random_forest",
            Family::ExtraTrees => "extra_trees",
            Family::Knn => "knn",
            Family::Lasso => "lasso",
            Family::Ridge => "ridge",
            Family::ElasticNet => "elastic_net",
            Family::Pls => "pls",
            Family::Pcr => "pcr",
            Family::Tree => "tree",
        }
    }
}

impl FromStr for Family {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "bagging" => Family::Bagging,
            "random_forest" | "rf" => Family::RandomForest,
            "extra_trees" | "et" => Family::ExtraTrees,
            "knn" => Family::Knn,
            "lasso" => Family::Lasso,
            "ridge" => Family::Ridge,
            "elastic_net" | "en" => Family::ElasticNet,
            "pls" => Family::Pls,
            "pcr" => Family::Pcr,
            "tree" => Family::Tree,
            other => return Err(Error::Config(format!("unknown learner family `{other}`"))),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KnnWeighting {
    Uniform,
    Distance,
}

impl KnnWeighting {
    fn name(self) -> &'static str {
        match self {
            KnnWeighting::Uniform => "uniform",
            KnnWeighting::Distance => "distance",
        }
    }
}

/// Tree depth limit. `Default` grows until a node holds fewer than
/// [`DEFAULT_MIN_SAMPLES_SPLIT`] samples.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Depth {
    Default,
    Max(usize),
}

/// Validated, family-specific hyperparameters.
#[derive(Debug, Clone, PartialEq)]
pub enum LearnerParams {
    Bagging { trees: usize, depth: Depth },
    RandomForest { trees: usize, depth: Depth },
    ExtraTrees { trees: usize, depth: Depth },
    Tree { depth: Depth, min_split: Option<usize> },
    Knn { k: usize, weighting: KnnWeighting },
    Lasso { lambda: f64 },
    Ridge { lambda: f64 },
    ElasticNet { lambda: f64, l1_ratio: f64 },
    Pls { components: usize },
    Pcr { components: usize },
}

impl LearnerParams {
    pub fn family(&self) -> Family {
        match self {
            LearnerParams::Bagging { .. } => Family::Bagging,
            LearnerParams::RandomForest { .. } => Family::RandomForest,
            LearnerParams::ExtraTrees { .. } => Family::ExtraTrees,
            LearnerParams::Tree { .. } => Family::Tree,
            LearnerParams::Knn { .. } => Family::Knn,
            LearnerParams::Lasso { .. } => Family::Lasso,
            LearnerParams::Ridge { .. } => Family::Ridge,
            LearnerParams::ElasticNet { .. } => Family::ElasticNet,
            LearnerParams::Pls { .. } => Family::Pls,
            LearnerParams::Pcr { .. } => Family::Pcr,
        }
    }

    fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        match *self {
            LearnerParams::Bagging { trees, depth }
            | LearnerParams::RandomForest { trees, depth }
            | LearnerParams::ExtraTrees { trees, depth } => {
                if trees == 0 {
                    return bad("tree ensembles need at least one tree".into());
                }
                if depth == Depth::Max(0) {
                    return bad("max_depth must be positive".into());
                }
            }
            LearnerParams::Tree { depth, min_split } => {
                if depth == Depth::Max(0) {
                    return bad("max_depth must be positive".into());
                }
                if matches!(min_split, Some(s) if s < 2) {
                    return bad("min_split must be at least 2".into());
                }
            }
            LearnerParams::Knn { k, .. } => {
                if k == 0 {
                    return bad("knn requires K >= 1".into());
                }
            }
            LearnerParams::Lasso { lambda } | LearnerParams::Ridge { lambda } => {
                if !(lambda >= 0.0 && lambda.is_finite()) {
                    return bad(format!("regularization must be finite and >= 0, got {lambda}"));
                }
            }
            LearnerParams::ElasticNet { lambda, l1_ratio } => {
                if !(lambda >= 0.0 && lambda.is_finite()) {
                    return bad(format!("regularization must be finite and >= 0, got {lambda}"));
                }
                if !(0.0..=1.0).contains(&l1_ratio) {
                    return bad(format!("l1 ratio must lie in [0, 1], got {l1_ratio}"));
                }
            }
            LearnerParams::Pls { components } | LearnerParams::Pcr { components } => {
                if components == 0 {
                    return bad("at least one component is required".into());
                }
            }
        }
        Ok(())
    }
}

/// A named learner configuration, e.g. `RIDGE_2` or `KNN_4`.
#[derive(Debug, Clone, PartialEq)]
pub struct LearnerSpec {
    pub id: String,
    pub params: LearnerParams,
}

impl LearnerSpec {
    pub fn new(id: impl Into<String>, params: LearnerParams) -> Result<Self> {
        params.validate()?;
        Ok(Self {
            id: id.into(),
            params,
        })
    }

    pub fn family(&self) -> Family {
        self.params.family()
    }

    /// Parses one pool-file line: `ID family key=value ...`.
    pub fn parse_line(line: &str) -> Result<Self> {
        let mut tokens = line.split_whitespace();
        let id = tokens
            .next()
            .ok_or_else(|| Error::Config("empty learner line".into()))?;
        let family: Family = tokens
            .next()
            .ok_or_else(|| Error::Config(format!("learner {id} has no family")))?
            .parse()?;
        let mut kv = Vec::new();
        for tok in tokens {
            let (k, v) = tok
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("expected key=value, got `{tok}`")))?;
            kv.push((k, v));
        }
        let get = |key: &str| kv.iter().find(|(k, _)| *k == key).map(|(_, v)| *v);
        for (k, _) in &kv {
            let allowed: &[&str] = match family {
                Family::Bagging | Family::RandomForest | Family::ExtraTrees => &["trees", "max_depth"],
                Family::Tree => &["max_depth", "min_split"],
                Family::Knn => &["k", "weight"],
                Family::Lasso | Family::Ridge => &["lambda"],
                Family::ElasticNet => &["lambda", "alpha"],
                Family::Pls | Family::Pcr => &["components"],
            };
            if !allowed.contains(k) {
                return Err(Error::Config(format!(
                    "key `{k}` is not valid for family {}",
                    family.name()
                )));
            }
        }
        let usize_or = |key: &str, default: usize| -> Result<usize> {
            get(key).map_or(Ok(default), |v| {
                v.parse()
                    .map_err(|_| Error::Config(format!("`{key}` must be an integer, got `{v}`")))
            })
        };
        let f64_or = |key: &str, default: f64| -> Result<f64> {
            get(key).map_or(Ok(default), |v| {
                v.parse()
                    .map_err(|_| Error::Config(format!("`{key}` must be a number, got `{v}`")))
            })
        };
        let depth = || -> Result<Depth> {
            match get("max_depth") {
                None | Some("default") | Some("none") => Ok(Depth::Default),
                Some(v) => v
                    .parse()
                    .map(Depth::Max)
                    .map_err(|_| Error::Config(format!("bad max_depth `{v}`"))),
            }
        };
        let params = match family {
            Family::Bagging => LearnerParams::Bagging {
                trees: usize_or("trees", 100)?,
                depth: depth()?,
            },
            Family::RandomForest => LearnerParams::RandomForest {
                trees: usize_or("trees", 100)?,
                depth: depth()?,
            },
            Family::ExtraTrees => LearnerParams::ExtraTrees {
                trees: usize_or("trees", 100)?,
                depth: depth()?,
            },
            Family::Tree => LearnerParams::Tree {
                depth: depth()?,
                min_split: get("min_split").map(|_| usize_or("min_split", 2)).transpose()?,
            },
            Family::Knn => LearnerParams::Knn {
                k: usize_or("k", 5)?,
                weighting: match get("weight").unwrap_or("uniform") {
                    "uniform" => KnnWeighting::Uniform,
                    "distance" => KnnWeighting::Distance,
                    other => {
                        return Err(Error::Config(format!(
                            "knn weight must be uniform or distance, got `{other}`"
                        )))
                    }
                },
            },
            Family::Lasso => LearnerParams::Lasso {
                lambda: f64_or("lambda", 1.0)?,
            },
            Family::Ridge => LearnerParams::Ridge {
                lambda: f64_or("lambda", 1.0)?,
            },
            Family::ElasticNet => LearnerParams::ElasticNet {
                lambda: f64_or("lambda", DEFAULT_EN_LAMBDA)?,
                l1_ratio: f64_or("alpha", DEFAULT_L1_RATIO)?,
            },
            Family::Pls => LearnerParams::Pls {
                components: usize_or("components", 2)?,
            },
            Family::Pcr => LearnerParams::Pcr {
                components: usize_or("components", 2)?,
            },
        };
        LearnerSpec::new(id, params)
    }
}

impl fmt::Display for LearnerSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let depth = |d: Depth| match d {
            Depth::Default => "default".to_string(),
            Depth::Max(d) => d.to_string(),
        };
        write!(f, "{} {}", self.id, self.family().name())?;
        match &self.params {
            LearnerParams::Bagging { trees, depth: d }
            | LearnerParams::RandomForest { trees, depth: d }
            | LearnerParams::ExtraTrees { trees, depth: d } => {
                write!(f, " trees={trees} max_depth={}", depth(*d))
            }
            LearnerParams::Tree { depth: d, min_split } => {
                write!(f, " max_depth={}", depth(*d))?;
                if let Some(s) = min_split {
                    write!(f, " min_split={s}")?;
                }
                Ok(())
            }
            LearnerParams::Knn { k, weighting } => write!(f, " k={k} weight={}", weighting.name()),
            LearnerParams::Lasso { lambda } | LearnerParams::Ridge { lambda } => {
                write!(f, " lambda={lambda}")
            }
            LearnerParams::ElasticNet { lambda, l1_ratio } => {
                write!(f, " lambda={lambda} alpha={l1_ratio}")
            }
            LearnerParams::Pls { components } | LearnerParams::Pcr { components } => {
                write!(f, " components={components}")
            }
        }
    }
}

/// Ordered learner configurations with unique ids.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelPool {
    specs: Vec<LearnerSpec>,
}

impl ModelPool {
    pub fn new(specs: Vec<LearnerSpec>) -> Result<Self> {
        let mut seen = std::collections::HashSet::new();
        for s in &specs {
            if !seen.insert(s.id.as_str()) {
                return Err(Error::Config(format!("duplicate learner id {}", s.id)));
            }
        }
        if specs.is_empty() {
            return Err(Error::Config("model pool is empty".into()));
        }
        Ok(Self { specs })
    }

    pub fn specs(&self) -> &[LearnerSpec] {
        &self.specs
    }

    pub fn len(&self) -> usize {
        self.specs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.specs.is_empty()
    }

    pub fn get(&self, id: &str) -> Option<&LearnerSpec> {
        self.specs.iter().find(|s| s.id == id)
    }

    /// Reads a pool file; blank lines and `#` comments are skipped.
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self> {
        let specs = text
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty() && !l.starts_with('#'))
            .map(LearnerSpec::parse_line)
            .collect::<Result<Vec<_>>>()?;
        Self::new(specs)
    }
}

/// The 39-member default pool: every learner configuration of the reference
/// experiment except projection pursuit regression.
pub fn default_pool() -> ModelPool {
    use LearnerParams as P;
    let mut specs = Vec::with_capacity(39);
    let mut push = |id: String, p: LearnerParams| specs.push(LearnerSpec { id, params: p });

    for (i, trees) in [50, 100].into_iter().enumerate() {
        push(
            format!("BAGGING_{}", i + 1),
            P::Bagging {
                trees,
                depth: Depth::Default,
            },
        );
    }
    let forest_grid = [
        (50, Depth::Default),
        (50, Depth::Max(3)),
        (50, Depth::Max(5)),
        (100, Depth::Default),
        (100, Depth::Max(3)),
        (100, Depth::Max(5)),
    ];
    for (i, &(trees, depth)) in forest_grid.iter().enumerate() {
        push(format!("RF_{}", i + 1), P::RandomForest { trees, depth });
    }
    for (i, &(trees, depth)) in forest_grid.iter().enumerate() {
        push(format!("ET_{}", i + 1), P::ExtraTrees { trees, depth });
    }
    let ks = [1, 5, 10, 20, 50];
    for (w, weighting) in [KnnWeighting::Uniform, KnnWeighting::Distance].into_iter().enumerate() {
        for (i, &k) in ks.iter().enumerate() {
            push(format!("KNN_{}", w * ks.len() + i + 1), P::Knn { k, weighting });
        }
    }
    let lambdas = [1.0, 0.75, 0.5, 0.25];
    for (i, &lambda) in lambdas.iter().enumerate() {
        push(format!("LASSO_{}", i + 1), P::Lasso { lambda });
    }
    for (i, &lambda) in lambdas.iter().enumerate() {
        push(format!("RIDGE_{}", i + 1), P::Ridge { lambda });
    }
    push(
        "EN".into(),
        P::ElasticNet {
            lambda: DEFAULT_EN_LAMBDA,
            l1_ratio: DEFAULT_L1_RATIO,
        },
    );
    for (i, components) in [2, 3, 5].into_iter().enumerate() {
        push(format!("PLS_{}", i + 1), P::Pls { components });
    }
    for (i, components) in [2, 3, 5].into_iter().enumerate() {
        push(format!("PCR_{}", i + 1), P::Pcr { components });
    }
    ModelPool { specs }
}

#[derive(Debug, Clone)]
enum ModelState {
    Linear(LinearModel),
    Knn(KnnModel),
    Forest(Forest),
}

/// A trained multi-output regressor. Immutable after [`fit`].
#[derive(Debug, Clone)]
pub struct FittedModel {
    spec: LearnerSpec,
    input_dim: usize,
    output_dim: usize,
    state: ModelState,
}

impl FittedModel {
    pub fn spec(&self) -> &LearnerSpec {
        &self.spec
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn output_dim(&self) -> usize {
        self.output_dim
    }

    /// Coefficients for linear-in-inputs learners (ridge, lasso, elastic net, PLS, PCR).
    pub fn linear(&self) -> Option<&LinearModel> {
        match &self.state {
            ModelState::Linear(m) => Some(m),
            _ => None,
        }
    }

    pub fn predict(&self, x: &Matrix) -> Result<Matrix> {
        if x.cols() != self.input_dim && x.rows() > 0 {
            return Err(Error::shape(
                format!("{} input columns", self.input_dim),
                x.cols(),
            ));
        }
        let mut out = Matrix::zeros(x.rows(), self.output_dim);
        for i in 0..x.rows() {
            self.predict_into(x.row(i), out.row_mut(i));
        }
        Ok(out)
    }

    pub fn predict_row(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.input_dim {
            return Err(Error::shape(format!("{} inputs", self.input_dim), x.len()));
        }
        let mut out = vec![0.0; self.output_dim];
        self.predict_into(x, &mut out);
        Ok(out)
    }

    fn predict_into(&self, x: &[f64], out: &mut [f64]) {
        match &self.state {
            ModelState::Linear(m) => m.predict_into(x, out),
            ModelState::Knn(m) => m.predict_into(x, out),
            ModelState::Forest(m) => m.predict_into(x, out),
        }
    }
}

/// Fits `spec` on `data`. `seed` only affects the tree families.
pub fn fit(spec: &LearnerSpec, data: &EmbeddedDataset, seed: u64) -> Result<FittedModel> {
    if !data.x.all_finite() || !data.y.all_finite() {
        return Err(Error::Numeric(format!(
            "non-finite training data for {}",
            spec.id
        )));
    }
    let state = match &spec.params {
        LearnerParams::Ridge { lambda } => ModelState::Linear(fit_ridge(&data.x, &data.y, *lambda)?),
        LearnerParams::Lasso { lambda } => {
            ModelState::Linear(fit_elastic_net(&data.x, &data.y, *lambda, 1.0)?)
        }
        LearnerParams::ElasticNet { lambda, l1_ratio } => {
            ModelState::Linear(fit_elastic_net(&data.x, &data.y, *lambda, *l1_ratio)?)
        }
        LearnerParams::Knn { k, weighting } => {
            ModelState::Knn(KnnModel::fit(&data.x, &data.y, *k, *weighting)?)
        }
        LearnerParams::Pcr { components } => {
            ModelState::Linear(fit_pcr(&data.x, &data.y, *components)?)
        }
        LearnerParams::Pls { components } => {
            ModelState::Linear(fit_pls(&data.x, &data.y, *components)?)
        }
        LearnerParams::Tree { .. }
        | LearnerParams::Bagging { .. }
        | LearnerParams::RandomForest { .. }
        | LearnerParams::ExtraTrees { .. } => {
            ModelState::Forest(fit_tree_family(&spec.params, &data.x, &data.y, seed)?)
        }
    };
    Ok(FittedModel {
        spec: spec.clone(),
        input_dim: data.x.cols(),
        output_dim: data.y.cols(),
        state,
    })
}

fn fit_tree_family(params: &LearnerParams, x: &Matrix, y: &Matrix, seed: u64) -> Result<Forest> {
    if x.rows() < 2 {
        return Err(Error::InsufficientData {
            required: 2,
            actual: x.rows(),
        });
    }
    let q = x.cols();
    let sqrt_features = (q as f64).sqrt().ceil() as usize;
    let (trees, depth, bootstrap, max_features, splitter, min_split) = match *params {
        LearnerParams::Tree { depth, min_split } => (1, depth, false, q, Splitter::Best, min_split),
        LearnerParams::Bagging { trees, depth } => (trees, depth, true, q, Splitter::Best, None),
        LearnerParams::RandomForest { trees, depth } => {
            (trees, depth, true, sqrt_features, Splitter::Best, None)
        }
        LearnerParams::ExtraTrees { trees, depth } => {
            (trees, depth, false, sqrt_features, Splitter::Random, None)
        }
        _ => unreachable!("not a tree family"),
    };
    let tree_params = TreeParams {
        max_depth: match depth {
            Depth::Default => None,
            Depth::Max(d) => Some(d),
        },
        min_samples_split: min_split.unwrap_or(match depth {
            Depth::Default => DEFAULT_MIN_SAMPLES_SPLIT,
            Depth::Max(_) => 2,
        }),
        max_features: max_features.max(1),
        splitter,
    };
    Ok(Forest::fit(x, y, &tree_params, trees, bootstrap, seed))
}
