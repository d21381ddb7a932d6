use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use datapricer_core::bayes::{Dataset, GaussianBelief, LinearStatisticDpp, NoiseModel};
use datapricer_core::verification::TypeGrid;

use crate::error::{CliError, CliResult};

/// A complete experiment description, read from one TOML file.
#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub dimension: usize,
    #[serde(default)]
    pub prior: PriorSpec,
    pub data: Option<DataSpec>,
    pub synthetic: Option<SyntheticSpec>,
    pub query: Option<QuerySpec>,
    pub mechanism: Option<MechanismSpec>,
    pub grid: Option<GridSpec>,
    #[serde(default)]
    pub pipeline: PipelineSpec,
    #[serde(default)]
    pub output: OutputSpec,
    /// Directory that relative paths are resolved against.
    #[serde(skip)]
    pub base_dir: PathBuf,
    /// SHA-256 of the source text, hex encoded.
    #[serde(skip)]
    pub source_hash: String,
}

#[derive(Debug, Clone, Default, Deserialize, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PriorSpec {
    #[default]
    Standard,
    Explicit {
        mean: Vec<f64>,
        covariance: Vec<Vec<f64>>,
    },
}

/// Noise standard deviation: one value for all rows, one per row, or a
/// function of the direction on the unit sphere.
#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(untagged)]
pub enum NoiseSpec {
    Constant(f64),
    PerRow(Vec<f64>),
    Function { function: String, params: Vec<f64> },
}

impl Default for NoiseSpec {
    fn default() -> Self {
        NoiseSpec::Constant(1.0)
    }
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct DataSpec {
    pub csv: Option<PathBuf>,
    pub rows: Option<Vec<Vec<f64>>>,
    pub responses: Option<Vec<f64>>,
    pub noise: Option<NoiseSpec>,
    #[serde(default)]
    pub statistics: Vec<StatisticSpec>,
}

/// A derived statistic: each row of `weights` combines the raw records.
#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct StatisticSpec {
    pub name: String,
    pub weights: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(tag = "design", rename_all = "snake_case", deny_unknown_fields)]
pub enum SyntheticSpec {
    /// Rows drawn i.i.d. from `N(0, I)`.
    Gaussian {
        records: usize,
        beta: Option<Vec<f64>>,
        #[serde(default)]
        noise: NoiseSpec,
        #[serde(default)]
        noiseless: bool,
    },
    /// Fixed rows; only `β` and the responses are random.
    Explicit {
        rows: Vec<Vec<f64>>,
        beta: Option<Vec<f64>>,
        #[serde(default)]
        noise: NoiseSpec,
        #[serde(default)]
        noiseless: bool,
    },
    /// `arms[j]` copies of the basis vector `e_j`.
    Arms {
        arms: Vec<usize>,
        beta: Option<Vec<f64>>,
        #[serde(default)]
        noise: NoiseSpec,
        #[serde(default)]
        noiseless: bool,
    },
}

impl SyntheticSpec {
    pub fn beta(&self) -> Option<&[f64]> {
        match self {
            SyntheticSpec::Gaussian { beta, .. }
            | SyntheticSpec::Explicit { beta, .. }
            | SyntheticSpec::Arms { beta, .. } => beta.as_deref(),
        }
    }

    pub fn noise(&self) -> &NoiseSpec {
        match self {
            SyntheticSpec::Gaussian { noise, .. }
            | SyntheticSpec::Explicit { noise, .. }
            | SyntheticSpec::Arms { noise, .. } => noise,
        }
    }

    pub fn noiseless(&self) -> bool {
        match self {
            SyntheticSpec::Gaussian { noiseless, .. }
            | SyntheticSpec::Explicit { noiseless, .. }
            | SyntheticSpec::Arms { noiseless, .. } => *noiseless,
        }
    }
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct QuerySpec {
    pub x: Vec<f64>,
    #[serde(default = "default_samples")]
    pub samples: usize,
}

fn default_samples() -> usize {
    100_000
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum MechanismKind {
    Perfect,
    Svd,
    Mab,
    FullReveal,
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct MechanismSpec {
    pub kind: MechanismKind,
    /// Records generated per quote by the perfect mechanism.
    pub records: Option<usize>,
    /// Intrinsic noise of the perfect mechanism.
    pub noise: Option<NoiseSpec>,
    pub artificial_noise: Option<NoiseSpec>,
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum GridSpec {
    AngularMesh { resolution: usize },
    Fibonacci { count: usize },
    UniformRandom { count: usize, seed: Option<u64> },
    Basis,
    Explicit { points: Vec<Vec<f64>> },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Step {
    Value,
    Shapley,
    Coupling,
    Price,
    FirstBest,
    Kappa,
    VerifyIc,
    VerifyIr,
    AuditRegret,
    Impossibility,
    Envelope,
    Profile,
}

impl Step {
    pub fn name(self) -> &'static str {
        match self {
            Step::Value => "value",
            Step::Shapley => "shapley",
            Step::Coupling => "coupling",
            Step::Price => "price",
            Step::FirstBest => "first_best",
            Step::Kappa => "kappa",
            Step::VerifyIc => "verify_ic",
            Step::VerifyIr => "verify_ir",
            Step::AuditRegret => "audit_regret",
            Step::Impossibility => "impossibility",
            Step::Envelope => "envelope",
            Step::Profile => "profile",
        }
    }
}

#[derive(Debug, Clone, Default, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineSpec {
    #[serde(default)]
    pub steps: Vec<Step>,
    pub tolerance: Option<f64>,
    /// Random points and path pairs for the envelope step.
    pub envelope_points: Option<usize>,
    pub envelope_pairs: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Deserialize, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum PlotKind {
    RegretProfile,
    PaymentProfile,
    SurplusSplit,
}

impl PlotKind {
    pub fn name(self) -> &'static str {
        match self {
            PlotKind::RegretProfile => "regret_profile",
            PlotKind::PaymentProfile => "payment_profile",
            PlotKind::SurplusSplit => "surplus_split",
        }
    }

    pub fn parse(s: &str) -> CliResult<Self> {
        match s {
            "regret_profile" => Ok(PlotKind::RegretProfile),
            "payment_profile" => Ok(PlotKind::PaymentProfile),
            "surplus_split" => Ok(PlotKind::SurplusSplit),
            other => Err(CliError::input(format!("unknown plot kind `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Default, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSpec {
    pub record: Option<PathBuf>,
    pub plot_dir: Option<PathBuf>,
    #[serde(default)]
    pub plots: Vec<PlotKind>,
}

fn field(path: &str, msg: impl std::fmt::Display) -> CliError {
    CliError::input(format!("field `{path}`: {msg}")).at("config")
}

fn check_len(path: &str, v: &[f64], want: usize) -> CliResult<()> {
    if v.len() != want {
        return Err(field(path, format!("expected {want} entries, found {}", v.len())));
    }
    if let Some(i) = v.iter().position(|a| !a.is_finite()) {
        return Err(field(&format!("{path}[{i}]"), "must be finite"));
    }
    Ok(())
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str, base_dir: impl Into<PathBuf>) -> CliResult<Self> {
        let mut cfg: ExperimentConfig = toml::from_str(text)
            .map_err(|e| CliError::input(format!("cannot parse config: {e}")).at("config"))?;
        cfg.base_dir = base_dir.into();
        cfg.source_hash = sha256_hex(text.as_bytes());
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::input(format!("cannot read {}: {e}", path.display())).at("config"))?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::from_toml_str(&text, base)
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    pub fn validate(&self) -> CliResult<()> {
        let d = self.dimension;
        if d == 0 {
            return Err(field("dimension", "must be positive"));
        }
        if let PriorSpec::Explicit { mean, covariance } = &self.prior {
            check_len("prior.mean", mean, d)?;
            if covariance.len() != d {
                return Err(field("prior.covariance", format!("expected {d} rows, found {}", covariance.len())));
            }
            for (i, r) in covariance.iter().enumerate() {
                check_len(&format!("prior.covariance[{i}]"), r, d)?;
            }
        }
        if self.data.is_some() && self.synthetic.is_some() {
            return Err(field("data", "give either [data] or [synthetic], not both"));
        }
        if let Some(data) = &self.data {
            match (&data.csv, &data.rows) {
                (Some(_), Some(_)) => return Err(field("data", "give either `csv` or `rows`, not both")),
                (None, None) => return Err(field("data", "one of `csv` or `rows` is required")),
                (Some(_), None) => {
                    if data.responses.is_some() || data.noise.is_some() {
                        return Err(field("data", "`responses` and `noise` come from the CSV file"));
                    }
                }
                (None, Some(rows)) => {
                    for (i, r) in rows.iter().enumerate() {
                        check_len(&format!("data.rows[{i}]"), r, d)?;
                    }
                    if let Some(y) = &data.responses {
                        check_len("data.responses", y, rows.len())?;
                    }
                    if let Some(n) = &data.noise {
                        validate_noise("data.noise", n, Some(rows.len()), d)?;
                    }
                }
            }
            for (k, s) in data.statistics.iter().enumerate() {
                if s.weights.is_empty() {
                    return Err(field(&format!("data.statistics[{k}].weights"), "must have at least one row"));
                }
                if let Some(rows) = &data.rows {
                    for (i, w) in s.weights.iter().enumerate() {
                        check_len(&format!("data.statistics[{k}].weights[{i}]"), w, rows.len())?;
                    }
                }
            }
        }
        if let Some(s) = &self.synthetic {
            if let Some(b) = s.beta() {
                check_len("synthetic.beta", b, d)?;
            }
            let n = match s {
                SyntheticSpec::Gaussian { records, .. } => *records,
                SyntheticSpec::Explicit { rows, .. } => {
                    for (i, r) in rows.iter().enumerate() {
                        check_len(&format!("synthetic.rows[{i}]"), r, d)?;
                    }
                    rows.len()
                }
                SyntheticSpec::Arms { arms, .. } => {
                    if arms.len() != d {
                        return Err(field("synthetic.arms", format!("expected {d} entries, found {}", arms.len())));
                    }
                    arms.iter().sum()
                }
            };
            validate_noise("synthetic.noise", s.noise(), Some(n), d)?;
        }
        if let Some(q) = &self.query {
            check_len("query.x", &q.x, d)?;
            if q.x.iter().all(|v| *v == 0.0) {
                return Err(field("query.x", "must be nonzero"));
            }
        }
        if let Some(m) = &self.mechanism {
            if let Some(n) = &m.noise {
                validate_noise("mechanism.noise", n, None, d)?;
            }
            if let Some(n) = &m.artificial_noise {
                validate_noise_allow_zero("mechanism.artificial_noise", n, d)?;
            }
            if m.kind == MechanismKind::Perfect && m.records.is_none() {
                return Err(field("mechanism.records", "required for the perfect mechanism"));
            }
        }
        if let Some(GridSpec::Explicit { points }) = &self.grid {
            for (i, p) in points.iter().enumerate() {
                check_len(&format!("grid.points[{i}]"), p, d)?;
            }
        }
        if let Some(t) = self.pipeline.tolerance {
            if !(t >= 0.0) || !t.is_finite() {
                return Err(field("pipeline.tolerance", "must be a finite nonnegative number"));
            }
        }
        if self.output.plot_dir.is_none() && !self.output.plots.is_empty() {
            return Err(field("output.plot_dir", "required when `plots` is set"));
        }
        Ok(())
    }

    pub fn prior_belief(&self) -> CliResult<GaussianBelief> {
        match &self.prior {
            PriorSpec::Standard => Ok(GaussianBelief::standard(self.dimension)),
            PriorSpec::Explicit { mean, covariance } => {
                let d = self.dimension;
                let flat: Vec<f64> = covariance.iter().flatten().copied().collect();
                GaussianBelief::new(DVector::from_vec(mean.clone()), DMatrix::from_row_slice(d, d, &flat))
                    .map_err(|e| CliError::from(e).at("config"))
            }
        }
    }

    /// The dataset named by `[data]`, or generated from `[synthetic]`.
    pub fn dataset(&self) -> CliResult<Option<Dataset>> {
        if self.synthetic.is_some() {
            return crate::synthetic::generate_synthetic(self).map(Some);
        }
        let Some(spec) = &self.data else { return Ok(None) };
        let ds = if let Some(csv) = &spec.csv {
            let path = self.resolve(csv);
            let text = std::fs::read_to_string(&path)
                .map_err(|e| CliError::input(format!("cannot read {}: {e}", path.display())).at("data"))?;
            let ds = Dataset::from_csv_str(&text).map_err(|e| CliError::from(e).at("data"))?;
            if ds.dim() != self.dimension {
                return Err(field("data.csv", format!("has {} feature columns, dimension is {}", ds.dim(), self.dimension)));
            }
            ds
        } else {
            let rows = spec.rows.as_deref().unwrap_or_default();
            let noise = noise_per_row(spec.noise.as_ref().unwrap_or(&NoiseSpec::default()), rows, self.dimension)?;
            Dataset::from_rows_with_dim(self.dimension, rows, spec.responses.clone(), noise)
                .map_err(|e| CliError::from(e).at("data"))?
        };
        Ok(Some(ds))
    }

    pub fn statistics(&self, base: &Dataset) -> CliResult<Vec<(String, LinearStatisticDpp)>> {
        let Some(spec) = &self.data else { return Ok(Vec::new()) };
        spec.statistics
            .iter()
            .map(|s| {
                let k = s.weights.len();
                let flat: Vec<f64> = s.weights.iter().flatten().copied().collect();
                if flat.len() != k * base.len() {
                    return Err(field(&format!("statistics `{}`", s.name), format!("weights need {} columns", base.len())));
                }
                let w = DMatrix::from_row_slice(k, base.len(), &flat);
                let dpp = LinearStatisticDpp::new(base.clone(), w).map_err(|e| CliError::from(e).at("data"))?;
                Ok((s.name.clone(), dpp))
            })
            .collect()
    }

    pub fn query_vector(&self) -> CliResult<DVector<f64>> {
        let q = self.query.as_ref().ok_or_else(|| field("query", "section is required by this step"))?;
        Ok(DVector::from_vec(q.x.clone()))
    }

    pub fn type_grid(&self, seed: u64) -> CliResult<TypeGrid> {
        let d = self.dimension;
        let grid = match &self.grid {
            None => TypeGrid::default_for(d, seed),
            Some(GridSpec::AngularMesh { resolution }) => {
                if d != 2 {
                    return Err(field("grid.kind", "angular_mesh needs dimension 2"));
                }
                TypeGrid::angular_mesh(*resolution)
            }
            Some(GridSpec::Fibonacci { count }) => {
                if d != 3 {
                    return Err(field("grid.kind", "fibonacci needs dimension 3"));
                }
                TypeGrid::fibonacci_sphere(*count)
            }
            Some(GridSpec::UniformRandom { count, seed: s }) => TypeGrid::uniform_random(d, *count, s.unwrap_or(seed)),
            Some(GridSpec::Basis) => TypeGrid::basis(d),
            Some(GridSpec::Explicit { points }) => {
                TypeGrid::explicit(points.iter().map(|p| DVector::from_vec(p.clone())).collect())
            }
        };
        grid.map_err(|e| CliError::from(e).at("grid"))
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

fn validate_noise(path: &str, n: &NoiseSpec, rows: Option<usize>, d: usize) -> CliResult<()> {
    match n {
        NoiseSpec::Constant(s) => {
            if !(*s > 0.0) || !s.is_finite() {
                return Err(field(path, format!("noise standard deviation must be positive, got {s}")));
            }
        }
        NoiseSpec::PerRow(v) => {
            let Some(n) = rows else {
                return Err(field(path, "per-row noise needs a dataset"));
            };
            if v.len() != n {
                return Err(field(path, format!("expected {n} entries, found {}", v.len())));
            }
            if let Some(i) = v.iter().position(|s| !(*s > 0.0) || !s.is_finite()) {
                return Err(field(&format!("{path}[{i}]"), format!("noise standard deviation must be positive, got {}", v[i])));
            }
        }
        NoiseSpec::Function { .. } => {
            noise_model(path, n, d)?;
        }
    }
    Ok(())
}

fn validate_noise_allow_zero(path: &str, n: &NoiseSpec, d: usize) -> CliResult<()> {
    match n {
        NoiseSpec::Constant(s) if *s == 0.0 => Ok(()),
        _ => validate_noise(path, n, None, d),
    }
}

/// A noise function of the direction: `constant` with `[σ]`, or `affine`
/// with `[a, b₁, …, b_d]` meaning `σ(u) = a + ⟨b, u⟩` (requires `a > ‖b‖`).
pub fn noise_model(path: &str, n: &NoiseSpec, d: usize) -> CliResult<NoiseModel> {
    match n {
        NoiseSpec::Constant(s) => Ok(NoiseModel::constant(*s)),
        NoiseSpec::PerRow(_) => Err(field(path, "per-row noise is not a function of the type")),
        NoiseSpec::Function { function, params } => match function.as_str() {
            "constant" => match params.as_slice() {
                [s] if *s > 0.0 && s.is_finite() => Ok(NoiseModel::constant(*s)),
                _ => Err(field(path, "`constant` takes one positive parameter")),
            },
            "affine" => {
                if params.len() != d + 1 {
                    return Err(field(path, format!("`affine` takes {} parameters, found {}", d + 1, params.len())));
                }
                let slope = params[1..].to_vec();
                let norm = slope.iter().map(|v| v * v).sum::<f64>().sqrt();
                if !(params[0] > norm) {
                    return Err(field(path, "`affine` needs offset larger than the slope norm"));
                }
                Ok(NoiseModel::affine(params[0], slope))
            }
            other => Err(field(path, format!("unknown noise function `{other}`"))),
        },
    }
}

/// Per-row standard deviations; functions are evaluated as `‖x‖·σ(x/‖x‖)`.
pub fn noise_per_row(n: &NoiseSpec, rows: &[Vec<f64>], d: usize) -> CliResult<Vec<f64>> {
    match n {
        NoiseSpec::Constant(s) => Ok(vec![*s; rows.len()]),
        NoiseSpec::PerRow(v) => Ok(v.clone()),
        NoiseSpec::Function { .. } => {
            let m = noise_model("noise", n, d)?;
            rows.iter()
                .enumerate()
                .map(|(i, r)| {
                    let x = DVector::from_vec(r.clone());
                    if x.norm() == 0.0 {
                        return Err(field(&format!("rows[{i}]"), "zero row has no direction for the noise function"));
                    }
                    Ok(m.stddev(&x))
                })
                .collect()
        }
    }
}
