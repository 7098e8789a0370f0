//! Experiment configuration files.
//!
//! One JSON file describes one experiment. Unknown keys are rejected at every
//! level; see `configs/README.md` for the schema.

use std::path::{Path, PathBuf};

use infofilter::bridge::GridSpec;
use infofilter::{
    DensityVector, DiscreteMeasureSpace, LinearGaussianModel, ObservationMap, RateGenerator, ScalarDiffusionModel,
    ScalarFn,
};
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Experiment {
    GeometryCheck,
    Wonham,
    ExpFilter,
    KalmanBucy,
    QvInfo,
    BridgeDensity,
    Decomposition,
}

impl Experiment {
    pub fn name(self) -> &'static str {
        match self {
            Experiment::GeometryCheck => "geometry-check",
            Experiment::Wonham => "wonham",
            Experiment::ExpFilter => "exp-filter",
            Experiment::KalmanBucy => "kalman-bucy",
            Experiment::QvInfo => "qv-info",
            Experiment::BridgeDensity => "bridge-density",
            Experiment::Decomposition => "decomposition",
        }
    }

    fn model_kind(self) -> &'static str {
        match self {
            Experiment::GeometryCheck => "geometry",
            Experiment::Wonham | Experiment::ExpFilter | Experiment::QvInfo => "finite",
            Experiment::KalmanBucy => "linear_gaussian",
            Experiment::BridgeDensity => "scalar_diffusion",
            Experiment::Decomposition => "tables",
        }
    }

    fn is_dynamic(self) -> bool {
        !matches!(self, Experiment::GeometryCheck | Experiment::Decomposition)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: Experiment,
    pub model: ModelConfig,
    pub numerics: Numerics,
    pub rng: RngBlock,
    pub output: OutputBlock,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum ModelConfig {
    Geometry(GeometryModel),
    Finite(FiniteModel),
    LinearGaussian(LinearGaussianConfig),
    ScalarDiffusion(ScalarDiffusionConfig),
    Tables(TablesModel),
}

impl ModelConfig {
    fn kind(&self) -> &'static str {
        match self {
            ModelConfig::Geometry(_) => "geometry",
            ModelConfig::Finite(_) => "finite",
            ModelConfig::LinearGaussian(_) => "linear_gaussian",
            ModelConfig::ScalarDiffusion(_) => "scalar_diffusion",
            ModelConfig::Tables(_) => "tables",
        }
    }
}

/// Random spaces for the chart and divergence checks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeometryModel {
    pub sizes: Vec<usize>,
    /// Random `(P, u, v)` triples for the mixed-derivative check.
    pub n_metric_cases: usize,
}

/// Finite-state chain observed in white noise.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FiniteModel {
    /// Reference weights; uniform when absent.
    #[serde(default)]
    pub weights: Option<Vec<f64>>,
    /// `rates[from][to]`, rows summing to zero.
    pub rates: Vec<Vec<f64>>,
    /// `observation[k][x] = h^k(x)`.
    pub observation: Vec<Vec<f64>>,
    /// Initial probabilities of the states; uniform when absent.
    #[serde(default)]
    pub initial: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinearGaussianConfig {
    pub drift: Vec<Vec<f64>>,
    pub diffusion: Vec<Vec<f64>>,
    pub observation: Vec<Vec<f64>>,
    pub mean0: Vec<f64>,
    pub cov0: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum ScalarFnConfig {
    Zero,
    Constant(f64),
    Tanh { amplitude: f64, rate: f64 },
    Sin { amplitude: f64, frequency: f64 },
}

impl From<ScalarFnConfig> for ScalarFn {
    fn from(c: ScalarFnConfig) -> Self {
        match c {
            ScalarFnConfig::Zero => ScalarFn::Zero,
            ScalarFnConfig::Constant(v) => ScalarFn::Constant(v),
            ScalarFnConfig::Tanh { amplitude, rate } => ScalarFn::Tanh { amplitude, rate },
            ScalarFnConfig::Sin { amplitude, frequency } => ScalarFn::Sin { amplitude, frequency },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScalarDiffusionConfig {
    pub drift: ScalarFnConfig,
    pub observation: ScalarFnConfig,
    pub prior_var: f64,
    /// Declared bound on `|b| + |b'| + |h|`.
    pub bound: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TablesModel {
    /// Largest alphabet size of each of `U`, `V`, `W`.
    pub max_outcomes: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Numerics {
    #[serde(default)]
    pub t_end: Option<f64>,
    #[serde(default)]
    pub dt: Option<f64>,
    pub n_replicates: usize,
    /// Successive dt-doublings compared by `exp-filter`.
    #[serde(default)]
    pub refinements: Option<usize>,
    #[serde(default)]
    pub grid: Option<GridConfig>,
}

/// Evaluation grid and Monte-Carlo settings for `bridge-density`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub x_min: f64,
    pub step: f64,
    pub n_points: usize,
    pub n_bridges: usize,
    pub n_sub: usize,
    pub solver_half_width: f64,
    pub solver_dx: f64,
    pub solver_substeps: usize,
}

impl GridConfig {
    pub fn points(&self) -> Vec<f64> {
        (0..self.n_points).map(|i| self.x_min + self.step * i as f64).collect()
    }

    pub fn solver(&self) -> GridSpec {
        GridSpec { half_width: self.solver_half_width, dx: self.solver_dx, substeps: self.solver_substeps }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RngBlock {
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputBlock {
    pub directory: PathBuf,
}

/// Environment variable that replaces `output.directory`.
pub const OUTPUT_DIR_ENV: &str = "INFOFILTER_OUTPUT_DIR";

/// Finite model resolved into library types.
pub struct FiniteParts {
    pub space: DiscreteMeasureSpace,
    pub gen: RateGenerator,
    pub h: ObservationMap,
    pub p0: DensityVector,
}

fn matrix(rows: &[Vec<f64>], what: &str) -> Result<DMatrix<f64>, String> {
    let n = rows.len();
    let m = rows.first().map_or(0, |r| r.len());
    if n == 0 || m == 0 || rows.iter().any(|r| r.len() != m) {
        return Err(format!("{what} must be a non-empty rectangular matrix"));
    }
    Ok(DMatrix::from_fn(n, m, |i, j| rows[i][j]))
}

impl FiniteModel {
    pub fn resolve(&self) -> Result<FiniteParts, String> {
        let rates = matrix(&self.rates, "model.finite.rates")?;
        let m = rates.nrows();
        let space = match &self.weights {
            Some(w) if w.len() != m => return Err("model.finite.weights must have one entry per state".into()),
            Some(w) => DiscreteMeasureSpace::from_weights(w).map_err(|e| format!("model.finite.weights: {e}"))?,
            None => DiscreteMeasureSpace::uniform(m),
        };
        let gen = RateGenerator::from_transition_rates(rates).map_err(|e| format!("model.finite.rates: {e}"))?;
        if self.observation.iter().any(|c| c.len() != m) {
            return Err("model.finite.observation channels must have one entry per state".into());
        }
        let h = ObservationMap::new(self.observation.clone()).map_err(|e| format!("model.finite.observation: {e}"))?;
        let p0 = match &self.initial {
            Some(p) if p.len() != m => return Err("model.finite.initial must have one entry per state".into()),
            Some(p) => {
                if p.iter().any(|v| !(*v > 0.0 && v.is_finite())) {
                    return Err("model.finite.initial must be strictly positive".into());
                }
                let total: f64 = p.iter().sum();
                let dens = p.iter().zip(space.weights()).map(|(a, w)| a / (total * w)).collect();
                space.normalize(dens).map_err(|e| format!("model.finite.initial: {e}"))?
            }
            None => space.unit_density(),
        };
        Ok(FiniteParts { space, gen, h, p0 })
    }
}

impl LinearGaussianConfig {
    pub fn resolve(&self) -> Result<LinearGaussianModel, String> {
        LinearGaussianModel::new(
            matrix(&self.drift, "model.linear_gaussian.drift")?,
            matrix(&self.diffusion, "model.linear_gaussian.diffusion")?,
            matrix(&self.observation, "model.linear_gaussian.observation")?,
            DVector::from_vec(self.mean0.clone()),
            matrix(&self.cov0, "model.linear_gaussian.cov0")?,
        )
        .map_err(|e| format!("model.linear_gaussian: {e}"))
    }
}

impl ScalarDiffusionConfig {
    pub fn resolve(&self) -> Result<ScalarDiffusionModel, String> {
        ScalarDiffusionModel::new(self.drift.into(), self.observation.into(), self.prior_var, self.bound)
            .map_err(|e| format!("model.scalar_diffusion: {e}"))
    }
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        serde_json::from_str(text).map_err(|e| CliError::Validation(vec![e.to_string()]))
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }

    /// SHA-256 of the canonical serialisation, as hex.
    pub fn hash(&self) -> String {
        let canonical = serde_json::to_string(self).expect("config serialises");
        let digest = Sha256::digest(canonical.as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn output_dir(&self) -> PathBuf {
        match std::env::var_os(OUTPUT_DIR_ENV) {
            Some(dir) if !dir.is_empty() => PathBuf::from(dir),
            _ => self.output.directory.clone(),
        }
    }

    pub fn t_end(&self) -> f64 {
        self.numerics.t_end.unwrap_or(0.0)
    }

    pub fn dt(&self) -> f64 {
        self.numerics.dt.unwrap_or(0.0)
    }

    pub fn n_steps(&self) -> usize {
        (self.t_end() / self.dt()).round() as usize
    }

    /// Every schema and range problem, without running anything.
    pub fn check(&self) -> Vec<String> {
        let mut errors = Vec::new();
        let exp = self.experiment;
        if self.model.kind() != exp.model_kind() {
            errors.push(format!(
                "experiment {} needs a model.{} block, found model.{}",
                exp.name(),
                exp.model_kind(),
                self.model.kind()
            ));
        }
        let num = &self.numerics;
        if exp.is_dynamic() {
            match num.t_end {
                None => errors.push("missing field `numerics.t_end`".into()),
                Some(t) if !(t > 0.0 && t.is_finite()) => {
                    errors.push(format!("numerics.t_end must be positive and finite, got {t}"))
                }
                _ => {}
            }
            match num.dt {
                None => errors.push("missing field `numerics.dt`".into()),
                Some(dt) if !(dt > 0.0 && dt.is_finite()) => {
                    errors.push(format!("numerics.dt must be positive and finite, got {dt}"))
                }
                _ => {}
            }
            if let (Some(t), Some(dt)) = (num.t_end, num.dt) {
                if t > 0.0 && dt > 0.0 {
                    let k = t / dt;
                    if dt > t || (k - k.round()).abs() > 1e-9 * k {
                        errors.push(format!("numerics.t_end = {t} is not a whole number of steps of dt = {dt}"));
                    }
                }
            }
        }
        let min_reps = if matches!(exp, Experiment::QvInfo) { 2 } else { 1 };
        if num.n_replicates < min_reps {
            errors.push(format!("numerics.n_replicates must be at least {min_reps}"));
        }
        if exp == Experiment::ExpFilter {
            match num.refinements {
                None => errors.push("missing field `numerics.refinements`".into()),
                Some(r) if !(1..=8).contains(&r) => errors.push("numerics.refinements must be in 1..=8".into()),
                Some(r) => {
                    let n = self.n_steps();
                    if n > 0 && n % (1 << r) != 0 {
                        errors.push(format!("the step count {n} must be divisible by 2^refinements"));
                    }
                }
            }
        }
        if exp == Experiment::BridgeDensity {
            match &num.grid {
                None => errors.push("missing field `numerics.grid`".into()),
                Some(g) => errors.extend(self.check_grid(g)),
            }
        }
        match &self.model {
            ModelConfig::Geometry(g) => {
                if g.sizes.is_empty() || g.sizes.iter().any(|n| *n < 2) {
                    errors.push("model.geometry.sizes must be non-empty with every size at least 2".into());
                }
                if g.n_metric_cases == 0 {
                    errors.push("model.geometry.n_metric_cases must be positive".into());
                }
            }
            ModelConfig::Finite(f) => match f.resolve() {
                Err(e) => errors.push(e),
                Ok(parts) if exp == Experiment::QvInfo && parts.h.dim() > 3 && parts.gen.is_zero() => {
                    errors.push("the channel oracle handles at most three observation channels".into())
                }
                Ok(_) => {}
            },
            ModelConfig::LinearGaussian(l) => {
                if let Err(e) = l.resolve() {
                    errors.push(e);
                }
            }
            ModelConfig::ScalarDiffusion(s) => match s.resolve() {
                Err(e) => errors.push(e),
                Ok(model) => {
                    if let Some(g) = &num.grid {
                        if let Err(e) = model.check_bounds(&g.points()) {
                            errors.push(format!("numerics.grid: {e}"));
                        }
                    }
                }
            },
            ModelConfig::Tables(t) => {
                if t.max_outcomes < 2 {
                    errors.push("model.tables.max_outcomes must be at least 2".into());
                }
            }
        }
        errors
    }

    fn check_grid(&self, g: &GridConfig) -> Vec<String> {
        let mut errors = Vec::new();
        if g.n_points < 2 || !(g.step > 0.0) || !g.x_min.is_finite() {
            errors.push("numerics.grid needs at least two points and a positive step".into());
        }
        if g.n_bridges < 2 {
            errors.push("numerics.grid.n_bridges must be at least 2".into());
        }
        if g.n_sub < 2 {
            errors.push("numerics.grid.n_sub must be at least 2".into());
        } else if self.n_steps() > 0 && self.n_steps() % g.n_sub != 0 {
            errors.push(format!("the step count {} must be divisible by numerics.grid.n_sub", self.n_steps()));
        }
        if !(g.solver_dx > 0.0 && g.solver_half_width > 0.0) || g.solver_substeps == 0 {
            errors.push("numerics.grid solver settings must be positive".into());
        } else {
            let pts = g.points();
            let hi = pts.last().copied().unwrap_or(0.0);
            if g.x_min < -g.solver_half_width || hi > g.solver_half_width {
                errors.push("numerics.grid extends past the solver grid".into());
            }
        }
        errors
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let errors = self.check();
        if errors.is_empty() {
            Ok(())
        } else {
            Err(CliError::Validation(errors))
        }
    }
}

/// Schema and range report for the file at `path`; never fails.
pub fn validate_file(path: &Path) -> Vec<String> {
    match std::fs::read_to_string(path) {
        Err(e) => vec![format!("{}: {e}", path.display())],
        Ok(text) => validate_text(&text),
    }
}

pub fn validate_text(text: &str) -> Vec<String> {
    match ExperimentConfig::parse(text) {
        Err(CliError::Validation(errors)) => errors,
        Err(e) => vec![e.to_string()],
        Ok(cfg) => cfg.check(),
    }
}
