//! Experiment configuration: a TOML document with fixed sections.
//!
//! ```toml
//! kind = "variational_ergodic"
//! operator = "lazy_walk(64)"
//!
//! [params]
//! p = 2.0
//! q = 3.0
//! r = 2.0
//!
//! [ensemble]
//! count = 200
//! seed = 7
//! ```
//!
//! Omitted keys take their defaults. [`ExperimentConfig::canonical`] writes
//! every key back in a fixed order, and parsing that output reproduces it
//! byte for byte.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Result, VarlabError};
use crate::fixtures::{MatrixFile, WeightFile};
use crate::operators::builtins::parse_operator;
use crate::operators::{build_regular_operator, Generator, Operator};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    #[serde(rename = "variational_Z")]
    VariationalZ,
    VariationalErgodic,
    VariationalSemigroupDiscrete,
    VariationalSemigroupContinuous,
    Maximal,
    SquareFunction,
    JumpProfile,
    Convergence,
    WeightedVariational,
    Ell1Probe,
}

impl ExperimentKind {
    pub fn name(self) -> &'static str {
        match self {
            ExperimentKind::VariationalZ => "variational_Z",
            ExperimentKind::VariationalErgodic => "variational_ergodic",
            ExperimentKind::VariationalSemigroupDiscrete => "variational_semigroup_discrete",
            ExperimentKind::VariationalSemigroupContinuous => "variational_semigroup_continuous",
            ExperimentKind::Maximal => "maximal",
            ExperimentKind::SquareFunction => "square_function",
            ExperimentKind::JumpProfile => "jump_profile",
            ExperimentKind::Convergence => "convergence",
            ExperimentKind::WeightedVariational => "weighted_variational",
            ExperimentKind::Ell1Probe => "ell1_probe",
        }
    }

    /// Kinds whose inequality is stated for `q > 2`.
    pub fn needs_q_above_two(self) -> bool {
        matches!(
            self,
            ExperimentKind::VariationalZ
                | ExperimentKind::VariationalErgodic
                | ExperimentKind::VariationalSemigroupDiscrete
                | ExperimentKind::VariationalSemigroupContinuous
                | ExperimentKind::JumpProfile
                | ExperimentKind::WeightedVariational
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EnsembleGenerator {
    Gaussian,
    Rademacher,
    Spikes,
    LowFrequency,
    /// The indicator of the first atom of Ω in every σ-column.
    Delta,
}

impl EnsembleGenerator {
    pub fn name(self) -> &'static str {
        match self {
            EnsembleGenerator::Gaussian => "gaussian",
            EnsembleGenerator::Rademacher => "rademacher",
            EnsembleGenerator::Spikes => "spikes",
            EnsembleGenerator::LowFrequency => "low_frequency",
            EnsembleGenerator::Delta => "delta",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Params {
    pub p: f64,
    pub q: f64,
    pub r: f64,
    pub m: usize,
    /// Permits `q ≤ 2` for kinds whose theorem needs `q > 2`.
    pub allow_q_override: bool,
    /// Extra exponents evaluated on the same ensemble.
    pub q_sweep: Vec<f64>,
}

impl Default for Params {
    fn default() -> Self {
        Params {
            p: 2.0,
            q: 3.0,
            r: 2.0,
            m: 0,
            allow_q_override: false,
            q_sweep: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SpaceConfig {
    /// Number of atoms of Σ (counting measure).
    pub sigma_dim: usize,
}

impl Default for SpaceConfig {
    fn default() -> Self {
        SpaceConfig { sigma_dim: 1 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EnsembleConfig {
    pub count: usize,
    /// Assigned to members round-robin.
    pub generators: Vec<EnsembleGenerator>,
    pub seed: u64,
}

impl Default for EnsembleConfig {
    fn default() -> Self {
        EnsembleConfig {
            count: 200,
            generators: vec![
                EnsembleGenerator::Gaussian,
                EnsembleGenerator::Rademacher,
                EnsembleGenerator::Spikes,
                EnsembleGenerator::LowFrequency,
            ],
            seed: 7,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridConfig {
    /// Largest index of discrete families.
    pub n_max: usize,
    pub t_min: f64,
    pub t_max: f64,
    /// Points of the logarithmic time grid.
    pub t_points: usize,
    /// Adds one geometric bisection round to the time grid.
    pub refine: bool,
    /// Horizon of the analyticity certificate.
    pub analyticity_n: usize,
}

impl Default for GridConfig {
    fn default() -> Self {
        GridConfig {
            n_max: 16,
            t_min: 1e-3,
            t_max: 1e2,
            t_points: 64,
            refine: true,
            analyticity_n: 64,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Tolerances {
    pub quad_tol: f64,
    /// Last-term share of a truncated square sum above which the run aborts.
    pub tail_ratio: f64,
    /// Relative last-quarter growth of the stability trace that still counts as saturated.
    pub saturation: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            quad_tol: 1e-10,
            tail_ratio: 1e-6,
            saturation: 0.05,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct JumpConfig {
    pub lambdas: Vec<f64>,
    pub ks: Vec<usize>,
    /// Random (member, ω, σ, λ) points re-checked against `λ^q N ≤ v_q^q`.
    pub spot_checks: usize,
}

impl Default for JumpConfig {
    fn default() -> Self {
        JumpConfig {
            lambdas: vec![0.05, 0.1, 0.2, 0.3, 0.4],
            ks: vec![1, 2, 4],
            spot_checks: 100,
        }
    }
}

/// Empty grids are chosen from the spectral gap.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ConvergenceConfig {
    /// Indices (or times) for the ergodic-average error `‖M f − P f‖`.
    pub mean_grid: Vec<f64>,
    /// Indices (or times) for the power error `‖T f − P f‖`.
    pub power_grid: Vec<f64>,
    /// Small times for `‖T_t f − f‖` (generators only).
    pub small_t_grid: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ProbeConfig {
    pub sigma_dims: Vec<usize>,
}

impl Default for ProbeConfig {
    fn default() -> Self {
        ProbeConfig {
            sigma_dims: vec![1, 2, 4, 8, 16, 32],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeightShape {
    Constant,
    /// 1 on the left half of ℤ_N, 2 on the right half.
    Step,
    /// `max(|n|, 1)^α` with `n` centred on ℤ_N; one run per exponent in `alphas`.
    Power,
    /// Read from `path`.
    File,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct WeightConfig {
    pub shape: WeightShape,
    pub alphas: Vec<f64>,
    pub path: String,
    pub max_len: usize,
}

impl Default for WeightConfig {
    fn default() -> Self {
        WeightConfig {
            shape: WeightShape::Constant,
            alphas: vec![0.0, 0.25, 0.5, 0.75, 0.9],
            path: String::new(),
            max_len: crate::weights::DEFAULT_MAX_LEN,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub kind: ExperimentKind,
    /// A built-in keyword such as `lazy_walk(64)`, or `kernel:PATH` /
    /// `generator:PATH` naming a matrix fixture relative to the config file.
    pub operator: String,
    #[serde(default)]
    pub params: Params,
    #[serde(default)]
    pub space: SpaceConfig,
    #[serde(default)]
    pub ensemble: EnsembleConfig,
    #[serde(default)]
    pub grid: GridConfig,
    #[serde(default)]
    pub tolerances: Tolerances,
    #[serde(default)]
    pub jump: JumpConfig,
    #[serde(default)]
    pub convergence: ConvergenceConfig,
    #[serde(default)]
    pub probe: ProbeConfig,
    #[serde(default)]
    pub weight: WeightConfig,
    /// Directory fixture paths are resolved against.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

fn config_error(e: impl std::fmt::Display) -> VarlabError {
    VarlabError::Config(e.to_string())
}

impl ExperimentConfig {
    /// A config with every section at its default.
    pub fn new(kind: ExperimentKind, operator: impl Into<String>) -> Self {
        ExperimentConfig {
            kind,
            operator: operator.into(),
            params: Params::default(),
            space: SpaceConfig::default(),
            ensemble: EnsembleConfig::default(),
            grid: GridConfig::default(),
            tolerances: Tolerances::default(),
            jump: JumpConfig::default(),
            convergence: ConvergenceConfig::default(),
            probe: ProbeConfig::default(),
            weight: WeightConfig::default(),
            base_dir: PathBuf::new(),
        }
    }

    /// Parses without validating. Syntax errors name the line and column.
    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(config_error)
    }

    /// Reads, parses and validates; fixture paths resolve against the file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| VarlabError::Config(format!("cannot read {}: {e}", path.display())))?;
        let mut cfg = Self::parse(&text)?;
        cfg.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        cfg.validate()?;
        Ok(cfg)
    }

    /// Every key in fixed order.
    pub fn canonical(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        let p = &self.params;
        if !(p.p > 1.0) || !p.p.is_finite() {
            return Err(config_error(format!("params.p must satisfy 1 < p < ∞, got {}", p.p)));
        }
        let qs = std::iter::once(p.q).chain(p.q_sweep.iter().copied());
        for q in qs {
            if !(q >= 1.0) || !q.is_finite() {
                return Err(config_error(format!("params.q must satisfy 1 ≤ q < ∞, got {q}")));
            }
            if self.kind.needs_q_above_two() && q <= 2.0 && !p.allow_q_override {
                return Err(config_error(format!(
                    "params.q = {q} violates the constraint q > 2 required by {}; set params.allow_q_override = true to run anyway",
                    self.kind.name()
                )));
            }
        }
        if self.kind == ExperimentKind::Ell1Probe {
            if p.r != 1.0 {
                return Err(config_error("params.r must be 1 for ell1_probe (the r = 2 arm runs alongside)"));
            }
        } else if !(p.r > 1.0) || !p.r.is_finite() {
            return Err(config_error(format!(
                "params.r must satisfy 1 < r < ∞ for {}, got {}",
                self.kind.name(),
                p.r
            )));
        }
        if self.space.sigma_dim == 0 {
            return Err(config_error("space.sigma_dim must be at least 1"));
        }
        if self.kind == ExperimentKind::WeightedVariational && self.space.sigma_dim != 1 {
            return Err(config_error("weighted_variational is scalar-valued: space.sigma_dim must be 1"));
        }
        let e = &self.ensemble;
        if e.count == 0 {
            return Err(config_error("ensemble.count must be at least 1"));
        }
        if e.generators.is_empty() {
            return Err(config_error("ensemble.generators must not be empty"));
        }
        let g = &self.grid;
        if g.n_max == 0 {
            return Err(config_error("grid.n_max must be at least 1"));
        }
        if !(g.t_min > 0.0 && g.t_max > g.t_min && g.t_max.is_finite()) {
            return Err(config_error("grid needs 0 < t_min < t_max < ∞"));
        }
        if g.t_points < 2 {
            return Err(config_error("grid.t_points must be at least 2"));
        }
        if g.analyticity_n == 0 {
            return Err(config_error("grid.analyticity_n must be at least 1"));
        }
        let t = &self.tolerances;
        if !(t.quad_tol > 0.0 && t.tail_ratio > 0.0 && t.saturation > 0.0) {
            return Err(config_error("tolerances must be positive"));
        }
        if self.jump.lambdas.iter().any(|l| !(*l > 0.0) || !l.is_finite()) {
            return Err(config_error("jump.lambdas must be positive"));
        }
        if self.jump.ks.contains(&0) {
            return Err(config_error("jump.ks must be positive"));
        }
        let c = &self.convergence;
        for (name, grid) in [("mean_grid", &c.mean_grid), ("power_grid", &c.power_grid), ("small_t_grid", &c.small_t_grid)] {
            if grid.iter().any(|x| !(*x > 0.0) || !x.is_finite()) || grid.windows(2).any(|w| w[1] <= w[0]) {
                return Err(config_error(format!("convergence.{name} must be positive and increasing")));
            }
        }
        if self.probe.sigma_dims.is_empty()
            || self.probe.sigma_dims.contains(&0)
            || self.probe.sigma_dims.windows(2).any(|w| w[1] <= w[0])
        {
            return Err(config_error("probe.sigma_dims must be positive and increasing"));
        }
        if self.weight.max_len == 0 {
            return Err(config_error("weight.max_len must be at least 1"));
        }
        if self.weight.alphas.iter().any(|a| !a.is_finite()) {
            return Err(config_error("weight.alphas must be finite"));
        }
        if self.weight.shape == WeightShape::File && self.weight.path.is_empty() {
            return Err(config_error("weight.path is required for shape = \"file\""));
        }
        let op = self.resolve_operator()?;
        if matches!(self.kind, ExperimentKind::VariationalZ | ExperimentKind::WeightedVariational) {
            let n = op.dim();
            if 4 * self.grid.n_max > n {
                return Err(config_error(format!(
                    "grid.n_max = {} exceeds N/4 = {} on ℤ_{n}",
                    self.grid.n_max,
                    n / 4
                )));
            }
        }
        Ok(())
    }

    /// Builds the configured operator.
    pub fn resolve_operator(&self) -> Result<Operator> {
        let spec = self.operator.trim();
        let fixture = |path: &str| -> Result<_> {
            let full = self.base_dir.join(path.trim());
            let text = std::fs::read_to_string(&full)
                .map_err(|e| VarlabError::Config(format!("cannot read fixture {}: {e}", full.display())))?;
            MatrixFile::parse(&text)?.into_square()
        };
        if let Some(path) = spec.strip_prefix("kernel:") {
            let (space, k) = fixture(path)?;
            Ok(Operator::Kernel(build_regular_operator(k, space)?))
        } else if let Some(path) = spec.strip_prefix("generator:") {
            let (space, a) = fixture(path)?;
            Ok(Operator::Generator(Generator::new(a, space)?))
        } else {
            parse_operator(spec)
        }
    }

    /// Reads `weight.path` relative to the config directory.
    pub fn read_weight_file(&self) -> Result<WeightFile> {
        let full = self.base_dir.join(&self.weight.path);
        let text = std::fs::read_to_string(&full)
            .map_err(|e| VarlabError::Config(format!("cannot read weight file {}: {e}", full.display())))?;
        WeightFile::parse(&text)
    }
}
