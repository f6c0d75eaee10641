//! JSON experiment configuration.

use std::fs;
use std::path::{Path, PathBuf};

use lodnn_core::mesh::MeshHierarchy;
use lodnn_core::surrogate::DEFAULT_MAX_INVERSION_INPUTS;
use serde::{Deserialize, Serialize};

use crate::error::{config_err, AppResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum StudyKind {
    #[serde(rename = "h-sweep")]
    FineSweep,
    #[serde(rename = "ell-sweep")]
    EllSweep,
    #[serde(rename = "H-sweep")]
    CoarseSweep,
    #[serde(rename = "eig-study")]
    EigStudy,
    #[serde(rename = "nn-calculus-suite")]
    NnCalculusSuite,
    #[serde(rename = "local-contract")]
    LocalContract,
}

impl StudyKind {
    pub fn name(self) -> &'static str {
        match self {
            StudyKind::FineSweep => "h-sweep",
            StudyKind::EllSweep => "ell-sweep",
            StudyKind::CoarseSweep => "H-sweep",
            StudyKind::EigStudy => "eig-study",
            StudyKind::NnCalculusSuite => "nn-calculus-suite",
            StudyKind::LocalContract => "local-contract",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum LoadSpec {
    Constant { value: f64 },
    /// `f(x) = Π_a sin(π x_a)`.
    Sine,
}

impl Default for LoadSpec {
    fn default() -> Self {
        LoadSpec::Constant { value: 1.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum CoefficientSpec {
    /// Independent uniform values in `[alpha, beta]` per ε-element.
    Random,
    /// `A(x) = 2 + Π_a sin(2π x_a)`, sampled at ε-element centres.
    Smooth,
    Constant { value: f64 },
    File { path: PathBuf },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemConfig {
    pub dim: usize,
    pub n_coarse: Vec<usize>,
    pub r_eps: usize,
    pub r_h: usize,
    /// Fixes `1/ε` across the sweep; `r_eps` is then derived per `nH`.
    #[serde(default)]
    pub eps_per_axis: Option<usize>,
    pub alpha: f64,
    pub beta: f64,
    #[serde(default)]
    pub load: LoadSpec,
    pub coefficient: CoefficientSpec,
}

impl ProblemConfig {
    pub fn r_eps_for(&self, n_coarse: usize) -> usize {
        match self.eps_per_axis {
            Some(ne) => ne / n_coarse,
            None => self.r_eps,
        }
    }

    pub fn hierarchy(&self, n_coarse: usize) -> AppResult<MeshHierarchy> {
        Ok(MeshHierarchy::new(self.dim, n_coarse, self.r_eps_for(n_coarse), self.r_h)?)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "kebab-case", deny_unknown_fields)]
pub enum EllRule {
    Fixed { values: Vec<usize> },
    /// `ℓ = ⌈ln nH⌉ + 1`.
    Log,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LodConfig {
    pub ell: EllRule,
}

impl Default for LodConfig {
    fn default() -> Self {
        Self { ell: EllRule::Log }
    }
}

impl LodConfig {
    pub fn ells(&self, hier: &MeshHierarchy) -> Vec<usize> {
        match &self.ell {
            EllRule::Fixed { values } => values.clone(),
            EllRule::Log => vec![hier.default_ell()],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "kebab-case", deny_unknown_fields)]
pub enum EtaRule {
    Fixed { values: Vec<f64> },
    /// `η = min(H^k, 1/4)`; `k` defaults to `2d + 1`.
    Power {
        #[serde(default)]
        k: Option<u32>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SurrogateConfig {
    /// Whether the H-sweep also builds surrogates.
    #[serde(default)]
    pub enabled: bool,
    #[serde(default = "default_eta")]
    pub eta: EtaRule,
    /// Use exact local matrices instead of a network.
    #[serde(default)]
    pub oracle: bool,
    #[serde(default = "default_true")]
    pub audited: bool,
    #[serde(default = "default_max_inputs")]
    pub max_inversion_inputs: usize,
    /// Serialized surrogate used by `compare` and `local-contract`, written by `build-network`.
    #[serde(default)]
    pub network: Option<PathBuf>,
}

fn default_eta() -> EtaRule {
    EtaRule::Power { k: None }
}

fn default_true() -> bool {
    true
}

fn default_max_inputs() -> usize {
    DEFAULT_MAX_INVERSION_INPUTS
}

impl Default for SurrogateConfig {
    fn default() -> Self {
        Self {
            enabled: false,
            eta: default_eta(),
            oracle: false,
            audited: true,
            max_inversion_inputs: DEFAULT_MAX_INVERSION_INPUTS,
            network: None,
        }
    }
}

impl SurrogateConfig {
    pub fn etas(&self, hier: &MeshHierarchy) -> Vec<f64> {
        match &self.eta {
            EtaRule::Fixed { values } => values.clone(),
            EtaRule::Power { k } => {
                let k = k.unwrap_or(2 * hier.dim() as u32 + 1);
                vec![hier.coarse_size().powi(k as i32).min(0.25)]
            }
        }
    }
}

/// Levels of the fine-scale study.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FineConfig {
    /// Values of `ε/h`; the largest is the reference level.
    #[serde(default = "default_levels")]
    pub r_h_levels: Vec<usize>,
    /// Regularity exponent `s` the study is compared against.
    #[serde(default = "default_s")]
    pub regularity_s: f64,
}

fn default_levels() -> Vec<usize> {
    vec![1, 2, 4, 8, 64]
}

fn default_s() -> f64 {
    1.0
}

impl Default for FineConfig {
    fn default() -> Self {
        Self { r_h_levels: default_levels(), regularity_s: default_s() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub study: StudyKind,
    pub problem: ProblemConfig,
    #[serde(default)]
    pub lod: LodConfig,
    #[serde(default)]
    pub surrogate: SurrogateConfig,
    #[serde(default)]
    pub fine: FineConfig,
    /// Random samples per point (coefficients, vectors or networks).
    #[serde(default = "default_samples")]
    pub samples: usize,
    /// Independent random coefficients per H-sweep point; error metrics are
    /// reported as root mean squares over the draws.
    #[serde(default = "default_draws")]
    pub draws: usize,
    #[serde(default = "default_output")]
    pub output: PathBuf,
    #[serde(default)]
    pub seed: u64,
}

fn default_samples() -> usize {
    20
}

fn default_draws() -> usize {
    1
}

fn default_output() -> PathBuf {
    PathBuf::from("out")
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> AppResult<Self> {
        let cfg: Self = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> AppResult<Self> {
        let text = fs::read_to_string(path)?;
        let mut cfg: Self = serde_json::from_str(&text)?;
        if let CoefficientSpec::File { path: p } = &mut cfg.problem.coefficient {
            if p.is_relative() {
                if let Some(dir) = path.parent() {
                    *p = dir.join(&*p);
                }
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_json(&self) -> AppResult<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Checks every numeric field against the preconditions of the core crate.
    pub fn validate(&self) -> AppResult<()> {
        let p = &self.problem;
        if !(1..=3).contains(&p.dim) {
            return Err(config_err("problem.dim", format!("must be 1, 2 or 3, got {}", p.dim)));
        }
        if p.n_coarse.is_empty() {
            return Err(config_err("problem.n_coarse", "must list at least one value"));
        }
        if p.r_h == 0 {
            return Err(config_err("problem.r_h", "must be at least 1"));
        }
        if p.eps_per_axis.is_none() && p.r_eps == 0 {
            return Err(config_err("problem.r_eps", "must be at least 1"));
        }
        for (i, &n) in p.n_coarse.iter().enumerate() {
            let field = format!("problem.n_coarse[{i}]");
            if n == 0 {
                return Err(config_err(field, "must be at least 1"));
            }
            if let Some(ne) = p.eps_per_axis {
                if ne % n != 0 || ne < n {
                    return Err(config_err(field, format!("must divide problem.eps_per_axis = {ne}")));
                }
            }
            p.hierarchy(n).map_err(|e| config_err(field, e.to_string()))?;
        }
        if !(p.alpha.is_finite() && p.alpha > 0.0) {
            return Err(config_err("problem.alpha", format!("must be finite and positive, got {}", p.alpha)));
        }
        if !(p.beta.is_finite() && p.beta >= p.alpha) {
            return Err(config_err("problem.beta", format!("must be finite and at least alpha, got {}", p.beta)));
        }
        match &p.load {
            LoadSpec::Constant { value } if !value.is_finite() => {
                return Err(config_err("problem.load.value", "must be finite"));
            }
            _ => {}
        }
        match &p.coefficient {
            CoefficientSpec::Constant { value } if !(*value >= p.alpha && *value <= p.beta) => {
                return Err(config_err("problem.coefficient.value", format!("{value} outside [alpha, beta]")));
            }
            CoefficientSpec::Smooth if !(p.alpha <= 1.0 && p.beta >= 3.0) => {
                return Err(config_err("problem.coefficient", "smooth coefficient takes values in [1, 3], outside [alpha, beta]"));
            }
            _ => {}
        }
        if let EllRule::Fixed { values } = &self.lod.ell {
            if values.is_empty() {
                return Err(config_err("lod.ell.values", "must list at least one value"));
            }
            if let Some(i) = values.iter().position(|&l| l == 0) {
                return Err(config_err(format!("lod.ell.values[{i}]"), "must be at least 1"));
            }
        }
        match &self.surrogate.eta {
            EtaRule::Fixed { values } => {
                if values.is_empty() {
                    return Err(config_err("surrogate.eta.values", "must list at least one value"));
                }
                if let Some(i) = values.iter().position(|&e| !(e > 0.0 && e <= 0.25)) {
                    return Err(config_err(format!("surrogate.eta.values[{i}]"), format!("must lie in (0, 1/4], got {}", values[i])));
                }
            }
            EtaRule::Power { k: Some(0) } => return Err(config_err("surrogate.eta.k", "must be at least 1")),
            EtaRule::Power { .. } => {}
        }
        if self.surrogate.max_inversion_inputs == 0 {
            return Err(config_err("surrogate.max_inversion_inputs", "must be positive"));
        }
        if self.study == StudyKind::FineSweep {
            let lv = &self.fine.r_h_levels;
            if lv.len() < 3 {
                return Err(config_err("fine.r_h_levels", "needs at least two levels besides the reference"));
            }
            if let Some(i) = lv.iter().position(|&r| r == 0) {
                return Err(config_err(format!("fine.r_h_levels[{i}]"), "must be at least 1"));
            }
            if lv.windows(2).any(|w| w[1] <= w[0] || w[1] % w[0] != 0) {
                return Err(config_err("fine.r_h_levels", "must be strictly increasing, each dividing the next"));
            }
        }
        if !(self.fine.regularity_s > 0.0 && self.fine.regularity_s <= 1.0) {
            return Err(config_err("fine.regularity_s", format!("must lie in (0, 1], got {}", self.fine.regularity_s)));
        }
        if self.draws == 0 {
            return Err(config_err("draws", "must be at least 1"));
        }
        if self.draws > 1 && self.problem.coefficient != CoefficientSpec::Random {
            return Err(config_err("draws", "more than one draw needs a random coefficient"));
        }
        if self.samples == 0 {
            return Err(config_err("samples", "must be at least 1"));
        }
        Ok(())
    }
}
