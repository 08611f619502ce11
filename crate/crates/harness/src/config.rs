//! JSON experiment configuration. See `docs/config_schema.md` for the full
//! schema and defaults.

use anyhow::{bail, Context, Result};
use cfsim_core::methods::MethodKind;
use cfsim_core::predictors::TrainConfig;
use cfsim_core::scm::{AnalyticMode, ScmSpec};
use serde::{Deserialize, Serialize};
use std::path::Path;

/// A dataset reference: either a preset name or a named inline model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum DatasetRef {
    Preset(String),
    Inline { name: String, spec: ScmSpec },
}

impl DatasetRef {
    pub fn resolve(&self) -> Result<(String, ScmSpec)> {
        match self {
            DatasetRef::Preset(name) => Ok((name.clone(), ScmSpec::preset(name)?)),
            DatasetRef::Inline { name, spec } => {
                spec.validate()?;
                Ok((name.clone(), spec.clone()))
            }
        }
    }
}

/// Base predictor family for a method.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PredictorKind {
    Knn,
    Mlp,
    Analytic,
}

/// Mechanism selection for a method.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CgmKind {
    Oracle,
    NoisyOracle,
    BoundedNoisyOracle,
    MeanShift,
    RankPreserving,
}

impl CgmKind {
    pub fn name(self) -> &'static str {
        match self {
            CgmKind::Oracle => "oracle",
            CgmKind::NoisyOracle => "noisy_oracle",
            CgmKind::BoundedNoisyOracle => "bounded_noisy_oracle",
            CgmKind::MeanShift => "mean_shift",
            CgmKind::RankPreserving => "rank_preserving",
        }
    }
}

/// Exogenous-estimator selection for a method.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UEstimatorKind {
    Oracle,
    Noisy,
    MeanShiftResidual,
}

/// One method entry in the sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodConfig {
    pub kind: MethodKind,
    #[serde(default = "default_predictor")]
    pub predictor: PredictorKind,
    /// Analytic form for `predictor = analytic` (closed form by default).
    #[serde(default)]
    pub analytic_mode: Option<AnalyticMode>,
    #[serde(default)]
    pub cgm: Option<CgmKind>,
    #[serde(default)]
    pub u_estimator: Option<UEstimatorKind>,
    /// Mixing weights with the plain baseline; 1 = pure method.
    #[serde(default = "default_lambdas")]
    pub lambdas: Vec<f64>,
}

fn default_predictor() -> PredictorKind {
    PredictorKind::Knn
}

fn default_lambdas() -> Vec<f64> {
    vec![1.0]
}

impl MethodConfig {
    /// Fills in kind-dependent defaults and checks consistency.
    pub fn normalized(&self) -> Result<MethodConfig> {
        let mut m = self.clone();
        if m.kind == MethodKind::PcfAna {
            m.predictor = PredictorKind::Analytic;
        }
        if m.kind.needs_cgm() && m.cgm.is_none() {
            m.cgm = Some(CgmKind::Oracle);
        }
        if m.kind.needs_u_estimator() && m.u_estimator.is_none() {
            m.u_estimator = Some(UEstimatorKind::Oracle);
        }
        if m.predictor == PredictorKind::Analytic && m.analytic_mode.is_none() {
            m.analytic_mode = Some(AnalyticMode::ClosedForm);
        }
        if m.lambdas.is_empty() {
            bail!("method {}: empty lambda list", m.kind.name());
        }
        for &l in &m.lambdas {
            if !(0.0..=1.0).contains(&l) {
                bail!("method {}: lambda {} outside [0, 1]", m.kind.name(), l);
            }
        }
        Ok(m)
    }

    /// True when any stochastic estimate uses the Gaussian noise grid.
    pub fn uses_gaussian_noise(&self) -> bool {
        self.cgm == Some(CgmKind::NoisyOracle) || self.u_estimator == Some(UEstimatorKind::Noisy)
    }

    pub fn uses_bounded_noise(&self) -> bool {
        self.cgm == Some(CgmKind::BoundedNoisyOracle)
    }

    pub fn predictor_label(&self) -> String {
        match self.predictor {
            PredictorKind::Knn => "knn".into(),
            PredictorKind::Mlp => "mlp".into(),
            PredictorKind::Analytic => match self.analytic_mode {
                Some(AnalyticMode::Quadrature) => "analytic_quadrature".into(),
                _ => "analytic".into(),
            },
        }
    }

    pub fn cgm_label(&self) -> String {
        self.cgm.map_or_else(|| "none".into(), |c| c.name().into())
    }
}

/// Gaussian noise point for estimated counterfactuals and exogenous values.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaussianNoise {
    pub beta: f64,
    pub alpha: f64,
}

/// Noise grids; methods pick up whichever grid their components reference.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseGrid {
    #[serde(default = "default_gaussian")]
    pub gaussian: Vec<GaussianNoise>,
    #[serde(default = "default_eps0")]
    pub eps0: Vec<f64>,
}

fn default_gaussian() -> Vec<GaussianNoise> {
    vec![GaussianNoise { beta: 0.0, alpha: 0.0 }]
}

fn default_eps0() -> Vec<f64> {
    vec![0.0]
}

impl Default for NoiseGrid {
    fn default() -> Self {
        Self { gaussian: default_gaussian(), eps0: default_eps0() }
    }
}

/// Full experiment description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub datasets: Vec<DatasetRef>,
    #[serde(default = "default_n_train")]
    pub n_train: usize,
    #[serde(default = "default_n_test")]
    pub n_test: usize,
    pub methods: Vec<MethodConfig>,
    #[serde(default)]
    pub noise: NoiseGrid,
    pub seeds: Vec<u64>,
    #[serde(default)]
    pub train: Option<TrainConfig>,
    #[serde(default)]
    pub out_dir: Option<String>,
}

fn default_n_train() -> usize {
    10_000
}

fn default_n_test() -> usize {
    5_000
}

impl ExperimentConfig {
    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        let cfg: ExperimentConfig = serde_json::from_str(&text)
            .with_context(|| format!("parsing config {}", path.display()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.datasets.is_empty() {
            bail!("config needs at least one dataset");
        }
        if self.methods.is_empty() {
            bail!("config needs at least one method");
        }
        if self.seeds.is_empty() {
            bail!("config needs at least one seed");
        }
        if self.n_train == 0 || self.n_test == 0 {
            bail!("n_train and n_test must be >= 1");
        }
        for d in &self.datasets {
            d.resolve()?;
        }
        for m in &self.methods {
            m.normalized()?;
        }
        for g in &self.noise.gaussian {
            if g.alpha < 0.0 {
                bail!("gaussian noise alpha must be >= 0");
            }
        }
        for &e in &self.noise.eps0 {
            if e < 0.0 {
                bail!("eps0 must be >= 0");
            }
        }
        if let Some(t) = &self.train {
            t.validate()?;
        }
        Ok(())
    }

    pub fn train_config(&self) -> TrainConfig {
        self.train.clone().unwrap_or_default()
    }
}

/// Configuration for the theory-verification suites.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerifyConfig {
    /// Which suites to run; empty means all of
    /// `perfect_cf, excess_regression, excess_classification, lipschitz,
    /// optimality_oracle, te_equivalence`.
    #[serde(default)]
    pub checks: Vec<String>,
    #[serde(default = "default_verify_seeds")]
    pub seeds: Vec<u64>,
    #[serde(default = "default_n_train")]
    pub n_train: usize,
    /// Pair count for the perfect-fairness and equivalence checks.
    #[serde(default = "default_n_test")]
    pub n_pairs: usize,
    /// Sample count for excess-risk and bound checks.
    #[serde(default = "default_mc_n")]
    pub mc_n: usize,
    #[serde(default = "default_quad_nodes")]
    pub quad_nodes: usize,
    #[serde(default = "default_eps_grid")]
    pub eps0_grid: Vec<f64>,
    #[serde(default = "default_grid_size")]
    pub oracle_grid_size: usize,
    #[serde(default = "default_grid_radius")]
    pub oracle_grid_radius: f64,
    /// Negative-control hook: substitute this Lipschitz constant instead of
    /// the exact one.
    #[serde(default)]
    pub lipschitz_l_override: Option<f64>,
    #[serde(default)]
    pub out_dir: Option<String>,
}

fn default_verify_seeds() -> Vec<u64> {
    vec![1, 2, 3, 4, 5]
}

fn default_mc_n() -> usize {
    100_000
}

fn default_quad_nodes() -> usize {
    64
}

fn default_eps_grid() -> Vec<f64> {
    vec![0.0, 0.05, 0.1, 0.2]
}

fn default_grid_size() -> usize {
    51
}

fn default_grid_radius() -> f64 {
    4.0
}

impl Default for VerifyConfig {
    fn default() -> Self {
        serde_json::from_str("{}").expect("defaults")
    }
}

impl VerifyConfig {
    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        serde_json::from_str(&text)
            .with_context(|| format!("parsing config {}", path.display()))
    }
}
