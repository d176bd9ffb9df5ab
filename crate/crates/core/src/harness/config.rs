use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::design::{NoiseDistribution, SignMode};
use crate::error::{Error, Result};
use crate::estimators::LassoConfig;
use crate::model::{CoalitionUniverse, EstimatorKind};
use crate::rng::{stream_rng, Stream};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case")]
pub enum LibraryRule {
    /// Every coalition with at most `max_size` agents.
    AllUpToSize { max_size: usize },
    /// `m` distinct coalitions drawn uniformly from the non-empty subsets,
    /// fixed by the master seed.
    RandomLibrary { m: usize },
    /// A universe JSON file.
    Explicit { path: PathBuf },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UniverseSpec {
    pub n_agents: usize,
    pub library: LibraryRule,
}

impl UniverseSpec {
    pub fn build(&self, master_seed: u64) -> Result<CoalitionUniverse> {
        match &self.library {
            LibraryRule::AllUpToSize { max_size } => CoalitionUniverse::all_up_to_size(self.n_agents, *max_size),
            LibraryRule::RandomLibrary { m } => random_library(self.n_agents, *m, master_seed),
            LibraryRule::Explicit { path } => {
                let u = crate::io::read_universe(path)?;
                if u.n_agents() != self.n_agents {
                    return Err(Error::InvalidConfig(format!(
                        "universe file has {} agents, config says {}",
                        u.n_agents(),
                        self.n_agents
                    )));
                }
                Ok(u)
            }
        }
    }
}

fn random_library(n_agents: usize, m: usize, seed: u64) -> Result<CoalitionUniverse> {
    use rand::Rng;
    if n_agents == 0 || n_agents > 30 {
        return Err(Error::InvalidConfig("random libraries support 1..=30 agents".into()));
    }
    let total = (1u64 << n_agents) - 1;
    if m == 0 || m as u64 > total {
        return Err(Error::InvalidConfig(format!("cannot draw {m} distinct coalitions of {n_agents} agents")));
    }
    let mut rng = stream_rng(seed, Stream::Library);
    let mut chosen = std::collections::BTreeSet::new();
    while chosen.len() < m {
        chosen.insert(rng.gen_range(1..=total));
    }
    CoalitionUniverse::new(n_agents, chosen.into_iter().map(crate::model::Coalition).collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruthSpec {
    /// Sparsity `K`.
    pub sparsity: usize,
    pub theta_min: f64,
    pub magnitude_cap: f64,
    #[serde(default)]
    pub sign_mode: SignMode,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ActivationSpec {
    Uniform(f64),
    PerCoalition(Vec<f64>),
}

impl ActivationSpec {
    pub fn probabilities(&self, m: usize) -> Result<Vec<f64>> {
        match self {
            Self::Uniform(p) => Ok(vec![*p; m]),
            Self::PerCoalition(v) if v.len() == m => Ok(v.clone()),
            Self::PerCoalition(v) => Err(Error::DimensionMismatch {
                context: "activation probabilities",
                expected: m,
                found: v.len(),
            }),
        }
    }
}

fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignSpec {
    pub activation_prob: ActivationSpec,
    pub row_cap: usize,
    #[serde(default = "default_true")]
    pub normalise_columns: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    pub sigma: f64,
    #[serde(default)]
    pub distribution: NoiseDistribution,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct BgcpSettings {
    /// Defaults to the true sparsity `K`.
    #[serde(default)]
    pub k_max: Option<usize>,
    #[serde(default)]
    pub eta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LassoSettings {
    #[serde(flatten)]
    pub config: LassoConfig,
    /// For automatic λ, plug in the simulated noise level instead of the
    /// response standard deviation.
    #[serde(default = "default_true")]
    pub use_noise_sigma: bool,
}

impl Default for LassoSettings {
    fn default() -> Self {
        Self {
            config: LassoConfig::default(),
            use_noise_sigma: true,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DlsSettings {
    /// 0 requests plain least squares, which is ill-posed when `T < m`.
    #[serde(default)]
    pub ridge: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MethodSettings {
    #[serde(default)]
    pub bgcp: BgcpSettings,
    #[serde(default)]
    pub lasso: LassoSettings,
    #[serde(default)]
    pub dls: DlsSettings,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub name: Option<String>,
    pub universe: UniverseSpec,
    pub truth: TruthSpec,
    pub design: DesignSpec,
    pub noise: NoiseSpec,
    pub t_grid: Vec<usize>,
    pub methods: Vec<EstimatorKind>,
    #[serde(default)]
    pub method_settings: MethodSettings,
    pub replications: usize,
    pub master_seed: u64,
    /// Share one ground truth across replications instead of redrawing it.
    #[serde(default)]
    pub fixed_truth: bool,
    /// Compute coherence per batch for the run records.
    #[serde(default = "default_true")]
    pub design_diagnostics: bool,
    #[serde(default)]
    pub output: Option<PathBuf>,
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.replications == 0 {
            return Err(Error::InvalidConfig("replications must be >= 1".into()));
        }
        if self.t_grid.is_empty() || self.t_grid.windows(2).any(|w| w[0] >= w[1]) || self.t_grid[0] == 0 {
            return Err(Error::InvalidConfig("t_grid must be non-empty, positive and strictly increasing".into()));
        }
        if self.methods.is_empty() {
            return Err(Error::InvalidConfig("at least one method is required".into()));
        }
        if self.methods.contains(&EstimatorKind::L0) {
            return Err(Error::InvalidConfig("the l0 oracle is not an experiment method".into()));
        }
        let mut seen = self.methods.clone();
        seen.sort();
        seen.dedup();
        if seen.len() != self.methods.len() {
            return Err(Error::InvalidConfig("methods must be distinct".into()));
        }
        Ok(())
    }

    pub fn from_json_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        serde_json::from_str(&text).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            message: e.to_string(),
        })
    }

    pub fn preset(preset: Preset) -> Self {
        match preset {
            Preset::Sparse => sparse_preset(),
            Preset::Dense => dense_preset(),
        }
    }
}

/// One simulated batch, as written by `sparse-csg generate`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerateConfig {
    pub universe: UniverseSpec,
    pub truth: TruthSpec,
    pub design: DesignSpec,
    pub noise: NoiseSpec,
    pub episodes: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Preset {
    Sparse,
    Dense,
}

/// High-dimensional regime `T >= 3·K·ln m`: 14 agents, every coalition of at
/// most 3 agents (m = 469), K = 5. The grid ends at T = 600, just past m, so
/// the rate fit has three points; DLS is ill-posed at the first two.
///
/// Activations overlap heavily (about 47 active coalitions per episode) and
/// the signal is weak relative to the noise, so the plug-in estimator pays
/// for interference at every T while the sparse methods recover the support
/// from T = 300 on.
fn sparse_preset() -> ExperimentConfig {
    ExperimentConfig {
        name: Some("sparse".into()),
        universe: UniverseSpec {
            n_agents: 14,
            library: LibraryRule::AllUpToSize { max_size: 3 },
        },
        truth: TruthSpec {
            sparsity: 5,
            theta_min: 0.2,
            magnitude_cap: 0.4,
            sign_mode: SignMode::AllPositive,
        },
        design: DesignSpec {
            activation_prob: ActivationSpec::Uniform(0.1),
            row_cap: 80,
            normalise_columns: true,
        },
        noise: NoiseSpec {
            sigma: 1.0,
            distribution: NoiseDistribution::Gaussian,
        },
        t_grid: vec![150, 300, 600],
        methods: vec![EstimatorKind::Bgcp, EstimatorKind::Lasso, EstimatorKind::Epc, EstimatorKind::Dls],
        method_settings: MethodSettings::default(),
        replications: 30,
        master_seed: 20_240_601,
        fixed_truth: false,
        design_diagnostics: true,
        output: None,
    }
}

/// Dense regime `T >= 2·m·ln m`: 6 agents, coalitions of at most 2 agents
/// (m = 21), K = ⌈m/2⌉ = 11.
fn dense_preset() -> ExperimentConfig {
    ExperimentConfig {
        name: Some("dense".into()),
        universe: UniverseSpec {
            n_agents: 6,
            library: LibraryRule::AllUpToSize { max_size: 2 },
        },
        truth: TruthSpec {
            sparsity: 11,
            theta_min: 0.5,
            magnitude_cap: 2.0,
            sign_mode: SignMode::Rademacher,
        },
        design: DesignSpec {
            activation_prob: ActivationSpec::Uniform(0.2),
            row_cap: 21,
            normalise_columns: true,
        },
        noise: NoiseSpec {
            sigma: 1.0,
            distribution: NoiseDistribution::Gaussian,
        },
        t_grid: vec![150, 300, 600, 1200],
        methods: vec![EstimatorKind::Bgcp, EstimatorKind::Lasso, EstimatorKind::Epc, EstimatorKind::Dls],
        method_settings: MethodSettings::default(),
        replications: 30,
        master_seed: 20_240_602,
        fixed_truth: false,
        design_diagnostics: true,
        output: None,
    }
}
