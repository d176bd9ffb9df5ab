//! Seeded generation of ground truth, episodic activation designs, noise, and
//! complete episode batches.

use nalgebra::{DMatrix, DVector};
use rand::seq::index::sample;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::model::{CoalitionUniverse, EpisodeBatch, GroundTruth};
use crate::rng::{stream_rng, Stream};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SignMode {
    #[default]
    AllPositive,
    Rademacher,
}

/// Draws a `k`-sparse contribution vector with magnitudes uniform on
/// `[theta_min, magnitude_cap]`.
pub fn generate_theta(
    m: usize,
    k: usize,
    theta_min: f64,
    magnitude_cap: f64,
    sign_mode: SignMode,
    seed: u64,
) -> Result<GroundTruth> {
    if k == 0 || k > m {
        return Err(Error::InvalidConfig(format!("sparsity K = {k} must lie in 1..={m}")));
    }
    if !(theta_min > 0.0) || magnitude_cap < theta_min || !magnitude_cap.is_finite() {
        return Err(Error::InvalidConfig(format!(
            "need 0 < theta_min <= magnitude_cap, got {theta_min} and {magnitude_cap}"
        )));
    }
    let mut rng = stream_rng(seed, Stream::Theta);
    let mut support = sample(&mut rng, m, k).into_vec();
    support.sort_unstable();
    let mut theta = DVector::zeros(m);
    for &j in &support {
        let magnitude = if magnitude_cap > theta_min {
            rng.gen_range(theta_min..=magnitude_cap)
        } else {
            theta_min
        };
        let sign = match sign_mode {
            SignMode::AllPositive => 1.0,
            SignMode::Rademacher => {
                if rng.gen::<bool>() {
                    1.0
                } else {
                    -1.0
                }
            }
        };
        theta[j] = sign * magnitude;
    }
    GroundTruth::new(theta, theta_min, 0.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignConfig {
    pub m: usize,
    /// Number of episodes `T`.
    pub episodes: usize,
    pub activation_probs: Vec<f64>,
    /// Maximum number of active coalitions per episode.
    pub row_cap: usize,
    pub normalise_columns: bool,
    pub seed: u64,
}

impl DesignConfig {
    pub fn uniform(m: usize, episodes: usize, p: f64, row_cap: usize, normalise_columns: bool, seed: u64) -> Self {
        Self {
            m,
            episodes,
            activation_probs: vec![p; m],
            row_cap,
            normalise_columns,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.m == 0 || self.episodes == 0 {
            return Err(Error::InvalidConfig("design needs m >= 1 and T >= 1".into()));
        }
        check_len("activation_probs length", self.m, self.activation_probs.len())?;
        if let Some(p) = self.activation_probs.iter().find(|&&p| !(p > 0.0 && p <= 1.0)) {
            return Err(Error::InvalidConfig(format!("activation probability {p} not in (0, 1]")));
        }
        if self.row_cap == 0 || self.row_cap > self.m {
            return Err(Error::InvalidConfig(format!(
                "row cap q = {} must lie in 1..={}",
                self.row_cap, self.m
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Design {
    pub matrix: DMatrix<f64>,
    /// Columns with no activation; left at zero and never rescaled.
    pub zero_columns: Vec<usize>,
}

/// Independent Bernoulli activations per episode; rows with more than
/// `row_cap` activations are thinned to a uniformly random subset of size
/// `row_cap`.
pub fn generate_design(cfg: &DesignConfig) -> Result<Design> {
    cfg.validate()?;
    let (t, m) = (cfg.episodes, cfg.m);
    let mut rng = stream_rng(cfg.seed, Stream::Design);
    let mut x = DMatrix::<f64>::zeros(t, m);
    let mut active = Vec::with_capacity(m);
    for row in 0..t {
        active.clear();
        for (j, &p) in cfg.activation_probs.iter().enumerate() {
            if p >= 1.0 || rng.gen::<f64>() < p {
                active.push(j);
            }
        }
        if active.len() > cfg.row_cap {
            for i in sample(&mut rng, active.len(), cfg.row_cap) {
                x[(row, active[i])] = 1.0;
            }
        } else {
            for &j in &active {
                x[(row, j)] = 1.0;
            }
        }
    }
    let mut zero_columns = Vec::new();
    for j in 0..m {
        let sq = x.column(j).norm_squared();
        if sq == 0.0 {
            zero_columns.push(j);
        } else if cfg.normalise_columns {
            let scale = (t as f64 / sq).sqrt();
            x.column_mut(j).scale_mut(scale);
        }
    }
    Ok(Design { matrix: x, zero_columns })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseDistribution {
    #[default]
    Gaussian,
    BoundedUniform,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseConfig {
    pub sigma: f64,
    #[serde(default)]
    pub distribution: NoiseDistribution,
    pub seed: u64,
}

/// I.i.d. mean-zero noise: `N(0, σ²)` or `Uniform(−σ√3, σ√3)`.
pub fn generate_noise(episodes: usize, cfg: &NoiseConfig) -> Result<DVector<f64>> {
    if !(cfg.sigma >= 0.0) || !cfg.sigma.is_finite() {
        return Err(Error::InvalidConfig(format!("noise sigma {} must be >= 0", cfg.sigma)));
    }
    if cfg.sigma == 0.0 {
        return Ok(DVector::zeros(episodes));
    }
    let mut rng = stream_rng(cfg.seed, Stream::Noise);
    let v = match cfg.distribution {
        NoiseDistribution::Gaussian => {
            let normal = Normal::new(0.0, cfg.sigma).expect("sigma validated");
            DVector::from_fn(episodes, |_, _| normal.sample(&mut rng))
        }
        NoiseDistribution::BoundedUniform => {
            let half = cfg.sigma * 3f64.sqrt();
            DVector::from_fn(episodes, |_, _| rng.gen_range(-half..half))
        }
    };
    Ok(v)
}

/// Generates `X` and `ε`, then forms `Y = Xθ* + ε`.
///
/// The stored noise is `Y − Xθ*` as evaluated in floating point, so it is the
/// noise the estimators actually see; it differs from the raw draw only by
/// rounding.
pub fn synthesize_batch(
    universe: &CoalitionUniverse,
    truth: &GroundTruth,
    design_cfg: &DesignConfig,
    noise_cfg: &NoiseConfig,
) -> Result<EpisodeBatch> {
    check_len("design m vs universe size", universe.len(), design_cfg.m)?;
    check_len("design m vs theta length", truth.m(), design_cfg.m)?;
    let design = generate_design(design_cfg)?;
    let raw_noise = generate_noise(design_cfg.episodes, noise_cfg)?;
    let signal = &design.matrix * &truth.theta_star;
    let response = &signal + &raw_noise;
    let noise = &response - &signal;
    EpisodeBatch::new(design.matrix, response, Some(noise), design_cfg.normalise_columns)
}
