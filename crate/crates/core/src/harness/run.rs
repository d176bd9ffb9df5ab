use std::sync::Arc;
use std::time::Instant;

use nalgebra::DVector;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{DesignSpec, ExperimentConfig, GenerateConfig, NoiseSpec, TruthSpec};
use crate::design::{generate_theta, synthesize_batch, DesignConfig, NoiseConfig};
use crate::diagnostics::{coherence_condition, lasso_error_report, mutual_coherence};
use crate::error::{Error, Result};
use crate::estimators::BgcpConfig;
use crate::model::{welfare, CoalitionStructure, CoalitionUniverse, EpisodeBatch, EstimatorKind, GroundTruth};
use crate::pipeline::{pipeline_bgcp, pipeline_surrogate, PipelineOutcome, SurrogateMethod, TruthBenchmark};
use crate::rng::derive_seed;

const TRUTH_LABEL: u64 = 0x74_7275_7468;
const BATCH_LABEL: u64 = 0x62_6174_6368;
const NOISE_LABEL: u64 = 0x6e_6f69_7365;

pub fn replication_seed(master_seed: u64, replication: usize) -> u64 {
    derive_seed(master_seed, replication as u64)
}

/// Seed of the ground truth for one replication.
pub fn truth_seed(master_seed: u64, replication: usize, fixed_truth: bool) -> u64 {
    if fixed_truth {
        derive_seed(master_seed, TRUTH_LABEL)
    } else {
        derive_seed(replication_seed(master_seed, replication), TRUTH_LABEL)
    }
}

/// `(design seed, noise seed)` for the batch of `episodes` rows.
pub fn batch_seeds(rep_seed: u64, episodes: usize) -> (u64, u64) {
    let design = derive_seed(derive_seed(rep_seed, BATCH_LABEL), episodes as u64);
    (design, derive_seed(design, NOISE_LABEL))
}

pub fn draw_truth(spec: &TruthSpec, noise: &NoiseSpec, m: usize, seed: u64) -> Result<GroundTruth> {
    let mut truth = generate_theta(m, spec.sparsity, spec.theta_min, spec.magnitude_cap, spec.sign_mode, seed)?;
    truth.sigma = noise.sigma;
    Ok(truth)
}

pub fn draw_batch(
    universe: &CoalitionUniverse,
    truth: &GroundTruth,
    design: &DesignSpec,
    noise: &NoiseSpec,
    episodes: usize,
    seeds: (u64, u64),
) -> Result<EpisodeBatch> {
    let m = universe.len();
    let dcfg = DesignConfig {
        m,
        episodes,
        activation_probs: design.activation_prob.probabilities(m)?,
        row_cap: design.row_cap,
        normalise_columns: design.normalise_columns,
        seed: seeds.0,
    };
    let ncfg = NoiseConfig {
        sigma: noise.sigma,
        distribution: noise.distribution,
        seed: seeds.1,
    };
    synthesize_batch(universe, truth, &dcfg, &ncfg)
}

/// Draws the universe, truth and batch of a [`GenerateConfig`] with the same
/// seeding as replication 0 of an experiment with master seed `cfg.seed`.
pub fn generate(cfg: &GenerateConfig) -> Result<(CoalitionUniverse, GroundTruth, EpisodeBatch)> {
    let universe = cfg.universe.build(cfg.seed)?;
    let truth = draw_truth(&cfg.truth, &cfg.noise, universe.len(), truth_seed(cfg.seed, 0, false))?;
    let seeds = batch_seeds(replication_seed(cfg.seed, 0), cfg.episodes);
    let batch = draw_batch(&universe, &truth, &cfg.design, &cfg.noise, cfg.episodes, seeds)?;
    Ok((universe, truth, batch))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    Ok,
    /// The method is not applicable to this batch (DLS with `T < m`).
    IllPosed,
    Failed,
}

/// Vectors kept in memory so a record's gap can be recomputed.
#[derive(Debug, Clone, PartialEq)]
pub struct RunArtifacts {
    pub theta_hat: DVector<f64>,
    pub theta_star: DVector<f64>,
    pub structure: CoalitionStructure,
    pub optimal_structure: CoalitionStructure,
}

impl RunArtifacts {
    pub fn recompute_gap(&self) -> Result<f64> {
        Ok(welfare(&self.optimal_structure, &self.theta_star)? - welfare(&self.structure, &self.theta_star)?)
    }
}

/// One row of `runs.csv`. Column order follows field order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub replication: usize,
    pub seed: u64,
    pub t: usize,
    pub m: usize,
    pub method: EstimatorKind,
    pub status: RunStatus,
    pub error: String,
    pub support_size: Option<usize>,
    pub support_recovered: Option<bool>,
    pub false_positives: Option<usize>,
    pub l2_error: Option<f64>,
    pub l1_error: Option<f64>,
    pub prediction_error: Option<f64>,
    pub welfare_gap: Option<f64>,
    pub optimal_welfare: f64,
    pub iterations: Option<usize>,
    pub converged: Option<bool>,
    pub coherence: Option<f64>,
    pub coherence_condition_met: Option<bool>,
    pub zero_columns: usize,
    #[serde(skip)]
    pub wall_time_secs: f64,
    #[serde(skip)]
    pub artifacts: Option<Arc<RunArtifacts>>,
}

impl RunRecord {
    pub fn is_ok(&self) -> bool {
        self.status == RunStatus::Ok
    }

    /// The record as it reads back from `runs.csv`.
    pub fn persisted(&self) -> Self {
        Self {
            wall_time_secs: 0.0,
            artifacts: None,
            ..self.clone()
        }
    }
}

pub const RUN_COLUMNS: [&str; 20] = [
    "replication",
    "seed",
    "t",
    "m",
    "method",
    "status",
    "error",
    "support_size",
    "support_recovered",
    "false_positives",
    "l2_error",
    "l1_error",
    "prediction_error",
    "welfare_gap",
    "optimal_welfare",
    "iterations",
    "converged",
    "coherence",
    "coherence_condition_met",
    "zero_columns",
];

#[derive(Debug, Clone)]
pub struct ExperimentResults {
    pub m: usize,
    pub records: Vec<RunRecord>,
}

fn method_key(m: EstimatorKind) -> u8 {
    match m {
        EstimatorKind::Bgcp => 0,
        EstimatorKind::Lasso => 1,
        EstimatorKind::Epc => 2,
        EstimatorKind::Dls => 3,
        EstimatorKind::L0 => 4,
    }
}

pub fn sort_records(records: &mut [RunRecord]) {
    records.sort_by_key(|r| (r.t, method_key(r.method), r.replication));
}

/// Runs every `(replication, T)` task on a pool of `workers` threads (all
/// cores when `None`) and returns records sorted by `(T, method, replication)`.
pub fn run_experiment(cfg: &ExperimentConfig, workers: Option<usize>) -> Result<ExperimentResults> {
    cfg.validate()?;
    let universe = cfg.universe.build(cfg.master_seed)?;
    let m = universe.len();
    let tasks: Vec<(usize, usize)> = (0..cfg.replications)
        .flat_map(|r| cfg.t_grid.iter().map(move |&t| (r, t)))
        .collect();
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(w) = workers {
        builder = builder.num_threads(w.max(1));
    }
    let pool = builder
        .build()
        .map_err(|e| Error::InvalidConfig(format!("thread pool: {e}")))?;
    let chunks: Vec<Vec<RunRecord>> = pool.install(|| {
        tasks
            .par_iter()
            .map(|&(r, t)| run_task(cfg, &universe, r, t))
            .collect::<Result<_>>()
    })?;
    let mut records: Vec<RunRecord> = chunks.into_iter().flatten().collect();
    sort_records(&mut records);
    Ok(ExperimentResults { m, records })
}

fn run_task(cfg: &ExperimentConfig, universe: &CoalitionUniverse, rep: usize, t: usize) -> Result<Vec<RunRecord>> {
    let m = universe.len();
    let rep_seed = replication_seed(cfg.master_seed, rep);
    let truth = draw_truth(&cfg.truth, &cfg.noise, m, truth_seed(cfg.master_seed, rep, cfg.fixed_truth))?;
    let bench = TruthBenchmark::new(universe, &truth)?;
    let batch = draw_batch(universe, &truth, &cfg.design, &cfg.noise, t, batch_seeds(rep_seed, t))?;
    let coherence = if cfg.design_diagnostics && m >= 2 {
        Some(mutual_coherence(&batch.design)?.value)
    } else {
        None
    };
    let template = RunRecord {
        replication: rep,
        seed: rep_seed,
        t,
        m,
        method: EstimatorKind::Bgcp,
        status: RunStatus::Ok,
        error: String::new(),
        support_size: None,
        support_recovered: None,
        false_positives: None,
        l2_error: None,
        l1_error: None,
        prediction_error: None,
        welfare_gap: None,
        optimal_welfare: bench.optimal_welfare,
        iterations: None,
        converged: None,
        coherence,
        coherence_condition_met: coherence.map(|mu| coherence_condition(mu, truth.sparsity())),
        zero_columns: batch.zero_columns.len(),
        wall_time_secs: 0.0,
        artifacts: None,
    };
    let mut out = Vec::with_capacity(cfg.methods.len());
    for &method in &cfg.methods {
        let start = Instant::now();
        let outcome = run_method(cfg, method, &batch, universe, &truth);
        let mut rec = RunRecord {
            method,
            ..template.clone()
        };
        match outcome.and_then(|o| fill_record(&mut rec, o, &truth, &batch, &bench)) {
            Ok(()) => {}
            Err(Error::IllPosed(msg)) => {
                rec.status = RunStatus::IllPosed;
                rec.error = msg;
            }
            Err(e) => {
                rec.status = RunStatus::Failed;
                rec.error = e.to_string();
            }
        }
        rec.wall_time_secs = start.elapsed().as_secs_f64();
        out.push(rec);
    }
    Ok(out)
}

fn run_method(
    cfg: &ExperimentConfig,
    method: EstimatorKind,
    batch: &EpisodeBatch,
    universe: &CoalitionUniverse,
    truth: &GroundTruth,
) -> Result<PipelineOutcome> {
    let settings = &cfg.method_settings;
    match method {
        EstimatorKind::Bgcp => {
            let mut bc = BgcpConfig::new(settings.bgcp.k_max.unwrap_or(truth.sparsity()));
            bc.eta = settings.bgcp.eta;
            pipeline_bgcp(batch, universe, None, &bc)
        }
        EstimatorKind::Lasso => {
            let mut lc = settings.lasso.config.clone();
            if settings.lasso.use_noise_sigma && lc.lambda.is_none() && lc.sigma.is_none() {
                lc.sigma = Some(cfg.noise.sigma);
            }
            pipeline_surrogate(batch, universe, None, &SurrogateMethod::Lasso(lc))
        }
        EstimatorKind::Epc => pipeline_surrogate(batch, universe, None, &SurrogateMethod::Epc),
        EstimatorKind::Dls => pipeline_surrogate(
            batch,
            universe,
            None,
            &SurrogateMethod::Dls {
                ridge: settings.dls.ridge,
            },
        ),
        EstimatorKind::L0 => Err(Error::InvalidConfig("the l0 oracle is not an experiment method".into())),
    }
}

fn fill_record(
    rec: &mut RunRecord,
    outcome: PipelineOutcome,
    truth: &GroundTruth,
    batch: &EpisodeBatch,
    bench: &TruthBenchmark,
) -> Result<()> {
    let est = &outcome.estimate;
    let err = lasso_error_report(est, truth, batch)?;
    rec.support_size = Some(est.support_hat.len());
    rec.support_recovered = Some(est.support_hat == truth.support);
    rec.false_positives = Some(err.false_positives);
    rec.l2_error = Some(err.l2_error);
    rec.l1_error = Some(err.l1_error);
    rec.prediction_error = Some(err.prediction_error);
    rec.welfare_gap = Some(bench.welfare_gap(outcome.structure())?);
    rec.iterations = Some(est.iterations);
    rec.converged = Some(est.converged);
    rec.artifacts = Some(Arc::new(RunArtifacts {
        theta_hat: est.theta_hat.clone(),
        theta_star: truth.theta_star.clone(),
        structure: outcome.solution.structure,
        optimal_structure: bench.optimal.structure.clone(),
    }));
    Ok(())
}
