//! Estimate-then-optimise pipelines and welfare-gap evaluation.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::csg::{solve_csg_dp, CsgSolution, ValueFunction};
use crate::error::{check_len, Result};
use crate::estimators::{bgcp, dls, epc, lasso, BgcpConfig, BgcpTrace, LassoConfig};
use crate::model::{welfare, CoalitionStructure, CoalitionUniverse, EpisodeBatch, EstimateResult, GroundTruth};

/// The optimal structure `P*` under the true contributions, computed once
/// and reused for every estimate evaluated against the same truth.
#[derive(Debug, Clone, PartialEq)]
pub struct TruthBenchmark {
    pub optimal: CsgSolution,
    /// `W(P*; θ*)` evaluated with [`welfare`].
    pub optimal_welfare: f64,
    pub theta_star: DVector<f64>,
}

impl TruthBenchmark {
    pub fn new(universe: &CoalitionUniverse, truth: &GroundTruth) -> Result<Self> {
        let vf = ValueFunction::from_theta(universe, &truth.theta_star)?;
        let optimal = solve_csg_dp(&vf, None)?;
        let optimal_welfare = welfare(&optimal.structure, &truth.theta_star)?;
        Ok(Self {
            optimal,
            optimal_welfare,
            theta_star: truth.theta_star.clone(),
        })
    }

    /// `Δ = W(P*; θ*) − W(P̂; θ*)`.
    pub fn welfare_gap(&self, structure: &CoalitionStructure) -> Result<f64> {
        Ok(self.optimal_welfare - welfare(structure, &self.theta_star)?)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineOutcome {
    pub estimate: EstimateResult,
    pub solution: CsgSolution,
    pub welfare_gap: Option<f64>,
    pub bgcp_trace: Option<BgcpTrace>,
}

impl PipelineOutcome {
    pub fn structure(&self) -> &CoalitionStructure {
        &self.solution.structure
    }
}

/// Solves CSG with `C_j ↦ θ̂_j`; with `restrict` only the declared support
/// keeps its estimated values and every other subset is worth 0.
pub fn solve_on_estimate(universe: &CoalitionUniverse, estimate: &EstimateResult, restrict: bool) -> Result<CsgSolution> {
    let vf = ValueFunction::from_theta(universe, &estimate.theta_hat)?;
    let scope = restrict.then_some(estimate.support_hat.as_slice());
    solve_csg_dp(&vf, scope)
}

fn finish(
    universe: &CoalitionUniverse,
    estimate: EstimateResult,
    restrict: bool,
    truth: Option<&GroundTruth>,
    bgcp_trace: Option<BgcpTrace>,
) -> Result<PipelineOutcome> {
    let solution = solve_on_estimate(universe, &estimate, restrict)?;
    let welfare_gap = match truth {
        Some(t) => Some(TruthBenchmark::new(universe, t)?.welfare_gap(&solution.structure)?),
        None => None,
    };
    Ok(PipelineOutcome {
        estimate,
        solution,
        welfare_gap,
        bgcp_trace,
    })
}

/// BGCP, then CSG restricted to the selected coalitions.
pub fn pipeline_bgcp(
    batch: &EpisodeBatch,
    universe: &CoalitionUniverse,
    truth_for_eval: Option<&GroundTruth>,
    cfg: &BgcpConfig,
) -> Result<PipelineOutcome> {
    check_len("pipeline: universe size vs design columns", universe.len(), batch.m())?;
    let fit = bgcp(batch, cfg)?;
    finish(universe, fit.result, true, truth_for_eval, Some(fit.trace))
}

/// Surrogate estimators whose full coefficient vector feeds the CSG solve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "lowercase")]
pub enum SurrogateMethod {
    Lasso(LassoConfig),
    Epc,
    Dls {
        #[serde(default)]
        ridge: f64,
    },
}

impl SurrogateMethod {
    pub fn estimate(&self, batch: &EpisodeBatch) -> Result<EstimateResult> {
        match self {
            Self::Lasso(cfg) => Ok(lasso(batch, cfg)?.result),
            Self::Epc => Ok(epc(batch)),
            Self::Dls { ridge } => dls(batch, *ridge),
        }
    }
}

/// Estimate with `method`, then CSG over the full coalition set.
pub fn pipeline_surrogate(
    batch: &EpisodeBatch,
    universe: &CoalitionUniverse,
    truth_for_eval: Option<&GroundTruth>,
    method: &SurrogateMethod,
) -> Result<PipelineOutcome> {
    check_len("pipeline: universe size vs design columns", universe.len(), batch.m())?;
    let estimate = method.estimate(batch)?;
    finish(universe, estimate, false, truth_for_eval, None)
}
