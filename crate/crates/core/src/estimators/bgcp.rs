//! Greedy coalition pursuit: select the column most correlated with the
//! residual, refit least squares on the selected columns, repeat.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use super::least_squares::solve_columns;
use crate::error::{Error, Result};
use crate::model::{EpisodeBatch, EstimateResult, EstimatorKind, Tuning};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BgcpConfig {
    /// Sparsity budget.
    pub k_max: usize,
    /// Residual threshold; iteration stops once `‖r‖₂ <= eta`.
    #[serde(default)]
    pub eta: f64,
    /// Keep the full correlation vector of every iteration in the trace.
    #[serde(default)]
    pub record_correlations: bool,
}

impl BgcpConfig {
    pub fn new(k_max: usize) -> Self {
        Self {
            k_max,
            eta: 0.0,
            record_correlations: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    /// `k_max` columns were selected.
    Budget,
    /// The residual norm dropped to `eta` or below.
    ResidualThreshold,
    /// Every remaining column has zero correlation with the residual.
    NoCorrelation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BgcpStep {
    pub selected: usize,
    /// `|c_j|` of the selected column.
    pub score: f64,
    /// Residual norm after the projection step.
    pub residual_norm: f64,
    /// `c^k = Xᵀr^k / T`, computed before the selection.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub correlations: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BgcpTrace {
    pub initial_residual_norm: f64,
    pub steps: Vec<BgcpStep>,
    pub stop: StopReason,
}

impl BgcpTrace {
    /// Selected indices in selection order.
    pub fn selection_order(&self) -> Vec<usize> {
        self.steps.iter().map(|s| s.selected).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BgcpFit {
    pub result: EstimateResult,
    pub trace: BgcpTrace,
}

/// Residual norms below this fraction of `‖Y‖₂`, and correlations below this
/// fraction of `‖X_j‖₂‖r‖₂/T`, are rounding noise and count as zero.
pub const ZERO_RTOL: f64 = 1e-12;

pub fn bgcp(batch: &EpisodeBatch, cfg: &BgcpConfig) -> Result<BgcpFit> {
    let (t, m) = (batch.episodes(), batch.m());
    if cfg.k_max == 0 || cfg.k_max > t.min(m) {
        return Err(Error::InvalidConfig(format!(
            "k_max = {} must lie in 1..=min(T, m) = {}",
            cfg.k_max,
            t.min(m)
        )));
    }
    if !(cfg.eta >= 0.0) {
        return Err(Error::InvalidConfig("eta must be >= 0".into()));
    }
    let x = &batch.design;
    let y = &batch.response;
    let inv_t = 1.0 / t as f64;

    let mut selected: Vec<usize> = Vec::with_capacity(cfg.k_max);
    let mut in_support = vec![false; m];
    let mut theta = DVector::zeros(m);
    let mut residual = y.clone();
    let mut residual_norm = residual.norm();
    let mut steps = Vec::with_capacity(cfg.k_max);
    let col_norms: Vec<f64> = x.column_iter().map(|c| c.norm()).collect();
    let residual_floor = cfg.eta.max(ZERO_RTOL * y.norm());

    let stop = loop {
        if selected.len() >= cfg.k_max {
            break StopReason::Budget;
        }
        if residual_norm <= residual_floor {
            break StopReason::ResidualThreshold;
        }
        let corr = x.tr_mul(&residual) * inv_t;
        // Ties go to the smallest index.
        let mut best: Option<(usize, f64)> = None;
        for j in (0..m).filter(|&j| !in_support[j]) {
            let s = corr[j].abs();
            if s <= ZERO_RTOL * col_norms[j] * residual_norm * inv_t {
                continue;
            }
            if best.is_none_or(|(_, b)| s > b) {
                best = Some((j, s));
            }
        }
        let (j, score) = match best {
            Some(found) => found,
            _ => break StopReason::NoCorrelation,
        };
        selected.push(j);
        in_support[j] = true;
        let coef = solve_columns(x, y, &selected).map_err(|e| match e {
            Error::RankDeficient { .. } => Error::RankDeficient { columns: vec![j] },
            other => other,
        })?;
        theta.fill(0.0);
        for (&i, &v) in selected.iter().zip(coef.iter()) {
            theta[i] = v;
        }
        residual = y - x * &theta;
        residual_norm = residual.norm();
        steps.push(BgcpStep {
            selected: j,
            score,
            residual_norm,
            correlations: cfg.record_correlations.then(|| corr.iter().copied().collect()),
        });
    };

    let tuning = Tuning {
        k_max: Some(cfg.k_max),
        eta: Some(cfg.eta),
        ..Tuning::default()
    };
    let mut result = EstimateResult::new(theta, EstimatorKind::Bgcp, tuning, steps.len());
    // A refit can return an exact zero on a selected column; the declared
    // support is the selected set either way.
    selected.sort_unstable();
    result.support_hat = selected;
    Ok(BgcpFit {
        result,
        trace: BgcpTrace {
            initial_residual_norm: y.norm(),
            steps,
            stop,
        },
    })
}
