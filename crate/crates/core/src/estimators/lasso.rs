//! ℓ₁-penalised least squares, `min (1/2T)‖Y − Xθ‖₂² + λ‖θ‖₁`, by cyclic
//! coordinate descent with exact soft-threshold updates.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{support_of, EpisodeBatch, EstimateResult, EstimatorKind, Tuning};

fn default_c0() -> f64 {
    2.0
}

fn default_max_sweeps() -> usize {
    10_000
}

fn default_tol() -> f64 {
    1e-8
}

fn default_support_threshold() -> f64 {
    1e-8
}

/// Lasso settings. Leaving `lambda` unset selects
/// `λ = c0 · σ̂ · sqrt(ln m / T)`, where `σ̂` is `sigma` when given and the
/// sample standard deviation of `Y` otherwise.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LassoConfig {
    #[serde(default)]
    pub lambda: Option<f64>,
    #[serde(default = "default_c0")]
    pub c0: f64,
    #[serde(default)]
    pub sigma: Option<f64>,
    #[serde(default = "default_max_sweeps")]
    pub max_sweeps: usize,
    /// Stop once the KKT residual is at most this.
    #[serde(default = "default_tol")]
    pub tol: f64,
    #[serde(default = "default_support_threshold")]
    pub support_threshold: f64,
}

impl Default for LassoConfig {
    fn default() -> Self {
        Self {
            lambda: None,
            c0: default_c0(),
            sigma: None,
            max_sweeps: default_max_sweeps(),
            tol: default_tol(),
            support_threshold: default_support_threshold(),
        }
    }
}

impl LassoConfig {
    pub fn fixed(lambda: f64) -> Self {
        Self {
            lambda: Some(lambda),
            ..Self::default()
        }
    }

    pub fn auto(c0: f64, sigma: Option<f64>) -> Self {
        Self {
            c0,
            sigma,
            ..Self::default()
        }
    }

    pub fn resolve_lambda(&self, batch: &EpisodeBatch) -> Result<f64> {
        let lambda = match self.lambda {
            Some(l) => l,
            None => {
                if !(self.c0 > 0.0) {
                    return Err(Error::InvalidConfig("c0 must be positive".into()));
                }
                let sigma = match self.sigma {
                    Some(s) => s,
                    None => sample_std(&batch.response),
                };
                let (t, m) = (batch.episodes() as f64, batch.m() as f64);
                self.c0 * sigma * (m.ln() / t).sqrt()
            }
        };
        if !(lambda > 0.0) || !lambda.is_finite() {
            return Err(Error::InvalidConfig(format!("lambda must be positive, got {lambda}")));
        }
        Ok(lambda)
    }
}

fn sample_std(y: &DVector<f64>) -> f64 {
    let n = y.len();
    if n < 2 {
        return y.amax();
    }
    let mean = y.mean();
    (y.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
}

pub fn soft_threshold(z: f64, lambda: f64) -> f64 {
    if z > lambda {
        z - lambda
    } else if z < -lambda {
        z + lambda
    } else {
        0.0
    }
}

/// `(1/2T)‖Y − Xθ‖₂² + λ‖θ‖₁`.
pub fn lasso_objective(x: &DMatrix<f64>, y: &DVector<f64>, theta: &DVector<f64>, lambda: f64) -> f64 {
    let r = y - x * theta;
    r.norm_squared() / (2.0 * x.nrows() as f64) + lambda * theta.lp_norm(1)
}

/// `max_j dist(0, ∂_j objective)`: for `θ_j ≠ 0` the gap
/// `|g_j − λ sign θ_j|`, otherwise `max(0, |g_j| − λ)`, with
/// `g = Xᵀ(Y − Xθ)/T`. Zero columns are skipped.
pub fn kkt_residual(x: &DMatrix<f64>, y: &DVector<f64>, theta: &DVector<f64>, lambda: f64) -> f64 {
    let r = y - x * theta;
    let g = x.tr_mul(&r) / x.nrows() as f64;
    g.iter()
        .zip(theta.iter())
        .map(|(&gj, &tj)| {
            if tj != 0.0 {
                (gj - lambda * tj.signum()).abs()
            } else {
                (gj.abs() - lambda).max(0.0)
            }
        })
        .fold(0.0, f64::max)
}

#[derive(Debug, Clone, PartialEq)]
pub struct LassoFit {
    pub result: EstimateResult,
    pub lambda: f64,
    /// Objective after each sweep.
    pub objective_trace: Vec<f64>,
}

/// Runs coordinate descent from `θ = 0`.
///
/// Non-convergence is not an error: the result comes back with
/// `converged = false` and the final KKT residual.
pub fn lasso(batch: &EpisodeBatch, cfg: &LassoConfig) -> Result<LassoFit> {
    if !(cfg.tol > 0.0) {
        return Err(Error::InvalidConfig("tol must be positive".into()));
    }
    if !(cfg.support_threshold >= 0.0) {
        return Err(Error::InvalidConfig("support_threshold must be >= 0".into()));
    }
    let lambda = cfg.resolve_lambda(batch)?;
    let x = &batch.design;
    let y = &batch.response;
    let (t, m) = (batch.episodes(), batch.m());
    let inv_t = 1.0 / t as f64;
    let curvature: Vec<f64> = x.column_iter().map(|c| c.norm_squared() * inv_t).collect();

    let mut theta = DVector::<f64>::zeros(m);
    let mut residual = y.clone();
    let mut objective_trace = Vec::new();
    let mut sweeps = 0;
    let mut kkt = f64::INFINITY;

    while sweeps < cfg.max_sweeps {
        sweeps += 1;
        for j in 0..m {
            let a = curvature[j];
            if a == 0.0 {
                continue;
            }
            let col = x.column(j);
            let z = col.dot(&residual) * inv_t + a * theta[j];
            let updated = soft_threshold(z, lambda) / a;
            let delta = updated - theta[j];
            if delta != 0.0 {
                residual.axpy(-delta, &col, 1.0);
                theta[j] = updated;
            }
        }
        // Refresh the residual so drift from the incremental updates never
        // reaches the certificate.
        residual = y - x * &theta;
        objective_trace.push(residual.norm_squared() * inv_t * 0.5 + lambda * theta.lp_norm(1));
        kkt = kkt_residual(x, y, &theta, lambda);
        if kkt <= cfg.tol {
            break;
        }
    }

    for v in theta.iter_mut() {
        if v.abs() <= cfg.support_threshold {
            *v = 0.0;
        }
    }
    if cfg.support_threshold > 0.0 {
        kkt = kkt_residual(x, y, &theta, lambda);
    }
    let tuning = Tuning {
        lambda: Some(lambda),
        support_threshold: Some(cfg.support_threshold),
        ..Tuning::default()
    };
    let mut result = EstimateResult::new(theta, EstimatorKind::Lasso, tuning, sweeps);
    result.support_hat = support_of(&result.theta_hat, 0.0);
    result.converged = kkt <= cfg.tol;
    result.kkt_residual = Some(kkt);
    Ok(LassoFit {
        result,
        lambda,
        objective_trace,
    })
}
