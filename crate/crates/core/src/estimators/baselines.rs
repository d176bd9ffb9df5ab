//! Baselines that ignore sparsity: the episodic plug-in average and dense
//! (optionally ridge-regularised) least squares.

use nalgebra::{DMatrix, DVector};

use super::least_squares::solve_columns;
use crate::error::{Error, Result};
use crate::model::{EpisodeBatch, EstimateResult, EstimatorKind, Tuning};

/// Average payoff per unit activation over the episodes where each
/// coalition is active; 0 for coalitions that were never active.
pub fn epc(batch: &EpisodeBatch) -> EstimateResult {
    let x = &batch.design;
    let y = &batch.response;
    let theta = DVector::from_iterator(
        batch.m(),
        x.column_iter().map(|col| {
            let (sum, n) = col
                .iter()
                .zip(y.iter())
                .filter(|(&xt, _)| xt != 0.0)
                .fold((0.0, 0usize), |(s, n), (&xt, &yt)| (s + yt / xt, n + 1));
            if n == 0 {
                0.0
            } else {
                sum / n as f64
            }
        }),
    );
    EstimateResult::new(theta, EstimatorKind::Epc, Tuning::default(), 1)
}

/// Minimiser of `(1/2T)‖Y − Xθ‖₂² + (ridge/2)‖θ‖₂²`.
///
/// With `ridge = 0` this is ordinary least squares, which needs `T >= m` and
/// a full-rank design; otherwise the problem is reported as ill-posed.
/// All-zero columns are unidentifiable and pinned to 0.
pub fn dls(batch: &EpisodeBatch, ridge: f64) -> Result<EstimateResult> {
    if !(ridge >= 0.0) || !ridge.is_finite() {
        return Err(Error::InvalidConfig(format!("ridge must be >= 0, got {ridge}")));
    }
    let (t, m) = (batch.episodes(), batch.m());
    let x = &batch.design;
    let y = &batch.response;
    let tuning = Tuning {
        ridge: Some(ridge),
        ..Tuning::default()
    };
    let columns: Vec<usize> = (0..m).filter(|&j| !batch.is_zero_column(j)).collect();
    let mut theta = DVector::zeros(m);

    if ridge == 0.0 {
        if t < m {
            return Err(Error::IllPosed(format!(
                "dense least squares needs T >= m (T = {t}, m = {m}); XᵀX is rank deficient"
            )));
        }
        let coef = solve_columns(x, y, &columns).map_err(|e| match e {
            Error::RankDeficient { columns } => {
                Error::IllPosed(format!("XᵀX is singular; dependent columns {columns:?}"))
            }
            other => other,
        })?;
        for (&j, &v) in columns.iter().zip(coef.iter()) {
            theta[j] = v;
        }
    } else {
        let inv_t = 1.0 / t as f64;
        let sub = x.select_columns(&columns);
        let mut gram: DMatrix<f64> = sub.tr_mul(&sub) * inv_t;
        for i in 0..columns.len() {
            gram[(i, i)] += ridge;
        }
        let rhs = sub.tr_mul(y) * inv_t;
        let chol = gram
            .cholesky()
            .ok_or_else(|| Error::IllPosed("ridge system is not positive definite".into()))?;
        let coef = chol.solve(&rhs);
        for (&j, &v) in columns.iter().zip(coef.iter()) {
            theta[j] = v;
        }
    }
    Ok(EstimateResult::new(theta, EstimatorKind::Dls, tuning, 1))
}
