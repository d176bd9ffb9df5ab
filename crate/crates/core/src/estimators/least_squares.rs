use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::model::EpisodeBatch;

/// A column whose component orthogonal to the preceding columns is smaller
/// than this fraction of its own norm is treated as linearly dependent.
pub const RANK_RTOL: f64 = 1e-10;

/// Householder-QR least squares on the given columns of `x`.
///
/// Returns the coefficients in the order of `columns`. On rank deficiency the
/// error lists the offending entries of `columns`.
pub(crate) fn solve_columns(x: &DMatrix<f64>, y: &DVector<f64>, columns: &[usize]) -> Result<DVector<f64>> {
    let k = columns.len();
    if k == 0 {
        return Ok(DVector::zeros(0));
    }
    if k > x.nrows() {
        return Err(Error::RankDeficient {
            columns: columns[x.nrows()..].to_vec(),
        });
    }
    let sub = x.select_columns(columns);
    let norms: Vec<f64> = sub.column_iter().map(|c| c.norm()).collect();
    let qr = sub.qr();
    let r = qr.r();
    let dependent: Vec<usize> = (0..k)
        .filter(|&i| norms[i] == 0.0 || r[(i, i)].abs() <= RANK_RTOL * norms[i])
        .map(|i| columns[i])
        .collect();
    if !dependent.is_empty() {
        return Err(Error::RankDeficient { columns: dependent });
    }
    let mut qty = y.clone();
    qr.q_tr_mul(&mut qty);
    let rhs = qty.rows(0, k).into_owned();
    r.solve_upper_triangular(&rhs).ok_or(Error::RankDeficient {
        columns: columns.to_vec(),
    })
}

/// Minimiser of `‖Y − X_S u‖₂²`, embedded in an m-vector with zeros off `support`.
pub fn least_squares_on_support(batch: &EpisodeBatch, support: &[usize]) -> Result<DVector<f64>> {
    let m = batch.m();
    if let Some(&j) = support.iter().find(|&&j| j >= m) {
        return Err(Error::InvalidConfig(format!("support index {j} out of range for m = {m}")));
    }
    let coef = solve_columns(&batch.design, &batch.response, support)?;
    let mut theta = DVector::zeros(m);
    for (&j, &v) in support.iter().zip(coef.iter()) {
        theta[j] = v;
    }
    Ok(theta)
}
