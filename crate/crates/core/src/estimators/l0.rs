use nalgebra::DVector;

use super::least_squares::solve_columns;
use crate::error::{Error, Result};
use crate::model::{EpisodeBatch, EstimateResult, EstimatorKind, Tuning};

pub const DEFAULT_L0_MAX_M: usize = 15;

/// Exact minimiser of `(1/2)‖Y − Xθ‖₂² + λ₀‖θ‖₀` by enumerating every
/// support.
///
/// Supports are visited by size, then in lexicographic order, and only a
/// strictly better objective replaces the incumbent, so ties go to the
/// smaller support and then to the lexicographically smaller one.
/// Rank-deficient supports are skipped: a proper subset reaches the same
/// residual with a smaller penalty.
pub fn l0_map_oracle(batch: &EpisodeBatch, lambda0: f64, max_m: usize) -> Result<EstimateResult> {
    let m = batch.m();
    if m > max_m {
        return Err(Error::CapExceeded {
            what: "m for exhaustive l0 search",
            got: m,
            cap: max_m,
        });
    }
    if !(lambda0 > 0.0) {
        return Err(Error::InvalidConfig("lambda0 must be positive".into()));
    }
    let x = &batch.design;
    let y = &batch.response;

    let mut best_obj = 0.5 * y.norm_squared();
    let mut best: (Vec<usize>, DVector<f64>) = (Vec::new(), DVector::zeros(0));
    let mut visited = 1usize;

    for size in 1..=m.min(batch.episodes()) {
        let mut combo: Vec<usize> = (0..size).collect();
        loop {
            visited += 1;
            if let Ok(coef) = solve_columns(x, y, &combo) {
                let fitted = x.select_columns(&combo) * &coef;
                let obj = 0.5 * (y - fitted).norm_squared() + lambda0 * size as f64;
                if obj < best_obj {
                    best_obj = obj;
                    best = (combo.clone(), coef);
                }
            }
            if !next_combination(&mut combo, m) {
                break;
            }
        }
    }

    let mut theta = DVector::zeros(m);
    for (&j, &v) in best.0.iter().zip(best.1.iter()) {
        theta[j] = v;
    }
    let tuning = Tuning {
        lambda0: Some(lambda0),
        ..Tuning::default()
    };
    let mut result = EstimateResult::new(theta, EstimatorKind::L0, tuning, visited);
    result.support_hat = best.0;
    Ok(result)
}

/// Advances `combo` to the next k-subset of `0..n` in lexicographic order.
fn next_combination(combo: &mut [usize], n: usize) -> bool {
    let k = combo.len();
    let mut i = k;
    while i > 0 {
        i -= 1;
        if combo[i] < n - k + i {
            combo[i] += 1;
            for l in i + 1..k {
                combo[l] = combo[l - 1] + 1;
            }
            return true;
        }
    }
    false
}

/// `(1/2)‖Y − Xθ‖₂² + λ₀‖θ‖₀`.
pub fn l0_objective(batch: &EpisodeBatch, theta: &DVector<f64>, lambda0: f64) -> f64 {
    let r = &batch.response - &batch.design * theta;
    0.5 * r.norm_squared() + lambda0 * theta.iter().filter(|v| **v != 0.0).count() as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DMatrix;

    #[test]
    fn combinations_are_lexicographic() {
        let mut c = vec![0, 1];
        let mut all = vec![c.clone()];
        while next_combination(&mut c, 4) {
            all.push(c.clone());
        }
        assert_eq!(all, vec![vec![0, 1], vec![0, 2], vec![0, 3], vec![1, 2], vec![1, 3], vec![2, 3]]);
    }

    fn batch() -> EpisodeBatch {
        let x = DMatrix::from_fn(8, 5, |i, j| ((i + 1) * (j + 2) % 7) as f64 - 3.0);
        let theta = DVector::from_vec(vec![0.0, 2.0, 0.0, -1.0, 0.0]);
        let y = &x * theta;
        EpisodeBatch::new(x, y, None, false).unwrap()
    }

    #[test]
    fn huge_penalty_gives_empty_support() {
        let est = l0_map_oracle(&batch(), 1e12, 15).unwrap();
        assert!(est.support_hat.is_empty());
        assert_eq!(est.theta_hat, DVector::zeros(5));
    }

    #[test]
    fn noiseless_recovery() {
        let b = batch();
        let est = l0_map_oracle(&b, 1e-3, 15).unwrap();
        assert_eq!(est.support_hat, vec![1, 3]);
        let r = &b.response - &b.design * &est.theta_hat;
        assert!(r.norm() < 1e-10);
    }

    #[test]
    fn cap_is_enforced() {
        assert!(matches!(l0_map_oracle(&batch(), 1.0, 4), Err(Error::CapExceeded { .. })));
    }
}
