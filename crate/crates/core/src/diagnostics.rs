//! Design and estimation diagnostics: coherence, Gram concentration,
//! restricted-eigenvalue certificates, noise-event margins, correlation
//! separation along a BGCP run, and Lasso error summaries.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, Exp1, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::estimators::BgcpTrace;
use crate::model::{EpisodeBatch, EstimateResult, GroundTruth};
use crate::rng::{derive_seed, stream_rng, Stream};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Coherence {
    pub value: f64,
    /// All-zero columns, left out of the maximum.
    pub zero_columns: Vec<usize>,
}

/// `μ(X) = max_{i≠j} |X_iᵀX_j| / (‖X_i‖₂‖X_j‖₂)` over the nonzero columns.
pub fn mutual_coherence(x: &DMatrix<f64>) -> Result<Coherence> {
    if x.ncols() < 2 {
        return Err(Error::InvalidConfig("mutual coherence needs at least two columns".into()));
    }
    let gram = x.tr_mul(x);
    let m = x.ncols();
    let zero_columns: Vec<usize> = (0..m).filter(|&j| gram[(j, j)] == 0.0).collect();
    let mut mu = 0.0f64;
    for j in 0..m {
        if gram[(j, j)] == 0.0 {
            continue;
        }
        for i in 0..j {
            if gram[(i, i)] == 0.0 {
                continue;
            }
            let c = gram[(i, j)].abs() / (gram[(i, i)] * gram[(j, j)]).sqrt();
            mu = mu.max(c);
        }
    }
    Ok(Coherence {
        value: mu.min(1.0),
        zero_columns,
    })
}

/// `Σ̂ = XᵀX / T`.
pub fn empirical_gram(x: &DMatrix<f64>) -> DMatrix<f64> {
    let t = x.nrows().max(1) as f64;
    let mut g = x.tr_mul(x) / t;
    // Mirror the upper triangle so the result is symmetric bit for bit.
    for j in 0..g.ncols() {
        for i in 0..j {
            g[(j, i)] = g[(i, j)];
        }
    }
    g
}

/// Population Gram of the independent-activation binary design without a
/// row cap: `Σ_jj = p_j`, `Σ_ij = p_i p_j`.
pub fn independent_activation_gram(p: &[f64]) -> DMatrix<f64> {
    DMatrix::from_fn(p.len(), p.len(), |i, j| if i == j { p[i] } else { p[i] * p[j] })
}

/// `‖Σ̂ − Σ‖_max`.
pub fn gram_deviation(x: &DMatrix<f64>, sigma_pop: &DMatrix<f64>) -> Result<f64> {
    check_len("gram deviation: rows of population Gram", x.ncols(), sigma_pop.nrows())?;
    check_len("gram deviation: cols of population Gram", x.ncols(), sigma_pop.ncols())?;
    Ok((empirical_gram(x) - sigma_pop).amax())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReCertificate {
    /// Sound lower bound on `κ(S, α)`.
    pub lower: f64,
    /// Smallest `sqrt(uᵀΣ̂u)` over sampled cone directions with `‖u_S‖₂ = 1`;
    /// an upper estimate of `κ(S, α)`.
    pub sampled: f64,
}

/// Brackets the restricted eigenvalue
/// `κ(S, α) = inf ‖Xu‖₂ / (√T ‖u_S‖₂)` over `‖u_{Sᶜ}‖₁ <= α‖u_S‖₁`.
///
/// The lower bound splits `uᵀΣ̂u` into the `S`-block, which is at least
/// `λ_min(Σ̂_SS)`, and a cross term bounded by `‖u‖₁²·‖Σ̂_{S,Sᶜ}‖_max` with
/// `‖u‖₁² <= (1+α)²K`. The upper estimate samples `u_S` uniformly on the
/// unit sphere and spreads an off-support ℓ₁ mass, uniform on
/// `[0, α‖u_S‖₁]`, over a random handful of off-support coordinates with
/// random signs.
pub fn re_certificate(
    x: &DMatrix<f64>,
    support: &[usize],
    alpha: f64,
    n_samples: usize,
    seed: u64,
) -> Result<ReCertificate> {
    let gram = empirical_gram(x);
    re_certificate_from_gram(&gram, support, alpha, n_samples, seed)
}

pub fn re_certificate_from_gram(
    gram: &DMatrix<f64>,
    support: &[usize],
    alpha: f64,
    n_samples: usize,
    seed: u64,
) -> Result<ReCertificate> {
    let m = gram.ncols();
    if support.is_empty() {
        return Err(Error::InvalidConfig("restricted eigenvalue needs a non-empty support".into()));
    }
    if !(alpha >= 1.0) {
        return Err(Error::InvalidConfig(format!("cone parameter alpha = {alpha} must be >= 1")));
    }
    if n_samples == 0 {
        return Err(Error::InvalidConfig("n_samples must be >= 1".into()));
    }
    let mut in_support = vec![false; m];
    for &j in support {
        if j >= m {
            return Err(Error::InvalidConfig(format!("support index {j} out of range")));
        }
        in_support[j] = true;
    }
    let mut on: Vec<usize> = support.to_vec();
    on.sort_unstable();
    on.dedup();
    let off: Vec<usize> = (0..m).filter(|&j| !in_support[j]).collect();
    let k = on.len();

    let block = gram.select_rows(&on).select_columns(&on);
    let lambda_min = block.symmetric_eigenvalues().min();
    let cross_max = on
        .iter()
        .flat_map(|&i| off.iter().map(move |&j| (i, j)))
        .map(|(i, j)| gram[(i, j)].abs())
        .fold(0.0, f64::max);
    let lower = (lambda_min - (1.0 + alpha).powi(2) * k as f64 * cross_max).max(0.0).sqrt();

    let spread_cap = off.len().min((2 * k).max(8));
    let sampled = (0..n_samples)
        .into_par_iter()
        .map(|i| {
            let mut rng = stream_rng(derive_seed(seed, i as u64), Stream::Cone);
            let mut coords: Vec<(usize, f64)> = Vec::with_capacity(k + spread_cap);
            let mut g: Vec<f64> = (0..k).map(|_| StandardNormal.sample(&mut rng)).collect();
            let norm = g.iter().map(|v| v * v).sum::<f64>().sqrt();
            if norm == 0.0 {
                g[0] = 1.0;
            } else {
                g.iter_mut().for_each(|v| *v /= norm);
            }
            let l1_on: f64 = g.iter().map(|v| v.abs()).sum();
            coords.extend(on.iter().copied().zip(g));
            if spread_cap > 0 {
                let mass = rng.gen::<f64>() * alpha * l1_on;
                let r = rng.gen_range(1..=spread_cap);
                let picks = rand::seq::index::sample(&mut rng, off.len(), r);
                let weights: Vec<f64> = (0..r).map(|_| Exp1.sample(&mut rng)).collect();
                let total: f64 = weights.iter().sum();
                for (p, w) in picks.iter().zip(weights) {
                    let sign = if rng.gen::<bool>() { 1.0 } else { -1.0 };
                    coords.push((off[p], sign * mass * w / total));
                }
            }
            let q: f64 = coords
                .iter()
                .map(|&(a, ua)| coords.iter().map(|&(b, ub)| ua * gram[(a, b)] * ub).sum::<f64>())
                .sum();
            q.max(0.0).sqrt()
        })
        .reduce(|| f64::INFINITY, f64::min);

    Ok(ReCertificate { lower, sampled })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseEvent {
    /// `‖Xᵀε/T‖∞`.
    pub max_corr: f64,
    /// `λ/2 − max_corr`.
    pub margin: f64,
    pub event_holds: bool,
}

pub fn noise_event_margin(batch: &EpisodeBatch, lambda: f64) -> Result<NoiseEvent> {
    let noise = batch.noise.as_ref().ok_or(Error::MissingNoise)?;
    let max_corr = (batch.design.tr_mul(noise) / batch.episodes() as f64).amax();
    Ok(NoiseEvent {
        max_corr,
        margin: lambda / 2.0 - max_corr,
        event_holds: max_corr <= lambda / 2.0,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationProfileStep {
    pub iteration: usize,
    /// `min_{j ∈ S*∖Sᵏ} |c_jᵏ|`; `None` once every true atom is selected.
    pub min_true_corr: Option<f64>,
    /// `max_{j ∉ S*} |c_jᵏ|`; 0 when there are no false atoms.
    pub max_false_corr: f64,
    pub separated: bool,
    /// Whether `Sᵏ ⊆ S*` held before this iteration's selection.
    pub support_within_truth: bool,
    pub no_false_atoms: bool,
}

/// Per-iteration comparison of true and false correlations along a BGCP run.
pub fn correlation_profile(truth: &GroundTruth, trace: &BgcpTrace) -> Result<Vec<CorrelationProfileStep>> {
    let m = truth.m();
    let mut is_true = vec![false; m];
    for &j in &truth.support {
        is_true[j] = true;
    }
    let mut selected = vec![false; m];
    let mut within = true;
    let mut out = Vec::with_capacity(trace.steps.len());
    for (k, step) in trace.steps.iter().enumerate() {
        let corr = step.correlations.as_ref().ok_or(Error::MissingCorrelations)?;
        check_len("correlation profile: correlation vector", m, corr.len())?;
        let min_true = (0..m)
            .filter(|&j| is_true[j] && !selected[j])
            .map(|j| corr[j].abs())
            .reduce(f64::min);
        let false_atoms: Vec<usize> = (0..m).filter(|&j| !is_true[j]).collect();
        let max_false = false_atoms.iter().map(|&j| corr[j].abs()).fold(0.0, f64::max);
        out.push(CorrelationProfileStep {
            iteration: k,
            min_true_corr: min_true,
            max_false_corr: max_false,
            separated: min_true.is_none_or(|t| t > max_false),
            support_within_truth: within,
            no_false_atoms: false_atoms.is_empty(),
        });
        selected[step.selected] = true;
        within &= is_true[step.selected];
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LassoErrorReport {
    pub l2_error: f64,
    pub l1_error: f64,
    /// `‖XΔ‖₂² / T`.
    pub prediction_error: f64,
    /// `|supp(θ̂) ∖ S*|`.
    pub false_positives: usize,
    /// `‖Δ_{S*}‖₁`.
    pub on_support_l1: f64,
    /// `‖Δ_{(S*)ᶜ}‖₁`.
    pub off_support_l1: f64,
    /// `off_support_l1 / on_support_l1`: infinite when only the numerator is
    /// positive, 0 when both vanish.
    pub cone_ratio: f64,
}

impl LassoErrorReport {
    /// `‖Δ_{(S*)ᶜ}‖₁ <= α‖Δ_{S*}‖₁ + slack`.
    pub fn in_cone(&self, alpha: f64, slack: f64) -> bool {
        self.off_support_l1 <= alpha * self.on_support_l1 + slack
    }
}

/// Error of an estimate against the truth. Works for any estimator.
pub fn lasso_error_report(result: &EstimateResult, truth: &GroundTruth, batch: &EpisodeBatch) -> Result<LassoErrorReport> {
    let m = truth.m();
    check_len("error report: estimate length", m, result.theta_hat.len())?;
    check_len("error report: design columns", m, batch.m())?;
    let delta: DVector<f64> = &result.theta_hat - &truth.theta_star;
    let mut is_true = vec![false; m];
    for &j in &truth.support {
        is_true[j] = true;
    }
    let (mut on, mut off) = (0.0, 0.0);
    for (j, d) in delta.iter().enumerate() {
        if is_true[j] {
            on += d.abs();
        } else {
            off += d.abs();
        }
    }
    let cone_ratio = if on > 0.0 {
        off / on
    } else if off > 0.0 {
        f64::INFINITY
    } else {
        0.0
    };
    let fitted = &batch.design * &delta;
    Ok(LassoErrorReport {
        l2_error: delta.norm(),
        l1_error: delta.lp_norm(1),
        prediction_error: fitted.norm_squared() / batch.episodes() as f64,
        false_positives: result.support_hat.iter().filter(|&&j| !is_true[j]).count(),
        on_support_l1: on,
        off_support_l1: off,
        cone_ratio,
    })
}

/// Geometry of a design relative to a (true or hypothesised) support.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignReport {
    pub coherence: f64,
    pub zero_columns: Vec<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gram_deviation: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub re_lower_bound: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub re_sampled: Option<f64>,
    /// `μ(X) < 1/(2K − 1)`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub coherence_condition_met: Option<bool>,
    /// `min_{j∈S} Σ̂_jj`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub diag_min: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DesignReportOptions<'a> {
    pub support: Option<&'a [usize]>,
    pub sigma_pop: Option<&'a DMatrix<f64>>,
    pub alpha: f64,
    pub re_samples: usize,
    pub seed: u64,
}

impl Default for DesignReportOptions<'_> {
    fn default() -> Self {
        Self {
            support: None,
            sigma_pop: None,
            alpha: 3.0,
            re_samples: 2000,
            seed: 0,
        }
    }
}

pub fn coherence_condition(mu: f64, k: usize) -> bool {
    k >= 1 && mu < 1.0 / (2.0 * k as f64 - 1.0)
}

pub fn design_report(x: &DMatrix<f64>, opts: &DesignReportOptions<'_>) -> Result<DesignReport> {
    let coh = mutual_coherence(x)?;
    let gram = empirical_gram(x);
    let gram_deviation = match opts.sigma_pop {
        Some(s) => Some(gram_deviation(x, s)?),
        None => None,
    };
    let mut report = DesignReport {
        coherence: coh.value,
        zero_columns: coh.zero_columns,
        gram_deviation,
        re_lower_bound: None,
        re_sampled: None,
        coherence_condition_met: None,
        diag_min: None,
    };
    if let Some(support) = opts.support.filter(|s| !s.is_empty()) {
        let cert = re_certificate_from_gram(&gram, support, opts.alpha, opts.re_samples, opts.seed)?;
        report.re_lower_bound = Some(cert.lower);
        report.re_sampled = Some(cert.sampled);
        report.coherence_condition_met = Some(coherence_condition(report.coherence, support.len()));
        report.diag_min = support.iter().map(|&j| gram[(j, j)]).reduce(f64::min);
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn coherence_simple_cases() {
        let orth = DMatrix::from_row_slice(3, 2, &[1.0, 0.0, 0.0, 1.0, 0.0, 0.0]);
        assert_eq!(mutual_coherence(&orth).unwrap().value, 0.0);
        let prop = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 3.0, 6.0]);
        assert!((mutual_coherence(&prop).unwrap().value - 1.0).abs() < 1e-15);
        // Columns (1,1,0) and (1,-1,1): inner product 0.
        let x = DMatrix::from_row_slice(3, 2, &[1.0, 1.0, 1.0, -1.0, 0.0, 1.0]);
        assert_eq!(mutual_coherence(&x).unwrap().value, 0.0);
        assert!(mutual_coherence(&DMatrix::zeros(3, 1)).is_err());
    }

    #[test]
    fn coherence_skips_zero_columns() {
        let x = DMatrix::from_row_slice(2, 3, &[1.0, 0.0, 1.0, 1.0, 0.0, 0.0]);
        let c = mutual_coherence(&x).unwrap();
        assert_eq!(c.zero_columns, vec![1]);
        assert!((c.value - 1.0 / 2f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn gram_single_row_is_outer_product() {
        let x = DMatrix::from_row_slice(1, 3, &[1.0, -2.0, 0.5]);
        let g = empirical_gram(&x);
        let row = x.row(0).transpose();
        assert_eq!(g, &row * row.transpose());
    }

    #[test]
    fn gram_deviation_sup_norm() {
        let x = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 1.0, 1.0]);
        let g = empirical_gram(&x);
        assert_eq!(gram_deviation(&x, &g).unwrap(), 0.0);
        let mut s = g.clone();
        s[(0, 1)] += 0.3;
        assert!((gram_deviation(&x, &s).unwrap() - 0.3).abs() < 1e-15);
        assert!(gram_deviation(&x, &DMatrix::zeros(3, 3)).is_err());
    }

    #[test]
    fn identity_gram_certificate() {
        let g = DMatrix::identity(6, 6);
        let cert = re_certificate_from_gram(&g, &[0, 2], 3.0, 500, 1).unwrap();
        assert!((cert.lower - 1.0).abs() < 1e-12);
        assert!(cert.sampled >= 1.0 - 1e-12);
        assert!(cert.lower <= cert.sampled + 1e-12);
    }

    #[test]
    fn zero_column_on_support_collapses_sampled_value() {
        let mut x = DMatrix::from_fn(20, 5, |i, j| ((i + j * 3) % 4) as f64);
        x.column_mut(1).fill(0.0);
        let cert = re_certificate(&x, &[1, 3], 3.0, 4000, 2).unwrap();
        assert!(cert.sampled < 0.1, "sampled = {}", cert.sampled);
        assert_eq!(cert.lower, 0.0);
    }

    #[test]
    fn certificate_rejects_bad_input() {
        let g = DMatrix::identity(3, 3);
        assert!(re_certificate_from_gram(&g, &[], 3.0, 10, 0).is_err());
        assert!(re_certificate_from_gram(&g, &[0], 0.5, 10, 0).is_err());
    }

    #[test]
    fn noise_event_cases() {
        let x = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 1.0]);
        let b = EpisodeBatch::new(x.clone(), DVector::zeros(2), Some(DVector::zeros(2)), false).unwrap();
        let ev = noise_event_margin(&b, 0.1).unwrap();
        assert_eq!(ev.max_corr, 0.0);
        assert!(ev.event_holds);
        let b = EpisodeBatch::new(x.clone(), DVector::zeros(2), Some(DVector::from_vec(vec![0.2, 0.0])), false).unwrap();
        let ev = noise_event_margin(&b, 0.0).unwrap();
        assert!(!ev.event_holds);
        assert!((ev.max_corr - 0.1).abs() < 1e-15);
        let b = EpisodeBatch::new(x, DVector::zeros(2), None, false).unwrap();
        assert!(matches!(noise_event_margin(&b, 1.0), Err(Error::MissingNoise)));
    }

    #[test]
    fn error_report_edge_cases() {
        let x = DMatrix::identity(3, 3);
        let b = EpisodeBatch::new(x, DVector::zeros(3), None, false).unwrap();
        let truth = GroundTruth::new(DVector::from_vec(vec![0.0, 2.0, -1.0]), 1.0, 0.0).unwrap();
        let exact = EstimateResult::new(truth.theta_star.clone(), crate::model::EstimatorKind::Lasso, Default::default(), 1);
        let r = lasso_error_report(&exact, &truth, &b).unwrap();
        assert_eq!((r.l2_error, r.l1_error, r.prediction_error, r.false_positives), (0.0, 0.0, 0.0, 0));
        assert_eq!(r.cone_ratio, 0.0);
        let zero = EstimateResult::new(DVector::zeros(3), crate::model::EstimatorKind::Lasso, Default::default(), 1);
        let r = lasso_error_report(&zero, &truth, &b).unwrap();
        assert!((r.l2_error - truth.theta_star.norm()).abs() < 1e-15);
        assert_eq!(r.false_positives, 0);
        let spurious = EstimateResult::new(DVector::from_vec(vec![0.5, 2.0, -1.0]), crate::model::EstimatorKind::Lasso, Default::default(), 1);
        let r = lasso_error_report(&spurious, &truth, &b).unwrap();
        assert_eq!(r.cone_ratio, f64::INFINITY);
        assert_eq!(r.false_positives, 1);
        assert!(!r.in_cone(3.0, 1e-6));
    }
}
