mod common;

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use sparse_csg::design::{generate_design, DesignConfig};
use sparse_csg::diagnostics::{
    correlation_profile, empirical_gram, gram_deviation, independent_activation_gram, mutual_coherence,
    re_certificate_from_gram,
};
use sparse_csg::estimators::{
    bgcp, dls, kkt_residual, l0_map_oracle, l0_objective, lasso, soft_threshold, BgcpConfig, LassoConfig,
};
use sparse_csg::pipeline::{pipeline_bgcp, pipeline_surrogate, solve_on_estimate, SurrogateMethod, TruthBenchmark};
use sparse_csg::GroundTruth;

use common::{batch_from, gaussian_normalised, rng};

fn sparse_theta(m: usize, support: &[usize], r: &mut impl Rng) -> DVector<f64> {
    let mut theta = DVector::zeros(m);
    for &j in support {
        let s = if r.gen::<bool>() { 1.0 } else { -1.0 };
        theta[j] = s * r.gen_range(1.0..2.0);
    }
    theta
}

#[test]
fn noiseless_bgcp_matches_exhaustive_l0() {
    let (t, m, k) = (30, 10, 2);
    for seed in 0..25 {
        let mut r = rng(seed);
        let x = gaussian_normalised(t, m, &mut r);
        let support: Vec<usize> = rand::seq::index::sample(&mut r, m, k).into_vec();
        let theta = sparse_theta(m, &support, &mut r);
        let batch = batch_from(x, &theta, None, true);
        let lambda0 = 1e-6 * batch.response.norm_squared();
        let oracle = l0_map_oracle(&batch, lambda0, 15).unwrap();
        let greedy = bgcp(&batch, &BgcpConfig::new(k)).unwrap().result;
        let mut s = support.clone();
        s.sort_unstable();
        assert_eq!(oracle.support_hat, s, "seed {seed}");
        if mutual_coherence(&batch.design).unwrap().value < 1.0 / (2.0 * k as f64 - 1.0) {
            assert_eq!(greedy.support_hat, s, "seed {seed}");
        }
        if greedy.support_hat == s {
            assert!((&greedy.theta_hat - &theta).amax() < 1e-9);
        }
    }
}

#[test]
fn l0_objective_never_exceeds_greedy() {
    for seed in 0..20 {
        let mut r = rng(100 + seed);
        let (t, m) = (25, 9);
        let x = gaussian_normalised(t, m, &mut r);
        let theta = sparse_theta(m, &[1, 4, 7], &mut r);
        let noise = DVector::from_fn(t, |_, _| r.gen_range(-0.5..0.5));
        let batch = batch_from(x, &theta, Some(noise), true);
        for lambda0 in [0.05, 0.5, 2.0] {
            let oracle = l0_map_oracle(&batch, lambda0, 15).unwrap();
            let best = l0_objective(&batch, &oracle.theta_hat, lambda0);
            for k in 1..=4 {
                let g = bgcp(&batch, &BgcpConfig::new(k)).unwrap().result;
                assert!(best <= l0_objective(&batch, &g.theta_hat, lambda0) + 1e-9);
            }
        }
    }
}

#[test]
fn orthogonal_lasso_is_soft_thresholding() {
    for seed in 0..10 {
        let mut r = rng(200 + seed);
        let (t, m) = (40, 12);
        let g = gaussian_normalised(t, m, &mut r);
        let q = g.qr().q();
        let x = q * (t as f64).sqrt();
        let y = DVector::from_fn(t, |_, _| r.gen_range(-3.0..3.0));
        let batch = sparse_csg::EpisodeBatch::new(x.clone(), y.clone(), None, true).unwrap();
        let lambda = r.gen_range(0.05..0.8);
        let fit = lasso(&batch, &LassoConfig::fixed(lambda)).unwrap();
        let z = x.tr_mul(&y) / t as f64;
        let closed = z.map(|v| soft_threshold(v, lambda));
        assert!((&fit.result.theta_hat - closed).amax() <= 1e-8);
    }
}

#[test]
fn lasso_with_vanishing_penalty_is_least_squares() {
    let mut r = rng(300);
    let (t, m) = (80, 8);
    let x = gaussian_normalised(t, m, &mut r);
    let theta = DVector::from_fn(m, |_, _| r.gen_range(-2.0..2.0));
    let noise = DVector::from_fn(t, |_, _| r.gen_range(-0.3..0.3));
    let batch = batch_from(x, &theta, Some(noise), true);
    let ols = dls(&batch, 0.0).unwrap();
    let mut cfg = LassoConfig::fixed(1e-12);
    cfg.tol = 1e-12;
    cfg.max_sweeps = 200_000;
    let fit = lasso(&batch, &cfg).unwrap();
    assert!((&fit.result.theta_hat - &ols.theta_hat).amax() < 1e-8);
    assert!(kkt_residual(&batch.design, &batch.response, &fit.result.theta_hat, 1e-12) <= 1e-12);
}

/// Euclidean projection onto the ℓ₁ ball of radius `r`.
fn project_l1(v: &DVector<f64>, r: f64) -> DVector<f64> {
    if v.lp_norm(1) <= r {
        return v.clone();
    }
    let mut a: Vec<f64> = v.iter().map(|x| x.abs()).collect();
    a.sort_by(|x, y| y.total_cmp(x));
    let mut cum = 0.0;
    let mut tau = 0.0;
    for (i, &ai) in a.iter().enumerate() {
        cum += ai;
        let t = (cum - r) / (i + 1) as f64;
        if ai > t {
            tau = t;
        }
    }
    v.map(|x| x.signum() * (x.abs() - tau).max(0.0))
}

/// `κ(S, α)²` by a grid over the unit circle in the `S` block (|S| = 2) and a
/// projected-gradient solve of the convex inner problem over `u_{Sᶜ}`.
fn re_oracle_sq(gram: &DMatrix<f64>, s: [usize; 2], alpha: f64) -> f64 {
    let m = gram.ncols();
    let off: Vec<usize> = (0..m).filter(|j| !s.contains(j)).collect();
    let g_oo = DMatrix::from_fn(off.len(), off.len(), |a, b| gram[(off[a], off[b])]);
    let step = 1.0 / g_oo.symmetric_eigenvalues().max().max(1e-12);
    let mut best = f64::INFINITY;
    let n_grid = 3600;
    for i in 0..n_grid {
        let phi = std::f64::consts::PI * i as f64 / n_grid as f64;
        let us = [phi.cos(), phi.sin()];
        let radius = alpha * (us[0].abs() + us[1].abs());
        let cross = DVector::from_fn(off.len(), |a, _| us[0] * gram[(off[a], s[0])] + us[1] * gram[(off[a], s[1])]);
        let quad_s = us[0] * us[0] * gram[(s[0], s[0])]
            + 2.0 * us[0] * us[1] * gram[(s[0], s[1])]
            + us[1] * us[1] * gram[(s[1], s[1])];
        let mut v = DVector::zeros(off.len());
        for _ in 0..400 {
            let grad = 2.0 * (&g_oo * &v + &cross);
            v = project_l1(&(&v - step * 0.5 * grad), radius);
        }
        let val = quad_s + 2.0 * cross.dot(&v) + (v.transpose() * &g_oo * &v)[(0, 0)];
        best = best.min(val);
    }
    best.max(0.0)
}

#[test]
fn re_certificate_brackets_grid_oracle() {
    for seed in 0..3 {
        let mut r = rng(400 + seed);
        let x = DMatrix::from_fn(40, 6, |_, _| if r.gen::<f64>() < 0.4 { 1.0 } else { 0.0 });
        let gram = empirical_gram(&x);
        let s = [1, 4];
        let kappa = re_oracle_sq(&gram, s, 3.0).sqrt();
        let cert = re_certificate_from_gram(&gram, &s, 3.0, 100_000, seed).unwrap();
        assert!(cert.lower <= kappa + 1e-9, "lower {} > oracle {kappa}", cert.lower);
        assert!(cert.sampled >= kappa - 1e-6, "sampled {} < oracle {kappa}", cert.sampled);
        assert!(cert.sampled <= 1.05 * kappa, "sampled {} not within 5% of {kappa}", cert.sampled);
    }
}

#[test]
fn gram_converges_to_independent_activation_closed_form() {
    let p: Vec<f64> = (0..10).map(|j| 0.05 + 0.04 * j as f64).collect();
    let cfg = DesignConfig {
        m: p.len(),
        episodes: 100_000,
        activation_probs: p.clone(),
        row_cap: p.len(),
        normalise_columns: false,
        seed: 7,
    };
    let x = generate_design(&cfg).unwrap().matrix;
    let dev = gram_deviation(&x, &independent_activation_gram(&p)).unwrap();
    assert!(dev <= 0.01, "deviation {dev}");
}

#[test]
fn noiseless_profile_separates_until_recovery() {
    let mut kept = 0;
    for seed in 0..40 {
        let mut r = rng(500 + seed);
        let (t, m, k) = (600, 30, 3);
        let x = gaussian_normalised(t, m, &mut r);
        if mutual_coherence(&x).unwrap().value >= 1.0 / (2.0 * k as f64 - 1.0) {
            continue;
        }
        kept += 1;
        let support: Vec<usize> = rand::seq::index::sample(&mut r, m, k).into_vec();
        let theta = sparse_theta(m, &support, &mut r);
        let truth = GroundTruth::new(theta.clone(), 1.0, 0.0).unwrap();
        let batch = batch_from(x, &theta, None, true);
        let mut cfg = BgcpConfig::new(k);
        cfg.record_correlations = true;
        let fit = bgcp(&batch, &cfg).unwrap();
        let profile = correlation_profile(&truth, &fit.trace).unwrap();
        assert_eq!(profile.len(), k);
        for step in &profile {
            assert!(step.separated && step.support_within_truth, "seed {seed}: {step:?}");
        }
        assert_eq!(fit.result.support_hat, truth.support);
    }
    assert!(kept >= 10, "only {kept} incoherent designs");
}

#[test]
fn pipeline_gap_is_bounded_by_twice_the_l1_error() {
    for seed in 0..15 {
        let (u, truth, batch) = common::simulated(7, 3, 4, 120, 0.1, 0.7, 600 + seed);
        let bench = TruthBenchmark::new(&u, &truth).unwrap();
        let methods = [
            SurrogateMethod::Epc,
            SurrogateMethod::Lasso(LassoConfig::auto(2.0, Some(0.7))),
            SurrogateMethod::Dls { ridge: 0.1 },
        ];
        for method in &methods {
            let out = pipeline_surrogate(&batch, &u, Some(&truth), method).unwrap();
            let gap = out.welfare_gap.unwrap();
            let l1 = (&out.estimate.theta_hat - &truth.theta_star).lp_norm(1);
            assert!(gap >= -1e-9 && gap <= 2.0 * l1 + 1e-9, "{method:?}: gap {gap}, l1 {l1}");
            assert_eq!(gap, bench.welfare_gap(out.structure()).unwrap());
        }
        let out = pipeline_bgcp(&batch, &u, Some(&truth), &BgcpConfig::new(4)).unwrap();
        let gap = out.welfare_gap.unwrap();
        let l1 = (&out.estimate.theta_hat - &truth.theta_star).lp_norm(1);
        assert!(gap >= -1e-9 && gap <= 2.0 * l1 + 1e-9);
        let unrestricted = solve_on_estimate(&u, &out.estimate, false).unwrap();
        assert_eq!(unrestricted.value, out.solution.value);
    }
}
