#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use sparse_csg::design::{generate_theta, synthesize_batch, DesignConfig, NoiseConfig, NoiseDistribution, SignMode};
use sparse_csg::{CoalitionUniverse, EpisodeBatch, GroundTruth};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// `(universe, truth, batch)` with `m` coalitions drawn from every subset of
/// at most `max_size` agents.
pub fn simulated(
    n_agents: usize,
    max_size: usize,
    k: usize,
    episodes: usize,
    p: f64,
    sigma: f64,
    seed: u64,
) -> (CoalitionUniverse, GroundTruth, EpisodeBatch) {
    let u = CoalitionUniverse::all_up_to_size(n_agents, max_size).unwrap();
    let m = u.len();
    let mut truth = generate_theta(m, k, 1.0, 2.0, SignMode::Rademacher, seed).unwrap();
    truth.sigma = sigma;
    let dcfg = DesignConfig::uniform(m, episodes, p, m, true, seed ^ 0x5a5a);
    let ncfg = NoiseConfig {
        sigma,
        distribution: NoiseDistribution::Gaussian,
        seed: seed ^ 0xa5a5,
    };
    let batch = synthesize_batch(&u, &truth, &dcfg, &ncfg).unwrap();
    (u, truth, batch)
}

/// A batch over an arbitrary design, `Y = Xθ + ε`.
pub fn batch_from(x: DMatrix<f64>, theta: &DVector<f64>, noise: Option<DVector<f64>>, normalised: bool) -> EpisodeBatch {
    let signal = &x * theta;
    let y = match &noise {
        Some(e) => &signal + e,
        None => signal,
    };
    EpisodeBatch::new(x, y, noise, normalised).unwrap()
}

/// Gaussian design with every column scaled to squared norm `T`.
pub fn gaussian_normalised(t: usize, m: usize, r: &mut impl Rng) -> DMatrix<f64> {
    let normal = rand_distr::Normal::new(0.0, 1.0).unwrap();
    let mut x = DMatrix::from_fn(t, m, |_, _| rand_distr::Distribution::sample(&normal, r));
    for mut c in x.column_iter_mut() {
        let s = (t as f64).sqrt() / c.norm();
        c *= s;
    }
    x
}

/// Restricted-growth string of length `n` → partition as lists of 0-based
/// agents; enumerates every set partition.
pub fn all_partitions(n: usize) -> Vec<Vec<Vec<usize>>> {
    fn rec(i: usize, n: usize, cur: &mut Vec<Vec<usize>>, out: &mut Vec<Vec<Vec<usize>>>) {
        if i == n {
            out.push(cur.clone());
            return;
        }
        for b in 0..cur.len() {
            cur[b].push(i);
            rec(i + 1, n, cur, out);
            cur[b].pop();
        }
        cur.push(vec![i]);
        rec(i + 1, n, cur, out);
        cur.pop();
    }
    let mut out = Vec::new();
    rec(0, n, &mut Vec::new(), &mut out);
    out
}
