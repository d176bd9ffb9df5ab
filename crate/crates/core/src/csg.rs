//! Exact coalition structure generation over a coalition value function.
//!
//! Both solvers maximise `Σ_{S∈P} v(S)` over all partitions `P` of the agents
//! and share one tie-break: among co-optimal structures prefer more blocks,
//! then the lexicographically smallest sequence of block bitmasks (blocks
//! listed by lowest agent). Welfare is accumulated as the right fold
//! `v(B₁) + (v(B₂) + (… + v(B_k)))` in both, so their optima compare exactly.

use std::collections::BTreeMap;

use nalgebra::DVector;

use crate::error::{check_len, Error, Result};
use crate::model::{validate_structure, Coalition, CoalitionStructure, CoalitionUniverse};

pub const DEFAULT_DP_AGENT_CAP: usize = 20;
pub const BRUTEFORCE_AGENT_CAP: usize = 10;

/// Values on (some of) the universe's coalitions; every other subset of the
/// agents is worth `default_value`.
#[derive(Debug, Clone, PartialEq)]
pub struct ValueFunction {
    universe: CoalitionUniverse,
    values: BTreeMap<usize, f64>,
    default_value: f64,
}

impl ValueFunction {
    pub fn new(universe: CoalitionUniverse, values: BTreeMap<usize, f64>, default_value: f64) -> Result<Self> {
        if let Some(&j) = values.keys().find(|&&j| j >= universe.len()) {
            return Err(Error::InvalidConfig(format!("value key {j} is not a universe index")));
        }
        if values.values().chain(std::iter::once(&default_value)).any(|v| !v.is_finite()) {
            return Err(Error::InvalidConfig("coalition values must be finite".into()));
        }
        Ok(Self {
            universe,
            values,
            default_value,
        })
    }

    /// Coalition `j` is worth `theta[j]`; unlisted subsets are worth 0.
    pub fn from_theta(universe: &CoalitionUniverse, theta: &DVector<f64>) -> Result<Self> {
        check_len("value function: theta length", universe.len(), theta.len())?;
        let values = theta.iter().copied().enumerate().collect();
        Self::new(universe.clone(), values, 0.0)
    }

    pub fn universe(&self) -> &CoalitionUniverse {
        &self.universe
    }

    pub fn values(&self) -> &BTreeMap<usize, f64> {
        &self.values
    }

    pub fn default_value(&self) -> f64 {
        self.default_value
    }

    /// Value of every subset of the agents, indexed by bitmask.
    fn table(&self, restrict_to: Option<&[usize]>) -> Vec<f64> {
        let n = self.universe.n_agents();
        let mut table = vec![self.default_value; 1 << n];
        let mut put = |j: usize| {
            if let Some(&v) = self.values.get(&j) {
                table[self.universe.coalition(j).bits() as usize] = v;
            }
        };
        match restrict_to {
            Some(scope) => scope.iter().for_each(|&j| put(j)),
            None => self.values.keys().for_each(|&j| put(j)),
        }
        table
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CsgSolution {
    pub structure: CoalitionStructure,
    /// Optimal value under the value function that was solved.
    pub value: f64,
}

/// Whether `(w, k, seq)` beats the incumbent under the shared order.
fn prefer(w: f64, k: usize, seq: &[u64], best_w: f64, best_k: usize, best_seq: &[u64]) -> bool {
    w > best_w || (w == best_w && (k > best_k || (k == best_k && seq < best_seq)))
}

pub fn solve_csg_dp(vf: &ValueFunction, restrict_to: Option<&[usize]>) -> Result<CsgSolution> {
    solve_csg_dp_with_cap(vf, restrict_to, DEFAULT_DP_AGENT_CAP)
}

/// Subset dynamic programme: `f(U) = max v(C) + f(U \ C)` over blocks `C ⊆ U`
/// containing the lowest agent of `U`, with `f(∅) = 0`.
pub fn solve_csg_dp_with_cap(vf: &ValueFunction, restrict_to: Option<&[usize]>, cap: usize) -> Result<CsgSolution> {
    let n = vf.universe.n_agents();
    if n > cap.min(30) {
        return Err(Error::CapExceeded {
            what: "agent count for the CSG dynamic programme",
            got: n,
            cap: cap.min(30),
        });
    }
    if let Some(scope) = restrict_to {
        if let Some(&j) = scope.iter().find(|&&j| j >= vf.universe.len()) {
            return Err(Error::InvalidConfig(format!("restriction index {j} is not a universe index")));
        }
    }
    let table = vf.table(restrict_to);
    let size = 1usize << n;
    let mut best = vec![0.0f64; size];
    let mut count = vec![0u8; size];
    let mut choice = vec![0u32; size];

    for u in 1..size {
        let low = u & u.wrapping_neg();
        let rest = u ^ low;
        let mut bw = f64::NEG_INFINITY;
        let mut bk = 0u8;
        let mut bc = 0usize;
        let mut sub = rest;
        loop {
            let c = sub | low;
            let remainder = u ^ c;
            let w = table[c] + best[remainder];
            let k = count[remainder] + 1;
            // For a fixed first block the remainder's own optimum decides the
            // rest of the sequence, so comparing first blocks suffices.
            if w > bw || (w == bw && (k > bk || (k == bk && c < bc))) {
                bw = w;
                bk = k;
                bc = c;
            }
            if sub == 0 {
                break;
            }
            sub = (sub - 1) & rest;
        }
        best[u] = bw;
        count[u] = bk;
        choice[u] = bc as u32;
    }

    let mut blocks = Vec::with_capacity(count[size - 1] as usize);
    let mut u = size - 1;
    while u != 0 {
        let c = choice[u] as usize;
        blocks.push(Coalition(c as u64));
        u ^= c;
    }
    let structure = validate_structure(&blocks, &vf.universe)?;
    Ok(CsgSolution {
        structure,
        value: best[size - 1],
    })
}

/// Enumerates every partition (restricted-growth strings) and keeps the best
/// one under the same order as [`solve_csg_dp`].
pub fn solve_csg_bruteforce(vf: &ValueFunction) -> Result<CsgSolution> {
    let n = vf.universe.n_agents();
    if n > BRUTEFORCE_AGENT_CAP {
        return Err(Error::CapExceeded {
            what: "agent count for brute-force CSG",
            got: n,
            cap: BRUTEFORCE_AGENT_CAP,
        });
    }
    let table = vf.table(None);
    let mut labels = vec![0usize; n];
    let mut best_w = f64::NEG_INFINITY;
    let mut best_seq: Vec<u64> = Vec::new();
    let mut seq: Vec<u64> = Vec::with_capacity(n);

    loop {
        seq.clear();
        for (agent, &l) in labels.iter().enumerate() {
            if l == seq.len() {
                seq.push(0);
            }
            seq[l] |= 1 << agent;
        }
        let w = seq.iter().rev().fold(0.0, |acc, &b| table[b as usize] + acc);
        if prefer(w, seq.len(), &seq, best_w, best_seq.len(), &best_seq) {
            best_w = w;
            best_seq.clone_from(&seq);
        }
        if !next_restricted_growth(&mut labels) {
            break;
        }
    }

    let blocks: Vec<Coalition> = best_seq.iter().map(|&b| Coalition(b)).collect();
    let structure = validate_structure(&blocks, &vf.universe)?;
    Ok(CsgSolution {
        structure,
        value: best_w,
    })
}

/// Next restricted-growth string: `a[0] = 0`, `a[i] <= 1 + max(a[..i])`.
fn next_restricted_growth(a: &mut [usize]) -> bool {
    let n = a.len();
    let mut prefix_max = vec![0usize; n];
    for i in 1..n {
        prefix_max[i] = prefix_max[i - 1].max(a[i - 1]);
    }
    for i in (1..n).rev() {
        if a[i] <= prefix_max[i] {
            a[i] += 1;
            for x in a.iter_mut().skip(i + 1) {
                *x = 0;
            }
            return true;
        }
    }
    false
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(labels: &[usize]) -> Coalition {
        Coalition::from_labels(labels).unwrap()
    }

    fn vf_from(n: usize, entries: &[(&[usize], f64)]) -> ValueFunction {
        let coalitions: Vec<Coalition> = entries.iter().map(|(l, _)| c(l)).collect();
        let u = CoalitionUniverse::new(n, coalitions).unwrap();
        let values = entries.iter().map(|(l, v)| (u.index_of(c(l)).unwrap(), *v)).collect();
        ValueFunction::new(u, values, 0.0).unwrap()
    }

    fn bell(n: usize) -> usize {
        let mut a = vec![0usize; n];
        let mut k = 1;
        while next_restricted_growth(&mut a) {
            k += 1;
        }
        k
    }

    #[test]
    fn restricted_growth_counts_bell_numbers() {
        let expected = [1, 2, 5, 15, 52, 203, 877];
        for (i, &b) in expected.iter().enumerate() {
            assert_eq!(bell(i + 1), b);
        }
    }

    #[test]
    fn grand_coalition_dominates() {
        let vf = vf_from(2, &[(&[1, 2], 5.0), (&[1], 1.0), (&[2], 1.0)]);
        let sol = solve_csg_dp(&vf, None).unwrap();
        assert_eq!(sol.structure.blocks, vec![c(&[1, 2])]);
        assert_eq!(sol.value, 5.0);
    }

    #[test]
    fn all_zero_values_give_singletons() {
        let u = CoalitionUniverse::all_up_to_size(4, 4).unwrap();
        let vf = ValueFunction::from_theta(&u, &DVector::zeros(u.len())).unwrap();
        let sol = solve_csg_dp(&vf, None).unwrap();
        assert_eq!(sol.value, 0.0);
        assert_eq!(sol.structure.blocks, (1..=4).map(|a| c(&[a])).collect::<Vec<_>>());
        assert_eq!(solve_csg_bruteforce(&vf).unwrap(), sol);
    }

    #[test]
    fn three_agent_instance() {
        let vf = vf_from(3, &[(&[1, 2], 4.0), (&[3], 2.0), (&[1, 2, 3], 5.0)]);
        let dp = solve_csg_dp(&vf, None).unwrap();
        assert_eq!(dp.structure.blocks, vec![c(&[1, 2]), c(&[3])]);
        assert_eq!(dp.value, 6.0);
        assert_eq!(solve_csg_bruteforce(&vf).unwrap(), dp);
    }

    #[test]
    fn single_agent() {
        let vf = vf_from(1, &[(&[1], -2.0)]);
        let sol = solve_csg_bruteforce(&vf).unwrap();
        assert_eq!(sol.structure.blocks, vec![c(&[1])]);
        assert_eq!(sol.value, -2.0);
    }

    #[test]
    fn negative_values_except_singletons() {
        let u = CoalitionUniverse::all_up_to_size(5, 5).unwrap();
        let theta = DVector::from_iterator(u.len(), u.coalitions().iter().map(|c| if c.len() == 1 { 0.0 } else { -1.0 }));
        // Unlisted subsets do not exist here, and the default would be 0 anyway.
        let vf = ValueFunction::from_theta(&u, &theta).unwrap();
        let sol = solve_csg_bruteforce(&vf).unwrap();
        assert_eq!(sol.value, 0.0);
        assert_eq!(sol.structure.blocks.len(), 5);
        assert_eq!(solve_csg_dp(&vf, None).unwrap(), sol);
    }

    #[test]
    fn restriction_drops_out_of_scope_values() {
        let vf = vf_from(2, &[(&[1, 2], 5.0), (&[1], 1.0), (&[2], 1.0)]);
        let u = vf.universe().clone();
        let singles = [u.index_of(c(&[1])).unwrap(), u.index_of(c(&[2])).unwrap()];
        let sol = solve_csg_dp(&vf, Some(&singles)).unwrap();
        assert_eq!(sol.value, 2.0);
        assert_eq!(sol.structure.blocks.len(), 2);
    }

    #[test]
    fn caps_are_enforced() {
        let u = CoalitionUniverse::all_up_to_size(11, 1).unwrap();
        let vf = ValueFunction::from_theta(&u, &DVector::zeros(11)).unwrap();
        assert!(matches!(solve_csg_bruteforce(&vf), Err(Error::CapExceeded { .. })));
        assert!(matches!(solve_csg_dp_with_cap(&vf, None, 10), Err(Error::CapExceeded { .. })));
    }

    #[test]
    fn bad_keys_rejected() {
        let u = CoalitionUniverse::all_up_to_size(2, 1).unwrap();
        assert!(ValueFunction::new(u.clone(), [(5, 1.0)].into_iter().collect(), 0.0).is_err());
        assert!(ValueFunction::new(u, [(0, f64::NAN)].into_iter().collect(), 0.0).is_err());
    }
}
