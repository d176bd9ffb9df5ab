//! Shared domain types: the coalition library, ground truth, episode batches,
//! estimates, coalition structures, and the welfare functional.
//!
//! Agents are 0-based inside the crate. File formats and CLI output use
//! 1-based agent and coalition indices.

use std::collections::HashMap;
use std::fmt;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};

/// Largest agent count a [`Coalition`] bitmask can hold.
pub const MAX_AGENTS: usize = 64;

/// A set of agents, stored as a bitmask (bit `i` = agent `i`, 0-based).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Coalition(pub u64);

impl Coalition {
    pub fn from_agents<I: IntoIterator<Item = usize>>(agents: I) -> Result<Self> {
        let mut bits = 0u64;
        for a in agents {
            if a >= MAX_AGENTS {
                return Err(Error::InvalidCoalition(format!("agent index {a} out of range")));
            }
            bits |= 1 << a;
        }
        Ok(Coalition(bits))
    }

    /// Builds a coalition from 1-based agent labels, as used in files.
    pub fn from_labels(labels: &[usize]) -> Result<Self> {
        if labels.contains(&0) {
            return Err(Error::InvalidCoalition("agent labels are 1-based".into()));
        }
        Self::from_agents(labels.iter().map(|l| l - 1))
    }

    pub fn singleton(agent: usize) -> Self {
        Coalition(1 << agent)
    }

    pub fn bits(self) -> u64 {
        self.0
    }

    pub fn len(self) -> usize {
        self.0.count_ones() as usize
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    pub fn contains(self, agent: usize) -> bool {
        agent < MAX_AGENTS && self.0 & (1 << agent) != 0
    }

    pub fn lowest_agent(self) -> Option<usize> {
        (self.0 != 0).then(|| self.0.trailing_zeros() as usize)
    }

    /// 0-based agent indices in increasing order.
    pub fn agents(self) -> impl Iterator<Item = usize> {
        let mut bits = self.0;
        std::iter::from_fn(move || {
            if bits == 0 {
                None
            } else {
                let a = bits.trailing_zeros() as usize;
                bits &= bits - 1;
                Some(a)
            }
        })
    }

    pub fn labels(self) -> Vec<usize> {
        self.agents().map(|a| a + 1).collect()
    }

    fn fits(self, n_agents: usize) -> bool {
        n_agents >= MAX_AGENTS || self.0 >> n_agents == 0
    }
}

impl fmt::Display for Coalition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{{")?;
        for (i, l) in self.labels().iter().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "{l}")?;
        }
        write!(f, "}}")
    }
}

/// The agent set and the indexed library of candidate coalitions.
///
/// Coalitions are kept in canonical order: by size, then by bitmask value.
#[derive(Debug, Clone, PartialEq)]
pub struct CoalitionUniverse {
    n_agents: usize,
    coalitions: Vec<Coalition>,
    contains_singletons: bool,
    index: HashMap<Coalition, usize>,
}

impl CoalitionUniverse {
    pub fn new(n_agents: usize, mut coalitions: Vec<Coalition>) -> Result<Self> {
        if n_agents == 0 || n_agents > MAX_AGENTS {
            return Err(Error::InvalidConfig(format!(
                "n_agents must lie in 1..={MAX_AGENTS}, got {n_agents}"
            )));
        }
        for c in &coalitions {
            if c.is_empty() {
                return Err(Error::InvalidCoalition("empty coalition in library".into()));
            }
            if !c.fits(n_agents) {
                return Err(Error::InvalidCoalition(format!(
                    "coalition {c} references agents beyond {n_agents}"
                )));
            }
        }
        coalitions.sort_by_key(|c| (c.len(), c.bits()));
        if let Some(w) = coalitions.windows(2).find(|w| w[0] == w[1]) {
            return Err(Error::InvalidCoalition(format!("duplicate coalition {}", w[0])));
        }
        let index: HashMap<Coalition, usize> =
            coalitions.iter().enumerate().map(|(i, &c)| (c, i)).collect();
        let contains_singletons = (0..n_agents).all(|a| index.contains_key(&Coalition::singleton(a)));
        Ok(Self {
            n_agents,
            coalitions,
            contains_singletons,
            index,
        })
    }

    /// Every non-empty coalition of at most `max_size` agents.
    pub fn all_up_to_size(n_agents: usize, max_size: usize) -> Result<Self> {
        if n_agents == 0 || n_agents > 30 {
            return Err(Error::InvalidConfig(format!(
                "all_up_to_size supports 1..=30 agents, got {n_agents}"
            )));
        }
        if max_size == 0 {
            return Err(Error::InvalidConfig("max coalition size must be >= 1".into()));
        }
        let coalitions = (1u64..(1u64 << n_agents))
            .filter(|b| b.count_ones() as usize <= max_size)
            .map(Coalition)
            .collect();
        Self::new(n_agents, coalitions)
    }

    pub fn n_agents(&self) -> usize {
        self.n_agents
    }

    /// Number of candidate coalitions `m`.
    pub fn len(&self) -> usize {
        self.coalitions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coalitions.is_empty()
    }

    pub fn coalitions(&self) -> &[Coalition] {
        &self.coalitions
    }

    pub fn coalition(&self, j: usize) -> Coalition {
        self.coalitions[j]
    }

    pub fn index_of(&self, c: Coalition) -> Option<usize> {
        self.index.get(&c).copied()
    }

    pub fn contains_singletons(&self) -> bool {
        self.contains_singletons
    }

    pub fn grand_coalition(&self) -> Coalition {
        if self.n_agents == MAX_AGENTS {
            Coalition(u64::MAX)
        } else {
            Coalition((1u64 << self.n_agents) - 1)
        }
    }
}

/// Sparse coalition contributions used to generate data.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth {
    pub theta_star: DVector<f64>,
    /// Sorted 0-based indices of the nonzero coordinates.
    pub support: Vec<usize>,
    pub theta_min: f64,
    pub sigma: f64,
}

impl GroundTruth {
    pub fn new(theta_star: DVector<f64>, theta_min: f64, sigma: f64) -> Result<Self> {
        if !(theta_min > 0.0) {
            return Err(Error::InvalidConfig("theta_min must be positive".into()));
        }
        if sigma < 0.0 {
            return Err(Error::InvalidConfig("sigma must be non-negative".into()));
        }
        let support = support_of(&theta_star, 0.0);
        if let Some(&j) = support.iter().find(|&&j| theta_star[j].abs() < theta_min) {
            return Err(Error::InvalidConfig(format!(
                "|theta*_{j}| = {} is below theta_min = {theta_min}",
                theta_star[j].abs()
            )));
        }
        Ok(Self {
            theta_star,
            support,
            theta_min,
            sigma,
        })
    }

    pub fn sparsity(&self) -> usize {
        self.support.len()
    }

    pub fn m(&self) -> usize {
        self.theta_star.len()
    }
}

/// Indices `j` with `|v_j| > threshold`.
pub fn support_of(v: &DVector<f64>, threshold: f64) -> Vec<usize> {
    v.iter()
        .enumerate()
        .filter(|(_, x)| x.abs() > threshold)
        .map(|(j, _)| j)
        .collect()
}

/// A batch of `T` episodes: design `X` (T×m), response `Y`, and the realised
/// noise when the batch was simulated.
#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeBatch {
    pub design: DMatrix<f64>,
    pub response: DVector<f64>,
    pub noise: Option<DVector<f64>>,
    pub column_normalised: bool,
    /// Columns that are identically zero (coalitions never activated).
    pub zero_columns: Vec<usize>,
}

pub const NORMALISATION_RTOL: f64 = 1e-10;

impl EpisodeBatch {
    pub fn new(
        design: DMatrix<f64>,
        response: DVector<f64>,
        noise: Option<DVector<f64>>,
        column_normalised: bool,
    ) -> Result<Self> {
        let t = design.nrows();
        check_len("response length", t, response.len())?;
        if let Some(e) = &noise {
            check_len("noise length", t, e.len())?;
        }
        let zero_columns: Vec<usize> = (0..design.ncols())
            .filter(|&j| design.column(j).iter().all(|&x| x == 0.0))
            .collect();
        if column_normalised {
            for j in 0..design.ncols() {
                if zero_columns.binary_search(&j).is_ok() {
                    continue;
                }
                let sq = design.column(j).norm_squared();
                if ((sq - t as f64) / t as f64).abs() > NORMALISATION_RTOL {
                    return Err(Error::InvalidConfig(format!(
                        "column {j} has squared norm {sq}, expected {t} for a normalised design"
                    )));
                }
            }
        }
        Ok(Self {
            design,
            response,
            noise,
            column_normalised,
            zero_columns,
        })
    }

    pub fn episodes(&self) -> usize {
        self.design.nrows()
    }

    pub fn m(&self) -> usize {
        self.design.ncols()
    }

    pub fn is_zero_column(&self, j: usize) -> bool {
        self.zero_columns.binary_search(&j).is_ok()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EstimatorKind {
    Bgcp,
    Lasso,
    Epc,
    Dls,
    L0,
}

impl EstimatorKind {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Bgcp => "bgcp",
            Self::Lasso => "lasso",
            Self::Epc => "epc",
            Self::Dls => "dls",
            Self::L0 => "l0",
        }
    }
}

impl fmt::Display for EstimatorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for EstimatorKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "bgcp" => Ok(Self::Bgcp),
            "lasso" | "l1" => Ok(Self::Lasso),
            "epc" => Ok(Self::Epc),
            "dls" => Ok(Self::Dls),
            "l0" => Ok(Self::L0),
            other => Err(Error::InvalidConfig(format!("unknown estimator `{other}`"))),
        }
    }
}

/// Hyperparameters actually used for an estimate.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Tuning {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lambda: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub k_max: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub eta: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub support_threshold: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ridge: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lambda0: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EstimateResult {
    pub theta_hat: DVector<f64>,
    /// Sorted indices with `theta_hat_j != 0`.
    pub support_hat: Vec<usize>,
    pub estimator: EstimatorKind,
    pub tuning: Tuning,
    pub iterations: usize,
    pub converged: bool,
    /// Largest KKT violation at the returned point (Lasso only).
    pub kkt_residual: Option<f64>,
}

impl EstimateResult {
    pub(crate) fn new(theta_hat: DVector<f64>, estimator: EstimatorKind, tuning: Tuning, iterations: usize) -> Self {
        let support_hat = support_of(&theta_hat, 0.0);
        Self {
            theta_hat,
            support_hat,
            estimator,
            tuning,
            iterations,
            converged: true,
            kkt_residual: None,
        }
    }
}

/// A partition of the agent set, with its indicator over the universe.
#[derive(Debug, Clone, PartialEq)]
pub struct CoalitionStructure {
    /// Blocks ordered by their lowest agent.
    pub blocks: Vec<Coalition>,
    /// `indicator[j]` is true iff coalition `j` of the universe is a block.
    pub indicator: Vec<bool>,
    /// Blocks that are not in the universe (they carry zero welfare).
    pub unlisted_blocks: Vec<Coalition>,
}

impl CoalitionStructure {
    pub fn used_indices(&self) -> impl Iterator<Item = usize> + '_ {
        self.indicator.iter().enumerate().filter(|(_, &z)| z).map(|(j, _)| j)
    }

    pub fn block_labels(&self) -> Vec<Vec<usize>> {
        self.blocks.iter().map(|b| b.labels()).collect()
    }
}

/// Checks that `blocks` partition the agents and builds the indicator.
pub fn validate_structure(blocks: &[Coalition], universe: &CoalitionUniverse) -> Result<CoalitionStructure> {
    let n = universe.n_agents();
    let mut covered = 0u64;
    for &b in blocks {
        if b.is_empty() {
            return Err(Error::EmptyBlock);
        }
        if !b.fits(n) {
            return Err(Error::InvalidCoalition(format!("block {b} references agents beyond {n}")));
        }
        let overlap = covered & b.bits();
        if overlap != 0 {
            return Err(Error::OverlappingBlocks {
                agent: overlap.trailing_zeros() as usize + 1,
            });
        }
        covered |= b.bits();
    }
    let missing = universe.grand_coalition().bits() & !covered;
    if missing != 0 {
        return Err(Error::UncoveredAgents {
            agents: Coalition(missing).labels(),
        });
    }
    let mut sorted = blocks.to_vec();
    sorted.sort_by_key(|b| b.lowest_agent());
    let mut indicator = vec![false; universe.len()];
    let mut unlisted_blocks = Vec::new();
    for &b in &sorted {
        match universe.index_of(b) {
            Some(j) => indicator[j] = true,
            None => unlisted_blocks.push(b),
        }
    }
    Ok(CoalitionStructure {
        blocks: sorted,
        indicator,
        unlisted_blocks,
    })
}

/// Welfare `z(P)ᵀθ`: the sum of `theta` over the coalitions the structure uses.
pub fn welfare(structure: &CoalitionStructure, theta: &DVector<f64>) -> Result<f64> {
    check_len("welfare: theta length", structure.indicator.len(), theta.len())?;
    Ok(structure.used_indices().map(|j| theta[j]).sum())
}

/// Returns `(|W(P;θa) − W(P;θb)|, ‖θa − θb‖₁)`.
///
/// The welfare difference is accumulated as a sum of coordinate differences
/// in index order, the same order as the ℓ₁ sum, so `gap <= bound` holds in
/// floating point and not only in exact arithmetic.
pub fn welfare_lipschitz_check(
    structure: &CoalitionStructure,
    theta_a: &DVector<f64>,
    theta_b: &DVector<f64>,
) -> Result<(f64, f64)> {
    let m = structure.indicator.len();
    check_len("lipschitz check: theta_a length", m, theta_a.len())?;
    check_len("lipschitz check: theta_b length", m, theta_b.len())?;
    let mut diff = 0.0;
    let mut bound = 0.0;
    for j in 0..m {
        let d = theta_a[j] - theta_b[j];
        if structure.indicator[j] {
            diff += d;
        }
        bound += d.abs();
    }
    Ok((diff.abs(), bound))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(labels: &[usize]) -> Coalition {
        Coalition::from_labels(labels).unwrap()
    }

    #[test]
    fn universe_is_canonically_ordered() {
        let u = CoalitionUniverse::new(3, vec![c(&[1, 2, 3]), c(&[2]), c(&[1, 3]), c(&[1])]).unwrap();
        let order: Vec<Vec<usize>> = u.coalitions().iter().map(|c| c.labels()).collect();
        assert_eq!(order, vec![vec![1], vec![2], vec![1, 3], vec![1, 2, 3]]);
        assert!(!u.contains_singletons());
        assert_eq!(u.index_of(c(&[1, 3])), Some(2));
    }

    #[test]
    fn universe_rejects_duplicates_and_out_of_range() {
        assert!(CoalitionUniverse::new(2, vec![c(&[1]), c(&[1])]).is_err());
        assert!(CoalitionUniverse::new(2, vec![c(&[3])]).is_err());
        assert!(CoalitionUniverse::new(2, vec![Coalition(0)]).is_err());
    }

    #[test]
    fn all_up_to_size_counts() {
        let u = CoalitionUniverse::all_up_to_size(14, 3).unwrap();
        assert_eq!(u.len(), 14 + 91 + 364);
        assert!(u.contains_singletons());
        let full = CoalitionUniverse::all_up_to_size(3, 3).unwrap();
        assert_eq!(full.len(), 7);
    }

    #[test]
    fn validate_accepts_singletons() {
        let u = CoalitionUniverse::all_up_to_size(2, 2).unwrap();
        let s = validate_structure(&[c(&[1]), c(&[2])], &u).unwrap();
        assert_eq!(s.indicator, vec![true, true, false]);
    }

    #[test]
    fn validate_rejects_overlap() {
        let u = CoalitionUniverse::all_up_to_size(2, 2).unwrap();
        match validate_structure(&[c(&[1, 2]), c(&[2])], &u) {
            Err(Error::OverlappingBlocks { agent }) => assert_eq!(agent, 2),
            other => panic!("expected overlap error, got {other:?}"),
        }
    }

    #[test]
    fn validate_rejects_uncovered() {
        let u = CoalitionUniverse::all_up_to_size(2, 2).unwrap();
        match validate_structure(&[c(&[1])], &u) {
            Err(Error::UncoveredAgents { agents }) => assert_eq!(agents, vec![2]),
            other => panic!("expected uncovered error, got {other:?}"),
        }
        assert!(matches!(
            validate_structure(&[Coalition(0), c(&[1, 2])], &u),
            Err(Error::EmptyBlock)
        ));
    }

    #[test]
    fn welfare_single_active_coordinate() {
        let u = CoalitionUniverse::new(2, vec![c(&[1]), c(&[2]), c(&[1, 2])]).unwrap();
        // Coalition index 1 is {2}; the structure {{1},{2}} uses indices 0 and 1.
        let s = validate_structure(&[c(&[1]), c(&[2])], &u).unwrap();
        let w = welfare(&s, &DVector::from_vec(vec![0.0, 3.0, 0.0])).unwrap();
        assert_eq!(w, 3.0);
        assert_eq!(welfare(&s, &DVector::zeros(3)).unwrap(), 0.0);
        assert!(welfare(&s, &DVector::zeros(2)).is_err());
    }

    #[test]
    fn welfare_matches_per_block_lookup() {
        let u = CoalitionUniverse::all_up_to_size(3, 3).unwrap();
        // Canonical order: {1},{2},{3},{1,2},{1,3},{2,3},{1,2,3}; index 4 (1-based) = {1,2}.
        assert_eq!(u.coalition(3), c(&[1, 2]));
        let theta = DVector::from_vec(vec![1.0, 1.0, 1.0, 5.0, 0.0, 0.0, 0.0]);
        let s = validate_structure(&[c(&[1, 2]), c(&[3])], &u).unwrap();
        let direct: f64 = s.blocks.iter().map(|&b| theta[u.index_of(b).unwrap()]).sum();
        assert_eq!(welfare(&s, &theta).unwrap(), direct);
        assert_eq!(direct, 6.0);
    }

    #[test]
    fn unlisted_blocks_contribute_zero() {
        let u = CoalitionUniverse::all_up_to_size(3, 1).unwrap();
        let s = validate_structure(&[c(&[1, 2]), c(&[3])], &u).unwrap();
        assert_eq!(s.unlisted_blocks, vec![c(&[1, 2])]);
        let w = welfare(&s, &DVector::from_vec(vec![1.0, 2.0, 4.0])).unwrap();
        assert_eq!(w, 4.0);
    }

    #[test]
    fn lipschitz_single_coordinate() {
        let u = CoalitionUniverse::all_up_to_size(2, 2).unwrap();
        let s = validate_structure(&[c(&[1, 2])], &u).unwrap();
        let a = DVector::from_vec(vec![1.0, 2.0, 3.0]);
        assert_eq!(welfare_lipschitz_check(&s, &a, &a).unwrap(), (0.0, 0.0));
        let mut b = a.clone();
        b[2] -= 2.5;
        let (gap, bound) = welfare_lipschitz_check(&s, &a, &b).unwrap();
        assert_eq!(gap, 2.5);
        assert!(bound >= 2.5);
    }
}
