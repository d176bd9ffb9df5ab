//! Probabilistic coalition structure generation.
//!
//! Coalition contributions are estimated from noisy episodic data (greedy
//! pursuit, ℓ₁ coordinate descent, plug-in and dense least-squares
//! baselines), and the estimate is handed to an exact subset-DP solver for
//! the optimal coalition structure. Design diagnostics and a seeded
//! experiment harness sit on top.

// `!(x > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod csg;
pub mod design;
pub mod diagnostics;
pub mod error;
pub mod estimators;
pub mod harness;
pub mod io;
pub mod model;
pub mod pipeline;
pub mod rng;

pub use error::{Error, Result};
pub use model::{
    validate_structure, welfare, welfare_lipschitz_check, Coalition, CoalitionStructure, CoalitionUniverse,
    EpisodeBatch, EstimateResult, EstimatorKind, GroundTruth, Tuning,
};
