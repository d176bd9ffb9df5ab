//! Estimators mapping an [`EpisodeBatch`](crate::model::EpisodeBatch) to an
//! [`EstimateResult`](crate::model::EstimateResult).

mod baselines;
mod bgcp;
mod l0;
mod lasso;
mod least_squares;

pub use baselines::{dls, epc};
pub use bgcp::{bgcp, BgcpConfig, BgcpFit, BgcpStep, BgcpTrace, StopReason, ZERO_RTOL};
pub use l0::{l0_map_oracle, l0_objective, DEFAULT_L0_MAX_M};
pub use lasso::{kkt_residual, lasso, lasso_objective, soft_threshold, LassoConfig, LassoFit};
pub use least_squares::{least_squares_on_support, RANK_RTOL};
