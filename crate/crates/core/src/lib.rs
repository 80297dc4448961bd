//! Preference-based exploration for episodic kernel MDPs.
//!
//! The learner never sees rewards: each episode it deploys two greedy policies,
//! observes a single Bradley–Terry–Luce comparison of the resulting
//! trajectories, fits a kernel logistic reward estimate, and explores through
//! posterior-GP noise on top of optimistic kernel value iteration.
//!
//! All numerics are generic over [`Real`]; the `f64` aliases below are what the
//! simulator and experiment harness use.

// `!(x > 0)` comparisons are deliberate: they reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod agent;
pub mod analysis;
pub mod environment;
pub mod error;
pub mod exploration;
pub mod gp;
pub mod kernel;
pub mod linalg;
pub mod preference;
pub mod rng;
pub mod scalar;

pub use error::{Error, Result};
pub use scalar::Real;

pub type Kernel = kernel::KernelSpec<f64>;
pub type Mdp = environment::DiscretizedMdp<f64>;
pub type Geometry = environment::GridGeometry<f64>;
pub type Agent = agent::ProstoAgent<f64>;
pub type AgentConfig = agent::ProstoConfig<f64>;
pub type Schedule = agent::RegularizerSchedule<f64>;
pub type Stage = agent::QStage<f64>;
pub type Trace = analysis::RegretTrace<f64>;
pub type Record = analysis::EpisodeRecord<f64>;
pub type RewardEstimate = preference::DualRewardEstimate<usize, f64>;
pub type Pair = preference::TrajectoryPair<usize>;
