//! Reward modeling from pairwise comparisons with deep ReLU networks.
//!
//! The crate covers the full pipeline used to study how well a
//! maximum-likelihood reward estimator recovers the greedy policy of a hidden
//! reward:
//!
//! * [`comparison`]: comparison likelihoods `g(y, u)` (Bradley-Terry,
//!   Thurstonian, Rao-Kupper, Davidson) with derivatives, samplers and the
//!   kappa constants.
//! * [`reward_env`]: synthetic ground-truth rewards, greedy policies, regret.
//! * [`dataset`] and [`graph`]: comparison data generation, label corruption,
//!   comparison designs and the Laplacian spectral gap.
//! * [`network`] and [`training`]: the centred ReLU reward network and its
//!   likelihood training loop.
//! * [`margin`]: margin-condition curves, exponent fits and rate expressions.
//! * [`harness`]: architecture and noise sweeps with CSV output.

pub mod comparison;
pub mod dataset;
pub mod eigen;
pub mod error;
pub mod graph;
pub mod harness;
pub mod margin;
pub mod network;
pub mod normal;
pub mod reward_env;
pub mod training;

pub use comparison::{ComparisonModel, KappaConstants, ModelKind, Outcome, OutcomeSpace};
pub use dataset::{ComparisonDataset, ComparisonSample};
pub use error::{Error, Result};
pub use graph::{Design, LaplacianSummary};
pub use network::{MlpArchitecture, MlpParameters};
pub use reward_env::{GroundTruthReward, RewardFamily, RewardModel};
pub use training::{TrainingConfig, TrainingHistory};
