//! Count-based conservative model-based offline RL on finite MDPs.
//!
//! The pipeline: an [`OfflineDataset`] is fit into an ensemble of MLE
//! transition models ([`model`]), state-action visit counts are
//! approximated by an ensemble of hashing counters ([`counting`]),
//! rewards are penalized inversely to the square root of the estimated
//! count ([`conservative`]), and a policy is planned on the resulting
//! pessimistic MDP either exactly or through model rollouts
//! ([`planner`]). [`mdp`] provides the exact solvers used both for
//! planning and as ground truth.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod conservative;
pub mod counting;
pub mod dataset;
pub mod error;
pub mod gridworld;
pub mod mdp;
pub mod model;
pub mod planner;
pub mod sampling;
pub mod synthetic;

pub use conservative::{build_conservative_mdp, penalty, ConservativeMdp, KnownEnv, PenaltyMode, PenaltySpec};
pub use counting::{combine_counts, count_audit, CountAudit, CountEnsemble, CountEstimator, CountMode, FeatureKind, FeatureMap, HashCounter};
pub use dataset::{exact_counts, CountTable, DatasetMeta, OfflineDataset, Transition};
pub use error::{Error, Result};
pub use gridworld::{build_gridworld, train_behavior, BehaviorTrainConfig, GridKind, GridLayout};
pub use mdp::{
    discounted_visitation, policy_evaluation, scalar_return, total_variation, value_iteration, PolicyTable,
    TabularMdp, ValueVector, VisitationDist,
};
pub use model::{error_bound, fit_ensemble, fit_mle, tv_errors, EnsembleModel, ErrorBoundConfig, MleModel};
pub use planner::{exact_plan, rollout_plan, ModelBuffer, RolloutConfig, RolloutOutcome};
