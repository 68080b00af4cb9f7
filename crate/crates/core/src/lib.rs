//! Discounted Beta-Bernoulli (DBB) reward estimation for group-based
//! policy optimization with binary rewards.
//!
//! The crate provides the estimators themselves, the advantage schemes that
//! consume them, exact bias/variance/MSE formulas, a Monte Carlo engine that
//! checks those formulas on synthetic drifting reward streams, and a toy
//! softmax-bandit trainer running the full sample / update posterior /
//! advantage / clipped-surrogate loop.

pub mod advantage;
pub mod closed_form;
pub mod drift;
pub mod error;
pub mod estimators;
pub mod rng;
pub mod simulator;
pub mod trainer;

pub use advantage::{
    compute_advantages, AdvantageScheme, AdvantageVector, CollapsePolicy, Normalization,
};
pub use closed_form::{
    dbb_closed_form, point_mse, total_mass, weights, ClosedFormStats, TrueProbSequence,
};
pub use drift::{
    generate_trajectory, reference_estimate, DriftKind, DriftModel, ReferenceEstimate,
};
pub use error::{Error, Result};
pub use estimators::{
    dbb_estimate, one_step_mean, one_step_variance, point_estimate, shrinkage_weight,
    update_beta_bernoulli, update_dbb, Discount, EstimatorKind, EstimatorSummary, PosteriorState,
    RewardGroup,
};
pub use simulator::{
    argmin_average, argmin_lambda, epoch_averages, run_sweep, run_sweep_with_workers, GroundTruth,
    SweepRecord, SweepSpec, SweepSummary,
};
pub use trainer::{
    rollout_group, surrogate_update, train, BanditTask, PosteriorStore, SoftmaxPolicy, StepMetrics,
    TrainMetrics, TrainOutcome, TrainerConfig,
};
