//! Optimization: Adam, GECO, initialization, and the training loop.

pub mod adam;
pub mod diagnostics;
pub mod evaluate;
pub mod geco;
pub mod pca;
pub mod setup;
pub mod trainer;

pub use adam::Adam;
pub use geco::Geco;
pub use pca::{pca_inducing, pca_scores};
pub use setup::{build_experiment, EvalData, Experiment, TrainData, TEST_STREAM_OFFSET};
pub use trainer::{train, EpochRecord, RunLog, RunStatus, StepRecord, RUNLOG_SCHEMA};
pub use evaluate::{evaluate_experiment, generation_mse, inducing_summary, trajectory_rmse, EvalReport, InducingSummary, EVAL_SCHEMA};
pub use diagnostics::{gradient_check, gradient_check_all, toy_problem, vanishing_phi, GradReport, ToyProblem, VanishingPhi};
