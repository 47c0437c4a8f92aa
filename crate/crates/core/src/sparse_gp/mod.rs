//! Exact and sparse latent-GP regression: marginal likelihoods, the
//! collapsed optimum, the decomposable bound, batch estimators, and sparse
//! predictions.

pub mod bias;
pub mod regression;
pub mod terms;

pub use bias::{bias_trajectory, EpochBias};
pub use regression::{
    exact_log_marginal, exact_log_marginal_capped, exact_posterior, hensman_elbo, inducing_kl, intermediates,
    mc_estimators, sparse_predict, titsias_elbo, titsias_optimal, InducingPoints, LatentDataset, McEstimates,
    Predictive, SparseGpIntermediates, SparsePosterior, EXACT_CAP,
};
