//! Gaussian-process response model.

pub mod conditional;
pub mod dense;
pub mod kernel;
pub mod mh;
pub mod sparse;
pub mod woodbury;

pub use conditional::ConditionalCluster;
pub use dense::{gp_conditional_log_likelihood_dense, gp_log_marginal_likelihood, gp_posterior_mean_cov};
pub use kernel::{build_block_covariance, cross_kernel, noisy_kernel, sq_exp_kernel, GpHyper};
pub use mh::{adapt_step_size, mh_update_hyper_marginal, AdaptiveStep, GpSteps, HyperPrior};
pub use sparse::{regular_grid, sparse_inverse, SparseCluster};
pub use woodbury::{woodbury_add_individual, woodbury_remove_individual, DenseCluster};
