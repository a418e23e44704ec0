//! Semi-supervised Bayesian profile regression.
//!
//! Individuals are clustered by a truncated Dirichlet-process mixture over
//! categorical covariates jointly with a longitudinal outcome modelled either
//! as a multivariate normal on a shared grid or as a cluster-specific Gaussian
//! process over arbitrary observation times.

pub mod covmodel;
pub mod data;
pub mod diagnostics;
pub mod error;
pub mod gp;
pub mod linalg;
pub mod mvn;
pub mod output;
pub mod postproc;
pub mod rng;
pub mod sampler;
pub mod simgen;

pub use covmodel::{CovariateParams, SelectionUpdate};
pub use data::{validate_dataset, Dataset, ResponseKind};
pub use error::{Error, Result};
pub use gp::GpHyper;
pub use mvn::{MvnClusterParams, NiwHyper};
pub use postproc::{adjusted_rand_index, best_partition, pear, posterior_similarity, PartitionSummary};
pub use rng::{ChainRng, RandomSource};
pub use sampler::{run_chain, ChainConfig, GpAlgorithm, GridSpec, McmcOutput};
