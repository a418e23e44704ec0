//! Command-line front end: configuration, fitting, post-processing,
//! diagnostics, prediction and synthetic data generation.

pub mod config;
pub mod diagnose;
pub mod error;
pub mod fit;
pub mod generate;
pub mod manifest;
pub mod postprocess;
pub mod predict;
pub mod runs;

pub use config::RunConfig;
pub use error::{CliError, Result};

use std::path::Path;

use premi_core::adjusted_rand_index;

/// ARI between two `id,cluster` files, matched by id.
pub fn cmd_ari(a: &Path, b: &Path) -> Result<f64> {
    let (ids, la) = premi_core::data::read_labels(a)?;
    let lb = runs::aligned_labels(b, &ids)?;
    Ok(adjusted_rand_index(&la, &lb)?)
}
