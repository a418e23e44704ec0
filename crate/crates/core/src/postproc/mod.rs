//! Posterior summaries: similarity matrix, representative partition,
//! partition agreement, averaged cluster parameters and predictions.

mod ari;
mod estimate;
mod partition;
mod predict;

pub use ari::adjusted_rand_index;
pub use estimate::{estimate_cluster_params, quantile, selection_summary, ClusterEstimate, EstimatedResponse, SelectionSummary};
pub use partition::{
    best_partition, canonical_labels, pam, pam_cost, posterior_similarity, silhouette, BestPartition, PamResult,
    SimilarityMatrix,
};
pub use predict::{cluster_profiles, predict_trajectories, predict_trajectory, Prediction, Profile};

use crate::error::{Error, Result};
use crate::sampler::McmcOutput;

/// Everything reported about a run's representative partition.
#[derive(Debug, Clone, PartialEq)]
pub struct PartitionSummary {
    pub similarity: SimilarityMatrix,
    /// Labels contiguous from 1.
    pub best_partition: Vec<usize>,
    pub n_clusters: usize,
    pub silhouette: f64,
    pub silhouette_by_k: Vec<(usize, f64)>,
    pub cluster_estimates: Vec<ClusterEstimate>,
    pub selection: Vec<SelectionSummary>,
}

/// Representative partition of the recorded allocations, falling back to a
/// single cluster when every pair co-clusters equally often.
pub fn representative_partition(similarity: &SimilarityMatrix, k_max: usize) -> Result<BestPartition> {
    match best_partition(similarity, k_max) {
        Err(Error::DegenerateSimilarity) => Ok(BestPartition {
            labels: vec![1; similarity.n()],
            n_clusters: 1,
            silhouette: 0.0,
            silhouette_by_k: Vec::new(),
        }),
        r => r,
    }
}

pub fn summarize(output: &McmcOutput, k_max: usize) -> Result<PartitionSummary> {
    let similarity = posterior_similarity(&output.allocations)?;
    let best = representative_partition(&similarity, k_max)?;
    let cluster_estimates = estimate_cluster_params(output, &best.labels)?;
    Ok(PartitionSummary {
        similarity,
        best_partition: best.labels,
        n_clusters: best.n_clusters,
        silhouette: best.silhouette,
        silhouette_by_k: best.silhouette_by_k,
        cluster_estimates,
        selection: selection_summary(output),
    })
}

/// Adjusted Rand index between the representative partition and `truth`.
pub fn pear(output: &McmcOutput, truth: &[usize], k_max: usize) -> Result<f64> {
    let similarity = posterior_similarity(&output.allocations)?;
    if similarity.n() != truth.len() {
        return Err(Error::LengthMismatch(format!(
            "truth has {} labels for {} individuals",
            truth.len(),
            similarity.n()
        )));
    }
    let best = representative_partition(&similarity, k_max)?;
    adjusted_rand_index(&best.labels, truth)
}

/// Mean over recorded iterations of the adjusted Rand index against `truth`.
pub fn pear_sample_averaged(output: &McmcOutput, truth: &[usize]) -> Result<f64> {
    if output.allocations.is_empty() {
        return Err(Error::EmptyPosterior);
    }
    let mut total = 0.0;
    for z in &output.allocations {
        total += adjusted_rand_index(z, truth)?;
    }
    Ok(total / output.allocations.len() as f64)
}
