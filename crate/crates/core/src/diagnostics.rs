//! Chain-level convergence summaries.

use crate::error::{Error, Result};
use crate::postproc::{posterior_similarity, SimilarityMatrix};
use crate::sampler::McmcOutput;

/// Monte Carlo standard error of the mean by non-overlapping batch means with
/// `⌊√H⌋` batches of equal size (trailing draws dropped).
pub fn batch_means_mcse(trace: &[f64]) -> Option<f64> {
    let n = trace.len();
    let b = (n as f64).sqrt().floor() as usize;
    if b < 2 {
        return None;
    }
    let size = n / b;
    let means: Vec<f64> = trace.chunks_exact(size).take(b).map(|c| c.iter().sum::<f64>() / size as f64).collect();
    let grand = means.iter().sum::<f64>() / b as f64;
    let var = means.iter().map(|m| (m - grand).powi(2)).sum::<f64>() / (b - 1) as f64;
    Some((var / b as f64).sqrt())
}

/// Mean, standard deviation, batch-means MCSE and implied effective sample size.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceSummary {
    pub name: String,
    pub n: usize,
    pub mean: f64,
    pub sd: f64,
    pub mcse: Option<f64>,
    pub ess: Option<f64>,
}

pub fn summarize_trace(name: &str, trace: &[f64]) -> TraceSummary {
    let n = trace.len();
    let mean = if n > 0 { trace.iter().sum::<f64>() / n as f64 } else { f64::NAN };
    let sd = if n > 1 {
        (trace.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
    } else {
        f64::NAN
    };
    let mcse = batch_means_mcse(trace);
    let ess = mcse.filter(|&m| m > 0.0).map(|m| (sd / m).powi(2));
    TraceSummary {
        name: name.to_string(),
        n,
        mean,
        sd,
        mcse,
        ess,
    }
}

/// Scalar traces compared across chains.
pub fn scalar_traces(output: &McmcOutput) -> Vec<(&'static str, Vec<f64>)> {
    vec![
        ("alpha", output.alpha.clone()),
        ("n_clusters", output.n_clusters.iter().map(|&v| v as f64).collect()),
        ("n_nonempty", output.n_nonempty.iter().map(|&v| v as f64).collect()),
        ("log_mpp", output.log_mpp.clone()),
    ]
}

/// Frobenius distances between the similarity matrices of every pair of chains,
/// as `(i, j, distance)` with `i < j`.
pub fn pairwise_psm_distances(outputs: &[&McmcOutput]) -> Result<Vec<(usize, usize, f64)>> {
    let psms: Vec<SimilarityMatrix> = outputs
        .iter()
        .map(|o| posterior_similarity(&o.allocations))
        .collect::<Result<_>>()?;
    let mut out = Vec::new();
    for i in 0..psms.len() {
        for j in i + 1..psms.len() {
            out.push((i, j, psms[i].frobenius_distance(&psms[j])?));
        }
    }
    Ok(out)
}

/// Interquartile range of a trace.
pub fn interquartile_range(trace: &[f64]) -> Result<(f64, f64)> {
    if trace.is_empty() {
        return Err(Error::EmptyPosterior);
    }
    Ok((crate::postproc::quantile(trace, 0.25), crate::postproc::quantile(trace, 0.75)))
}

/// Whether every pair of interquartile ranges intersects.
pub fn interquartile_ranges_overlap(traces: &[&[f64]]) -> Result<bool> {
    let iqrs: Vec<(f64, f64)> = traces.iter().map(|t| interquartile_range(t)).collect::<Result<_>>()?;
    Ok(iqrs
        .iter()
        .enumerate()
        .all(|(i, a)| iqrs[i + 1..].iter().all(|b| a.0 <= b.1 && b.0 <= a.1)))
}
