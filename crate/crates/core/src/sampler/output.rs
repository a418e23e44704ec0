use crate::data::ResponseKind;
use crate::gp::GpHyper;

/// Response parameters of one occupied cluster at one recorded iteration.
#[derive(Debug, Clone, PartialEq)]
pub enum ClusterResponse {
    None,
    Mvn { mu: Vec<f64>, sigma: Vec<f64> },
    Gp(GpHyper),
}

/// Parameters of an occupied cluster at a recorded iteration.
#[derive(Debug, Clone, PartialEq)]
pub struct ClusterSample {
    pub label: usize,
    pub size: usize,
    /// `log π_c`
    pub log_weight: f64,
    /// `phi[q][e]`
    pub phi: Vec<Vec<f64>>,
    pub gamma: Vec<bool>,
    pub response: ClusterResponse,
}

/// Final proposal scale and post-burn-in acceptance of an adapted coordinate.
#[derive(Debug, Clone, PartialEq)]
pub struct StepSummary {
    pub name: String,
    pub step: f64,
    pub attempts: usize,
    pub accepted: usize,
}

impl StepSummary {
    pub fn rate(&self) -> Option<f64> {
        (self.attempts > 0).then(|| self.accepted as f64 / self.attempts as f64)
    }
}

/// Recorded draws of one chain.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct McmcOutput {
    pub response_kind: Option<ResponseKind>,
    /// Whether the GP response marginals in `log_mpp` are plug-in values at the current hyperparameters.
    pub log_mpp_plug_in: bool,
    pub iterations: Vec<usize>,
    pub alpha: Vec<f64>,
    pub n_clusters: Vec<usize>,
    pub n_nonempty: Vec<usize>,
    pub log_mpp: Vec<f64>,
    pub beta: Vec<Vec<f64>>,
    pub allocations: Vec<Vec<usize>>,
    pub clusters: Vec<Vec<ClusterSample>>,
    /// Population category proportions `phi0[q][e]` used for unselected covariates.
    pub phi0: Vec<Vec<f64>>,
    pub rho: Vec<Vec<f64>>,
    pub omega: Vec<Vec<bool>>,
    pub steps: Vec<StepSummary>,
}

impl McmcOutput {
    pub fn n_recorded(&self) -> usize {
        self.iterations.len()
    }

    /// Cluster sample for `label` at recorded iteration `h`.
    pub fn cluster(&self, h: usize, label: usize) -> Option<&ClusterSample> {
        self.clusters[h].iter().find(|c| c.label == label)
    }

    /// Posterior mean of `ρ_q` per covariate.
    pub fn mean_rho(&self) -> Vec<f64> {
        let h = self.rho.len();
        if h == 0 {
            return Vec::new();
        }
        let q = self.rho[0].len();
        (0..q)
            .map(|k| self.rho.iter().map(|r| r[k]).sum::<f64>() / h as f64)
            .collect()
    }
}
