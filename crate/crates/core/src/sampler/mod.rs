//! Blocked Gibbs sampler over allocations, stick weights, concentration,
//! covariate profiles, response parameters and fixed effects.

mod chain;
mod output;
pub mod sticks;

pub(crate) use chain::sample_log_categorical;
pub use chain::{run_chain, update_beta, t_log_density, BetaPrior, Chain, ChainState, GpCluster, ResponseState};
pub use output::{ClusterResponse, ClusterSample, McmcOutput, StepSummary};
pub use sticks::{stick_breaking_weights, update_alpha, update_sticks};

use crate::covmodel::SelectionUpdate;
use crate::data::ResponseKind;
use crate::error::{Error, Result};
use crate::gp::HyperPrior;
use crate::mvn::NiwHyper;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum GpAlgorithm {
    Marginal,
    Conditional,
    #[default]
    Auto,
}

impl std::str::FromStr for GpAlgorithm {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "marginal" => Ok(Self::Marginal),
            "conditional" => Ok(Self::Conditional),
            "auto" => Ok(Self::Auto),
            other => Err(Error::Parse(format!("unknown GP algorithm `{other}`"))),
        }
    }
}

/// Inducing grid for the sparse approximation.
#[derive(Debug, Clone, PartialEq, Default)]
pub enum GridSpec {
    #[default]
    None,
    /// Regular grid of this many points over the observed time range.
    Size(usize),
    /// Every distinct observed time.
    Observed,
    Explicit(Vec<f64>),
}

/// Observation count above which `Auto` picks the conditional algorithm.
pub const AUTO_CONDITIONAL_THRESHOLD: usize = 1000;

#[derive(Debug, Clone, PartialEq)]
pub struct ChainConfig {
    pub n_burn: usize,
    pub n_sample: usize,
    pub thin: usize,
    pub c_init: usize,
    pub c_max: usize,
    pub response_kind: ResponseKind,
    pub gp_algorithm: GpAlgorithm,
    pub ratio_r: Option<f64>,
    /// Gamma(shape, rate) prior on α.
    pub alpha_prior: (f64, f64),
    pub alpha_init: f64,
    /// Symmetric Dirichlet concentration of the covariate profiles.
    pub dirichlet_a: f64,
    /// Variable selection, with the update scheme for the relevance indicators.
    pub selection: Option<SelectionUpdate>,
    pub grid: GridSpec,
    pub gp_prior: HyperPrior,
    /// Overrides the data-driven NIW defaults.
    pub niw: Option<NiwHyper>,
    pub beta_prior: BetaPrior,
    pub seed: u64,
    pub chain_index: u64,
}

impl Default for ChainConfig {
    fn default() -> Self {
        Self {
            n_burn: 1000,
            n_sample: 1000,
            thin: 1,
            c_init: 20,
            c_max: 50,
            response_kind: ResponseKind::Mvn,
            gp_algorithm: GpAlgorithm::Auto,
            ratio_r: None,
            alpha_prior: (2.0, 1.0),
            alpha_init: 1.0,
            dirichlet_a: 1.0,
            selection: None,
            grid: GridSpec::None,
            gp_prior: HyperPrior::default(),
            niw: None,
            beta_prior: BetaPrior::default(),
            seed: 0,
            chain_index: 0,
        }
    }
}

impl ChainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(m.to_string()));
        if self.c_init == 0 || self.c_init > self.c_max {
            return bad("need 1 <= c_init <= c_max");
        }
        if self.n_sample == 0 {
            return bad("n_sample must be at least 1");
        }
        if self.thin == 0 {
            return bad("thin must be at least 1");
        }
        if !(self.alpha_prior.0 > 0.0 && self.alpha_prior.1 > 0.0 && self.alpha_init > 0.0) {
            return bad("alpha prior and initial value must be positive");
        }
        if !(self.dirichlet_a > 0.0) {
            return bad("dirichlet_a must be positive");
        }
        if let Some(r) = self.ratio_r {
            if !(r > 0.0) {
                return bad("ratio_r must be positive");
            }
        }
        if self.gp_prior.sd.iter().any(|s| !(*s > 0.0)) {
            return bad("GP prior standard deviations must be positive");
        }
        Ok(())
    }

    /// Number of recorded iterations.
    pub fn n_recorded(&self) -> usize {
        self.n_sample / self.thin
    }
}
