use std::sync::Arc;

use rand::Rng;
use statrs::function::gamma::ln_gamma;

use super::output::{ClusterResponse, ClusterSample, McmcOutput, StepSummary};
use super::sticks::{cluster_sizes, stick_breaking_weights, update_alpha, update_sticks};
use super::{ChainConfig, GpAlgorithm, GridSpec, AUTO_CONDITIONAL_THRESHOLD};
use crate::covmodel::{dirichlet_multinomial_log_marginal, update_covariate_params, CountTable, CovariateParams};
use crate::data::{Dataset, ResponseKind};
use crate::error::{Error, Result};
use crate::gp::dense::gp_log_marginal_likelihood;
use crate::gp::mh::{free_coordinates, mh_update_cached, rw_step, AdaptiveStep, GpSteps};
use crate::gp::sparse::regular_grid;
use crate::gp::{ConditionalCluster, DenseCluster, GpHyper, SparseCluster};
use crate::mvn::{default_niw_hyper, mvn_log_marginal_likelihood, sample_mvn_cluster_params, MvnClusterParams, NiwHyper};
use crate::linalg::LN_2PI;
use crate::rng::ChainRng;

/// Prior on each fixed-effect coefficient.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BetaPrior {
    StudentT { loc: f64, scale: f64, df: f64 },
    Normal { mean: f64, sd: f64 },
}

impl Default for BetaPrior {
    fn default() -> Self {
        Self::StudentT { loc: 0.0, scale: 2.5, df: 7.0 }
    }
}

/// Location-scale Student-t log-density.
pub fn t_log_density(x: f64, loc: f64, scale: f64, df: f64) -> f64 {
    let z = (x - loc) / scale;
    ln_gamma((df + 1.0) / 2.0) - ln_gamma(df / 2.0) - 0.5 * (df * std::f64::consts::PI).ln() - scale.ln()
        - (df + 1.0) / 2.0 * (z * z / df).ln_1p()
}

impl BetaPrior {
    pub fn log_density(&self, x: f64) -> f64 {
        match *self {
            Self::StudentT { loc, scale, df } => t_log_density(x, loc, scale, df),
            Self::Normal { mean, sd } => {
                let z = (x - mean) / sd;
                -0.5 * z * z - sd.ln() - 0.5 * crate::linalg::LN_2PI
            }
        }
    }
}

/// Coordinate-wise random-walk MH on `β` with target `prior × loglik`.
pub fn update_beta<R: Rng + ?Sized>(
    beta: &mut [f64],
    steps: &mut [AdaptiveStep],
    prior: &BetaPrior,
    mut loglik: impl FnMut(&[f64]) -> f64,
    rng: &mut R,
) {
    if beta.is_empty() {
        return;
    }
    let log_prior = |b: &[f64]| b.iter().map(|&x| prior.log_density(x)).sum::<f64>();
    let mut cur = loglik(beta) + log_prior(beta);
    for r in 0..beta.len() {
        let base = beta.to_vec();
        let (nx, nlp) = rw_step(
            beta[r],
            cur,
            &mut steps[r],
            |v| {
                let mut b = base.clone();
                b[r] = v;
                loglik(&b) + log_prior(&b)
            },
            rng,
        );
        beta[r] = nx;
        cur = nlp;
    }
}

/// Per-cluster GP state for the active algorithm.
#[derive(Debug, Clone)]
pub enum GpCluster {
    Dense(DenseCluster),
    Sparse(SparseCluster),
    Conditional(ConditionalCluster),
}

impl GpCluster {
    pub fn hyper(&self) -> GpHyper {
        match self {
            Self::Dense(c) => c.hyper,
            Self::Sparse(c) => c.hyper,
            Self::Conditional(c) => c.hyper,
        }
    }

    pub fn members(&self) -> Vec<usize> {
        match self {
            Self::Dense(c) => c.members().to_vec(),
            Self::Sparse(c) => c.members().collect(),
            Self::Conditional(c) => c.members().collect(),
        }
    }

    /// Whether a member's leave-one-out likelihood is available without removing it.
    pub fn has_leave_one_out(&self) -> bool {
        matches!(self, Self::Dense(_))
    }

    /// Leave-one-out likelihood of current member `i`
    /// (only for caches with [`GpCluster::has_leave_one_out`]).
    pub fn member_log_likelihood(&self, i: usize) -> Result<f64> {
        match self {
            Self::Dense(c) => c.member_log_likelihood(i),
            _ => unreachable!("leave-one-out likelihood needs the dense cache"),
        }
    }

    /// Log-likelihood of an individual's outcomes given the cluster's current members.
    pub fn conditional_log_likelihood(&mut self, i: usize, t: &[f64], y: &[f64]) -> Result<f64> {
        match self {
            Self::Dense(c) => c.conditional_log_likelihood(t, y),
            Self::Sparse(c) => c.conditional_log_likelihood(i, t, y),
            Self::Conditional(c) => c.predictive_log_likelihood(t, y),
        }
    }

    fn add<R: Rng + ?Sized>(&mut self, i: usize, t: &[f64], y: &[f64], rng: &mut R) -> Result<()> {
        match self {
            Self::Dense(c) => c.add(i, t, y),
            Self::Sparse(c) => c.add(i, t, y),
            Self::Conditional(c) => c.add(i, t, y, rng),
        }
    }

    fn remove(&mut self, i: usize) -> Result<()> {
        match self {
            Self::Dense(c) => c.remove(i),
            Self::Sparse(c) => c.remove(i),
            Self::Conditional(c) => {
                c.remove(i);
                Ok(())
            }
        }
    }

    /// Log marginal likelihood of the members at the current hyperparameters.
    pub fn log_marginal(&self) -> Result<f64> {
        match self {
            Self::Dense(c) => Ok(c.log_marginal()),
            Self::Sparse(c) => Ok(c.log_marginal()),
            Self::Conditional(c) => {
                let (t, y) = c.stacked_data();
                gp_log_marginal_likelihood(&[&t], &[&y], &c.hyper)
            }
        }
    }
}

/// Components are skipped in the allocation step when their weight is below
/// `e^-45` of the best one found, far under double-precision resolution.
const PRUNE_LOG_RATIO: f64 = 45.0;

#[derive(Debug, Clone)]
enum GpMode {
    Dense,
    Sparse(Arc<Vec<f64>>),
    Conditional,
}

#[derive(Debug, Clone)]
pub enum ResponseState {
    None,
    Mvn { hyper: NiwHyper, params: Vec<MvnClusterParams> },
    Gp { clusters: Vec<GpCluster> },
}

/// Full sampler state of one chain.
#[derive(Debug, Clone)]
pub struct ChainState {
    pub z: Vec<usize>,
    pub u: Vec<f64>,
    pub log_pi: Vec<f64>,
    pub alpha: f64,
    pub beta: Vec<f64>,
    pub cov: CovariateParams,
    pub response: ResponseState,
}

fn members_by_cluster(z: &[usize], c_max: usize) -> Vec<Vec<usize>> {
    let mut m = vec![Vec::new(); c_max];
    for (i, &c) in z.iter().enumerate() {
        m[c].push(i);
    }
    m
}

/// Draw an index from unnormalised log weights; `None` when every weight is `−∞`.
/// `NaN` weights count as `−∞`.
pub(crate) fn sample_log_categorical<R: Rng + ?Sized>(lw: &[f64], rng: &mut R) -> Option<usize> {
    let m = lw.iter().copied().filter(|v| !v.is_nan()).fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return None;
    }
    let mut stack = [0.0f64; 64];
    let mut heap = Vec::new();
    let w: &mut [f64] = if lw.len() <= stack.len() {
        &mut stack[..lw.len()]
    } else {
        heap.resize(lw.len(), 0.0);
        &mut heap
    };
    let mut total = 0.0;
    for (wk, &v) in w.iter_mut().zip(lw) {
        *wk = if v.is_nan() { 0.0 } else { (v - m).exp() };
        total += *wk;
    }
    let mut target = rng.random::<f64>() * total;
    let mut last = 0;
    for (k, &wk) in w.iter().enumerate() {
        if wk == 0.0 {
            continue;
        }
        last = k;
        if target < wk {
            return Some(k);
        }
        target -= wk;
    }
    Some(last)
}

fn resolve_grid(spec: &GridSpec, data: &Dataset) -> Result<Option<Vec<f64>>> {
    let grid = match spec {
        GridSpec::None => return Ok(None),
        GridSpec::Size(n) => {
            let (lo, hi) = data
                .time_range()
                .ok_or_else(|| Error::InvalidGrid("no observation times".into()))?;
            regular_grid(lo, hi, *n)
        }
        GridSpec::Observed => data.distinct_times(),
        GridSpec::Explicit(g) => {
            let mut g = g.clone();
            g.sort_by(f64::total_cmp);
            g.dedup();
            g
        }
    };
    if grid.is_empty() || grid.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidGrid("inducing grid must be non-empty and finite".into()));
    }
    Ok(Some(grid))
}

fn resolve_gp_mode(cfg: &ChainConfig, data: &Dataset) -> Result<GpMode> {
    let grid = resolve_grid(&cfg.grid, data)?;
    let marginal = |grid: Option<Vec<f64>>| grid.map_or(GpMode::Dense, |g| GpMode::Sparse(Arc::new(g)));
    Ok(match cfg.gp_algorithm {
        GpAlgorithm::Conditional => {
            if grid.is_some() {
                log::warn!("inducing grid is ignored by the conditional algorithm");
            }
            GpMode::Conditional
        }
        GpAlgorithm::Marginal => marginal(grid),
        GpAlgorithm::Auto => {
            if grid.is_none() && data.total_observations() > AUTO_CONDITIONAL_THRESHOLD {
                GpMode::Conditional
            } else {
                marginal(grid)
            }
        }
    })
}

fn build_gp_cluster<R: Rng + ?Sized>(
    mode: &GpMode,
    hyper: GpHyper,
    members: &[usize],
    data: &Dataset,
    corrected: &[Vec<f64>],
    rng: &mut R,
) -> Result<GpCluster> {
    let it = members.iter().map(|&i| (i, data.times[i].as_slice(), corrected[i].as_slice()));
    Ok(match mode {
        GpMode::Dense => GpCluster::Dense(DenseCluster::build(hyper, it)?),
        GpMode::Sparse(g) => GpCluster::Sparse(SparseCluster::build(hyper, g.clone(), it)?),
        GpMode::Conditional => GpCluster::Conditional(ConditionalCluster::build(hyper, it, rng)?),
    })
}

/// One chain: configuration, data, state and its exclusive random stream.
pub struct Chain<'a> {
    cfg: &'a ChainConfig,
    data: &'a Dataset,
    rng: ChainRng,
    pub state: ChainState,
    corrected: Vec<Vec<f64>>,
    kind: Option<ResponseKind>,
    gp_mode: Option<GpMode>,
    alpha_step: AdaptiveStep,
    gp_steps: GpSteps,
    beta_steps: Vec<AdaptiveStep>,
    pub iteration: usize,
}

impl<'a> Chain<'a> {
    pub fn new(cfg: &'a ChainConfig, data: &'a Dataset, mut rng: ChainRng) -> Result<Self> {
        cfg.validate()?;
        let n = data.n_individuals();
        if n == 0 {
            return Err(Error::InsufficientData("dataset has no individuals".into()));
        }
        let kind = data.has_outcome().then_some(cfg.response_kind);
        if kind == Some(ResponseKind::Mvn) {
            if let Some(i) = (0..n).find(|&i| data.times[i] != data.times[0]) {
                return Err(Error::NonRectangularOutcomeForMvn { individual: i });
            }
        }
        let z: Vec<usize> = (0..n).map(|_| rng.random_range(0..cfg.c_init)).collect();
        let alpha = cfg.alpha_init;
        let u = update_sticks(&cluster_sizes(&z, cfg.c_max), alpha, &mut rng);
        let (_, log_pi) = stick_breaking_weights(&u);
        let mut cov = CovariateParams::new(data, cfg.c_max);
        let table = CountTable::new(data, &z, cfg.c_max);
        update_covariate_params(&mut cov, &table, cfg.dirichlet_a, None, &mut rng);
        let corrected = data.values.clone();
        let members = members_by_cluster(&z, cfg.c_max);
        let mut gp_mode = None;
        let response = match kind {
            None => ResponseState::None,
            Some(ResponseKind::Mvn) => {
                let hyper = match &cfg.niw {
                    Some(h) => h.clone(),
                    None => default_niw_hyper(data)?,
                };
                let params = members
                    .iter()
                    .map(|m| {
                        let rows: Vec<&[f64]> = m.iter().map(|&i| corrected[i].as_slice()).collect();
                        sample_mvn_cluster_params(&rows, &hyper, &mut rng)
                    })
                    .collect::<Result<Vec<_>>>()?;
                ResponseState::Mvn { hyper, params }
            }
            Some(ResponseKind::Gp) => {
                let mode = resolve_gp_mode(cfg, data)?;
                let mut clusters = Vec::with_capacity(cfg.c_max);
                for m in &members {
                    let hyper = if m.is_empty() {
                        cfg.gp_prior.sample(cfg.ratio_r, &mut rng)
                    } else {
                        let [a, l, s2] = cfg.gp_prior.mean;
                        match cfg.ratio_r {
                            Some(r) => GpHyper::with_ratio(r, l, s2),
                            None => GpHyper::new(a, l, s2),
                        }
                    };
                    clusters.push(build_gp_cluster(&mode, hyper, m, data, &corrected, &mut rng)?);
                }
                gp_mode = Some(mode);
                ResponseState::Gp { clusters }
            }
        };
        let r = data.n_fixed();
        Ok(Self {
            cfg,
            data,
            rng,
            state: ChainState {
                z,
                u,
                log_pi,
                alpha,
                beta: vec![0.0; r],
                cov,
                response,
            },
            corrected,
            kind,
            gp_mode,
            alpha_step: AdaptiveStep::default(),
            gp_steps: Default::default(),
            beta_steps: vec![AdaptiveStep::default(); r],
            iteration: 0,
        })
    }

    pub fn response_kind(&self) -> Option<ResponseKind> {
        self.kind
    }

    /// Whether the chain is running the conditional GP algorithm.
    pub fn uses_conditional_gp(&self) -> bool {
        matches!(self.gp_mode, Some(GpMode::Conditional))
    }

    /// Whether the chain is running the inducing-grid approximation.
    pub fn uses_sparse_gp(&self) -> bool {
        matches!(self.gp_mode, Some(GpMode::Sparse(_)))
    }

    /// One full sweep of the blocked Gibbs sampler.
    pub fn sweep(&mut self) -> Result<()> {
        self.update_covariates();
        self.update_allocations()?;
        self.update_sticks_and_alpha();
        self.update_response()?;
        self.update_fixed_effects()?;
        self.iteration += 1;
        Ok(())
    }

    pub fn stop_adapting(&mut self) {
        self.alpha_step.stop_adapting();
        self.gp_steps.iter_mut().for_each(AdaptiveStep::stop_adapting);
        self.beta_steps.iter_mut().for_each(AdaptiveStep::stop_adapting);
    }

    fn update_covariates(&mut self) {
        let table = CountTable::new(self.data, &self.state.z, self.cfg.c_max);
        update_covariate_params(&mut self.state.cov, &table, self.cfg.dirichlet_a, self.cfg.selection, &mut self.rng);
    }

    /// Upper bound on an individual's response log-density under component `c`
    /// with `m` observations: every covariance is at least the noise level (MVN: exact log-determinant).
    fn response_log_bound(&self, c: usize, m: usize) -> f64 {
        let m = m as f64;
        match &self.state.response {
            ResponseState::None => 0.0,
            ResponseState::Mvn { params, .. } => -0.5 * (m * LN_2PI + params[c].log_det_sigma()),
            ResponseState::Gp { clusters } => -0.5 * m * (LN_2PI + clusters[c].hyper().log_s2),
        }
    }

    /// Unnormalised log allocation weights of individual `i`, assuming `i`
    /// has already been removed from any GP cluster cache.
    ///
    /// With `sizes` given, empty components whose weight is provably below
    /// `e^-PRUNE_LOG_RATIO` of the best weight found are set to `−∞` without
    /// evaluating their response likelihood.
    fn fill_log_weights(
        &mut self,
        i: usize,
        table: &crate::covmodel::LogProbTable,
        sizes: Option<&[usize]>,
        own: Option<usize>,
        lw: &mut [f64],
    ) -> Result<()> {
        let data = self.data;
        let x = &data.covariates[i];
        let m = data.times[i].len();
        for c in 0..self.cfg.c_max {
            let w = self.state.log_pi[c];
            lw[c] = if w > f64::NEG_INFINITY { w + table.row_log_likelihood(x, c) } else { w };
        }
        if m == 0 || matches!(self.state.response, ResponseState::None) {
            return Ok(());
        }
        let mut best = f64::NEG_INFINITY;
        let occupied = |c: usize| sizes.is_none_or(|s| s[c] > 0);
        for pass in [true, false] {
            for c in (0..self.cfg.c_max).filter(|&c| occupied(c) == pass) {
                if lw[c] == f64::NEG_INFINITY {
                    continue;
                }
                if !pass && lw[c] + self.response_log_bound(c, m) < best - PRUNE_LOG_RATIO {
                    lw[c] = f64::NEG_INFINITY;
                    continue;
                }
                let t = &data.times[i];
                let y = &self.corrected[i];
                lw[c] += match &mut self.state.response {
                    ResponseState::None => 0.0,
                    ResponseState::Mvn { params, .. } => params[c].log_density(y, 0.0),
                    ResponseState::Gp { clusters } if own == Some(c) => clusters[c].member_log_likelihood(i)?,
                    ResponseState::Gp { clusters } => clusters[c].conditional_log_likelihood(i, t, y)?,
                };
                if lw[c] > best {
                    best = lw[c];
                }
            }
        }
        Ok(())
    }

    /// Unnormalised log allocation weights of individual `i` over every component.
    pub fn allocation_log_weights(&mut self, i: usize) -> Result<Vec<f64>> {
        let table = self.state.cov.log_table(self.cfg.selection.is_some());
        let mut lw = vec![0.0; self.cfg.c_max];
        let c0 = self.state.z[i];
        if let ResponseState::Gp { clusters } = &mut self.state.response {
            clusters[c0].remove(i)?;
        }
        self.fill_log_weights(i, &table, None, None, &mut lw)?;
        if let ResponseState::Gp { clusters } = &mut self.state.response {
            clusters[c0].add(i, &self.data.times[i], &self.corrected[i], &mut self.rng)?;
        }
        Ok(lw)
    }

    fn update_allocations(&mut self) -> Result<()> {
        let table = self.state.cov.log_table(self.cfg.selection.is_some());
        let mut lw = vec![0.0; self.cfg.c_max];
        let mut sizes = cluster_sizes(&self.state.z, self.cfg.c_max);
        for i in 0..self.data.n_individuals() {
            let old = self.state.z[i];
            let mut loo = false;
            if let ResponseState::Gp { clusters } = &mut self.state.response {
                loo = clusters[old].has_leave_one_out();
                if !loo {
                    clusters[old].remove(i)?;
                }
            }
            sizes[old] -= 1;
            self.fill_log_weights(i, &table, Some(&sizes), loo.then_some(old), &mut lw)?;
            let new = sample_log_categorical(&lw, &mut self.rng).ok_or(Error::AllComponentsZeroMass { individual: i })?;
            sizes[new] += 1;
            self.state.z[i] = new;
            if let ResponseState::Gp { clusters } = &mut self.state.response {
                if loo && new != old {
                    clusters[old].remove(i)?;
                }
                if !loo || new != old {
                    clusters[new].add(i, &self.data.times[i], &self.corrected[i], &mut self.rng)?;
                }
            }
        }
        Ok(())
    }

    fn update_sticks_and_alpha(&mut self) {
        let sizes = cluster_sizes(&self.state.z, self.cfg.c_max);
        self.state.u = update_sticks(&sizes, self.state.alpha, &mut self.rng);
        let free = &self.state.u[..self.cfg.c_max - 1];
        self.state.alpha = update_alpha(self.state.alpha, free, self.cfg.alpha_prior, &mut self.alpha_step, &mut self.rng);
        self.state.log_pi = stick_breaking_weights(&self.state.u).1;
    }

    fn update_response(&mut self) -> Result<()> {
        let members = members_by_cluster(&self.state.z, self.cfg.c_max);
        let data = self.data;
        let corrected = &self.corrected;
        let rng = &mut self.rng;
        match &mut self.state.response {
            ResponseState::None => {}
            ResponseState::Mvn { hyper, params } => {
                for (c, m) in members.iter().enumerate() {
                    let rows: Vec<&[f64]> = m.iter().map(|&i| corrected[i].as_slice()).collect();
                    params[c] = sample_mvn_cluster_params(&rows, hyper, rng)?;
                }
            }
            ResponseState::Gp { clusters } => {
                let mode = self.gp_mode.as_ref().expect("GP mode resolved");
                let prior = &self.cfg.gp_prior;
                for (c, m) in members.iter().enumerate() {
                    if m.is_empty() {
                        let h = prior.sample(self.cfg.ratio_r, rng);
                        clusters[c] = build_gp_cluster(mode, h, m, data, corrected, rng)?;
                        continue;
                    }
                    if let GpCluster::Conditional(cl) = &mut clusters[c] {
                        cl.update_hyper(prior, &mut self.gp_steps, rng)?;
                        continue;
                    }
                    if let GpCluster::Dense(d) = &clusters[c] {
                        let (t, y) = d.data();
                        let (t, y) = (t.to_vec(), y.to_vec());
                        let start = d.hyper;
                        let mut hyper = start;
                        let ll = |h: &GpHyper| gp_log_marginal_likelihood(&[&t], &[&y], h).ok();
                        let current_ll = ll(&hyper).unwrap_or(f64::NEG_INFINITY);
                        let coords = free_coordinates(&hyper);
                        mh_update_cached(&mut hyper, (), current_ll, prior, &mut self.gp_steps, coords, |h| ll(h).map(|v| ((), v)), rng);
                        if hyper != start {
                            clusters[c] = build_gp_cluster(mode, hyper, m, data, corrected, rng)?;
                        }
                        continue;
                    }
                    let mut hyper = clusters[c].hyper();
                    let current_ll = clusters[c].log_marginal()?;
                    let placeholder = GpCluster::Dense(DenseCluster::empty(hyper));
                    let current = std::mem::replace(&mut clusters[c], placeholder);
                    let coords = free_coordinates(&hyper);
                    let mut build_rng = <ChainRng as rand::SeedableRng>::seed_from_u64(0);
                    clusters[c] = mh_update_cached(
                        &mut hyper,
                        current,
                        current_ll,
                        prior,
                        &mut self.gp_steps,
                        coords,
                        |h| {
                            let cl = build_gp_cluster(mode, *h, m, data, corrected, &mut build_rng).ok()?;
                            let ll = cl.log_marginal().ok()?;
                            Some((cl, ll))
                        },
                        rng,
                    );
                }
            }
        }
        Ok(())
    }

    /// Full response log-likelihood with outcomes corrected by `beta`.
    fn response_log_likelihood(&self, beta: &[f64]) -> f64 {
        let data = self.data;
        let shifted = |i: usize| -> Vec<f64> {
            let s = data.fixed_shift(i, beta);
            data.values[i].iter().map(|v| v - s).collect()
        };
        match &self.state.response {
            ResponseState::None => 0.0,
            ResponseState::Mvn { params, .. } => (0..data.n_individuals())
                .map(|i| params[self.state.z[i]].log_density(&shifted(i), 0.0))
                .sum(),
            ResponseState::Gp { clusters } => {
                let mut total = 0.0;
                for cl in clusters {
                    let members = cl.members();
                    if members.is_empty() {
                        continue;
                    }
                    let values: Vec<Vec<f64>> = members.iter().map(|&i| shifted(i)).collect();
                    let ll = match cl {
                        GpCluster::Dense(d) => {
                            let mut d = d.clone();
                            d.set_values(values.concat());
                            Ok(d.log_marginal())
                        }
                        GpCluster::Sparse(s) => {
                            let mut s = s.clone();
                            s.set_values(values).map(|_| s.log_marginal())
                        }
                        GpCluster::Conditional(k) => {
                            let mut k = k.clone();
                            k.set_values(values);
                            Ok(k.residual_log_likelihood(k.hyper.s2()))
                        }
                    };
                    total += ll.unwrap_or(f64::NEG_INFINITY);
                }
                total
            }
        }
    }

    fn update_fixed_effects(&mut self) -> Result<()> {
        if self.state.beta.is_empty() {
            return Ok(());
        }
        let mut beta = self.state.beta.clone();
        let mut steps = std::mem::take(&mut self.beta_steps);
        let mut rng = self.rng.clone();
        update_beta(&mut beta, &mut steps, &self.cfg.beta_prior, |b| self.response_log_likelihood(b), &mut rng);
        self.rng = rng;
        self.beta_steps = steps;
        if beta != self.state.beta {
            self.state.beta = beta;
            self.refresh_corrected()?;
        }
        Ok(())
    }

    fn refresh_corrected(&mut self) -> Result<()> {
        let data = self.data;
        for i in 0..data.n_individuals() {
            let s = data.fixed_shift(i, &self.state.beta);
            self.corrected[i] = data.values[i].iter().map(|v| v - s).collect();
        }
        if let ResponseState::Gp { clusters } = &mut self.state.response {
            for cl in clusters.iter_mut() {
                let members = cl.members();
                let values: Vec<Vec<f64>> = members.iter().map(|&i| self.corrected[i].clone()).collect();
                match cl {
                    GpCluster::Dense(d) => d.set_values(values.concat()),
                    GpCluster::Sparse(s) => s.set_values(values)?,
                    GpCluster::Conditional(k) => k.set_values(values),
                }
            }
        }
        Ok(())
    }

    /// `log p(z | π) + Σ_c log p(x_c | z) + Σ_c log p(y_c | z)`, the last term
    /// a plug-in at the current hyperparameters for GP responses.
    pub fn log_marginal_partition_posterior(&self) -> Result<f64> {
        let z = &self.state.z;
        let mut total: f64 = z.iter().map(|&c| self.state.log_pi[c]).sum();
        let table = CountTable::new(self.data, z, self.cfg.c_max);
        let cov = &self.state.cov;
        for c in 0..self.cfg.c_max {
            if table.sizes[c] == 0 {
                continue;
            }
            for q in 0..cov.phi0.len() {
                let counts = &table.counts[c][q];
                total += if self.cfg.selection.is_none() || cov.gamma[c][q] {
                    dirichlet_multinomial_log_marginal(counts, self.cfg.dirichlet_a)
                } else {
                    counts
                        .iter()
                        .zip(&cov.phi0[q])
                        .filter(|(&n, _)| n > 0)
                        .map(|(&n, &p)| n as f64 * p.ln())
                        .sum()
                };
            }
        }
        match &self.state.response {
            ResponseState::None => {}
            ResponseState::Mvn { hyper, .. } => {
                for m in members_by_cluster(z, self.cfg.c_max).into_iter().filter(|m| !m.is_empty()) {
                    let rows: Vec<&[f64]> = m.iter().map(|&i| self.corrected[i].as_slice()).collect();
                    total += mvn_log_marginal_likelihood(&rows, hyper)?;
                }
            }
            ResponseState::Gp { clusters } => {
                for (c, cl) in clusters.iter().enumerate() {
                    if table.sizes[c] > 0 {
                        total += cl.log_marginal()?;
                    }
                }
            }
        }
        Ok(total)
    }

    /// Append the current state to `out`.
    pub fn record(&self, out: &mut McmcOutput) -> Result<()> {
        let z = &self.state.z;
        let sizes = cluster_sizes(z, self.cfg.c_max);
        out.iterations.push(self.iteration);
        out.alpha.push(self.state.alpha);
        out.n_clusters.push(1 + z.iter().copied().max().unwrap_or(0));
        out.n_nonempty.push(sizes.iter().filter(|&&n| n > 0).count());
        out.log_mpp.push(self.log_marginal_partition_posterior()?);
        out.beta.push(self.state.beta.clone());
        out.allocations.push(z.clone());
        let cov = &self.state.cov;
        let samples = (0..self.cfg.c_max)
            .filter(|&c| sizes[c] > 0)
            .map(|c| ClusterSample {
                label: c,
                size: sizes[c],
                log_weight: self.state.log_pi[c],
                phi: cov.phi[c].clone(),
                gamma: cov.gamma[c].clone(),
                response: match &self.state.response {
                    ResponseState::None => ClusterResponse::None,
                    ResponseState::Mvn { params, .. } => ClusterResponse::Mvn {
                        mu: params[c].mu.iter().copied().collect(),
                        sigma: params[c].sigma.transpose().iter().copied().collect(),
                    },
                    ResponseState::Gp { clusters } => ClusterResponse::Gp(clusters[c].hyper()),
                },
            })
            .collect();
        out.clusters.push(samples);
        if self.cfg.selection.is_some() {
            out.rho.push(cov.rho.clone());
            out.omega.push(cov.omega.clone());
        }
        Ok(())
    }

    pub fn step_summaries(&self) -> Vec<StepSummary> {
        let summary = |name: &str, s: &AdaptiveStep| StepSummary {
            name: name.to_string(),
            step: s.step,
            attempts: s.attempts,
            accepted: s.accepted,
        };
        let mut out = vec![summary("alpha", &self.alpha_step)];
        if self.kind == Some(ResponseKind::Gp) {
            let names = ["log_a", "log_l", "log_s2"];
            for (k, s) in self.gp_steps.iter().enumerate() {
                if k == 0 && self.cfg.ratio_r.is_some() {
                    continue;
                }
                out.push(summary(names[k], s));
            }
        }
        for (r, s) in self.beta_steps.iter().enumerate() {
            out.push(summary(&format!("beta_{}", r + 1), s));
        }
        out
    }

    fn snapshot(&self) -> String {
        let sizes = cluster_sizes(&self.state.z, self.cfg.c_max);
        let occupied: Vec<String> = sizes
            .iter()
            .enumerate()
            .filter(|(_, &n)| n > 0)
            .map(|(c, n)| format!("{}:{n}", c + 1))
            .collect();
        format!(
            "iteration {} alpha {} beta {:?} clusters [{}]",
            self.iteration,
            self.state.alpha,
            self.state.beta,
            occupied.join(" ")
        )
    }
}

/// Run burn-in then sampling, recording every `thin`-th sampling iteration.
pub fn run_chain(cfg: &ChainConfig, data: &Dataset, rng: ChainRng) -> Result<McmcOutput> {
    let mut chain = Chain::new(cfg, data, rng)?;
    let mut out = McmcOutput {
        response_kind: chain.response_kind(),
        log_mpp_plug_in: chain.response_kind() == Some(ResponseKind::Gp),
        phi0: chain.state.cov.phi0.clone(),
        ..Default::default()
    };
    let result = (|| -> Result<()> {
        for _ in 0..cfg.n_burn {
            chain.sweep()?;
        }
        chain.stop_adapting();
        for s in 0..cfg.n_sample {
            chain.sweep()?;
            if (s + 1) % cfg.thin == 0 {
                chain.record(&mut out)?;
            }
        }
        Ok(())
    })();
    if let Err(e) = result {
        log::error!("chain {} aborted: {e}; {}", cfg.chain_index, chain.snapshot());
        return Err(e);
    }
    out.steps = chain.step_summaries();
    Ok(out)
}
