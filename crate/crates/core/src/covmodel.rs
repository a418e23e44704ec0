//! Categorical covariate model: per-cluster multinomial profiles with
//! conjugate Dirichlet updates and spike-and-slab variable selection.

use rand::Rng;
use rand_distr::{Beta, Distribution, Exp1, Gamma};
use statrs::function::gamma::ln_gamma;

use crate::data::Dataset;

/// How the relevance indicators `γ` are refreshed when selection is on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SelectionUpdate {
    /// Draw `γ` with `φ` integrated out, then `φ | γ`. Same stationary law, faster mixing.
    #[default]
    Collapsed,
    /// Draw `φ | γ` first, then `γ | φ` from its Bernoulli full conditional.
    Conditional,
}

impl std::str::FromStr for SelectionUpdate {
    type Err = crate::Error;
    fn from_str(s: &str) -> crate::Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "collapsed" => Ok(Self::Collapsed),
            "conditional" => Ok(Self::Conditional),
            other => Err(crate::Error::Parse(format!("unknown selection update `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CovariateParams {
    /// `phi[c][q][e]`
    pub phi: Vec<Vec<Vec<f64>>>,
    /// Empirical category frequencies `phi0[q][e]`.
    pub phi0: Vec<Vec<f64>>,
    /// `gamma[c][q]`
    pub gamma: Vec<Vec<bool>>,
    pub rho: Vec<f64>,
    pub omega: Vec<bool>,
}

/// Member counts `n[c][q][e]` and cluster sizes for a fixed allocation.
#[derive(Debug, Clone, PartialEq)]
pub struct CountTable {
    pub counts: Vec<Vec<Vec<usize>>>,
    pub sizes: Vec<usize>,
}

impl CountTable {
    pub fn new(dataset: &Dataset, z: &[usize], n_clusters: usize) -> Self {
        let mut counts: Vec<Vec<Vec<usize>>> = (0..n_clusters)
            .map(|_| dataset.category_counts.iter().map(|&e| vec![0; e]).collect())
            .collect();
        let mut sizes = vec![0; n_clusters];
        for (row, &c) in dataset.covariates.iter().zip(z) {
            sizes[c] += 1;
            for (q, &x) in row.iter().enumerate() {
                counts[c][q][x] += 1;
            }
        }
        Self { counts, sizes }
    }
}

/// Per-covariate category frequencies over the whole dataset.
pub fn empirical_proportions(dataset: &Dataset) -> Vec<Vec<f64>> {
    let n = dataset.n_individuals().max(1) as f64;
    let mut p: Vec<Vec<f64>> = dataset.category_counts.iter().map(|&e| vec![0.0; e]).collect();
    for row in &dataset.covariates {
        for (q, &x) in row.iter().enumerate() {
            p[q][x] += 1.0;
        }
    }
    for v in p.iter_mut().flatten() {
        *v /= n;
    }
    p
}

impl CovariateParams {
    /// Uniform profiles, all covariates relevant, `ρ = 1/2`.
    pub fn new(dataset: &Dataset, n_clusters: usize) -> Self {
        let q = dataset.n_covariates();
        let uniform: Vec<Vec<f64>> = dataset
            .category_counts
            .iter()
            .map(|&e| vec![1.0 / e as f64; e])
            .collect();
        Self {
            phi: vec![uniform; n_clusters],
            phi0: empirical_proportions(dataset),
            gamma: vec![vec![true; q]; n_clusters],
            rho: vec![0.5; q],
            omega: vec![true; q],
        }
    }

    pub fn n_clusters(&self) -> usize {
        self.phi.len()
    }

    /// Composite probability `γφ + (1−γ)φ0` of category `e`.
    pub fn composite(&self, c: usize, q: usize, e: usize, selection_on: bool) -> f64 {
        if !selection_on || self.gamma[c][q] {
            self.phi[c][q][e]
        } else {
            self.phi0[q][e]
        }
    }

    /// Log composite probabilities for every cluster, flattened per cluster.
    pub fn log_table(&self, selection_on: bool) -> LogProbTable {
        let offsets: Vec<usize> = self.phi0.iter().scan(0, |acc, p| {
            let o = *acc;
            *acc += p.len();
            Some(o)
        }).collect();
        let width = self.phi0.iter().map(Vec::len).sum();
        let mut values = Vec::with_capacity(width * self.n_clusters());
        for c in 0..self.n_clusters() {
            for q in 0..self.phi0.len() {
                for e in 0..self.phi0[q].len() {
                    values.push(self.composite(c, q, e, selection_on).ln());
                }
            }
        }
        LogProbTable { offsets, width, values }
    }
}

/// Flattened `ln φ*[c][q][e]` lookup used by the allocation step.
#[derive(Debug, Clone)]
pub struct LogProbTable {
    offsets: Vec<usize>,
    width: usize,
    values: Vec<f64>,
}

impl LogProbTable {
    pub fn row_log_likelihood(&self, x: &[usize], c: usize) -> f64 {
        let base = &self.values[c * self.width..(c + 1) * self.width];
        x.iter().zip(&self.offsets).map(|(&e, &o)| base[o + e]).sum()
    }
}

/// `Σ_q ln φ*_{c,q,x_q}`; `−∞` when a probability is exactly zero.
pub fn covariate_log_likelihood(
    x: &[usize],
    c: usize,
    params: &CovariateParams,
    selection_on: bool,
) -> f64 {
    x.iter()
        .enumerate()
        .map(|(q, &e)| params.composite(c, q, e, selection_on).ln())
        .sum()
}

/// Dirichlet draw via normalised Gamma variates, computed in log space so that
/// concentrations far below 1 do not underflow.
pub fn sample_dirichlet<R: Rng + ?Sized>(alpha: &[f64], rng: &mut R) -> Vec<f64> {
    if alpha.iter().all(|&a| a >= 1.0) {
        let g: Vec<f64> = alpha
            .iter()
            .map(|&a| {
                if a == 1.0 {
                    rng.sample(Exp1)
                } else {
                    Gamma::new(a, 1.0).expect("positive shape").sample(rng)
                }
            })
            .collect();
        let s: f64 = g.iter().sum();
        return g.into_iter().map(|v| v / s).collect();
    }
    let logs: Vec<f64> = alpha
        .iter()
        .map(|&a| {
            if a >= 1.0 {
                Gamma::new(a, 1.0).expect("positive shape").sample(rng).ln()
            } else {
                // G(a) = G(a+1)·U^{1/a}
                let g = Gamma::new(a + 1.0, 1.0).expect("positive shape").sample(rng);
                let u: f64 = rng.random::<f64>().max(f64::MIN_POSITIVE);
                g.ln() + u.ln() / a
            }
        })
        .collect();
    let m = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let w: Vec<f64> = logs.iter().map(|l| (l - m).exp()).collect();
    let s: f64 = w.iter().sum();
    w.into_iter().map(|v| v / s).collect()
}

/// Posterior Dirichlet draw for covariate `q` given the cluster's members.
pub fn sample_phi<R: Rng + ?Sized>(
    members: &[usize],
    q: usize,
    dataset: &Dataset,
    a_prior: &[f64],
    rng: &mut R,
) -> Vec<f64> {
    let mut post = a_prior.to_vec();
    for &i in members {
        post[dataset.covariates[i][q]] += 1.0;
    }
    sample_dirichlet(&post, rng)
}

fn ln_beta_multi(a: &[f64]) -> f64 {
    a.iter().map(|&v| ln_gamma(v)).sum::<f64>() - ln_gamma(a.iter().sum())
}

/// Log Dirichlet-multinomial marginal of a sequence of category counts.
pub fn dirichlet_multinomial_log_marginal(counts: &[usize], a_prior: f64) -> f64 {
    let post: Vec<f64> = counts.iter().map(|&n| a_prior + n as f64).collect();
    ln_beta_multi(&post) - ln_beta_multi(&vec![a_prior; counts.len()])
}

fn sample_gamma_indicator<R: Rng + ?Sized>(log_odds: f64, rng: &mut R) -> bool {
    if log_odds == f64::INFINITY {
        return true;
    }
    if log_odds == f64::NEG_INFINITY || log_odds.is_nan() {
        return false;
    }
    let p = 1.0 / (1.0 + (-log_odds).exp());
    rng.random::<f64>() < p
}

fn relevance_log_prior(rho: f64) -> f64 {
    if rho <= 0.0 {
        f64::NEG_INFINITY
    } else if rho >= 1.0 {
        f64::INFINITY
    } else {
        rho.ln() - (1.0 - rho).ln()
    }
}

/// Refresh `φ` for every cluster and covariate, plus `γ, ω, ρ` when selection is on.
pub fn update_covariate_params<R: Rng + ?Sized>(
    params: &mut CovariateParams,
    table: &CountTable,
    a_prior: f64,
    selection: Option<SelectionUpdate>,
    rng: &mut R,
) {
    let n_q = params.phi0.len();
    let draw_phi = |params: &mut CovariateParams, rng: &mut R| {
        for c in 0..params.n_clusters() {
            for q in 0..n_q {
                let informed = selection.is_none() || params.gamma[c][q];
                let post: Vec<f64> = table.counts[c][q]
                    .iter()
                    .map(|&n| a_prior + if informed { n as f64 } else { 0.0 })
                    .collect();
                params.phi[c][q] = sample_dirichlet(&post, rng);
            }
        }
    };
    match selection {
        None => draw_phi(params, rng),
        Some(SelectionUpdate::Collapsed) => {
            resample_gamma(params, table, a_prior, true, rng);
            resample_omega_rho(params, table, rng);
            draw_phi(params, rng);
        }
        Some(SelectionUpdate::Conditional) => {
            draw_phi(params, rng);
            resample_gamma(params, table, a_prior, false, rng);
            resample_omega_rho(params, table, rng);
        }
    }
}

/// Variable-selection block only: `γ | φ` (or collapsed), then `ω, ρ | γ`.
pub fn update_variable_selection<R: Rng + ?Sized>(
    params: &mut CovariateParams,
    z: &[usize],
    dataset: &Dataset,
    a_prior: f64,
    mode: SelectionUpdate,
    rng: &mut R,
) {
    let table = CountTable::new(dataset, z, params.n_clusters());
    resample_gamma(params, &table, a_prior, mode == SelectionUpdate::Collapsed, rng);
    resample_omega_rho(params, &table, rng);
}

fn resample_gamma<R: Rng + ?Sized>(
    params: &mut CovariateParams,
    table: &CountTable,
    a_prior: f64,
    collapsed: bool,
    rng: &mut R,
) {
    for c in 0..params.n_clusters() {
        for q in 0..params.phi0.len() {
            let prior = relevance_log_prior(params.rho[q]);
            if table.sizes[c] == 0 {
                params.gamma[c][q] = sample_gamma_indicator(prior, rng);
                continue;
            }
            let counts = &table.counts[c][q];
            let null: f64 = counts
                .iter()
                .zip(&params.phi0[q])
                .filter(|(&n, _)| n > 0)
                .map(|(&n, &p)| n as f64 * p.ln())
                .sum();
            let slab = if collapsed {
                dirichlet_multinomial_log_marginal(counts, a_prior)
            } else {
                counts
                    .iter()
                    .zip(&params.phi[c][q])
                    .filter(|(&n, _)| n > 0)
                    .map(|(&n, &p)| n as f64 * p.ln())
                    .sum()
            };
            params.gamma[c][q] = sample_gamma_indicator(prior + slab - null, rng);
        }
    }
}

fn resample_omega_rho<R: Rng + ?Sized>(params: &mut CovariateParams, table: &CountTable, rng: &mut R) {
    let occupied: Vec<usize> = (0..params.n_clusters()).filter(|&c| table.sizes[c] > 0).collect();
    let k = occupied.len() as f64;
    for q in 0..params.phi0.len() {
        let s = occupied.iter().filter(|&&c| params.gamma[c][q]).count() as f64;
        // Spike puts mass 1 on the all-zero column; the slab integrates ρ ~ Beta(½,½).
        params.omega[q] = if s > 0.0 {
            true
        } else {
            let slab = (ln_gamma(0.5 + k) - ln_gamma(1.0 + k) - ln_gamma(0.5) + ln_gamma(1.0)).exp();
            rng.random::<f64>() < slab / (1.0 + slab)
        };
        params.rho[q] = if params.omega[q] {
            Beta::new(0.5 + s, 0.5 + k - s)
                .expect("positive shapes")
                .sample(rng)
        } else {
            0.0
        };
    }
    for (q, &on) in params.omega.iter().enumerate() {
        if !on {
            for g in params.gamma.iter_mut() {
                g[q] = false;
            }
        }
    }
}
