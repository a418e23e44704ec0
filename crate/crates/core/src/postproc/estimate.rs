use crate::error::{Error, Result};
use crate::sampler::{ClusterResponse, McmcOutput};

/// Averaged response parameters of a final cluster.
#[derive(Debug, Clone, PartialEq)]
pub enum EstimatedResponse {
    None,
    Mvn { mu: Vec<f64>, sigma: Vec<f64> },
    /// Averages of the sampled log-hyperparameters.
    Gp { log_a: f64, log_l: f64, log_s2: f64 },
}

/// Parameters of one cluster of the representative partition, averaged over
/// each member's cluster at every recorded iteration.
#[derive(Debug, Clone, PartialEq)]
pub struct ClusterEstimate {
    /// 1-based label in the representative partition.
    pub cluster: usize,
    pub size: usize,
    /// `phi[q][e]`
    pub phi: Vec<Vec<f64>>,
    /// Posterior frequency of `γ_{c,q} = 1`.
    pub gamma: Vec<f64>,
    pub response: EstimatedResponse,
}

fn add_into(acc: &mut [f64], v: impl IntoIterator<Item = f64>) {
    for (a, x) in acc.iter_mut().zip(v) {
        *a += x;
    }
}

/// `θ̂_c = (1/(N_c H)) Σ_h Σ_{i: z*_i = c} θ^{(h)}_{z_i^{(h)}}` for every final
/// cluster `c` (labels are 1-based).
pub fn estimate_cluster_params(output: &McmcOutput, labels: &[usize]) -> Result<Vec<ClusterEstimate>> {
    let h_total = output.n_recorded();
    if h_total == 0 {
        return Err(Error::EmptyPosterior);
    }
    let k = labels.iter().copied().max().unwrap_or(0);
    let mut members = vec![Vec::new(); k];
    for (i, &l) in labels.iter().enumerate() {
        if l == 0 {
            return Err(Error::InvalidConfig("partition labels must start at 1".into()));
        }
        members[l - 1].push(i);
    }
    let mut out = Vec::with_capacity(k);
    for (c, m) in members.iter().enumerate() {
        if m.is_empty() {
            return Err(Error::EmptyFinalCluster(c + 1));
        }
        let mut phi: Option<Vec<Vec<f64>>> = None;
        let mut gamma: Vec<f64> = Vec::new();
        let mut mu: Vec<f64> = Vec::new();
        let mut sigma: Vec<f64> = Vec::new();
        let mut theta = [0.0; 3];
        for h in 0..h_total {
            for &i in m {
                let label = output.allocations[h][i];
                let s = output.cluster(h, label).ok_or_else(|| {
                    Error::InvalidConfig(format!("no parameters recorded for cluster {label} at sample {h}"))
                })?;
                let acc = phi.get_or_insert_with(|| s.phi.iter().map(|p| vec![0.0; p.len()]).collect());
                for (a, p) in acc.iter_mut().zip(&s.phi) {
                    add_into(a, p.iter().copied());
                }
                if gamma.is_empty() {
                    gamma = vec![0.0; s.gamma.len()];
                }
                add_into(&mut gamma, s.gamma.iter().map(|&g| if g { 1.0 } else { 0.0 }));
                match &s.response {
                    ClusterResponse::None => {}
                    ClusterResponse::Mvn { mu: m_h, sigma: s_h } => {
                        if mu.is_empty() {
                            mu = vec![0.0; m_h.len()];
                            sigma = vec![0.0; s_h.len()];
                        }
                        add_into(&mut mu, m_h.iter().copied());
                        add_into(&mut sigma, s_h.iter().copied());
                    }
                    ClusterResponse::Gp(hyp) => add_into(&mut theta, hyp.as_array()),
                }
            }
        }
        let w = 1.0 / (m.len() * h_total) as f64;
        let scale = |v: &mut Vec<f64>| v.iter_mut().for_each(|x| *x *= w);
        let mut phi = phi.unwrap_or_default();
        phi.iter_mut().for_each(scale);
        scale(&mut gamma);
        scale(&mut mu);
        scale(&mut sigma);
        let response = match output.response_kind {
            None => EstimatedResponse::None,
            Some(crate::data::ResponseKind::Mvn) => EstimatedResponse::Mvn { mu, sigma },
            Some(crate::data::ResponseKind::Gp) => EstimatedResponse::Gp {
                log_a: theta[0] * w,
                log_l: theta[1] * w,
                log_s2: theta[2] * w,
            },
        };
        out.push(ClusterEstimate {
            cluster: c + 1,
            size: m.len(),
            phi,
            gamma,
            response,
        });
    }
    Ok(out)
}

/// Type-7 sample quantile of an unsorted slice.
pub fn quantile(values: &[f64], p: f64) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    sorted_quantile(&v, p)
}

pub(crate) fn sorted_quantile(v: &[f64], p: f64) -> f64 {
    if v.is_empty() {
        return f64::NAN;
    }
    let h = (v.len() - 1) as f64 * p.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(v.len() - 1);
    v[lo] + (h - lo as f64) * (v[hi] - v[lo])
}

/// Posterior summary of `ρ_q`.
#[derive(Debug, Clone, PartialEq)]
pub struct SelectionSummary {
    pub covariate: usize,
    pub mean: f64,
    pub q05: f64,
    pub q95: f64,
    /// Posterior frequency of `ω_q = 1`.
    pub omega: f64,
}

pub fn selection_summary(output: &McmcOutput) -> Vec<SelectionSummary> {
    let Some(first) = output.rho.first() else {
        return Vec::new();
    };
    (0..first.len())
        .map(|q| {
            let r: Vec<f64> = output.rho.iter().map(|v| v[q]).collect();
            let om = output.omega.iter().filter(|v| v[q]).count() as f64 / output.omega.len().max(1) as f64;
            SelectionSummary {
                covariate: q + 1,
                mean: r.iter().sum::<f64>() / r.len() as f64,
                q05: quantile(&r, 0.05),
                q95: quantile(&r, 0.95),
                omega: om,
            }
        })
        .collect()
}
