use std::collections::HashMap;

use rand::Rng;

use super::estimate::{sorted_quantile, ClusterEstimate, EstimatedResponse};
use crate::data::{Dataset, ResponseKind};
use crate::error::{Error, Result};
use crate::gp::{gp_posterior_mean_cov, GpHyper};
use crate::sampler::{sample_log_categorical, ClusterResponse, ClusterSample, McmcOutput};

const Z95: f64 = 1.644_853_626_951_472_2;

/// Covariate profile (0-based categories) and fixed-effect row of a subject.
#[derive(Debug, Clone, PartialEq)]
pub struct Profile {
    pub id: String,
    pub covariates: Vec<usize>,
    pub fixed: Vec<f64>,
}

/// Point prediction and 5%/95% band on a time grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub times: Vec<f64>,
    pub estimate: Vec<f64>,
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

fn check_grid(grid: &[f64]) -> Result<()> {
    if grid.is_empty() {
        return Err(Error::InvalidGrid("prediction grid is empty".into()));
    }
    if grid.iter().any(|t| !t.is_finite()) {
        return Err(Error::InvalidGrid("prediction grid has non-finite times".into()));
    }
    Ok(())
}

/// Positions of `grid` within the shared MVN observation grid.
fn mvn_grid_positions(data: &Dataset, grid: &[f64]) -> Result<Vec<usize>> {
    let common = data
        .common_grid()
        .ok_or_else(|| Error::InvalidGrid("dataset has no shared observation grid".into()))?;
    grid.iter()
        .map(|t| {
            common
                .iter()
                .position(|s| (s - t).abs() <= 1e-9 * (1.0 + t.abs()))
                .ok_or_else(|| Error::InvalidGrid(format!("time {t} is not an observation time of the multivariate normal outcome")))
        })
        .collect()
}

fn membership_log_weight(s: &ClusterSample, phi0: &[Vec<f64>], x: &[usize]) -> f64 {
    let mut w = s.log_weight;
    for (q, &e) in x.iter().enumerate() {
        let p = if s.gamma[q] || phi0.is_empty() { s.phi[q][e] } else { phi0[q][e] };
        w += p.ln();
    }
    w
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Posterior mean of cluster `label`'s latent function at iteration `h`, given
/// its members' outcomes corrected by that iteration's fixed effects.
fn gp_cluster_mean(output: &McmcOutput, data: &Dataset, h: usize, label: usize, hyper: &GpHyper, grid: &[f64]) -> Result<Vec<f64>> {
    let beta = output.beta.get(h).map(Vec::as_slice).unwrap_or(&[]);
    let mut t = Vec::new();
    let mut y = Vec::new();
    for (i, &z) in output.allocations[h].iter().enumerate() {
        if z == label {
            let s = data.fixed_shift(i, beta);
            t.extend_from_slice(&data.times[i]);
            y.extend(data.values[i].iter().map(|v| v - s));
        }
    }
    let (mean, _) = gp_posterior_mean_cov(grid, &t, &y, hyper)?;
    Ok(mean.iter().copied().collect())
}

/// Predicted trajectories for several profiles, sharing per-iteration cluster means.
///
/// At each recorded iteration the subject's cluster is drawn with probability
/// `∝ π_c · Π_q φ*_{c,q,x_q}` over the occupied clusters. MVN predictions average
/// `μ_c + βᵀw`; GP predictions take the pointwise median of `m*_c(t) + βᵀw`. The
/// band is the pointwise 5%/95% quantile in both cases.
pub fn predict_trajectories<R: Rng + ?Sized>(
    profiles: &[Profile],
    output: &McmcOutput,
    data: &Dataset,
    grid: &[f64],
    rng: &mut R,
) -> Result<Vec<Prediction>> {
    let h_total = output.n_recorded();
    if h_total == 0 {
        return Err(Error::EmptyPosterior);
    }
    check_grid(grid)?;
    let kind = output
        .response_kind
        .ok_or_else(|| Error::InsufficientData("posterior has no outcome model to predict from".into()))?;
    let positions = match kind {
        ResponseKind::Mvn => mvn_grid_positions(data, grid)?,
        ResponseKind::Gp => Vec::new(),
    };
    for (k, p) in profiles.iter().enumerate() {
        if p.covariates.len() != data.n_covariates() {
            return Err(Error::LengthMismatch(format!("profile {} has {} covariates", p.id, p.covariates.len())));
        }
        for (q, (&e, &max)) in p.covariates.iter().zip(&data.category_counts).enumerate() {
            if e >= max {
                return Err(Error::CategoryOutOfRange { individual: k, covariate: q, value: e + 1, max });
            }
        }
    }
    let mut cache: HashMap<(usize, usize), Vec<f64>> = HashMap::new();
    let mut preds = Vec::with_capacity(profiles.len());
    for (k, p) in profiles.iter().enumerate() {
        let mut draws: Vec<Vec<f64>> = Vec::with_capacity(h_total);
        for h in 0..h_total {
            let samples = &output.clusters[h];
            let lw: Vec<f64> = samples.iter().map(|s| membership_log_weight(s, &output.phi0, &p.covariates)).collect();
            let pick = sample_log_categorical(&lw, rng).ok_or(Error::AllComponentsZeroMass { individual: k })?;
            let s = &samples[pick];
            let shift = output.beta.get(h).map_or(0.0, |b| dot(b, &p.fixed));
            let curve: Vec<f64> = match &s.response {
                ClusterResponse::Mvn { mu, .. } => positions.iter().map(|&j| mu[j] + shift).collect(),
                ClusterResponse::Gp(hyper) => {
                    let key = (h, s.label);
                    if !cache.contains_key(&key) {
                        cache.insert(key, gp_cluster_mean(output, data, h, s.label, hyper, grid)?);
                    }
                    cache[&key].iter().map(|m| m + shift).collect()
                }
                ClusterResponse::None => return Err(Error::InsufficientData("cluster samples carry no response parameters".into())),
            };
            draws.push(curve);
        }
        preds.push(summarize_draws(grid, &draws, kind));
    }
    Ok(preds)
}

fn summarize_draws(grid: &[f64], draws: &[Vec<f64>], kind: ResponseKind) -> Prediction {
    let mut out = Prediction {
        times: grid.to_vec(),
        estimate: Vec::with_capacity(grid.len()),
        lo: Vec::with_capacity(grid.len()),
        hi: Vec::with_capacity(grid.len()),
    };
    for j in 0..grid.len() {
        let mut col: Vec<f64> = draws.iter().map(|d| d[j]).collect();
        col.sort_by(f64::total_cmp);
        out.estimate.push(match kind {
            ResponseKind::Mvn => col.iter().sum::<f64>() / col.len() as f64,
            ResponseKind::Gp => sorted_quantile(&col, 0.5),
        });
        out.lo.push(sorted_quantile(&col, 0.05));
        out.hi.push(sorted_quantile(&col, 0.95));
    }
    out
}

/// Prediction for a single covariate profile `x` with fixed-effect row `w`.
pub fn predict_trajectory<R: Rng + ?Sized>(
    x: &[usize],
    w: &[f64],
    output: &McmcOutput,
    data: &Dataset,
    grid: &[f64],
    rng: &mut R,
) -> Result<Prediction> {
    let profile = Profile {
        id: String::new(),
        covariates: x.to_vec(),
        fixed: w.to_vec(),
    };
    Ok(predict_trajectories(&[profile], output, data, grid, rng)?.remove(0))
}

/// Mean trajectory of every final cluster on `grid`.
///
/// GP clusters use the averaged hyperparameters and the members' outcomes
/// corrected by the posterior mean fixed effects; the band is the pointwise
/// 90% interval of the latent function. MVN clusters report the averaged mean
/// with the 5%/95% quantiles of the pooled per-iteration means.
pub fn cluster_profiles(
    output: &McmcOutput,
    data: &Dataset,
    labels: &[usize],
    estimates: &[ClusterEstimate],
    grid: &[f64],
) -> Result<Vec<(usize, Prediction)>> {
    if output.n_recorded() == 0 {
        return Err(Error::EmptyPosterior);
    }
    check_grid(grid)?;
    let r = data.n_fixed();
    let mut beta_mean = vec![0.0; r];
    for b in &output.beta {
        for (m, v) in beta_mean.iter_mut().zip(b) {
            *m += v / output.beta.len() as f64;
        }
    }
    let mut out = Vec::with_capacity(estimates.len());
    for est in estimates {
        let members: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == est.cluster).collect();
        let pred = match &est.response {
            EstimatedResponse::None => continue,
            EstimatedResponse::Gp { log_a, log_l, log_s2 } => {
                let hyper = GpHyper::new(*log_a, *log_l, *log_s2);
                let mut t = Vec::new();
                let mut y = Vec::new();
                for &i in &members {
                    let s = data.fixed_shift(i, &beta_mean);
                    t.extend_from_slice(&data.times[i]);
                    y.extend(data.values[i].iter().map(|v| v - s));
                }
                let (mean, cov) = gp_posterior_mean_cov(grid, &t, &y, &hyper)?;
                let sd: Vec<f64> = (0..grid.len()).map(|j| cov[(j, j)].max(0.0).sqrt()).collect();
                Prediction {
                    times: grid.to_vec(),
                    estimate: mean.iter().copied().collect(),
                    lo: mean.iter().zip(&sd).map(|(m, s)| m - Z95 * s).collect(),
                    hi: mean.iter().zip(&sd).map(|(m, s)| m + Z95 * s).collect(),
                }
            }
            EstimatedResponse::Mvn { mu, .. } => {
                let positions = mvn_grid_positions(data, grid)?;
                let mut draws = Vec::with_capacity(members.len() * output.n_recorded());
                for h in 0..output.n_recorded() {
                    for &i in &members {
                        if let Some(ClusterResponse::Mvn { mu: m_h, .. }) =
                            output.cluster(h, output.allocations[h][i]).map(|s| &s.response)
                        {
                            draws.push(positions.iter().map(|&j| m_h[j]).collect::<Vec<f64>>());
                        }
                    }
                }
                let mut p = summarize_draws(grid, &draws, ResponseKind::Mvn);
                p.estimate = positions.iter().map(|&j| mu[j]).collect();
                p
            }
        };
        out.push((est.cluster, pred));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::tests::toy;
    use crate::rng::RandomSource;

    fn mvn_output(mus: &[[f64; 2]], weights: &[f64]) -> McmcOutput {
        let samples: Vec<ClusterSample> = mus
            .iter()
            .zip(weights)
            .enumerate()
            .map(|(c, (mu, w))| ClusterSample {
                label: c,
                size: 1,
                log_weight: w.ln(),
                phi: vec![vec![0.5, 0.5], vec![0.5, 0.5]],
                gamma: vec![true, true],
                response: ClusterResponse::Mvn { mu: mu.to_vec(), sigma: vec![1.0, 0.0, 0.0, 1.0] },
            })
            .collect();
        McmcOutput {
            response_kind: Some(ResponseKind::Mvn),
            iterations: vec![1],
            allocations: vec![vec![0, 0]],
            clusters: vec![samples],
            beta: vec![vec![]],
            ..Default::default()
        }
    }

    #[test]
    fn single_cluster_mvn_equals_mean() {
        let ds = toy(vec![vec![0.0, 1.0], vec![0.0, 1.0]]);
        let out = mvn_output(&[[2.0, -1.0]], &[1.0]);
        let mut rng = RandomSource::new(3, 0).rng();
        let p = predict_trajectory(&[0, 1], &[], &out, &ds, &[0.0, 1.0], &mut rng).unwrap();
        assert_eq!(p.estimate, vec![2.0, -1.0]);
        assert_eq!(p.lo, p.estimate);
        assert!(predict_trajectory(&[0, 1], &[], &out, &ds, &[], &mut rng).is_err());
        assert!(predict_trajectory(&[0, 1], &[], &out, &ds, &[0.5], &mut rng).is_err());
    }

    #[test]
    fn single_cluster_gp_equals_mean_function() {
        let mut ds = toy(vec![vec![0.0, 1.0], vec![0.5]]);
        ds.values = vec![vec![1.0, 2.0], vec![1.5]];
        let hyper = GpHyper::new(0.0, 0.0, -1.0);
        let out = McmcOutput {
            response_kind: Some(ResponseKind::Gp),
            iterations: vec![1],
            allocations: vec![vec![4, 4]],
            clusters: vec![vec![ClusterSample {
                label: 4,
                size: 2,
                log_weight: 0.0,
                phi: vec![vec![0.5, 0.5], vec![0.5, 0.5]],
                gamma: vec![true, true],
                response: ClusterResponse::Gp(hyper),
            }]],
            beta: vec![vec![]],
            ..Default::default()
        };
        let grid = [0.0, 0.25, 2.0];
        let mut rng = RandomSource::new(3, 0).rng();
        let p = predict_trajectory(&[0, 0], &[], &out, &ds, &grid, &mut rng).unwrap();
        let (m, _) = gp_posterior_mean_cov(&grid, &[0.0, 1.0, 0.5], &[1.0, 2.0, 1.5], &hyper).unwrap();
        for j in 0..3 {
            assert!((p.estimate[j] - m[j]).abs() < 1e-12);
        }
    }

    #[test]
    fn symmetric_mvn_mean_zero_and_band_monotone() {
        let ds = toy(vec![vec![0.0, 1.0], vec![0.0, 1.0]]);
        let mut out = mvn_output(&[[1.0, 1.0], [-1.0, -1.0]], &[0.5, 0.5]);
        let one = out.clusters[0].clone();
        out.clusters = vec![one; 4000];
        out.iterations = (1..=4000).collect();
        out.allocations = vec![vec![0, 1]; 4000];
        out.beta = vec![vec![]; 4000];
        let mut rng = RandomSource::new(9, 0).rng();
        let p = predict_trajectory(&[0, 0], &[], &out, &ds, &[0.0, 1.0], &mut rng).unwrap();
        for j in 0..2 {
            assert!(p.estimate[j].abs() < 0.07);
            assert!(p.lo[j] <= p.estimate[j] && p.estimate[j] <= p.hi[j]);
        }
    }

    #[test]
    fn hand_evaluated_quantiles() {
        let draws = vec![vec![1.0], vec![4.0], vec![2.0]];
        let p = summarize_draws(&[0.0], &draws, ResponseKind::Gp);
        assert_eq!(p.estimate, vec![2.0]);
        assert!((p.lo[0] - 1.1).abs() < 1e-12);
        assert!((p.hi[0] - 3.8).abs() < 1e-12);
        let p = summarize_draws(&[0.0], &draws, ResponseKind::Mvn);
        assert!((p.estimate[0] - 7.0 / 3.0).abs() < 1e-12);
    }
}
