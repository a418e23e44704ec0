//! Multivariate-normal response model with a normal-inverse-Wishart prior.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::Rng;
use rand_distr::{ChiSquared, Distribution, StandardNormal};
use statrs::function::gamma::ln_gamma;

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::linalg::{chol_logdet, symmetrize, LN_2PI};

/// Cluster mean and covariance with a cached Cholesky factor of the covariance.
#[derive(Debug, Clone)]
pub struct MvnClusterParams {
    pub mu: DVector<f64>,
    pub sigma: DMatrix<f64>,
    chol: Cholesky<f64, Dyn>,
    log_norm: f64,
}

impl PartialEq for MvnClusterParams {
    fn eq(&self, other: &Self) -> bool {
        self.mu == other.mu && self.sigma == other.sigma
    }
}

impl MvnClusterParams {
    /// Falls back to a `1e-10·trace/M` jitter (with a warning) when `sigma` is
    /// numerically indefinite.
    pub fn new(mu: DVector<f64>, mut sigma: DMatrix<f64>) -> Result<Self> {
        symmetrize(&mut sigma);
        let chol = match Cholesky::new(sigma.clone()) {
            Some(c) => c,
            None => {
                let m = sigma.nrows().max(1) as f64;
                let jitter = 1e-10 * sigma.trace() / m;
                log::warn!("covariance not positive definite; adding jitter {jitter:e}");
                for i in 0..sigma.nrows() {
                    sigma[(i, i)] += jitter;
                }
                Cholesky::new(sigma.clone()).ok_or(Error::NonSpdCovariance)?
            }
        };
        let log_norm = -0.5 * (mu.len() as f64 * LN_2PI + chol_logdet(&chol));
        Ok(Self { mu, sigma, chol, log_norm })
    }

    pub fn dim(&self) -> usize {
        self.mu.len()
    }

    /// Log-density of `y` whose mean is shifted by the scalar `shift` in every coordinate.
    pub fn log_density(&self, y: &[f64], shift: f64) -> f64 {
        let m = y.len();
        let mut stack = [0.0f64; 16];
        let mut heap = Vec::new();
        let z: &mut [f64] = if m <= stack.len() {
            &mut stack[..m]
        } else {
            heap.resize(m, 0.0);
            &mut heap
        };
        let l = self.chol.l_dirty();
        let mut quad = 0.0;
        for j in 0..m {
            let mut v = y[j] - self.mu[j] - shift;
            for k in 0..j {
                v -= l[(j, k)] * z[k];
            }
            z[j] = v / l[(j, j)];
            quad += z[j] * z[j];
        }
        self.log_norm - 0.5 * quad
    }

    pub fn log_det_sigma(&self) -> f64 {
        -2.0 * self.log_norm - self.mu.len() as f64 * LN_2PI
    }
}

/// Normal-inverse-Wishart hyperparameters `(μ0, κ0, ν0, R0)`.
#[derive(Debug, Clone, PartialEq)]
pub struct NiwHyper {
    pub mu0: DVector<f64>,
    pub kappa0: f64,
    pub nu0: f64,
    pub r0: DMatrix<f64>,
}

/// `log N(y_i; μ_c + (βᵀw_i)1, Σ_c)`.
pub fn mvn_log_likelihood(y: &[f64], params: &MvnClusterParams, beta: &[f64], w: &[f64]) -> f64 {
    let shift: f64 = beta.iter().zip(w).map(|(b, x)| b * x).sum();
    params.log_density(y, shift)
}

/// Data-driven defaults: `μ0` the sample mean, `κ0 = 0.01`, `ν0 = M` and
/// `R0 = ((ν0/N) Σ_i (y_i−μ0)(y_i−μ0)ᵀ)⁻¹`.
pub fn default_niw_hyper(dataset: &Dataset) -> Result<NiwHyper> {
    let rows = dataset.values.as_slice();
    let n = rows.len();
    let m = rows.first().map_or(0, Vec::len);
    if n == 0 || m == 0 {
        return Err(Error::InsufficientData("MVN defaults need a non-empty outcome".into()));
    }
    let mut mu0 = DVector::zeros(m);
    for y in rows {
        mu0 += DVector::from_column_slice(y);
    }
    mu0 /= n as f64;
    let nu0 = m as f64;
    let mut scatter = DMatrix::zeros(m, m);
    for y in rows {
        let d = DVector::from_column_slice(y) - &mu0;
        scatter += &d * d.transpose();
    }
    let scaled = scatter * (nu0 / n as f64);
    let ch = Cholesky::new(scaled).ok_or(Error::SingularScatter)?;
    if ch.l_dirty().diagonal().iter().any(|&d| d < 1e-12) {
        return Err(Error::SingularScatter);
    }
    let mut r0 = ch.inverse();
    symmetrize(&mut r0);
    Ok(NiwHyper {
        mu0,
        kappa0: 0.01,
        nu0,
        r0,
    })
}

/// Sufficient statistics of a set of corrected outcome rows.
struct Summary {
    n: usize,
    mean: DVector<f64>,
    scatter: DMatrix<f64>,
}

fn summarize(rows: &[&[f64]], m: usize) -> Summary {
    let n = rows.len();
    let mut mean = DVector::zeros(m);
    for y in rows {
        mean += DVector::from_column_slice(y);
    }
    if n > 0 {
        mean /= n as f64;
    }
    let mut scatter = DMatrix::zeros(m, m);
    for y in rows {
        let d = DVector::from_column_slice(y) - &mean;
        scatter += &d * d.transpose();
    }
    Summary { n, mean, scatter }
}

/// Posterior NIW parameters `(μ_n, κ_n, ν_n, R_n)`.
pub fn niw_posterior(rows: &[&[f64]], hyper: &NiwHyper) -> NiwHyper {
    if rows.is_empty() {
        return hyper.clone();
    }
    let m = hyper.mu0.len();
    let s = summarize(rows, m);
    let nf = s.n as f64;
    let kn = hyper.kappa0 + nf;
    let mun = (&hyper.mu0 * hyper.kappa0 + &s.mean * nf) / kn;
    let d = &s.mean - &hyper.mu0;
    let mut rn = &hyper.r0 + &s.scatter + (&d * d.transpose()) * (hyper.kappa0 * nf / kn);
    symmetrize(&mut rn);
    NiwHyper {
        mu0: mun,
        kappa0: kn,
        nu0: hyper.nu0 + nf,
        r0: rn,
    }
}

/// Inverse-Wishart draw `IW(scale, df)` by Bartlett decomposition of the
/// Wishart precision `W(scale⁻¹, df)`.
pub fn sample_inverse_wishart<R: Rng + ?Sized>(scale: &DMatrix<f64>, df: f64, rng: &mut R) -> Result<DMatrix<f64>> {
    let b = inverse_wishart_factor(scale, df, rng)?;
    let mut sigma = b.transpose() * &b;
    symmetrize(&mut sigma);
    Ok(sigma)
}

/// `B` with `BᵀB ~ IW(scale, df)`: the inverse of the lower-triangular
/// Bartlett factor of the precision, so no ill-conditioned matrix is ever
/// factorised.
fn inverse_wishart_factor<R: Rng + ?Sized>(scale: &DMatrix<f64>, df: f64, rng: &mut R) -> Result<DMatrix<f64>> {
    let m = scale.nrows();
    let prec_scale = Cholesky::new(scale.clone()).ok_or(Error::NonSpdCovariance)?.inverse();
    let l = Cholesky::new(prec_scale).ok_or(Error::NonSpdCovariance)?.unpack();
    let mut a = DMatrix::zeros(m, m);
    for i in 0..m {
        let chi = ChiSquared::new(df - i as f64).map_err(|_| Error::InvalidConfig(format!("inverse-Wishart df {df} too small for dimension {m}")))?;
        a[(i, i)] = chi.sample(rng).sqrt().max(f64::MIN_POSITIVE);
        for j in 0..i {
            a[(i, j)] = rng.sample::<f64, _>(StandardNormal);
        }
    }
    let la = l * a;
    la.solve_lower_triangular(&DMatrix::identity(m, m)).ok_or(Error::NonSpdCovariance)
}

/// Conjugate draw of `(μ_c, Σ_c)`; with no members this is a prior draw.
pub fn sample_mvn_cluster_params<R: Rng + ?Sized>(
    rows: &[&[f64]],
    hyper: &NiwHyper,
    rng: &mut R,
) -> Result<MvnClusterParams> {
    let post = niw_posterior(rows, hyper);
    let b = inverse_wishart_factor(&post.r0, post.nu0, rng)?;
    let mut sigma = b.transpose() * &b;
    symmetrize(&mut sigma);
    let m = sigma.nrows();
    let e = DVector::from_iterator(m, (0..m).map(|_| rng.sample::<f64, _>(StandardNormal)));
    let mu = &post.mu0 + b.transpose() * e / post.kappa0.sqrt();
    MvnClusterParams::new(mu, sigma)
}

fn ln_multigamma(m: usize, x: f64) -> f64 {
    let mf = m as f64;
    mf * (mf - 1.0) / 4.0 * std::f64::consts::PI.ln()
        + (0..m).map(|j| ln_gamma(x - j as f64 / 2.0)).sum::<f64>()
}

/// Closed-form log marginal likelihood of the rows under the NIW prior.
pub fn mvn_log_marginal_likelihood(rows: &[&[f64]], hyper: &NiwHyper) -> Result<f64> {
    if rows.is_empty() {
        return Ok(0.0);
    }
    let m = hyper.mu0.len();
    let mf = m as f64;
    let nf = rows.len() as f64;
    let post = niw_posterior(rows, hyper);
    let ld0 = chol_logdet(&Cholesky::new(hyper.r0.clone()).ok_or(Error::NonSpdCovariance)?);
    let ldn = chol_logdet(&Cholesky::new(post.r0.clone()).ok_or(Error::NonSpdCovariance)?);
    Ok(-nf * mf / 2.0 * std::f64::consts::PI.ln()
        + ln_multigamma(m, post.nu0 / 2.0)
        - ln_multigamma(m, hyper.nu0 / 2.0)
        + hyper.nu0 / 2.0 * ld0
        - post.nu0 / 2.0 * ldn
        + mf / 2.0 * (hyper.kappa0 / post.kappa0).ln())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::LN_2PI;
    use crate::rng::RandomSource;

    fn rect(values: Vec<Vec<f64>>) -> Dataset {
        let n = values.len();
        let m = values[0].len();
        Dataset {
            ids: (0..n).map(|i| i.to_string()).collect(),
            covariates: vec![vec![0]; n],
            category_counts: vec![1],
            times: vec![(0..m).map(|t| t as f64).collect(); n],
            values,
            fixed_effects: vec![Vec::new(); n],
        }
    }

    fn hyper1(mu0: f64, kappa0: f64, nu0: f64, r0: f64) -> NiwHyper {
        NiwHyper {
            mu0: DVector::from_element(1, mu0),
            kappa0,
            nu0,
            r0: DMatrix::from_element(1, 1, r0),
        }
    }

    #[test]
    fn likelihood_examples() {
        let p = MvnClusterParams::new(DVector::zeros(1), DMatrix::identity(1, 1)).unwrap();
        assert!((mvn_log_likelihood(&[0.0], &p, &[], &[]) + 0.5 * LN_2PI).abs() < 1e-12);
        let p2 = MvnClusterParams::new(DVector::zeros(2), DMatrix::identity(2, 2)).unwrap();
        assert!((mvn_log_likelihood(&[1.0, 1.0], &p2, &[], &[]) - (-LN_2PI - 1.0)).abs() < 1e-12);
        let centred = mvn_log_likelihood(&[0.3, -0.2], &p2, &[], &[]);
        let shifted = mvn_log_likelihood(&[2.3, 1.8], &p2, &[4.0], &[0.5]);
        assert!((centred - shifted).abs() < 1e-12);
    }

    #[test]
    fn default_hyper_examples() {
        let h = default_niw_hyper(&rect(vec![vec![0.0], vec![2.0]])).unwrap();
        assert_eq!(h.mu0[0], 1.0);
        assert!((h.r0[(0, 0)] - 1.0).abs() < 1e-12);
        assert_eq!(h.kappa0, 0.01);
        assert_eq!(h.nu0, 1.0);
        assert!(matches!(
            default_niw_hyper(&rect(vec![vec![3.0, 3.0]; 4])),
            Err(Error::SingularScatter)
        ));
    }

    #[test]
    fn default_hyper_tracks_empirical_covariance() {
        let mut rng = RandomSource::new(1, 0).rng();
        let rows: Vec<Vec<f64>> = (0..100)
            .map(|_| vec![rng.sample(StandardNormal), rng.sample(StandardNormal)])
            .collect();
        let h = default_niw_hyper(&rect(rows)).unwrap();
        // R0 = (ν0·Ĉ)⁻¹ with Ĉ ≈ I, so ν0·R0 ≈ I up to sampling error of order 1/√N.
        let scaled = &h.r0 * h.nu0;
        assert!((scaled[(0, 0)] - 1.0).abs() < 0.35);
        assert!((scaled[(1, 1)] - 1.0).abs() < 0.35);
        assert!(scaled[(0, 1)].abs() < 0.35);
    }

    #[test]
    fn posterior_mean_of_mu() {
        let mut rng = RandomSource::new(2, 0).rng();
        let rows: Vec<Vec<f64>> = (0..20).map(|i| vec![1.0 + 0.1 * i as f64, -0.5 + 0.05 * i as f64]).collect();
        let refs: Vec<&[f64]> = rows.iter().map(Vec::as_slice).collect();
        let hyper = NiwHyper {
            mu0: DVector::from_vec(vec![0.0, 0.0]),
            kappa0: 0.01,
            nu0: 2.0,
            r0: DMatrix::identity(2, 2) * 0.5,
        };
        let post = niw_posterior(&refs, &hyper);
        let h = 100_000;
        let mut sum = DVector::zeros(2);
        let mut sq = DVector::zeros(2);
        for _ in 0..h {
            let p = sample_mvn_cluster_params(&refs, &hyper, &mut rng).unwrap();
            sum += &p.mu;
            sq += p.mu.component_mul(&p.mu);
        }
        for k in 0..2 {
            let mean = sum[k] / h as f64;
            let var = sq[k] / h as f64 - mean * mean;
            let se = (var / h as f64).sqrt();
            assert!((mean - post.mu0[k]).abs() < 3.0 * se, "{k}: {mean} vs {}", post.mu0[k]);
        }
    }

    #[test]
    fn strong_prior_dominates() {
        let mut rng = RandomSource::new(3, 0).rng();
        let rows = [vec![5.0], vec![6.0]];
        let refs: Vec<&[f64]> = rows.iter().map(Vec::as_slice).collect();
        let h = hyper1(-2.0, 1e9, 3.0, 1.0);
        for _ in 0..100 {
            let p = sample_mvn_cluster_params(&refs, &h, &mut rng).unwrap();
            assert!((p.mu[0] + 2.0).abs() < 1e-3);
        }
    }

    #[test]
    fn shift_equivariance_of_sigma() {
        let rows: Vec<Vec<f64>> = vec![vec![0.1, 0.5], vec![-0.3, 0.2], vec![0.7, 1.1]];
        let shifted: Vec<Vec<f64>> = rows.iter().map(|r| r.iter().map(|v| v + 7.5).collect()).collect();
        let a: Vec<&[f64]> = rows.iter().map(Vec::as_slice).collect();
        let b: Vec<&[f64]> = shifted.iter().map(Vec::as_slice).collect();
        let h0 = NiwHyper {
            mu0: DVector::from_vec(vec![0.0, 0.2]),
            kappa0: 0.5,
            nu0: 3.0,
            r0: DMatrix::identity(2, 2),
        };
        let mut h1 = h0.clone();
        h1.mu0.add_scalar_mut(7.5);
        let mut r1 = RandomSource::new(4, 0).rng();
        let mut r2 = RandomSource::new(4, 0).rng();
        for _ in 0..50 {
            let s1 = sample_mvn_cluster_params(&a, &h0, &mut r1).unwrap();
            let s2 = sample_mvn_cluster_params(&b, &h1, &mut r2).unwrap();
            assert!((s1.sigma - s2.sigma).amax() < 1e-9);
        }
    }

    #[test]
    fn inverse_wishart_mean() {
        let mut rng = RandomSource::new(5, 0).rng();
        let scale = DMatrix::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 1.0]);
        let df = 8.0;
        let h = 50_000;
        let mut sum = DMatrix::zeros(2, 2);
        for _ in 0..h {
            sum += sample_inverse_wishart(&scale, df, &mut rng).unwrap();
        }
        let mean = sum / h as f64;
        let expected = &scale / (df - 2.0 - 1.0);
        assert!((mean - expected).amax() < 0.02);
    }

    #[test]
    fn minimal_df_prior_draws_stay_usable() {
        let mut rng = RandomSource::new(6, 0).rng();
        let h = NiwHyper { mu0: DVector::zeros(4), kappa0: 1.0, nu0: 4.0, r0: DMatrix::identity(4, 4) * 2.0 };
        for _ in 0..200_000 {
            let p = sample_mvn_cluster_params(&[], &h, &mut rng).unwrap();
            assert!(p.log_norm.is_finite() && p.mu.iter().all(|v| v.is_finite()));
        }
    }

    #[test]
    fn marginal_single_point_matches_quadrature() {
        // y | σ² ~ N(μ0, σ²(1 + 1/κ0)), σ² ~ InvGamma(ν0/2, r0/2); integrate σ² numerically.
        let (mu0, k0, nu0, r0) = (0.5, 0.7, 3.0, 2.0);
        let y = 1.7;
        let h = hyper1(mu0, k0, nu0, r0);
        let closed = mvn_log_marginal_likelihood(&[&[y]], &h).unwrap();
        let (a, b) = (nu0 / 2.0, r0 / 2.0);
        let log_ig = |s2: f64| a * b.ln() - ln_gamma(a) - (a + 1.0) * s2.ln() - b / s2;
        let v = 1.0 + 1.0 / k0;
        let integrand = |u: f64| {
            // substitute σ² = e^u
            let s2 = u.exp();
            let ll = -0.5 * (LN_2PI + (s2 * v).ln()) - (y - mu0).powi(2) / (2.0 * s2 * v);
            (ll + log_ig(s2) + u).exp()
        };
        let (lo, hi, n) = (-15.0, 15.0, 200_000);
        let du = (hi - lo) / n as f64;
        let mut total = 0.0;
        for k in 0..=n {
            let w = if k == 0 || k == n { 0.5 } else { 1.0 };
            total += w * integrand(lo + k as f64 * du);
        }
        let quad = (total * du).ln();
        assert!((closed - quad).abs() < 1e-6, "{closed} vs {quad}");
    }

    #[test]
    fn marginal_chain_rule() {
        let h = NiwHyper {
            mu0: DVector::from_vec(vec![0.0, 1.0]),
            kappa0: 0.3,
            nu0: 4.0,
            r0: DMatrix::from_row_slice(2, 2, &[1.0, 0.2, 0.2, 0.8]),
        };
        let y1 = [0.4, 1.9];
        let y2 = [-0.6, 0.3];
        let joint = mvn_log_marginal_likelihood(&[&y1, &y2], &h).unwrap();
        let first = mvn_log_marginal_likelihood(&[&y1], &h).unwrap();
        // Predictive of y2 given y1 is the marginal of y2 under the updated NIW.
        let post = niw_posterior(&[&y1], &h);
        let second = mvn_log_marginal_likelihood(&[&y2], &post).unwrap();
        assert!((joint - first - second).abs() < 1e-10);
        assert_eq!(mvn_log_marginal_likelihood(&[], &h).unwrap(), 0.0);
    }
}
