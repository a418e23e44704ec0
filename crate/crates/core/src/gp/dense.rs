//! Exact dense GP likelihoods and posterior predictions.

use nalgebra::{DMatrix, DVector};

use super::kernel::{cross_kernel, noisy_kernel, GpHyper};
use crate::error::Result;
use crate::linalg::{mvn_logpdf, robust_cholesky};

fn stack(parts: &[&[f64]]) -> Vec<f64> {
    parts.iter().flat_map(|p| p.iter().copied()).collect()
}

/// Zero-mean MVN log-density of the stacked corrected outcomes under `K + σ²I`.
pub fn gp_log_marginal_likelihood(times: &[&[f64]], values: &[&[f64]], hyper: &GpHyper) -> Result<f64> {
    let t = stack(times);
    if t.is_empty() {
        return Ok(0.0);
    }
    let y = DVector::from_vec(stack(values));
    mvn_logpdf(&y, &noisy_kernel(&t, hyper))
}

/// `log p(y_i | y_rest)` as the difference of two dense joint marginals.
pub fn gp_conditional_log_likelihood_dense(
    t_i: &[f64],
    y_i: &[f64],
    rest_times: &[&[f64]],
    rest_values: &[&[f64]],
    hyper: &GpHyper,
) -> Result<f64> {
    let mut times = rest_times.to_vec();
    times.push(t_i);
    let mut values = rest_values.to_vec();
    values.push(y_i);
    Ok(gp_log_marginal_likelihood(&times, &values, hyper)?
        - gp_log_marginal_likelihood(rest_times, rest_values, hyper)?)
}

/// Posterior mean and covariance of `g(t*)` given corrected observations `(t, y')`.
pub fn gp_posterior_mean_cov(
    t_star: &[f64],
    t: &[f64],
    y: &[f64],
    hyper: &GpHyper,
) -> Result<(DVector<f64>, DMatrix<f64>)> {
    let kss = cross_kernel(t_star, t_star, hyper);
    if t.is_empty() {
        return Ok((DVector::zeros(t_star.len()), kss));
    }
    let (ch, _) = robust_cholesky(&noisy_kernel(t, hyper))?;
    let ks = cross_kernel(t_star, t, hyper);
    let alpha = ch.solve(&DVector::from_column_slice(y));
    let mean = &ks * alpha;
    let v = ch.l_dirty().solve_lower_triangular(&ks.transpose()).expect("positive diagonal");
    let mut cov = kss - v.transpose() * v;
    crate::linalg::symmetrize(&mut cov);
    Ok((mean, cov))
}
