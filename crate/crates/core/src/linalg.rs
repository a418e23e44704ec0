//! Small dense linear-algebra helpers on top of nalgebra.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::error::{Error, Result};

pub const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// Relative jitter schedule for SPD solves: start, growth factor, ceiling.
const JITTER_START: f64 = 1e-8;
const JITTER_GROWTH: f64 = 10.0;
const JITTER_MAX: f64 = 1e-4;

/// Cholesky factorisation with escalating diagonal jitter.
///
/// Jitter is relative to the mean diagonal, starting at 1e-8 and growing
/// ×10 up to 1e-4. Returns the factor and the absolute jitter that was added.
pub fn robust_cholesky(m: &DMatrix<f64>) -> Result<(Cholesky<f64, Dyn>, f64)> {
    if m.nrows() == 0 {
        return Ok((Cholesky::new(DMatrix::zeros(0, 0)).expect("empty"), 0.0));
    }
    if let Some(ch) = Cholesky::new(m.clone()) {
        return Ok((ch, 0.0));
    }
    let n = m.nrows();
    let mean_diag = (m.trace() / n as f64).abs().max(f64::MIN_POSITIVE);
    let mut rel = JITTER_START;
    while rel <= JITTER_MAX * (1.0 + 1e-9) {
        let jitter = rel * mean_diag;
        let mut mj = m.clone();
        for i in 0..n {
            mj[(i, i)] += jitter;
        }
        if let Some(ch) = Cholesky::new(mj) {
            log::debug!("cholesky needed jitter {jitter:e}");
            return Ok((ch, jitter));
        }
        rel *= JITTER_GROWTH;
    }
    Err(Error::NonSpdCovariance)
}

pub fn chol_logdet(ch: &Cholesky<f64, Dyn>) -> f64 {
    let l = ch.l_dirty();
    (0..l.nrows()).map(|i| l[(i, i)].ln()).sum::<f64>() * 2.0
}

/// Zero-mean multivariate normal log-density given a Cholesky factor of the covariance.
pub fn mvn_logpdf_chol(resid: &DVector<f64>, ch: &Cholesky<f64, Dyn>) -> f64 {
    let n = resid.len();
    if n == 0 {
        return 0.0;
    }
    let z = ch
        .l_dirty()
        .solve_lower_triangular(resid)
        .expect("cholesky factor has a positive diagonal");
    -0.5 * (n as f64 * LN_2PI + chol_logdet(ch) + z.norm_squared())
}

/// Dense zero-mean MVN log-density with jittered Cholesky.
pub fn mvn_logpdf(resid: &DVector<f64>, cov: &DMatrix<f64>) -> Result<f64> {
    let (ch, _) = robust_cholesky(cov)?;
    Ok(mvn_logpdf_chol(resid, &ch))
}

/// Symmetrise in place: `m = (m + mᵀ)/2`.
pub fn symmetrize(m: &mut DMatrix<f64>) {
    let n = m.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            let v = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
}

/// Maximum absolute entry difference relative to the largest entry of `reference`.
pub fn max_rel_diff(a: &DMatrix<f64>, reference: &DMatrix<f64>) -> f64 {
    let scale = reference.amax().max(f64::MIN_POSITIVE);
    (a - reference).amax() / scale
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn standard_normal_density() {
        let cov = DMatrix::identity(2, 2);
        let r = DVector::from_vec(vec![1.0, 1.0]);
        let lp = mvn_logpdf(&r, &cov).unwrap();
        assert!((lp - (-LN_2PI - 1.0)).abs() < 1e-12);
    }

    #[test]
    fn jitter_rescues_semidefinite() {
        let m = DMatrix::from_element(3, 3, 1.0);
        let (_, jitter) = robust_cholesky(&m).unwrap();
        assert!(jitter > 0.0 && jitter <= 1e-4);
    }

    #[test]
    fn indefinite_fails() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        assert!(matches!(robust_cholesky(&m), Err(Error::NonSpdCovariance)));
    }
}
