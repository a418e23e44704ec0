use nalgebra::DMatrix;

/// Squared-exponential kernel hyperparameters on the log scale.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GpHyper {
    pub log_a: f64,
    pub log_l: f64,
    pub log_s2: f64,
    /// When set, `a = r·σ²` is enforced and `log_a` is derived.
    pub ratio_r: Option<f64>,
}

impl GpHyper {
    pub fn new(log_a: f64, log_l: f64, log_s2: f64) -> Self {
        Self { log_a, log_l, log_s2, ratio_r: None }
    }

    /// Ratio-constrained hyperparameters; `log_a` is set from `r` and `log_s2`.
    pub fn with_ratio(r: f64, log_l: f64, log_s2: f64) -> Self {
        let mut h = Self { log_a: 0.0, log_l, log_s2, ratio_r: Some(r) };
        h.enforce_ratio();
        h
    }

    pub fn enforce_ratio(&mut self) {
        if let Some(r) = self.ratio_r {
            self.log_a = r.ln() + self.log_s2;
        }
    }

    pub fn a(&self) -> f64 {
        self.log_a.exp()
    }

    pub fn l(&self) -> f64 {
        self.log_l.exp()
    }

    pub fn s2(&self) -> f64 {
        self.log_s2.exp()
    }

    pub fn as_array(&self) -> [f64; 3] {
        [self.log_a, self.log_l, self.log_s2]
    }
}

/// `a·exp(−(t−s)²/(2l))`.
pub fn sq_exp_kernel(t: f64, s: f64, hyper: &GpHyper) -> f64 {
    let d = t - s;
    hyper.a() * (-d * d / (2.0 * hyper.l())).exp()
}

/// Kernel matrix between two time vectors.
pub fn cross_kernel(t: &[f64], s: &[f64], hyper: &GpHyper) -> DMatrix<f64> {
    let a = hyper.a();
    let inv2l = 1.0 / (2.0 * hyper.l());
    DMatrix::from_fn(t.len(), s.len(), |i, j| {
        let d = t[i] - s[j];
        a * (-d * d * inv2l).exp()
    })
}

/// `K(t, t) + σ²I`.
pub fn noisy_kernel(t: &[f64], hyper: &GpHyper) -> DMatrix<f64> {
    let mut k = cross_kernel(t, t, hyper);
    let s2 = hyper.s2();
    for i in 0..t.len() {
        k[(i, i)] += s2;
    }
    k
}

/// Block kernel matrix of the stacked member time vectors (no noise term).
pub fn build_block_covariance(times: &[&[f64]], hyper: &GpHyper) -> DMatrix<f64> {
    let stacked: Vec<f64> = times.iter().flat_map(|t| t.iter().copied()).collect();
    cross_kernel(&stacked, &stacked, hyper)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kernel_examples() {
        let h = GpHyper::new(0.7f64.ln(), 2f64.ln(), 0.0);
        assert!((sq_exp_kernel(1.3, 1.3, &h) - 0.7).abs() < 1e-15);
        assert!(sq_exp_kernel(0.0, 1e6, &h) == 0.0);
        let h1 = GpHyper::new(0.0, 2f64.ln(), 0.0);
        assert!((sq_exp_kernel(0.0, 2f64.sqrt(), &h1) - (-0.5f64).exp()).abs() < 1e-12);
    }

    #[test]
    fn block_examples() {
        let h = GpHyper::new(0.3, 0.1, -1.0);
        let k = build_block_covariance(&[&[2.0]], &h);
        assert!((k[(0, 0)] - h.a()).abs() < 1e-15);
        let k = build_block_covariance(&[&[2.0], &[2.0]], &h);
        assert!(k.iter().all(|&v| (v - h.a()).abs() < 1e-15));
        let t1 = [0.0, 0.4, 1.7];
        let t2 = [0.9, 3.0];
        let k = build_block_covariance(&[&t1, &t2], &h);
        let all: Vec<f64> = t1.iter().chain(&t2).copied().collect();
        for i in 0..5 {
            for j in 0..5 {
                assert_eq!(k[(i, j)], sq_exp_kernel(all[i], all[j], &h));
            }
        }
    }

    #[test]
    fn ratio_is_enforced() {
        let h = GpHyper::with_ratio(4.0, 0.2, -0.3);
        assert!((h.log_a - 4f64.ln() + 0.3).abs() < 1e-15);
    }
}
