//! Truncated stick-breaking weights and the concentration parameter.

use rand::Rng;
use rand_distr::{Beta, Distribution};

use crate::gp::mh::{rw_step, AdaptiveStep};

/// `π_c = u_c ∏_{r<c}(1−u_r)` with log weights. The caller sets the last stick
/// to 1 so the final component absorbs the residual mass.
pub fn stick_breaking_weights(u: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let mut log_pi = Vec::with_capacity(u.len());
    let mut rest = 0.0;
    for &uc in u {
        log_pi.push(uc.ln() + rest);
        rest += (-uc).ln_1p();
    }
    let pi = log_pi.iter().map(|l| l.exp()).collect();
    (pi, log_pi)
}

/// Cluster sizes of an allocation over `n_clusters` components.
pub fn cluster_sizes(z: &[usize], n_clusters: usize) -> Vec<usize> {
    let mut n = vec![0; n_clusters];
    for &c in z {
        n[c] += 1;
    }
    n
}

/// `u_c ~ Beta(1+n_c, α+Σ_{r>c} n_r)` for every component but the last, whose stick is 1.
pub fn update_sticks<R: Rng + ?Sized>(sizes: &[usize], alpha: f64, rng: &mut R) -> Vec<f64> {
    let c_max = sizes.len();
    let mut tail: usize = sizes.iter().sum();
    let mut u = Vec::with_capacity(c_max);
    for (c, &n) in sizes.iter().enumerate() {
        tail -= n;
        if c + 1 == c_max {
            u.push(1.0);
        } else {
            let b = Beta::new(1.0 + n as f64, alpha + tail as f64).expect("positive shapes");
            // keep 1−u representable so log(1−u) stays finite
            u.push(b.sample(rng).min(1.0 - f64::EPSILON));
        }
    }
    u
}

/// Log target of `log α`: Gamma(shape, rate) prior × ∏ Beta(u_c; 1, α) × Jacobian.
pub fn alpha_log_target(log_alpha: f64, sticks: &[f64], shape: f64, rate: f64) -> f64 {
    let a = log_alpha.exp();
    let k = sticks.len() as f64;
    let s: f64 = sticks.iter().map(|&u| (-u).ln_1p()).sum();
    shape * log_alpha - rate * a + k * log_alpha + (a - 1.0) * s
}

/// Random-walk MH on `log α`. `sticks` are the free sticks (all but the last).
pub fn update_alpha<R: Rng + ?Sized>(
    alpha: f64,
    sticks: &[f64],
    prior: (f64, f64),
    step: &mut AdaptiveStep,
    rng: &mut R,
) -> f64 {
    let x = alpha.ln();
    let lt = alpha_log_target(x, sticks, prior.0, prior.1);
    let (nx, _) = rw_step(x, lt, step, |v| alpha_log_target(v, sticks, prior.0, prior.1), rng);
    if nx == x {
        alpha
    } else {
        nx.exp()
    }
}
