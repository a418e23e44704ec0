//! Adaptive random-walk Metropolis updates for GP hyperparameters.

use rand::Rng;
use rand_distr::StandardNormal;

use super::kernel::GpHyper;

/// Target acceptance rate of every adapted coordinate.
pub const TARGET_ACCEPTANCE: f64 = 0.44;
/// Attempts per adaptation batch.
pub const ADAPT_BATCH: usize = 50;
const STEP_RANGE: (f64, f64) = (1e-4, 1e3);

/// Multiplicative Robbins-Monro adjustment with gain `1/√(batch+1)`.
pub fn adapt_step_size(step: f64, accepted: usize, attempts: usize, batch: usize) -> f64 {
    if attempts == 0 {
        return step;
    }
    let rate = accepted as f64 / attempts as f64;
    let gain = 1.0 / ((batch + 1) as f64).sqrt();
    (step * (gain * (rate - TARGET_ACCEPTANCE)).exp()).clamp(STEP_RANGE.0, STEP_RANGE.1)
}

/// Random-walk proposal scale with batch adaptation during burn-in and
/// acceptance bookkeeping afterwards.
#[derive(Debug, Clone, PartialEq)]
pub struct AdaptiveStep {
    pub step: f64,
    pub adapting: bool,
    batch_accepted: usize,
    batch_attempts: usize,
    batches: usize,
    pub accepted: usize,
    pub attempts: usize,
}

impl Default for AdaptiveStep {
    fn default() -> Self {
        Self::new(1.0)
    }
}

impl AdaptiveStep {
    pub fn new(step: f64) -> Self {
        Self {
            step,
            adapting: true,
            batch_accepted: 0,
            batch_attempts: 0,
            batches: 0,
            accepted: 0,
            attempts: 0,
        }
    }

    pub fn record(&mut self, accepted: bool) {
        if self.adapting {
            self.batch_attempts += 1;
            self.batch_accepted += accepted as usize;
            if self.batch_attempts >= ADAPT_BATCH {
                self.step = adapt_step_size(self.step, self.batch_accepted, self.batch_attempts, self.batches);
                self.batches += 1;
                self.batch_attempts = 0;
                self.batch_accepted = 0;
            }
        } else {
            self.attempts += 1;
            self.accepted += accepted as usize;
        }
    }

    /// Freeze the step size; later attempts count toward the reported rate.
    pub fn stop_adapting(&mut self) {
        self.adapting = false;
        self.accepted = 0;
        self.attempts = 0;
    }

    pub fn acceptance_rate(&self) -> Option<f64> {
        (self.attempts > 0).then(|| self.accepted as f64 / self.attempts as f64)
    }
}

/// One Metropolis step on a scalar with Gaussian random-walk proposal.
/// Returns the new value and its log target.
pub fn rw_step<R: Rng + ?Sized>(
    x: f64,
    log_target_x: f64,
    step: &mut AdaptiveStep,
    mut log_target: impl FnMut(f64) -> f64,
    rng: &mut R,
) -> (f64, f64) {
    let eps: f64 = rng.sample(StandardNormal);
    let prop = x + step.step * eps;
    let lp = log_target(prop);
    let u: f64 = rng.random();
    let accept = lp.is_finite() && (lp - log_target_x >= 0.0 || u.ln() < lp - log_target_x);
    step.record(accept);
    if accept {
        (prop, lp)
    } else {
        (x, log_target_x)
    }
}

/// Independent normal priors on `(log a, log l, log σ²)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HyperPrior {
    pub mean: [f64; 3],
    pub sd: [f64; 3],
}

impl Default for HyperPrior {
    fn default() -> Self {
        Self { mean: [0.0; 3], sd: [1.0; 3] }
    }
}

fn normal_logpdf(x: f64, m: f64, s: f64) -> f64 {
    let z = (x - m) / s;
    -0.5 * z * z - s.ln() - 0.5 * crate::linalg::LN_2PI
}

impl HyperPrior {
    /// Log prior density over the free coordinates; in ratio mode `log a` is derived.
    pub fn log_density(&self, h: &GpHyper) -> f64 {
        let x = h.as_array();
        (0..3)
            .filter(|&k| k != 0 || h.ratio_r.is_none())
            .map(|k| normal_logpdf(x[k], self.mean[k], self.sd[k]))
            .sum()
    }

    pub fn sample<R: Rng + ?Sized>(&self, ratio_r: Option<f64>, rng: &mut R) -> GpHyper {
        let mut x = [0.0; 3];
        for k in 0..3 {
            x[k] = self.mean[k] + self.sd[k] * rng.sample::<f64, _>(StandardNormal);
        }
        match ratio_r {
            Some(r) => GpHyper::with_ratio(r, x[1], x[2]),
            None => GpHyper::new(x[0], x[1], x[2]),
        }
    }
}

/// Shared proposal scales for `(log a, log l, log σ²)`.
pub type GpSteps = [AdaptiveStep; 3];

/// Free coordinates of a hyperparameter vector.
pub fn free_coordinates(h: &GpHyper) -> &'static [usize] {
    if h.ratio_r.is_some() {
        &[1, 2]
    } else {
        &[0, 1, 2]
    }
}

pub fn with_coordinate(h: &GpHyper, k: usize, value: f64) -> GpHyper {
    let mut out = *h;
    match k {
        0 => out.log_a = value,
        1 => out.log_l = value,
        _ => out.log_s2 = value,
    }
    out.enforce_ratio();
    out
}

/// Component-wise random-walk MH on the free log-hyperparameters with target
/// `prior × loglik`. `loglik` must return `−∞` for numerically invalid states.
pub fn mh_update_hyper_marginal<R: Rng + ?Sized>(
    hyper: &mut GpHyper,
    prior: &HyperPrior,
    steps: &mut GpSteps,
    mut loglik: impl FnMut(&GpHyper) -> f64,
    rng: &mut R,
) {
    mh_update_coordinates(hyper, prior, steps, free_coordinates(hyper), &mut loglik, rng);
}

/// Same scheme restricted to the listed coordinates.
pub fn mh_update_coordinates<R: Rng + ?Sized>(
    hyper: &mut GpHyper,
    prior: &HyperPrior,
    steps: &mut GpSteps,
    coords: &[usize],
    loglik: &mut impl FnMut(&GpHyper) -> f64,
    rng: &mut R,
) {
    let cur = loglik(hyper);
    mh_update_cached(hyper, (), cur, prior, steps, coords, |h| Some(((), loglik(h))), rng);
}

/// Coordinate-wise MH where each evaluation also builds a state object `T`
/// (e.g. a factorised cluster cache); the object matching the final
/// hyperparameters is returned so callers need not rebuild it.
#[allow(clippy::too_many_arguments)]
pub fn mh_update_cached<T, R: Rng + ?Sized>(
    hyper: &mut GpHyper,
    current: T,
    current_ll: f64,
    prior: &HyperPrior,
    steps: &mut GpSteps,
    coords: &[usize],
    mut build: impl FnMut(&GpHyper) -> Option<(T, f64)>,
    rng: &mut R,
) -> T {
    let mut state = current;
    let mut cur = current_ll + prior.log_density(hyper);
    for &k in coords {
        let eps: f64 = rng.sample(StandardNormal);
        let prop = with_coordinate(hyper, k, hyper.as_array()[k] + steps[k].step * eps);
        let u: f64 = rng.random();
        let accepted = match build(&prop) {
            Some((obj, ll)) if ll.is_finite() => {
                let lp = ll + prior.log_density(&prop);
                if lp - cur >= 0.0 || u.ln() < lp - cur {
                    state = obj;
                    cur = lp;
                    *hyper = prop;
                    true
                } else {
                    false
                }
            }
            _ => false,
        };
        steps[k].record(accepted);
    }
    state
}
