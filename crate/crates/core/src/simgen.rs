//! Synthetic datasets with known cluster structure.

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::covmodel::sample_dirichlet;
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::gp::{cross_kernel, GpHyper};
use crate::linalg::robust_cholesky;
use crate::rng::{ChainRng, RandomSource};

/// Default covariate separability of the first study.
pub const DEFAULT_V: f64 = 0.4;
/// Visit times of the irregular-sampling study.
pub const SIM4_VISITS: [f64; 7] = [0.0, 2.0, 4.0, 6.0, 8.0, 10.0, 12.0];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Study {
    S1,
    S2,
    S3,
    S4,
}

impl std::str::FromStr for Study {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "s1" | "1" => Ok(Self::S1),
            "s2" | "2" => Ok(Self::S2),
            "s3" | "3" => Ok(Self::S3),
            "s4" | "4" => Ok(Self::S4),
            other => Err(Error::Parse(format!("unknown study `{other}`"))),
        }
    }
}

/// Outcome generator of the third study.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum GeneratorKind {
    #[default]
    Mvn,
    Gp,
}

impl std::str::FromStr for GeneratorKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "mvn" => Ok(Self::Mvn),
            "gp" => Ok(Self::Gp),
            other => Err(Error::Parse(format!("unknown generator kind `{other}`"))),
        }
    }
}

/// Generated dataset with 1-based ground-truth labels.
#[derive(Debug, Clone, PartialEq)]
pub struct SimData {
    pub dataset: Dataset,
    pub truth: Vec<usize>,
    /// Competing covariate structure of the second study.
    pub alternative: Option<Vec<usize>>,
}

fn ids(n: usize) -> Vec<String> {
    let width = n.to_string().len();
    (1..=n).map(|i| format!("id{i:0width$}")).collect()
}

fn blocks(sizes: &[usize]) -> Vec<usize> {
    sizes.iter().enumerate().flat_map(|(c, &n)| std::iter::repeat_n(c + 1, n)).collect()
}

fn categorical<R: Rng + ?Sized>(p: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.random::<f64>() * p.iter().sum::<f64>();
    let mut acc = 0.0;
    for (e, &w) in p.iter().enumerate() {
        acc += w;
        if u < acc {
            return e;
        }
    }
    p.len() - 1
}

/// `vφ⁰ + (1−v)/R` with `φ⁰ ~ Dir(0.01·1_R)`.
fn mixed_profile<R: Rng + ?Sized>(v: f64, n_categories: usize, rng: &mut R) -> Vec<f64> {
    let phi0 = sample_dirichlet(&vec![0.01; n_categories], rng);
    phi0.iter().map(|p| v * p + (1.0 - v) / n_categories as f64).collect()
}

fn mvn_draw<R: Rng + ?Sized>(mean: &[f64], chol_l: &DMatrix<f64>, rng: &mut R) -> Vec<f64> {
    let e = DVector::from_fn(mean.len(), |_, _| rng.sample::<f64, _>(StandardNormal));
    let x = chol_l * e;
    mean.iter().zip(x.iter()).map(|(m, v)| m + v).collect()
}

fn empty_dataset(n: usize, n_covariates: usize, n_categories: usize) -> Dataset {
    Dataset {
        ids: ids(n),
        covariates: vec![Vec::with_capacity(n_covariates); n],
        category_counts: vec![n_categories; n_covariates],
        times: vec![Vec::new(); n],
        values: vec![Vec::new(); n],
        fixed_effects: vec![Vec::new(); n],
    }
}

/// Outcome `MVN(1_M, 0.5 I)` for label 1 and `MVN(4·1_M, 0.5 I)` for label 2 at times `1..M`.
fn two_level_outcome<R: Rng + ?Sized>(ds: &mut Dataset, labels: &[usize], m: usize, rng: &mut R) {
    let times: Vec<f64> = (1..=m).map(|j| j as f64).collect();
    let sd = 0.5f64.sqrt();
    for (i, &c) in labels.iter().enumerate() {
        let mean = if c == 1 { 1.0 } else { 4.0 };
        ds.times[i] = times.clone();
        ds.values[i] = (0..m).map(|_| mean + sd * rng.sample::<f64, _>(StandardNormal)).collect();
    }
}

fn source(seed: u64) -> ChainRng {
    RandomSource::new(seed, 0).rng()
}

/// Two clusters of 50, ten 3-category covariates with separability `v`, and
/// `m` MVN outcome times (none when `m = 0`).
pub fn gen_sim1(m: usize, v: f64, seed: u64) -> Result<SimData> {
    if !(0.0..=1.0).contains(&v) {
        return Err(Error::InvalidConfig(format!("separability v = {v} outside [0, 1]")));
    }
    let mut rng = source(seed);
    let (q, e) = (10, 3);
    let truth = blocks(&[50, 50]);
    let profiles: Vec<Vec<Vec<f64>>> = (0..2).map(|_| (0..q).map(|_| mixed_profile(v, e, &mut rng)).collect()).collect();
    let mut ds = empty_dataset(truth.len(), q, e);
    for (i, &c) in truth.iter().enumerate() {
        ds.covariates[i] = profiles[c - 1].iter().map(|p| categorical(p, &mut rng)).collect();
    }
    two_level_outcome(&mut ds, &truth, m, &mut rng);
    Ok(SimData { dataset: ds, truth, alternative: None })
}

/// Four covariates: the first two follow an independent alternative partition,
/// the last two and the outcome follow the truth.
pub fn gen_sim2(m: usize, seed: u64) -> Result<SimData> {
    let mut rng = source(seed);
    let (q, e) = (4, 3);
    let truth = blocks(&[50, 50]);
    let mut alternative = truth.clone();
    alternative.shuffle(&mut rng);
    let profiles: Vec<Vec<Vec<f64>>> = (0..4).map(|_| (0..2).map(|_| mixed_profile(1.0, e, &mut rng)).collect()).collect();
    let mut ds = empty_dataset(truth.len(), q, e);
    for i in 0..truth.len() {
        ds.covariates[i] = (0..q)
            .map(|k| {
                let (set, label) = if k < 2 { (0, alternative[i]) } else { (2, truth[i]) };
                categorical(&profiles[set + label - 1][k % 2], &mut rng)
            })
            .collect();
    }
    two_level_outcome(&mut ds, &truth, m, &mut rng);
    Ok(SimData {
        dataset: ds,
        truth,
        alternative: Some(alternative),
    })
}

/// Two clusters of 30 with structureless covariates; means `10` and `10 + ξt`
/// at `m` equally spaced times over `[0, 10]`.
pub fn gen_sim3(m: usize, xi: f64, kind: GeneratorKind, seed: u64) -> Result<SimData> {
    if !(-1.0..=0.0).contains(&xi) {
        return Err(Error::InvalidConfig(format!("gradient {xi} outside [-1, 0]")));
    }
    if m < 2 {
        return Err(Error::InvalidConfig("at least two time points are needed".into()));
    }
    let mut rng = source(seed);
    let truth = blocks(&[30, 30]);
    let times: Vec<f64> = (0..m).map(|j| 10.0 * j as f64 / (m - 1) as f64).collect();
    let means = [
        vec![10.0; m],
        times.iter().map(|t| 10.0 + xi * t).collect::<Vec<f64>>(),
    ];
    let mut ds = empty_dataset(truth.len(), 2, 3);
    for i in 0..truth.len() {
        ds.covariates[i] = (0..2).map(|_| rng.random_range(0..3)).collect();
        ds.times[i] = times.clone();
    }
    match kind {
        GeneratorKind::Mvn => {
            let cov = DMatrix::from_fn(m, m, |a, b| match a.abs_diff(b) {
                0 => 1.0,
                1 => 0.5,
                _ => 0.0,
            });
            let (ch, _) = robust_cholesky(&cov)?;
            let l = ch.l();
            for (i, &c) in truth.iter().enumerate() {
                ds.values[i] = mvn_draw(&means[c - 1], &l, &mut rng);
            }
        }
        GeneratorKind::Gp => {
            let h = GpHyper::new(-0.5, -0.1, -0.5);
            let (ch, _) = robust_cholesky(&cross_kernel(&times, &times, &h))?;
            let l = ch.l();
            let g: Vec<Vec<f64>> = means.iter().map(|mu| mvn_draw(mu, &l, &mut rng)).collect();
            let sd = h.s2().sqrt();
            for (i, &c) in truth.iter().enumerate() {
                ds.values[i] = g[c - 1].iter().map(|v| v + sd * rng.sample::<f64, _>(StandardNormal)).collect();
            }
        }
    }
    Ok(SimData { dataset: ds, truth, alternative: None })
}

/// Per-cluster generating parameters of the irregular-sampling study.
#[derive(Debug, Clone, PartialEq)]
pub struct Sim4Cluster {
    pub size: usize,
    /// Mean at the visit times.
    pub m: [f64; 7],
    /// `log (a, l, σ²)`
    pub theta: [f64; 3],
    /// `phi[q][e]`
    pub phi: [[f64; 3]; 5],
}

const PHI: [[[f64; 3]; 5]; 5] = [
    [[0.8, 0.1, 0.1], [0.8, 0.1, 0.1], [0.8, 0.1, 0.1], [0.8, 0.1, 0.1], [0.8, 0.1, 0.1]],
    [[0.1, 0.8, 0.1], [0.1, 0.8, 0.1], [0.1, 0.8, 0.1], [0.1, 0.8, 0.1], [0.1, 0.1, 0.8]],
    [[0.4, 0.5, 0.1], [0.5, 0.4, 0.1], [0.1, 0.4, 0.5], [0.5, 0.1, 0.4], [0.5, 0.3, 0.2]],
    [[0.2, 0.7, 0.1], [0.7, 0.2, 0.1], [0.3, 0.6, 0.1], [0.2, 0.1, 0.7], [0.6, 0.3, 0.1]],
    [[0.6, 0.3, 0.1], [0.2, 0.1, 0.7], [0.3, 0.6, 0.1], [0.7, 0.2, 0.1], [0.2, 0.7, 0.1]],
];

const THETA: [[f64; 3]; 5] = [
    [0.5, 0.1, -0.7],
    [0.6, 0.2, -0.3],
    [0.1, 0.3, -0.7],
    [0.3, 0.4, -0.5],
    [0.1, 0.5, -0.7],
];

/// Generating parameters for the 200- or 500-individual preset.
pub fn sim4_preset(n_individuals: usize) -> Result<Vec<Sim4Cluster>> {
    let (sizes, means): ([usize; 5], [[f64; 7]; 5]) = match n_individuals {
        200 => (
            [10, 30, 50, 70, 40],
            [
                [9.0, 8.5, 8.0, 6.0, 5.0, 4.0, 3.0],
                [9.0, 7.0, 6.0, 4.0, 2.0, 1.0, 0.0],
                [7.0, 5.0, 8.0, 9.0, 10.0, 11.0, 9.0],
                [8.0, 5.0, 8.0, 9.0, 10.0, 11.0, 9.0],
                [7.0, 7.5, 6.0, 5.0, 5.0, 3.0, 2.0],
            ],
        ),
        500 => (
            [50, 75, 125, 150, 100],
            [
                [9.0, 8.5, 8.0, 6.0, 5.0, 4.0, 3.0],
                [6.0, 7.0, 6.0, 4.0, 2.0, 4.0, 5.0],
                [10.0, 11.0, 10.0, 9.0, 10.0, 8.0, 7.0],
                [8.0, 5.0, 8.0, 9.0, 10.0, 11.0, 9.0],
                [7.0, 7.5, 6.0, 5.0, 5.0, 3.0, 0.0],
            ],
        ),
        other => {
            return Err(Error::InvalidConfig(format!(
                "no preset for {other} individuals (200 or 500)"
            )))
        }
    };
    Ok((0..5)
        .map(|c| Sim4Cluster {
            size: sizes[c],
            m: means[c],
            theta: THETA[c],
            phi: PHI[c],
        })
        .collect())
}

/// Piecewise-linear interpolation of visit means, constant beyond the last visit.
pub fn sim4_mean(m: &[f64; 7], t: f64) -> f64 {
    if t <= SIM4_VISITS[0] {
        return m[0];
    }
    for j in 1..7 {
        if t <= SIM4_VISITS[j] {
            let w = (t - SIM4_VISITS[j - 1]) / (SIM4_VISITS[j] - SIM4_VISITS[j - 1]);
            return m[j - 1] + w * (m[j] - m[j - 1]);
        }
    }
    m[6]
}

/// Five clusters observed at jittered visits `t_ij ~ U(v_j, v_j + 0.9)`; one
/// latent function per cluster drawn jointly at all member times.
pub fn gen_sim4(n_individuals: usize, seed: u64) -> Result<SimData> {
    let preset = sim4_preset(n_individuals)?;
    let mut rng = source(seed);
    let truth = blocks(&preset.iter().map(|c| c.size).collect::<Vec<_>>());
    let n = truth.len();
    let mut ds = empty_dataset(n, 5, 3);
    for (i, &c) in truth.iter().enumerate() {
        let cl = &preset[c - 1];
        ds.covariates[i] = cl.phi.iter().map(|p| categorical(p, &mut rng)).collect();
        ds.times[i] = SIM4_VISITS.iter().map(|v| v + 0.9 * rng.random::<f64>()).collect();
    }
    for (c, cl) in preset.iter().enumerate() {
        let members: Vec<usize> = (0..n).filter(|&i| truth[i] == c + 1).collect();
        let t: Vec<f64> = members.iter().flat_map(|&i| ds.times[i].iter().copied()).collect();
        let h = GpHyper::new(cl.theta[0], cl.theta[1], cl.theta[2]);
        let (ch, _) = robust_cholesky(&cross_kernel(&t, &t, &h))?;
        let mean: Vec<f64> = t.iter().map(|&s| sim4_mean(&cl.m, s)).collect();
        let g = mvn_draw(&mean, &ch.l(), &mut rng);
        let sd = h.s2().sqrt();
        let mut k = 0;
        for &i in &members {
            let len = ds.times[i].len();
            ds.values[i] = g[k..k + len].iter().map(|v| v + sd * rng.sample::<f64, _>(StandardNormal)).collect();
            k += len;
        }
    }
    Ok(SimData { dataset: ds, truth, alternative: None })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{validate_dataset, ResponseKind};
    use crate::postproc::adjusted_rand_index;

    #[test]
    fn sim1_limits_and_validation() {
        let s = gen_sim1(0, 0.4, 1).unwrap();
        assert!(!s.dataset.has_outcome());
        validate_dataset(s.dataset.clone(), ResponseKind::Gp).unwrap();
        let s = gen_sim1(3, 0.4, 1).unwrap();
        validate_dataset(s.dataset.clone(), ResponseKind::Mvn).unwrap();
        assert_eq!(s.truth, blocks(&[50, 50]));
        assert_eq!(gen_sim1(3, 0.4, 1).unwrap(), s);
        assert_ne!(gen_sim1(3, 0.4, 2).unwrap(), s);
    }

    #[test]
    fn sim1_v_zero_uniform_profiles() {
        let mut rng = source(4);
        for _ in 0..20 {
            let p = mixed_profile(0.0, 3, &mut rng);
            assert!(p.iter().all(|&x| (x - 1.0 / 3.0).abs() < 1e-15));
        }
    }

    #[test]
    fn sim1_cluster_two_mean() {
        let mut total = [0.0; 2];
        let reps = 10_000;
        for r in 0..reps {
            let s = gen_sim1(2, 0.4, r).unwrap();
            for i in 50..100 {
                total[0] += s.dataset.values[i][0];
                total[1] += s.dataset.values[i][1];
            }
        }
        for t in total {
            // standard error sqrt(0.5 / 5e5) ≈ 0.001
            assert!((t / (reps as f64 * 50.0) - 4.0).abs() < 0.02);
        }
    }

    #[test]
    fn sim2_structures_independent() {
        let mut mean_ari = 0.0;
        for r in 0..200 {
            let s = gen_sim2(4, r).unwrap();
            let alt = s.alternative.unwrap();
            assert_eq!(alt.iter().filter(|&&l| l == 1).count(), 50);
            mean_ari += adjusted_rand_index(&s.truth, &alt).unwrap() / 200.0;
            let ds = &s.dataset;
            let m1: f64 = (0..50).map(|i| ds.values[i].iter().sum::<f64>()).sum::<f64>() / 200.0;
            let m2: f64 = (50..100).map(|i| ds.values[i].iter().sum::<f64>()).sum::<f64>() / 200.0;
            assert!((m2 - m1 - 3.0).abs() < 0.6);
        }
        assert!(mean_ari.abs() < 0.01);
    }

    #[test]
    fn sim3_shapes() {
        let s = gen_sim3(3, -1.0, GeneratorKind::Mvn, 2).unwrap();
        assert_eq!(s.dataset.times[0], vec![0.0, 5.0, 10.0]);
        validate_dataset(s.dataset.clone(), ResponseKind::Mvn).unwrap();
        let s = gen_sim3(5, -0.5, GeneratorKind::Gp, 2).unwrap();
        validate_dataset(s.dataset, ResponseKind::Gp).unwrap();
        assert!(gen_sim3(3, 0.5, GeneratorKind::Mvn, 2).is_err());
    }

    #[test]
    fn sim3_mvn_moments() {
        let reps = 300;
        let (mut last, mut cross01, mut cross02) = (0.0, 0.0, 0.0);
        for r in 0..reps {
            let s = gen_sim3(3, -1.0, GeneratorKind::Mvn, r).unwrap();
            for i in 30..60 {
                let y = &s.dataset.values[i];
                last += y[2];
                cross01 += (y[0] - 10.0) * (y[1] - 5.0);
                cross02 += (y[0] - 10.0) * (y[2] - 0.0);
            }
        }
        let n = (reps * 30) as f64;
        assert!((last / n).abs() < 0.05);
        assert!((cross01 / n - 0.5).abs() < 0.05);
        assert!((cross02 / n).abs() < 0.05);
    }

    #[test]
    fn sim4_sizes_and_times() {
        let s = gen_sim4(200, 7).unwrap();
        let sizes: Vec<usize> = (1..=5).map(|c| s.truth.iter().filter(|&&l| l == c).count()).collect();
        assert_eq!(sizes, vec![10, 30, 50, 70, 40]);
        for t in &s.dataset.times {
            for (j, &tj) in t.iter().enumerate() {
                assert!(tj >= SIM4_VISITS[j] && tj <= SIM4_VISITS[j] + 0.9);
            }
        }
        validate_dataset(s.dataset.clone(), ResponseKind::Gp).unwrap();
        assert_eq!(gen_sim4(200, 7).unwrap(), s);
        let s = gen_sim4(500, 7).unwrap();
        assert_eq!(s.truth.len(), 500);
        assert!(gen_sim4(300, 7).is_err());
    }

    #[test]
    fn sim4_cluster_one_first_visit_mean() {
        let reps = 100;
        let mut total = 0.0;
        let mut count = 0.0;
        for r in 0..reps {
            let s = gen_sim4(200, 1000 + r).unwrap();
            for i in 0..10 {
                total += s.dataset.values[i][0];
                count += 1.0;
            }
        }
        // cluster draws share one latent function per replicate: sd of the mean ≈ sqrt(e^0.5/100)
        assert!((total / count - 9.0).abs() < 0.45);
    }

    #[test]
    fn sim4_mean_interpolates() {
        let m = [9.0, 8.5, 8.0, 6.0, 5.0, 4.0, 3.0];
        assert_eq!(sim4_mean(&m, 0.0), 9.0);
        assert_eq!(sim4_mean(&m, 1.0), 8.75);
        assert_eq!(sim4_mean(&m, 12.5), 3.0);
    }
}
