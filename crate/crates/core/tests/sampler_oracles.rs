use nalgebra::{DMatrix, DVector};
use premi_core::diagnostics::batch_means_mcse;
use premi_core::gp::cross_kernel;
use premi_core::sampler::{Chain, ResponseState};
use premi_core::*;

fn logpdf(y: &[f64], mean: &DVector<f64>, cov: &DMatrix<f64>) -> f64 {
    let r = DVector::from_column_slice(y) - mean;
    let ch = cov.clone().cholesky().unwrap();
    let z = ch.l().solve_lower_triangular(&r).unwrap();
    let logdet: f64 = ch.l().diagonal().iter().map(|v| 2.0 * v.ln()).sum();
    -0.5 * (y.len() as f64 * (2.0 * std::f64::consts::PI).ln() + logdet + z.norm_squared())
}

fn gp_marginal(times: &[f64], values: &[f64], h: &GpHyper) -> f64 {
    if times.is_empty() {
        return 0.0;
    }
    let mut k = cross_kernel(times, times, h);
    for j in 0..times.len() {
        k[(j, j)] += h.s2();
    }
    logpdf(values, &DVector::zeros(times.len()), &k)
}

fn toy(times: Vec<Vec<f64>>) -> Dataset {
    let values = times
        .iter()
        .enumerate()
        .map(|(i, t)| t.iter().map(|x| (x + i as f64).sin()).collect())
        .collect();
    Dataset {
        ids: (0..times.len()).map(|i| format!("p{i}")).collect(),
        covariates: (0..times.len()).map(|i| vec![i % 2, i % 3]).collect(),
        category_counts: vec![2, 3],
        times,
        values,
        fixed_effects: Vec::new(),
    }
}

fn normalise(lw: &[f64]) -> Vec<f64> {
    let m = lw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let s: f64 = lw.iter().map(|v| (v - m).exp()).sum();
    lw.iter().map(|v| (v - m).exp() / s).collect()
}

fn covariate_ll(chain: &Chain, x: &[usize], c: usize) -> f64 {
    x.iter().enumerate().map(|(q, &e)| chain.state.cov.phi[c][q][e].ln()).sum()
}

fn assert_close(got: &[f64], want: &[f64]) {
    for (g, w) in normalise(got).iter().zip(normalise(want)) {
        assert!((g - w).abs() < 1e-10, "{got:?} vs {want:?}");
    }
}

#[test]
fn mvn_allocation_weights_match_enumeration() {
    let data = validate_dataset(toy(vec![vec![0.0, 1.0]; 4]), ResponseKind::Mvn).unwrap();
    let cfg = ChainConfig { c_init: 3, c_max: 6, ..Default::default() };
    let mut chain = Chain::new(&cfg, &data, RandomSource::new(4, 0).rng()).unwrap();
    for _ in 0..5 {
        chain.sweep().unwrap();
    }
    for i in 0..4 {
        let got = chain.allocation_log_weights(i).unwrap();
        let ResponseState::Mvn { params, .. } = &chain.state.response else { panic!() };
        let want: Vec<f64> = (0..cfg.c_max)
            .map(|c| {
                chain.state.log_pi[c]
                    + covariate_ll(&chain, &data.covariates[i], c)
                    + logpdf(&data.values[i], &params[c].mu, &params[c].sigma)
            })
            .collect();
        assert_close(&got, &want);
    }
}

#[test]
fn gp_allocation_weights_match_enumeration() {
    let times = vec![vec![0.0, 1.5], vec![0.5], vec![0.2, 0.9, 2.0], vec![1.0, 3.0]];
    let data = validate_dataset(toy(times), ResponseKind::Gp).unwrap();
    let cfg = ChainConfig {
        c_init: 2,
        c_max: 5,
        response_kind: ResponseKind::Gp,
        gp_algorithm: GpAlgorithm::Marginal,
        ..Default::default()
    };
    let mut chain = Chain::new(&cfg, &data, RandomSource::new(9, 0).rng()).unwrap();
    for _ in 0..5 {
        chain.sweep().unwrap();
    }
    for i in 0..4 {
        let got = chain.allocation_log_weights(i).unwrap();
        let ResponseState::Gp { clusters } = &chain.state.response else { panic!() };
        let want: Vec<f64> = (0..cfg.c_max)
            .map(|c| {
                let h = clusters[c].hyper();
                let others: Vec<usize> = (0..4).filter(|&j| j != i && chain.state.z[j] == c).collect();
                let stack = |ids: &[usize]| -> (Vec<f64>, Vec<f64>) {
                    (
                        ids.iter().flat_map(|&j| data.times[j].clone()).collect(),
                        ids.iter().flat_map(|&j| data.values[j].clone()).collect(),
                    )
                };
                let (t0, y0) = stack(&others);
                let mut with = others.clone();
                with.push(i);
                let (t1, y1) = stack(&with);
                chain.state.log_pi[c]
                    + covariate_ll(&chain, &data.covariates[i], c)
                    + gp_marginal(&t1, &y1, &h)
                    - gp_marginal(&t0, &y0, &h)
            })
            .collect();
        assert_close(&got, &want);
    }
}

/// With uninformative covariates and no outcome the sampler targets the
/// prior: two individuals share a cluster with probability `E[1/(1+α)]`,
/// which for `α ~ Gamma(2, 1)` is `1 − e·E1(1)`.
#[test]
fn partition_prior_recovered() {
    let data = Dataset {
        ids: vec!["a".into(), "b".into()],
        covariates: vec![vec![0], vec![0]],
        category_counts: vec![1],
        times: vec![Vec::new(); 2],
        values: vec![Vec::new(); 2],
        fixed_effects: Vec::new(),
    };
    let data = validate_dataset(data, ResponseKind::Mvn).unwrap();
    let cfg = ChainConfig { n_burn: 1000, n_sample: 40_000, ..Default::default() };
    let out = run_chain(&cfg, &data, RandomSource::new(21, 0).rng()).unwrap();
    let same: Vec<f64> = out
        .allocations
        .iter()
        .map(|z| f64::from(u8::from(z[0] == z[1])))
        .collect();
    let mean = same.iter().sum::<f64>() / same.len() as f64;
    let e1_at_1 = 0.219_383_934_395_520_27;
    let expected = 1.0 - std::f64::consts::E * e1_at_1;
    let mcse = batch_means_mcse(&same).unwrap();
    assert!((mean - expected).abs() < 4.0 * mcse + 1e-3, "{mean} vs {expected} (mcse {mcse})");
}
