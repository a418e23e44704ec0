//! Joint-distribution check: prior draws of (θ, D) against a chain that
//! alternates one sampler sweep with a fresh draw of D | θ.

use nalgebra::{DMatrix, DVector};
use premi_core::covmodel::sample_dirichlet;
use premi_core::diagnostics::batch_means_mcse;
use premi_core::mvn::sample_mvn_cluster_params;
use premi_core::sampler::{stick_breaking_weights, update_sticks, Chain, ChainState, ResponseState};
use premi_core::*;
use rand::Rng;
use rand::distr::weighted::WeightedIndex;
use rand_distr::{Distribution, Gamma, StandardNormal};

const N: usize = 5;
const C_MAX: usize = 8;
const CATEGORIES: [usize; 2] = [2, 3];

fn hyper() -> NiwHyper {
    NiwHyper {
        mu0: DVector::from_vec(vec![0.0, 1.0]),
        kappa0: 1.0,
        nu0: 5.0,
        r0: DMatrix::identity(2, 2),
    }
}

fn config() -> ChainConfig {
    ChainConfig { c_init: 3, c_max: C_MAX, niw: Some(hyper()), ..Default::default() }
}

fn empty_dataset() -> Dataset {
    Dataset {
        ids: (0..N).map(|i| format!("g{i}")).collect(),
        covariates: vec![vec![0, 0]; N],
        category_counts: CATEGORIES.to_vec(),
        times: vec![vec![0.0, 1.0]; N],
        values: vec![vec![0.0, 0.0]; N],
        fixed_effects: Vec::new(),
    }
}

fn prior_state(template: &ChainState, rng: &mut ChainRng) -> ChainState {
    let alpha = Gamma::new(2.0, 1.0).unwrap().sample(rng);
    let u = update_sticks(&[0; C_MAX], alpha, rng);
    let (pi, log_pi) = stick_breaking_weights(&u);
    let cat = WeightedIndex::new(&pi).unwrap();
    let z = (0..N).map(|_| cat.sample(rng)).collect();
    let mut cov = template.cov.clone();
    for c in 0..C_MAX {
        for (q, &e) in CATEGORIES.iter().enumerate() {
            cov.phi[c][q] = sample_dirichlet(&vec![1.0; e], rng);
        }
    }
    let h = hyper();
    let params = (0..C_MAX).map(|_| sample_mvn_cluster_params(&[], &h, rng).unwrap()).collect();
    ChainState { z, u, log_pi, alpha, beta: Vec::new(), cov, response: ResponseState::Mvn { hyper: h, params } }
}

fn simulate_data(state: &ChainState, rng: &mut ChainRng) -> Dataset {
    let mut d = empty_dataset();
    let ResponseState::Mvn { params, .. } = &state.response else { unreachable!() };
    for i in 0..N {
        let c = state.z[i];
        d.covariates[i] = (0..CATEGORIES.len())
            .map(|q| WeightedIndex::new(&state.cov.phi[c][q]).unwrap().sample(rng))
            .collect();
        let l = params[c].sigma.clone().cholesky().unwrap().unpack();
        let e = DVector::from_fn(2, |_, _| rng.sample::<f64, _>(StandardNormal));
        d.values[i] = (&params[c].mu + l * e).iter().copied().collect();
    }
    validate_dataset(d, ResponseKind::Mvn).unwrap()
}

fn stats(state: &ChainState) -> [f64; 4] {
    let ResponseState::Mvn { params, .. } = &state.response else { unreachable!() };
    let mu = params[state.z[0]].mu[0];
    [state.alpha, state.alpha * state.alpha, mu, mu * mu]
}

fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

#[test]
fn marginal_and_successive_simulators_agree() {
    let cfg = config();
    let mut rng = RandomSource::new(77, 0).rng();
    let template = {
        let d = validate_dataset(empty_dataset(), ResponseKind::Mvn).unwrap();
        Chain::new(&cfg, &d, RandomSource::new(1, 0).rng()).unwrap().state
    };
    let draws = 40_000;

    let mut marginal = vec![Vec::with_capacity(draws); 4];
    for _ in 0..draws {
        let s = prior_state(&template, &mut rng);
        for (k, v) in stats(&s).into_iter().enumerate() {
            marginal[k].push(v);
        }
    }

    let mut successive = vec![Vec::with_capacity(draws); 4];
    let mut state = prior_state(&template, &mut rng);
    let mut data = simulate_data(&state, &mut rng);
    for h in 0..draws {
        let mut chain = Chain::new(&cfg, &data, RandomSource::new(78, h as u64).rng()).unwrap();
        chain.state = state;
        chain.stop_adapting();
        chain.sweep().unwrap();
        state = chain.state;
        data = simulate_data(&state, &mut rng);
        for (k, v) in stats(&state).into_iter().enumerate() {
            successive[k].push(v);
        }
    }

    for k in 0..4 {
        let (a, b) = (mean(&marginal[k]), mean(&successive[k]));
        let se_a = batch_means_mcse(&marginal[k]).unwrap();
        let se_b = batch_means_mcse(&successive[k]).unwrap();
        let se = (se_a * se_a + se_b * se_b).sqrt();
        assert!((a - b).abs() < 3.0 * se, "statistic {k}: {a} vs {b} (se {se})");
    }
}
