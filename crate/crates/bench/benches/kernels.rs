use std::hint::black_box;
use std::sync::Arc;

use criterion::{criterion_group, criterion_main, BatchSize, Criterion};
use premi_core::gp::{regular_grid, DenseCluster, GpHyper, SparseCluster};
use premi_core::postproc::{adjusted_rand_index, best_partition, posterior_similarity};
use premi_core::sampler::Chain;
use premi_core::simgen::{gen_sim1, gen_sim3, gen_sim4, GeneratorKind, DEFAULT_V};
use premi_core::{validate_dataset, ChainConfig, GpAlgorithm, GridSpec, RandomSource, ResponseKind};
use rand::Rng;

fn woodbury(c: &mut Criterion) {
    let h = GpHyper::new(0.0, 0.5, -1.0);
    let members: Vec<(Vec<f64>, Vec<f64>)> =
        (0..30).map(|i| ((0..5).map(|j| j as f64 + 0.1 * i as f64).collect(), vec![0.5; 5])).collect();
    let base = DenseCluster::build(h, members.iter().enumerate().skip(1).map(|(i, (t, y))| (i, t.as_slice(), y.as_slice()))).unwrap();
    c.bench_function("woodbury add+remove (150 obs)", |b| {
        b.iter_batched(
            || base.clone(),
            |mut cl| {
                cl.add(0, &members[0].0, &members[0].1).unwrap();
                cl.remove(0).unwrap();
                cl
            },
            BatchSize::SmallInput,
        )
    });
    c.bench_function("woodbury conditional likelihood", |b| {
        b.iter(|| base.conditional_log_likelihood(black_box(&members[0].0), &members[0].1).unwrap())
    });
}

fn sparse(c: &mut Criterion) {
    let h = GpHyper::new(0.0, 0.5, -1.0);
    let mut rng = RandomSource::new(3, 0).rng();
    let members: Vec<(Vec<f64>, Vec<f64>)> = (0..100)
        .map(|_| {
            let t: Vec<f64> = (0..7).map(|j| 2.0 * j as f64 + 0.9 * rng.random::<f64>()).collect();
            (t, (0..7).map(|_| rng.random::<f64>()).collect())
        })
        .collect();
    let grid = Arc::new(regular_grid(0.0, 13.0, 25));
    c.bench_function("sparse cluster build (700 obs, 25 grid)", |b| {
        b.iter(|| {
            SparseCluster::build(h, grid.clone(), members.iter().enumerate().map(|(i, (t, y))| (i, t.as_slice(), y.as_slice())))
                .unwrap()
        })
    });
}

fn sweeps(c: &mut Criterion) {
    let mut group = c.benchmark_group("sweep");
    group.sample_size(20);
    let cases = [
        ("mvn sim1 M=4", gen_sim1(4, DEFAULT_V, 1).unwrap(), ChainConfig::default()),
        (
            "gp dense sim3 M=6",
            gen_sim3(6, -1.0, GeneratorKind::Gp, 1).unwrap(),
            ChainConfig { response_kind: ResponseKind::Gp, ..Default::default() },
        ),
        (
            "gp sparse sim4 200",
            gen_sim4(200, 1).unwrap(),
            ChainConfig {
                response_kind: ResponseKind::Gp,
                gp_algorithm: GpAlgorithm::Marginal,
                grid: GridSpec::Size(25),
                ..Default::default()
            },
        ),
    ];
    for (name, sim, cfg) in cases {
        let data = validate_dataset(sim.dataset, cfg.response_kind).unwrap();
        let mut chain = Chain::new(&cfg, &data, RandomSource::new(1, 0).rng()).unwrap();
        for _ in 0..50 {
            chain.sweep().unwrap();
        }
        group.bench_function(name, |b| b.iter(|| chain.sweep().unwrap()));
    }
    group.finish();
}

fn postprocessing(c: &mut Criterion) {
    let mut rng = RandomSource::new(5, 0).rng();
    let allocations: Vec<Vec<usize>> =
        (0..1000).map(|_| (0..100).map(|i| if rng.random::<f64>() < 0.9 { i / 50 } else { 2 }).collect()).collect();
    c.bench_function("posterior similarity (1000 x 100)", |b| b.iter(|| posterior_similarity(black_box(&allocations)).unwrap()));
    let psm = posterior_similarity(&allocations).unwrap();
    c.bench_function("best partition k_max=6 (N=100)", |b| b.iter(|| best_partition(black_box(&psm), 6).unwrap()));
    c.bench_function("ARI (N=100)", |b| b.iter(|| adjusted_rand_index(black_box(&allocations[0]), &allocations[1]).unwrap()));
}

criterion_group!(benches, woodbury, sparse, sweeps, postprocessing);
criterion_main!(benches);
