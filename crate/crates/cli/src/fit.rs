//! Multi-chain fitting with a bounded worker pool.

use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Instant;

use premi_core::data::read_dataset;
use premi_core::output::write_output;
use premi_core::{run_chain, validate_dataset, ChainConfig, Dataset, McmcOutput, RandomSource};

use crate::config::RunConfig;
use crate::error::{CliError, Result};
use crate::manifest::{file_sha256, list_files, sha256_hex, Manifest, CONFIG_COPY_FILE};

/// Environment variable capping the number of worker threads.
pub const THREADS_ENV: &str = "PREMI_THREADS";

pub fn chain_dir_name(k: usize) -> String {
    format!("chain{}", k + 1)
}

/// Worker count: `PREMI_THREADS` if set, else the available parallelism, never above `jobs`.
pub fn worker_count(jobs: usize) -> usize {
    let cap = std::env::var(THREADS_ENV)
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
        .filter(|&n| n > 0)
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
    cap.min(jobs).max(1)
}

/// Run `jobs` independent tasks on at most `workers` threads, keeping results in order.
pub fn run_pool<T: Send>(jobs: usize, workers: usize, task: impl Fn(usize) -> T + Sync) -> Vec<T> {
    let next = AtomicUsize::new(0);
    let results: Mutex<Vec<Option<T>>> = Mutex::new((0..jobs).map(|_| None).collect());
    std::thread::scope(|s| {
        for _ in 0..workers.max(1) {
            s.spawn(|| loop {
                let k = next.fetch_add(1, Ordering::SeqCst);
                if k >= jobs {
                    break;
                }
                let r = task(k);
                results.lock().expect("worker panicked")[k] = Some(r);
            });
        }
    });
    results.into_inner().expect("worker panicked").into_iter().map(|r| r.expect("task ran")).collect()
}

pub fn load_dataset(cfg: &RunConfig) -> Result<Dataset> {
    let raw = read_dataset(&cfg.covariates, cfg.outcome.as_deref(), cfg.fixed_effects.as_deref())?;
    Ok(validate_dataset(raw, cfg.chain.response_kind)?)
}

fn chain_config(base: &ChainConfig, k: usize) -> ChainConfig {
    ChainConfig { chain_index: k as u64, ..base.clone() }
}

/// Run every chain of `cfg` on `data`, in memory.
pub fn run_chains(cfg: &RunConfig, data: &Dataset) -> Result<Vec<McmcOutput>> {
    let base = cfg.resolve_chain(data)?;
    let workers = worker_count(cfg.n_chains);
    run_pool(cfg.n_chains, workers, |k| {
        let c = chain_config(&base, k);
        run_chain(&c, data, RandomSource::for_chain(c.seed, c.chain_index).rng())
    })
    .into_iter()
    .map(|r| r.map_err(CliError::from))
    .collect()
}

#[derive(Debug, Clone)]
pub struct FitResult {
    pub output_dir: PathBuf,
    pub chain_dirs: Vec<PathBuf>,
    pub manifest: Manifest,
}

/// `fit`: run the configured chains and write per-chain outputs, the
/// canonical configuration and the manifest into the output directory.
pub fn cmd_fit(cfg: &RunConfig) -> Result<FitResult> {
    let out = cfg
        .output
        .clone()
        .ok_or_else(|| CliError::Usage("no output directory: set `output` or pass --out".into()))?;
    let start = Instant::now();
    let data = load_dataset(cfg)?;
    let outputs = run_chains(cfg, &data)?;
    let wall = start.elapsed().as_secs_f64();

    std::fs::create_dir_all(&out).map_err(|e| CliError::io(&out, e))?;
    let mut chain_dirs = Vec::new();
    for (k, o) in outputs.iter().enumerate() {
        let dir = out.join(chain_dir_name(k));
        if dir.exists() {
            std::fs::remove_dir_all(&dir).map_err(|e| CliError::io(&dir, e))?;
        }
        write_output(o, &data.ids, &dir)?;
        chain_dirs.push(dir);
    }
    let canonical = cfg.to_canonical();
    let copy = out.join(CONFIG_COPY_FILE);
    std::fs::write(&copy, &canonical).map_err(|e| CliError::io(&copy, e))?;

    let mut manifest = Manifest {
        version: env!("CARGO_PKG_VERSION").to_string(),
        config_hash: sha256_hex(canonical.as_bytes()),
        seed: cfg.chain.seed,
        n_chains: cfg.n_chains,
        threads: worker_count(cfg.n_chains),
        wall_time_seconds: wall,
        ..Default::default()
    };
    for (role, path) in [
        ("covariates", Some(&cfg.covariates)),
        ("outcome", cfg.outcome.as_ref()),
        ("fixed_effects", cfg.fixed_effects.as_ref()),
    ] {
        if let Some(p) = path {
            manifest.inputs.insert(role.to_string(), file_sha256(p)?);
        }
    }
    for dir in &chain_dirs {
        hash_outputs(&out, dir, &mut manifest)?;
    }
    manifest.write(&out)?;
    log::info!("{} chain(s) finished in {wall:.2} s", cfg.n_chains);
    Ok(FitResult { output_dir: out, chain_dirs, manifest })
}

fn hash_outputs(root: &Path, dir: &Path, manifest: &mut Manifest) -> Result<()> {
    for rel in list_files(dir)? {
        let path = dir.join(&rel);
        let key = path.strip_prefix(root).expect("below root").to_string_lossy().replace('\\', "/");
        manifest.outputs.insert(key, file_sha256(&path)?);
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pool_keeps_task_order() {
        for workers in [1, 2, 5] {
            let out = run_pool(7, workers, |k| k * k);
            assert_eq!(out, (0..7).map(|k| k * k).collect::<Vec<_>>());
        }
        assert!(run_pool(0, 3, |k| k).is_empty());
    }

    #[test]
    fn worker_count_never_exceeds_jobs() {
        assert_eq!(worker_count(1), 1);
        assert!(worker_count(4) <= 4);
    }
}
