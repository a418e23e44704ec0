//! Trajectory prediction for new covariate profiles.

use std::path::{Path, PathBuf};

use premi_core::postproc::{predict_trajectories, Prediction, Profile};
use premi_core::{Error, RandomSource};

use crate::error::{CliError, Result};
use crate::runs::{write_csv, Run};

#[derive(Debug, Clone, Default)]
pub struct PredictArgs {
    pub run: PathBuf,
    pub profiles: PathBuf,
    pub out: PathBuf,
    /// Overrides the run's prediction grid.
    pub grid: Option<Vec<f64>>,
    /// 1-based chain to predict from.
    pub chain: usize,
    pub seed: Option<u64>,
}

/// Profiles CSV: `id,x1..xQ` with 1-based categories, then optional `w1..wR`.
pub fn read_profiles(path: &Path, n_covariates: usize, n_fixed: usize) -> Result<Vec<Profile>> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| CliError::io(path, std::io::Error::other(e)))?;
    let mut out = Vec::new();
    for (k, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| CliError::io(path, std::io::Error::other(e)))?;
        let bad = |m: String| Error::Parse(format!("{} row {}: {m}", path.display(), k + 1));
        if rec.len() != 1 + n_covariates + n_fixed {
            return Err(bad(format!("expected {} columns, found {}", 1 + n_covariates + n_fixed, rec.len())).into());
        }
        let covariates = (1..=n_covariates)
            .map(|q| match rec[q].parse::<usize>() {
                Ok(v) if v >= 1 => Ok(v - 1),
                _ => Err(bad(format!("category `{}`", &rec[q]))),
            })
            .collect::<premi_core::Result<_>>()?;
        let fixed = (0..n_fixed)
            .map(|r| {
                let s = &rec[1 + n_covariates + r];
                s.parse::<f64>().map_err(|_| bad(format!("fixed effect `{s}`")))
            })
            .collect::<premi_core::Result<_>>()?;
        out.push(Profile { id: rec[0].to_string(), covariates, fixed });
    }
    Ok(out)
}

/// `predict`: write `profile,time,estimate,lo,hi` rows, one block per profile.
pub fn cmd_predict(args: &PredictArgs) -> Result<Vec<(String, Prediction)>> {
    let run = Run::open(&args.run)?;
    let chain = args.chain.max(1);
    let output = run.output(chain - 1)?;
    let profiles = read_profiles(&args.profiles, run.data.n_covariates(), run.data.n_fixed())?;
    for (i, p) in profiles.iter().enumerate() {
        for (q, (&x, &n)) in p.covariates.iter().zip(&run.data.category_counts).enumerate() {
            if x >= n {
                return Err(Error::CategoryOutOfRange { individual: i + 1, covariate: q + 1, value: x + 1, max: n }.into());
            }
        }
    }
    let grid = args.grid.clone().unwrap_or_else(|| run.grid());
    let seed = args.seed.unwrap_or(run.config.chain.seed);
    let mut rng = RandomSource::new(seed, chain as u64).rng();
    let preds = predict_trajectories(&profiles, &output, &run.data, &grid, &mut rng)?;
    let f = |v: f64| format!("{v}");
    let rows = profiles.iter().zip(&preds).flat_map(|(p, pr)| {
        (0..pr.times.len()).map(move |j| vec![p.id.clone(), f(pr.times[j]), f(pr.estimate[j]), f(pr.lo[j]), f(pr.hi[j])])
    });
    write_csv(&args.out, &["profile", "time", "estimate", "lo", "hi"], rows)?;
    Ok(profiles.into_iter().map(|p| p.id).zip(preds).collect())
}
