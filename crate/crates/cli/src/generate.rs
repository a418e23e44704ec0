//! Synthetic study generation.

use std::path::{Path, PathBuf};

use premi_core::data::{write_dataset, write_labels};
use premi_core::simgen::{gen_sim1, gen_sim2, gen_sim3, gen_sim4, GeneratorKind, SimData, Study, DEFAULT_V};

use crate::error::{CliError, Result};
use crate::manifest::{file_sha256, list_files};

pub const TRUTH_FILE: &str = "truth.csv";
pub const ALTERNATIVE_FILE: &str = "alternative.csv";

#[derive(Debug, Clone, PartialEq)]
pub struct GenerateArgs {
    pub study: Study,
    pub seed: u64,
    pub out: PathBuf,
    /// Outcome times per individual; per-study default when absent.
    pub timepoints: Option<usize>,
    pub separability: Option<f64>,
    pub gradient: Option<f64>,
    pub kind: GeneratorKind,
    pub individuals: Option<usize>,
}

impl GenerateArgs {
    pub fn new(study: Study, seed: u64, out: impl Into<PathBuf>) -> Self {
        Self {
            study,
            seed,
            out: out.into(),
            timepoints: None,
            separability: None,
            gradient: None,
            kind: GeneratorKind::Mvn,
            individuals: None,
        }
    }
}

pub fn simulate(args: &GenerateArgs) -> Result<SimData> {
    let m = args.timepoints;
    let sim = match args.study {
        Study::S1 => gen_sim1(m.unwrap_or(5), args.separability.unwrap_or(DEFAULT_V), args.seed)?,
        Study::S2 => gen_sim2(m.unwrap_or(4), args.seed)?,
        Study::S3 => gen_sim3(m.unwrap_or(6), args.gradient.unwrap_or(-1.0), args.kind, args.seed)?,
        Study::S4 => gen_sim4(args.individuals.unwrap_or(200), args.seed)?,
    };
    Ok(sim)
}

fn zero_based(labels: &[usize]) -> Vec<usize> {
    labels.iter().map(|l| l - 1).collect()
}

/// `generate`: write the dataset and its ground truth; returns `(file, sha256)` pairs.
pub fn cmd_generate(args: &GenerateArgs) -> Result<Vec<(String, String)>> {
    let sim = simulate(args)?;
    write_sim(&sim, &args.out)?;
    list_files(&args.out)?
        .into_iter()
        .map(|rel| Ok((rel.display().to_string(), file_sha256(&args.out.join(&rel))?)))
        .collect()
}

pub fn write_sim(sim: &SimData, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    write_dataset(&sim.dataset, dir)?;
    let ids = &sim.dataset.ids;
    write_labels(&dir.join(TRUTH_FILE), ids, &zero_based(&sim.truth))?;
    let alt = dir.join(ALTERNATIVE_FILE);
    match &sim.alternative {
        Some(a) => write_labels(&alt, ids, &zero_based(a))?,
        None if alt.exists() => std::fs::remove_file(&alt).map_err(|e| CliError::io(&alt, e))?,
        None => {}
    }
    Ok(())
}
