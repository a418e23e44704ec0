//! Locating and loading fitted runs.

use std::collections::HashMap;
use std::path::{Path, PathBuf};

use premi_core::data::read_labels;
use premi_core::gp::regular_grid;
use premi_core::output::{read_output, INFO_FILE};
use premi_core::{Dataset, Error, McmcOutput, ResponseKind};

use crate::config::RunConfig;
use crate::error::{CliError, Result};
use crate::fit::load_dataset;
use crate::manifest::CONFIG_COPY_FILE;

/// Points of the default GP prediction grid.
pub const DEFAULT_GRID_POINTS: usize = 25;

/// Chain directories `chain1, chain2, ...` of a run, in chain order.
pub fn chain_dirs(run: &Path) -> Result<Vec<PathBuf>> {
    let mut found = Vec::new();
    for entry in std::fs::read_dir(run).map_err(|e| CliError::io(run, e))? {
        let path = entry.map_err(|e| CliError::io(run, e))?.path();
        let name = path.file_name().and_then(|n| n.to_str()).unwrap_or_default();
        if let Some(k) = name.strip_prefix("chain").and_then(|k| k.parse::<usize>().ok()) {
            if path.join(INFO_FILE).is_file() {
                found.push((k, path));
            }
        }
    }
    if found.is_empty() {
        return Err(CliError::Usage(format!("{} contains no chain directories", run.display())));
    }
    found.sort();
    Ok(found.into_iter().map(|(_, p)| p).collect())
}

/// Chain directories named directly or contained in run directories.
pub fn expand_chain_dirs(dirs: &[PathBuf]) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    for d in dirs {
        if d.join(INFO_FILE).is_file() {
            out.push(d.clone());
        } else {
            out.extend(chain_dirs(d)?);
        }
    }
    Ok(out)
}

pub struct Run {
    pub dir: PathBuf,
    pub config: RunConfig,
    pub data: Dataset,
    pub chains: Vec<PathBuf>,
}

impl Run {
    pub fn open(dir: &Path) -> Result<Self> {
        let config = RunConfig::from_file(&dir.join(CONFIG_COPY_FILE))?;
        let data = load_dataset(&config)?;
        let chains = chain_dirs(dir)?;
        Ok(Self { dir: dir.to_path_buf(), config, data, chains })
    }

    pub fn output(&self, k: usize) -> Result<McmcOutput> {
        let dir = self.chains.get(k).ok_or_else(|| CliError::Usage(format!("run has no chain {}", k + 1)))?;
        let (out, ids) = read_output(dir)?;
        if ids != self.data.ids {
            return Err(Error::LengthMismatch(format!("{} does not match the dataset individuals", dir.display())).into());
        }
        Ok(out)
    }

    /// Configured prediction grid, else the shared MVN grid or a regular grid over the observed times.
    pub fn grid(&self) -> Vec<f64> {
        if let Some(g) = &self.config.prediction_grid {
            return g.clone();
        }
        default_grid(&self.data, self.config.chain.response_kind)
    }
}

pub fn default_grid(data: &Dataset, kind: ResponseKind) -> Vec<f64> {
    match kind {
        ResponseKind::Mvn => data.common_grid().map(<[f64]>::to_vec).unwrap_or_default(),
        ResponseKind::Gp => data
            .time_range()
            .map(|(lo, hi)| regular_grid(lo, hi, DEFAULT_GRID_POINTS))
            .unwrap_or_default(),
    }
}

/// Labels from an `id,cluster` file reordered to match `ids` (0-based).
pub fn aligned_labels(path: &Path, ids: &[String]) -> Result<Vec<usize>> {
    let (file_ids, labels) = read_labels(path)?;
    let map: HashMap<&str, usize> = file_ids.iter().map(String::as_str).zip(labels).collect();
    ids.iter()
        .map(|id| {
            map.get(id.as_str())
                .copied()
                .ok_or_else(|| Error::LengthMismatch(format!("{} has no label for `{id}`", path.display())).into())
        })
        .collect()
}

/// Comma-separated times; an empty string gives an empty grid.
pub fn parse_grid_arg(s: &str) -> Result<Vec<f64>> {
    s.split(',')
        .map(str::trim)
        .filter(|p| !p.is_empty())
        .map(|p| p.parse::<f64>().map_err(|_| CliError::Usage(format!("`{p}` is not a time"))))
        .collect()
}

pub fn write_csv(path: &Path, header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
    w.write_record(header).map_err(|e| csv_err(path, e))?;
    for row in rows {
        w.write_record(&row).map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|e| CliError::io(path, e))
}

fn csv_err(path: &Path, e: csv::Error) -> CliError {
    CliError::io(path, std::io::Error::other(e))
}
