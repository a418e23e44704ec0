//! Dataset model, validation, empirical variogram and CSV ingestion.
//!
//! Category codes are 1-based in files and 0-based in memory; the conversion
//! happens in [`read_dataset`] and [`write_dataset`] only.

use std::collections::HashMap;
use std::fs::File;
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ResponseKind {
    Mvn,
    Gp,
}

impl std::str::FromStr for ResponseKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "mvn" => Ok(Self::Mvn),
            "gp" => Ok(Self::Gp),
            other => Err(Error::Parse(format!("unknown response kind `{other}`"))),
        }
    }
}

impl std::fmt::Display for ResponseKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Mvn => "mvn",
            Self::Gp => "gp",
        })
    }
}

/// Categorical covariates plus a ragged longitudinal outcome and optional fixed effects.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    /// Opaque individual identifiers, in covariate-file order.
    pub ids: Vec<String>,
    /// `covariates[i][q]` is the 0-based category of covariate `q` for individual `i`.
    pub covariates: Vec<Vec<usize>>,
    /// Number of categories `E_q` of each covariate.
    pub category_counts: Vec<usize>,
    /// Observation times per individual (possibly empty).
    pub times: Vec<Vec<f64>>,
    /// Outcome values per individual, aligned with `times`.
    pub values: Vec<Vec<f64>>,
    /// Fixed-effect rows `w_i` (each of length `R`, `R` may be 0).
    pub fixed_effects: Vec<Vec<f64>>,
}

impl Dataset {
    pub fn n_individuals(&self) -> usize {
        self.ids.len()
    }

    pub fn n_covariates(&self) -> usize {
        self.category_counts.len()
    }

    pub fn n_fixed(&self) -> usize {
        self.fixed_effects.first().map_or(0, Vec::len)
    }

    pub fn total_observations(&self) -> usize {
        self.times.iter().map(Vec::len).sum()
    }

    pub fn has_outcome(&self) -> bool {
        self.total_observations() > 0
    }

    /// The shared time grid when every individual is observed at identical times.
    pub fn common_grid(&self) -> Option<&[f64]> {
        let first = self.times.first()?;
        self.times
            .iter()
            .all(|t| t == first)
            .then_some(first.as_slice())
    }

    /// Sorted distinct observation times across all individuals.
    pub fn distinct_times(&self) -> Vec<f64> {
        let mut all: Vec<f64> = self.times.iter().flatten().copied().collect();
        all.sort_by(f64::total_cmp);
        all.dedup();
        all
    }

    pub fn time_range(&self) -> Option<(f64, f64)> {
        let d = self.distinct_times();
        Some((*d.first()?, *d.last()?))
    }

    /// Individual `i`'s fixed-effect contribution `βᵀw_i`.
    pub fn fixed_shift(&self, i: usize, beta: &[f64]) -> f64 {
        self.fixed_effects[i]
            .iter()
            .zip(beta)
            .map(|(w, b)| w * b)
            .sum()
    }
}

/// Check a parsed dataset against the invariants of the chosen response model.
///
/// MVN requires a rectangular outcome on a shared grid; GP accepts ragged
/// outcomes and individuals without observations.
pub fn validate_dataset(raw: Dataset, kind: ResponseKind) -> Result<Dataset> {
    let n = raw.ids.len();
    for (name, len) in [
        ("covariate rows", raw.covariates.len()),
        ("time vectors", raw.times.len()),
        ("value vectors", raw.values.len()),
    ] {
        if len != n {
            return Err(Error::LengthMismatch(format!(
                "{name}: expected {n}, found {len}"
            )));
        }
    }
    if !raw.fixed_effects.is_empty() && raw.fixed_effects.len() != n {
        return Err(Error::LengthMismatch(format!(
            "fixed-effect rows: expected {n}, found {}",
            raw.fixed_effects.len()
        )));
    }
    let q = raw.category_counts.len();
    for (i, row) in raw.covariates.iter().enumerate() {
        if row.len() != q {
            return Err(Error::LengthMismatch(format!(
                "individual {i} has {} covariates, expected {q}",
                row.len()
            )));
        }
        for (j, (&x, &e)) in row.iter().zip(&raw.category_counts).enumerate() {
            if x >= e {
                return Err(Error::CategoryOutOfRange {
                    individual: i,
                    covariate: j,
                    value: x + 1,
                    max: e,
                });
            }
        }
    }
    for (i, (t, y)) in raw.times.iter().zip(&raw.values).enumerate() {
        if t.len() != y.len() {
            return Err(Error::LengthMismatch(format!(
                "individual {i}: {} times but {} values",
                t.len(),
                y.len()
            )));
        }
        if t.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::UnsortedTimes { individual: i });
        }
    }
    let r = raw.fixed_effects.first().map_or(0, Vec::len);
    if let Some(i) = raw.fixed_effects.iter().position(|w| w.len() != r) {
        return Err(Error::LengthMismatch(format!(
            "individual {i} has a fixed-effect row of different length"
        )));
    }
    if kind == ResponseKind::Mvn {
        if let Some(first) = raw.times.first() {
            if let Some(i) = raw.times.iter().position(|t| t != first) {
                return Err(Error::NonRectangularOutcomeForMvn { individual: i });
            }
        }
    }
    let mut ds = raw;
    if ds.fixed_effects.is_empty() {
        ds.fixed_effects = vec![Vec::new(); n];
    }
    Ok(ds)
}

/// Lag-binned semivariance of within-individual outcome pairs.
///
/// Bins are equal-width over the observed lag range; only non-empty bins are
/// returned, each as `(mean lag in bin, semivariance)`.
pub fn empirical_variogram(dataset: &Dataset, n_bins: usize) -> Result<Vec<(f64, f64)>> {
    let n_bins = n_bins.max(1);
    let mut pairs = Vec::new();
    for (t, y) in dataset.times.iter().zip(&dataset.values) {
        for a in 0..t.len() {
            for b in (a + 1)..t.len() {
                let d = y[a] - y[b];
                pairs.push(((t[a] - t[b]).abs(), 0.5 * d * d));
            }
        }
    }
    if pairs.is_empty() {
        return Err(Error::InsufficientData(
            "variogram needs at least one within-individual pair".into(),
        ));
    }
    let lo = pairs.iter().map(|p| p.0).fold(f64::INFINITY, f64::min);
    let hi = pairs.iter().map(|p| p.0).fold(f64::NEG_INFINITY, f64::max);
    let width = (hi - lo) / n_bins as f64;
    let mut sums = vec![(0.0, 0.0, 0usize); n_bins];
    for (lag, sv) in pairs {
        let k = if width > 0.0 {
            (((lag - lo) / width) as usize).min(n_bins - 1)
        } else {
            0
        };
        sums[k].0 += lag;
        sums[k].1 += sv;
        sums[k].2 += 1;
    }
    Ok(sums
        .into_iter()
        .filter(|s| s.2 > 0)
        .map(|(l, s, c)| (l / c as f64, s / c as f64))
        .collect())
}

/// Suggested prior means `(log a, log l)` for the squared-exponential kernel.
///
/// The sill above the shortest-lag semivariance estimates the signal
/// variance; the lag at which 95% of it is reached gives the length-scale
/// through `1 − exp(−h²/(2l)) = 0.95`.
pub fn suggest_kernel_prior(variogram: &[(f64, f64)]) -> Option<(f64, f64)> {
    let nugget = variogram.first()?.1;
    let sill = variogram.iter().map(|v| v.1).fold(f64::NEG_INFINITY, f64::max);
    let signal = sill - nugget;
    if !(signal > 0.0) {
        return None;
    }
    let target = nugget + 0.95 * signal;
    let h = variogram.iter().find(|v| v.1 >= target)?.0;
    let l = h * h / (2.0 * 20f64.ln());
    (l > 0.0).then(|| (signal.ln(), l.ln()))
}

fn reader(path: &Path) -> Result<csv::Reader<File>> {
    Ok(csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)?)
}

fn parse_f64(s: &str, what: &str) -> Result<f64> {
    s.parse::<f64>()
        .map_err(|_| Error::Parse(format!("{what}: `{s}` is not a number")))
}

/// Read the covariate, outcome and fixed-effect CSV files.
///
/// Individuals are ordered by first appearance in the covariate file. The
/// returned dataset is unvalidated except for id matching.
pub fn read_dataset(
    covariates: &Path,
    outcome: Option<&Path>,
    fixed_effects: Option<&Path>,
) -> Result<Dataset> {
    let mut rdr = reader(covariates)?;
    let n_cov = rdr.headers()?.len().saturating_sub(1);
    let mut ids = Vec::new();
    let mut index = HashMap::new();
    let mut rows = Vec::new();
    let mut counts = vec![0usize; n_cov];
    for rec in rdr.records() {
        let rec = rec?;
        let id = rec.get(0).unwrap_or_default().to_string();
        if index.insert(id.clone(), ids.len()).is_some() {
            return Err(Error::Parse(format!("duplicate id `{id}` in covariates")));
        }
        let mut row = Vec::with_capacity(n_cov);
        for q in 0..n_cov {
            let field = rec.get(q + 1).unwrap_or_default();
            let code: usize = field
                .parse()
                .map_err(|_| Error::Parse(format!("covariate code `{field}` for `{id}`")))?;
            if code == 0 {
                return Err(Error::CategoryOutOfRange {
                    individual: ids.len(),
                    covariate: q,
                    value: 0,
                    max: counts[q].max(1),
                });
            }
            counts[q] = counts[q].max(code);
            row.push(code - 1);
        }
        ids.push(id);
        rows.push(row);
    }
    let n = ids.len();
    let mut times = vec![Vec::new(); n];
    let mut values = vec![Vec::new(); n];
    if let Some(path) = outcome {
        let mut rdr = reader(path)?;
        for rec in rdr.records() {
            let rec = rec?;
            let id = rec.get(0).unwrap_or_default();
            let &i = index
                .get(id)
                .ok_or_else(|| Error::Parse(format!("outcome id `{id}` not in covariates")))?;
            times[i].push(parse_f64(rec.get(1).unwrap_or_default(), "time")?);
            values[i].push(parse_f64(rec.get(2).unwrap_or_default(), "value")?);
        }
    }
    let mut fixed = Vec::new();
    if let Some(path) = fixed_effects {
        let mut rdr = reader(path)?;
        let r = rdr.headers()?.len().saturating_sub(1);
        fixed = vec![None; n];
        for rec in rdr.records() {
            let rec = rec?;
            let id = rec.get(0).unwrap_or_default();
            let &i = index
                .get(id)
                .ok_or_else(|| Error::Parse(format!("fixed-effect id `{id}` not in covariates")))?;
            let w = (0..r)
                .map(|k| parse_f64(rec.get(k + 1).unwrap_or_default(), "fixed effect"))
                .collect::<Result<Vec<_>>>()?;
            fixed[i] = Some(w);
        }
        if let Some(i) = fixed.iter().position(Option::is_none) {
            return Err(Error::Parse(format!("no fixed effects for `{}`", ids[i])));
        }
    }
    Ok(Dataset {
        ids,
        covariates: rows,
        category_counts: counts,
        times,
        values,
        fixed_effects: fixed.into_iter().flatten().collect(),
    })
}

/// Names of the files written by [`write_dataset`].
pub const COVARIATES_FILE: &str = "covariates.csv";
pub const OUTCOME_FILE: &str = "outcome.csv";
pub const FIXED_EFFECTS_FILE: &str = "fixed_effects.csv";

/// Write a dataset in the three-file CSV layout. The outcome file is omitted
/// when no observations exist, the fixed-effect file when `R = 0`.
pub fn write_dataset(dataset: &Dataset, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let mut f = File::create(dir.join(COVARIATES_FILE))?;
    let header: Vec<String> = std::iter::once("id".to_string())
        .chain((1..=dataset.n_covariates()).map(|q| format!("x{q}")))
        .collect();
    writeln!(f, "{}", header.join(","))?;
    for (id, row) in dataset.ids.iter().zip(&dataset.covariates) {
        let codes: Vec<String> = row.iter().map(|x| (x + 1).to_string()).collect();
        writeln!(f, "{id},{}", codes.join(","))?;
    }
    let outcome = dir.join(OUTCOME_FILE);
    if dataset.has_outcome() {
        let mut f = File::create(&outcome)?;
        writeln!(f, "id,time,value")?;
        for (i, id) in dataset.ids.iter().enumerate() {
            for (t, y) in dataset.times[i].iter().zip(&dataset.values[i]) {
                writeln!(f, "{id},{t},{y}")?;
            }
        }
    } else if outcome.exists() {
        std::fs::remove_file(outcome)?;
    }
    let r = dataset.n_fixed();
    if r > 0 {
        let mut f = File::create(dir.join(FIXED_EFFECTS_FILE))?;
        let header: Vec<String> = std::iter::once("id".to_string())
            .chain((1..=r).map(|k| format!("w{k}")))
            .collect();
        writeln!(f, "{}", header.join(","))?;
        for (id, w) in dataset.ids.iter().zip(&dataset.fixed_effects) {
            let vals: Vec<String> = w.iter().map(|v| v.to_string()).collect();
            writeln!(f, "{id},{}", vals.join(","))?;
        }
    }
    Ok(())
}

/// Write `id,label` rows with 1-based labels.
pub fn write_labels(path: &Path, ids: &[String], labels: &[usize]) -> Result<()> {
    let mut f = File::create(path)?;
    writeln!(f, "id,cluster")?;
    for (id, l) in ids.iter().zip(labels) {
        writeln!(f, "{id},{}", l + 1)?;
    }
    Ok(())
}

/// Read an `id,label` file; labels are returned 0-based in file order.
pub fn read_labels(path: &Path) -> Result<(Vec<String>, Vec<usize>)> {
    let mut rdr = reader(path)?;
    let mut ids = Vec::new();
    let mut labels = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        ids.push(rec.get(0).unwrap_or_default().to_string());
        let field = rec.get(1).unwrap_or_default();
        let l: usize = field
            .parse()
            .map_err(|_| Error::Parse(format!("label `{field}`")))?;
        labels.push(l.saturating_sub(1));
    }
    Ok((ids, labels))
}
