//! Multi-chain convergence tables.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use premi_core::diagnostics::{interquartile_range, interquartile_ranges_overlap, pairwise_psm_distances, scalar_traces, summarize_trace};
use premi_core::output::read_output;
use premi_core::McmcOutput;

use crate::error::{CliError, Result};
use crate::runs::{expand_chain_dirs, write_csv};

pub const TRACES_FILE: &str = "traces.csv";
pub const SUMMARY_FILE: &str = "summary.csv";
pub const PSM_DISTANCES_FILE: &str = "psm_distances.csv";
pub const ACCEPTANCE_SUMMARY_FILE: &str = "acceptance.csv";
pub const REPORT_FILE: &str = "report.txt";

#[derive(Debug, Clone, PartialEq)]
pub struct Diagnosis {
    pub chains: Vec<PathBuf>,
    /// Iterations recorded by every chain.
    pub common_iterations: Vec<usize>,
    pub psm_distances: Vec<(usize, usize, f64)>,
    pub alpha_iqr_overlap: bool,
}

fn f(v: f64) -> String {
    format!("{v}")
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(String::new, f)
}

/// `diagnose`: compare the chains found in `dirs` and write tables into `out`.
pub fn cmd_diagnose(dirs: &[PathBuf], out: &Path) -> Result<Diagnosis> {
    let chains = expand_chain_dirs(dirs)?;
    let outputs: Vec<McmcOutput> = chains.iter().map(|d| read_output(d).map(|(o, _)| o)).collect::<premi_core::Result<_>>()?;
    std::fs::create_dir_all(out).map_err(|e| CliError::io(out, e))?;

    let mut common: BTreeSet<usize> = outputs[0].iterations.iter().copied().collect();
    for o in &outputs[1..] {
        let s: BTreeSet<usize> = o.iterations.iter().copied().collect();
        common = common.intersection(&s).copied().collect();
    }
    let common: Vec<usize> = common.into_iter().collect();
    let traces: Vec<Vec<(&'static str, Vec<f64>)>> = outputs.iter().map(scalar_traces).collect();
    let names: Vec<&str> = traces[0].iter().map(|(n, _)| *n).collect();

    let mut header = vec!["iteration", "chain"];
    header.extend(&names);
    let mut rows = Vec::new();
    let positions: Vec<std::collections::HashMap<usize, usize>> =
        outputs.iter().map(|o| o.iterations.iter().enumerate().map(|(h, &it)| (it, h)).collect()).collect();
    for &it in &common {
        for (c, tr) in traces.iter().enumerate() {
            let h = positions[c][&it];
            let mut row = vec![it.to_string(), (c + 1).to_string()];
            row.extend(tr.iter().map(|(_, v)| f(v[h])));
            rows.push(row);
        }
    }
    write_csv(&out.join(TRACES_FILE), &header, rows)?;

    let mut rows = Vec::new();
    for (c, tr) in traces.iter().enumerate() {
        for (name, v) in tr {
            let s = summarize_trace(name, v);
            let (q25, q75) = interquartile_range(v)?;
            rows.push(vec![(c + 1).to_string(), name.to_string(), s.n.to_string(), f(s.mean), f(s.sd), opt(s.mcse), opt(s.ess), f(q25), f(q75)]);
        }
    }
    write_csv(&out.join(SUMMARY_FILE), &["chain", "statistic", "n", "mean", "sd", "mcse", "ess", "q25", "q75"], rows)?;

    let refs: Vec<&McmcOutput> = outputs.iter().collect();
    let psm_distances = pairwise_psm_distances(&refs)?;
    write_csv(
        &out.join(PSM_DISTANCES_FILE),
        &["chain_a", "chain_b", "frobenius"],
        psm_distances.iter().map(|(a, b, d)| vec![(a + 1).to_string(), (b + 1).to_string(), f(*d)]),
    )?;

    let rows = outputs.iter().enumerate().flat_map(|(c, o)| {
        o.steps.iter().map(move |s| {
            vec![(c + 1).to_string(), s.name.clone(), f(s.step), s.attempts.to_string(), s.accepted.to_string(), opt(s.rate())]
        })
    });
    write_csv(&out.join(ACCEPTANCE_SUMMARY_FILE), &["chain", "coordinate", "step", "attempts", "accepted", "rate"], rows)?;

    let alphas: Vec<&[f64]> = outputs.iter().map(|o| o.alpha.as_slice()).collect();
    let alpha_iqr_overlap = interquartile_ranges_overlap(&alphas)?;
    let mut report = String::new();
    writeln!(report, "n_chains = {}", chains.len()).unwrap();
    for (c, d) in chains.iter().enumerate() {
        writeln!(report, "chain{} = {}", c + 1, d.display()).unwrap();
    }
    writeln!(report, "common_iterations = {}", common.len()).unwrap();
    writeln!(report, "alpha_iqr_overlap = {alpha_iqr_overlap}").unwrap();
    let path = out.join(REPORT_FILE);
    std::fs::write(&path, report).map_err(|e| CliError::io(&path, e))?;

    Ok(Diagnosis { chains, common_iterations: common, psm_distances, alpha_iqr_overlap })
}
