//! Per-chain posterior summaries of a fitted run.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use premi_core::data::write_labels;
use premi_core::postproc::{
    adjusted_rand_index, cluster_profiles, pear_sample_averaged, summarize, EstimatedResponse, PartitionSummary,
    SelectionSummary,
};
use premi_core::Dataset;

use crate::config::{RunConfig, SelectionStatistic};
use crate::error::{CliError, Result};
use crate::runs::{aligned_labels, write_csv, Run};

pub const POST_DIR: &str = "post";
pub const PSM_FILE: &str = "psm.csv";
pub const BEST_PARTITION_FILE: &str = "best_partition.csv";
pub const SILHOUETTE_FILE: &str = "silhouette.csv";
pub const ESTIMATES_FILE: &str = "cluster_estimates.csv";
pub const PROFILES_FILE: &str = "cluster_profiles.csv";
pub const SELECTION_SUMMARY_FILE: &str = "selection_summary.csv";
pub const REPORT_FILE: &str = "report.txt";

#[derive(Debug, Clone, Default)]
pub struct PostprocessArgs {
    pub run: PathBuf,
    pub truth: Option<PathBuf>,
    pub k_max: Option<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChainReport {
    pub chain: usize,
    pub dir: PathBuf,
    pub n_clusters: usize,
    pub silhouette: f64,
    pub cluster_sizes: Vec<usize>,
    /// Adjusted Rand index of the representative partition against the truth.
    pub pear: Option<f64>,
    pub pear_sample_averaged: Option<f64>,
    pub selected: Vec<usize>,
}

fn f(v: f64) -> String {
    format!("{v}")
}

pub fn is_selected(cfg: &RunConfig, s: &SelectionSummary) -> bool {
    let stat = match cfg.selection_statistic {
        SelectionStatistic::Mean => s.mean,
        SelectionStatistic::Q05 => s.q05,
    };
    stat > cfg.selection_threshold
}

/// `postprocess`: write summaries into `chainK/post/` for every chain of the run.
pub fn cmd_postprocess(args: &PostprocessArgs) -> Result<Vec<ChainReport>> {
    let run = Run::open(&args.run)?;
    let k_max = args.k_max.unwrap_or(run.config.k_max);
    if k_max < 2 {
        return Err(CliError::Usage("k_max must be at least 2".into()));
    }
    let truth = args.truth.as_deref().map(|p| aligned_labels(p, &run.data.ids)).transpose()?;
    let grid = run.grid();
    let mut reports = Vec::new();
    for k in 0..run.chains.len() {
        let output = run.output(k)?;
        let summary = summarize(&output, k_max)?;
        let dir = run.chains[k].join(POST_DIR);
        std::fs::create_dir_all(&dir).map_err(|e| CliError::io(&dir, e))?;
        write_summary(&dir, &run.data, &summary)?;

        let profiles = if grid.is_empty() || !run.data.has_outcome() {
            Vec::new()
        } else {
            cluster_profiles(&output, &run.data, &summary.best_partition, &summary.cluster_estimates, &grid)?
        };
        let rows = profiles.iter().flat_map(|(c, p)| {
            (0..p.times.len()).map(move |j| vec![c.to_string(), f(p.times[j]), f(p.estimate[j]), f(p.lo[j]), f(p.hi[j])])
        });
        write_csv(&dir.join(PROFILES_FILE), &["cluster", "time", "estimate", "lo", "hi"], rows)?;

        let selected: Vec<usize> =
            summary.selection.iter().filter(|s| is_selected(&run.config, s)).map(|s| s.covariate).collect();
        write_csv(
            &dir.join(SELECTION_SUMMARY_FILE),
            &["covariate", "mean", "q05", "q95", "omega", "selected"],
            summary.selection.iter().map(|s| {
                vec![
                    s.covariate.to_string(),
                    f(s.mean),
                    f(s.q05),
                    f(s.q95),
                    f(s.omega),
                    is_selected(&run.config, s).to_string(),
                ]
            }),
        )?;

        let (pear, pear_avg) = match &truth {
            Some(t) => {
                let best: Vec<usize> = summary.best_partition.iter().map(|l| l - 1).collect();
                (Some(adjusted_rand_index(&best, t)?), Some(pear_sample_averaged(&output, t)?))
            }
            None => (None, None),
        };
        let report = ChainReport {
            chain: k + 1,
            dir: dir.clone(),
            n_clusters: summary.n_clusters,
            silhouette: summary.silhouette,
            cluster_sizes: summary.cluster_estimates.iter().map(|e| e.size).collect(),
            pear,
            pear_sample_averaged: pear_avg,
            selected,
        };
        let path = dir.join(REPORT_FILE);
        std::fs::write(&path, report_text(&report, k_max)).map_err(|e| CliError::io(&path, e))?;
        reports.push(report);
    }
    Ok(reports)
}

fn report_text(r: &ChainReport, k_max: usize) -> String {
    let mut s = String::new();
    let sizes: Vec<String> = r.cluster_sizes.iter().map(|n| n.to_string()).collect();
    let selected: Vec<String> = r.selected.iter().map(|n| n.to_string()).collect();
    writeln!(s, "chain = {}", r.chain).unwrap();
    writeln!(s, "k_max = {k_max}").unwrap();
    writeln!(s, "n_clusters = {}", r.n_clusters).unwrap();
    writeln!(s, "cluster_sizes = {}", sizes.join(",")).unwrap();
    writeln!(s, "silhouette = {}", r.silhouette).unwrap();
    writeln!(s, "selected_covariates = {}", selected.join(",")).unwrap();
    if let (Some(p), Some(a)) = (r.pear, r.pear_sample_averaged) {
        writeln!(s, "pear = {p}").unwrap();
        writeln!(s, "pear_sample_averaged = {a}").unwrap();
    }
    s
}

fn write_summary(dir: &Path, data: &Dataset, summary: &PartitionSummary) -> Result<()> {
    let ids = &data.ids;
    let mut header = vec!["id"];
    header.extend(ids.iter().map(String::as_str));
    let n = summary.similarity.n();
    write_csv(
        &dir.join(PSM_FILE),
        &header,
        (0..n).map(|i| std::iter::once(ids[i].clone()).chain((0..n).map(|j| f(summary.similarity.s[(i, j)]))).collect()),
    )?;
    let zero: Vec<usize> = summary.best_partition.iter().map(|l| l - 1).collect();
    write_labels(&dir.join(BEST_PARTITION_FILE), ids, &zero)?;
    write_csv(
        &dir.join(SILHOUETTE_FILE),
        &["k", "silhouette"],
        summary.silhouette_by_k.iter().map(|(k, s)| vec![k.to_string(), f(*s)]),
    )?;

    let mut rows = Vec::new();
    for e in &summary.cluster_estimates {
        let mut push = |name: String, v: f64| rows.push(vec![e.cluster.to_string(), e.size.to_string(), name, f(v)]);
        for (q, p) in e.phi.iter().enumerate() {
            for (c, v) in p.iter().enumerate() {
                push(format!("phi_{}_{}", q + 1, c + 1), *v);
            }
        }
        for (q, g) in e.gamma.iter().enumerate() {
            push(format!("gamma_{}", q + 1), *g);
        }
        match &e.response {
            EstimatedResponse::None => {}
            EstimatedResponse::Mvn { mu, sigma } => {
                let m = mu.len();
                for (j, v) in mu.iter().enumerate() {
                    push(format!("mu_{}", j + 1), *v);
                }
                for (j, v) in sigma.iter().enumerate() {
                    push(format!("sigma_{}_{}", j / m + 1, j % m + 1), *v);
                }
            }
            EstimatedResponse::Gp { log_a, log_l, log_s2 } => {
                push("log_a".into(), *log_a);
                push("log_l".into(), *log_l);
                push("log_s2".into(), *log_s2);
            }
        }
    }
    write_csv(&dir.join(ESTIMATES_FILE), &["cluster", "size", "parameter", "value"], rows)
}
