use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use premi_cli::diagnose::cmd_diagnose;
use premi_cli::fit::cmd_fit;
use premi_cli::generate::{cmd_generate, GenerateArgs};
use premi_cli::postprocess::{cmd_postprocess, PostprocessArgs};
use premi_cli::predict::{cmd_predict, PredictArgs};
use premi_cli::runs::parse_grid_arg;
use premi_cli::{cmd_ari, CliError, Result, RunConfig};
use premi_core::simgen::{GeneratorKind, Study};

#[derive(Parser)]
#[command(name = "premi", version, about = "Semi-supervised Bayesian profile regression")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic study with its ground-truth partition.
    Generate {
        #[arg(long, value_parser = parse_study)]
        study: Study,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        timepoints: Option<usize>,
        #[arg(long)]
        separability: Option<f64>,
        #[arg(long, allow_hyphen_values = true)]
        gradient: Option<f64>,
        #[arg(long, value_parser = parse_kind, default_value = "mvn")]
        kind: GeneratorKind,
        #[arg(long)]
        individuals: Option<usize>,
    },
    /// Run the chains described by a configuration file.
    Fit {
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        chains: Option<usize>,
    },
    /// Summarise every chain of a fitted run.
    Postprocess {
        run: PathBuf,
        /// `id,cluster` file with the true partition.
        #[arg(long)]
        truth: Option<PathBuf>,
        #[arg(long)]
        k_max: Option<usize>,
    },
    /// Compare chains from one or more runs.
    Diagnose {
        #[arg(required = true)]
        dirs: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Predict trajectories for new covariate profiles.
    Predict {
        run: PathBuf,
        #[arg(long)]
        profiles: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Comma-separated prediction times.
        #[arg(long, allow_hyphen_values = true)]
        grid: Option<String>,
        #[arg(long, default_value_t = 1)]
        chain: usize,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Adjusted Rand index between two label files.
    Ari { a: PathBuf, b: PathBuf },
}

fn parse_study(s: &str) -> std::result::Result<Study, String> {
    s.parse().map_err(|e: premi_core::Error| e.to_string())
}

fn parse_kind(s: &str) -> std::result::Result<GeneratorKind, String> {
    s.parse().map_err(|e: premi_core::Error| e.to_string())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Generate { study, seed, out, timepoints, separability, gradient, kind, individuals } => {
            let args = GenerateArgs { study, seed, out, timepoints, separability, gradient, kind, individuals };
            println!("seed = {seed}");
            for (file, hash) in cmd_generate(&args)? {
                println!("{file} = {hash}");
            }
        }
        Command::Fit { config, out, seed, chains } => {
            let mut cfg = RunConfig::from_file(&config)?;
            if let Some(o) = out {
                cfg.output = Some(o);
            }
            if let Some(s) = seed {
                cfg.chain.seed = s;
            }
            if let Some(n) = chains {
                if n == 0 {
                    return Err(CliError::Usage("--chains must be at least 1".into()));
                }
                cfg.n_chains = n;
            }
            let res = cmd_fit(&cfg)?;
            println!("output = {}", res.output_dir.display());
            println!("config_hash = {}", res.manifest.config_hash);
            println!("wall_time_seconds = {}", res.manifest.wall_time_seconds);
        }
        Command::Postprocess { run, truth, k_max } => {
            for r in cmd_postprocess(&PostprocessArgs { run, truth, k_max })? {
                print!("chain{} n_clusters={} silhouette={:.4}", r.chain, r.n_clusters, r.silhouette);
                if let Some(p) = r.pear {
                    print!(" pear={p:.4}");
                }
                println!();
            }
        }
        Command::Diagnose { dirs, out } => {
            let d = cmd_diagnose(&dirs, &out)?;
            println!("n_chains = {}", d.chains.len());
            println!("alpha_iqr_overlap = {}", d.alpha_iqr_overlap);
            for (a, b, dist) in d.psm_distances {
                println!("psm_distance chain{} chain{} = {dist}", a + 1, b + 1);
            }
        }
        Command::Predict { run, profiles, out, grid, chain, seed } => {
            let grid = grid.as_deref().map(parse_grid_arg).transpose()?;
            let preds = cmd_predict(&PredictArgs { run, profiles, out: out.clone(), grid, chain, seed })?;
            println!("profiles = {}", preds.len());
            println!("output = {}", out.display());
        }
        Command::Ari { a, b } => println!("{}", cmd_ari(&a, &b)?),
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => {
            print!("{e}");
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let err = CliError::Usage(e.to_string().lines().next().unwrap_or_default().to_string());
            eprint!("{e}");
            eprintln!("{}", err.report_line());
            return ExitCode::from(err.exit_code() as u8);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", e.report_line());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
