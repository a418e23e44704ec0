//! Flat `key = value` run configuration with `#` comments.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, DVector};
use premi_core::covmodel::SelectionUpdate;
use premi_core::data::{empirical_variogram, suggest_kernel_prior, Dataset};
use premi_core::gp::HyperPrior;
use premi_core::mvn::{default_niw_hyper, NiwHyper};
use premi_core::sampler::BetaPrior;
use premi_core::{ChainConfig, GpAlgorithm, GridSpec, ResponseKind};

use crate::error::{CliError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum KernelPrior {
    #[default]
    Fixed,
    /// Prior means of `log a` and `log l` suggested by the empirical variogram.
    Variogram,
}

/// Statistic of `ρ_q` compared with the selection threshold.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SelectionStatistic {
    #[default]
    Mean,
    Q05,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct NiwOverrides {
    pub mu0: Option<Vec<f64>>,
    pub kappa0: Option<f64>,
    pub nu0: Option<f64>,
    /// Row-major `M × M`.
    pub r0: Option<Vec<f64>>,
}

impl NiwOverrides {
    pub fn is_empty(&self) -> bool {
        self.mu0.is_none() && self.kappa0.is_none() && self.nu0.is_none() && self.r0.is_none()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum BetaPriorKind {
    #[default]
    StudentT,
    Normal,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub covariates: PathBuf,
    pub outcome: Option<PathBuf>,
    pub fixed_effects: Option<PathBuf>,
    pub output: Option<PathBuf>,
    pub n_chains: usize,
    /// Sampler settings; `selection` and `beta_prior` are derived from the fields below.
    pub chain: ChainConfig,
    pub variable_selection: bool,
    pub selection_update: SelectionUpdate,
    pub beta_kind: BetaPriorKind,
    pub beta_location: f64,
    pub beta_scale: f64,
    pub beta_df: f64,
    pub niw: NiwOverrides,
    pub kernel_prior: KernelPrior,
    pub variogram_bins: usize,
    pub prediction_grid: Option<Vec<f64>>,
    pub k_max: usize,
    pub selection_threshold: f64,
    pub selection_statistic: SelectionStatistic,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            covariates: PathBuf::new(),
            outcome: None,
            fixed_effects: None,
            output: None,
            n_chains: 1,
            chain: ChainConfig::default(),
            variable_selection: false,
            selection_update: SelectionUpdate::default(),
            beta_kind: BetaPriorKind::StudentT,
            beta_location: 0.0,
            beta_scale: 2.5,
            beta_df: 7.0,
            niw: NiwOverrides::default(),
            kernel_prior: KernelPrior::Fixed,
            variogram_bins: 10,
            prediction_grid: None,
            k_max: 10,
            selection_threshold: 0.5,
            selection_statistic: SelectionStatistic::Mean,
        }
    }
}

fn fmt_list(v: &[f64]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",")
}

fn parse_list(s: &str) -> std::result::Result<Vec<f64>, String> {
    s.split(',')
        .map(|p| p.trim().parse::<f64>().map_err(|_| format!("`{p}` is not a number")))
        .collect()
}

fn parse_bool(s: &str) -> std::result::Result<bool, String> {
    match s.to_ascii_lowercase().as_str() {
        "true" | "yes" | "1" | "on" => Ok(true),
        "false" | "no" | "0" | "off" => Ok(false),
        _ => Err(format!("`{s}` is not a boolean")),
    }
}

fn parse_num<T: std::str::FromStr>(s: &str) -> std::result::Result<T, String> {
    s.parse().map_err(|_| format!("`{s}` is not a valid number"))
}

fn parse_grid(s: &str) -> std::result::Result<GridSpec, String> {
    match s.to_ascii_lowercase().as_str() {
        "none" => Ok(GridSpec::None),
        "observed" => Ok(GridSpec::Observed),
        other => match other.strip_prefix("size:") {
            Some(n) => Ok(GridSpec::Size(parse_num(n.trim())?)),
            None => Ok(GridSpec::Explicit(parse_list(s)?)),
        },
    }
}

fn fmt_grid(g: &GridSpec) -> String {
    match g {
        GridSpec::None => "none".into(),
        GridSpec::Observed => "observed".into(),
        GridSpec::Size(n) => format!("size:{n}"),
        GridSpec::Explicit(v) => fmt_list(v),
    }
}

impl RunConfig {
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        let dir = match path.parent() {
            Some(d) if !d.as_os_str().is_empty() => d.to_path_buf(),
            _ => PathBuf::from("."),
        };
        let base = std::path::absolute(&dir).map_err(|e| CliError::io(&dir, e))?;
        Self::parse(&text, path, &base)
    }

    /// Parse configuration text; relative paths are resolved against `base`.
    pub fn parse(text: &str, source: &Path, base: &Path) -> Result<Self> {
        let mut cfg = Self::default();
        let mut seen = BTreeMap::new();
        let mut have_covariates = false;
        for (k, raw) in text.lines().enumerate() {
            let line = k + 1;
            let content = raw.split('#').next().unwrap_or_default().trim();
            if content.is_empty() {
                continue;
            }
            let err = |message: String| CliError::Config { path: source.to_path_buf(), line, message };
            let (key, value) = content
                .split_once('=')
                .ok_or_else(|| err(format!("expected `key = value`, found `{content}`")))?;
            let (key, value) = (key.trim(), value.trim());
            if seen.insert(key.to_string(), line).is_some() {
                return Err(err(format!("duplicate key `{key}`")));
            }
            if key == "covariates" {
                have_covariates = true;
            }
            cfg.set(key, value, base).map_err(err)?;
        }
        if !have_covariates {
            return Err(CliError::Config {
                path: source.to_path_buf(),
                line: 0,
                message: "missing required key `covariates`".into(),
            });
        }
        cfg.assemble();
        cfg.check().map_err(|message| CliError::Config { path: source.to_path_buf(), line: 0, message })?;
        Ok(cfg)
    }

    fn set(&mut self, key: &str, v: &str, base: &Path) -> std::result::Result<(), String> {
        let path = |v: &str| base.join(v);
        let c = &mut self.chain;
        match key {
            "covariates" => self.covariates = path(v),
            "outcome" => self.outcome = Some(path(v)),
            "fixed_effects" => self.fixed_effects = Some(path(v)),
            "output" => self.output = Some(path(v)),
            "response" => c.response_kind = v.parse().map_err(|e: premi_core::Error| e.to_string())?,
            "n_chains" => self.n_chains = parse_num(v)?,
            "seed" => c.seed = parse_num(v)?,
            "n_burn" => c.n_burn = parse_num(v)?,
            "n_sample" => c.n_sample = parse_num(v)?,
            "thin" => c.thin = parse_num(v)?,
            "c_init" => c.c_init = parse_num(v)?,
            "c_max" => c.c_max = parse_num(v)?,
            "gp_algorithm" => c.gp_algorithm = v.parse::<GpAlgorithm>().map_err(|e| e.to_string())?,
            "ratio_r" => c.ratio_r = if v.eq_ignore_ascii_case("none") { None } else { Some(parse_num(v)?) },
            "alpha_shape" => c.alpha_prior.0 = parse_num(v)?,
            "alpha_rate" => c.alpha_prior.1 = parse_num(v)?,
            "alpha_init" => c.alpha_init = parse_num(v)?,
            "dirichlet_a" => c.dirichlet_a = parse_num(v)?,
            "variable_selection" => self.variable_selection = parse_bool(v)?,
            "selection_update" => {
                self.selection_update = v.parse().map_err(|e: premi_core::Error| e.to_string())?
            }
            "grid" => c.grid = parse_grid(v)?,
            "log_a_mean" => c.gp_prior.mean[0] = parse_num(v)?,
            "log_l_mean" => c.gp_prior.mean[1] = parse_num(v)?,
            "log_s2_mean" => c.gp_prior.mean[2] = parse_num(v)?,
            "log_a_sd" => c.gp_prior.sd[0] = parse_num(v)?,
            "log_l_sd" => c.gp_prior.sd[1] = parse_num(v)?,
            "log_s2_sd" => c.gp_prior.sd[2] = parse_num(v)?,
            "kernel_prior" => {
                self.kernel_prior = match v.to_ascii_lowercase().as_str() {
                    "fixed" => KernelPrior::Fixed,
                    "variogram" => KernelPrior::Variogram,
                    _ => return Err(format!("unknown kernel prior `{v}`")),
                }
            }
            "variogram_bins" => self.variogram_bins = parse_num(v)?,
            "beta_prior" => {
                self.beta_kind = match v.to_ascii_lowercase().as_str() {
                    "t" => BetaPriorKind::StudentT,
                    "normal" => BetaPriorKind::Normal,
                    _ => return Err(format!("unknown beta prior `{v}`")),
                }
            }
            "beta_location" => self.beta_location = parse_num(v)?,
            "beta_scale" => self.beta_scale = parse_num(v)?,
            "beta_df" => self.beta_df = parse_num(v)?,
            "niw_mu0" => self.niw.mu0 = Some(parse_list(v)?),
            "niw_kappa0" => self.niw.kappa0 = Some(parse_num(v)?),
            "niw_nu0" => self.niw.nu0 = Some(parse_num(v)?),
            "niw_r0" => self.niw.r0 = Some(parse_list(v)?),
            "prediction_grid" => {
                self.prediction_grid = if v.eq_ignore_ascii_case("none") { None } else { Some(parse_list(v)?) }
            }
            "k_max" => self.k_max = parse_num(v)?,
            "selection_threshold" => self.selection_threshold = parse_num(v)?,
            "selection_statistic" => {
                self.selection_statistic = match v.to_ascii_lowercase().as_str() {
                    "mean" => SelectionStatistic::Mean,
                    "q05" => SelectionStatistic::Q05,
                    _ => return Err(format!("unknown selection statistic `{v}`")),
                }
            }
            _ => return Err(format!("unknown key `{key}`")),
        }
        Ok(())
    }

    fn assemble(&mut self) {
        self.chain.selection = self.variable_selection.then_some(self.selection_update);
        self.chain.beta_prior = match self.beta_kind {
            BetaPriorKind::StudentT => {
                BetaPrior::StudentT { loc: self.beta_location, scale: self.beta_scale, df: self.beta_df }
            }
            BetaPriorKind::Normal => BetaPrior::Normal { mean: self.beta_location, sd: self.beta_scale },
        };
    }

    fn check(&self) -> std::result::Result<(), String> {
        if self.n_chains == 0 {
            return Err("n_chains must be at least 1".into());
        }
        if self.k_max < 2 {
            return Err("k_max must be at least 2".into());
        }
        if !(self.beta_scale > 0.0 && self.beta_df > 0.0) {
            return Err("beta_scale and beta_df must be positive".into());
        }
        if self.variogram_bins == 0 {
            return Err("variogram_bins must be at least 1".into());
        }
        self.chain.validate().map_err(|e| e.to_string())
    }

    /// Chain settings with data-dependent priors resolved.
    pub fn resolve_chain(&self, data: &Dataset) -> premi_core::Result<ChainConfig> {
        let mut cfg = self.chain.clone();
        if self.kernel_prior == KernelPrior::Variogram && cfg.response_kind == ResponseKind::Gp {
            match suggest_kernel_prior(&empirical_variogram(data, self.variogram_bins)?) {
                Some((log_a, log_l)) => {
                    cfg.gp_prior = HyperPrior { mean: [log_a, log_l, cfg.gp_prior.mean[2]], sd: cfg.gp_prior.sd };
                }
                None => log::warn!("variogram has no rising sill; keeping the configured kernel prior"),
            }
        }
        if !self.niw.is_empty() && cfg.response_kind == ResponseKind::Mvn && data.has_outcome() {
            let d = default_niw_hyper(data)?;
            let m = d.mu0.len();
            let mu0 = match &self.niw.mu0 {
                Some(v) if v.len() != m => {
                    return Err(premi_core::Error::InvalidConfig(format!("niw_mu0 needs {m} values")))
                }
                Some(v) => DVector::from_column_slice(v),
                None => d.mu0.clone(),
            };
            let r0 = match &self.niw.r0 {
                Some(v) if v.len() != m * m => {
                    return Err(premi_core::Error::InvalidConfig(format!("niw_r0 needs {} values", m * m)))
                }
                Some(v) => DMatrix::from_row_slice(m, m, v),
                None => d.r0.clone(),
            };
            cfg.niw = Some(NiwHyper {
                mu0,
                kappa0: self.niw.kappa0.unwrap_or(d.kappa0),
                nu0: self.niw.nu0.unwrap_or(d.nu0),
                r0,
            });
        }
        Ok(cfg)
    }

    /// Every key with its effective value, in a fixed order.
    pub fn entries(&self) -> Vec<(&'static str, String)> {
        let c = &self.chain;
        let p = |p: &Option<PathBuf>| p.as_ref().map(|p| p.display().to_string());
        let mut e: Vec<(&'static str, String)> = vec![("covariates", self.covariates.display().to_string())];
        for (k, v) in [("outcome", p(&self.outcome)), ("fixed_effects", p(&self.fixed_effects)), ("output", p(&self.output))] {
            if let Some(v) = v {
                e.push((k, v));
            }
        }
        let gp_alg = match c.gp_algorithm {
            GpAlgorithm::Auto => "auto",
            GpAlgorithm::Marginal => "marginal",
            GpAlgorithm::Conditional => "conditional",
        };
        e.extend([
            ("response", c.response_kind.to_string()),
            ("n_chains", self.n_chains.to_string()),
            ("seed", c.seed.to_string()),
            ("n_burn", c.n_burn.to_string()),
            ("n_sample", c.n_sample.to_string()),
            ("thin", c.thin.to_string()),
            ("c_init", c.c_init.to_string()),
            ("c_max", c.c_max.to_string()),
            ("gp_algorithm", gp_alg.to_string()),
            ("ratio_r", c.ratio_r.map_or("none".to_string(), |r| r.to_string())),
            ("alpha_shape", c.alpha_prior.0.to_string()),
            ("alpha_rate", c.alpha_prior.1.to_string()),
            ("alpha_init", c.alpha_init.to_string()),
            ("dirichlet_a", c.dirichlet_a.to_string()),
            ("variable_selection", self.variable_selection.to_string()),
            (
                "selection_update",
                match self.selection_update {
                    SelectionUpdate::Collapsed => "collapsed",
                    SelectionUpdate::Conditional => "conditional",
                }
                .to_string(),
            ),
            ("grid", fmt_grid(&c.grid)),
            ("log_a_mean", c.gp_prior.mean[0].to_string()),
            ("log_a_sd", c.gp_prior.sd[0].to_string()),
            ("log_l_mean", c.gp_prior.mean[1].to_string()),
            ("log_l_sd", c.gp_prior.sd[1].to_string()),
            ("log_s2_mean", c.gp_prior.mean[2].to_string()),
            ("log_s2_sd", c.gp_prior.sd[2].to_string()),
            (
                "kernel_prior",
                match self.kernel_prior {
                    KernelPrior::Fixed => "fixed",
                    KernelPrior::Variogram => "variogram",
                }
                .to_string(),
            ),
            ("variogram_bins", self.variogram_bins.to_string()),
        ]);
        e.extend([
            (
                "beta_prior",
                match self.beta_kind {
                    BetaPriorKind::StudentT => "t",
                    BetaPriorKind::Normal => "normal",
                }
                .to_string(),
            ),
            ("beta_location", self.beta_location.to_string()),
            ("beta_scale", self.beta_scale.to_string()),
            ("beta_df", self.beta_df.to_string()),
        ]);
        if let Some(v) = &self.niw.mu0 {
            e.push(("niw_mu0", fmt_list(v)));
        }
        if let Some(v) = self.niw.kappa0 {
            e.push(("niw_kappa0", v.to_string()));
        }
        if let Some(v) = self.niw.nu0 {
            e.push(("niw_nu0", v.to_string()));
        }
        if let Some(v) = &self.niw.r0 {
            e.push(("niw_r0", fmt_list(v)));
        }
        e.push(("prediction_grid", self.prediction_grid.as_deref().map_or("none".to_string(), fmt_list)));
        e.extend([
            ("k_max", self.k_max.to_string()),
            ("selection_threshold", self.selection_threshold.to_string()),
            (
                "selection_statistic",
                match self.selection_statistic {
                    SelectionStatistic::Mean => "mean",
                    SelectionStatistic::Q05 => "q05",
                }
                .to_string(),
            ),
        ]);
        e
    }

    /// Canonical text form; parsing it reproduces this configuration.
    pub fn to_canonical(&self) -> String {
        self.entries().into_iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
    }
}
