//! Model and chain settings resolved from flags, an optional TOML file and
//! library defaults, in that order of precedence.

use std::path::Path;

use clap::Args;
use serde::{Deserialize, Serialize};
use vast_core::{ChainSettings, Error, ModelConfig, Result};

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelArgs {
    /// Number of base learners.
    #[arg(long = "J", value_name = "J")]
    #[serde(rename = "J")]
    pub j: Option<usize>,
    /// Lag order.
    #[arg(long = "P", value_name = "P")]
    #[serde(rename = "P")]
    pub p: Option<usize>,
    /// Prior scale of the coefficients (prior covariance phi / J).
    #[arg(long)]
    pub phi: Option<f64>,
    #[arg(long)]
    pub a_sigma: Option<f64>,
    #[arg(long)]
    pub b_sigma: Option<f64>,
    #[arg(long)]
    pub a_nu: Option<f64>,
    #[arg(long)]
    pub b_nu: Option<f64>,
    /// Prior variance of the thresholds.
    #[arg(long)]
    pub sigma2_mu: Option<f64>,
    /// Inverse-Wishart degrees of freedom (default: number of series).
    #[arg(long)]
    pub a_cov: Option<f64>,
    /// Inverse-Wishart scale is this value times the identity.
    #[arg(long)]
    pub cov_scale: Option<f64>,
    /// Hold every speed of adjustment fixed at this value.
    #[arg(long)]
    pub fix_nu: Option<f64>,
    /// Tie every threshold to the mean of its selected covariate.
    #[arg(long)]
    pub fix_mu: bool,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ChainArgs {
    /// Burn-in sweeps.
    #[arg(long)]
    pub burn: Option<usize>,
    /// Retained draws.
    #[arg(long)]
    pub save: Option<usize>,
    #[arg(long)]
    pub thin: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Sweeps per proposal-adaptation window.
    #[arg(long)]
    pub adapt_window: Option<usize>,
    /// Initial random-walk standard deviation for nu and mu.
    #[arg(long)]
    pub initial_scale: Option<f64>,
}

/// Contents of a `--config` file.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FileConfig {
    pub model: ModelArgs,
    pub chain: ChainArgs,
}

impl FileConfig {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let Some(path) = path else { return Ok(Self::default()) };
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("cannot read config file {}: {e}", path.display())))?;
        toml::from_str(&text).map_err(|e| Error::Config(format!("config file {}: {e}", path.display())))
    }
}

fn pick<T: Copy>(flag: Option<T>, file: Option<T>, default: T) -> T {
    flag.or(file).unwrap_or(default)
}

/// Resolve the model configuration for `m` series.
pub fn resolve_model(flags: &ModelArgs, file: &ModelArgs, m: usize) -> Result<ModelConfig> {
    let base = ModelConfig::vast(1, m, 1);
    let cfg = ModelConfig {
        n_learners: pick(flags.j, file.j, 10),
        lags: pick(flags.p, file.p, 1),
        n_series: m,
        phi: pick(flags.phi, file.phi, base.phi),
        a_sigma: pick(flags.a_sigma, file.a_sigma, base.a_sigma),
        b_sigma: pick(flags.b_sigma, file.b_sigma, base.b_sigma),
        a_nu: pick(flags.a_nu, file.a_nu, base.a_nu),
        b_nu: pick(flags.b_nu, file.b_nu, base.b_nu),
        sigma2_mu: pick(flags.sigma2_mu, file.sigma2_mu, base.sigma2_mu),
        a_cov: pick(flags.a_cov, file.a_cov, base.a_cov),
        cov_scale: pick(flags.cov_scale, file.cov_scale, base.cov_scale),
        fix_nu: flags.fix_nu.or(file.fix_nu),
        fix_mu_to_mean: flags.fix_mu || file.fix_mu,
    };
    cfg.validate()?;
    Ok(cfg)
}

pub fn resolve_chain(flags: &ChainArgs, file: &ChainArgs) -> Result<ChainSettings> {
    let d = ChainSettings::default();
    let s = ChainSettings {
        seed: pick(flags.seed, file.seed, d.seed),
        n_burn: pick(flags.burn, file.burn, d.n_burn),
        n_save: pick(flags.save, file.save, d.n_save),
        thin: pick(flags.thin, file.thin, d.thin),
        adapt_window: pick(flags.adapt_window, file.adapt_window, d.adapt_window),
        initial_scale: pick(flags.initial_scale, file.initial_scale, d.initial_scale),
        ..d
    };
    s.validate()?;
    Ok(s)
}

/// Parse a comma-separated list.
pub fn parse_list<T: std::str::FromStr>(s: &str, what: &str) -> Result<Vec<T>> {
    s.split(',')
        .map(str::trim)
        .filter(|p| !p.is_empty())
        .map(|p| p.parse().map_err(|_| Error::Config(format!("cannot parse '{p}' in {what} list"))))
        .collect()
}
