//! Subcommands and the flag groups they share.

pub mod ep;
pub mod propagate;
pub mod spectrum;
pub mod sweep;
pub mod threshold;

use std::path::PathBuf;

use anyhow::{bail, Result};
use stirap::model::{AbsorptionSite, ModelConfig};
use stirap::propagate::IntegratorSettings;

use crate::config::Resolver;

/// Environment variable that sets the worker thread count.
pub const THREADS_ENV: &str = "STIRAP_THREADS";

#[derive(clap::Args, Debug)]
pub struct Common {
    /// Key-value config file (or a previous run's manifest); flags win.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Directory for output files.
    #[arg(long, default_value = ".")]
    pub out_dir: PathBuf,
    /// Manifest path [default: <out-dir>/<command>_manifest.json].
    #[arg(long)]
    pub manifest: Option<PathBuf>,
}

impl Common {
    pub fn manifest_path(&self, command: &str) -> PathBuf {
        self.manifest
            .clone()
            .unwrap_or_else(|| self.out_dir.join(format!("{command}_manifest.json")))
    }
}

#[derive(clap::Args, Debug)]
pub struct ModelArgs {
    /// Coupling asymmetry a.
    #[arg(long)]
    pub a: Option<f64>,
    /// Device length L.
    #[arg(long = "L", visible_alias = "length")]
    pub length: Option<f64>,
    /// Absorption rate gamma.
    #[arg(long)]
    pub gamma: Option<f64>,
    /// Absorbing waveguide: none, target, center or initial.
    #[arg(long)]
    pub site: Option<AbsorptionSite>,
}

#[derive(clap::Args, Debug)]
pub struct IntegratorArgs {
    /// Relative tolerance [default: 1e-9].
    #[arg(long)]
    pub rel_tol: Option<f64>,
    /// Absolute tolerance [default: rel-tol * 1e-3].
    #[arg(long)]
    pub abs_tol: Option<f64>,
    /// Largest step as a fraction of L [default: 0.05].
    #[arg(long)]
    pub max_step: Option<f64>,
}

/// Model defaults: `a = 5`, `L = 20`, `gamma = 0`, absorption in the target
/// waveguide.
pub fn resolve_model(r: &mut Resolver, m: &ModelArgs) -> Result<ModelConfig> {
    let a = r.get("a", m.a, 5.0)?;
    let length = r.get("L", m.length, 20.0)?;
    let gamma = r.get("gamma", m.gamma, 0.0)?;
    let site = r.get("site", m.site, AbsorptionSite::Target)?;
    model_config(a, length, gamma, site)
}

pub fn model_config(a: f64, length: f64, gamma: f64, site: AbsorptionSite) -> Result<ModelConfig> {
    if gamma > 0.0 && site == AbsorptionSite::None {
        bail!("gamma = {gamma} needs an absorbing --site (target, center or initial)");
    }
    Ok(ModelConfig::new(a, length, gamma, site)?)
}

pub fn resolve_integrator(r: &mut Resolver, i: &IntegratorArgs, samples: usize) -> Result<IntegratorSettings> {
    let d = IntegratorSettings::default();
    let rel_tol = r.get("rel-tol", i.rel_tol, d.rel_tol)?;
    let abs_default = if rel_tol == d.rel_tol { d.abs_tol } else { rel_tol * 1e-3 };
    let abs_tol = r.get("abs-tol", i.abs_tol, abs_default)?;
    let max_step = r.get("max-step", i.max_step, d.max_step)?;
    let s = IntegratorSettings { rel_tol, abs_tol, max_step, sample_count: samples };
    s.validate()?;
    Ok(s)
}

/// Flag, then `STIRAP_THREADS`, then config file.
pub fn resolve_threads(r: &mut Resolver, flag: Option<usize>) -> Result<Option<usize>> {
    let env = match std::env::var(THREADS_ENV) {
        Ok(s) if !s.trim().is_empty() => Some(
            s.trim()
                .parse::<usize>()
                .map_err(|e| anyhow::anyhow!("{THREADS_ENV}='{s}': {e}"))?,
        ),
        _ => None,
    };
    let threads = r.optional("threads", flag.or(env))?;
    if threads == Some(0) {
        bail!("thread count must be at least 1");
    }
    Ok(threads)
}
