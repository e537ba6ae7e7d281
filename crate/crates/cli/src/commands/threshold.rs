use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use anyhow::{bail, Result};
use serde_json::json;
use stirap::analysis::{self, ThresholdEstimate};
use stirap::model::AbsorptionSite;
use stirap::sweep::{self, PnonadFrame};

use super::{model_config, resolve_integrator, Common, IntegratorArgs};
use crate::config::Resolver;
use crate::output::{RunManifest, Staged};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    Lz,
    Semianalytic,
    Initial,
}

impl FromStr for Method {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s.trim().to_ascii_lowercase().as_str() {
            "lz" => Ok(Method::Lz),
            "semianalytic" => Ok(Method::Semianalytic),
            "initial" => Ok(Method::Initial),
            other => Err(format!("unknown method '{other}' (lz, semianalytic or initial)")),
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Method::Lz => "lz",
            Method::Semianalytic => "semianalytic",
            Method::Initial => "initial",
        })
    }
}

#[derive(clap::Args, Debug)]
pub struct Args {
    /// lz, semianalytic or initial.
    #[arg(long)]
    pub method: Option<Method>,
    /// Coupling asymmetry a.
    #[arg(long)]
    pub a: Option<f64>,
    /// Device length L.
    #[arg(long = "L", visible_alias = "length")]
    pub length: Option<f64>,
    /// Semianalytic: use this per-state nonadiabatic probability.
    #[arg(long)]
    pub pnonad: Option<f64>,
    /// Semianalytic: measure the nonadiabatic probability at this absorption.
    #[arg(long)]
    pub measure_gamma: Option<f64>,
    /// Semianalytic: absorbing waveguide for the measurement [default: target].
    #[arg(long)]
    pub site: Option<AbsorptionSite>,
    /// Semianalytic: exact or reduced frame for the measurement [default: exact].
    #[arg(long)]
    pub frame: Option<PnonadFrame>,
    #[command(flatten)]
    pub integrator: IntegratorArgs,
}

pub fn run(args: &Args, common: &Common) -> Result<()> {
    let started = Instant::now();
    let mut r = Resolver::load("threshold", common.config.as_deref())?;
    let method = r.require("method", args.method)?;
    let length = r.require("L", args.length)?;
    let mut extra = serde_json::Map::new();
    let (est, stats): (ThresholdEstimate, Option<serde_json::Value>) = match method {
        Method::Lz => (analysis::gamma_cr_lz(r.require("a", args.a)?, length)?, None),
        Method::Initial => (analysis::gamma_cr_initial(r.require("a", args.a)?, length)?, None),
        Method::Semianalytic => {
            let pnonad = r.optional("pnonad", args.pnonad)?;
            let measure = r.optional("measure-gamma", args.measure_gamma)?;
            match (pnonad, measure) {
                (Some(p), None) => {
                    let mut est = analysis::gamma_cr_from_pnonad(p, length)?;
                    est.inputs.a = r.optional("a", args.a)?;
                    (est, None)
                }
                (None, Some(g)) => {
                    let a = r.require("a", args.a)?;
                    let site = r.get("site", args.site, AbsorptionSite::Target)?;
                    let frame = r.get("frame", args.frame, PnonadFrame::Exact)?;
                    let settings = resolve_integrator(&mut r, &args.integrator, 2)?;
                    let base = model_config(a, length, 0.0, site)?;
                    let est = sweep::semianalytic_threshold(&base, g, frame, &settings)?;
                    extra.insert("measure_gamma".into(), json!(g));
                    extra.insert("site".into(), json!(site));
                    extra.insert("frame".into(), json!(frame));
                    (est, Some(json!(settings)))
                }
                (Some(_), Some(_)) => bail!("give either --pnonad or --measure-gamma, not both"),
                (None, None) => bail!("--method semianalytic needs --pnonad or --measure-gamma"),
            }
        }
    };
    r.finish()?;

    let mut value = serde_json::to_value(est)?;
    if let Some(inputs) = value.get_mut("inputs").and_then(|v| v.as_object_mut()) {
        inputs.extend(extra);
    }
    let line = serde_json::to_string(&value)?;
    let mut manifest = RunManifest::new("threshold", r.echo(), r.source.as_deref(), started);
    manifest.integrator = stats;
    manifest.write(&common.manifest_path("threshold"), Staged::default(), &[])?;
    println!("{line}");
    Ok(())
}
