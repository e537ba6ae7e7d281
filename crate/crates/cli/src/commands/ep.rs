use std::time::Instant;

use anyhow::Result;
use num_complex::Complex64;
use serde::Serialize;
use stirap::eigen;
use stirap::model::{self, ModelConfig};

use super::Common;
use crate::config::{ComplexArg, IntRange, Resolver};
use crate::output::{RunManifest, Staged};

#[derive(clap::Args, Debug)]
pub struct Args {
    /// Coupling asymmetry a (must be positive).
    #[arg(long)]
    pub a: Option<f64>,
    /// Device length L.
    #[arg(long = "L", visible_alias = "length")]
    pub length: Option<f64>,
    /// Branch indices, inclusive, as lo..hi [default: 0..0].
    #[arg(long, allow_hyphen_values = true)]
    pub n_range: Option<IntRange>,
    /// Also report the residual at this complex z, given as re,im.
    #[arg(long, allow_hyphen_values = true)]
    pub probe_z: Option<ComplexArg>,
}

#[derive(Debug, Serialize)]
pub struct Point {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n: Option<i64>,
    pub z_re: f64,
    pub z_im: f64,
    /// Scale-free distance of `H(z)` from a triple eigenvalue.
    pub residual: f64,
    pub eigenvalue_spread: f64,
}

#[derive(Debug, Serialize)]
pub struct Report {
    pub a: f64,
    #[serde(rename = "L")]
    pub length: f64,
    pub points: Vec<Point>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub probe: Option<Point>,
}

fn point(cfg: &ModelConfig, n: Option<i64>, z: Complex64) -> Point {
    let h = model::hamiltonian(z, cfg);
    Point {
        n,
        z_re: z.re,
        z_im: z.im,
        residual: eigen::coalescence_residual(&h),
        eigenvalue_spread: eigen::eigenvalue_spread(&h),
    }
}

pub fn run(args: &Args, common: &Common) -> Result<()> {
    let started = Instant::now();
    let mut r = Resolver::load("ep", common.config.as_deref())?;
    let a = r.require("a", args.a)?;
    let length = r.require("L", args.length)?;
    let range = r.get("n-range", args.n_range, IntRange(0, 0))?;
    let probe = r.optional("probe-z", args.probe_z)?;
    r.finish()?;

    let cfg = ModelConfig::hermitian(a, length)?;
    let points = model::ep3_locations(&cfg, range.0, range.1)?
        .into_iter()
        .map(|ep| point(&cfg, Some(ep.n), ep.z))
        .collect();
    let report = Report {
        a,
        length,
        points,
        probe: probe.map(|p| point(&cfg, None, Complex64::new(p.0, p.1))),
    };
    let line = serde_json::to_string(&report)?;
    let manifest = RunManifest::new("ep", r.echo(), r.source.as_deref(), started);
    manifest.write(&common.manifest_path("ep"), Staged::default(), &[])?;
    println!("{line}");
    Ok(())
}
