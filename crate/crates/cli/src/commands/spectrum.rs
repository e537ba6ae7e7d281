use std::time::Instant;

use anyhow::Result;
use stirap::eigen;
use stirap::model::{self, Level};

use super::{resolve_model, Common, ModelArgs};
use crate::config::Resolver;
use crate::output::{Csv, RunManifest, Staged};

pub const HEADER: [&str; 13] = [
    "z_over_L",
    "re_E_minus",
    "re_E_0",
    "re_E_plus",
    "im_E_minus",
    "im_E_0",
    "im_E_plus",
    "pert_im_E_minus",
    "pert_im_E_0",
    "pert_im_E_plus",
    "dark_abs2_1",
    "dark_abs2_2",
    "dark_abs2_3",
];

#[derive(clap::Args, Debug)]
pub struct Args {
    #[command(flatten)]
    pub model: ModelArgs,
    /// Number of z points on [0, L] [default: 401].
    #[arg(long)]
    pub samples: Option<usize>,
}

pub fn run(args: &Args, common: &Common) -> Result<()> {
    let started = Instant::now();
    let mut r = Resolver::load("spectrum", common.config.as_deref())?;
    let cfg = resolve_model(&mut r, &args.model)?;
    let samples = r.get("samples", args.samples, 401usize)?;
    r.finish()?;
    if samples < 2 {
        anyhow::bail!("samples must be at least 2");
    }

    let zs = eigen::uniform_grid(cfg.length, samples);
    let path = eigen::align_path(&cfg, &zs)?;
    let mut csv = Csv::new(&HEADER);
    for (&z, s) in zs.iter().zip(&path.spectra) {
        let e = s.energies;
        let pert = model::perturbative_imag_shifts(z, &cfg);
        let dark = s.vector(Level::Zero);
        csv.row(&[
            z / cfg.length,
            e[0].re,
            e[1].re,
            e[2].re,
            e[0].im,
            e[1].im,
            e[2].im,
            pert[0],
            pert[1],
            pert[2],
            dark[0].norm_sqr(),
            dark[1].norm_sqr(),
            dark[2].norm_sqr(),
        ]);
    }

    let mut staged = Staged::default();
    staged.add(&common.out_dir.join("spectrum.csv"), csv.into_string().as_bytes())?;
    let manifest = RunManifest::new("spectrum", r.echo(), r.source.as_deref(), started);
    manifest.write(&common.manifest_path("spectrum"), staged, &[])
}
