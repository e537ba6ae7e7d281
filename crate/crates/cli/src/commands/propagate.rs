use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use anyhow::Result;
use num_complex::Complex64;
use serde::Serialize;
use stirap::analysis;
use stirap::model::{c_dot, AbsorptionSite, State3};
use stirap::propagate::{self, Coeffs, InitialState, ReducedVariant, Trajectory};

use super::{resolve_integrator, resolve_model, Common, IntegratorArgs, ModelArgs};
use crate::config::Resolver;
use crate::output::{Csv, RunManifest, Staged};

pub const HEADER: [&str; 11] = [
    "z",
    "re_psi1",
    "im_psi1",
    "re_psi2",
    "im_psi2",
    "re_psi3",
    "im_psi3",
    "norm2",
    "abs2_a_minus",
    "abs2_a_0",
    "abs2_a_plus",
];

/// Basis the equations of motion are solved in.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Frame {
    /// Waveguide amplitudes; coefficients by projection on the exact
    /// eigenvectors.
    Bare,
    /// Exact non-Hermitian instantaneous eigenbasis.
    Adiabatic,
    /// Lossless eigenbasis with first-order decay rates.
    Reduced,
}

impl FromStr for Frame {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s.trim().to_ascii_lowercase().as_str() {
            "bare" => Ok(Frame::Bare),
            "adiabatic" | "exact" => Ok(Frame::Adiabatic),
            "reduced" => Ok(Frame::Reduced),
            other => Err(format!("unknown frame '{other}' (bare, adiabatic or reduced)")),
        }
    }
}

impl fmt::Display for Frame {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Frame::Bare => "bare",
            Frame::Adiabatic => "adiabatic",
            Frame::Reduced => "reduced",
        })
    }
}

#[derive(clap::Args, Debug)]
pub struct Args {
    #[command(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    pub integrator: IntegratorArgs,
    /// Launch state: basis3 or dark [default: dark].
    #[arg(long)]
    pub initial: Option<InitialState>,
    /// bare, adiabatic or reduced [default: bare].
    #[arg(long)]
    pub frame: Option<Frame>,
    /// Trajectory samples on [0, L] [default: 201].
    #[arg(long)]
    pub samples: Option<usize>,
}

#[derive(Debug, Serialize)]
pub struct Summary {
    pub a: f64,
    #[serde(rename = "L")]
    pub length: f64,
    pub gamma: f64,
    pub site: AbsorptionSite,
    pub initial: InitialState,
    pub frame: String,
    #[serde(rename = "P")]
    pub p: f64,
    #[serde(rename = "P_nonad")]
    pub p_nonad: f64,
    pub final_norm: f64,
    pub steps_accepted: usize,
    pub steps_rejected: usize,
    pub evaluations: usize,
}

fn unit3() -> State3 {
    State3::new(Complex64::new(0.0, 0.0), Complex64::new(0.0, 0.0), Complex64::new(1.0, 0.0))
}

fn dark_coeffs() -> Coeffs {
    [Complex64::new(0.0, 0.0), Complex64::new(1.0, 0.0), Complex64::new(0.0, 0.0)]
}

pub fn run(args: &Args, common: &Common) -> Result<()> {
    let started = Instant::now();
    let mut r = Resolver::load("propagate", common.config.as_deref())?;
    let cfg = resolve_model(&mut r, &args.model)?;
    let initial = r.get("initial", args.initial, InitialState::Dark)?;
    let frame = r.get("frame", args.frame, Frame::Bare)?;
    let samples = r.get("samples", args.samples, 201usize)?;
    let settings = resolve_integrator(&mut r, &args.integrator, samples)?;
    r.finish()?;

    let traj: Trajectory = match frame {
        Frame::Bare => {
            let psi0 = propagate::initial_state(&cfg, initial)?;
            let bare = propagate::integrate_bare(&cfg, &psi0, &settings)?;
            propagate::project_onto(&bare, &propagate::frame_path(&cfg)?)?
        }
        Frame::Adiabatic => {
            let path = propagate::frame_path(&cfg)?;
            let a0 = match initial {
                InitialState::Dark => dark_coeffs(),
                InitialState::Basis3 => [0, 1, 2].map(|j| c_dot(&path.spectra[0].vectors[j], &unit3())),
            };
            propagate::integrate_adiabatic_exact_on(&path, a0, &settings)?
        }
        Frame::Reduced => {
            let variant = ReducedVariant::for_config(&cfg)?;
            let a0 = match initial {
                InitialState::Dark => dark_coeffs(),
                InitialState::Basis3 => {
                    let f = propagate::reduced_frame(0.0, &cfg);
                    [0, 1, 2].map(|j| c_dot(&f[j], &unit3()))
                }
            };
            propagate::integrate_reduced_from(&cfg, variant, a0, &settings)?
        }
    };

    let coeffs = traj.coeffs.as_ref().expect("every frame records coefficients");
    let mut csv = Csv::new(&HEADER);
    for ((&z, psi), (a, &n)) in traj.zs.iter().zip(&traj.states).zip(coeffs.iter().zip(&traj.norms)) {
        csv.row(&[
            z,
            psi[0].re,
            psi[0].im,
            psi[1].re,
            psi[1].im,
            psi[2].re,
            psi[2].im,
            n,
            a[0].norm_sqr(),
            a[1].norm_sqr(),
            a[2].norm_sqr(),
        ]);
    }
    let last = traj.final_coeffs().expect("every frame records coefficients");
    let summary = Summary {
        a: cfg.a,
        length: cfg.length,
        gamma: cfg.gamma,
        site: cfg.site,
        initial,
        frame: frame.to_string(),
        p: analysis::transfer_probability(traj.final_state())?,
        p_nonad: analysis::nonadiabatic_probability(last),
        final_norm: traj.final_norm(),
        steps_accepted: traj.stats.accepted,
        steps_rejected: traj.stats.rejected,
        evaluations: traj.stats.evaluations,
    };
    let line = serde_json::to_string(&summary)?;

    let mut staged = Staged::default();
    staged.add(&common.out_dir.join("trajectory.csv"), csv.into_string().as_bytes())?;
    staged.add(&common.out_dir.join("summary.json"), format!("{line}\n").as_bytes())?;
    let mut manifest = RunManifest::new("propagate", r.echo(), r.source.as_deref(), started);
    manifest.integrator = Some(serde_json::to_value(traj.stats)?);
    manifest.write(&common.manifest_path("propagate"), staged, &[])?;
    println!("{line}");
    Ok(())
}
