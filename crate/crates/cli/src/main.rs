//! `stirap`: spectra, propagation, phase diagrams and thresholds for the
//! absorbing three-waveguide coupler.

mod commands;
mod config;
mod output;

use std::process::ExitCode;

use clap::{Parser, Subcommand};

use commands::{ep, propagate, spectrum, sweep, threshold, Common};

#[derive(Parser, Debug)]
#[command(name = "stirap", version, about, propagate_version = true)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Exact and first-order spectrum of H(z) along the device.
    Spectrum {
        #[command(flatten)]
        args: spectrum::Args,
        #[command(flatten)]
        common: Common,
    },
    /// Propagate one configuration and dump the trajectory.
    Propagate {
        #[command(flatten)]
        args: propagate::Args,
        #[command(flatten)]
        common: Common,
    },
    /// Transfer probability over an (L, gamma) grid, with the extracted
    /// boundary.
    Sweep {
        #[command(flatten)]
        args: sweep::Args,
        #[command(flatten)]
        common: Common,
    },
    /// Critical absorption from one of the closed-form estimates.
    Threshold {
        #[command(flatten)]
        args: threshold::Args,
        #[command(flatten)]
        common: Common,
    },
    /// Triple exceptional points of the lossless Hamiltonian at complex z.
    Ep {
        #[command(flatten)]
        args: ep::Args,
        #[command(flatten)]
        common: Common,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Spectrum { args, common } => spectrum::run(&args, &common),
        Command::Propagate { args, common } => propagate::run(&args, &common),
        Command::Sweep { args, common } => sweep::run(&args, &common),
        Command::Threshold { args, common } => threshold::run(&args, &common),
        Command::Ep { args, common } => ep::run(&args, &common),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("stirap: error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
