use std::path::PathBuf;
use std::time::Instant;

use anyhow::{Context, Result};
use serde_json::json;
use stirap::model::AbsorptionSite;
use stirap::propagate::InitialState;
use stirap::sweep::{self, BoundaryTable, GridRange, PhaseDiagram, PnonadFrame, SweepControl, SweepOutputs, SweepSpec};

use super::{resolve_integrator, resolve_threads, Common, IntegratorArgs};
use crate::config::{FloatList, Resolver};
use crate::output::{self, Csv, RunManifest, Staged};

pub const BOUNDARY_HEADER: [&str; 6] =
    ["L", "gamma_cr", "width", "gamma_cr_lz", "gamma_cr_semianalytic", "gamma_cr_initial"];

#[derive(clap::Args, Debug)]
pub struct Args {
    /// Coupling asymmetries, comma separated [default: 5].
    #[arg(long)]
    pub a: Option<FloatList>,
    /// Absorbing waveguide [default: target].
    #[arg(long)]
    pub site: Option<AbsorptionSite>,
    #[arg(long = "L-min")]
    pub l_min: Option<f64>,
    #[arg(long = "L-max")]
    pub l_max: Option<f64>,
    #[arg(long = "L-count")]
    pub l_count: Option<usize>,
    #[arg(long)]
    pub gamma_min: Option<f64>,
    #[arg(long)]
    pub gamma_max: Option<f64>,
    #[arg(long)]
    pub gamma_count: Option<usize>,
    /// Launch state: basis3 or dark [default: dark].
    #[arg(long)]
    pub initial: Option<InitialState>,
    #[command(flatten)]
    pub integrator: IntegratorArgs,
    /// Also write the per-state nonadiabatic probability at every point.
    #[arg(long)]
    pub record_pnonad: bool,
    /// Also write the final norm at every point.
    #[arg(long)]
    pub record_norms: bool,
    /// Refuse grids larger than this [default: 1000000].
    #[arg(long)]
    pub max_points: Option<usize>,
    /// Worker threads (overrides STIRAP_THREADS).
    #[arg(long)]
    pub threads: Option<usize>,
    /// Checkpoint directory [default: <out-dir>/checkpoints].
    #[arg(long)]
    pub checkpoint_dir: Option<String>,
    /// Continue from the checkpoints of an interrupted run.
    #[arg(long)]
    pub resume: bool,
    /// Frame for the semianalytic boundary: exact or reduced [default: exact].
    #[arg(long)]
    pub frame: Option<PnonadFrame>,
    /// Skip boundary extraction.
    #[arg(long)]
    pub no_boundary: bool,
}

fn resolve_spec(r: &mut Resolver, args: &Args) -> Result<SweepSpec> {
    let site = r.get("site", args.site, AbsorptionSite::Target)?;
    let a_values = r.get("a", args.a.clone(), FloatList(vec![5.0]))?.0;
    let d = match site {
        AbsorptionSite::Initial => SweepSpec::initial_default(a_values[0]),
        _ => SweepSpec { site, ..SweepSpec::target_default(a_values[0]) },
    };
    let lengths = GridRange::new(
        r.get("L-min", args.l_min, d.lengths.min)?,
        r.get("L-max", args.l_max, d.lengths.max)?,
        r.get("L-count", args.l_count, d.lengths.count)?,
    );
    let gammas = GridRange::new(
        r.get("gamma-min", args.gamma_min, d.gammas.min)?,
        r.get("gamma-max", args.gamma_max, d.gammas.max)?,
        r.get("gamma-count", args.gamma_count, d.gammas.count)?,
    );
    let initial = r.get("initial", args.initial, d.initial)?;
    let settings = resolve_integrator(r, &args.integrator, d.settings.sample_count)?;
    let outputs = SweepOutputs {
        p_nonad: r.switch("record-pnonad", args.record_pnonad)?,
        norms: r.switch("record-norms", args.record_norms)?,
    };
    let max_points = r.get("max-points", args.max_points, d.max_points)?;
    let spec = SweepSpec { a_values, lengths, gammas, site, initial, settings, outputs, max_points };
    spec.validate()?;
    Ok(spec)
}

fn boundary_csv(table: &BoundaryTable) -> String {
    let mut csv = Csv::new(&BOUNDARY_HEADER);
    for row in &table.rows {
        let (g, w) = row.numeric.map_or((f64::NAN, f64::NAN), |t| (t.gamma_cr, t.width));
        csv.row(&[
            row.length,
            g,
            w,
            row.lz.unwrap_or(f64::NAN),
            row.semianalytic.unwrap_or(f64::NAN),
            row.initial.unwrap_or(f64::NAN),
        ]);
    }
    csv.into_string()
}

fn slice_stats(d: &PhaseDiagram) -> serde_json::Value {
    json!({
        "a": d.a,
        "points": d.values.len(),
        "holes": d.holes,
        "steps_total": d.steps.iter().sum::<u64>(),
        "steps_max": d.steps.iter().copied().max().unwrap_or(0),
        "error_estimate_max": d.error_estimates.iter().copied().filter(|x| x.is_finite()).fold(0.0, f64::max),
    })
}

pub fn run(args: &Args, common: &Common) -> Result<()> {
    let started = Instant::now();
    let mut r = Resolver::load("sweep", common.config.as_deref())?;
    let spec = resolve_spec(&mut r, args)?;
    let threads = resolve_threads(&mut r, args.threads)?;
    let checkpoint_dir: PathBuf = r
        .optional::<String>("checkpoint-dir", args.checkpoint_dir.clone())?
        .map(PathBuf::from)
        .unwrap_or_else(|| common.out_dir.join("checkpoints"));
    let resume = r.switch("resume", args.resume)?;
    let frame = r.get("frame", args.frame, PnonadFrame::Exact)?;
    let boundary = r.get("boundary", args.no_boundary.then_some(false), true)?;
    r.finish()?;

    let control = SweepControl { threads, checkpoint_dir: Some(checkpoint_dir.clone()), resume };
    let diagrams = sweep::run_sweep_with(&spec, &control).context("sweep failed")?;

    let mut staged = Staged::default();
    let mut stats = Vec::new();
    for (ai, d) in diagrams.iter().enumerate() {
        let dir = &common.out_dir;
        staged.add(&dir.join(format!("matrix_a{ai}.txt")), output::matrix(&d.lengths, &d.gammas, &d.values).as_bytes())?;
        if let Some(p) = &d.p_nonad {
            staged.add(&dir.join(format!("pnonad_a{ai}.txt")), output::matrix(&d.lengths, &d.gammas, p).as_bytes())?;
        }
        if let Some(n) = &d.norms {
            staged.add(&dir.join(format!("norms_a{ai}.txt")), output::matrix(&d.lengths, &d.gammas, n).as_bytes())?;
        }
        let mut s = slice_stats(d);
        if boundary {
            let table = sweep::extract_boundary(d, frame)?;
            staged.add(&dir.join(format!("boundary_a{ai}.csv")), boundary_csv(&table).as_bytes())?;
            s["boundary_rows_without_threshold"] = json!(table.omitted);
        }
        stats.push(s);
    }

    let mut manifest = RunManifest::new("sweep", r.echo(), r.source.as_deref(), started);
    if resume {
        for ai in 0..spec.a_values.len() {
            manifest.inputs.push(sweep::checkpoint_path(&checkpoint_dir, ai).display().to_string());
        }
    }
    manifest.integrator = Some(json!({ "slices": stats }));
    let checkpoints: Vec<PathBuf> =
        (0..spec.a_values.len()).map(|ai| sweep::checkpoint_path(&checkpoint_dir, ai)).collect();
    manifest.write(&common.manifest_path("sweep"), staged, &checkpoints)
}
