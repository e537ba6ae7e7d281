//! Phase diagrams of the transfer probability over `(L, γ)` grids, scans of
//! the nonadiabatic probability and boundary extraction.

use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::mpsc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analysis::{self, ThresholdEstimate};
use crate::eigen;
use crate::error::{Error, Result};
use crate::model::{AbsorptionSite, ModelConfig, State3};
use crate::propagate::{self, IntegratorSettings, InitialState, ReducedVariant};

/// Largest tolerated fraction of failed grid points.
pub const MAX_HOLE_FRACTION: f64 = 0.01;

/// Absorption at which the semianalytic boundary measures `P_nonad`.
pub const SEMIANALYTIC_GAMMA: f64 = 0.2;

pub const CHECKPOINT_HEADER: &str = "li,gi,L,gamma,P,flags,P_nonad,norm,steps,error";

/// Linear grid `min, ..., max` with `count` points.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridRange {
    pub min: f64,
    pub max: f64,
    pub count: usize,
}

impl GridRange {
    pub fn new(min: f64, max: f64, count: usize) -> Self {
        GridRange { min, max, count }
    }

    /// A one-point grid.
    pub fn single(value: f64) -> Self {
        GridRange { min: value, max: value, count: 1 }
    }

    /// `count >= 2` with `min < max`, or a single point with `min == max`.
    pub fn validate(&self, name: &str) -> Result<()> {
        let finite = self.min.is_finite() && self.max.is_finite();
        let ok = finite
            && match self.count {
                0 => false,
                1 => self.min == self.max,
                _ => self.min < self.max,
            };
        if !ok {
            return Err(Error::InvalidConfig(format!(
                "{name} grid needs count >= 2 with min < max, or count 1 with min == max (got {} .. {} x {})",
                self.min, self.max, self.count
            )));
        }
        Ok(())
    }

    pub fn values(&self) -> Vec<f64> {
        if self.count == 1 {
            return vec![self.min];
        }
        let step = (self.max - self.min) / (self.count - 1) as f64;
        (0..self.count)
            .map(|i| if i + 1 == self.count { self.max } else { self.min + step * i as f64 })
            .collect()
    }
}

/// Per-point quantities recorded besides the transfer probability.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub struct SweepOutputs {
    pub p_nonad: bool,
    pub norms: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSpec {
    pub a_values: Vec<f64>,
    #[serde(rename = "L")]
    pub lengths: GridRange,
    pub gammas: GridRange,
    pub site: AbsorptionSite,
    pub initial: InitialState,
    pub settings: IntegratorSettings,
    pub outputs: SweepOutputs,
    pub max_points: usize,
}

impl SweepSpec {
    /// Absorption in waveguide 1: `L ∈ [5, 60] × 120`, `γ ∈ [0, 0.6] × 120`.
    pub fn target_default(a: f64) -> Self {
        SweepSpec {
            a_values: vec![a],
            lengths: GridRange::new(5.0, 60.0, 120),
            gammas: GridRange::new(0.0, 0.6, 120),
            site: AbsorptionSite::Target,
            initial: InitialState::Dark,
            settings: IntegratorSettings::default().with_samples(2),
            outputs: SweepOutputs::default(),
            max_points: 1_000_000,
        }
    }

    /// Absorption in waveguide 3: `L ∈ [10, 120] × 120`, `γ ∈ [0, 1.5] × 150`.
    pub fn initial_default(a: f64) -> Self {
        SweepSpec {
            lengths: GridRange::new(10.0, 120.0, 120),
            gammas: GridRange::new(0.0, 1.5, 150),
            site: AbsorptionSite::Initial,
            ..SweepSpec::target_default(a)
        }
    }

    pub fn points_per_slice(&self) -> usize {
        self.lengths.count * self.gammas.count
    }

    pub fn total_points(&self) -> usize {
        self.points_per_slice() * self.a_values.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.a_values.is_empty() {
            return Err(Error::InvalidConfig("sweep needs at least one value of a".into()));
        }
        self.lengths.validate("L")?;
        self.gammas.validate("gamma")?;
        if self.lengths.min <= 0.0 {
            return Err(Error::InvalidConfig(format!("L grid must be positive, starts at {}", self.lengths.min)));
        }
        if self.gammas.min < 0.0 {
            return Err(Error::InvalidConfig(format!("gamma grid must be non-negative, starts at {}", self.gammas.min)));
        }
        for &a in &self.a_values {
            ModelConfig::new(a, self.lengths.min, self.gammas.min, self.site)?;
        }
        self.settings.validate()?;
        if self.total_points() > self.max_points {
            return Err(Error::InvalidConfig(format!(
                "sweep has {} points, above the cap of {}",
                self.total_points(),
                self.max_points
            )));
        }
        Ok(())
    }
}

/// Everything recorded at one grid point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PointResult {
    pub p: f64,
    /// `NaN` unless requested.
    pub p_nonad: f64,
    /// `NaN` unless requested.
    pub norm: f64,
    pub steps: u64,
    /// Sum of the accepted local error estimates.
    pub error_estimate: f64,
}

/// `|a_j(L)|²` of a final bare state in the exact eigenbasis at `z = L`.
/// Moduli do not depend on the eigenvector sign convention.
pub fn final_adiabatic_populations(cfg: &ModelConfig, state: &State3) -> Result<[f64; 3]> {
    let s = eigen::spectrum_at_real(cfg.length, cfg)?;
    Ok([0, 1, 2].map(|j| s.vectors[j].dot(state).norm_sqr()))
}

/// Propagate one configuration in the bare basis.
pub fn evaluate_point(
    cfg: &ModelConfig,
    initial: InitialState,
    settings: &IntegratorSettings,
    outputs: SweepOutputs,
) -> Result<PointResult> {
    let settings = settings.with_samples(2);
    let y0 = propagate::initial_state(cfg, initial)?;
    let traj = propagate::integrate_bare(cfg, &y0, &settings)?;
    let last = traj.final_state();
    let p = analysis::transfer_probability(last)?;
    let p_nonad = if outputs.p_nonad {
        let pops = final_adiabatic_populations(cfg, last)?;
        0.5 * (pops[0] + pops[2])
    } else {
        f64::NAN
    };
    let norm = if outputs.norms { traj.final_norm() } else { f64::NAN };
    Ok(PointResult { p, p_nonad, norm, steps: traj.stats.accepted as u64, error_estimate: traj.stats.error_sum })
}

/// Transfer probabilities of one `a` slice, row-major in `(L index, γ index)`.
/// Failed points are `NaN` and counted in `holes`.
#[derive(Debug, Clone, Serialize)]
pub struct PhaseDiagram {
    pub spec: SweepSpec,
    pub a: f64,
    #[serde(rename = "L")]
    pub lengths: Vec<f64>,
    pub gammas: Vec<f64>,
    pub values: Vec<f64>,
    pub p_nonad: Option<Vec<f64>>,
    pub norms: Option<Vec<f64>>,
    pub steps: Vec<u64>,
    pub error_estimates: Vec<f64>,
    pub holes: usize,
}

impl PhaseDiagram {
    pub fn index(&self, li: usize, gi: usize) -> usize {
        li * self.gammas.len() + gi
    }

    pub fn get(&self, li: usize, gi: usize) -> f64 {
        self.values[self.index(li, gi)]
    }

    /// `P(γ)` at the `li`-th length.
    pub fn row(&self, li: usize) -> &[f64] {
        let n = self.gammas.len();
        &self.values[li * n..(li + 1) * n]
    }

    pub fn hole_fraction(&self) -> f64 {
        self.holes as f64 / self.values.len() as f64
    }

    pub fn config(&self, li: usize, gi: usize) -> ModelConfig {
        ModelConfig { a: self.a, length: self.lengths[li], gamma: self.gammas[gi], site: self.spec.site }
    }
}

/// Execution options that do not change the result.
#[derive(Debug, Clone, Default)]
pub struct SweepControl {
    /// Worker threads; `None` uses the global pool.
    pub threads: Option<usize>,
    /// Directory holding one checkpoint file per `a` slice.
    pub checkpoint_dir: Option<PathBuf>,
    /// Reuse points already present in the checkpoints.
    pub resume: bool,
}

pub fn checkpoint_path(dir: &Path, slice: usize) -> PathBuf {
    dir.join(format!("checkpoint_a{slice}.csv"))
}

#[derive(Debug, Clone, Copy)]
struct Entry {
    result: Option<PointResult>,
}

fn num(x: f64) -> String {
    if x.is_nan() { "nan".into() } else { format!("{x:.16e}") }
}

fn format_row(li: usize, gi: usize, l: f64, g: f64, entry: &Entry) -> String {
    match entry.result {
        Some(r) => format!(
            "{li},{gi},{l:.16e},{g:.16e},{},ok,{},{},{},{}\n",
            num(r.p),
            num(r.p_nonad),
            num(r.norm),
            r.steps,
            num(r.error_estimate)
        ),
        None => format!("{li},{gi},{l:.16e},{g:.16e},nan,hole,nan,nan,0,nan\n"),
    }
}

fn checkpoint_error(path: &Path, message: impl Into<String>) -> Error {
    Error::Checkpoint { path: path.to_path_buf(), message: message.into() }
}

/// Read the complete rows of a checkpoint. A truncated final line from an
/// interrupted write is ignored; rows whose axis values disagree with the
/// grid are rejected.
fn read_checkpoint(path: &Path, lengths: &[f64], gammas: &[f64]) -> Result<HashMap<usize, Entry>> {
    let mut done = HashMap::new();
    let file = match File::open(path) {
        Ok(f) => f,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(done),
        Err(e) => return Err(e.into()),
    };
    let text: Vec<String> = BufReader::new(file).lines().collect::<std::io::Result<_>>()?;
    let complete = std::fs::read(path)?.ends_with(b"\n");
    for (n, line) in text.iter().enumerate() {
        if n == 0 {
            if line != CHECKPOINT_HEADER {
                return Err(checkpoint_error(path, "unexpected header"));
            }
            continue;
        }
        if n + 1 == text.len() && !complete {
            break;
        }
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 10 {
            return Err(checkpoint_error(path, format!("line {} has {} fields", n + 1, f.len())));
        }
        let bad = |what: &str| checkpoint_error(path, format!("line {}: bad {what}", n + 1));
        let li: usize = f[0].parse().map_err(|_| bad("li"))?;
        let gi: usize = f[1].parse().map_err(|_| bad("gi"))?;
        let l: f64 = f[2].parse().map_err(|_| bad("L"))?;
        let g: f64 = f[3].parse().map_err(|_| bad("gamma"))?;
        if li >= lengths.len() || gi >= gammas.len() || l != lengths[li] || g != gammas[gi] {
            return Err(checkpoint_error(path, format!("line {} does not match the sweep grid", n + 1)));
        }
        let entry = match f[5] {
            "ok" => Entry {
                result: Some(PointResult {
                    p: f[4].parse().map_err(|_| bad("P"))?,
                    p_nonad: f[6].parse().map_err(|_| bad("P_nonad"))?,
                    norm: f[7].parse().map_err(|_| bad("norm"))?,
                    steps: f[8].parse().map_err(|_| bad("steps"))?,
                    error_estimate: f[9].parse().map_err(|_| bad("error"))?,
                }),
            },
            "hole" => Entry { result: None },
            _ => return Err(bad("flags")),
        };
        done.insert(li * gammas.len() + gi, entry);
    }
    Ok(done)
}

/// Open a checkpoint for appending, rewriting it from `done` so that a
/// truncated trailing line never precedes new rows.
fn open_checkpoint(path: &Path, lengths: &[f64], gammas: &[f64], done: &HashMap<usize, Entry>) -> Result<BufWriter<File>> {
    let mut keys: Vec<usize> = done.keys().copied().collect();
    keys.sort_unstable();
    let tmp = path.with_extension("csv.tmp");
    {
        let mut w = BufWriter::new(File::create(&tmp)?);
        w.write_all(CHECKPOINT_HEADER.as_bytes())?;
        w.write_all(b"\n")?;
        for k in keys {
            let (li, gi) = (k / gammas.len(), k % gammas.len());
            w.write_all(format_row(li, gi, lengths[li], gammas[gi], &done[&k]).as_bytes())?;
        }
        w.flush()?;
        w.get_ref().sync_all()?;
    }
    std::fs::rename(&tmp, path)?;
    Ok(BufWriter::new(OpenOptions::new().append(true).open(path)?))
}

fn run_slice(spec: &SweepSpec, a: f64, checkpoint: Option<&Path>, resume: bool) -> Result<PhaseDiagram> {
    let lengths = spec.lengths.values();
    let gammas = spec.gammas.values();
    let total = lengths.len() * gammas.len();
    let mut done = match (checkpoint, resume) {
        (Some(path), true) => read_checkpoint(path, &lengths, &gammas)?,
        _ => HashMap::new(),
    };
    let pending: Vec<usize> = (0..total).filter(|k| !done.contains_key(k)).collect();

    let (tx, rx) = mpsc::channel::<(usize, Entry)>();
    let writer = match checkpoint {
        Some(path) => {
            let mut out = open_checkpoint(path, &lengths, &gammas, &done)?;
            let (ls, gs) = (lengths.clone(), gammas.clone());
            let row_len = gammas.len();
            Some(std::thread::spawn(move || -> std::io::Result<()> {
                let mut since_flush = 0;
                for (k, entry) in rx {
                    let (li, gi) = (k / row_len, k % row_len);
                    out.write_all(format_row(li, gi, ls[li], gs[gi], &entry).as_bytes())?;
                    since_flush += 1;
                    if since_flush >= row_len {
                        out.flush()?;
                        since_flush = 0;
                    }
                }
                out.flush()
            }))
        }
        None => {
            drop(rx);
            None
        }
    };

    let computed: Vec<(usize, Entry)> = pending
        .par_iter()
        .map_with(tx, |tx, &k| {
            let (li, gi) = (k / gammas.len(), k % gammas.len());
            let cfg = ModelConfig { a, length: lengths[li], gamma: gammas[gi], site: spec.site };
            let entry = Entry { result: evaluate_point(&cfg, spec.initial, &spec.settings, spec.outputs).ok() };
            // A closed channel only means no checkpoint is being written.
            let _ = tx.send((k, entry));
            (k, entry)
        })
        .collect();

    if let Some(handle) = writer {
        let path = checkpoint.expect("writer implies a checkpoint path");
        handle
            .join()
            .map_err(|_| checkpoint_error(path, "writer thread panicked"))?
            .map_err(|e| checkpoint_error(path, e.to_string()))?;
    }
    done.extend(computed);

    let mut values = vec![f64::NAN; total];
    let mut p_nonad = vec![f64::NAN; total];
    let mut norms = vec![f64::NAN; total];
    let mut steps = vec![0u64; total];
    let mut error_estimates = vec![f64::NAN; total];
    let mut holes = 0;
    for k in 0..total {
        match done[&k].result {
            Some(r) => {
                values[k] = r.p;
                p_nonad[k] = r.p_nonad;
                norms[k] = r.norm;
                steps[k] = r.steps;
                error_estimates[k] = r.error_estimate;
            }
            None => holes += 1,
        }
    }
    if holes as f64 > MAX_HOLE_FRACTION * total as f64 {
        return Err(Error::TooManyHoles { holes, total });
    }
    let mut slice_spec = spec.clone();
    slice_spec.a_values = vec![a];
    Ok(PhaseDiagram {
        spec: slice_spec,
        a,
        lengths,
        gammas,
        values,
        p_nonad: spec.outputs.p_nonad.then_some(p_nonad),
        norms: spec.outputs.norms.then_some(norms),
        steps,
        error_estimates,
        holes,
    })
}

/// One diagram per value of `a`. Every point is an independent pure
/// computation, so the result does not depend on scheduling.
pub fn run_sweep(spec: &SweepSpec) -> Result<Vec<PhaseDiagram>> {
    run_sweep_with(spec, &SweepControl::default())
}

pub fn run_sweep_with(spec: &SweepSpec, control: &SweepControl) -> Result<Vec<PhaseDiagram>> {
    spec.validate()?;
    if let Some(dir) = &control.checkpoint_dir {
        std::fs::create_dir_all(dir)?;
    }
    let run = || -> Result<Vec<PhaseDiagram>> {
        spec.a_values
            .iter()
            .enumerate()
            .map(|(ai, &a)| {
                let path = control.checkpoint_dir.as_ref().map(|d| checkpoint_path(d, ai));
                run_slice(spec, a, path.as_deref(), control.resume)
            })
            .collect()
    };
    match control.threads {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| Error::InvalidConfig(format!("thread pool: {e}")))?
            .install(run),
        None => run(),
    }
}

/// Frame used to measure `P_nonad`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum PnonadFrame {
    /// Exact non-Hermitian eigenbasis.
    #[default]
    Exact,
    /// Hermitian eigenbasis with perturbative decay rates.
    Reduced,
}

impl std::str::FromStr for PnonadFrame {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "exact" | "adiabatic" => Ok(PnonadFrame::Exact),
            "reduced" => Ok(PnonadFrame::Reduced),
            other => Err(Error::InvalidConfig(format!("unknown frame '{other}'"))),
        }
    }
}

impl std::fmt::Display for PnonadFrame {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            PnonadFrame::Exact => "exact",
            PnonadFrame::Reduced => "reduced",
        })
    }
}

/// Per-state `P_nonad` at `z = L` from `a = (0, 1, 0)`.
pub fn measure_pnonad(cfg: &ModelConfig, frame: PnonadFrame, settings: &IntegratorSettings) -> Result<f64> {
    let settings = settings.with_samples(2);
    let one = num_complex::Complex64::new(1.0, 0.0);
    let zero = num_complex::Complex64::new(0.0, 0.0);
    let traj = match frame {
        PnonadFrame::Exact => propagate::integrate_adiabatic_exact(cfg, [zero, one, zero], &settings)?,
        PnonadFrame::Reduced => {
            let variant = ReducedVariant::for_config(cfg)?;
            propagate::integrate_reduced(cfg, variant, &settings)?
        }
    };
    let coeffs = traj.final_coeffs().expect("frame integrations record coefficients");
    Ok(analysis::nonadiabatic_probability(coeffs))
}

/// Threshold from `P_nonad` measured at absorption `measure_gamma`.
pub fn semianalytic_threshold(
    base: &ModelConfig,
    measure_gamma: f64,
    frame: PnonadFrame,
    settings: &IntegratorSettings,
) -> Result<ThresholdEstimate> {
    let cfg = base.with_gamma(measure_gamma);
    cfg.validate()?;
    let p = measure_pnonad(&cfg, frame, settings)?;
    let mut est = analysis::gamma_cr_from_pnonad(p, cfg.length)?;
    est.inputs.a = Some(cfg.a);
    Ok(est)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PnonadRow {
    #[serde(rename = "L")]
    pub length: f64,
    pub p_nonad: f64,
    pub p_nonad_summed: f64,
    pub lz: f64,
}

/// `P_nonad(L)` at fixed `a`, `γ` and site, with the Landau-Zener estimate
/// alongside.
pub fn scan_pnonad(
    a: f64,
    gamma: f64,
    lengths: &[f64],
    site: AbsorptionSite,
    frame: PnonadFrame,
    settings: &IntegratorSettings,
) -> Result<Vec<PnonadRow>> {
    lengths
        .par_iter()
        .map(|&l| {
            let cfg = ModelConfig::new(a, l, gamma, site)?;
            let settings = settings.with_samples(2);
            let one = num_complex::Complex64::new(1.0, 0.0);
            let zero = num_complex::Complex64::new(0.0, 0.0);
            let traj = match frame {
                PnonadFrame::Exact => propagate::integrate_adiabatic_exact(&cfg, [zero, one, zero], &settings)?,
                PnonadFrame::Reduced => {
                    propagate::integrate_reduced(&cfg, ReducedVariant::for_config(&cfg)?, &settings)?
                }
            };
            let c = traj.final_coeffs().expect("frame integrations record coefficients");
            Ok(PnonadRow {
                length: l,
                p_nonad: analysis::nonadiabatic_probability(c),
                p_nonad_summed: analysis::nonadiabatic_probability_summed(c),
                lz: analysis::lz_estimate(a, l)?,
            })
        })
        .collect()
}

/// One row of a boundary table. Analytic columns are `None` where the
/// estimate does not apply to the absorption site or has no solution.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BoundaryRow {
    #[serde(rename = "L")]
    pub length: f64,
    pub numeric: Option<ThresholdEstimate>,
    pub lz: Option<f64>,
    pub semianalytic: Option<f64>,
    pub initial: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct BoundaryTable {
    pub a: f64,
    pub site: AbsorptionSite,
    pub rows: Vec<BoundaryRow>,
    /// Lengths at which no numeric threshold could be extracted.
    pub omitted: usize,
}

/// Numeric threshold at every length of the diagram, with the analytic
/// curves that apply to its absorption site: Landau-Zener and semianalytic
/// for waveguide 1, the launch-waveguide formula for waveguide 3.
pub fn extract_boundary(diagram: &PhaseDiagram, frame: PnonadFrame) -> Result<BoundaryTable> {
    let site = diagram.spec.site;
    let settings = diagram.spec.settings;
    let rows: Vec<BoundaryRow> = diagram
        .lengths
        .par_iter()
        .map(|&l| -> Result<BoundaryRow> {
            let numeric = analysis::threshold_from_sweep(diagram, l).ok();
            let (mut lz, mut semianalytic, mut initial) = (None, None, None);
            match site {
                AbsorptionSite::Target => {
                    lz = analysis::gamma_cr_lz(diagram.a, l).ok().map(|t| t.gamma_cr);
                    let base = ModelConfig::new(diagram.a, l, 0.0, site)?;
                    semianalytic = match semianalytic_threshold(&base, SEMIANALYTIC_GAMMA, frame, &settings) {
                        Ok(t) => Some(t.gamma_cr),
                        Err(Error::NoThreshold(_)) => None,
                        Err(e) => return Err(e),
                    };
                }
                AbsorptionSite::Initial => {
                    initial = analysis::gamma_cr_initial(diagram.a, l).ok().map(|t| t.gamma_cr);
                }
                AbsorptionSite::None | AbsorptionSite::Center => {}
            }
            Ok(BoundaryRow { length: l, numeric, lz, semianalytic, initial })
        })
        .collect::<Result<_>>()?;
    let omitted = rows.iter().filter(|r| r.numeric.is_none()).count();
    Ok(BoundaryTable { a: diagram.a, site, rows, omitted })
}

/// 4-connected components of grid cells with `P > level` lying strictly
/// above the extracted boundary of their row. Rows without a boundary are
/// skipped. Returns the size of each component.
pub fn islands_above_boundary(diagram: &PhaseDiagram, table: &BoundaryTable, level: f64) -> Vec<usize> {
    let (nl, ng) = (diagram.lengths.len(), diagram.gammas.len());
    let mask: Vec<bool> = (0..nl * ng)
        .map(|k| {
            let (li, gi) = (k / ng, k % ng);
            match table.rows[li].numeric {
                Some(t) => diagram.gammas[gi] > t.gamma_cr && diagram.values[k] > level,
                None => false,
            }
        })
        .collect();
    let mut seen = vec![false; nl * ng];
    let mut sizes = Vec::new();
    for start in 0..nl * ng {
        if !mask[start] || seen[start] {
            continue;
        }
        seen[start] = true;
        let mut stack = vec![start];
        let mut size = 0;
        while let Some(k) = stack.pop() {
            size += 1;
            let (li, gi) = (k / ng, k % ng);
            let mut visit = |n: usize| {
                if mask[n] && !seen[n] {
                    seen[n] = true;
                    stack.push(n);
                }
            };
            if li > 0 {
                visit(k - ng);
            }
            if li + 1 < nl {
                visit(k + ng);
            }
            if gi > 0 {
                visit(k - 1);
            }
            if gi + 1 < ng {
                visit(k + 1);
            }
        }
        sizes.push(size);
    }
    sizes
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_spec() -> SweepSpec {
        SweepSpec {
            lengths: GridRange::new(10.0, 20.0, 3),
            gammas: GridRange::new(0.0, 0.4, 4),
            ..SweepSpec::target_default(5.0)
        }
    }

    #[test]
    fn grid_values() {
        assert_eq!(GridRange::new(0.0, 1.0, 3).values(), vec![0.0, 0.5, 1.0]);
        assert_eq!(GridRange::single(2.0).values(), vec![2.0]);
        let g = GridRange::new(5.0, 60.0, 120).values();
        assert_eq!(g.len(), 120);
        assert_eq!(*g.last().unwrap(), 60.0);
        assert!(GridRange::new(0.0, 1.0, 1).validate("x").is_err());
        assert!(GridRange::new(1.0, 0.0, 4).validate("x").is_err());
        assert!(GridRange::new(0.0, 1.0, 0).validate("x").is_err());
    }

    #[test]
    fn spec_validation() {
        assert!(SweepSpec::target_default(5.0).validate().is_ok());
        assert!(SweepSpec::initial_default(5.0).validate().is_ok());
        let mut s = small_spec();
        s.max_points = 5;
        assert!(s.validate().is_err());
        let mut s = small_spec();
        s.lengths = GridRange::new(0.0, 1.0, 2);
        assert!(s.validate().is_err());
        let mut s = small_spec();
        s.a_values.clear();
        assert!(s.validate().is_err());
    }

    #[test]
    fn single_point_sweep() {
        let spec = SweepSpec {
            lengths: GridRange::single(20.0),
            gammas: GridRange::single(0.0),
            ..SweepSpec::target_default(5.0)
        };
        let d = run_sweep(&spec).unwrap();
        assert_eq!(d.len(), 1);
        assert_eq!(d[0].values.len(), 1);
        assert!(d[0].values[0] > 0.99);
        assert_eq!(d[0].holes, 0);
    }

    #[test]
    fn parallelism_does_not_change_results() {
        let spec = small_spec();
        let one = run_sweep_with(&spec, &SweepControl { threads: Some(1), ..Default::default() }).unwrap();
        let four = run_sweep_with(&spec, &SweepControl { threads: Some(4), ..Default::default() }).unwrap();
        let bits = |d: &PhaseDiagram| d.values.iter().map(|v| v.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&one[0]), bits(&four[0]));
        assert!(one[0].values.iter().all(|p| (0.0..=1.0).contains(p)));
    }

    #[test]
    fn checkpoint_resume_matches_fresh_run() {
        let spec = small_spec();
        let fresh = run_sweep(&spec).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let control = SweepControl { threads: Some(2), checkpoint_dir: Some(dir.path().into()), resume: false };
        run_sweep_with(&spec, &control).unwrap();
        let path = checkpoint_path(dir.path(), 0);
        // Keep the header and five rows plus half a line, as after a kill.
        let text = std::fs::read_to_string(&path).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 13);
        let mut cut = lines[..6].join("\n");
        cut.push('\n');
        cut.push_str(&lines[6][..10]);
        std::fs::write(&path, cut).unwrap();
        let resumed = run_sweep_with(&spec, &SweepControl { resume: true, ..control }).unwrap();
        let bits = |d: &PhaseDiagram| d.values.iter().map(|v| v.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&fresh[0]), bits(&resumed[0]));
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(text.lines().count(), 13);
    }

    #[test]
    fn resume_rejects_foreign_checkpoint() {
        let dir = tempfile::tempdir().unwrap();
        let control = SweepControl { threads: None, checkpoint_dir: Some(dir.path().into()), resume: true };
        run_sweep_with(&small_spec(), &control).unwrap();
        let mut other = small_spec();
        other.gammas = GridRange::new(0.0, 0.5, 4);
        assert!(matches!(run_sweep_with(&other, &control), Err(Error::Checkpoint { .. })));
    }

    fn mark_hole(path: &Path, row: usize) {
        let text = std::fs::read_to_string(path).unwrap();
        let mut lines: Vec<String> = text.lines().map(String::from).collect();
        let f: Vec<&str> = lines[row].split(',').collect();
        lines[row] = format!("{},{},{},{},nan,hole,nan,nan,0,nan", f[0], f[1], f[2], f[3]);
        std::fs::write(path, lines.join("\n") + "\n").unwrap();
    }

    #[test]
    fn holes_are_counted() {
        let dir = tempfile::tempdir().unwrap();
        let control = SweepControl { threads: None, checkpoint_dir: Some(dir.path().into()), resume: true };
        let path = checkpoint_path(dir.path(), 0);

        let mut spec = small_spec();
        spec.lengths = GridRange::new(10.0, 12.0, 10);
        spec.gammas = GridRange::new(0.0, 0.1, 11);
        run_sweep_with(&spec, &control).unwrap();
        mark_hole(&path, 7);
        let d = run_sweep_with(&spec, &control).unwrap();
        assert_eq!(d[0].holes, 1);
        assert_eq!(d[0].values.iter().filter(|v| v.is_nan()).count(), 1);
        mark_hole(&path, 8);
        assert!(matches!(run_sweep_with(&spec, &control), Err(Error::TooManyHoles { holes: 2, total: 110 })));
    }

    #[test]
    fn point_outputs() {
        let cfg = ModelConfig::new(5.0, 20.0, 0.0, AbsorptionSite::Target).unwrap();
        let s = IntegratorSettings::default();
        let r = evaluate_point(&cfg, InitialState::Dark, &s, SweepOutputs { p_nonad: true, norms: true }).unwrap();
        assert!((r.norm - 1.0).abs() < 1e-7);
        let direct = measure_pnonad(&cfg, PnonadFrame::Exact, &s).unwrap();
        assert!((r.p_nonad - direct).abs() < 1e-6 * direct.max(1e-3), "{} {}", r.p_nonad, direct);
        let bare = evaluate_point(&cfg, InitialState::Dark, &s, SweepOutputs::default()).unwrap();
        assert!(bare.p_nonad.is_nan() && bare.norm.is_nan());
    }

    #[test]
    fn scan_and_boundary() {
        let rows = scan_pnonad(5.0, 0.0, &[8.0, 10.0], AbsorptionSite::None, PnonadFrame::Reduced, &Default::default()).unwrap();
        assert!(rows[1].p_nonad < rows[0].p_nonad);
        assert_eq!(rows[0].p_nonad_summed, 2.0 * rows[0].p_nonad);
        let spec = SweepSpec {
            lengths: GridRange::new(20.0, 30.0, 2),
            gammas: GridRange::new(0.0, 0.6, 61),
            ..SweepSpec::target_default(5.0)
        };
        let d = run_sweep(&spec).unwrap();
        let table = extract_boundary(&d[0], PnonadFrame::Exact).unwrap();
        assert_eq!(table.omitted, 0);
        for r in &table.rows {
            let n = r.numeric.unwrap();
            assert!(n.is_valid());
            assert!(r.lz.unwrap() > n.gamma_cr);
            assert!((r.semianalytic.unwrap() - n.gamma_cr).abs() < 0.02);
            assert!(r.initial.is_none());
        }
    }
}
