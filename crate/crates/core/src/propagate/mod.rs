//! Propagation along the coupler.
//!
//! Three descriptions of the same dynamics are integrated here:
//!
//! * the bare waveguide amplitudes, `i dψ/dz = H(z) ψ`;
//! * the exact instantaneous (adiabatic) frame, with energies and
//!   nonadiabatic couplings taken from the exact non-Hermitian
//!   eigenvectors;
//! * the reduced adiabatic-frame models, which keep the lossless
//!   eigenvectors and couplings and add the first-order absorption widths
//!   to the diagonal.
//!
//! Adiabatic coefficients are always ordered `(a-, a0, a+)`.

mod dopri;

pub use dopri::{Dopri5Options, IntegratorStats};

use std::f64::consts::SQRT_2;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::eigen::{self, AlignedSpectrumPath};
use crate::error::{Error, Result};
use crate::model::{self, c_dot, AbsorptionSite, Level, ModelConfig, State3};

const I: Complex64 = Complex64::new(0.0, 1.0);
const ZERO: Complex64 = Complex64::new(0.0, 0.0);

/// Adiabatic coefficients `(a-, a0, a+)`.
pub type Coeffs = [Complex64; 3];

/// Tolerances and sampling of one integration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntegratorSettings {
    pub rel_tol: f64,
    pub abs_tol: f64,
    /// Largest step as a fraction of `L`.
    pub max_step: f64,
    /// Number of output samples on `[0, L]`, end points included.
    pub sample_count: usize,
}

impl Default for IntegratorSettings {
    fn default() -> Self {
        IntegratorSettings { rel_tol: 1e-9, abs_tol: 1e-12, max_step: 0.05, sample_count: 201 }
    }
}

impl IntegratorSettings {
    pub fn validate(&self) -> Result<()> {
        if !(1e-14..=1e-3).contains(&self.rel_tol) || !(self.abs_tol > 0.0 && self.abs_tol <= 1e-3) {
            return Err(Error::InvalidConfig(format!(
                "need rel_tol in [1e-14, 1e-3] and abs_tol in (0, 1e-3] (rel_tol = {}, abs_tol = {})",
                self.rel_tol, self.abs_tol
            )));
        }
        if !(self.max_step > 0.0 && self.max_step <= 1.0) {
            return Err(Error::InvalidConfig(format!("max_step must be in (0, 1], got {}", self.max_step)));
        }
        if self.sample_count < 2 {
            return Err(Error::InvalidConfig("sample_count must be at least 2".into()));
        }
        Ok(())
    }

    pub fn with_tolerance(self, rel_tol: f64) -> Self {
        IntegratorSettings { rel_tol, abs_tol: rel_tol * 1e-3, ..self }
    }

    pub fn with_samples(self, sample_count: usize) -> Self {
        IntegratorSettings { sample_count, ..self }
    }

    fn options(&self, length: f64) -> Dopri5Options {
        Dopri5Options {
            rel_tol: self.rel_tol,
            abs_tol: self.abs_tol,
            max_step: self.max_step * length,
            min_step: 1e-12 * length,
            max_steps: 5_000_000,
        }
    }

    fn samples(&self, length: f64) -> Vec<f64> {
        eigen::uniform_grid(length, self.sample_count)
    }
}

/// Launch condition for bare-basis propagation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum InitialState {
    /// All light in waveguide 3.
    Basis3,
    /// The exact instantaneous dark eigenstate of `H(0)`, c-normalized.
    /// Differs from waveguide 3 by `O(e^{-a})`, which would otherwise seed
    /// the bright states.
    #[default]
    Dark,
}

impl std::str::FromStr for InitialState {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "basis3" | "3" => Ok(InitialState::Basis3),
            "dark" => Ok(InitialState::Dark),
            other => Err(Error::InvalidConfig(format!("unknown initial state '{other}'"))),
        }
    }
}

impl std::fmt::Display for InitialState {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            InitialState::Basis3 => "basis3",
            InitialState::Dark => "dark",
        })
    }
}

pub fn initial_state(cfg: &ModelConfig, kind: InitialState) -> Result<State3> {
    match kind {
        InitialState::Basis3 => Ok(State3::new(ZERO, ZERO, Complex64::new(1.0, 0.0))),
        InitialState::Dark => {
            let s = eigen::spectrum_at_real(0.0, cfg)?;
            Ok(s.vectors[Level::Zero.index()])
        }
    }
}

/// Sampled solution on `[0, L]`.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub zs: Vec<f64>,
    /// Bare-basis amplitudes (reconstructed from the coefficients for
    /// adiabatic-frame integrations).
    pub states: Vec<State3>,
    pub coeffs: Option<Vec<Coeffs>>,
    /// `Σ |c_n|²` of `states`.
    pub norms: Vec<f64>,
    pub stats: IntegratorStats,
}

impl Trajectory {
    fn new(zs: Vec<f64>, states: Vec<State3>, coeffs: Option<Vec<Coeffs>>, stats: IntegratorStats) -> Self {
        let norms = states.iter().map(model::norm_sqr).collect();
        Trajectory { zs, states, coeffs, norms, stats }
    }

    pub fn final_state(&self) -> &State3 {
        self.states.last().expect("trajectory has at least two samples")
    }

    pub fn final_coeffs(&self) -> Option<&Coeffs> {
        self.coeffs.as_ref().and_then(|c| c.last())
    }

    pub fn final_norm(&self) -> f64 {
        *self.norms.last().expect("trajectory has at least two samples")
    }
}

fn to_array(s: &State3) -> [Complex64; 3] {
    [s[0], s[1], s[2]]
}

fn to_state(a: &[Complex64; 3]) -> State3 {
    State3::new(a[0], a[1], a[2])
}

/// Solve `i dψ/dz = H(z) ψ` on `[0, L]`.
pub fn integrate_bare(cfg: &ModelConfig, initial: &State3, settings: &IntegratorSettings) -> Result<Trajectory> {
    cfg.validate()?;
    settings.validate()?;
    if model::norm_sqr(initial) <= 0.0 || !model::norm_sqr(initial).is_finite() {
        return Err(Error::InvalidConfig("initial state must have a finite, nonzero norm".into()));
    }
    let samples = settings.samples(cfg.length);
    let cfg = *cfg;
    let rhs = move |z: f64, psi: &[Complex64; 3]| -> Result<[Complex64; 3]> {
        let (v, w) = model::couplings_real(z, &cfg);
        let mut hpsi = [psi[1] * v, psi[0] * v + psi[2] * w, psi[1] * w];
        if let Some(k) = cfg.site.diagonal_index() {
            hpsi[k] += Complex64::new(0.0, -cfg.gamma) * psi[k];
        }
        Ok(hpsi.map(|x| -I * x))
    };
    let (ys, stats) = dopri::integrate(rhs, 0.0, cfg.length, to_array(initial), &samples, &settings.options(cfg.length))?;
    let states = ys.iter().map(to_state).collect();
    Ok(Trajectory::new(samples, states, None, stats))
}

/// Grid used to fix labels and eigenvector signs of the exact frame.
pub fn frame_path(cfg: &ModelConfig) -> Result<AlignedSpectrumPath> {
    let n = 257 + 64 * cfg.a.ceil() as usize;
    eigen::align_path(cfg, &eigen::uniform_grid(cfg.length, n))
}

/// Integrate `da_j/dz = -i E_j a_j - Σ_{k≠j} <φ̄^j|dφ^k/dz> a_k` with the
/// exact eigen-decomposition of `H(z)`.
///
/// Couplings use the eigenvector-derivative identity (see
/// [`eigen::derivative_coupling`]) in a frame whose signs are pinned to a
/// cached aligned path. `states` holds `Σ_j a_j φ^j`.
pub fn integrate_adiabatic_exact(
    cfg: &ModelConfig,
    initial_coeffs: Coeffs,
    settings: &IntegratorSettings,
) -> Result<Trajectory> {
    cfg.validate()?;
    settings.validate()?;
    let path = frame_path(cfg)?;
    integrate_adiabatic_exact_on(&path, initial_coeffs, settings)
}

/// As [`integrate_adiabatic_exact`], reusing a frame built by [`frame_path`].
pub fn integrate_adiabatic_exact_on(
    path: &AlignedSpectrumPath,
    initial_coeffs: Coeffs,
    settings: &IntegratorSettings,
) -> Result<Trajectory> {
    let cfg = path.cfg;
    settings.validate()?;
    let samples = settings.samples(cfg.length);
    let rhs = |z: f64, a: &Coeffs| -> Result<Coeffs> {
        let s = path.spectrum_near(z)?;
        let c = eigen::coupling_matrix(&s, &cfg);
        let mut da = [ZERO; 3];
        for j in 0..3 {
            da[j] = -I * s.energies[j] * a[j];
            for k in 0..3 {
                if k != j {
                    da[j] -= c[j][k] * a[k];
                }
            }
        }
        Ok(da)
    };
    let (coeffs, stats) = dopri::integrate(rhs, 0.0, cfg.length, initial_coeffs, &samples, &settings.options(cfg.length))?;
    let states = samples
        .iter()
        .zip(&coeffs)
        .map(|(&z, a)| {
            let s = path.spectrum_near(z)?;
            Ok((0..3).map(|j| s.vectors[j] * a[j]).sum())
        })
        .collect::<Result<Vec<State3>>>()?;
    Ok(Trajectory::new(samples, states, Some(coeffs), stats))
}

/// Which reduced adiabatic-frame model to integrate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReducedVariant {
    /// No absorption.
    Hermitian,
    /// Absorption in waveguide 1.
    TargetAbsorption,
    /// Absorption in waveguide 3.
    InitialAbsorption,
}

impl ReducedVariant {
    /// The variant that matches `cfg`, if any.
    pub fn for_config(cfg: &ModelConfig) -> Result<Self> {
        if cfg.effective_gamma() == 0.0 {
            return Ok(ReducedVariant::Hermitian);
        }
        match cfg.site {
            AbsorptionSite::Target => Ok(ReducedVariant::TargetAbsorption),
            AbsorptionSite::Initial => Ok(ReducedVariant::InitialAbsorption),
            other => Err(Error::InvalidConfig(format!("no reduced model for absorption site '{other}'"))),
        }
    }
}

/// Lossless eigenvectors in the sign convention of the reduced models:
/// `(-φ⁰, φ±)` with `φ⁰, φ±` the closed-form vectors. With this choice the
/// reduced coupling matrix is exactly `<φ̄^j|dφ^k/dz>`, and `a0 = 1` at
/// `z = 0` is (up to `O(e^{-a})`) light in waveguide 3.
pub fn reduced_frame(z: f64, cfg: &ModelConfig) -> [State3; 3] {
    let s = model::hermitian_spectrum(z, cfg);
    [s.vectors[0], -s.vectors[1], s.vectors[2]]
}

/// Right-hand side matrix `M(z)` of `i da/dz = M a` for a reduced model.
pub fn reduced_matrix(z: f64, cfg: &ModelConfig, variant: ReducedVariant) -> [[Complex64; 3]; 3] {
    let (v, w) = model::couplings_real(z, cfg);
    let omega2 = v * v + w * w;
    let omega = omega2.sqrt();
    let k = SQRT_2 * cfg.a / (cfg.length * omega2);
    let gamma = cfg.gamma;
    let (bright, dark) = match variant {
        ReducedVariant::Hermitian => (0.0, 0.0),
        ReducedVariant::TargetAbsorption => (gamma * v * v / (2.0 * omega2), gamma * w * w / omega2),
        ReducedVariant::InitialAbsorption => (gamma * w * w / (2.0 * omega2), gamma * v * v / omega2),
    };
    let c = |re: f64, im: f64| Complex64::new(re, im);
    [
        [c(-omega, -bright), c(0.0, k), ZERO],
        [c(0.0, -k), c(0.0, -dark), c(0.0, -k)],
        [ZERO, c(0.0, k), c(omega, -bright)],
    ]
}

/// Integrate one of the reduced three-state models from `a = (0, 1, 0)`.
pub fn integrate_reduced(
    cfg: &ModelConfig,
    variant: ReducedVariant,
    settings: &IntegratorSettings,
) -> Result<Trajectory> {
    integrate_reduced_from(cfg, variant, [ZERO, Complex64::new(1.0, 0.0), ZERO], settings)
}

pub fn integrate_reduced_from(
    cfg: &ModelConfig,
    variant: ReducedVariant,
    initial_coeffs: Coeffs,
    settings: &IntegratorSettings,
) -> Result<Trajectory> {
    cfg.validate()?;
    settings.validate()?;
    let consistent = match variant {
        ReducedVariant::Hermitian => cfg.effective_gamma() == 0.0,
        ReducedVariant::TargetAbsorption => cfg.site == AbsorptionSite::Target,
        ReducedVariant::InitialAbsorption => cfg.site == AbsorptionSite::Initial,
    };
    if !consistent {
        return Err(Error::InvalidConfig(format!(
            "reduced variant {variant:?} does not match site '{}' with gamma = {}",
            cfg.site, cfg.gamma
        )));
    }
    let samples = settings.samples(cfg.length);
    let cfg = *cfg;
    let rhs = move |z: f64, a: &Coeffs| -> Result<Coeffs> {
        let m = reduced_matrix(z, &cfg, variant);
        let mut da = [ZERO; 3];
        for j in 0..3 {
            da[j] = -I * (m[j][0] * a[0] + m[j][1] * a[1] + m[j][2] * a[2]);
        }
        Ok(da)
    };
    let (coeffs, stats) = dopri::integrate(rhs, 0.0, cfg.length, initial_coeffs, &samples, &settings.options(cfg.length))?;
    let states = samples
        .iter()
        .zip(&coeffs)
        .map(|(&z, a)| {
            let f = reduced_frame(z, &cfg);
            (0..3).map(|j| f[j] * a[j]).sum()
        })
        .collect();
    Ok(Trajectory::new(samples, states, Some(coeffs), stats))
}

/// Fill `coeffs` with `a_j(z) = <φ̄^j(z)|ψ(z)>` in the exact aligned frame.
pub fn project_adiabatic(traj: &Trajectory, cfg: &ModelConfig) -> Result<Trajectory> {
    let path = eigen::align_path(cfg, &traj.zs)?;
    project_onto(traj, &path)
}

/// Projection onto the frame of an aligned path, which need not be sampled
/// at `traj.zs`.
pub fn project_onto(traj: &Trajectory, path: &AlignedSpectrumPath) -> Result<Trajectory> {
    let coeffs = traj
        .zs
        .iter()
        .zip(&traj.states)
        .map(|(&z, psi)| {
            let k = path.nearest(z);
            let s = if path.zs[k] == z { path.spectra[k].clone() } else { path.spectrum_near(z)? };
            Ok([0, 1, 2].map(|j| c_dot(&s.vectors[j], psi)))
        })
        .collect::<Result<Vec<Coeffs>>>()?;
    Ok(Trajectory { coeffs: Some(coeffs), ..traj.clone() })
}

/// Small-`z` solution of the initial-absorption reduced model with the
/// dark-state feedback dropped.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InitialDecay {
    pub a0: Complex64,
    pub a_minus: Complex64,
    pub a_plus: Complex64,
    /// `|a±(z)|` from the closed-form modulus.
    pub modulus: f64,
    /// `lim_{γz→∞} |a±|`.
    pub asymptote: f64,
}

/// Closed-form `a0 = e^{-γz}` and `a±(z)` for absorption in waveguide 3,
/// using `ω ≈ e^{a/2}` and coupling `√2 a e^{-a} / L`.
///
/// Only meaningful for `z ≪ L` and `e^{-2a} ≪ 1`; the caller owns that.
pub fn closed_form_initial_decay(cfg: &ModelConfig, z: f64) -> Result<InitialDecay> {
    if cfg.site != AbsorptionSite::Initial {
        return Err(Error::InvalidConfig(format!(
            "closed-form decay is for initial-waveguide absorption, got site '{}'",
            cfg.site
        )));
    }
    let (a, l, gamma) = (cfg.a, cfg.length, cfg.gamma);
    let freq = (a / 2.0).exp();
    let kappa = a * (-a).exp() * SQRT_2 / l;
    let bright = |sign: f64| {
        let rate = Complex64::new(-gamma, sign * freq);
        let phase = (Complex64::new(0.0, -sign * freq) * z).exp();
        -kappa / rate * phase * (1.0 - (rate * z).exp())
    };
    let envelope = (1.0 - 2.0 * (freq * z).cos() * (-gamma * z).exp() + (-2.0 * gamma * z).exp())
        .max(0.0)
        .sqrt();
    let asymptote = kappa / (gamma * gamma + a.exp()).sqrt();
    Ok(InitialDecay {
        a0: Complex64::from((-gamma * z).exp()),
        a_minus: bright(-1.0),
        a_plus: bright(1.0),
        modulus: asymptote * envelope,
        asymptote,
    })
}
