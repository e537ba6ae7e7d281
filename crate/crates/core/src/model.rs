//! Physical setup of the three-waveguide coupler.
//!
//! Waveguides are labelled 1 (target, left), 2 (center) and 3 (initial,
//! right). The couplings `v(z)` (1-2) and `w(z) = 1/v(z)` (2-3) vary
//! exponentially along the propagation distance `z ∈ [0, L]` in the
//! counter-intuitive STIRAP order, so the zero-energy dark state carries
//! light from waveguide 3 to waveguide 1.
//!
//! Absorption is modelled by a single `-iγ` entry on the diagonal of the
//! absorbing waveguide, which makes the Hamiltonian complex symmetric.

use std::f64::consts::{FRAC_1_SQRT_2, PI, SQRT_2};
use std::fmt;
use std::str::FromStr;

use nalgebra::{Matrix3, Vector3};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Wave amplitudes in waveguides 1, 2, 3.
pub type State3 = Vector3<Complex64>;

/// 3x3 complex matrix acting on [`State3`].
pub type Mat3 = Matrix3<Complex64>;

const I: Complex64 = Complex64::new(0.0, 1.0);

/// Index of an instantaneous eigenstate in every `[_; 3]` ordered as
/// `(E-, E0, E+)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Level {
    Minus = 0,
    Zero = 1,
    Plus = 2,
}

impl Level {
    pub const ALL: [Level; 3] = [Level::Minus, Level::Zero, Level::Plus];

    pub fn index(self) -> usize {
        self as usize
    }
}

/// Which waveguide carries the absorption `-iγ`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum AbsorptionSite {
    #[default]
    None,
    /// Waveguide 1, where the light should end up.
    Target,
    /// Waveguide 2.
    Center,
    /// Waveguide 3, where the light is launched.
    Initial,
}

impl AbsorptionSite {
    /// Zero-based diagonal index of the absorbing waveguide.
    pub fn diagonal_index(self) -> Option<usize> {
        match self {
            AbsorptionSite::None => None,
            AbsorptionSite::Target => Some(0),
            AbsorptionSite::Center => Some(1),
            AbsorptionSite::Initial => Some(2),
        }
    }
}

impl fmt::Display for AbsorptionSite {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            AbsorptionSite::None => "none",
            AbsorptionSite::Target => "target",
            AbsorptionSite::Center => "center",
            AbsorptionSite::Initial => "initial",
        };
        f.write_str(s)
    }
}

impl FromStr for AbsorptionSite {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "none" => Ok(AbsorptionSite::None),
            "target" | "1" => Ok(AbsorptionSite::Target),
            "center" | "centre" | "2" => Ok(AbsorptionSite::Center),
            "initial" | "3" => Ok(AbsorptionSite::Initial),
            other => Err(Error::InvalidConfig(format!("unknown absorption site '{other}'"))),
        }
    }
}

/// Complete physical setup: coupling asymmetry `a`, device length `L`,
/// absorption rate `γ` and the absorbing waveguide.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub a: f64,
    #[serde(rename = "L")]
    pub length: f64,
    pub gamma: f64,
    pub site: AbsorptionSite,
}

impl ModelConfig {
    pub fn new(a: f64, length: f64, gamma: f64, site: AbsorptionSite) -> Result<Self> {
        let cfg = ModelConfig { a, length, gamma, site };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Lossless configuration.
    pub fn hermitian(a: f64, length: f64) -> Result<Self> {
        Self::new(a, length, 0.0, AbsorptionSite::None)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.a.is_finite() && self.a >= 0.0) {
            return Err(Error::InvalidConfig(format!("a must be finite and >= 0, got {}", self.a)));
        }
        if !(self.length.is_finite() && self.length > 0.0) {
            return Err(Error::InvalidConfig(format!("L must be finite and > 0, got {}", self.length)));
        }
        if !(self.gamma.is_finite() && self.gamma >= 0.0) {
            return Err(Error::InvalidConfig(format!(
                "gamma must be finite and >= 0 (gain is not modelled), got {}",
                self.gamma
            )));
        }
        Ok(())
    }

    /// Effective absorption: zero when no site is selected.
    pub fn effective_gamma(&self) -> f64 {
        match self.site {
            AbsorptionSite::None => 0.0,
            _ => self.gamma,
        }
    }

    pub fn with_gamma(self, gamma: f64) -> Self {
        ModelConfig { gamma, ..self }
    }

    pub fn with_length(self, length: f64) -> Self {
        ModelConfig { length, ..self }
    }

    pub fn with_site(self, site: AbsorptionSite) -> Self {
        ModelConfig { site, ..self }
    }
}

/// Couplings `(v, w)` at a possibly complex propagation distance.
///
/// `v = exp(-a (z - L/2) / L)`, `w = 1 / v`. Both are entire in `z`, which is
/// what allows continuation to the complex exceptional points.
pub fn couplings(z: Complex64, cfg: &ModelConfig) -> (Complex64, Complex64) {
    let s = -cfg.a * (z - cfg.length / 2.0) / cfg.length;
    (s.exp(), (-s).exp())
}

/// Real-`z` couplings.
pub fn couplings_real(z: f64, cfg: &ModelConfig) -> (f64, f64) {
    let s = -cfg.a * (z - cfg.length / 2.0) / cfg.length;
    (s.exp(), (-s).exp())
}

/// Mixing angle `θ = atan2(v, w) ∈ (0, π/2)` and `ω = sqrt(v² + w²)`.
pub fn mixing(z: f64, cfg: &ModelConfig) -> (f64, f64) {
    let (v, w) = couplings_real(z, cfg);
    (v.atan2(w), v.hypot(w))
}

fn assemble(v: Complex64, w: Complex64, cfg: &ModelConfig) -> Mat3 {
    let zero = Complex64::new(0.0, 0.0);
    let mut h = Mat3::from_element(zero);
    h[(0, 1)] = v;
    h[(1, 0)] = v;
    h[(1, 2)] = w;
    h[(2, 1)] = w;
    if let Some(k) = cfg.site.diagonal_index() {
        h[(k, k)] = Complex64::new(0.0, -cfg.gamma);
    }
    h
}

/// `H(z)` including the absorbing diagonal entry selected by `cfg.site`.
pub fn hamiltonian(z: Complex64, cfg: &ModelConfig) -> Mat3 {
    let (v, w) = couplings(z, cfg);
    assemble(v, w, cfg)
}

pub fn hamiltonian_real(z: f64, cfg: &ModelConfig) -> Mat3 {
    let (v, w) = couplings_real(z, cfg);
    assemble(v.into(), w.into(), cfg)
}

/// `dH/dz`. The absorption is z-independent, so only the couplings move.
pub fn hamiltonian_derivative(z: f64, cfg: &ModelConfig) -> Mat3 {
    let (v, w) = couplings_real(z, cfg);
    let rate = cfg.a / cfg.length;
    let zero = Complex64::new(0.0, 0.0);
    let mut dh = Mat3::from_element(zero);
    dh[(0, 1)] = (-rate * v).into();
    dh[(1, 0)] = (-rate * v).into();
    dh[(1, 2)] = (rate * w).into();
    dh[(2, 1)] = (rate * w).into();
    dh
}

/// Instantaneous eigen-decomposition at one point.
///
/// `energies` and `vectors` are ordered `(E-, E0, E+)`; vectors are
/// c-normalized, `<v̄|v> = Σ v_n² = 1`, which for real vectors is the usual
/// unit norm. `theta` and `omega` describe the lossless couplings at `z`
/// (complex when `z` is).
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum {
    pub z: Complex64,
    pub energies: [Complex64; 3],
    pub vectors: [State3; 3],
    pub theta: Complex64,
    pub omega: Complex64,
}

impl Spectrum {
    pub fn energy(&self, level: Level) -> Complex64 {
        self.energies[level.index()]
    }

    pub fn vector(&self, level: Level) -> &State3 {
        &self.vectors[level.index()]
    }
}

/// `(θ, ω)` for a complex `z`, consistent with [`mixing`] on the real axis.
pub fn mixing_complex(z: Complex64, cfg: &ModelConfig) -> (Complex64, Complex64) {
    let (v, w) = couplings(z, cfg);
    let omega = (v * v + w * w).sqrt();
    let theta = if z.im == 0.0 {
        Complex64::from(v.re.atan2(w.re))
    } else {
        (v / w).atan()
    };
    (theta, omega)
}

/// Closed-form lossless spectrum: `E = (-ω, 0, ω)` with
/// `φ⁰ = (cosθ, 0, -sinθ)`, `φ± = (sinθ, ±1, cosθ)/√2`.
///
/// Any absorption in `cfg` is ignored; [`analytic_spectrum`] is the checked
/// variant.
pub fn hermitian_spectrum(z: f64, cfg: &ModelConfig) -> Spectrum {
    let (theta, omega) = mixing(z, cfg);
    let (s, c) = theta.sin_cos();
    let r = |x: f64| Complex64::from(x);
    let dark = State3::new(r(c), r(0.0), r(-s));
    let minus = State3::new(r(s * FRAC_1_SQRT_2), r(-FRAC_1_SQRT_2), r(c * FRAC_1_SQRT_2));
    let plus = State3::new(r(s * FRAC_1_SQRT_2), r(FRAC_1_SQRT_2), r(c * FRAC_1_SQRT_2));
    Spectrum {
        z: z.into(),
        energies: [r(-omega), r(0.0), r(omega)],
        vectors: [minus, dark, plus],
        theta: theta.into(),
        omega: omega.into(),
    }
}

/// Closed-form spectrum; only defined without absorption.
pub fn analytic_spectrum(z: f64, cfg: &ModelConfig) -> Result<Spectrum> {
    if cfg.effective_gamma() != 0.0 {
        return Err(Error::InvalidConfig(
            "closed-form spectrum requires gamma = 0; use eigen::spectrum_at".into(),
        ));
    }
    Ok(hermitian_spectrum(z, cfg))
}

/// First-order imaginary energy shifts `(Im E-, Im E0, Im E+)`.
///
/// The absorption perturbation only moves energies along the imaginary
/// axis at first order. For every site the three shifts sum to `-γ`.
/// `site = None` gives zeros.
pub fn perturbative_imag_shifts(z: f64, cfg: &ModelConfig) -> [f64; 3] {
    let gamma = cfg.gamma;
    let (v, w) = couplings_real(z, cfg);
    let omega2 = v * v + w * w;
    match cfg.site {
        AbsorptionSite::None => [0.0; 3],
        AbsorptionSite::Target => {
            let bright = -gamma * v * v / (2.0 * omega2);
            [bright, -gamma * w * w / omega2, bright]
        }
        AbsorptionSite::Center => [-gamma / 2.0, 0.0, -gamma / 2.0],
        AbsorptionSite::Initial => {
            let bright = -gamma * w * w / (2.0 * omega2);
            [bright, -gamma * v * v / omega2, bright]
        }
    }
}

/// First-order dark state for absorption in the target waveguide,
/// `(cosθ, iγ cosθ sinθ / ω, -sinθ)`.
///
/// Not re-normalized: the c-norm differs from one at `O(γ²)`.
pub fn perturbed_dark_state(z: f64, cfg: &ModelConfig) -> Result<State3> {
    if cfg.site != AbsorptionSite::Target {
        return Err(Error::InvalidConfig(format!(
            "perturbed dark state is defined for target absorption, got site '{}'",
            cfg.site
        )));
    }
    let (theta, omega) = mixing(z, cfg);
    let (s, c) = theta.sin_cos();
    Ok(State3::new(
        c.into(),
        I * (cfg.gamma * c * s / omega),
        (-s).into(),
    ))
}

/// Triple degeneracy of the lossless Hamiltonian continued to complex `z`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Ep3Location {
    pub n: i64,
    pub z: Complex64,
}

/// `z_n = L (1/2 + i (1 + 2n) π / (4a))` for `n ∈ [n_min, n_max]`, sorted by
/// `|Im z|` (ties broken by `n`).
pub fn ep3_locations(cfg: &ModelConfig, n_min: i64, n_max: i64) -> Result<Vec<Ep3Location>> {
    if cfg.a <= 0.0 {
        return Err(Error::InvalidConfig("a = 0 has no finite exceptional point".into()));
    }
    if n_min > n_max {
        return Err(Error::InvalidConfig(format!("empty branch range {n_min}..={n_max}")));
    }
    let mut out: Vec<_> = (n_min..=n_max)
        .map(|n| Ep3Location {
            n,
            z: Complex64::new(
                cfg.length / 2.0,
                cfg.length * (1 + 2 * n) as f64 * PI / (4.0 * cfg.a),
            ),
        })
        .collect();
    out.sort_by(|p, q| p.z.im.abs().total_cmp(&q.z.im.abs()).then(p.n.cmp(&q.n)));
    Ok(out)
}

/// Lossless nonadiabatic coupling `√2 a / (L ω²)` between the dark state and
/// either bright state; largest at `z = L/2`.
pub fn nonadiabatic_coupling_analytic(z: f64, cfg: &ModelConfig) -> f64 {
    let (v, w) = couplings_real(z, cfg);
    SQRT_2 * cfg.a / (cfg.length * (v * v + w * w))
}

/// Bilinear product `Σ x_n y_n` (no conjugation).
pub fn c_dot(x: &State3, y: &State3) -> Complex64 {
    x.iter().zip(y.iter()).map(|(a, b)| a * b).sum()
}

/// `Σ |c_n|²`.
pub fn norm_sqr(x: &State3) -> f64 {
    x.iter().map(|c| c.norm_sqr()).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn cfg(a: f64, l: f64, gamma: f64, site: AbsorptionSite) -> ModelConfig {
        ModelConfig::new(a, l, gamma, site).unwrap()
    }

    #[test]
    fn couplings_at_midpoint_and_entrance() {
        let c = cfg(5.0, 3.0, 0.0, AbsorptionSite::None);
        let (v, w) = couplings_real(1.5, &c);
        assert_eq!((v, w), (1.0, 1.0));
        let (v, w) = couplings_real(0.0, &c);
        assert_relative_eq!(v, 12.182493960703473, max_relative = 1e-14);
        assert_relative_eq!(w, 0.0820849986238988, max_relative = 1e-14);
        assert_relative_eq!(v * w, 1.0, max_relative = 1e-15);
    }

    #[test]
    fn couplings_satisfy_ep_condition_at_z0() {
        let c = cfg(5.0, 1.0, 0.0, AbsorptionSite::None);
        let z0 = Complex64::new(0.5, PI / 20.0);
        let (v, w) = couplings(z0, &c);
        assert!((v + I * w).norm() < 1e-15, "v = {v}, w = {w}");
    }

    #[test]
    fn hamiltonian_layout() {
        let c = cfg(5.0, 2.0, 0.5, AbsorptionSite::Target);
        let h = hamiltonian_real(1.0, &c);
        assert_eq!(h[(0, 0)], Complex64::new(0.0, -0.5));
        assert_eq!(h[(0, 1)], Complex64::new(1.0, 0.0));
        assert_eq!(h[(1, 2)], Complex64::new(1.0, 0.0));
        assert_eq!(h[(0, 2)], Complex64::new(0.0, 0.0));
        assert_eq!(h[(1, 1)], Complex64::new(0.0, 0.0));
        assert_eq!(h, h.transpose());

        let c = c.with_site(AbsorptionSite::Initial);
        assert_eq!(hamiltonian_real(1.0, &c)[(2, 2)], Complex64::new(0.0, -0.5));
        let c = c.with_site(AbsorptionSite::Center);
        assert_eq!(hamiltonian_real(1.0, &c)[(1, 1)], Complex64::new(0.0, -0.5));
        let c = c.with_site(AbsorptionSite::None);
        assert!(hamiltonian_real(0.3, &c).iter().all(|x| x.im == 0.0));
    }

    #[test]
    fn config_rejects_gain_and_bad_length() {
        assert!(ModelConfig::new(5.0, 10.0, -0.1, AbsorptionSite::Target).is_err());
        assert!(ModelConfig::new(5.0, 0.0, 0.1, AbsorptionSite::Target).is_err());
        assert!(ModelConfig::new(-1.0, 10.0, 0.1, AbsorptionSite::Target).is_err());
        assert!(ModelConfig::new(0.0, 10.0, 0.0, AbsorptionSite::None).is_ok());
    }

    #[test]
    fn analytic_spectrum_midpoint() {
        let c = cfg(5.0, 10.0, 0.0, AbsorptionSite::None);
        let s = analytic_spectrum(5.0, &c).unwrap();
        assert_relative_eq!(s.omega.re, SQRT_2, max_relative = 1e-15);
        assert_relative_eq!(s.theta.re, PI / 4.0, max_relative = 1e-15);
        let d = s.vector(Level::Zero);
        assert_relative_eq!(d[0].re, FRAC_1_SQRT_2, max_relative = 1e-15);
        assert_eq!(d[1].re, 0.0);
        assert_relative_eq!(d[2].re, -FRAC_1_SQRT_2, max_relative = 1e-15);
    }

    #[test]
    fn analytic_spectrum_entrance_is_minus_three() {
        let c = cfg(5.0, 10.0, 0.0, AbsorptionSite::None);
        let s = analytic_spectrum(0.0, &c).unwrap();
        let cos_theta = s.theta.re.cos();
        assert_relative_eq!(cos_theta, (-5.0f64).exp() / (1.0 + (-10.0f64).exp()).sqrt(), max_relative = 1e-12);
        let d = s.vector(Level::Zero);
        assert!((d[2].re + 1.0).abs() < 1e-4);
    }

    #[test]
    fn analytic_spectrum_is_eigen_decomposition() {
        let c = cfg(3.0, 7.0, 0.0, AbsorptionSite::None);
        for k in 0..=20 {
            let z = 7.0 * k as f64 / 20.0;
            let s = analytic_spectrum(z, &c).unwrap();
            let h = hamiltonian_real(z, &c);
            for j in 0..3 {
                let r = h * s.vectors[j] - s.vectors[j] * s.energies[j];
                assert!(r.norm() < 1e-13 * s.omega.re.max(1.0), "z = {z}, j = {j}");
                assert_relative_eq!(c_dot(&s.vectors[j], &s.vectors[j]).re, 1.0, epsilon = 1e-14);
            }
        }
    }

    #[test]
    fn analytic_spectrum_rejects_absorption() {
        let c = cfg(3.0, 7.0, 0.1, AbsorptionSite::Target);
        assert!(analytic_spectrum(1.0, &c).is_err());
    }

    #[test]
    fn imag_shifts_midpoint_target() {
        let c = cfg(5.0, 10.0, 0.1, AbsorptionSite::Target);
        let [m, z, p] = perturbative_imag_shifts(5.0, &c);
        assert_relative_eq!(z, -0.05, max_relative = 1e-14);
        assert_relative_eq!(m, -0.025, max_relative = 1e-14);
        assert_relative_eq!(p, -0.025, max_relative = 1e-14);
        assert_eq!(perturbative_imag_shifts(5.0, &c.with_gamma(0.0)), [0.0; 3]);
        assert_eq!(perturbative_imag_shifts(5.0, &c.with_site(AbsorptionSite::None)), [0.0; 3]);
    }

    #[test]
    fn imag_shifts_sum_rule() {
        for site in [AbsorptionSite::Target, AbsorptionSite::Center, AbsorptionSite::Initial] {
            let c = cfg(5.0, 10.0, 0.37, site);
            for k in 0..=50 {
                let z = 10.0 * k as f64 / 50.0;
                let s: f64 = perturbative_imag_shifts(z, &c).iter().sum();
                assert_relative_eq!(s, -0.37, max_relative = 1e-14);
            }
        }
    }

    #[test]
    fn perturbed_dark_state_values() {
        let c = cfg(5.0, 10.0, 0.5, AbsorptionSite::Target);
        let d = perturbed_dark_state(5.0, &c).unwrap();
        assert_relative_eq!(d[1].im, 0.5 * 0.5 / SQRT_2, max_relative = 1e-14);
        let d0 = perturbed_dark_state(2.0, &c.with_gamma(0.0)).unwrap();
        let h = hermitian_spectrum(2.0, &c);
        assert!((d0 - h.vector(Level::Zero)).norm() < 1e-15);
        assert!(perturbed_dark_state(2.0, &c.with_site(AbsorptionSite::Initial)).is_err());
    }

    #[test]
    fn ep3_branches() {
        let c = cfg(5.0, 1.0, 0.0, AbsorptionSite::None);
        let eps = ep3_locations(&c, -1, 1).unwrap();
        assert_eq!(eps.len(), 3);
        let z0 = eps.iter().find(|e| e.n == 0).unwrap().z;
        assert_eq!(z0.re, 0.5);
        assert_relative_eq!(z0.im, 0.15707963267948966, max_relative = 1e-15);
        let zm = eps.iter().find(|e| e.n == -1).unwrap().z;
        assert_eq!(zm, z0.conj());
        assert_eq!(eps[2].n, 1);
        let smallest_positive = eps.iter().filter(|e| e.z.im > 0.0).min_by(|p, q| p.z.im.total_cmp(&q.z.im));
        assert_eq!(smallest_positive.unwrap().n, 0);
        assert!(ep3_locations(&ModelConfig { a: 0.0, ..c }, 0, 0).is_err());
    }

    #[test]
    fn analytic_coupling_peak() {
        let c = cfg(5.0, 10.0, 0.0, AbsorptionSite::None);
        assert_relative_eq!(nonadiabatic_coupling_analytic(5.0, &c), 0.35355339059327373, max_relative = 1e-14);
        for k in 0..=40 {
            let z = 10.0 * k as f64 / 40.0;
            assert!(nonadiabatic_coupling_analytic(z, &c) <= nonadiabatic_coupling_analytic(5.0, &c));
        }
    }

    #[test]
    fn analytic_coupling_matches_finite_difference_of_dark_state() {
        // <φ±|dφ⁰/dz> by central differences of the closed-form vectors.
        let c = cfg(5.0, 10.0, 0.0, AbsorptionSite::None);
        let h = 1e-5 * c.length;
        for &z in &[1.0, 3.0, 5.0, 6.5, 9.0] {
            let fwd = hermitian_spectrum(z + h, &c);
            let bwd = hermitian_spectrum(z - h, &c);
            let here = hermitian_spectrum(z, &c);
            let deriv = (fwd.vector(Level::Zero) - bwd.vector(Level::Zero)) / Complex64::from(2.0 * h);
            for lvl in [Level::Minus, Level::Plus] {
                let fd = c_dot(here.vector(lvl), &deriv).re;
                assert!((fd - nonadiabatic_coupling_analytic(z, &c)).abs() < 1e-6, "z = {z}");
            }
        }
    }
}
