//! Exact eigen-decomposition of 3x3 complex symmetric matrices.
//!
//! Eigenvalues come from the characteristic cubic (Cardano, then a guarded
//! Newton step); eigenvectors from the cross product of two rows of
//! `H - λ`. For a complex symmetric matrix the left eigenvector is the
//! transpose of the right one, so everything is normalized with the
//! bilinear c-product `<v̄|v> = Σ v_n²` instead of the Hermitian norm.

use std::f64::consts::PI;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::model::{self, c_dot, Level, Mat3, ModelConfig, Spectrum, State3};

/// Eigenvectors whose unit-normalized c-norm falls below this are treated
/// as coalescing (an exceptional point is near).
pub const EP_PROXIMITY: f64 = 1e-8;

/// Tolerance of the symmetry check, relative to `max(1, ‖H‖)`.
pub const SYMMETRY_TOL: f64 = 1e-12;

/// Maximum number of interval halvings when following labels along `z`.
pub const MAX_REFINEMENT: u32 = 10;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

/// Eigenvalues ordered `(E-, E0, E+)` with their c-normalized eigenvectors.
#[derive(Debug, Clone, PartialEq)]
pub struct EigenPairs {
    pub energies: [Complex64; 3],
    pub vectors: [State3; 3],
}

fn frobenius(h: &Mat3) -> f64 {
    h.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt()
}

/// Coefficients `(c2, c1, c0)` of `det(λ - H) = λ³ + c2 λ² + c1 λ + c0`.
fn char_poly(h: &Mat3) -> (Complex64, Complex64, Complex64) {
    let m = |i: usize, j: usize| h[(i, j)];
    let trace = m(0, 0) + m(1, 1) + m(2, 2);
    let minors = m(0, 0) * m(1, 1) - m(0, 1) * m(1, 0) + m(0, 0) * m(2, 2) - m(0, 2) * m(2, 0)
        + m(1, 1) * m(2, 2)
        - m(1, 2) * m(2, 1);
    let det = m(0, 0) * (m(1, 1) * m(2, 2) - m(1, 2) * m(2, 1))
        - m(0, 1) * (m(1, 0) * m(2, 2) - m(1, 2) * m(2, 0))
        + m(0, 2) * (m(1, 0) * m(2, 1) - m(1, 1) * m(2, 0));
    (-trace, minors, -det)
}

/// `(p, q)` of the depressed cubic `t³ + p t + q` with `λ = t - c2/3`.
fn depressed(c2: Complex64, c1: Complex64, c0: Complex64) -> (Complex64, Complex64) {
    let p = c1 - c2 * c2 / 3.0;
    let q = 2.0 * c2 * c2 * c2 / 27.0 - c2 * c1 / 3.0 + c0;
    (p, q)
}

fn principal_cbrt(x: Complex64) -> Complex64 {
    if x == ZERO {
        return ZERO;
    }
    Complex64::from_polar(x.norm().cbrt(), x.arg() / 3.0)
}

/// Roots of `λ³ + c2 λ² + c1 λ + c0` by Cardano's formula.
fn cardano(c2: Complex64, c1: Complex64, c0: Complex64) -> [Complex64; 3] {
    let shift = -c2 / 3.0;
    let (p, q) = depressed(c2, c1, c0);
    if p == ZERO && q == ZERO {
        return [shift; 3];
    }
    let s = (q * q / 4.0 + p * p * p / 27.0).sqrt();
    // Pick the branch that avoids cancellation in -q/2 ± s.
    let u3 = if (-q / 2.0 + s).norm() >= (-q / 2.0 - s).norm() {
        -q / 2.0 + s
    } else {
        -q / 2.0 - s
    };
    let u = principal_cbrt(u3);
    let rot = Complex64::from_polar(1.0, 2.0 * PI / 3.0);
    let mut roots = [ZERO; 3];
    let mut uk = u;
    for root in roots.iter_mut() {
        let t = if uk == ZERO { ZERO } else { uk - p / (3.0 * uk) };
        *root = t + shift;
        uk *= rot;
    }
    roots
}

fn polish(root: Complex64, c2: Complex64, c1: Complex64, c0: Complex64) -> Complex64 {
    let f = |x: Complex64| ((x + c2) * x + c1) * x + c0;
    let df = |x: Complex64| (3.0 * x + 2.0 * c2) * x + c1;
    let d = df(root);
    if d == ZERO {
        return root;
    }
    let next = root - f(root) / d;
    if next.is_finite() && f(next).norm() < f(root).norm() {
        next
    } else {
        root
    }
}

fn check_symmetric(h: &Mat3) -> Result<()> {
    let asym = (0..3)
        .flat_map(|i| (0..3).map(move |j| (i, j)))
        .map(|(i, j)| (h[(i, j)] - h[(j, i)]).norm())
        .fold(0.0, f64::max);
    if asym > SYMMETRY_TOL * frobenius(h).max(1.0) {
        return Err(Error::NotSymmetric(asym));
    }
    Ok(())
}

/// Null vector of the symmetric `H - λ` from the best-conditioned row cross
/// product, c-normalized with the largest component given a positive real
/// part.
fn eigenvector(h: &Mat3, energy: Complex64, scale: f64) -> Result<State3> {
    let mut m = *h;
    for k in 0..3 {
        m[(k, k)] -= energy;
    }
    let rows: [State3; 3] = [0, 1, 2].map(|i| m.row(i).transpose());
    let candidates = [rows[0].cross(&rows[1]), rows[0].cross(&rows[2]), rows[1].cross(&rows[2])];
    let best = candidates
        .into_iter()
        .max_by(|x, y| x.norm().total_cmp(&y.norm()))
        .expect("three candidates");
    let size = best.norm();
    if !(size > 1e-14 * scale * scale) {
        return Err(Error::Degenerate(energy));
    }
    let unit = best / Complex64::from(size);
    let c_norm = c_dot(&unit, &unit);
    if c_norm.norm() < EP_PROXIMITY {
        return Err(Error::NearDefective { energy, c_norm: c_norm.norm() });
    }
    let mut v = unit / c_norm.sqrt();
    let lead = v
        .iter()
        .copied()
        .max_by(|x, y| x.norm().total_cmp(&y.norm()))
        .expect("three components");
    if lead.re < 0.0 {
        v = -v;
    }
    Ok(v)
}

/// Full eigen-decomposition of a complex symmetric 3x3 matrix.
///
/// Energies are sorted by real part (then imaginary part). For real input
/// the results are exactly real.
pub fn eigensystem(h: &Mat3) -> Result<EigenPairs> {
    check_symmetric(h)?;
    let (c2, c1, c0) = char_poly(h);
    let mut energies = cardano(c2, c1, c0).map(|r| polish(r, c2, c1, c0));
    let real_input = h.iter().all(|x| x.im == 0.0);
    if real_input {
        for e in energies.iter_mut() {
            e.im = 0.0;
        }
    }
    energies.sort_by(|x, y| x.re.total_cmp(&y.re).then(x.im.total_cmp(&y.im)));

    let scale = frobenius(h).max(1e-300);
    let mut vectors = [State3::zeros(); 3];
    for (v, &e) in vectors.iter_mut().zip(&energies) {
        *v = eigenvector(h, e, scale)?;
        if real_input {
            v.iter_mut().for_each(|c| c.im = 0.0);
        }
    }
    Ok(EigenPairs { energies, vectors })
}

/// Spectrum of `H(z)` at a (possibly complex) point.
pub fn spectrum_at(z: Complex64, cfg: &ModelConfig) -> Result<Spectrum> {
    let h = model::hamiltonian(z, cfg);
    let pairs = eigensystem(&h)?;
    let (theta, omega) = model::mixing_complex(z, cfg);
    Ok(Spectrum { z, energies: pairs.energies, vectors: pairs.vectors, theta, omega })
}

pub fn spectrum_at_real(z: f64, cfg: &ModelConfig) -> Result<Spectrum> {
    spectrum_at(z.into(), cfg)
}

/// Scale-free measure of how close `H` is to a triple eigenvalue.
///
/// With `t³ + p t + q` the depressed characteristic polynomial, a triple
/// root means `p = q = 0`. Returns `max(|p|, |q|^(2/3)) / max(1, ‖H‖²)`.
/// Unlike the eigenvalue spread (which grows like the cube root of any
/// perturbation at an EP3), this is linear in the distance to the EP.
pub fn coalescence_residual(h: &Mat3) -> f64 {
    let (c2, c1, c0) = char_poly(h);
    let (p, q) = depressed(c2, c1, c0);
    p.norm().max(q.norm().powf(2.0 / 3.0)) / frobenius(h).powi(2).max(1.0)
}

/// Largest pairwise distance between the three eigenvalues of `H`.
pub fn eigenvalue_spread(h: &Mat3) -> f64 {
    let (c2, c1, c0) = char_poly(h);
    let e = cardano(c2, c1, c0).map(|r| polish(r, c2, c1, c0));
    (e[0] - e[1]).norm().max((e[1] - e[2]).norm()).max((e[0] - e[2]).norm())
}

/// Spectra along a real grid with labels and eigenvector signs continuous in
/// `z`.
#[derive(Debug, Clone)]
pub struct AlignedSpectrumPath {
    pub cfg: ModelConfig,
    pub zs: Vec<f64>,
    pub spectra: Vec<Spectrum>,
}

impl AlignedSpectrumPath {
    pub fn len(&self) -> usize {
        self.zs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.zs.is_empty()
    }

    /// Index of the grid point closest to `z`.
    pub fn nearest(&self, z: f64) -> usize {
        let k = self.zs.partition_point(|&x| x < z);
        if k == 0 {
            return 0;
        }
        if k == self.zs.len() {
            return k - 1;
        }
        if (self.zs[k] - z).abs() < (z - self.zs[k - 1]).abs() {
            k
        } else {
            k - 1
        }
    }

    /// Exact spectrum at an arbitrary `z`, with labels and signs matched to
    /// the nearest grid point.
    pub fn spectrum_near(&self, z: f64) -> Result<Spectrum> {
        let reference = &self.spectra[self.nearest(z)];
        let candidate = spectrum_at_real(z, &self.cfg)?;
        align_to(reference, candidate).ok_or(Error::RefinementLimit {
            from: reference.z.re,
            to: z,
        })
    }
}

const PERMUTATIONS: [[usize; 3]; 6] =
    [[0, 1, 2], [0, 2, 1], [1, 0, 2], [1, 2, 0], [2, 0, 1], [2, 1, 0]];

/// Relabel and re-sign `candidate` to continue `reference`.
///
/// Returns `None` when the match is ambiguous: some eigenvalue is not
/// strictly closest to its own predecessor, or an eigenvector turned too far
/// to fix its sign reliably.
pub fn align_to(reference: &Spectrum, candidate: Spectrum) -> Option<Spectrum> {
    let cost = |perm: &[usize; 3]| -> f64 {
        (0..3).map(|j| (candidate.energies[perm[j]] - reference.energies[j]).norm()).sum()
    };
    let perm = PERMUTATIONS
        .iter()
        .min_by(|p, q| cost(p).total_cmp(&cost(q)))
        .copied()
        .expect("non-empty");
    let energies = perm.map(|k| candidate.energies[k]);
    let mut vectors = perm.map(|k| candidate.vectors[k]);

    for j in 0..3 {
        let own = (energies[j] - reference.energies[j]).norm();
        for i in 0..3 {
            if i != j && own >= (energies[j] - reference.energies[i]).norm() {
                return None;
            }
        }
        let overlap = c_dot(&reference.vectors[j], &vectors[j]);
        if overlap.norm() < 0.5 {
            return None;
        }
        if overlap.re < 0.0 {
            vectors[j] = -vectors[j];
        }
    }
    Some(Spectrum { energies, vectors, ..candidate })
}

fn continue_to(
    cfg: &ModelConfig,
    prev: &Spectrum,
    z_from: f64,
    z_to: f64,
    depth: u32,
) -> Result<Spectrum> {
    let candidate = spectrum_at_real(z_to, cfg)?;
    if let Some(s) = align_to(prev, candidate) {
        return Ok(s);
    }
    if depth >= MAX_REFINEMENT {
        return Err(Error::RefinementLimit { from: z_from, to: z_to });
    }
    let mid = 0.5 * (z_from + z_to);
    let at_mid = continue_to(cfg, prev, z_from, mid, depth + 1)?;
    continue_to(cfg, &at_mid, mid, z_to, depth + 1)
}

/// Follow the spectrum along `zs` (strictly monotone, inside `[0, L]`).
///
/// Labels at the first point are assigned by real part; afterwards they
/// follow eigenvalue continuity, halving intervals up to
/// [`MAX_REFINEMENT`] times where neighbouring points are ambiguous.
pub fn align_path(cfg: &ModelConfig, zs: &[f64]) -> Result<AlignedSpectrumPath> {
    cfg.validate()?;
    if zs.is_empty() {
        return Err(Error::InvalidConfig("empty z grid".into()));
    }
    let increasing = zs.windows(2).all(|w| w[1] > w[0]);
    let decreasing = zs.windows(2).all(|w| w[1] < w[0]);
    if !(increasing || decreasing) {
        return Err(Error::InvalidConfig("z grid must be strictly monotone".into()));
    }
    let span = 1e-12 * cfg.length;
    if zs.iter().any(|&z| z < -span || z > cfg.length + span) {
        return Err(Error::InvalidConfig("z grid must lie inside [0, L]".into()));
    }

    let mut spectra = Vec::with_capacity(zs.len());
    spectra.push(spectrum_at_real(zs[0], cfg)?);
    for w in zs.windows(2) {
        let prev = spectra.last().expect("non-empty");
        let next = continue_to(cfg, prev, w[0], w[1], 0)?;
        spectra.push(next);
    }
    Ok(AlignedSpectrumPath { cfg: *cfg, zs: zs.to_vec(), spectra })
}

/// Uniform grid of `n` points on `[0, L]`.
pub fn uniform_grid(length: f64, n: usize) -> Vec<f64> {
    assert!(n >= 2, "grid needs at least two points");
    (0..n).map(|k| length * k as f64 / (n - 1) as f64).collect()
}

/// Derivative at `x0` of the quadratic through three points.
fn lagrange_derivative(x0: f64, xs: [f64; 3], fs: [State3; 3]) -> State3 {
    let mut out = State3::zeros();
    for i in 0..3 {
        let mut weight = 0.0;
        for j in 0..3 {
            if j == i {
                continue;
            }
            let mut term = 1.0 / (xs[i] - xs[j]);
            for m in 0..3 {
                if m != i && m != j {
                    term *= (x0 - xs[m]) / (xs[i] - xs[m]);
                }
            }
            weight += term;
        }
        out += fs[i] * Complex64::from(weight);
    }
    out
}

/// Finite-difference nonadiabatic coupling `<φ̄^j | dφ^k/dz>` at a grid
/// point of an aligned path.
///
/// Interior points use the three-point central formula (second order on
/// any grid); the two end points use the one-sided three-point formula,
/// which has a larger error constant.
pub fn numeric_coupling(path: &AlignedSpectrumPath, j: Level, k: Level, index: usize) -> Result<Complex64> {
    let n = path.len();
    if n < 3 {
        return Err(Error::InvalidConfig("finite differences need at least three grid points".into()));
    }
    if index >= n {
        return Err(Error::InvalidConfig(format!("grid index {index} out of range")));
    }
    let centre = index.clamp(1, n - 2);
    let ids = [centre - 1, centre, centre + 1];
    let xs = ids.map(|i| path.zs[i]);
    let fs = ids.map(|i| path.spectra[i].vectors[k.index()]);
    let deriv = lagrange_derivative(path.zs[index], xs, fs);
    Ok(c_dot(&path.spectra[index].vectors[j.index()], &deriv))
}

/// Coupling from the eigenvector-derivative identity
/// `<φ̄^j | dφ^k/dz> = <φ̄^j | H' | φ^k> / (E_k - E_j)` for `j ≠ k`, zero for
/// `j = k` (c-normalization).
///
/// Exact up to rounding, but only meaningful within a frame whose signs
/// vary continuously, such as an [`AlignedSpectrumPath`].
pub fn derivative_coupling(spectrum: &Spectrum, dh: &Mat3, j: Level, k: Level) -> Complex64 {
    if j == k {
        return ZERO;
    }
    let (j, k) = (j.index(), k.index());
    let num = c_dot(&spectrum.vectors[j], &(dh * spectrum.vectors[k]));
    num / (spectrum.energies[k] - spectrum.energies[j])
}

/// All nine couplings `C[j][k] = <φ̄^j | dφ^k/dz>` at `spectrum.z`.
pub fn coupling_matrix(spectrum: &Spectrum, cfg: &ModelConfig) -> [[Complex64; 3]; 3] {
    let dh = model::hamiltonian_derivative(spectrum.z.re, cfg);
    let mut c = [[ZERO; 3]; 3];
    for j in Level::ALL {
        for k in Level::ALL {
            c[j.index()][k.index()] = derivative_coupling(spectrum, &dh, j, k);
        }
    }
    c
}

/// Central-difference coupling at an arbitrary `z` with one Richardson
/// extrapolation (`h`, `h/2`), aligned to `reference`.
pub fn richardson_coupling(
    cfg: &ModelConfig,
    reference: &Spectrum,
    j: Level,
    k: Level,
    h: f64,
) -> Result<Complex64> {
    let z = reference.z.re;
    let at = |dz: f64| -> Result<State3> {
        let s = spectrum_at_real(z + dz, cfg)?;
        let s = align_to(reference, s).ok_or(Error::RefinementLimit { from: z, to: z + dz })?;
        Ok(s.vectors[k.index()])
    };
    let d1 = (at(h)? - at(-h)?) / Complex64::from(2.0 * h);
    let d2 = (at(h / 2.0)? - at(-h / 2.0)?) / Complex64::from(h);
    let d = (d2 * Complex64::from(4.0) - d1) / Complex64::from(3.0);
    Ok(c_dot(&reference.vectors[j.index()], &d))
}
