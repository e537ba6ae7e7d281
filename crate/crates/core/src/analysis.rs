//! Scalar diagnostics and the analytic threshold estimates.

use std::f64::consts::{LN_2, PI};

use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::State3;
use crate::propagate::Coeffs;
use crate::sweep::PhaseDiagram;

/// Squared norms below this are treated as total absorption.
pub const ZERO_NORM_FLOOR: f64 = 1e-300;

/// Threshold crossing level for the numerical boundary.
pub const CROSSING_LEVEL: f64 = 0.5;
/// Levels bracketing the transition for the width measurement.
pub const WIDTH_LEVELS: (f64, f64) = (0.9, 0.1);

/// `Γ(3/4)`.
pub fn gamma_three_quarters() -> f64 {
    statrs::function::gamma::gamma(0.75)
}

/// Decay rate of the Landau-Zener estimate per unit length,
/// `2 Γ²(3/4) / (a √π)`.
pub fn lz_rate(a: f64) -> f64 {
    2.0 * gamma_three_quarters().powi(2) / (a * PI.sqrt())
}

fn check_a(a: f64) -> Result<()> {
    if !(a.is_finite() && a > 0.0) {
        return Err(Error::InvalidConfig(format!("a must be > 0, got {a}")));
    }
    Ok(())
}

fn check_length(length: f64) -> Result<()> {
    if !(length.is_finite() && length > 0.0) {
        return Err(Error::InvalidConfig(format!("L must be > 0, got {length}")));
    }
    Ok(())
}

/// `P_nonad ≈ exp(-2 Γ²(3/4) L / (a √π))`.
pub fn lz_estimate(a: f64, length: f64) -> Result<f64> {
    check_a(a)?;
    if !(length >= 0.0) {
        return Err(Error::InvalidConfig(format!("L must be >= 0, got {length}")));
    }
    Ok((-lz_rate(a) * length).exp())
}

/// The same estimate from its defining integral,
/// `exp(-2 ∫_0^{Im z0} sqrt(2 cos(2aξ/L)) dξ)`, by adaptive quadrature.
///
/// The square-root zero at the upper limit is removed with
/// `u = 2aξ/L = π/2 - t²`.
pub fn lz_estimate_quadrature(a: f64, length: f64) -> Result<f64> {
    check_a(a)?;
    if !(length >= 0.0) {
        return Err(Error::InvalidConfig(format!("L must be >= 0, got {length}")));
    }
    let t_max = (PI / 2.0).sqrt();
    let integrand = |t: f64| 2.0 * t * (2.0 * (t * t).sin()).sqrt();
    let reduced = adaptive_simpson(&integrand, 0.0, t_max, 1e-14);
    let integral = length / (2.0 * a) * reduced;
    Ok((-2.0 * integral).exp())
}

fn adaptive_simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    fn simpson(fa: f64, fm: f64, fb: f64, a: f64, b: f64) -> f64 {
        (b - a) / 6.0 * (fa + 4.0 * fm + fb)
    }
    #[allow(clippy::too_many_arguments)]
    fn recurse(
        f: &dyn Fn(f64) -> f64,
        a: f64,
        b: f64,
        fa: f64,
        fm: f64,
        fb: f64,
        whole: f64,
        tol: f64,
        depth: u32,
    ) -> f64 {
        let m = 0.5 * (a + b);
        let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
        let (flm, frm) = (f(lm), f(rm));
        let left = simpson(fa, flm, fm, a, m);
        let right = simpson(fm, frm, fb, m, b);
        let delta = left + right - whole;
        if depth == 0 || delta.abs() <= 15.0 * tol {
            return left + right + delta / 15.0;
        }
        recurse(f, a, m, fa, flm, fm, left, tol / 2.0, depth - 1)
            + recurse(f, m, b, fm, frm, fb, right, tol / 2.0, depth - 1)
    }
    let (fa, fm, fb) = (f(a), f(0.5 * (a + b)), f(b));
    recurse(f, a, b, fa, fm, fb, simpson(fa, fm, fb, a, b), tol, 50)
}

/// `|c1|² / Σ|cn|²`.
pub fn transfer_probability(state: &State3) -> Result<f64> {
    let total: f64 = state.iter().map(|c| c.norm_sqr()).sum();
    if !(total > ZERO_NORM_FLOOR) {
        return Err(Error::ZeroNorm(total));
    }
    Ok((state[0].norm_sqr() / total).clamp(0.0, 1.0))
}

/// `|a0|² / (|a0|² + 2|a±|²)` with `|a±|²` the mean of both bright
/// populations.
pub fn transfer_probability_adiabatic(coeffs: &Coeffs) -> Result<f64> {
    let dark = coeffs[1].norm_sqr();
    let bright = coeffs[0].norm_sqr() + coeffs[2].norm_sqr();
    let total = dark + bright;
    if !(total > ZERO_NORM_FLOOR) {
        return Err(Error::ZeroNorm(total));
    }
    Ok((dark / total).clamp(0.0, 1.0))
}

/// Per-state nonadiabatic probability `(|a+|² + |a-|²) / 2`.
pub fn nonadiabatic_probability(coeffs: &Coeffs) -> f64 {
    0.5 * (coeffs[0].norm_sqr() + coeffs[2].norm_sqr())
}

/// Total bright-state population `|a+|² + |a-|²`.
pub fn nonadiabatic_probability_summed(coeffs: &Coeffs) -> f64 {
    coeffs[0].norm_sqr() + coeffs[2].norm_sqr()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ThresholdMethod {
    LzAnalytic,
    SemiAnalytic,
    SweepExtraction,
    InitialSiteAnalytic,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Default)]
pub struct ThresholdInputs {
    pub a: Option<f64>,
    #[serde(rename = "L")]
    pub length: f64,
    pub p_nonad: Option<f64>,
    /// Large-`L` limit, where the method has one.
    pub asymptote: Option<f64>,
}

/// Critical absorption and the width of the transition around it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ThresholdEstimate {
    pub gamma_cr: f64,
    pub width: f64,
    pub method: ThresholdMethod,
    pub inputs: ThresholdInputs,
}

impl ThresholdEstimate {
    /// Positive threshold that is sharper than its own value.
    pub fn is_valid(&self) -> bool {
        self.gamma_cr > 0.0 && self.width > 0.0 && self.width < self.gamma_cr
    }
}

/// `γ_cr = ln(1/(2 P_nonad) - 1) / L`, width `2/L`.
///
/// Defined for `0 < P_nonad < 1/2`; the threshold is non-positive once
/// `P_nonad ≥ 1/4`.
pub fn gamma_cr_from_pnonad(p_nonad: f64, length: f64) -> Result<ThresholdEstimate> {
    check_length(length)?;
    if !(p_nonad > 0.0 && p_nonad < 0.5) {
        return Err(Error::NoThreshold(format!("P_nonad = {p_nonad} is outside (0, 1/2)")));
    }
    // ln(1/(2p) - 1) = ln(1 - 2p) - ln(2p), without cancellation for small p.
    let gamma_cr = ((-2.0 * p_nonad).ln_1p() - (2.0 * p_nonad).ln()) / length;
    Ok(ThresholdEstimate {
        gamma_cr,
        width: 2.0 / length,
        method: ThresholdMethod::SemiAnalytic,
        inputs: ThresholdInputs { a: None, length, p_nonad: Some(p_nonad), asymptote: None },
    })
}

/// Threshold with `P_nonad` from the Landau-Zener estimate:
/// `γ_cr = ln(e^{κL}/2 - 1) / L`, `κ = 2Γ²(3/4)/(a√π)`, with asymptote
/// `κ - ln2 / L`.
pub fn gamma_cr_lz(a: f64, length: f64) -> Result<ThresholdEstimate> {
    check_a(a)?;
    check_length(length)?;
    let kappa = lz_rate(a);
    let x = kappa * length;
    if x <= LN_2 {
        return Err(Error::NoThreshold(format!(
            "device too short: exp({x:.6})/2 - 1 <= 0 for a = {a}, L = {length}"
        )));
    }
    // ln(e^x/2 - 1) = x - ln2 + ln(1 - 2e^{-x})
    let gamma_cr = (x - LN_2 + (-2.0 * (-x).exp()).ln_1p()) / length;
    let asymptote = kappa - LN_2 / length;
    Ok(ThresholdEstimate {
        gamma_cr,
        width: 2.0 / length,
        method: ThresholdMethod::LzAnalytic,
        inputs: ThresholdInputs { a: Some(a), length, p_nonad: Some((-x).exp()), asymptote: Some(asymptote) },
    })
}

/// Threshold for absorption in the launch waveguide,
/// `γ_cr = (4/L) ln(L / (2a e^{-3a/2}))`.
pub fn gamma_cr_initial(a: f64, length: f64) -> Result<ThresholdEstimate> {
    check_a(a)?;
    check_length(length)?;
    let ratio = length / (2.0 * a * (-1.5 * a).exp());
    if ratio <= 1.0 {
        return Err(Error::NoThreshold(format!(
            "L = {length} is below 2a e^(-3a/2) = {}",
            2.0 * a * (-1.5 * a).exp()
        )));
    }
    Ok(ThresholdEstimate {
        gamma_cr: 4.0 / length * ratio.ln(),
        width: 2.0 / length,
        method: ThresholdMethod::InitialSiteAnalytic,
        inputs: ThresholdInputs { a: Some(a), length, p_nonad: None, asymptote: None },
    })
}

/// Piecewise cubic Hermite interpolant with Fritsch-Butland slopes; it is
/// monotone on every interval where the data are.
#[derive(Debug, Clone)]
pub struct MonotoneCubic {
    xs: Vec<f64>,
    ys: Vec<f64>,
    slopes: Vec<f64>,
}

impl MonotoneCubic {
    pub fn new(xs: &[f64], ys: &[f64]) -> Result<Self> {
        if xs.len() != ys.len() || xs.len() < 2 {
            return Err(Error::InvalidConfig("interpolation needs two or more matching points".into()));
        }
        if xs.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidConfig("interpolation nodes must increase strictly".into()));
        }
        let n = xs.len();
        let secant: Vec<f64> = (0..n - 1).map(|i| (ys[i + 1] - ys[i]) / (xs[i + 1] - xs[i])).collect();
        let mut slopes = vec![0.0; n];
        slopes[0] = secant[0];
        slopes[n - 1] = secant[n - 2];
        for i in 1..n - 1 {
            let (d0, d1) = (secant[i - 1], secant[i]);
            if d0 * d1 > 0.0 {
                let (h0, h1) = (xs[i] - xs[i - 1], xs[i + 1] - xs[i]);
                let (w0, w1) = (2.0 * h1 + h0, h1 + 2.0 * h0);
                slopes[i] = (w0 + w1) / (w0 / d0 + w1 / d1);
            }
        }
        // Keep the end slopes inside the monotone region.
        for (end, d) in [(0, secant[0]), (n - 1, secant[n - 2])] {
            if slopes[end] * d <= 0.0 {
                slopes[end] = 0.0;
            } else if slopes[end].abs() > 3.0 * d.abs() {
                slopes[end] = 3.0 * d;
            }
        }
        Ok(MonotoneCubic { xs: xs.to_vec(), ys: ys.to_vec(), slopes })
    }

    fn segment(&self, i: usize, x: f64) -> f64 {
        let h = self.xs[i + 1] - self.xs[i];
        let t = (x - self.xs[i]) / h;
        let (t2, t3) = (t * t, t * t * t);
        let h00 = 2.0 * t3 - 3.0 * t2 + 1.0;
        let h10 = t3 - 2.0 * t2 + t;
        let h01 = -2.0 * t3 + 3.0 * t2;
        let h11 = t3 - t2;
        h00 * self.ys[i] + h10 * h * self.slopes[i] + h01 * self.ys[i + 1] + h11 * h * self.slopes[i + 1]
    }

    pub fn eval(&self, x: f64) -> f64 {
        let n = self.xs.len();
        let i = self.xs.partition_point(|&v| v <= x).saturating_sub(1).min(n - 2);
        self.segment(i, x)
    }

    /// Root of `f(x) = level` on segment `i` by bisection; the segment must
    /// bracket the level.
    fn solve_on(&self, i: usize, level: f64) -> f64 {
        let (mut lo, mut hi) = (self.xs[i], self.xs[i + 1]);
        let rising = self.ys[i + 1] > self.ys[i];
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            let above = self.segment(i, mid) >= level;
            if above != rising {
                lo = mid;
            } else {
                hi = mid;
            }
            if hi - lo <= 1e-15 * (1.0 + hi.abs()) {
                break;
            }
        }
        0.5 * (lo + hi)
    }

    /// First downward crossing of `level` at or after node `from`.
    pub fn first_fall_below(&self, level: f64, from: usize) -> Option<(usize, f64)> {
        (from..self.xs.len() - 1)
            .find(|&i| self.ys[i] >= level && self.ys[i + 1] < level)
            .map(|i| (i, self.solve_on(i, level)))
    }

    /// Last downward crossing of `level` on a segment with index `<= upto`.
    pub fn last_fall_below(&self, level: f64, upto: usize) -> Option<(usize, f64)> {
        (0..=upto.min(self.xs.len() - 2))
            .rev()
            .find(|&i| self.ys[i] >= level && self.ys[i + 1] < level)
            .map(|i| (i, self.solve_on(i, level)))
    }
}

/// Threshold from one `P(γ)` column: the first downward crossing of 0.5
/// scanning up from the smallest `γ`, width `γ(P=0.1) - γ(P=0.9)` on the
/// same interpolant, or `NaN` when the column does not span both levels
/// around the crossing. Stopping at the first crossing keeps re-entrant
/// high-`P` islands at larger `γ` out of the estimate.
pub fn threshold_from_column(gammas: &[f64], probabilities: &[f64], length: f64) -> Result<ThresholdEstimate> {
    let interp = MonotoneCubic::new(gammas, probabilities)?;
    let (seg, gamma_cr) = interp
        .first_fall_below(CROSSING_LEVEL, 0)
        .ok_or(Error::NoCrossing { level: CROSSING_LEVEL })?;
    let (hi_level, lo_level) = WIDTH_LEVELS;
    let width = match (interp.last_fall_below(hi_level, seg), interp.first_fall_below(lo_level, seg)) {
        (Some((_, upper)), Some((_, lower))) => lower - upper,
        _ => f64::NAN,
    };
    Ok(ThresholdEstimate {
        gamma_cr,
        width,
        method: ThresholdMethod::SweepExtraction,
        inputs: ThresholdInputs { a: None, length, p_nonad: None, asymptote: None },
    })
}

/// [`threshold_from_column`] on the `γ` column of a phase diagram at
/// length `L`, linearly interpolating between neighbouring `L` rows when
/// `L` is not on the grid.
pub fn threshold_from_sweep(diagram: &PhaseDiagram, length: f64) -> Result<ThresholdEstimate> {
    let ls = &diagram.lengths;
    let column: Vec<f64> = match ls.iter().position(|&l| (l - length).abs() <= 1e-9 * length.abs().max(1.0)) {
        Some(li) => diagram.row(li).to_vec(),
        None => {
            let k = ls.partition_point(|&l| l < length);
            if k == 0 || k == ls.len() {
                return Err(Error::InvalidConfig(format!("L = {length} is outside the diagram")));
            }
            let t = (length - ls[k - 1]) / (ls[k] - ls[k - 1]);
            diagram
                .row(k - 1)
                .iter()
                .zip(diagram.row(k))
                .map(|(p0, p1)| p0 + t * (p1 - p0))
                .collect()
        }
    };
    if column.iter().any(|p| !p.is_finite()) {
        return Err(Error::InvalidConfig(format!("diagram column at L = {length} has holes")));
    }
    let mut est = threshold_from_column(&diagram.gammas, &column, length)?;
    est.inputs.a = Some(diagram.a);
    Ok(est)
}

/// Least-squares line through `(x, y)`: returns `(slope, intercept)`.
pub fn linear_fit(xs: &[f64], ys: &[f64]) -> Result<(f64, f64)> {
    if xs.len() != ys.len() || xs.len() < 2 {
        return Err(Error::InvalidConfig("line fit needs two or more matching points".into()));
    }
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    if sxx == 0.0 {
        return Err(Error::InvalidConfig("line fit needs distinct abscissae".into()));
    }
    let slope = sxy / sxx;
    Ok((slope, my - slope * mx))
}
