//! Dormand-Prince 5(4) with PI step-size control and Hairer's 4th-order
//! continuous extension, specialised to small complex state vectors.

use num_complex::Complex64;
use serde::Serialize;

use crate::error::{Error, Result};

const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;

const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const A71: f64 = 35.0 / 384.0;
const A73: f64 = 500.0 / 1113.0;
const A74: f64 = 125.0 / 192.0;
const A75: f64 = -2187.0 / 6784.0;
const A76: f64 = 11.0 / 84.0;

const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

const D1: f64 = -12715105075.0 / 11282082432.0;
const D3: f64 = 87487479700.0 / 32700410799.0;
const D4: f64 = -10690763975.0 / 1880347072.0;
const D5: f64 = 701980252875.0 / 199316789632.0;
const D6: f64 = -1453857185.0 / 822651844.0;
const D7: f64 = 69997945.0 / 29380423.0;

const SAFETY: f64 = 0.9;
const FAC_MIN: f64 = 0.2;
const FAC_MAX: f64 = 10.0;
const BETA: f64 = 0.04;

pub type Vector<const N: usize> = [Complex64; N];

#[derive(Debug, Clone, Copy)]
pub struct Dopri5Options {
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub max_step: f64,
    /// Steps shorter than this abort the integration.
    pub min_step: f64,
    pub max_steps: usize,
}

/// Work counters of one integration.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct IntegratorStats {
    pub accepted: usize,
    pub rejected: usize,
    pub evaluations: usize,
    /// Sum over accepted steps of the largest local error estimate, a
    /// crude bound on the accumulated global error.
    pub error_sum: f64,
}

impl std::ops::AddAssign for IntegratorStats {
    fn add_assign(&mut self, rhs: Self) {
        self.accepted += rhs.accepted;
        self.rejected += rhs.rejected;
        self.evaluations += rhs.evaluations;
        self.error_sum += rhs.error_sum;
    }
}

fn axpy<const N: usize>(y: &Vector<N>, h: f64, terms: &[(f64, &Vector<N>)]) -> Vector<N> {
    let mut out = *y;
    for (c, k) in terms {
        if *c == 0.0 {
            continue;
        }
        for i in 0..N {
            out[i] += k[i] * (h * c);
        }
    }
    out
}

/// Integrate `y' = f(z, y)` from `z0` to `z1 > z0`, returning the solution
/// at each of `samples` (non-decreasing, inside `[z0, z1]`) via dense
/// output.
pub fn integrate<const N: usize, F>(
    mut f: F,
    z0: f64,
    z1: f64,
    y0: Vector<N>,
    samples: &[f64],
    opts: &Dopri5Options,
) -> Result<(Vec<Vector<N>>, IntegratorStats)>
where
    F: FnMut(f64, &Vector<N>) -> Result<Vector<N>>,
{
    if !(z1 > z0) {
        return Err(Error::InvalidConfig(format!("integration interval [{z0}, {z1}] is empty")));
    }
    let mut stats = IntegratorStats::default();
    let mut out = Vec::with_capacity(samples.len());
    let mut next_sample = 0;
    let mut emit = |z_upto: f64, last: bool, out: &mut Vec<Vector<N>>, dense: &dyn Fn(f64) -> Vector<N>| {
        while next_sample < samples.len() && (samples[next_sample] <= z_upto || last) {
            out.push(dense(samples[next_sample]));
            next_sample += 1;
        }
    };
    // Samples sitting on z0 are the initial state.
    emit(z0, false, &mut out, &|_| y0);

    let scale = |a: &Vector<N>, b: &Vector<N>, i: usize| {
        opts.abs_tol + opts.rel_tol * a[i].norm().max(b[i].norm())
    };

    let mut z = z0;
    let mut y = y0;
    let mut k1 = f(z, &y)?;
    stats.evaluations += 1;

    // Initial step from the size of the derivative.
    let d0 = (0..N).map(|i| (y[i].norm() / scale(&y, &y, i)).powi(2)).sum::<f64>() / N as f64;
    let d1 = (0..N).map(|i| (k1[i].norm() / scale(&y, &y, i)).powi(2)).sum::<f64>() / N as f64;
    let mut h = if d0 < 1e-10 || d1 < 1e-10 { 1e-6 } else { 0.01 * (d0 / d1).sqrt() };
    h = h.min(opts.max_step).min(z1 - z0);
    let mut fac_old = 1e-4f64;
    let mut last_rejected = false;

    loop {
        if stats.accepted + stats.rejected >= opts.max_steps {
            return Err(Error::StepFailure { z, h });
        }
        let finishing = z + h >= z1 - 1e-14 * (z1 - z0);
        if finishing {
            h = z1 - z;
        }
        if h < opts.min_step && !finishing {
            return Err(Error::StepFailure { z, h });
        }

        let k2 = f(z + C2 * h, &axpy(&y, h, &[(A21, &k1)]))?;
        let k3 = f(z + C3 * h, &axpy(&y, h, &[(A31, &k1), (A32, &k2)]))?;
        let k4 = f(z + C4 * h, &axpy(&y, h, &[(A41, &k1), (A42, &k2), (A43, &k3)]))?;
        let k5 = f(z + C5 * h, &axpy(&y, h, &[(A51, &k1), (A52, &k2), (A53, &k3), (A54, &k4)]))?;
        let k6 = f(
            z + h,
            &axpy(&y, h, &[(A61, &k1), (A62, &k2), (A63, &k3), (A64, &k4), (A65, &k5)]),
        )?;
        let y_new = axpy(&y, h, &[(A71, &k1), (A73, &k3), (A74, &k4), (A75, &k5), (A76, &k6)]);
        let k7 = f(z + h, &y_new)?;
        stats.evaluations += 6;

        let err_vec = axpy(
            &[Complex64::new(0.0, 0.0); N],
            h,
            &[(E1, &k1), (E3, &k3), (E4, &k4), (E5, &k5), (E6, &k6), (E7, &k7)],
        );
        let err = ((0..N).map(|i| (err_vec[i].norm() / scale(&y, &y_new, i)).powi(2)).sum::<f64>()
            / N as f64)
            .sqrt();
        if !err.is_finite() {
            return Err(Error::StepFailure { z, h });
        }

        if err <= 1.0 {
            stats.accepted += 1;
            stats.error_sum += err_vec.iter().map(|e| e.norm()).fold(0.0, f64::max);

            let z_new = if finishing { z1 } else { z + h };
            // Continuous extension on [z, z + h].
            let mut r2 = [Complex64::new(0.0, 0.0); N];
            let mut r3 = r2;
            let mut r4 = r2;
            let mut r5 = r2;
            for i in 0..N {
                let dy = y_new[i] - y[i];
                let bspl = k1[i] * h - dy;
                r2[i] = dy;
                r3[i] = bspl;
                r4[i] = dy - k7[i] * h - bspl;
                r5[i] = (k1[i] * D1 + k3[i] * D3 + k4[i] * D4 + k5[i] * D5 + k6[i] * D6 + k7[i] * D7) * h;
            }
            let (y_old, z_old, h_step) = (y, z, h);
            let dense = move |zs: f64| -> Vector<N> {
                let t = ((zs - z_old) / h_step).clamp(0.0, 1.0);
                let t1 = 1.0 - t;
                let mut v = [Complex64::new(0.0, 0.0); N];
                for i in 0..N {
                    v[i] = y_old[i] + (r2[i] + (r3[i] + (r4[i] + r5[i] * t1) * t) * t1) * t;
                }
                v
            };
            emit(z_new, finishing, &mut out, &dense);

            y = y_new;
            k1 = k7;
            z = z_new;
            if finishing {
                break;
            }

            let err_c = err.max(1e-10);
            let mut fac = err_c.powf(0.2 - BETA * 0.75) / fac_old.powf(BETA) / SAFETY;
            fac = fac.clamp(1.0 / FAC_MAX, 1.0 / FAC_MIN);
            let mut h_new = h / fac;
            if last_rejected {
                h_new = h_new.min(h);
            }
            fac_old = err_c;
            h = h_new.min(opts.max_step);
            last_rejected = false;
        } else {
            stats.rejected += 1;
            let fac = (err.powf(0.2) / SAFETY).min(1.0 / FAC_MIN);
            h /= fac;
            last_rejected = true;
        }
    }
    Ok((out, stats))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn opts(tol: f64) -> Dopri5Options {
        Dopri5Options { rel_tol: tol, abs_tol: tol, max_step: 1.0, min_step: 1e-12, max_steps: 1_000_000 }
    }

    #[test]
    fn harmonic_phase() {
        // y' = -i ω y  =>  y(z) = exp(-i ω z)
        let omega = 3.0;
        let samples: Vec<f64> = (0..=50).map(|k| k as f64 * 0.2).collect();
        let (ys, stats) = integrate(
            |_, y: &Vector<1>| Ok([Complex64::new(0.0, -omega) * y[0]]),
            0.0,
            10.0,
            [Complex64::new(1.0, 0.0)],
            &samples,
            &opts(1e-10),
        )
        .unwrap();
        assert_eq!(ys.len(), samples.len());
        for (y, &z) in ys.iter().zip(&samples) {
            let exact = Complex64::from_polar(1.0, -omega * z);
            assert!((y[0] - exact).norm() < 1e-8, "z = {z}");
        }
        assert!(stats.accepted > 10);
    }

    #[test]
    fn dense_output_is_fourth_order() {
        // Sample mid-step on a problem where the step is forced large.
        let (ys, _) = integrate(
            |z, _y: &Vector<1>| Ok([Complex64::new(z.cos(), 0.0)]),
            0.0,
            3.0,
            [Complex64::new(0.0, 0.0)],
            &[0.37, 1.4, 2.9, 3.0],
            &opts(1e-12),
        )
        .unwrap();
        for (y, z) in ys.iter().zip([0.37f64, 1.4, 2.9, 3.0]) {
            assert!((y[0].re - z.sin()).abs() < 1e-9);
        }
    }

    #[test]
    fn errors_propagate_and_interval_checked() {
        let r = integrate(
            |z, _y: &Vector<1>| {
                if z > 0.5 {
                    Err(Error::InvalidConfig("boom".into()))
                } else {
                    Ok([Complex64::new(1.0, 0.0)])
                }
            },
            0.0,
            1.0,
            [Complex64::new(0.0, 0.0)],
            &[1.0],
            &opts(1e-8),
        );
        assert!(r.is_err());
        let r = integrate(|_, y: &Vector<1>| Ok(*y), 1.0, 1.0, [Complex64::new(1.0, 0.0)], &[], &opts(1e-8));
        assert!(r.is_err());
    }

    #[test]
    fn step_underflow_is_reported() {
        // Finite-time blow-up y' = y² from y(0) = 1 at z = 1.
        let mut o = opts(1e-10);
        o.min_step = 1e-9;
        let r = integrate(
            |_, y: &Vector<1>| Ok([y[0] * y[0]]),
            0.0,
            2.0,
            [Complex64::new(1.0, 0.0)],
            &[2.0],
            &o,
        );
        assert!(matches!(r, Err(Error::StepFailure { .. })), "{r:?}");
    }
}
