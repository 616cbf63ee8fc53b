//! Bessel functions of the first and second kind, orders 0 and 1, for
//! positive real arguments.
//!
//! Three regimes are used:
//!
//! * `x <= 2`: ascending power series.
//! * `2 < x <= 25`: Miller backward recurrence for `J_n`, normalized with
//!   `J_0 + 2 sum J_2k = 1`; `Y_0` and `Y_1` follow from the Neumann series
//!   over the same sequence.
//! * `x > 25`: Hankel asymptotic expansion, summed until the terms stop
//!   decreasing.
//!
//! All regimes agree to roughly machine precision at the seams.

use std::f64::consts::{FRAC_1_SQRT_2, FRAC_2_PI, PI};

use num_complex::Complex64;

use crate::error::{Error, Result};

/// Euler-Mascheroni constant.
const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;

/// Arguments below this are rejected: `Y_0`, `Y_1` are dominated by their
/// singular terms and callers never need them there.
pub const MIN_ARGUMENT: f64 = 1e-8;

const SERIES_MAX: f64 = 2.0;
const ASYMPTOTIC_MIN: f64 = 25.0;

/// `J0, J1, Y0, Y1` at one argument.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CylinderFunctionValue {
    pub j0: f64,
    pub j1: f64,
    pub y0: f64,
    pub y1: f64,
}

impl CylinderFunctionValue {
    /// Hankel function of the first kind, order 0.
    pub fn h1_0(&self) -> Complex64 {
        Complex64::new(self.j0, self.y0)
    }

    /// Hankel function of the first kind, order 1.
    pub fn h1_1(&self) -> Complex64 {
        Complex64::new(self.j1, self.y1)
    }
}

/// Evaluates `J0, J1, Y0, Y1` at `x`.
///
/// Fails with [`Error::Domain`] for non-finite `x` or `x < MIN_ARGUMENT`.
pub fn cylinder_functions(x: f64) -> Result<CylinderFunctionValue> {
    if !x.is_finite() || x < MIN_ARGUMENT {
        return Err(Error::Domain {
            what: "cylinder function argument",
            value: x,
        });
    }
    Ok(if x <= SERIES_MAX {
        ascending_series(x)
    } else if x <= ASYMPTOTIC_MIN {
        backward_recurrence(x)
    } else {
        hankel_asymptotic(x)
    })
}

fn ascending_series(x: f64) -> CylinderFunctionValue {
    let z = 0.25 * x * x;
    let log_term = (0.5 * x).ln() + EULER_GAMMA;

    // Shared term t_k = (-z)^k / (k!)^2 and u_k = (-z)^k / (k! (k+1)!).
    let mut t = 1.0;
    let mut u = 1.0;
    let mut harmonic = 0.0; // H_k
    let mut j0 = 1.0;
    let mut j1_sum = 1.0;
    let mut y0_sum = 0.0;
    // psi(k+1) + psi(k+2) = H_k + H_{k+1} - 2 gamma
    let mut y1_sum = -2.0 * EULER_GAMMA + 1.0;
    for k in 1..60 {
        let kf = k as f64;
        t *= -z / (kf * kf);
        u *= -z / (kf * (kf + 1.0));
        harmonic += 1.0 / kf;
        j0 += t;
        j1_sum += u;
        y0_sum -= harmonic * t;
        y1_sum += (2.0 * harmonic + 1.0 / (kf + 1.0) - 2.0 * EULER_GAMMA) * u;
        if t.abs() < 1e-18 * j0.abs().max(1e-300) && u.abs() < 1e-18 {
            break;
        }
    }
    let j1 = 0.5 * x * j1_sum;
    let y0 = FRAC_2_PI * (log_term * j0 + y0_sum);
    let y1 = -FRAC_2_PI / x + FRAC_2_PI * (0.5 * x).ln() * j1 - 0.5 * x * y1_sum / PI;
    CylinderFunctionValue { j0, j1, y0, y1 }
}

fn backward_recurrence(x: f64) -> CylinderFunctionValue {
    let start = {
        let n = (x + 30.0 + 8.0 * x.cbrt()).ceil() as usize;
        n + (n % 2)
    };
    let mut j = vec![0.0; start + 2];
    j[start] = 1e-30;
    for n in (1..=start).rev() {
        j[n - 1] = 2.0 * n as f64 / x * j[n] - j[n + 1];
        if j[n - 1].abs() > 1e250 {
            for v in j[n - 1..].iter_mut() {
                *v *= 1e-250;
            }
        }
    }
    let norm = j[0] + 2.0 * j.iter().skip(2).step_by(2).sum::<f64>();
    for v in j.iter_mut() {
        *v /= norm;
    }

    let log_term = (0.5 * x).ln() + EULER_GAMMA;
    let mut y0_sum = 0.0;
    let mut y1_sum = 0.0;
    let mut sign = -1.0;
    for k in 1..=start / 2 {
        let kf = k as f64;
        y0_sum += sign * j[2 * k] / kf;
        y1_sum += sign * (j[2 * k - 1] - j[2 * k + 1]) / kf;
        sign = -sign;
    }
    let (j0, j1) = (j[0], j[1]);
    let y0 = FRAC_2_PI * log_term * j0 - 2.0 * FRAC_2_PI * y0_sum;
    let y1 = -FRAC_2_PI / x * j0 + FRAC_2_PI * log_term * j1 + FRAC_2_PI * y1_sum;
    CylinderFunctionValue { j0, j1, y0, y1 }
}

/// Asymptotic `P(x), Q(x)` for order `nu`.
fn hankel_pq(nu: f64, x: f64) -> (f64, f64) {
    let mu = 4.0 * nu * nu;
    let mut p = 1.0;
    let mut q = 0.0;
    let mut a = 1.0; // a_k / x^k
    let mut last = f64::INFINITY;
    for k in 1..200 {
        let odd = (2 * k - 1) as f64;
        let next = a * (mu - odd * odd) / (k as f64 * 8.0 * x);
        if next.abs() >= last || next.abs() < 1e-18 {
            break;
        }
        last = next.abs();
        a = next;
        // Signs: a_1 -> +Q, a_2 -> -P, a_3 -> -Q, a_4 -> +P, ...
        match k % 4 {
            1 => q += a,
            2 => p -= a,
            3 => q -= a,
            _ => p += a,
        }
    }
    (p, q)
}

fn hankel_asymptotic(x: f64) -> CylinderFunctionValue {
    let amplitude = (FRAC_2_PI / x).sqrt();
    let (s, c) = x.sin_cos();
    // x - pi/4 and x - 3 pi/4 without forming the shifted argument.
    let (cos0, sin0) = ((c + s) * FRAC_1_SQRT_2, (s - c) * FRAC_1_SQRT_2);
    let (cos1, sin1) = ((s - c) * FRAC_1_SQRT_2, -(s + c) * FRAC_1_SQRT_2);
    let (p0, q0) = hankel_pq(0.0, x);
    let (p1, q1) = hankel_pq(1.0, x);
    CylinderFunctionValue {
        j0: amplitude * (p0 * cos0 - q0 * sin0),
        y0: amplitude * (p0 * sin0 + q0 * cos0),
        j1: amplitude * (p1 * cos1 - q1 * sin1),
        y1: amplitude * (p1 * sin1 + q1 * cos1),
    }
}
