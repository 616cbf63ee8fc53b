//! Oracles shared by the integration tests. Nothing here calls into the
//! crate's special-function code.
#![allow(dead_code)]

use std::f64::consts::{PI, TAU};

use num_complex::Complex64;

/// `J_n(x)` from Bessel's integral with the periodic trapezoid rule, which
/// converges geometrically for this integrand.
pub fn bessel_j(n: i32, x: f64) -> f64 {
    let samples = 1024;
    let h = TAU / samples as f64;
    (0..samples)
        .map(|i| {
            let t = -PI + i as f64 * h;
            (n as f64 * t - x * t.sin()).cos()
        })
        .sum::<f64>()
        / samples as f64
}

/// Composite Gauss-Legendre on `[a, b]`.
fn integrate(f: impl Fn(f64) -> f64, a: f64, b: f64, panels: usize) -> f64 {
    const NODES: [(f64, f64); 5] = [
        (-0.906_179_845_938_664, 0.236_926_885_056_189_1),
        (-0.538_469_310_105_683, 0.478_628_670_499_366_5),
        (0.0, 0.568_888_888_888_888_9),
        (0.538_469_310_105_683, 0.478_628_670_499_366_5),
        (0.906_179_845_938_664, 0.236_926_885_056_189_1),
    ];
    let h = (b - a) / panels as f64;
    (0..panels)
        .map(|p| {
            let mid = a + (p as f64 + 0.5) * h;
            NODES.iter().map(|(x, w)| w * f(mid + 0.5 * h * x)).sum::<f64>() * 0.5 * h
        })
        .sum()
}

/// `Y_n(x)` for `n = 0, 1` from the integral representation
/// `(1/pi) int_0^pi sin(x sin t - n t) dt
///  - (1/pi) int_0^inf (e^{nt} + (-1)^n e^{-nt}) e^{-x sinh t} dt`.
fn bessel_y_low(n: i32, x: f64) -> f64 {
    let nf = n as f64;
    let first = integrate(|t| (x * t.sin() - nf * t).sin(), 0.0, PI, 400);
    let sign = if n % 2 == 0 { 1.0 } else { -1.0 };
    // The integrand is below e^-60 once x sinh t - n t > 60.
    let mut upper = 1.0;
    while x * f64::sinh(upper) - nf * upper < 60.0 {
        upper += 0.5;
    }
    let second = integrate(
        |t| ((nf * t).exp() + sign * (-nf * t).exp()) * (-x * t.sinh()).exp(),
        0.0,
        upper,
        4000,
    );
    (first - second) / PI
}

/// `Y_0 .. Y_{n_max}` at `x` by upward recurrence, which is stable for `Y`.
pub fn bessel_y_upto(n_max: usize, x: f64) -> Vec<f64> {
    let mut y = vec![bessel_y_low(0, x), bessel_y_low(1, x)];
    for n in 1..n_max {
        let next = 2.0 * n as f64 / x * y[n] - y[n - 1];
        y.push(next);
    }
    y.truncate(n_max + 1);
    y
}

/// Scattered field of a homogeneous dielectric cylinder of radius `a`
/// centered at the origin, contrast `tau` (real), illuminated by the unit
/// plane wave `exp(j k0 r cos(phi - phi_inc))`, observed at `(rho, phi)`.
pub struct MieCylinder {
    coeffs: Vec<Complex64>,
    k0: f64,
}

impl MieCylinder {
    pub fn new(radius: f64, tau: f64, k0: f64, orders: usize) -> Self {
        let k1 = k0 * (1.0 + tau).sqrt();
        let (x0, x1) = (k0 * radius, k1 * radius);
        let jn0: Vec<f64> = (0..=orders as i32 + 1).map(|n| bessel_j(n, x0)).collect();
        let jn1: Vec<f64> = (0..=orders as i32 + 1).map(|n| bessel_j(n, x1)).collect();
        let yn0 = bessel_y_upto(orders + 1, x0);
        let jm = |v: &[f64], n: usize| if n == 0 { -v[1] } else { v[n - 1] };
        let coeffs = (0..=orders)
            .map(|n| {
                let (j0, j1) = (jn0[n], jn1[n]);
                let dj0 = 0.5 * (jm(&jn0, n) - jn0[n + 1]);
                let dj1 = 0.5 * (jm(&jn1, n) - jn1[n + 1]);
                let ym = if n == 0 { -yn0[1] } else { yn0[n - 1] };
                let h0 = Complex64::new(j0, yn0[n]);
                let dh0 = Complex64::new(dj0, 0.5 * (ym - yn0[n + 1]));
                let num = k1 * j0 * dj1 - k0 * dj0 * j1;
                let den = k0 * dh0 * j1 - k1 * h0 * dj1;
                Complex64::new(num, 0.0) / den
            })
            .collect();
        Self { coeffs, k0 }
    }

    pub fn scattered(&self, rho: f64, phi: f64, phi_inc: f64) -> Complex64 {
        let orders = self.coeffs.len() - 1;
        let x = self.k0 * rho;
        let y = bessel_y_upto(orders, x);
        let mut sum = Complex64::new(0.0, 0.0);
        for n in 0..=orders {
            let h = Complex64::new(bessel_j(n as i32, x), y[n]);
            let jn = Complex64::new(0.0, 1.0).powu(n as u32);
            let angular = if n == 0 {
                1.0
            } else {
                2.0 * (n as f64 * (phi - phi_inc)).cos()
            };
            sum += jn * self.coeffs[n] * h * angular;
        }
        sum
    }
}

#[test]
fn oracle_bessel_values() {
    // Independent reference values.
    assert!((bessel_j(0, 1.0) - 0.765_197_686_557_966_6).abs() < 1e-13);
    assert!((bessel_j(3, 10.0) - 0.058_379_379_305_186_81).abs() < 1e-13);
    let y = bessel_y_upto(3, 1.0);
    assert!((y[0] - 0.088_256_964_215_676_96).abs() < 1e-10);
    assert!((y[1] + 0.781_212_821_300_288_7).abs() < 1e-10);
    assert!((y[3] + 5.821_517_605_964_728).abs() < 1e-8);
}

#[test]
fn oracle_series_matches_reference() {
    // Reference sums computed with an independent special-function library.
    let mie = MieCylinder::new(0.5, 4.0, TAU, 40);
    let s = mie.scattered(3.0, 0.0, 0.0);
    assert!((s - Complex64::new(-0.153_793_105_679_998_15, 0.464_728_441_807_436_94)).norm() < 1e-8);
    let s = mie.scattered(3.0, 1.0, 0.0);
    assert!((s - Complex64::new(0.186_780_705_358_644_88, 0.293_433_888_575_521_6)).norm() < 1e-8);
    let s = MieCylinder::new(0.5, 1.0, TAU, 40).scattered(3.0, 2.0, 0.0);
    assert!((s - Complex64::new(0.042_607_425_358_319_02, 0.041_917_691_620_860_245)).norm() < 1e-8);
}

/// Homogeneous disc of radius 0.5 centered on the grid, cells included by
/// center membership.
pub fn centered_disc(grid: sbd_core::forward::Grid, tau: f64) -> sbd_core::geometry::ContrastMap {
    use sbd_core::geometry::{ContrastMap, Point};
    ContrastMap::from_fn(grid, |c| {
        if c.distance(Point::new(0.0, 0.0)) < 0.5 {
            Complex64::new(tau, 0.0)
        } else {
            Complex64::new(0.0, 0.0)
        }
    })
}

/// Relative RMS error of the MoM field of [`centered_disc`] against the
/// series solution over 18 views and 18 probes at radius 3, plus the
/// wall time of the solve in seconds.
pub fn disc_series_error(n_side: usize, tau: f64) -> (f64, f64) {
    use sbd_core::forward::{ForwardSolver, Grid, MeasurementSetup};
    let grid = Grid::new(2.0, n_side).unwrap();
    let setup = MeasurementSetup::new(18, 18, 3.0).unwrap();
    let map = centered_disc(grid, tau);
    let start = std::time::Instant::now();
    let s = ForwardSolver::new(grid, setup).unwrap().scattered(&map).unwrap();
    let secs = start.elapsed().as_secs_f64();
    let mie = MieCylinder::new(0.5, tau, TAU, 40);
    let (mut num, mut den) = (0.0, 0.0);
    for v in 0..setup.views() {
        for m in 0..setup.probes() {
            let p = setup.probe(m);
            let exact = mie.scattered(3.0, p.y.atan2(p.x), setup.incidence_angle(v));
            num += (s[(m, v)] - exact).norm_sqr();
            den += exact.norm_sqr();
        }
    }
    ((num / den).sqrt(), secs)
}
