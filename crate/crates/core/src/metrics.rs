//! Cost function and assessment quantities.

use std::io::Write;

use crate::error::{Error, Result};
use crate::forward::{CMatrix, ScatteringDataset};
use crate::geometry::{fmt17, ContrastMap};
use crate::problem::CostOracle;
use crate::surrogate::{Bounds, Surrogate};

/// Normalized data mismatch `sum |S - S~|^2 / sum |S|^2`.
pub fn cost_phi(measured: &ScatteringDataset, predicted: &CMatrix) -> Result<f64> {
    cost_phi_samples(&measured.scattered, predicted)
}

/// [`cost_phi`] on bare sample matrices.
pub fn cost_phi_samples(measured: &CMatrix, predicted: &CMatrix) -> Result<f64> {
    if measured.shape() != predicted.shape() {
        return Err(Error::DimensionMismatch {
            expected: measured.len(),
            found: predicted.len(),
        });
    }
    let den: f64 = measured.iter().map(|s| s.norm_sqr()).sum();
    if den == 0.0 {
        return Err(Error::DegenerateDataset);
    }
    let num: f64 = measured
        .iter()
        .zip(predicted.iter())
        .map(|(s, p)| (s - p).norm_sqr())
        .sum();
    Ok(num / den)
}

/// Pixel-averaged reconstruction error `(1/N) sum |tau - tau~| / |tau + 1|`.
pub fn error_index(actual: &ContrastMap, retrieved: &ContrastMap) -> Result<f64> {
    if actual.grid() != retrieved.grid() {
        return Err(Error::DimensionMismatch {
            expected: actual.grid().len(),
            found: retrieved.grid().len(),
        });
    }
    let n = actual.values().len() as f64;
    Ok(actual
        .values()
        .iter()
        .zip(retrieved.values())
        .map(|(t, r)| (t - r).norm() / (t + 1.0).norm())
        .sum::<f64>()
        / n)
}

/// True costs below this are skipped by [`prediction_error_eta`].
pub const ETA_MIN_COST: f64 = 1e-12;

/// Mean relative error of the surrogate mean against the true cost over
/// `positions`.
pub fn prediction_error_eta(
    positions: &[Vec<f64>],
    model: &dyn Surrogate,
    oracle: &dyn CostOracle,
) -> Result<f64> {
    let mut total = 0.0;
    let mut used = 0usize;
    for x in positions {
        let truth = oracle.cost(x)?;
        if truth < ETA_MIN_COST {
            log::info!("skipping particle with true cost {truth:e} in prediction error");
            continue;
        }
        total += (truth - model.predict(x)?.mean).abs() / truth;
        used += 1;
    }
    if used == 0 {
        return Err(Error::UndefinedMetric("every particle has zero true cost".into()));
    }
    Ok(total / used as f64)
}

/// Fraction of forward solves saved by the surrogate loop against a plain
/// swarm with `particles * go_iterations` evaluations.
pub fn time_saving(particles: usize, go_iterations: usize, initial_samples: usize, sbd_iterations: usize) -> Result<f64> {
    let go = (particles * go_iterations) as f64;
    if go == 0.0 {
        return Err(Error::UndefinedMetric("empty reference budget".into()));
    }
    Ok((go - (initial_samples + sbd_iterations) as f64) / go)
}

/// `n` evenly spaced values from `lo` to `hi`, both included exactly.
pub fn lattice(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![lo],
        _ => (0..n)
            .map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64)
            .collect(),
    }
}

/// Two-parameter slice through the cost through three reference points:
/// `xi(a, b) = b [(a + 1) xi1 - a xi_act] + (b - 1) a xi2`, so that
/// `(-1, 1) -> xi_act`, `(0, 1) -> xi1` and `(-1, 0) -> xi2`.
#[derive(Clone, Debug)]
pub struct LandscapeRequest {
    pub xi1: Vec<f64>,
    pub xi2: Vec<f64>,
    pub xi_act: Vec<f64>,
    pub a_range: (f64, f64),
    pub b_range: (f64, f64),
    pub a_points: usize,
    pub b_points: usize,
}

impl LandscapeRequest {
    /// Ranges `a in [-1.5, 0.5]`, `b in [-0.5, 1.5]` on a 41 x 41 lattice.
    pub fn new(xi1: Vec<f64>, xi2: Vec<f64>, xi_act: Vec<f64>) -> Self {
        Self {
            xi1,
            xi2,
            xi_act,
            a_range: (-1.5, 0.5),
            b_range: (-0.5, 1.5),
            a_points: 41,
            b_points: 41,
        }
    }

    fn validate(&self) -> Result<()> {
        let k = self.xi_act.len();
        for v in [&self.xi1, &self.xi2] {
            if v.len() != k {
                return Err(Error::DimensionMismatch { expected: k, found: v.len() });
            }
        }
        let covers = |(lo, hi): (f64, f64), x: f64| lo <= x && x <= hi;
        if !(covers(self.a_range, -1.0) && covers(self.a_range, 0.0))
            || !(covers(self.b_range, 0.0) && covers(self.b_range, 1.0))
        {
            return Err(Error::Config("landscape ranges must cover the anchor points".into()));
        }
        if self.a_points < 2 || self.b_points < 2 {
            return Err(Error::Config("landscape lattice needs at least 2 points per axis".into()));
        }
        Ok(())
    }

    /// Interpolated DoF vector before clamping.
    pub fn point(&self, a: f64, b: f64) -> Vec<f64> {
        self.xi1
            .iter()
            .zip(&self.xi2)
            .zip(&self.xi_act)
            .map(|((x1, x2), xa)| b * ((a + 1.0) * x1 - a * xa) + (b - 1.0) * a * x2)
            .collect()
    }
}

/// Evaluated cost slice. `phi` is stored a-major; `None` marks cells where
/// the oracle failed.
#[derive(Clone, Debug)]
pub struct Landscape {
    pub a: Vec<f64>,
    pub b: Vec<f64>,
    pub phi: Vec<Option<f64>>,
    /// Lattice points whose interpolated DoFs had to be clamped to bounds.
    pub clamped: usize,
}

impl Landscape {
    pub fn at(&self, ia: usize, ib: usize) -> Option<f64> {
        self.phi[ia * self.b.len() + ib]
    }

    /// Lattice index of the point nearest to `(a, b)`.
    pub fn nearest(&self, a: f64, b: f64) -> (usize, usize) {
        let closest = |axis: &[f64], v: f64| {
            (0..axis.len())
                .min_by(|&i, &j| (axis[i] - v).abs().total_cmp(&(axis[j] - v).abs()))
                .unwrap_or(0)
        };
        (closest(&self.a, a), closest(&self.b, b))
    }

    /// `a,b,phi` rows; missing cells have an empty `phi`.
    pub fn write_csv<W: Write>(&self, mut out: W, comments: &[String]) -> Result<()> {
        for c in comments {
            writeln!(out, "# {c}")?;
        }
        writeln!(out, "# clamped_points={}", self.clamped)?;
        writeln!(out, "a,b,phi")?;
        for (ia, a) in self.a.iter().enumerate() {
            for (ib, b) in self.b.iter().enumerate() {
                let phi = self.at(ia, ib).map(fmt17).unwrap_or_default();
                writeln!(out, "{},{},{phi}", fmt17(*a), fmt17(*b))?;
            }
        }
        Ok(())
    }
}

/// Evaluates the cost over the request's lattice. Interpolated points are
/// clamped to `bounds` before evaluation.
pub fn landscape(request: &LandscapeRequest, bounds: &Bounds, oracle: &dyn CostOracle) -> Result<Landscape> {
    request.validate()?;
    if bounds.dim() != request.xi_act.len() {
        return Err(Error::DimensionMismatch { expected: bounds.dim(), found: request.xi_act.len() });
    }
    let a = lattice(request.a_range.0, request.a_range.1, request.a_points);
    let b = lattice(request.b_range.0, request.b_range.1, request.b_points);
    let mut phi = Vec::with_capacity(a.len() * b.len());
    let mut clamped = 0;
    for &ai in &a {
        for &bi in &b {
            let mut x = request.point(ai, bi);
            if !bounds.contains(&x) {
                bounds.clamp(&mut x);
                clamped += 1;
            }
            phi.push(match oracle.cost(&x) {
                Ok(v) => Some(v),
                Err(e) => {
                    log::warn!("landscape point a={ai} b={bi} failed: {e}");
                    None
                }
            });
        }
    }
    Ok(Landscape { a, b, phi, clamped })
}
