//! Spline-coded scatterers.
//!
//! A contour is a closed chain of `Q` quadratic Bezier segments. Control
//! points sit at fixed angles `(q-1) 2 pi / Q` around the barycenter, at
//! radial distances `rho_q`. Segment `q` is pulled toward control point
//! `C_q` and runs between the two "virtual points" flanking it, the
//! midpoints `V_q = (C_{q-1} + C_q) / 2` and `V_{q+1} = (C_q + C_{q+1}) / 2`.
//! Cells of the investigation grid are classified by testing their centers
//! against the sampled contour with an even-odd crossing rule.

use std::f64::consts::TAU;
use std::fmt::Write as _;
use std::io::{BufRead, Write};
use std::ops::{Add, Mul, Sub};

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::forward::Grid;

/// Samples per Bezier segment used when rasterizing a contour.
pub const DEFAULT_SAMPLES_PER_SEGMENT: usize = 32;

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn distance(self, other: Point) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

impl Add for Point {
    type Output = Point;
    fn add(self, rhs: Point) -> Point {
        Point::new(self.x + rhs.x, self.y + rhs.y)
    }
}

impl Sub for Point {
    type Output = Point;
    fn sub(self, rhs: Point) -> Point {
        Point::new(self.x - rhs.x, self.y - rhs.y)
    }
}

impl Mul<Point> for f64 {
    type Output = Point;
    fn mul(self, rhs: Point) -> Point {
        Point::new(self * rhs.x, self * rhs.y)
    }
}

/// Closed spline contour around a barycenter.
#[derive(Clone, Debug, PartialEq)]
pub struct SplineContour {
    barycenter: Point,
    radii: Vec<f64>,
}

impl SplineContour {
    pub fn new(barycenter: Point, radii: Vec<f64>) -> Result<Self> {
        if radii.len() < 3 {
            return Err(Error::InvalidShape(format!(
                "a closed contour needs at least 3 control points, got {}",
                radii.len()
            )));
        }
        if let Some(r) = radii.iter().find(|r| !(r.is_finite() && **r > 0.0)) {
            return Err(Error::InvalidShape(format!(
                "control point radii must be positive, got {r}"
            )));
        }
        if !(barycenter.x.is_finite() && barycenter.y.is_finite()) {
            return Err(Error::InvalidShape("non-finite barycenter".into()));
        }
        Ok(Self { barycenter, radii })
    }

    pub fn barycenter(&self) -> Point {
        self.barycenter
    }

    pub fn radii(&self) -> &[f64] {
        &self.radii
    }

    /// Number of control points `Q`.
    pub fn len(&self) -> usize {
        self.radii.len()
    }

    pub fn is_empty(&self) -> bool {
        self.radii.is_empty()
    }

    /// Same barycenter, radii multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Result<Self> {
        Self::new(
            self.barycenter,
            self.radii.iter().map(|r| r * factor).collect(),
        )
    }

    pub fn control_points(&self) -> Vec<Point> {
        let q_total = self.radii.len() as f64;
        self.radii
            .iter()
            .enumerate()
            .map(|(q, &rho)| {
                let (s, c) = (q as f64 * TAU / q_total).sin_cos();
                self.barycenter + rho * Point::new(c, s)
            })
            .collect()
    }

    /// `V_q = (C_{q-1} + C_q) / 2`, indices wrapping modulo `Q`.
    pub fn virtual_points(&self) -> Vec<Point> {
        let c = self.control_points();
        let n = c.len();
        (0..n).map(|q| 0.5 * (c[(q + n - 1) % n] + c[q])).collect()
    }

    /// Point on segment `segment` (0-based) at parameter `alpha`.
    pub fn bezier_eval(&self, segment: usize, alpha: f64) -> Result<Point> {
        if segment >= self.radii.len() {
            return Err(Error::Domain {
                what: "segment index",
                value: segment as f64,
            });
        }
        if !(0.0..=1.0).contains(&alpha) {
            return Err(Error::Domain {
                what: "Bezier parameter",
                value: alpha,
            });
        }
        let c = self.control_points();
        let v = self.virtual_points();
        let n = c.len();
        Ok(quadratic_bezier(v[segment], c[segment], v[(segment + 1) % n], alpha))
    }

    /// Closed polygon with `samples_per_segment` vertices per segment, taken
    /// at `alpha = j / samples_per_segment`. The closing edge is implicit.
    pub fn polyline(&self, samples_per_segment: usize) -> Result<Polygon> {
        if samples_per_segment < 2 {
            return Err(Error::Domain {
                what: "samples per segment",
                value: samples_per_segment as f64,
            });
        }
        let c = self.control_points();
        let v = self.virtual_points();
        let n = c.len();
        let mut vertices = Vec::with_capacity(n * samples_per_segment);
        for q in 0..n {
            for j in 0..samples_per_segment {
                let alpha = j as f64 / samples_per_segment as f64;
                vertices.push(quadratic_bezier(v[q], c[q], v[(q + 1) % n], alpha));
            }
        }
        Ok(Polygon { vertices })
    }
}

fn quadratic_bezier(start: Point, control: Point, end: Point, alpha: f64) -> Point {
    let beta = 1.0 - alpha;
    (beta * beta) * start + (2.0 * alpha * beta) * control + (alpha * alpha) * end
}

/// Closed polygon; the edge from the last vertex back to the first is implied.
#[derive(Clone, Debug, PartialEq)]
pub struct Polygon {
    pub vertices: Vec<Point>,
}

impl Polygon {
    /// Even-odd crossing test with the half-open edge rule: an edge counts
    /// when exactly one endpoint lies strictly above the horizontal through
    /// `p`. Degenerate polygons (fewer than 3 vertices or zero area) contain
    /// nothing.
    pub fn contains(&self, p: Point) -> bool {
        let v = &self.vertices;
        if v.len() < 3 || self.signed_area() == 0.0 {
            return false;
        }
        let mut inside = false;
        let mut j = v.len() - 1;
        for i in 0..v.len() {
            let (a, b) = (v[j], v[i]);
            if (a.y > p.y) != (b.y > p.y) {
                let x_cross = a.x + (p.y - a.y) * (b.x - a.x) / (b.y - a.y);
                if p.x < x_cross {
                    inside = !inside;
                }
            }
            j = i;
        }
        inside
    }

    pub fn signed_area(&self) -> f64 {
        let v = &self.vertices;
        let n = v.len();
        0.5 * (0..n)
            .map(|i| {
                let (a, b) = (v[i], v[(i + 1) % n]);
                a.x * b.y - b.x * a.y
            })
            .sum::<f64>()
    }

    fn bounding_box(&self) -> (Point, Point) {
        self.vertices.iter().fold(
            (
                Point::new(f64::INFINITY, f64::INFINITY),
                Point::new(f64::NEG_INFINITY, f64::NEG_INFINITY),
            ),
            |(lo, hi), p| {
                (
                    Point::new(lo.x.min(p.x), lo.y.min(p.y)),
                    Point::new(hi.x.max(p.x), hi.y.max(p.y)),
                )
            },
        )
    }
}

/// How the unknowns of a trial solution are laid out.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum DofLayout {
    /// `{x, y, Re tau, Im tau, rho_1..rho_Q}`, `K = 4 + Q`.
    Single { q: usize },
    /// `{x, y, Re tau_out, Im tau_out, Re tau_int, Im tau_int, rho_out_1..Q,
    /// upsilon}`, `K = 7 + Q`. The inner contour is the outer one scaled by
    /// `upsilon`.
    DoublyConnected { q: usize },
    /// `{x1, y1, x2, y2, Re tau1, Im tau1, Re tau2, Im tau2, rho1_1..Q,
    /// rho2_1..Q}`, `K = 8 + 2Q`.
    MultiObject { q: usize },
}

/// Semantic role of one DoF entry, used to assign default bounds.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DofRole {
    Position,
    ReContrast,
    ImContrast,
    Radius,
    Scale,
}

impl DofLayout {
    pub fn control_points(&self) -> usize {
        match *self {
            DofLayout::Single { q }
            | DofLayout::DoublyConnected { q }
            | DofLayout::MultiObject { q } => q,
        }
    }

    /// Number of unknowns `K`.
    pub fn dim(&self) -> usize {
        match *self {
            DofLayout::Single { q } => 4 + q,
            DofLayout::DoublyConnected { q } => 7 + q,
            DofLayout::MultiObject { q } => 8 + 2 * q,
        }
    }

    pub fn roles(&self) -> Vec<DofRole> {
        use DofRole::*;
        let q = self.control_points();
        let mut roles = match self {
            DofLayout::Single { .. } => vec![Position, Position, ReContrast, ImContrast],
            DofLayout::DoublyConnected { .. } => vec![
                Position, Position, ReContrast, ImContrast, ReContrast, ImContrast,
            ],
            DofLayout::MultiObject { .. } => vec![
                Position, Position, Position, Position, ReContrast, ImContrast, ReContrast,
                ImContrast,
            ],
        };
        let radii = if matches!(self, DofLayout::MultiObject { .. }) { 2 * q } else { q };
        roles.extend(std::iter::repeat_n(Radius, radii));
        if matches!(self, DofLayout::DoublyConnected { .. }) {
            roles.push(Scale);
        }
        roles
    }

    pub fn name(&self) -> &'static str {
        match self {
            DofLayout::Single { .. } => "single",
            DofLayout::DoublyConnected { .. } => "dc",
            DofLayout::MultiObject { .. } => "mo",
        }
    }

    pub fn parse(name: &str, q: usize) -> Result<Self> {
        if q < 3 {
            return Err(Error::InvalidShape(format!("Q = {q} < 3")));
        }
        match name {
            "single" => Ok(DofLayout::Single { q }),
            "dc" => Ok(DofLayout::DoublyConnected { q }),
            "mo" => Ok(DofLayout::MultiObject { q }),
            other => Err(Error::Config(format!("unknown layout `{other}`"))),
        }
    }
}

/// Admissible range per DoF role.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RoleBounds {
    pub position: (f64, f64),
    pub re_contrast: (f64, f64),
    pub im_contrast: (f64, f64),
    pub radius: (f64, f64),
    pub scale: (f64, f64),
}

impl Default for RoleBounds {
    fn default() -> Self {
        Self {
            position: (-0.6, 0.6),
            re_contrast: (0.0, 5.0),
            im_contrast: (0.0, 1.0),
            radius: (0.05, 0.8),
            scale: (0.1, 0.9),
        }
    }
}

/// Box-bounded search space for one layout.
#[derive(Clone, Debug, PartialEq)]
pub struct DofSpace {
    layout: DofLayout,
    lower: Vec<f64>,
    upper: Vec<f64>,
}

impl DofSpace {
    pub fn new(layout: DofLayout, lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        let k = layout.dim();
        for len in [lower.len(), upper.len()] {
            if len != k {
                return Err(Error::DimensionMismatch { expected: k, found: len });
            }
        }
        for (i, (lo, hi)) in lower.iter().zip(&upper).enumerate() {
            if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                return Err(Error::Config(format!("bad bounds for DoF {i}: [{lo}, {hi}]")));
            }
        }
        let roles = layout.roles();
        for (i, role) in roles.iter().enumerate() {
            match role {
                DofRole::Radius if lower[i] <= 0.0 => {
                    return Err(Error::Config(format!("radius bound for DoF {i} must be > 0")));
                }
                DofRole::Scale if lower[i] <= 0.0 || upper[i] >= 1.0 => {
                    return Err(Error::Config("scale factor bounds must lie in (0, 1)".into()));
                }
                _ => {}
            }
        }
        Ok(Self { layout, lower, upper })
    }

    pub fn from_roles(layout: DofLayout, bounds: &RoleBounds) -> Result<Self> {
        let (lower, upper) = layout
            .roles()
            .into_iter()
            .map(|role| match role {
                DofRole::Position => bounds.position,
                DofRole::ReContrast => bounds.re_contrast,
                DofRole::ImContrast => bounds.im_contrast,
                DofRole::Radius => bounds.radius,
                DofRole::Scale => bounds.scale,
            })
            .unzip();
        Self::new(layout, lower, upper)
    }

    pub fn layout(&self) -> DofLayout {
        self.layout
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    pub fn contains(&self, values: &[f64]) -> bool {
        values.len() == self.dim()
            && values
                .iter()
                .zip(self.lower.iter().zip(&self.upper))
                .all(|(v, (lo, hi))| lo <= v && v <= hi)
    }

    pub fn clamp(&self, values: &mut [f64]) {
        for (v, (lo, hi)) in values.iter_mut().zip(self.lower.iter().zip(&self.upper)) {
            *v = v.clamp(*lo, *hi);
        }
    }

    /// Maps into `[0, 1]^K`.
    pub fn normalize(&self, values: &[f64]) -> Vec<f64> {
        values
            .iter()
            .zip(self.lower.iter().zip(&self.upper))
            .map(|(v, (lo, hi))| (v - lo) / (hi - lo))
            .collect()
    }

    pub fn vector(&self, values: Vec<f64>) -> Result<DofVector> {
        if !self.contains(&values) {
            if values.len() != self.dim() {
                return Err(Error::DimensionMismatch {
                    expected: self.dim(),
                    found: values.len(),
                });
            }
            return Err(Error::Domain {
                what: "DoF vector entry outside bounds",
                value: values
                    .iter()
                    .zip(self.lower.iter().zip(&self.upper))
                    .find(|(v, (lo, hi))| !(lo <= v && v <= hi))
                    .map(|(v, _)| *v)
                    .unwrap_or(f64::NAN),
            });
        }
        DofVector::new(self.layout, values)
    }
}

/// A trial solution in spline coding.
#[derive(Clone, Debug, PartialEq)]
pub struct DofVector {
    layout: DofLayout,
    values: Vec<f64>,
}

impl DofVector {
    pub fn new(layout: DofLayout, values: Vec<f64>) -> Result<Self> {
        if values.len() != layout.dim() {
            return Err(Error::DimensionMismatch {
                expected: layout.dim(),
                found: values.len(),
            });
        }
        if let Some(v) = values.iter().find(|v| !v.is_finite()) {
            return Err(Error::Domain { what: "DoF value", value: *v });
        }
        if let DofLayout::DoublyConnected { .. } = layout {
            let upsilon = values[values.len() - 1];
            if !(upsilon > 0.0 && upsilon < 1.0) {
                return Err(Error::Domain {
                    what: "scale factor upsilon",
                    value: upsilon,
                });
            }
        }
        Ok(Self { layout, values })
    }

    /// Single contour.
    pub fn single(center: Point, tau: Complex64, radii: &[f64]) -> Result<Self> {
        let mut v = vec![center.x, center.y, tau.re, tau.im];
        v.extend_from_slice(radii);
        Self::new(DofLayout::Single { q: radii.len() }, v)
    }

    pub fn doubly_connected(
        center: Point,
        tau_out: Complex64,
        tau_int: Complex64,
        radii_out: &[f64],
        upsilon: f64,
    ) -> Result<Self> {
        let mut v = vec![center.x, center.y, tau_out.re, tau_out.im, tau_int.re, tau_int.im];
        v.extend_from_slice(radii_out);
        v.push(upsilon);
        Self::new(DofLayout::DoublyConnected { q: radii_out.len() }, v)
    }

    pub fn multi_object(
        centers: [Point; 2],
        taus: [Complex64; 2],
        radii: [&[f64]; 2],
    ) -> Result<Self> {
        if radii[0].len() != radii[1].len() {
            return Err(Error::InvalidShape("both objects need the same Q".into()));
        }
        let mut v = vec![
            centers[0].x,
            centers[0].y,
            centers[1].x,
            centers[1].y,
            taus[0].re,
            taus[0].im,
            taus[1].re,
            taus[1].im,
        ];
        v.extend_from_slice(radii[0]);
        v.extend_from_slice(radii[1]);
        Self::new(DofLayout::MultiObject { q: radii[0].len() }, v)
    }

    pub fn layout(&self) -> DofLayout {
        self.layout
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    /// Regions in priority order: a cell takes the contrast of the first
    /// region whose contour contains it.
    fn regions(&self) -> Result<Vec<(SplineContour, Complex64)>> {
        let v = &self.values;
        let q = self.layout.control_points();
        match self.layout {
            DofLayout::Single { .. } => Ok(vec![(
                SplineContour::new(Point::new(v[0], v[1]), v[4..4 + q].to_vec())?,
                Complex64::new(v[2], v[3]),
            )]),
            DofLayout::DoublyConnected { .. } => {
                let outer = SplineContour::new(Point::new(v[0], v[1]), v[6..6 + q].to_vec())?;
                let inner = outer.scaled(v[6 + q])?;
                Ok(vec![
                    (inner, Complex64::new(v[4], v[5])),
                    (outer, Complex64::new(v[2], v[3])),
                ])
            }
            DofLayout::MultiObject { .. } => Ok(vec![
                (
                    SplineContour::new(Point::new(v[0], v[1]), v[8..8 + q].to_vec())?,
                    Complex64::new(v[4], v[5]),
                ),
                (
                    SplineContour::new(Point::new(v[2], v[3]), v[8 + q..8 + 2 * q].to_vec())?,
                    Complex64::new(v[6], v[7]),
                ),
            ]),
        }
    }
}

/// Pixel-wise contrast over a grid, row-major (`n = iy * n_side + ix`).
#[derive(Clone, Debug, PartialEq)]
pub struct ContrastMap {
    grid: Grid,
    values: Vec<Complex64>,
}

impl ContrastMap {
    pub fn new(grid: Grid, values: Vec<Complex64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::DimensionMismatch {
                expected: grid.len(),
                found: values.len(),
            });
        }
        if values.iter().any(|t| !(t.re.is_finite() && t.im.is_finite())) {
            return Err(Error::Domain {
                what: "contrast value",
                value: f64::NAN,
            });
        }
        Ok(Self { grid, values })
    }

    pub fn zeros(grid: Grid) -> Self {
        Self {
            grid,
            values: vec![Complex64::new(0.0, 0.0); grid.len()],
        }
    }

    /// Cells whose centers satisfy `inside` get `tau`.
    pub fn from_fn(grid: Grid, mut tau: impl FnMut(Point) -> Complex64) -> Self {
        let values = (0..grid.len()).map(|n| tau(grid.center(n))).collect();
        Self { grid, values }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    /// Indices of non-background cells.
    pub fn support(&self) -> Vec<usize> {
        (0..self.values.len())
            .filter(|&n| self.values[n] != Complex64::new(0.0, 0.0))
            .collect()
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "x,y,re_tau,im_tau")?;
        for (n, t) in self.values.iter().enumerate() {
            let c = self.grid.center(n);
            writeln!(out, "{},{},{},{}", fmt17(c.x), fmt17(c.y), fmt17(t.re), fmt17(t.im))?;
        }
        Ok(())
    }

    /// Reads the CSV produced by [`ContrastMap::write_csv`]; rows must be in
    /// grid order and lines starting with `#` are skipped.
    pub fn read_csv<R: BufRead>(grid: Grid, input: R) -> Result<Self> {
        let mut values = Vec::with_capacity(grid.len());
        for line in input.lines() {
            let line = line?;
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') || line.starts_with("x,") {
                continue;
            }
            let f = parse_fields(line, 4)?;
            let n = values.len();
            if n >= grid.len() {
                return Err(Error::Parse("more rows than grid cells".into()));
            }
            let c = grid.center(n);
            let tol = 1e-9 * grid.side();
            if (c.x - f[0]).abs() > tol || (c.y - f[1]).abs() > tol {
                return Err(Error::Parse(format!("row {n} does not match the grid cell center")));
            }
            values.push(Complex64::new(f[2], f[3]));
        }
        Self::new(grid, values)
    }

    /// Binary 8-bit PGM of `|tau|`, linearly scaled so that the maximum maps
    /// to 255. Top image row is the largest `y`.
    pub fn write_pgm<W: Write>(&self, mut out: W) -> Result<()> {
        let n = self.grid.n_side();
        let max = self.values.iter().map(|t| t.norm()).fold(0.0, f64::max);
        write!(out, "P5\n{n} {n}\n255\n")?;
        let mut bytes = Vec::with_capacity(n * n);
        for iy in (0..n).rev() {
            for ix in 0..n {
                let mag = self.values[iy * n + ix].norm();
                let level = if max > 0.0 { (255.0 * mag / max).round() } else { 0.0 };
                bytes.push(level as u8);
            }
        }
        out.write_all(&bytes)?;
        Ok(())
    }
}

/// Pixel-wise contrast of `dof` on `grid`, testing cell centers against the
/// contour sampled with [`DEFAULT_SAMPLES_PER_SEGMENT`] points per segment.
pub fn decode_to_contrast(dof: &DofVector, grid: &Grid) -> Result<ContrastMap> {
    decode_with_samples(dof, grid, DEFAULT_SAMPLES_PER_SEGMENT)
}

pub fn decode_with_samples(
    dof: &DofVector,
    grid: &Grid,
    samples_per_segment: usize,
) -> Result<ContrastMap> {
    let zero = Complex64::new(0.0, 0.0);
    let mut values = vec![zero; grid.len()];
    let regions = dof.regions()?;
    let mut assigned = vec![false; grid.len()];
    for (contour, tau) in regions {
        let polygon = contour.polyline(samples_per_segment)?;
        let (lo, hi) = polygon.bounding_box();
        for n in 0..grid.len() {
            if assigned[n] {
                continue;
            }
            let c = grid.center(n);
            if c.x < lo.x || c.x > hi.x || c.y < lo.y || c.y > hi.y {
                continue;
            }
            if polygon.contains(c) {
                assigned[n] = true;
                values[n] = tau;
            }
        }
    }
    ContrastMap::new(*grid, values)
}

/// Fixed 17-significant-digit scientific notation.
pub(crate) fn fmt17(v: f64) -> String {
    let mut s = String::new();
    write!(s, "{v:.16e}").expect("writing to a String");
    s
}

pub(crate) fn parse_fields(line: &str, expected: usize) -> Result<Vec<f64>> {
    let fields: Vec<f64> = line
        .split(',')
        .map(|f| {
            f.trim()
                .parse::<f64>()
                .map_err(|e| Error::Parse(format!("`{f}`: {e}")))
        })
        .collect::<Result<_>>()?;
    if fields.len() != expected {
        return Err(Error::Parse(format!(
            "expected {expected} fields, found {} in `{line}`",
            fields.len()
        )));
    }
    Ok(fields)
}
