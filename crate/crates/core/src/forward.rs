//! Method-of-moments forward solver for TM scattering by a 2D dielectric
//! profile under unit plane-wave illumination.
//!
//! Lengths are in wavelengths, so the background wavenumber is `2 pi`. The
//! time convention is `exp(-j 2 pi f t)`, which makes `H0^(1)` the outgoing
//! kernel. Square cells are integrated as equal-area discs of radius
//! `a = cell_size / sqrt(pi)`:
//!
//! ```text
//! off-cell:  (j pi k0 a / 2) J1(k0 a) H0(k0 rho)
//! self-cell: (j pi k0 a / 2) H1(k0 a) - 1
//! ```
//!
//! Only cells with non-zero contrast carry current, so the state equation
//! is factorized on the support of the contrast; the total field elsewhere
//! follows by direct substitution.

use std::f64::consts::{PI, SQRT_2, TAU};
use std::io::{BufRead, Write};

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::geometry::{decode_to_contrast, fmt17, ContrastMap, DofVector, Point};
use crate::specfun::cylinder_functions;

/// Background wavenumber in units of inverse wavelengths.
pub const K0: f64 = TAU;

/// Pivot ratio below which the MoM system is reported as singular.
const SINGULAR_PIVOT_RATIO: f64 = 1e-13;

pub type CMatrix = DMatrix<Complex64>;

const J: Complex64 = Complex64::new(0.0, 1.0);

/// Square investigation domain centered on the origin, split into
/// `n_side x n_side` cells indexed row-major from the lower-left corner.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Grid {
    side: f64,
    n_side: usize,
}

impl Grid {
    pub fn new(side: f64, n_side: usize) -> Result<Self> {
        if !(side.is_finite() && side > 0.0) {
            return Err(Error::Domain { what: "domain side", value: side });
        }
        if n_side == 0 {
            return Err(Error::Domain { what: "cells per side", value: 0.0 });
        }
        Ok(Self { side, n_side })
    }

    pub fn side(&self) -> f64 {
        self.side
    }

    pub fn n_side(&self) -> usize {
        self.n_side
    }

    /// Number of cells `N`.
    pub fn len(&self) -> usize {
        self.n_side * self.n_side
    }

    pub fn is_empty(&self) -> bool {
        self.n_side == 0
    }

    pub fn cell_size(&self) -> f64 {
        self.side / self.n_side as f64
    }

    /// Radius of the disc with the same area as one cell.
    pub fn equivalent_radius(&self) -> f64 {
        self.cell_size() / PI.sqrt()
    }

    pub fn center(&self, n: usize) -> Point {
        let (ix, iy) = (n % self.n_side, n / self.n_side);
        let d = self.cell_size();
        Point::new(
            -0.5 * self.side + (ix as f64 + 0.5) * d,
            -0.5 * self.side + (iy as f64 + 0.5) * d,
        )
    }

    pub fn centers(&self) -> Vec<Point> {
        (0..self.len()).map(|n| self.center(n)).collect()
    }

    /// Cell containing `p`, if any.
    pub fn index_of(&self, p: Point) -> Option<usize> {
        let d = self.cell_size();
        let fx = (p.x + 0.5 * self.side) / d;
        let fy = (p.y + 0.5 * self.side) / d;
        if fx < 0.0 || fy < 0.0 {
            return None;
        }
        let (ix, iy) = (fx as usize, fy as usize);
        (ix < self.n_side && iy < self.n_side).then_some(iy * self.n_side + ix)
    }
}

/// `V` plane waves from angles `2 pi v / V` and `M` probes evenly spaced on
/// a circle of radius `radius` (all 0-based here).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MeasurementSetup {
    views: usize,
    probes: usize,
    radius: f64,
}

impl MeasurementSetup {
    pub fn new(views: usize, probes: usize, radius: f64) -> Result<Self> {
        if views == 0 || probes == 0 {
            return Err(Error::Config("need at least one view and one probe".into()));
        }
        if !(radius.is_finite() && radius > 0.0) {
            return Err(Error::Domain { what: "observation radius", value: radius });
        }
        Ok(Self { views, probes, radius })
    }

    pub fn views(&self) -> usize {
        self.views
    }

    pub fn probes(&self) -> usize {
        self.probes
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn incidence_angle(&self, view: usize) -> f64 {
        TAU * view as f64 / self.views as f64
    }

    pub fn probe(&self, m: usize) -> Point {
        let (s, c) = (TAU * m as f64 / self.probes as f64).sin_cos();
        Point::new(self.radius * c, self.radius * s)
    }

    pub fn probe_positions(&self) -> Vec<Point> {
        (0..self.probes).map(|m| self.probe(m)).collect()
    }

    /// The observation circle must clear the investigation domain.
    pub fn check_outside(&self, grid: &Grid) -> Result<()> {
        let half_diagonal = 0.5 * grid.side() * SQRT_2;
        if self.radius <= half_diagonal {
            return Err(Error::Geometry(format!(
                "observation radius {} does not clear the domain (half diagonal {half_diagonal})",
                self.radius
            )));
        }
        Ok(())
    }
}

/// `(j pi k0 a / 2) J1(k0 a)`, the equivalent-disc weight of an off-cell
/// Green's entry.
fn off_cell_weight(grid: &Grid) -> Result<Complex64> {
    let ka = K0 * grid.equivalent_radius();
    Ok(J * (0.5 * PI * ka * cylinder_functions(ka)?.j1))
}

/// Self-cell entry `(j pi k0 a / 2) H1(k0 a) - 1`.
fn self_cell_entry(grid: &Grid) -> Result<Complex64> {
    let ka = K0 * grid.equivalent_radius();
    Ok(J * (0.5 * PI * ka) * cylinder_functions(ka)?.h1_1() - 1.0)
}

/// External Green's matrix `G_O` (`M x N`).
pub fn green_external(grid: &Grid, setup: &MeasurementSetup) -> Result<CMatrix> {
    let weight = off_cell_weight(grid)?;
    let half = 0.5 * grid.cell_size();
    let probes = setup.probe_positions();
    let centers = grid.centers();
    for p in &probes {
        if centers
            .iter()
            .any(|c| (p.x - c.x).abs() <= half && (p.y - c.y).abs() <= half)
        {
            return Err(Error::Geometry(format!("probe ({}, {}) lies inside a cell", p.x, p.y)));
        }
    }
    let mut g = CMatrix::zeros(probes.len(), centers.len());
    for (n, c) in centers.iter().enumerate() {
        for (m, p) in probes.iter().enumerate() {
            g[(m, n)] = weight * cylinder_functions(K0 * p.distance(*c))?.h1_0();
        }
    }
    Ok(g)
}

/// Internal Green's operator, stored by cell offset. Entries depend only on
/// `(|ix_n - ix_p|, |iy_n - iy_p|)`, so an `n_side x n_side` table holds the
/// whole `N x N` matrix.
#[derive(Clone, Debug)]
pub struct InternalKernel {
    n_side: usize,
    table: Vec<Complex64>,
}

impl InternalKernel {
    pub fn new(grid: &Grid) -> Result<Self> {
        let n = grid.n_side();
        let d = grid.cell_size();
        let weight = off_cell_weight(grid)?;
        let mut table = Vec::with_capacity(n * n);
        for dy in 0..n {
            for dx in 0..n {
                table.push(if dx == 0 && dy == 0 {
                    self_cell_entry(grid)?
                } else {
                    let rho = d * (dx as f64).hypot(dy as f64);
                    weight * cylinder_functions(K0 * rho)?.h1_0()
                });
            }
        }
        Ok(Self { n_side: n, table })
    }

    #[inline]
    pub fn entry(&self, n: usize, p: usize) -> Complex64 {
        let s = self.n_side;
        let dx = (n % s).abs_diff(p % s);
        let dy = (n / s).abs_diff(p / s);
        self.table[dy * s + dx]
    }

    pub fn to_matrix(&self) -> CMatrix {
        let len = self.n_side * self.n_side;
        CMatrix::from_fn(len, len, |n, p| self.entry(n, p))
    }
}

/// Internal Green's matrix `G_D` (`N x N`).
pub fn green_internal(grid: &Grid) -> Result<CMatrix> {
    Ok(InternalKernel::new(grid)?.to_matrix())
}

/// Unit plane wave of view `view` (0-based) sampled at `points`:
/// `exp(j k0 (x cos phi + y sin phi))`.
pub fn incident_field(points: &[Point], view: usize, setup: &MeasurementSetup) -> Result<Vec<Complex64>> {
    if view >= setup.views() {
        return Err(Error::Domain { what: "view index", value: view as f64 });
    }
    let (s, c) = setup.incidence_angle(view).sin_cos();
    Ok(points
        .iter()
        .map(|p| Complex64::from_polar(1.0, K0 * (p.x * c + p.y * s)))
        .collect())
}

/// `J_n = tau_n T_n`.
pub fn equivalent_currents(contrast: &ContrastMap, total_field: &[Complex64]) -> Result<Vec<Complex64>> {
    let tau = contrast.values();
    if tau.len() != total_field.len() {
        return Err(Error::DimensionMismatch {
            expected: tau.len(),
            found: total_field.len(),
        });
    }
    Ok(tau.iter().zip(total_field).map(|(t, e)| t * e).collect())
}

/// `S = G_O J`.
pub fn scattered_field(green_ext: &CMatrix, currents: &[Complex64]) -> Result<Vec<Complex64>> {
    if green_ext.ncols() != currents.len() {
        return Err(Error::DimensionMismatch {
            expected: green_ext.ncols(),
            found: currents.len(),
        });
    }
    Ok((0..green_ext.nrows())
        .map(|m| {
            green_ext
                .row(m)
                .iter()
                .zip(currents)
                .map(|(g, j)| g * j)
                .sum()
        })
        .collect())
}

/// Solves `[I - G_D diag(tau)] T = incident` for one right-hand side.
pub fn total_field_solve(grid: &Grid, contrast: &ContrastMap, incident: &[Complex64]) -> Result<Vec<Complex64>> {
    let kernel = InternalKernel::new(grid)?;
    FactoredSystem::new(&kernel, contrast)?.total_field(incident)
}

/// LU factorization of the state equation restricted to the contrast
/// support, reusable across illuminations.
pub struct FactoredSystem<'a> {
    kernel: &'a InternalKernel,
    tau: Vec<Complex64>,
    support: Vec<usize>,
    lu: Option<nalgebra::LU<Complex64, nalgebra::Dyn, nalgebra::Dyn>>,
}

impl<'a> FactoredSystem<'a> {
    pub fn new(kernel: &'a InternalKernel, contrast: &ContrastMap) -> Result<Self> {
        let n = kernel.n_side * kernel.n_side;
        if contrast.values().len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                found: contrast.values().len(),
            });
        }
        let support = contrast.support();
        let tau = contrast.values().to_vec();
        let lu = if support.is_empty() {
            None
        } else {
            let s = support.len();
            let a = CMatrix::from_fn(s, s, |r, c| {
                let g = kernel.entry(support[r], support[c]) * tau[support[c]];
                if r == c {
                    Complex64::new(1.0, 0.0) - g
                } else {
                    -g
                }
            });
            let lu = a.lu();
            let pivots = lu.u().diagonal();
            let (lo, hi) = pivots
                .iter()
                .map(|p| p.norm())
                .fold((f64::INFINITY, 0.0_f64), |(lo, hi), v| (lo.min(v), hi.max(v)));
            // The system is identity-scaled, so pivots are also compared with 1.
            if !(lo > SINGULAR_PIVOT_RATIO * hi.max(1.0)) {
                return Err(Error::SingularSystem {
                    condition: if lo > 0.0 { hi / lo } else { f64::INFINITY },
                });
            }
            Some(lu)
        };
        Ok(Self { kernel, tau, support, lu })
    }

    pub fn support(&self) -> &[usize] {
        &self.support
    }

    /// Total field on the support for several incident fields at once
    /// (`incident` is `N x V`; the result is `|support| x V`).
    pub fn support_fields(&self, incident: &CMatrix) -> Result<CMatrix> {
        let s = self.support.len();
        let Some(lu) = &self.lu else {
            return Ok(CMatrix::zeros(0, incident.ncols()));
        };
        let rhs = CMatrix::from_fn(s, incident.ncols(), |r, v| incident[(self.support[r], v)]);
        lu.solve(&rhs)
            .ok_or(Error::SingularSystem { condition: f64::INFINITY })
    }

    /// Full-length total field for one incident field.
    pub fn total_field(&self, incident: &[Complex64]) -> Result<Vec<Complex64>> {
        let n = self.tau.len();
        if incident.len() != n {
            return Err(Error::DimensionMismatch { expected: n, found: incident.len() });
        }
        let rhs = CMatrix::from_column_slice(n, 1, incident);
        let on_support = self.support_fields(&rhs)?;
        let mut total = incident.to_vec();
        let currents: Vec<(usize, Complex64)> = self
            .support
            .iter()
            .enumerate()
            .map(|(r, &p)| (p, self.tau[p] * on_support[(r, 0)]))
            .collect();
        for (r, &p) in self.support.iter().enumerate() {
            total[p] = on_support[(r, 0)];
        }
        let mut in_support = vec![false; n];
        for &p in &self.support {
            in_support[p] = true;
        }
        for i in (0..n).filter(|&i| !in_support[i]) {
            total[i] += currents
                .iter()
                .map(|&(p, j)| self.kernel.entry(i, p) * j)
                .sum::<Complex64>();
        }
        Ok(total)
    }
}

/// Precomputed operators for one grid and measurement setup.
#[derive(Clone, Debug)]
pub struct ForwardSolver {
    grid: Grid,
    setup: MeasurementSetup,
    kernel: InternalKernel,
    green_ext: CMatrix,
    /// `N x V`.
    incident: CMatrix,
}

/// Fields for every view: `total` and `currents` are `N x V`, `scattered`
/// is `M x V`.
#[derive(Clone, Debug)]
pub struct ForwardSolution {
    pub total: CMatrix,
    pub currents: CMatrix,
    pub scattered: CMatrix,
}

impl ForwardSolver {
    pub fn new(grid: Grid, setup: MeasurementSetup) -> Result<Self> {
        setup.check_outside(&grid)?;
        let kernel = InternalKernel::new(&grid)?;
        let green_ext = green_external(&grid, &setup)?;
        let centers = grid.centers();
        let mut incident = CMatrix::zeros(grid.len(), setup.views());
        for v in 0..setup.views() {
            let field = incident_field(&centers, v, &setup)?;
            incident.set_column(v, &nalgebra::DVector::from_vec(field));
        }
        Ok(Self { grid, setup, kernel, green_ext, incident })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn setup(&self) -> &MeasurementSetup {
        &self.setup
    }

    pub fn kernel(&self) -> &InternalKernel {
        &self.kernel
    }

    pub fn green_external(&self) -> &CMatrix {
        &self.green_ext
    }

    pub fn incident(&self) -> &CMatrix {
        &self.incident
    }

    fn check_grid(&self, contrast: &ContrastMap) -> Result<()> {
        if contrast.grid() != &self.grid {
            return Err(Error::DimensionMismatch {
                expected: self.grid.len(),
                found: contrast.grid().len(),
            });
        }
        Ok(())
    }

    /// Scattered field at the probes for every view (`M x V`); one
    /// factorization serves all views.
    pub fn scattered(&self, contrast: &ContrastMap) -> Result<CMatrix> {
        self.check_grid(contrast)?;
        let system = FactoredSystem::new(&self.kernel, contrast)?;
        let support = system.support();
        if support.is_empty() {
            return Ok(CMatrix::zeros(self.setup.probes(), self.setup.views()));
        }
        let fields = system.support_fields(&self.incident)?;
        let tau = contrast.values();
        let currents = CMatrix::from_fn(support.len(), fields.ncols(), |r, v| {
            tau[support[r]] * fields[(r, v)]
        });
        let g = self.green_ext.select_columns(support.iter());
        Ok(g * currents)
    }

    /// Total fields, equivalent currents and scattered field for every view.
    pub fn solve(&self, contrast: &ContrastMap) -> Result<ForwardSolution> {
        self.check_grid(contrast)?;
        let system = FactoredSystem::new(&self.kernel, contrast)?;
        let (n, views) = (self.grid.len(), self.setup.views());
        let mut total = CMatrix::zeros(n, views);
        let mut currents = CMatrix::zeros(n, views);
        let mut scattered = CMatrix::zeros(self.setup.probes(), views);
        for v in 0..views {
            let incident: Vec<Complex64> = self.incident.column(v).iter().copied().collect();
            let t = system.total_field(&incident)?;
            let j = equivalent_currents(contrast, &t)?;
            let s = scattered_field(&self.green_ext, &j)?;
            total.set_column(v, &nalgebra::DVector::from_vec(t));
            currents.set_column(v, &nalgebra::DVector::from_vec(j));
            scattered.set_column(v, &nalgebra::DVector::from_vec(s));
        }
        Ok(ForwardSolution { total, currents, scattered })
    }
}

/// Measured (or synthesized) scattered field, `M x V`.
#[derive(Clone, Debug, PartialEq)]
pub struct ScatteringDataset {
    pub side: f64,
    /// Cells per side of the generating discretization (0 when unknown,
    /// e.g. measured data).
    pub n_side_fw: usize,
    pub setup: MeasurementSetup,
    pub scattered: CMatrix,
    pub snr_db: Option<f64>,
    pub seed: u64,
}

pub const DATASET_HEADER: &str = "# L_D,n_side_fw,V,M,rho_O,snr_db,seed";
pub const DATASET_COLUMNS: &str = "v,m,x_m,y_m,re_s,im_s";

impl ScatteringDataset {
    pub fn new(
        side: f64,
        n_side_fw: usize,
        setup: MeasurementSetup,
        scattered: CMatrix,
        snr_db: Option<f64>,
        seed: u64,
    ) -> Result<Self> {
        if scattered.nrows() != setup.probes() {
            return Err(Error::DimensionMismatch {
                expected: setup.probes(),
                found: scattered.nrows(),
            });
        }
        if scattered.ncols() != setup.views() {
            return Err(Error::DimensionMismatch {
                expected: setup.views(),
                found: scattered.ncols(),
            });
        }
        if scattered.iter().any(|s| !(s.re.is_finite() && s.im.is_finite())) {
            return Err(Error::Parse("non-finite scattered sample".into()));
        }
        Ok(Self { side, n_side_fw, setup, scattered, snr_db, seed })
    }

    /// Writes the dataset CSV. `comments` are emitted as extra `# ` lines
    /// between the parameter line and the column header.
    pub fn write_csv<W: Write>(&self, mut out: W, comments: &[String]) -> Result<()> {
        writeln!(out, "{DATASET_HEADER}")?;
        let snr = self.snr_db.map_or_else(|| "none".to_string(), |s| s.to_string());
        writeln!(
            out,
            "# {},{},{},{},{},{},{}",
            self.side,
            self.n_side_fw,
            self.setup.views(),
            self.setup.probes(),
            self.setup.radius(),
            snr,
            self.seed
        )?;
        for c in comments {
            writeln!(out, "# {c}")?;
        }
        writeln!(out, "{DATASET_COLUMNS}")?;
        for v in 0..self.setup.views() {
            for m in 0..self.setup.probes() {
                let p = self.setup.probe(m);
                let s = self.scattered[(m, v)];
                writeln!(
                    out,
                    "{},{},{},{},{},{}",
                    v + 1,
                    m + 1,
                    fmt17(p.x),
                    fmt17(p.y),
                    fmt17(s.re),
                    fmt17(s.im)
                )?;
            }
        }
        Ok(())
    }

    pub fn read_csv<R: BufRead>(input: R) -> Result<Self> {
        let mut lines = input.lines();
        let mut next_line = || -> Result<String> {
            lines
                .next()
                .ok_or_else(|| Error::Parse("unexpected end of dataset file".into()))?
                .map_err(Error::from)
        };
        if next_line()?.trim() != DATASET_HEADER {
            return Err(Error::Parse(format!("first line must be `{DATASET_HEADER}`")));
        }
        let params = next_line()?;
        let params = params
            .trim()
            .strip_prefix('#')
            .ok_or_else(|| Error::Parse("missing parameter line".into()))?;
        let f: Vec<&str> = params.split(',').map(str::trim).collect();
        if f.len() != 7 {
            return Err(Error::Parse(format!("parameter line needs 7 fields, got {}", f.len())));
        }
        let num = |s: &str| s.parse::<f64>().map_err(|e| Error::Parse(format!("`{s}`: {e}")));
        let int = |s: &str| s.parse::<usize>().map_err(|e| Error::Parse(format!("`{s}`: {e}")));
        let side = num(f[0])?;
        let n_side_fw = int(f[1])?;
        let setup = MeasurementSetup::new(int(f[2])?, int(f[3])?, num(f[4])?)?;
        let snr_db = match f[5] {
            "none" | "" => None,
            s => Some(num(s)?),
        };
        let seed = f[6].parse::<u64>().map_err(|e| Error::Parse(format!("seed: {e}")))?;

        let (views, probes) = (setup.views(), setup.probes());
        let mut scattered = CMatrix::zeros(probes, views);
        let mut count = 0;
        for line in lines {
            let line = line?;
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') || line == DATASET_COLUMNS {
                continue;
            }
            let row = crate::geometry::parse_fields(line, 6)?;
            let (v, m) = (row[0] as usize, row[1] as usize);
            if count >= views * probes || v != count / probes + 1 || m != count % probes + 1 {
                return Err(Error::Parse(format!("row `{line}` out of view-major order")));
            }
            let expected = setup.probe(m - 1);
            if expected.distance(Point::new(row[2], row[3])) > 1e-9 * setup.radius().max(1.0) {
                return Err(Error::Parse(format!("probe {m} position does not match the setup")));
            }
            scattered[(m - 1, v - 1)] = Complex64::new(row[4], row[5]);
            count += 1;
        }
        if count != views * probes {
            return Err(Error::Parse(format!(
                "expected {} samples, found {count}",
                views * probes
            )));
        }
        Self::new(side, n_side_fw, setup, scattered, snr_db, seed)
    }
}

/// What to synthesize data from.
#[derive(Clone, Debug)]
pub enum Scene {
    Dofs(DofVector),
    Map(ContrastMap),
}

/// Mean power `sum |S|^2 / (M V)` of a set of scattered samples.
pub fn mean_power(samples: &CMatrix) -> f64 {
    samples.iter().map(|s| s.norm_sqr()).sum::<f64>() / samples.len() as f64
}

/// Adds circular complex Gaussian noise of variance
/// `mean_power * 10^(-snr_db / 10)` per sample. Draws are taken view-major,
/// then probe, real part before imaginary.
pub fn add_noise(samples: &mut CMatrix, snr_db: f64, rng: &mut ChaCha8Rng) {
    let variance = mean_power(samples) * 10f64.powf(-snr_db / 10.0);
    let sigma = (0.5 * variance).sqrt();
    for v in 0..samples.ncols() {
        for m in 0..samples.nrows() {
            let re: f64 = StandardNormal.sample(rng);
            let im: f64 = StandardNormal.sample(rng);
            samples[(m, v)] += Complex64::new(sigma * re, sigma * im);
        }
    }
}

/// Runs the forward model for `scene` on `fine_grid` and optionally adds
/// noise. Refuses to synthesize on the inversion discretization unless
/// `allow_inverse_crime` is set.
pub fn synthesize_dataset(
    scene: &Scene,
    fine_grid: &Grid,
    inversion_grid: &Grid,
    setup: &MeasurementSetup,
    snr_db: Option<f64>,
    seed: u64,
    allow_inverse_crime: bool,
) -> Result<ScatteringDataset> {
    if !allow_inverse_crime && fine_grid.n_side() == inversion_grid.n_side() {
        return Err(Error::InverseCrime(fine_grid.n_side()));
    }
    let contrast = match scene {
        Scene::Dofs(dof) => decode_to_contrast(dof, fine_grid)?,
        Scene::Map(map) => {
            if map.grid() != fine_grid {
                return Err(Error::DimensionMismatch {
                    expected: fine_grid.len(),
                    found: map.grid().len(),
                });
            }
            map.clone()
        }
    };
    let solver = ForwardSolver::new(*fine_grid, *setup)?;
    let mut scattered = solver.scattered(&contrast)?;
    if let Some(snr) = snr_db {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        add_noise(&mut scattered, snr, &mut rng);
    }
    ScatteringDataset::new(fine_grid.side(), fine_grid.n_side(), *setup, scattered, snr_db, seed)
}
