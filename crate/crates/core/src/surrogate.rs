//! Ordinary-Kriging Gaussian-process model of the cost function.
//!
//! Inputs are mapped to `[0, 1]^K` by the search bounds before entering the
//! correlation `r(a, b) = prod_k exp(-gamma_k |a_k - b_k|^beta_k)`. The model
//! has a constant trend `chi`, process variance `nu^2`, and predictive
//! variance
//!
//! ```text
//! delta^2 = nu^2 [1 - r' R^-1 r + (1 - 1' R^-1 r)^2 / (1' R^-1 1)]
//! ```
//!
//! Hyperparameters maximize the concentrated log-likelihood
//! `-(S ln nu^2 + ln det R) / 2` by multi-start Nelder-Mead over
//! `log10 gamma in [-3, 3]` (and optionally `beta in [1, 2]`).

use std::io::Write;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::geometry::{fmt17, DofSpace};

/// Training inputs closer than this in normalized coordinates are treated
/// as duplicates.
pub const DUPLICATE_DISTANCE: f64 = 1e-9;

/// Nugget relative to the mean diagonal of the correlation matrix.
pub const NUGGET_SCALE: f64 = 1e-10;

const LOG10_GAMMA_RANGE: (f64, f64) = (-3.0, 3.0);
const BETA_RANGE: (f64, f64) = (1.0, 2.0);

/// Axis-aligned box of admissible inputs.
#[derive(Clone, Debug, PartialEq)]
pub struct Bounds {
    lower: Vec<f64>,
    upper: Vec<f64>,
}

impl Bounds {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        if lower.len() != upper.len() {
            return Err(Error::DimensionMismatch { expected: lower.len(), found: upper.len() });
        }
        if lower.is_empty() {
            return Err(Error::Config("bounds need at least one dimension".into()));
        }
        for (lo, hi) in lower.iter().zip(&upper) {
            if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                return Err(Error::Config(format!("invalid bound [{lo}, {hi}]")));
            }
        }
        Ok(Self { lower, upper })
    }

    pub fn unit(dim: usize) -> Result<Self> {
        Self::new(vec![0.0; dim], vec![1.0; dim])
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

    pub fn contains(&self, x: &[f64]) -> bool {
        x.len() == self.dim()
            && x
                .iter()
                .zip(self.lower.iter().zip(&self.upper))
                .all(|(v, (lo, hi))| lo <= v && v <= hi)
    }

    pub fn clamp(&self, x: &mut [f64]) {
        for (v, (lo, hi)) in x.iter_mut().zip(self.lower.iter().zip(&self.upper)) {
            *v = v.clamp(*lo, *hi);
        }
    }

    pub fn normalize(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(self.lower.iter().zip(&self.upper))
            .map(|(v, (lo, hi))| (v - lo) / (hi - lo))
            .collect()
    }

    pub fn denormalize(&self, u: &[f64]) -> Vec<f64> {
        u.iter()
            .zip(self.lower.iter().zip(&self.upper))
            .map(|(v, (lo, hi))| lo + v * (hi - lo))
            .collect()
    }
}

impl From<&DofSpace> for Bounds {
    fn from(space: &DofSpace) -> Self {
        Self {
            lower: space.lower().to_vec(),
            upper: space.upper().to_vec(),
        }
    }
}

/// Latin hypercube design of `samples` points: per dimension, each of the
/// `samples` equal-width strata holds exactly one point, placed uniformly
/// within it, with strata assigned by an independent random permutation.
pub fn lhs_sample<R: Rng + ?Sized>(bounds: &Bounds, samples: usize, rng: &mut R) -> Vec<Vec<f64>> {
    let mut points = vec![vec![0.0; bounds.dim()]; samples];
    let mut strata: Vec<usize> = (0..samples).collect();
    for k in 0..bounds.dim() {
        strata.shuffle(rng);
        let (lo, hi) = (bounds.lower[k], bounds.upper[k]);
        let width = (hi - lo) / samples as f64;
        for (point, &stratum) in points.iter_mut().zip(&strata) {
            let u: f64 = rng.random();
            point[k] = (lo + (stratum as f64 + u) * width).min(hi);
        }
    }
    points
}

/// Input/output pairs the model interpolates.
#[derive(Clone, Debug)]
pub struct TrainingSet {
    bounds: Bounds,
    inputs: Vec<Vec<f64>>,
    normalized: Vec<Vec<f64>>,
    outputs: Vec<f64>,
}

impl TrainingSet {
    pub fn new(bounds: Bounds) -> Self {
        Self {
            bounds,
            inputs: Vec::new(),
            normalized: Vec::new(),
            outputs: Vec::new(),
        }
    }

    pub fn bounds(&self) -> &Bounds {
        &self.bounds
    }

    pub fn len(&self) -> usize {
        self.outputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.outputs.is_empty()
    }

    pub fn inputs(&self) -> &[Vec<f64>] {
        &self.inputs
    }

    pub fn outputs(&self) -> &[f64] {
        &self.outputs
    }

    pub fn normalized_inputs(&self) -> &[Vec<f64>] {
        &self.normalized
    }

    /// Whether `x` lies within [`DUPLICATE_DISTANCE`] of a stored input.
    pub fn is_duplicate(&self, x: &[f64]) -> bool {
        let u = self.bounds.normalize(x);
        self.normalized.iter().any(|v| {
            v.iter().zip(&u).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt() < DUPLICATE_DISTANCE
        })
    }

    /// Adds a sample. Returns `Ok(false)` and leaves the set unchanged when
    /// `x` duplicates an existing input.
    pub fn push(&mut self, x: Vec<f64>, phi: f64) -> Result<bool> {
        if x.len() != self.bounds.dim() {
            return Err(Error::DimensionMismatch { expected: self.bounds.dim(), found: x.len() });
        }
        if !self.bounds.contains(&x) {
            return Err(Error::Training("training input outside the bounds".into()));
        }
        if !(phi.is_finite() && phi >= 0.0) {
            return Err(Error::Training(format!("training output {phi} must be finite and >= 0")));
        }
        if self.is_duplicate(&x) {
            return Ok(false);
        }
        self.normalized.push(self.bounds.normalize(&x));
        self.inputs.push(x);
        self.outputs.push(phi);
        Ok(true)
    }

    /// Index and value of the smallest output.
    pub fn best(&self) -> Option<(usize, f64)> {
        self.outputs
            .iter()
            .copied()
            .enumerate()
            .fold(None, |best, (i, v)| match best {
                Some((_, b)) if b <= v => best,
                _ => Some((i, v)),
            })
    }
}

/// Correlation parameters per dimension.
#[derive(Clone, Debug, PartialEq)]
pub struct Hyperparameters {
    pub gamma: Vec<f64>,
    pub beta: Vec<f64>,
}

impl Hyperparameters {
    /// `gamma = 1`, `beta = 2` in every dimension.
    pub fn default_for(dim: usize) -> Self {
        Self { gamma: vec![1.0; dim], beta: vec![2.0; dim] }
    }

    fn validate(&self, dim: usize) -> Result<()> {
        if self.gamma.len() != dim || self.beta.len() != dim {
            return Err(Error::DimensionMismatch { expected: dim, found: self.gamma.len() });
        }
        if self.gamma.iter().any(|g| !(g.is_finite() && *g > 0.0)) {
            return Err(Error::Training("gamma must be positive".into()));
        }
        if self.beta.iter().any(|b| !(BETA_RANGE.0..=BETA_RANGE.1).contains(b)) {
            return Err(Error::Training("beta must lie in [1, 2]".into()));
        }
        Ok(())
    }
}

/// Correlation of two normalized inputs.
pub fn correlation(a: &[f64], b: &[f64], hyper: &Hyperparameters) -> f64 {
    let exponent: f64 = a
        .iter()
        .zip(b)
        .zip(hyper.gamma.iter().zip(&hyper.beta))
        .map(|((x, y), (g, beta))| {
            let d = (x - y).abs();
            g * if *beta == 2.0 { d * d } else { d.powf(*beta) }
        })
        .sum();
    (-exponent).exp()
}

/// Prediction at one input.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Prediction {
    pub mean: f64,
    pub variance: f64,
    /// `mean - 2 sqrt(variance)`.
    pub lcb: f64,
    /// `mean + 2 sqrt(variance)`.
    pub ucb: f64,
}

impl Prediction {
    /// Lower bound clipped at zero, since the cost is nonnegative.
    pub fn lcb_plus(&self) -> f64 {
        self.lcb.max(0.0)
    }
}

/// Trained ordinary-Kriging model. Immutable once built.
#[derive(Clone, Debug)]
pub struct GpModel {
    bounds: Bounds,
    hyper: Hyperparameters,
    inputs: Vec<Vec<f64>>,
    outputs: Vec<f64>,
    chol: Cholesky<f64, Dyn>,
    nugget: f64,
    chi: f64,
    nu2: f64,
    /// `R^-1 (phi - chi 1)`.
    weights: DVector<f64>,
    /// `L^-1 1`.
    l_inv_one: DVector<f64>,
    /// `1' R^-1 1`.
    one_r_one: f64,
    log_det: f64,
}

fn correlation_matrix(inputs: &[Vec<f64>], hyper: &Hyperparameters) -> DMatrix<f64> {
    let s = inputs.len();
    let mut r = DMatrix::identity(s, s);
    for i in 0..s {
        for j in 0..i {
            let v = correlation(&inputs[i], &inputs[j], hyper);
            r[(i, j)] = v;
            r[(j, i)] = v;
        }
    }
    r
}

impl GpModel {
    /// Builds the model for fixed hyperparameters.
    pub fn train(set: &TrainingSet, hyper: &Hyperparameters) -> Result<Self> {
        let s = set.len();
        if s == 0 {
            return Err(Error::Training("empty training set".into()));
        }
        hyper.validate(set.bounds().dim())?;
        let mut r = correlation_matrix(set.normalized_inputs(), hyper);
        let nugget = NUGGET_SCALE * r.trace() / s as f64;
        for i in 0..s {
            r[(i, i)] += nugget;
        }
        let chol = r.cholesky().ok_or_else(|| {
            Error::Training("correlation matrix is not positive definite; remove duplicate samples".into())
        })?;
        let phi = DVector::from_column_slice(set.outputs());
        let one = DVector::from_element(s, 1.0);
        let r_inv_one = chol.solve(&one);
        let one_r_one = one.dot(&r_inv_one);
        let chi = r_inv_one.dot(&phi) / one_r_one;
        let resid = phi.add_scalar(-chi);
        let weights = chol.solve(&resid);
        let nu2 = (resid.dot(&weights) / s as f64).max(0.0);
        let l_inv_one = chol
            .l_dirty()
            .solve_lower_triangular(&one)
            .ok_or_else(|| Error::Training("triangular solve failed".into()))?;
        let log_det = 2.0 * chol.l_dirty().diagonal().iter().map(|d| d.ln()).sum::<f64>();
        if !(chi.is_finite() && nu2.is_finite() && log_det.is_finite()) {
            return Err(Error::Training("non-finite model parameters".into()));
        }
        Ok(Self {
            bounds: set.bounds().clone(),
            hyper: hyper.clone(),
            inputs: set.normalized_inputs().to_vec(),
            outputs: set.outputs().to_vec(),
            chol,
            nugget,
            chi,
            nu2,
            weights,
            l_inv_one,
            one_r_one,
            log_det,
        })
    }

    pub fn hyperparameters(&self) -> &Hyperparameters {
        &self.hyper
    }

    pub fn chi(&self) -> f64 {
        self.chi
    }

    pub fn nu2(&self) -> f64 {
        self.nu2
    }

    pub fn nugget(&self) -> f64 {
        self.nugget
    }

    pub fn len(&self) -> usize {
        self.outputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.outputs.is_empty()
    }

    /// `1' R^-1 1`.
    pub fn one_r_one(&self) -> f64 {
        self.one_r_one
    }

    /// Concentrated log-likelihood. Infinite when the outputs are constant.
    pub fn log_likelihood(&self) -> f64 {
        -0.5 * (self.len() as f64 * self.nu2.ln() + self.log_det)
    }

    /// Mean, variance and confidence bounds at raw input `x`.
    pub fn predict(&self, x: &[f64]) -> Result<Prediction> {
        if x.len() != self.bounds.dim() {
            return Err(Error::DimensionMismatch { expected: self.bounds.dim(), found: x.len() });
        }
        let u = self.bounds.normalize(x);
        let r = DVector::from_iterator(
            self.inputs.len(),
            self.inputs.iter().map(|v| correlation(v, &u, &self.hyper)),
        );
        let mean = self.chi + r.dot(&self.weights);
        // With w = L^-1 r: r' R^-1 r = w'w and 1' R^-1 r = (L^-1 1)'w.
        let w = self
            .chol
            .l_dirty()
            .solve_lower_triangular(&r)
            .ok_or_else(|| Error::Training("triangular solve failed".into()))?;
        let rr = w.dot(&w);
        let gap = 1.0 - self.l_inv_one.dot(&w);
        let variance = (self.nu2 * (1.0 - rr + gap * gap / self.one_r_one)).max(0.0);
        let sd = variance.sqrt();
        Ok(Prediction { mean, variance, lcb: mean - 2.0 * sd, ucb: mean + 2.0 * sd })
    }

    /// Writes hyperparameters, scalars and the training set as CSV.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        let join = |v: &[f64]| v.iter().map(|x| fmt17(*x)).collect::<Vec<_>>().join(",");
        writeln!(out, "gamma,{}", join(&self.hyper.gamma))?;
        writeln!(out, "beta,{}", join(&self.hyper.beta))?;
        writeln!(out, "chi,{}", fmt17(self.chi))?;
        writeln!(out, "nu2,{}", fmt17(self.nu2))?;
        writeln!(out, "s,{}", self.len())?;
        let k = self.bounds.dim();
        let names: Vec<String> = (1..=k).map(|i| format!("x{i}")).collect();
        writeln!(out, "{},phi", names.join(","))?;
        for (u, phi) in self.inputs.iter().zip(&self.outputs) {
            writeln!(out, "{},{}", join(&self.bounds.denormalize(u)), fmt17(*phi))?;
        }
        Ok(())
    }
}

/// Search settings for [`fit_hyperparameters`].
#[derive(Clone, Debug, PartialEq)]
pub struct FitOptions {
    pub starts: usize,
    pub evaluations_per_start: usize,
    /// Search `beta` as well; otherwise every `beta_k` is 2.
    pub fit_beta: bool,
    pub seed: u64,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self { starts: 5, evaluations_per_start: 200, fit_beta: false, seed: 0 }
    }
}

fn decode_params(p: &[f64], dim: usize, fit_beta: bool) -> Hyperparameters {
    Hyperparameters {
        gamma: p[..dim].iter().map(|l| 10f64.powf(*l)).collect(),
        beta: if fit_beta { p[dim..].to_vec() } else { vec![2.0; dim] },
    }
}

fn encode_params(h: &Hyperparameters, fit_beta: bool) -> Vec<f64> {
    let mut p: Vec<f64> = h.gamma.iter().map(|g| g.log10()).collect();
    if fit_beta {
        p.extend(&h.beta);
    }
    p
}

/// Concentrated log-likelihood at `hyper`, `-inf` if training fails.
pub fn log_likelihood(set: &TrainingSet, hyper: &Hyperparameters) -> f64 {
    match GpModel::train(set, hyper) {
        Ok(model) => {
            let l = model.log_likelihood();
            if l.is_nan() {
                f64::NEG_INFINITY
            } else {
                l
            }
        }
        Err(_) => f64::NEG_INFINITY,
    }
}

/// Maximizes the concentrated log-likelihood. With `warm_start`, the search
/// runs from that point plus one fresh random start; otherwise from
/// `options.starts` Latin-hypercube starts.
pub fn fit_hyperparameters(
    set: &TrainingSet,
    options: &FitOptions,
    warm_start: Option<&Hyperparameters>,
) -> Result<Hyperparameters> {
    let dim = set.bounds().dim();
    if set.is_empty() {
        return Err(Error::Training("empty training set".into()));
    }
    if set.len() < dim + 1 {
        log::warn!("fitting {dim} length scales to only {} samples", set.len());
    }
    let (lo, hi) = set.outputs().iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| {
        (a.min(*v), b.max(*v))
    });
    if hi - lo <= f64::EPSILON * hi.abs() {
        return Ok(Hyperparameters::default_for(dim));
    }

    let mut lower = vec![LOG10_GAMMA_RANGE.0; dim];
    let mut upper = vec![LOG10_GAMMA_RANGE.1; dim];
    if options.fit_beta {
        lower.extend(vec![BETA_RANGE.0; dim]);
        upper.extend(vec![BETA_RANGE.1; dim]);
    }
    let search = Bounds::new(lower, upper)?;
    let mut rng = ChaCha8Rng::seed_from_u64(options.seed);
    let starts = match warm_start {
        Some(h) => {
            let mut warm = h.clone();
            warm.beta.iter_mut().for_each(|b| *b = b.clamp(BETA_RANGE.0, BETA_RANGE.1));
            let mut p = encode_params(&warm, options.fit_beta);
            search.clamp(&mut p);
            vec![p, lhs_sample(&search, 1, &mut rng).remove(0)]
        }
        None => lhs_sample(&search, options.starts.max(1), &mut rng),
    };

    let objective = |p: &[f64]| -log_likelihood(set, &decode_params(p, dim, options.fit_beta));
    let mut best: Option<(Vec<f64>, f64)> = None;
    for start in starts {
        let (p, value) = nelder_mead(&objective, &search, start, options.evaluations_per_start);
        if best.as_ref().is_none_or(|(_, b)| value < *b) {
            best = Some((p, value));
        }
    }
    match best {
        Some((p, v)) if v.is_finite() => Ok(decode_params(&p, dim, options.fit_beta)),
        _ => Err(Error::Training("no hyperparameter candidate could be trained".into())),
    }
}

/// Bound-constrained Nelder-Mead (vertices projected onto the box) with a
/// hard budget of `max_evals` objective evaluations.
pub fn nelder_mead(
    f: &dyn Fn(&[f64]) -> f64,
    bounds: &Bounds,
    start: Vec<f64>,
    max_evals: usize,
) -> (Vec<f64>, f64) {
    let n = start.len();
    let eval = |p: &mut Vec<f64>| -> f64 {
        bounds.clamp(p);
        let v = f(p);
        if v.is_nan() {
            f64::INFINITY
        } else {
            v
        }
    };
    let mut first = start;
    let f0 = eval(&mut first);
    let mut simplex = vec![(first.clone(), f0)];
    for k in 0..n {
        let mut p = first.clone();
        let step = 0.1 * (bounds.upper[k] - bounds.lower[k]);
        p[k] += if p[k] + step <= bounds.upper[k] { step } else { -step };
        let v = eval(&mut p);
        simplex.push((p, v));
    }
    let mut used = n + 1;
    while used < max_evals {
        simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
        let (best, worst) = (simplex[0].1, simplex[n].1);
        if (worst - best).abs() <= 1e-12 * (1.0 + best.abs()) && best.is_finite() {
            break;
        }
        let centroid: Vec<f64> = (0..n)
            .map(|k| simplex[..n].iter().map(|(p, _)| p[k]).sum::<f64>() / n as f64)
            .collect();
        let along = |t: f64| -> Vec<f64> {
            centroid
                .iter()
                .zip(&simplex[n].0)
                .map(|(c, w)| c + t * (w - c))
                .collect()
        };
        let mut reflected = along(-1.0);
        let fr = eval(&mut reflected);
        used += 1;
        if fr < simplex[0].1 {
            let mut expanded = along(-2.0);
            let fe = eval(&mut expanded);
            used += 1;
            simplex[n] = if fe < fr { (expanded, fe) } else { (reflected, fr) };
            continue;
        }
        if fr < simplex[n - 1].1 {
            simplex[n] = (reflected, fr);
            continue;
        }
        let mut contracted = if fr < simplex[n].1 { along(-0.5) } else { along(0.5) };
        let fc = eval(&mut contracted);
        used += 1;
        if fc < fr.min(simplex[n].1) {
            simplex[n] = (contracted, fc);
            continue;
        }
        // Shrink toward the best vertex.
        let anchor = simplex[0].0.clone();
        for vertex in simplex.iter_mut().skip(1) {
            if used >= max_evals {
                break;
            }
            let mut p: Vec<f64> = anchor.iter().zip(&vertex.0).map(|(a, x)| a + 0.5 * (x - a)).collect();
            let v = eval(&mut p);
            used += 1;
            *vertex = (p, v);
        }
    }
    simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
    simplex.swap_remove(0)
}

/// A fitted model of the cost over the search box.
pub trait Surrogate {
    /// Refits to the current training set.
    fn fit(&mut self, set: &TrainingSet) -> Result<()>;
    fn predict(&self, x: &[f64]) -> Result<Prediction>;
}

/// The Kriging surrogate: hyperparameters are refitted on every update,
/// warm-started from the previous optimum.
#[derive(Clone, Debug)]
pub struct GpSurrogate {
    options: FitOptions,
    model: Option<GpModel>,
    fits: u64,
}

impl GpSurrogate {
    pub fn new(options: FitOptions) -> Self {
        Self { options, model: None, fits: 0 }
    }

    pub fn model(&self) -> Option<&GpModel> {
        self.model.as_ref()
    }
}

impl Surrogate for GpSurrogate {
    fn fit(&mut self, set: &TrainingSet) -> Result<()> {
        let options = FitOptions {
            seed: self.options.seed.wrapping_add(self.fits),
            ..self.options.clone()
        };
        let warm = self.model.as_ref().map(|m| m.hyperparameters().clone());
        let hyper = fit_hyperparameters(set, &options, warm.as_ref())?;
        self.model = Some(GpModel::train(set, &hyper)?);
        self.fits += 1;
        Ok(())
    }

    fn predict(&self, x: &[f64]) -> Result<Prediction> {
        self.model
            .as_ref()
            .ok_or_else(|| Error::Training("surrogate used before fitting".into()))?
            .predict(x)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::Rng;

    fn random_set(dim: usize, s: usize, seed: u64) -> TrainingSet {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let bounds = Bounds::new(vec![-1.0; dim], vec![2.0; dim]).unwrap();
        let mut set = TrainingSet::new(bounds.clone());
        for x in lhs_sample(&bounds, s, &mut rng) {
            let phi = test_fn(&x);
            assert!(set.push(x, phi).unwrap());
        }
        set
    }

    fn test_fn(x: &[f64]) -> f64 {
        (x.iter().map(|v| (v - 0.3).powi(2)).sum::<f64>() + 0.1 * x[0].sin()).max(0.0)
    }

    /// Gauss-Jordan inverse with partial pivoting.
    fn naive_inverse(a: &DMatrix<f64>) -> DMatrix<f64> {
        let n = a.nrows();
        let mut m = a.clone();
        let mut inv = DMatrix::<f64>::identity(n, n);
        for c in 0..n {
            let p = (c..n).max_by(|&i, &j| m[(i, c)].abs().total_cmp(&m[(j, c)].abs())).unwrap();
            m.swap_rows(c, p);
            inv.swap_rows(c, p);
            let d = m[(c, c)];
            for k in 0..n {
                m[(c, k)] /= d;
                inv[(c, k)] /= d;
            }
            for r in 0..n {
                if r != c {
                    let f = m[(r, c)];
                    for k in 0..n {
                        m[(r, k)] -= f * m[(c, k)];
                        inv[(r, k)] -= f * inv[(c, k)];
                    }
                }
            }
        }
        inv
    }

    struct Naive {
        chi: f64,
        nu2: f64,
        rinv: DMatrix<f64>,
        inputs: Vec<Vec<f64>>,
        phi: DVector<f64>,
        hyper: Hyperparameters,
    }

    fn naive(set: &TrainingSet, hyper: &Hyperparameters) -> Naive {
        let s = set.len();
        let mut r = DMatrix::from_fn(s, s, |i, j| {
            correlation(&set.normalized_inputs()[i], &set.normalized_inputs()[j], hyper)
        });
        for i in 0..s {
            r[(i, i)] += NUGGET_SCALE;
        }
        let rinv = naive_inverse(&r);
        let one = DVector::from_element(s, 1.0);
        let phi = DVector::from_column_slice(set.outputs());
        let chi = (one.transpose() * &rinv * &phi)[0] / (one.transpose() * &rinv * &one)[0];
        let res = phi.add_scalar(-chi);
        let nu2 = (res.transpose() * &rinv * &res)[0] / s as f64;
        Naive { chi, nu2, rinv, inputs: set.normalized_inputs().to_vec(), phi, hyper: hyper.clone() }
    }

    impl Naive {
        fn predict(&self, u: &[f64]) -> (f64, f64) {
            let s = self.inputs.len();
            let r = DVector::from_iterator(s, self.inputs.iter().map(|v| correlation(v, u, &self.hyper)));
            let one = DVector::from_element(s, 1.0);
            let mean = self.chi + (r.transpose() * &self.rinv * self.phi.add_scalar(-self.chi))[0];
            let oro = (one.transpose() * &self.rinv * &one)[0];
            let gap = 1.0 - (one.transpose() * &self.rinv * &r)[0];
            let var = self.nu2 * (1.0 - (r.transpose() * &self.rinv * &r)[0] + gap * gap / oro);
            (mean, var)
        }
    }

    #[test]
    fn lhs_single_sample_spans_range() {
        let b = Bounds::new(vec![0.0, 10.0], vec![1.0, 20.0]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let p = lhs_sample(&b, 1, &mut rng);
        assert_eq!(p.len(), 1);
        assert!(b.contains(&p[0]));
    }

    #[test]
    fn lhs_four_points_fill_each_stratum() {
        let b = Bounds::unit(2).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let p = lhs_sample(&b, 4, &mut rng);
        for k in 0..2 {
            let mut strata: Vec<usize> = p.iter().map(|x| (x[k] * 4.0) as usize).collect();
            strata.sort();
            assert_eq!(strata, vec![0, 1, 2, 3]);
        }
    }

    #[test]
    fn lhs_strata_occupancy_is_uniform() {
        // Frequency with which sample 0 lands in each stratum.
        let (s, reps) = (5, 10_000);
        let b = Bounds::unit(3).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut counts = vec![vec![0usize; s]; 3];
        for _ in 0..reps {
            let p = lhs_sample(&b, s, &mut rng);
            for k in 0..3 {
                counts[k][((p[0][k] * s as f64) as usize).min(s - 1)] += 1;
            }
        }
        let prob = 1.0 / s as f64;
        let sigma = (reps as f64 * prob * (1.0 - prob)).sqrt();
        for row in counts {
            for c in row {
                assert!((c as f64 - reps as f64 * prob).abs() < 3.0 * sigma, "{c}");
            }
        }
    }

    #[test]
    fn training_set_rejects_bad_samples() {
        let mut set = TrainingSet::new(Bounds::unit(2).unwrap());
        assert!(set.push(vec![0.5, 0.5], 1.0).unwrap());
        assert!(!set.push(vec![0.5, 0.5 + 1e-12], 2.0).unwrap());
        assert!(set.push(vec![1.5, 0.5], 1.0).is_err());
        assert!(set.push(vec![0.1, 0.5], -1.0).is_err());
        assert!(set.push(vec![0.1, 0.5], f64::NAN).is_err());
        assert!(set.push(vec![0.1], 1.0).is_err());
        assert_eq!(set.len(), 1);
        set.push(vec![0.2, 0.2], 0.25).unwrap();
        assert_eq!(set.best(), Some((1, 0.25)));
    }

    #[test]
    fn correlation_basics() {
        let h = Hyperparameters { gamma: vec![2.0, 0.5], beta: vec![2.0, 1.5] };
        let (a, b) = ([0.1, 0.7], [0.4, 0.2]);
        assert_eq!(correlation(&a, &a, &h), 1.0);
        assert_eq!(correlation(&a, &b, &h), correlation(&b, &a, &h));
        let c = [0.5, 0.2];
        assert!(correlation(&a, &c, &h) < correlation(&a, &b, &h));
    }

    #[test]
    fn single_sample_model_is_constant() {
        let mut set = TrainingSet::new(Bounds::unit(3).unwrap());
        set.push(vec![0.2, 0.4, 0.6], 0.7).unwrap();
        let m = GpModel::train(&set, &Hyperparameters::default_for(3)).unwrap();
        assert_eq!(m.chi(), 0.7);
        assert_eq!(m.nu2(), 0.0);
        for x in [[0.0, 0.0, 0.0], [1.0, 0.3, 0.9]] {
            let p = m.predict(&x).unwrap();
            assert!((p.mean - 0.7).abs() < 1e-15);
            assert_eq!(p.variance, 0.0);
        }
    }

    #[test]
    fn matches_dense_inverse_oracle() {
        let set = random_set(8, 25, 11);
        let h = Hyperparameters {
            gamma: (0..8).map(|k| 0.5 + 0.3 * k as f64).collect(),
            beta: vec![2.0; 8],
        };
        let m = GpModel::train(&set, &h).unwrap();
        let o = naive(&set, &h);
        assert!((m.chi() - o.chi).abs() < 1e-9 * o.chi.abs());
        assert!((m.nu2() - o.nu2).abs() < 1e-9 * o.nu2);
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        for _ in 0..20 {
            let x: Vec<f64> = (0..8).map(|_| rng.random_range(-1.0..2.0)).collect();
            let p = m.predict(&x).unwrap();
            let (mean, var) = o.predict(&set.bounds().normalize(&x));
            assert!((p.mean - mean).abs() < 1e-9 * mean.abs().max(1.0), "{} {}", p.mean, mean);
            assert!((p.variance - var).abs() < 1e-9 * var.abs().max(1e-3), "{} {}", p.variance, var);
        }
    }

    #[test]
    fn interpolates_training_points() {
        for s in [10, 40, 140] {
            let set = random_set(8, s, s as u64);
            let h = fit_hyperparameters(&set, &FitOptions::default(), None).unwrap();
            let m = GpModel::train(&set, &h).unwrap();
            for (x, phi) in set.inputs().iter().zip(set.outputs()) {
                let p = m.predict(x).unwrap();
                assert!((p.mean - phi).abs() < 1e-6 * (1.0 + phi.abs()));
                assert!(p.variance < 1e-8);
            }
        }
    }

    #[test]
    fn far_field_variance_limit() {
        let set = random_set(8, 30, 5);
        let h = Hyperparameters { gamma: vec![1000.0; 8], beta: vec![2.0; 8] };
        let m = GpModel::train(&set, &h).unwrap();
        // Cube corner opposite to all samples is uncorrelated at this gamma.
        let p = m.predict(&[2.0; 8]).unwrap();
        let limit = m.nu2() * (1.0 + 1.0 / m.one_r_one());
        assert!((p.variance - limit).abs() < 1e-9 * limit);
        assert!((p.mean - m.chi()).abs() < 1e-12);
    }

    #[test]
    fn constant_outputs_return_default() {
        let bounds = Bounds::unit(2).unwrap();
        let mut set = TrainingSet::new(bounds.clone());
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for x in lhs_sample(&bounds, 12, &mut rng) {
            set.push(x, 0.5).unwrap();
        }
        let h = fit_hyperparameters(&set, &FitOptions::default(), None).unwrap();
        assert_eq!(h, Hyperparameters::default_for(2));
        assert!(GpModel::train(&set, &h).is_ok());
    }

    #[test]
    fn recovers_known_length_scales() {
        // Draw one realization of a zero-trend GP with known gamma.
        let truth = Hyperparameters { gamma: vec![2.0, 20.0], beta: vec![2.0; 2] };
        let bounds = Bounds::unit(2).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let mut set = TrainingSet::new(bounds.clone());
        let xs = lhs_sample(&bounds, 60, &mut rng);
        let mut r = DMatrix::from_fn(60, 60, |i, j| correlation(&xs[i], &xs[j], &truth));
        for i in 0..60 {
            r[(i, i)] += 1e-10;
        }
        let l = r.cholesky().unwrap().unpack();
        let z = DVector::from_iterator(60, (0..60).map(|_| {
            rand_distr::Distribution::<f64>::sample(&rand_distr::StandardNormal, &mut rng)
        }));
        let y = l * z;
        // Shift to keep outputs nonnegative; the trend absorbs it.
        let shift = 10.0;
        for (x, v) in xs.into_iter().zip(y.iter()) {
            set.push(x, v + shift).unwrap();
        }
        let h = fit_hyperparameters(&set, &FitOptions::default(), None).unwrap();
        for k in 0..2 {
            let ratio = h.gamma[k] / truth.gamma[k];
            assert!((1.0 / 3.0..=3.0).contains(&ratio), "dim {k}: {} vs {}", h.gamma[k], truth.gamma[k]);
        }
    }

    #[test]
    fn search_beats_random_candidates() {
        let set = random_set(3, 30, 31);
        let h = fit_hyperparameters(&set, &FitOptions::default(), None).unwrap();
        let found = log_likelihood(&set, &h);
        let mut rng = ChaCha8Rng::seed_from_u64(32);
        let best_random = (0..100)
            .map(|_| {
                let g: Vec<f64> = (0..3).map(|_| 10f64.powf(rng.random_range(-3.0..3.0))).collect();
                log_likelihood(&set, &Hyperparameters { gamma: g, beta: vec![2.0; 3] })
            })
            .fold(f64::NEG_INFINITY, f64::max);
        assert!(found >= best_random - 1e-9, "{found} < {best_random}");
    }

    #[test]
    fn fit_is_deterministic_and_supports_beta() {
        let set = random_set(2, 15, 41);
        let opts = FitOptions { fit_beta: true, ..FitOptions::default() };
        let a = fit_hyperparameters(&set, &opts, None).unwrap();
        let b = fit_hyperparameters(&set, &opts, None).unwrap();
        assert_eq!(a, b);
        assert!(a.beta.iter().all(|b| (1.0..=2.0).contains(b)));
        let warm = fit_hyperparameters(&set, &FitOptions::default(), Some(&a)).unwrap();
        assert!(warm.beta.iter().all(|b| *b == 2.0));
    }

    #[test]
    fn nelder_mead_minimizes_quadratic() {
        let b = Bounds::new(vec![-5.0; 3], vec![5.0; 3]).unwrap();
        let f = |p: &[f64]| (p[0] - 1.0).powi(2) + 2.0 * (p[1] + 2.0).powi(2) + (p[2] - 0.5).powi(2);
        let (p, v) = nelder_mead(&f, &b, vec![0.0; 3], 500);
        assert!(v < 1e-8, "{v}");
        assert!((p[0] - 1.0).abs() < 1e-3 && (p[1] + 2.0).abs() < 1e-3);
        // Constrained optimum sits on the boundary.
        let g = |p: &[f64]| (p[0] - 9.0).powi(2);
        let (p, _) = nelder_mead(&g, &Bounds::new(vec![-5.0], vec![5.0]).unwrap(), vec![0.0], 200);
        assert!((p[0] - 5.0).abs() < 1e-9);
    }

    #[test]
    fn model_dump_lists_training_set() {
        let set = random_set(2, 4, 51);
        let m = GpModel::train(&set, &Hyperparameters::default_for(2)).unwrap();
        let mut buf = Vec::new();
        m.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("gamma,"));
        assert_eq!(text.lines().count(), 6 + 4);
        assert!(text.contains("x1,x2,phi"));
    }

    #[test]
    fn surrogate_refits_with_warm_start() {
        let mut set = random_set(2, 10, 61);
        let mut gp = GpSurrogate::new(FitOptions::default());
        assert!(gp.predict(&[0.0, 0.0]).is_err());
        gp.fit(&set).unwrap();
        let x = vec![0.37, -0.21];
        let before = gp.predict(&x).unwrap();
        assert!(before.variance > 0.0);
        let phi = test_fn(&x);
        set.push(x.clone(), phi).unwrap();
        gp.fit(&set).unwrap();
        let after = gp.predict(&x).unwrap();
        let model = gp.model().unwrap();
        // Smooth data push gamma down, so the floor is nu^2 times the nugget.
        assert!(after.variance <= 2.0 * model.nu2() * model.nugget());
        assert!(after.variance < before.variance);
        assert!((after.mean - phi).abs() < 1e-3 * (1.0 + phi));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn bounds_are_ordered(seed in 0u64..1000, x in proptest::collection::vec(-1.0f64..2.0, 3)) {
            let set = random_set(3, 12, seed);
            let m = GpModel::train(&set, &Hyperparameters::default_for(3)).unwrap();
            let p = m.predict(&x).unwrap();
            prop_assert!(p.lcb <= p.mean && p.mean <= p.ucb);
            prop_assert!(p.variance >= 0.0);
            prop_assert!(p.lcb_plus() >= 0.0);
        }

        #[test]
        fn permutation_invariant(seed in 0u64..1000, x in proptest::collection::vec(-1.0f64..2.0, 2)) {
            let set = random_set(2, 8, seed);
            let mut order: Vec<usize> = (0..8).collect();
            order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed + 1));
            let mut shuffled = TrainingSet::new(set.bounds().clone());
            for i in order {
                shuffled.push(set.inputs()[i].clone(), set.outputs()[i]).unwrap();
            }
            let h = Hyperparameters { gamma: vec![3.0, 0.7], beta: vec![2.0; 2] };
            let a = GpModel::train(&set, &h).unwrap().predict(&x).unwrap();
            let b = GpModel::train(&shuffled, &h).unwrap().predict(&x).unwrap();
            prop_assert!((a.mean - b.mean).abs() < 1e-9 * (1.0 + a.mean.abs()));
            prop_assert!((a.variance - b.variance).abs() < 1e-9 * (1.0 + a.variance));
        }

        #[test]
        fn lhs_is_stratified(seed in 0u64..u64::MAX, s in 1usize..40, k in 1usize..10) {
            let b = Bounds::new(vec![-2.0; k], vec![3.0; k]).unwrap();
            let p = lhs_sample(&b, s, &mut ChaCha8Rng::seed_from_u64(seed));
            prop_assert_eq!(p.len(), s);
            for d in 0..k {
                let mut seen = vec![false; s];
                for x in &p {
                    let stratum = (((x[d] + 2.0) / 5.0 * s as f64) as usize).min(s - 1);
                    prop_assert!(!seen[stratum]);
                    seen[stratum] = true;
                }
            }
        }
    }
}
