//! Particle swarm search guided by the surrogate.
//!
//! In `Sbd` mode the swarm moves on the surrogate. Each iteration the
//! particle with the lowest lower confidence bound is the best-promising
//! candidate; when that bound beats the best verified cost it is
//! forward-evaluated and added to the training set, and the surrogate is
//! refitted. The global best is always the best verified sample, so the
//! reported cost is a true one. `Go` mode runs the same swarm but evaluates
//! every particle with the forward solver.

use std::io::Write;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::geometry::fmt17;
use crate::problem::CostOracle;
use crate::surrogate::{lhs_sample, Bounds, FitOptions, GpSurrogate, Prediction, Surrogate, TrainingSet};

/// Oracle failures tolerated per initial sample before giving up.
const INIT_RETRIES: usize = 10;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Sbd,
    Go,
}

impl Mode {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "sbd" => Ok(Self::Sbd),
            "go" => Ok(Self::Go),
            _ => Err(Error::Config(format!("unknown mode `{s}` (expected sbd or go)"))),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::Sbd => "sbd",
            Self::Go => "go",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct InversionConfig {
    pub particles: usize,
    pub iterations: usize,
    /// Initial training-set size (`Sbd` only).
    pub initial_samples: usize,
    pub inertia: f64,
    pub cognitive: f64,
    pub social: f64,
    /// Velocity limit as a fraction of each DoF range.
    pub velocity_clamp: f64,
    pub mode: Mode,
    pub seed: u64,
    pub fit: FitOptions,
}

impl Default for InversionConfig {
    fn default() -> Self {
        Self {
            particles: 10,
            iterations: 100,
            initial_samples: 40,
            inertia: 0.4,
            cognitive: 2.0,
            social: 2.0,
            velocity_clamp: 0.5,
            mode: Mode::Sbd,
            seed: 0,
            fit: FitOptions::default(),
        }
    }
}

impl InversionConfig {
    pub fn validate(&self) -> Result<()> {
        if self.particles < 2 {
            return Err(Error::Config("need at least 2 particles".into()));
        }
        if self.mode == Mode::Sbd && self.initial_samples < 1 {
            return Err(Error::Config("need at least one initial sample".into()));
        }
        for (name, v) in [
            ("inertia", self.inertia),
            ("cognitive", self.cognitive),
            ("social", self.social),
            ("velocity_clamp", self.velocity_clamp),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::Config(format!("{name} must be positive, got {v}")));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TraceEntry {
    pub iteration: usize,
    pub best_true_phi: f64,
    pub training_size: usize,
    pub fw_calls: usize,
    pub elapsed_s: f64,
}

pub const TRACE_COLUMNS: &str = "i,best_true_phi,S_i,fw_calls,elapsed_s";

/// Writes the convergence trace. With `timing` off every `elapsed_s` is 0,
/// which makes reruns byte-identical.
pub fn write_trace<W: Write>(mut out: W, trace: &[TraceEntry], comments: &[String], timing: bool) -> Result<()> {
    for c in comments {
        writeln!(out, "# {c}")?;
    }
    writeln!(out, "{TRACE_COLUMNS}")?;
    for t in trace {
        writeln!(
            out,
            "{},{},{},{},{}",
            t.iteration,
            fmt17(t.best_true_phi),
            t.training_size,
            t.fw_calls,
            if timing { format!("{:.6}", t.elapsed_s) } else { "0".into() }
        )?;
    }
    Ok(())
}

/// Index of the smallest value, lowest index on ties.
pub fn rank_best_promising(lower_bounds: &[f64]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, v) in lower_bounds.iter().enumerate() {
        if best.is_none_or(|b| *v < lower_bounds[b]) {
            best = Some(i);
        }
    }
    best
}

/// Swarm coefficients used by [`pso_step`].
#[derive(Clone, Copy, Debug)]
pub struct PsoCoefficients {
    pub inertia: f64,
    pub cognitive: f64,
    pub social: f64,
    pub velocity_clamp: f64,
}

impl From<&InversionConfig> for PsoCoefficients {
    fn from(c: &InversionConfig) -> Self {
        Self {
            inertia: c.inertia,
            cognitive: c.cognitive,
            social: c.social,
            velocity_clamp: c.velocity_clamp,
        }
    }
}

/// One velocity and position update for a single particle given the
/// uniform draws `(s1, s2)` per dimension.
pub fn move_particle(
    position: &mut [f64],
    velocity: &mut [f64],
    personal_best: &[f64],
    global_best: &[f64],
    draws: &[(f64, f64)],
    coeffs: &PsoCoefficients,
    bounds: &Bounds,
) {
    for k in 0..position.len() {
        let (lo, hi) = (bounds.lower()[k], bounds.upper()[k]);
        let vmax = coeffs.velocity_clamp * (hi - lo);
        let (s1, s2) = draws[k];
        let v = coeffs.inertia * velocity[k]
            + coeffs.cognitive * s1 * (personal_best[k] - position[k])
            + coeffs.social * s2 * (global_best[k] - position[k]);
        let v = v.clamp(-vmax, vmax);
        let x = position[k] + v;
        if x < lo || x > hi {
            position[k] = x.clamp(lo, hi);
            velocity[k] = 0.0;
        } else {
            position[k] = x;
            velocity[k] = v;
        }
    }
}

/// Moves every particle; draws are taken particle-major, then dimension,
/// `s1` before `s2`.
pub fn pso_step(
    positions: &mut [Vec<f64>],
    velocities: &mut [Vec<f64>],
    personal_bests: &[Vec<f64>],
    global_best: &[f64],
    coeffs: &PsoCoefficients,
    bounds: &Bounds,
    rng: &mut ChaCha8Rng,
) {
    for p in 0..positions.len() {
        let draws: Vec<(f64, f64)> = (0..bounds.dim()).map(|_| (rng.random(), rng.random())).collect();
        move_particle(&mut positions[p], &mut velocities[p], &personal_bests[p], global_best, &draws, coeffs, bounds);
    }
}

fn random_swarm(bounds: &Bounds, particles: usize, clamp: f64, rng: &mut ChaCha8Rng) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
    let positions = (0..particles)
        .map(|_| {
            (0..bounds.dim())
                .map(|k| rng.random_range(bounds.lower()[k]..=bounds.upper()[k]))
                .collect()
        })
        .collect();
    let velocities = (0..particles)
        .map(|_| {
            (0..bounds.dim())
                .map(|k| {
                    let vmax = clamp * (bounds.upper()[k] - bounds.lower()[k]);
                    rng.random_range(-vmax..=vmax)
                })
                .collect()
        })
        .collect();
    (positions, velocities)
}

/// Outcome of a run.
#[derive(Clone, Debug)]
pub struct InversionResult {
    pub mode: Mode,
    pub best: Vec<f64>,
    pub best_phi: f64,
    /// Every forward-evaluated sample (`Sbd`: the training set).
    pub training: TrainingSet,
    pub trace: Vec<TraceEntry>,
    pub fw_calls: usize,
    pub elapsed_s: f64,
    pub final_positions: Vec<Vec<f64>>,
}

/// State of the surrogate-guided swarm.
pub struct SbdSwarm<'a, S: Surrogate> {
    config: InversionConfig,
    bounds: Bounds,
    oracle: &'a dyn CostOracle,
    surrogate: S,
    rng: ChaCha8Rng,
    positions: Vec<Vec<f64>>,
    velocities: Vec<Vec<f64>>,
    personal_bests: Vec<Vec<f64>>,
    global_best: Vec<f64>,
    global_phi: f64,
    training: TrainingSet,
    trace: Vec<TraceEntry>,
    iteration: usize,
    fw_calls: usize,
    started: Instant,
}

impl<'a, S: Surrogate> SbdSwarm<'a, S> {
    /// Builds the initial training set from a Latin hypercube, fits the
    /// surrogate and scatters the swarm.
    pub fn init(config: InversionConfig, bounds: Bounds, oracle: &'a dyn CostOracle, mut surrogate: S) -> Result<Self> {
        config.validate()?;
        let started = Instant::now();
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let mut training = TrainingSet::new(bounds.clone());
        let mut fw_calls = 0;
        for mut x in lhs_sample(&bounds, config.initial_samples, &mut rng) {
            let mut attempts = 0;
            loop {
                fw_calls += 1;
                match oracle.cost(&x) {
                    Ok(phi) => {
                        if !training.push(x.clone(), phi)? {
                            log::warn!("duplicate initial sample dropped");
                        }
                        break;
                    }
                    Err(e) if attempts < INIT_RETRIES => {
                        attempts += 1;
                        log::warn!("initial sample failed ({e}); resampling");
                        x = (0..bounds.dim())
                            .map(|k| rng.random_range(bounds.lower()[k]..=bounds.upper()[k]))
                            .collect();
                    }
                    Err(e) => return Err(e),
                }
            }
        }
        surrogate.fit(&training)?;
        let (positions, velocities) = random_swarm(&bounds, config.particles, config.velocity_clamp, &mut rng);
        let (i_best, global_phi) = training.best().ok_or(Error::Training("empty training set".into()))?;
        let global_best = training.inputs()[i_best].clone();
        let mut swarm = Self {
            personal_bests: positions.clone(),
            config,
            bounds,
            oracle,
            surrogate,
            rng,
            positions,
            velocities,
            global_best,
            global_phi,
            training,
            trace: Vec::new(),
            iteration: 0,
            fw_calls,
            started,
        };
        swarm.push_trace();
        Ok(swarm)
    }

    fn push_trace(&mut self) {
        self.trace.push(TraceEntry {
            iteration: self.iteration,
            best_true_phi: self.global_phi,
            training_size: self.training.len(),
            fw_calls: self.fw_calls,
            elapsed_s: self.started.elapsed().as_secs_f64(),
        });
    }

    pub fn positions(&self) -> &[Vec<f64>] {
        &self.positions
    }

    pub fn personal_bests(&self) -> &[Vec<f64>] {
        &self.personal_bests
    }

    pub fn global_best(&self) -> (&[f64], f64) {
        (&self.global_best, self.global_phi)
    }

    pub fn training(&self) -> &TrainingSet {
        &self.training
    }

    pub fn surrogate(&self) -> &S {
        &self.surrogate
    }

    pub fn trace(&self) -> &[TraceEntry] {
        &self.trace
    }

    pub fn fw_calls(&self) -> usize {
        self.fw_calls
    }

    pub fn iteration(&self) -> usize {
        self.iteration
    }

    fn predictions(&self) -> Result<Vec<Prediction>> {
        self.positions.iter().map(|x| self.surrogate.predict(x)).collect()
    }

    /// Particle with the lowest clipped lower bound.
    pub fn best_promising(&self) -> Result<usize> {
        let bounds: Vec<f64> = self.predictions()?.iter().map(Prediction::lcb_plus).collect();
        rank_best_promising(&bounds).ok_or(Error::Config("empty swarm".into()))
    }

    /// Forward-evaluates particle `bp` when its lower bound beats the best
    /// verified cost. Returns whether the training set grew.
    pub fn reinforce_if_promising(&mut self, bp: usize) -> Result<bool> {
        let x = self.positions[bp].clone();
        let lcb = self.surrogate.predict(&x)?.lcb;
        if lcb >= self.global_phi {
            return Ok(false);
        }
        if self.training.is_duplicate(&x) {
            log::debug!("best-promising particle duplicates a training sample");
            return Ok(false);
        }
        self.fw_calls += 1;
        let phi = match self.oracle.cost(&x) {
            Ok(phi) => phi,
            Err(e) => {
                log::warn!("reinforcement skipped at iteration {}: {e}", self.iteration);
                return Ok(false);
            }
        };
        self.training.push(x, phi)?;
        self.surrogate.fit(&self.training)?;
        Ok(true)
    }

    /// Replaces a personal best when the particle's lower bound under the
    /// current model is strictly lower than that of the stored best.
    pub fn update_personal_bests(&mut self) -> Result<()> {
        for p in 0..self.positions.len() {
            let here = self.surrogate.predict(&self.positions[p])?.lcb;
            let stored = self.surrogate.predict(&self.personal_bests[p])?.lcb;
            if here < stored {
                self.personal_bests[p] = self.positions[p].clone();
            }
        }
        Ok(())
    }

    /// Global best is the verified sample with the lowest cost.
    pub fn update_global_best(&mut self) {
        if let Some((i, phi)) = self.training.best() {
            if phi < self.global_phi {
                self.global_phi = phi;
                self.global_best = self.training.inputs()[i].clone();
            }
        }
    }

    pub fn update_velocities_positions(&mut self) {
        let coeffs = PsoCoefficients::from(&self.config);
        pso_step(
            &mut self.positions,
            &mut self.velocities,
            &self.personal_bests,
            &self.global_best,
            &coeffs,
            &self.bounds,
            &mut self.rng,
        );
    }

    /// One full iteration.
    pub fn step(&mut self) -> Result<()> {
        self.iteration += 1;
        let bp = self.best_promising()?;
        self.reinforce_if_promising(bp)?;
        self.update_personal_bests()?;
        self.update_global_best();
        self.push_trace();
        self.update_velocities_positions();
        Ok(())
    }

    pub fn run_to_end(&mut self) -> Result<()> {
        while self.iteration < self.config.iterations {
            self.step()?;
        }
        Ok(())
    }

    pub fn result(&self) -> InversionResult {
        InversionResult {
            mode: Mode::Sbd,
            best: self.global_best.clone(),
            best_phi: self.global_phi,
            training: self.training.clone(),
            trace: self.trace.clone(),
            fw_calls: self.fw_calls,
            elapsed_s: self.started.elapsed().as_secs_f64(),
            final_positions: self.positions.clone(),
        }
    }
}

/// Plain swarm: every particle is forward-evaluated every iteration.
pub fn run_go(config: &InversionConfig, bounds: &Bounds, oracle: &dyn CostOracle) -> Result<InversionResult> {
    config.validate()?;
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let (mut positions, mut velocities) = random_swarm(bounds, config.particles, config.velocity_clamp, &mut rng);
    let mut personal_bests = positions.clone();
    let mut personal_phi = vec![f64::INFINITY; config.particles];
    let mut global_best = positions[0].clone();
    let mut global_phi = f64::INFINITY;
    let mut evaluated = TrainingSet::new(bounds.clone());
    let mut trace = Vec::with_capacity(config.iterations);
    let mut fw_calls = 0;
    let coeffs = PsoCoefficients::from(config);
    for iteration in 1..=config.iterations {
        for p in 0..config.particles {
            fw_calls += 1;
            let phi = match oracle.cost(&positions[p]) {
                Ok(phi) => phi,
                Err(e) => {
                    log::warn!("particle {p} failed at iteration {iteration}: {e}");
                    continue;
                }
            };
            evaluated.push(positions[p].clone(), phi)?;
            if phi < personal_phi[p] {
                personal_phi[p] = phi;
                personal_bests[p] = positions[p].clone();
            }
            if phi < global_phi {
                global_phi = phi;
                global_best = positions[p].clone();
            }
        }
        trace.push(TraceEntry {
            iteration,
            best_true_phi: global_phi,
            training_size: evaluated.len(),
            fw_calls,
            elapsed_s: started.elapsed().as_secs_f64(),
        });
        pso_step(&mut positions, &mut velocities, &personal_bests, &global_best, &coeffs, bounds, &mut rng);
    }
    if !global_phi.is_finite() {
        return Err(Error::Oracle("no particle could be evaluated".into()));
    }
    Ok(InversionResult {
        mode: Mode::Go,
        best: global_best,
        best_phi: global_phi,
        training: evaluated,
        trace,
        fw_calls,
        elapsed_s: started.elapsed().as_secs_f64(),
        final_positions: positions,
    })
}

/// Runs either mode. In `Sbd` mode the fitted surrogate is returned too.
pub fn run(config: &InversionConfig, bounds: &Bounds, oracle: &dyn CostOracle) -> Result<(InversionResult, Option<GpSurrogate>)> {
    match config.mode {
        Mode::Go => Ok((run_go(config, bounds, oracle)?, None)),
        Mode::Sbd => {
            let fit = FitOptions { seed: config.seed ^ 0x5eed_f17, ..config.fit.clone() };
            let mut swarm = SbdSwarm::init(config.clone(), bounds.clone(), oracle, GpSurrogate::new(fit))?;
            swarm.run_to_end()?;
            let result = swarm.result();
            Ok((result, Some(swarm.surrogate)))
        }
    }
}

/// Surrogate that returns the true cost with zero variance. Lets the
/// swarm logic be tested against exact costs.
pub struct ExactSurrogate<'a> {
    oracle: &'a dyn CostOracle,
}

impl<'a> ExactSurrogate<'a> {
    pub fn new(oracle: &'a dyn CostOracle) -> Self {
        Self { oracle }
    }
}

impl Surrogate for ExactSurrogate<'_> {
    fn fit(&mut self, _: &TrainingSet) -> Result<()> {
        Ok(())
    }

    fn predict(&self, x: &[f64]) -> Result<Prediction> {
        let phi = self.oracle.cost(x)?;
        Ok(Prediction { mean: phi, variance: 0.0, lcb: phi, ucb: phi })
    }
}
