//! The four subcommands and their file outputs.

use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Instant;

use anyhow::{anyhow, bail, Context, Result};
use sbd_core::forward::{synthesize_dataset, Grid, ScatteringDataset, Scene};
use sbd_core::geometry::{decode_to_contrast, ContrastMap};
use sbd_core::metrics::{error_index, landscape, time_saving, LandscapeRequest};
use sbd_core::optimizer::{run, write_trace, Mode};
use sbd_core::problem::{CostOracle, InversionProblem};
use sbd_core::surrogate::Bounds;

use crate::config::RunConfig;

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    Ok(BufWriter::new(File::create(path).with_context(|| format!("creating {}", path.display()))?))
}

fn write_comments(out: &mut impl Write, comments: &[String]) -> Result<()> {
    for c in comments {
        writeln!(out, "# {c}")?;
    }
    Ok(())
}

/// DoF vector file: `#` comment lines, then one comma-separated row.
pub fn write_dofs(path: &Path, values: &[f64], comments: &[String]) -> Result<()> {
    let mut out = create(path)?;
    write_comments(&mut out, comments)?;
    let row: Vec<String> = values.iter().map(f64::to_string).collect();
    writeln!(out, "{}", row.join(","))?;
    out.flush()?;
    Ok(())
}

pub fn read_dofs(path: &Path) -> Result<Vec<f64>> {
    let text = fs::read_to_string(path).with_context(|| format!("reading DoF file {}", path.display()))?;
    let row = text
        .lines()
        .map(str::trim)
        .find(|l| !l.is_empty() && !l.starts_with('#'))
        .ok_or_else(|| anyhow!("{}: no DoF row", path.display()))?;
    row.split(',')
        .map(|v| v.trim().parse::<f64>().with_context(|| format!("{}: bad value `{v}`", path.display())))
        .collect()
}

pub fn read_dataset(path: &Path) -> Result<ScatteringDataset> {
    let file = File::open(path).with_context(|| format!("opening dataset {}", path.display()))?;
    ScatteringDataset::read_csv(BufReader::new(file)).with_context(|| format!("reading dataset {}", path.display()))
}

fn write_contrast(dir: &Path, map: &ContrastMap, comments: &[String]) -> Result<()> {
    let mut csv = create(&dir.join("contrast.csv"))?;
    write_comments(&mut csv, comments)?;
    map.write_csv(&mut csv)?;
    csv.flush()?;
    // PGM allows comment lines right after the magic number.
    let mut pgm = Vec::new();
    map.write_pgm(&mut pgm)?;
    let mut out = create(&dir.join("contrast.pgm"))?;
    out.write_all(&pgm[..3])?;
    write_comments(&mut out, comments)?;
    out.write_all(&pgm[3..])?;
    out.flush()?;
    Ok(())
}

/// Synthesizes the configured scene into `path`.
pub fn synth(config: &RunConfig, seed: u64, allow_inverse_crime: bool, path: &Path) -> Result<ScatteringDataset> {
    let truth = config
        .scenario
        .truth()?
        .ok_or_else(|| anyhow!("scenario {} is measured data; supply its dataset CSV instead", config.scenario.name()))?;
    let dataset = synthesize_dataset(
        &Scene::Dofs(truth),
        &config.fine_grid()?,
        &config.inversion_grid(config.domain_side)?,
        &config.setup,
        config.snr_db,
        seed,
        allow_inverse_crime,
    )?;
    let mut out = create(path)?;
    dataset.write_csv(&mut out, &config.header(seed))?;
    out.flush()?;
    Ok(dataset)
}

/// Headline numbers of one inversion.
#[derive(Clone, Debug, PartialEq)]
pub struct Summary {
    pub seed: u64,
    pub mode: Mode,
    pub phi_initial: f64,
    pub phi_final: f64,
    pub xi: Option<f64>,
    pub fw_calls: usize,
    pub trace_fw_calls: usize,
    pub elapsed_s: f64,
    pub time_saving: f64,
}

impl Summary {
    fn write(&self, path: &Path, config: &RunConfig) -> Result<()> {
        let mut out = create(path)?;
        write_comments(&mut out, &config.header(self.seed))?;
        let xi = self.xi.map_or_else(|| "unavailable".to_string(), |x| x.to_string());
        writeln!(out, "scenario={}", config.scenario.name())?;
        writeln!(out, "mode={}", self.mode.name())?;
        writeln!(out, "phi_initial={}", self.phi_initial)?;
        writeln!(out, "phi_final={}", self.phi_final)?;
        writeln!(out, "xi={xi}")?;
        writeln!(out, "fw_calls={}", self.fw_calls)?;
        writeln!(out, "trace_fw_calls={}", self.trace_fw_calls)?;
        writeln!(out, "go_budget={}", config.inversion.particles * config.inversion.iterations)?;
        writeln!(out, "time_saving={}", self.time_saving)?;
        writeln!(out, "elapsed_s={}", self.elapsed_s)?;
        out.flush()?;
        Ok(())
    }
}

/// Resolves the reference profile on `grid`: `scenario` uses the built-in
/// scene, anything else is a contrast CSV path.
fn load_truth(config: &RunConfig, grid: &Grid) -> Result<Option<ContrastMap>> {
    match config.truth.as_deref() {
        None => Ok(None),
        Some("scenario") => match config.scenario.truth()? {
            Some(t) => Ok(Some(decode_to_contrast(&t, grid)?)),
            None => bail!("scenario {} has no built-in truth", config.scenario.name()),
        },
        Some(path) => {
            let file = File::open(path).with_context(|| format!("opening truth {path}"))?;
            Ok(Some(ContrastMap::read_csv(*grid, BufReader::new(file))?))
        }
    }
}

/// Inverts `dataset` and writes the result bundle into `dir`.
pub fn invert(config: &RunConfig, dataset: &ScatteringDataset, dir: &Path) -> Result<Summary> {
    let seed = config.inversion.seed;
    let header = config.header(seed);
    let grid = config.inversion_grid(dataset.side)?;
    let space = config.scenario.space(dataset.side)?;
    let problem = InversionProblem::new(space, grid, dataset)?;
    let bounds = Bounds::from(problem.space());
    let truth = load_truth(config, &grid)?;

    let started = Instant::now();
    let (result, model) = run(&config.inversion, &bounds, &problem)?;
    let elapsed_s = if config.timing { started.elapsed().as_secs_f64() } else { 0.0 };

    let retrieved = problem.decode(&result.best)?;
    let mut resolved = create(&dir.join("config.txt"))?;
    write_comments(&mut resolved, &header)?;
    resolved.write_all(config.canonical().as_bytes())?;
    resolved.flush()?;
    write_contrast(dir, &retrieved, &header)?;
    write_dofs(&dir.join("best_dofs.csv"), &result.best, &header)?;
    let mut trace = create(&dir.join("trace.csv"))?;
    write_trace(&mut trace, &result.trace, &header, config.timing)?;
    trace.flush()?;
    if let Some(model) = model.as_ref().and_then(|m| m.model()) {
        let mut out = create(&dir.join("model.csv"))?;
        write_comments(&mut out, &header)?;
        model.write_csv(&mut out)?;
        out.flush()?;
    }

    let inv = &config.inversion;
    let summary = Summary {
        seed,
        mode: inv.mode,
        phi_initial: result.trace[0].best_true_phi,
        phi_final: result.best_phi,
        xi: truth.map(|t| error_index(&t, &retrieved)).transpose()?,
        fw_calls: result.fw_calls,
        trace_fw_calls: result.trace.last().map_or(0, |t| t.fw_calls),
        elapsed_s,
        time_saving: match inv.mode {
            Mode::Sbd => time_saving(inv.particles, inv.iterations, inv.initial_samples, inv.iterations)?,
            Mode::Go => 0.0,
        },
    };
    summary.write(&dir.join("summary.txt"), config)?;
    Ok(summary)
}

/// Evaluates the cost over the `(a, b)` lattice spanned by three DoF files.
pub fn landscape_cmd(
    config: &RunConfig,
    dataset: &ScatteringDataset,
    xi1: &Path,
    xi2: &Path,
    xi_act: &Path,
    path: &Path,
) -> Result<()> {
    let grid = config.inversion_grid(dataset.side)?;
    let problem = InversionProblem::new(config.scenario.space(dataset.side)?, grid, dataset)?;
    let mut request = LandscapeRequest::new(read_dofs(xi1)?, read_dofs(xi2)?, read_dofs(xi_act)?);
    request.a_points = config.landscape_points;
    request.b_points = config.landscape_points;
    let k = problem.space().dim();
    for (name, v) in [("xi1", &request.xi1), ("xi2", &request.xi2), ("xi_act", &request.xi_act)] {
        if v.len() != k {
            bail!("{name} has {} values, the {} layout needs {k}", v.len(), config.scenario.name());
        }
    }
    let oracle: &dyn CostOracle = &problem;
    let map = landscape(&request, &Bounds::from(problem.space()), oracle)?;
    let mut out = create(path)?;
    map.write_csv(&mut out, &config.header(config.inversion.seed))?;
    out.flush()?;
    Ok(())
}

/// Median and interquartile range (linear interpolation between order
/// statistics).
pub fn quartiles(values: &[f64]) -> (f64, f64, f64) {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let q = |p: f64| {
        let h = p * (v.len() - 1) as f64;
        let (lo, hi) = (h.floor() as usize, h.ceil() as usize);
        v[lo] + (h - lo as f64) * (v[hi] - v[lo])
    };
    (q(0.5), q(0.25), q(0.75))
}

/// One bundle per seed under `out/seed_<s>` plus `runs.csv` and
/// `aggregate.csv`.
pub fn batch(config: &RunConfig, allow_inverse_crime: bool) -> Result<Vec<Summary>> {
    let next = AtomicUsize::new(0);
    let results: Mutex<Vec<Option<Result<Summary>>>> = Mutex::new((0..config.seeds.len()).map(|_| None).collect());
    let one = |seed: u64| -> Result<Summary> {
        let dir = config.out.join(format!("seed_{seed}"));
        let run_config = config.with("seed", &seed.to_string())?;
        let dataset = match &config.dataset {
            Some(path) => read_dataset(path)?,
            None => synth(&run_config, seed, allow_inverse_crime, &dir.join("dataset.csv"))?,
        };
        invert(&run_config, &dataset, &dir).with_context(|| format!("seed {seed}"))
    };
    std::thread::scope(|scope| {
        for _ in 0..config.workers.min(config.seeds.len()) {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                let Some(&seed) = config.seeds.get(i) else { break };
                let r = one(seed);
                results.lock().expect("result slot poisoned")[i] = Some(r);
            });
        }
    });
    let summaries = results
        .into_inner()
        .expect("result slots poisoned")
        .into_iter()
        .map(|r| r.expect("every seed ran"))
        .collect::<Result<Vec<_>>>()?;

    let header = config.header(config.inversion.seed);
    let mut runs = create(&config.out.join("runs.csv"))?;
    write_comments(&mut runs, &header)?;
    writeln!(runs, "seed,phi_final,xi,fw_calls,elapsed_s")?;
    for s in &summaries {
        let xi = s.xi.map_or_else(String::new, |x| x.to_string());
        writeln!(runs, "{},{},{xi},{},{}", s.seed, s.phi_final, s.fw_calls, s.elapsed_s)?;
    }
    runs.flush()?;

    let mut agg = create(&config.out.join("aggregate.csv"))?;
    write_comments(&mut agg, &header)?;
    writeln!(agg, "metric,median,q1,q3,count")?;
    let column = |f: &dyn Fn(&Summary) -> Option<f64>| summaries.iter().filter_map(f).collect::<Vec<f64>>();
    let metrics: [(&str, Vec<f64>); 4] = [
        ("phi_final", column(&|s| Some(s.phi_final))),
        ("xi", column(&|s| s.xi)),
        ("fw_calls", column(&|s| Some(s.fw_calls as f64))),
        ("elapsed_s", column(&|s| Some(s.elapsed_s))),
    ];
    for (name, values) in metrics {
        if values.is_empty() {
            writeln!(agg, "{name},,,,0")?;
        } else {
            let (m, q1, q3) = quartiles(&values);
            writeln!(agg, "{name},{m},{q1},{q3},{}", values.len())?;
        }
    }
    agg.flush()?;
    Ok(summaries)
}
