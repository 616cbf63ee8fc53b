//! Flat `key = value` run configuration.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use sbd_core::forward::{Grid, MeasurementSetup};
use sbd_core::optimizer::{InversionConfig, Mode};
use sbd_core::surrogate::FitOptions;
use sha2::{Digest, Sha256};

use crate::scenario::Scenario;

/// Every accepted key with its built-in default. Scenario defaults replace
/// the entries marked `None` here.
const KEYS: &[(&str, Option<&str>)] = &[
    ("scenario", Some("tc1")),
    ("domain_side", Some("2")),
    ("fine_n", Some("40")),
    ("inversion_n", Some("20")),
    ("views", Some("18")),
    ("probes", Some("18")),
    ("probe_radius", Some("3")),
    ("snr_db", None),
    ("mode", Some("sbd")),
    ("particles", Some("10")),
    ("iterations", None),
    ("initial_samples", None),
    ("inertia", Some("0.4")),
    ("cognitive", Some("2")),
    ("social", Some("2")),
    ("velocity_clamp", Some("0.5")),
    ("fit_beta", Some("false")),
    ("seed", Some("0")),
    ("seeds", Some("0-4")),
    ("workers", Some("1")),
    ("timing", Some("false")),
    ("out", Some("out")),
    ("dataset", Some("")),
    ("truth", Some("")),
    ("landscape_points", Some("41")),
];

const HASH_EXEMPT: &[&str] = &["seed", "seeds", "workers", "out", "dataset"];

/// Resolved, validated configuration.
#[derive(Clone, Debug)]
pub struct RunConfig {
    values: BTreeMap<String, String>,
    pub scenario: Scenario,
    pub domain_side: f64,
    pub fine_n: usize,
    pub inversion_n: usize,
    pub setup: MeasurementSetup,
    pub snr_db: Option<f64>,
    pub inversion: InversionConfig,
    pub seeds: Vec<u64>,
    pub workers: usize,
    pub timing: bool,
    pub out: PathBuf,
    pub dataset: Option<PathBuf>,
    pub truth: Option<String>,
    pub landscape_points: usize,
}

/// Parses `key = value` lines. Blank lines and `#` comments are skipped.
pub fn parse_pairs(text: &str) -> Result<Vec<(String, String)>> {
    let mut pairs = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| anyhow!("line {}: expected `key = value`, got `{raw}`", i + 1))?;
        pairs.push((k.trim().to_string(), v.trim().to_string()));
    }
    Ok(pairs)
}

fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    value.parse().map_err(|e| anyhow!("`{key}`: cannot parse `{value}`: {e}"))
}

/// Accepts `a-b` ranges and comma lists, e.g. `0-4` or `1,3,7`.
pub fn parse_seeds(value: &str) -> Result<Vec<u64>> {
    let mut seeds = Vec::new();
    for part in value.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        match part.split_once('-') {
            Some((a, b)) => {
                let (a, b): (u64, u64) = (parse("seeds", a.trim())?, parse("seeds", b.trim())?);
                if b < a {
                    bail!("`seeds`: empty range {part}");
                }
                seeds.extend(a..=b);
            }
            None => seeds.push(parse("seeds", part)?),
        }
    }
    if seeds.is_empty() {
        bail!("`seeds` is empty");
    }
    let mut sorted = seeds.clone();
    sorted.sort_unstable();
    sorted.dedup();
    if sorted.len() != seeds.len() {
        bail!("`seeds` lists a seed twice");
    }
    Ok(seeds)
}

impl RunConfig {
    /// Layers: built-in defaults, scenario defaults, then `pairs` in order.
    pub fn from_pairs(pairs: &[(String, String)]) -> Result<Self> {
        let mut explicit = BTreeMap::new();
        for (k, v) in pairs {
            if !KEYS.iter().any(|(name, _)| name == k) {
                bail!("unknown configuration key `{k}`");
            }
            explicit.insert(k.clone(), v.clone());
        }
        let scenario = Scenario::parse(explicit.get("scenario").map_or("tc1", String::as_str))?;
        let mut values = BTreeMap::new();
        for (k, default) in KEYS {
            let v = match (explicit.get(*k), default) {
                (Some(v), _) => v.clone(),
                (None, Some(d)) => d.to_string(),
                (None, None) => scenario.default_for(k).to_string(),
            };
            values.insert(k.to_string(), v);
        }
        Self::resolve(values, scenario)
    }

    /// Reads the optional config file and applies `overrides` on top.
    pub fn load(file: Option<&Path>, overrides: &[(String, String)]) -> Result<Self> {
        let mut pairs = match file {
            Some(path) => {
                let text = std::fs::read_to_string(path)
                    .with_context(|| format!("reading config {}", path.display()))?;
                parse_pairs(&text).with_context(|| format!("in {}", path.display()))?
            }
            None => Vec::new(),
        };
        pairs.extend(overrides.iter().cloned());
        Self::from_pairs(&pairs)
    }

    fn resolve(values: BTreeMap<String, String>, scenario: Scenario) -> Result<Self> {
        let get = |k: &str| values[k].as_str();
        let snr_db = match get("snr_db") {
            "none" => None,
            v => Some(parse::<f64>("snr_db", v)?),
        };
        let path = |k: &str| (!get(k).is_empty()).then(|| PathBuf::from(get(k)));
        let inversion = InversionConfig {
            particles: parse("particles", get("particles"))?,
            iterations: parse("iterations", get("iterations"))?,
            initial_samples: parse("initial_samples", get("initial_samples"))?,
            inertia: parse("inertia", get("inertia"))?,
            cognitive: parse("cognitive", get("cognitive"))?,
            social: parse("social", get("social"))?,
            velocity_clamp: parse("velocity_clamp", get("velocity_clamp"))?,
            mode: Mode::parse(get("mode"))?,
            seed: parse("seed", get("seed"))?,
            fit: FitOptions { fit_beta: parse("fit_beta", get("fit_beta"))?, ..FitOptions::default() },
        };
        inversion.validate()?;
        let config = Self {
            scenario,
            domain_side: parse("domain_side", get("domain_side"))?,
            fine_n: parse("fine_n", get("fine_n"))?,
            inversion_n: parse("inversion_n", get("inversion_n"))?,
            setup: MeasurementSetup::new(
                parse("views", get("views"))?,
                parse("probes", get("probes"))?,
                parse("probe_radius", get("probe_radius"))?,
            )?,
            snr_db,
            inversion,
            seeds: parse_seeds(get("seeds"))?,
            workers: parse("workers", get("workers"))?,
            timing: parse("timing", get("timing"))?,
            out: PathBuf::from(get("out")),
            dataset: path("dataset"),
            truth: (!get("truth").is_empty()).then(|| get("truth").to_string()),
            landscape_points: parse("landscape_points", get("landscape_points"))?,
            values,
        };
        config.fine_grid()?;
        config.inversion_grid(config.domain_side)?;
        config.setup.check_outside(&config.fine_grid()?)?;
        if config.workers == 0 {
            bail!("`workers` must be at least 1");
        }
        if config.landscape_points < 2 {
            bail!("`landscape_points` must be at least 2");
        }
        if let Some(snr) = config.snr_db {
            if !snr.is_finite() {
                bail!("`snr_db` must be finite or `none`");
            }
        }
        Ok(config)
    }

    pub fn fine_grid(&self) -> Result<Grid> {
        Ok(Grid::new(self.domain_side, self.fine_n)?)
    }

    /// Inversion grid over a domain of `side` (taken from the dataset).
    pub fn inversion_grid(&self, side: f64) -> Result<Grid> {
        Ok(Grid::new(side, self.inversion_n)?)
    }

    /// Same configuration with one key replaced.
    pub fn with(&self, key: &str, value: &str) -> Result<Self> {
        let mut pairs: Vec<(String, String)> = self.values.clone().into_iter().collect();
        pairs.push((key.to_string(), value.to_string()));
        Self::from_pairs(&pairs)
    }

    /// Canonical `key = value` text of every resolved setting.
    pub fn canonical(&self) -> String {
        self.values.iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
    }

    /// SHA-256 of the canonical text without the keys that cannot change
    /// a single run's numbers: the seed (written into every header
    /// separately), file locations and batch scheduling.
    pub fn hash(&self) -> String {
        let mut hasher = Sha256::new();
        for (k, v) in &self.values {
            if !HASH_EXEMPT.contains(&k.as_str()) {
                hasher.update(format!("{k} = {v}\n"));
            }
        }
        hex::encode(&hasher.finalize()[..8])
    }

    /// Header comments written at the top of every output file.
    pub fn header(&self, seed: u64) -> Vec<String> {
        vec![format!("config_hash={} seed={seed}", self.hash())]
    }
}
