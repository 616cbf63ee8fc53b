//! `sbd`: synthesize scattering data, invert it, map the cost landscape and
//! run multi-seed batches.

mod commands;
mod config;
mod scenario;

use std::path::PathBuf;

use anyhow::{bail, Result};
use clap::{Args, Parser, Subcommand};

use crate::config::RunConfig;

#[derive(Parser)]
#[command(name = "sbd", version, about = "Surrogate-assisted swarm inversion of 2D scattering data")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Flat `key = value` configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Scene and default budgets: tc1, tc2, tc3a, tc3b, tc4 or tc5.
    #[arg(long)]
    scenario: Option<String>,
    /// Inversion mode: sbd or go.
    #[arg(long)]
    mode: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory (or file for `synth` and `landscape`).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Permit synthesizing on the inversion grid.
    #[arg(long)]
    allow_inverse_crime: bool,
    /// Extra `key=value` overrides, applied last.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic dataset CSV for the configured scene.
    Synth {
        #[command(flatten)]
        common: Common,
    },
    /// Invert a dataset and write the result bundle.
    Invert {
        #[command(flatten)]
        common: Common,
        /// Dataset CSV (overrides the `dataset` key).
        #[arg(long)]
        dataset: Option<PathBuf>,
        /// `scenario` or a contrast CSV on the inversion grid.
        #[arg(long)]
        truth: Option<String>,
    },
    /// Cost landscape on the plane through three DoF vectors.
    Landscape {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        dataset: Option<PathBuf>,
        #[arg(long)]
        xi1: PathBuf,
        #[arg(long)]
        xi2: PathBuf,
        #[arg(long)]
        xi_act: PathBuf,
    },
    /// Invert once per seed and aggregate median and IQR.
    Batch {
        #[command(flatten)]
        common: Common,
    },
}

fn load(common: &Common, extra: &[(&str, Option<String>)]) -> Result<RunConfig> {
    let mut overrides = Vec::new();
    let mut push = |k: &str, v: Option<String>| {
        if let Some(v) = v {
            overrides.push((k.to_string(), v));
        }
    };
    push("scenario", common.scenario.clone());
    push("mode", common.mode.clone());
    push("seed", common.seed.map(|s| s.to_string()));
    push("out", common.out.as_ref().map(|p| p.display().to_string()));
    for (k, v) in extra {
        push(k, v.clone());
    }
    for kv in &common.set {
        let Some((k, v)) = kv.split_once('=') else {
            bail!("--set expects KEY=VALUE, got `{kv}`");
        };
        overrides.push((k.trim().to_string(), v.trim().to_string()));
    }
    RunConfig::load(common.config.as_deref(), &overrides)
}

fn dataset_of(config: &RunConfig) -> Result<sbd_core::forward::ScatteringDataset> {
    match &config.dataset {
        Some(path) => commands::read_dataset(path),
        None => bail!("no dataset given; pass --dataset or set `dataset` in the config"),
    }
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let path = |p: &Option<PathBuf>| p.as_ref().map(|p| p.display().to_string());
    match Cli::parse().command {
        Command::Synth { common } => {
            let config = load(&common, &[])?;
            let seed = config.inversion.seed;
            let out = if common.out.is_some() { config.out.clone() } else { PathBuf::from("dataset.csv") };
            commands::synth(&config, seed, common.allow_inverse_crime, &out)?;
            println!("wrote {}", out.display());
        }
        Command::Invert { common, dataset, truth } => {
            let config = load(&common, &[("dataset", path(&dataset)), ("truth", truth)])?;
            let data = dataset_of(&config)?;
            let s = commands::invert(&config, &data, &config.out)?;
            let xi = s.xi.map_or_else(|| "unavailable".to_string(), |x| format!("{x:.4e}"));
            println!(
                "{}: phi {:.4e} -> {:.4e}, xi {xi}, {} forward solves; bundle in {}",
                s.mode.name(),
                s.phi_initial,
                s.phi_final,
                s.fw_calls,
                config.out.display()
            );
        }
        Command::Landscape { common, dataset, xi1, xi2, xi_act } => {
            let config = load(&common, &[("dataset", path(&dataset))])?;
            let data = dataset_of(&config)?;
            for p in [&xi1, &xi2, &xi_act] {
                if !p.is_file() {
                    bail!("DoF file {} does not exist", p.display());
                }
            }
            let out = if common.out.is_some() { config.out.clone() } else { PathBuf::from("landscape.csv") };
            commands::landscape_cmd(&config, &data, &xi1, &xi2, &xi_act, &out)?;
            println!("wrote {}", out.display());
        }
        Command::Batch { common } => {
            let config = load(&common, &[])?;
            let summaries = commands::batch(&config, common.allow_inverse_crime)?;
            println!("{} runs; aggregate in {}", summaries.len(), config.out.join("aggregate.csv").display());
        }
    }
    Ok(())
}
