//! `sldp` — experiment runner for quasiclassical path dynamics.
//!
//! Exit codes: 0 success, 1 fatal error, 2 completed with uncertified
//! solve nodes (data emitted, flagged in the CSV).

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Result};
use clap::{Args, Parser, Subcommand};

use sldp_cli::config::ExperimentConfig;
use sldp_cli::presets;
use sldp_cli::runner::{self, RunOutcome};

#[derive(Parser)]
#[command(
    name = "sldp",
    version,
    about = "Classical vs quasiclassical dynamics: comparisons, noise sweeps, transition costs"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Classical trajectory vs quasiclassical path (deterministic drive)
    Compare(RunArgs),
    /// Recorded-noise trajectory vs noise-carrying quasiclassical path
    CompareStochastic(RunArgs),
    /// Expected-deviation ladder vs the companion-residual bound
    Sweep(RunArgs),
    /// Transition-cost minimization over candidate transition times
    Action(RunArgs),
    /// Generate and persist a noise path
    WienerGen(RunArgs),
    /// List the built-in parameter catalog
    Presets,
}

#[derive(Args)]
struct RunArgs {
    /// Experiment config file ([section] / key = value text)
    #[arg(long, value_name = "FILE", conflicts_with = "preset")]
    config: Option<PathBuf>,
    /// Built-in preset tag (see `sldp presets`)
    #[arg(long, value_name = "TAG")]
    preset: Option<String>,
    /// Output directory (defaults to the config's `[output] dir`)
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Override the run's seeds (noise path and ensemble master seed)
    #[arg(long, value_name = "U64")]
    seed: Option<u64>,
}

impl RunArgs {
    fn resolve(&self) -> Result<(ExperimentConfig, PathBuf)> {
        let mut cfg = match (&self.config, &self.preset) {
            (Some(path), None) => ExperimentConfig::load(path)?,
            (None, Some(tag)) => match presets::by_tag(tag) {
                Some(cfg) => cfg,
                None => bail!("unknown preset {tag:?}; run `sldp presets` for the catalog"),
            },
            (None, None) => bail!("pass --config <file> or --preset <tag>"),
            (Some(_), Some(_)) => unreachable!("clap rejects --config with --preset"),
        };
        if let Some(seed) = self.seed {
            cfg.noise.seed = seed;
            cfg.mc.master_seed = seed;
        }
        cfg.validate()?;
        let out = self
            .out
            .clone()
            .unwrap_or_else(|| PathBuf::from(&cfg.output.dir));
        Ok((cfg, out))
    }
}

fn dispatch(cmd: &Cmd) -> Result<Option<RunOutcome>> {
    let run = |args: &RunArgs,
               f: fn(&ExperimentConfig, &Path) -> Result<RunOutcome>|
     -> Result<Option<RunOutcome>> {
        let (cfg, out) = args.resolve()?;
        Ok(Some(f(&cfg, &out)?))
    };
    match cmd {
        Cmd::Compare(args) => run(args, runner::run_compare),
        Cmd::CompareStochastic(args) => run(args, runner::run_compare_stochastic),
        Cmd::Sweep(args) => run(args, runner::run_sweep),
        Cmd::Action(args) => run(args, runner::run_action),
        Cmd::WienerGen(args) => run(args, runner::run_wiener_gen),
        Cmd::Presets => {
            print!("{}", presets::listing());
            Ok(None)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(&cli.cmd) {
        Ok(None) => ExitCode::SUCCESS,
        Ok(Some(outcome)) => {
            for f in &outcome.files {
                println!("wrote {}", f.display());
            }
            if outcome.n_unconverged > 0 {
                eprintln!(
                    "warning: {}/{} solve nodes finished without a certificate (flagged in the CSV)",
                    outcome.n_unconverged, outcome.n_nodes
                );
                ExitCode::from(2)
            } else {
                ExitCode::SUCCESS
            }
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
