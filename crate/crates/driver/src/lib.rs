//! Batch driver for zero-temperature experiments on `[0, 1]`.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod artifacts;
pub mod config;
pub mod error;
pub mod pipeline;


use std::path::PathBuf;

use clap::{Parser, Subcommand};

use crate::artifacts::OutDir;
use crate::config::ExperimentConfig;
use crate::error::{CliError, Result};
use crate::pipeline::{Pipeline, Stage};

#[derive(Debug, Parser)]
#[command(name = "zerotemp", version, about = "Gibbs chains, their zero-temperature limits and rate functions")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Twist check, maximal cycle mean, calibrated subactions, eigenpairs and chains.
    Solve(RunArgs),
    /// Limits of the eigenfunctions and the duality certificate.
    Zerotemp(RunArgs),
    /// Mane potential, Peierls barrier, non-wandering set, separating subaction.
    Mane(RunArgs),
    /// Optimal-transition graph and its checks (twist potentials only).
    Graph(RunArgs),
    /// Cylinder log-measures against the rate function.
    Ldp(RunArgs),
    /// Every stage enabled by the config flags, in order.
    All(RunArgs),
}

#[derive(Debug, clap::Args)]
pub struct RunArgs {
    #[arg(long)]
    pub config: PathBuf,
    /// Overrides `output_dir` from the config.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Worker threads; 0 picks the number of cores.
    #[arg(long, default_value_t = 0)]
    pub threads: usize,
}

pub fn run(cli: Cli) -> Result<()> {
    let (args, stages): (&RunArgs, Option<Stage>) = match &cli.command {
        Command::Solve(a) => (a, Some(Stage::Solve)),
        Command::Zerotemp(a) => (a, Some(Stage::Zerotemp)),
        Command::Mane(a) => (a, Some(Stage::Mane)),
        Command::Graph(a) => (a, Some(Stage::Graph)),
        Command::Ldp(a) => (a, Some(Stage::Ldp)),
        Command::All(a) => (a, None),
    };
    let cfg = ExperimentConfig::load(&args.config)?;
    let dir = args
        .out
        .clone()
        .or_else(|| cfg.output_dir.clone())
        .unwrap_or_else(|| PathBuf::from("zerotemp-out"));
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(args.threads)
        .build()
        .map_err(|e| CliError::Config(format!("cannot start {} threads: {e}", args.threads)))?;
    pool.install(|| {
        let mut p = Pipeline::open(cfg, OutDir::new(dir)?)?;
        let todo = match stages {
            Some(s) => vec![s],
            None => p.planned(),
        };
        for stage in todo {
            let ran = p.run(stage)?;
            eprintln!("{}: {}", stage.name(), if ran { "done" } else { "cached" });
        }
        Ok(())
    })
}
