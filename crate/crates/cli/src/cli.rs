//! Argument parsing and command dispatch.

use std::path::{Path, PathBuf};

use clap::{Args as ClapArgs, Parser, Subcommand};

use crate::config::Config;
use crate::error::CliError;
use crate::plot::PlotOptions;
use crate::run::RunDir;

#[derive(Debug, Parser)]
#[command(name = "qmetro", version, about = "Optimal Bayesian quantum-metrology strategies")]
pub struct Args {
    /// Log more (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

impl Args {
    pub fn log_level(&self) -> &'static str {
        match self.verbose {
            0 => "warn",
            1 => "info",
            _ => "debug",
        }
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Seesaw-optimize the configured strategy classes.
    Optimize(RunArgs),
    /// Monte Carlo simulation of the adaptive greedy strategy.
    Greedy(RunArgs),
    /// Repeat `optimize` (and optionally `greedy`) over the [sweep] values.
    Sweep(RunArgs),
    /// Render score curves with error bars from run directories or CSV files.
    Plot(PlotArgs),
    /// Check a config file and exit.
    ValidateConfig {
        #[arg(long)]
        config: PathBuf,
    },
}

#[derive(Debug, ClapArgs)]
pub struct RunArgs {
    /// Config file (TOML), or a previous run's manifest.json.
    #[arg(long)]
    pub config: PathBuf,
    /// Base directory for run directories; overrides output.dir.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Overrides the config seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Worker threads (defaults to the number of cores).
    #[arg(long)]
    pub workers: Option<usize>,
    /// Overrides the SDP tolerance of every solve.
    #[arg(long)]
    pub tol: Option<f64>,
}

#[derive(Debug, ClapArgs)]
pub struct PlotArgs {
    /// Run directories or long-format CSV files.
    #[arg(required = true)]
    pub inputs: Vec<PathBuf>,
    /// SVG file (or directory) to write; defaults to plot.svg next to the first input.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, default_value = "")]
    pub title: String,
    #[arg(long, default_value = "value")]
    pub x_label: String,
    #[arg(long, default_value = "score")]
    pub y_label: String,
}

pub fn execute(args: Args) -> Result<(), CliError> {
    match args.command {
        Command::ValidateConfig { config } => {
            let cfg = Config::load(&config)?;
            println!("ok: {} (schema_version {})", cfg.name, cfg.schema_version);
            Ok(())
        }
        Command::Plot(p) => {
            let opts = PlotOptions { title: p.title, x_label: p.x_label, y_label: p.y_label, ..Default::default() };
            let path = crate::plot::run(&p.inputs, p.out.as_deref(), &opts)?;
            println!("{}", path.display());
            Ok(())
        }
        Command::Optimize(r) => with_run("optimize", &r, |cfg, dir| crate::optimize::run(cfg, dir).map(|_| ())),
        Command::Greedy(r) => with_run("greedy", &r, |cfg, dir| crate::greedy::run(cfg, dir).map(|_| ())),
        Command::Sweep(r) => {
            // A missing [sweep] section is a schema problem, caught before a run dir exists.
            let cfg = Config::load(&r.config)?;
            match &cfg.sweep {
                None => return Err(CliError::Schema("sweep: the sweep command needs a [sweep] section".into())),
                Some(s) => {
                    for v in &s.values {
                        cfg.with_value(&s.parameters, *v).map_err(|e| CliError::Schema(format!("sweep value {v}: {e}")))?;
                    }
                }
            }
            with_run("sweep", &r, |cfg, dir| crate::sweep::run(cfg, dir).map(|_| ()))
        }
    }
}

fn with_run(command: &str, args: &RunArgs, body: impl FnOnce(&Config, &mut RunDir) -> Result<(), CliError> + Send) -> Result<(), CliError> {
    let cfg = Config::load(&args.config)?.with_overrides(args.seed, args.tol)?;
    if args.workers == Some(0) {
        return Err(CliError::Schema("--workers: must be at least 1".into()));
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(args.workers.unwrap_or(0))
        .build()
        .map_err(|e| CliError::Io(format!("thread pool: {e}")))?;
    let base: &Path = args.out.as_deref().unwrap_or(&cfg.output.dir);
    let mut dir = RunDir::create(base, command, &cfg, pool.current_num_threads())?;
    let outcome = pool.install(|| body(&cfg, &mut dir));
    let path = dir.finish(&outcome)?;
    println!("{}", path.display());
    outcome
}
