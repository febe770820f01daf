//! The `roadsearch` command line: configuration, workdir locking and the
//! pipeline commands (`seed → train → generate → execute → analyze`, plus
//! `init-config` and `plot`).

pub mod commands;
pub mod config;
pub mod error;
pub mod lock;

use std::ffi::OsString;
use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

pub use config::RunConfig;
pub use error::CliError;
use lock::WorkdirLock;

#[derive(Debug, Parser)]
#[command(name = "roadsearch", version, about = "Evolve lane-keeping road tests against a learned OOB discriminator")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct GlobalArgs {
    /// TOML configuration file (defaults apply when omitted).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Master seed for every random stream.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Run directory holding all artifacts.
    #[arg(long, global = true)]
    pub workdir: Option<PathBuf>,
    /// Suppress progress output.
    #[arg(long, short, global = true)]
    pub quiet: bool,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a configuration file with every default spelled out.
    InitConfig {
        /// Destination file; printed to stdout when omitted.
        #[arg(long, short)]
        output: Option<PathBuf>,
    },
    /// Generate and label random seed roads with the desk simulator.
    Seed {
        #[arg(long)]
        n_roads: Option<usize>,
    },
    /// Train the discriminator on the seed dataset.
    Train {
        #[arg(long)]
        epochs: Option<usize>,
    },
    /// Evolve roads and write one test case per final population member.
    Generate {
        #[arg(long)]
        epochs: Option<usize>,
    },
    /// Run test cases on the desk simulator.
    Execute {
        #[arg(long)]
        tests: Option<PathBuf>,
        #[arg(long)]
        results: Option<PathBuf>,
    },
    /// Budgeted sampling, fault rate and novelty statistics.
    Analyze {
        #[arg(long)]
        results: Option<PathBuf>,
        #[arg(long)]
        tests: Option<PathBuf>,
        #[arg(long)]
        budget: Option<f64>,
        #[arg(long)]
        samples: Option<usize>,
    },
    /// Render a test case, and optionally its result, as SVG.
    Plot {
        #[arg(long)]
        test: PathBuf,
        #[arg(long)]
        result: Option<PathBuf>,
        #[arg(long, short)]
        output: PathBuf,
    },
}

/// Loads the configuration and applies flag overrides, then validates it.
pub fn resolve_config(cli: &Cli) -> Result<RunConfig, CliError> {
    let mut cfg = match &cli.global.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = cli.global.seed {
        cfg.set_seed(seed);
    }
    if let Some(workdir) = &cli.global.workdir {
        cfg.paths.workdir = workdir.clone();
    }
    match &cli.command {
        Command::Seed { n_roads: Some(n) } => cfg.seed_data.n_roads = *n,
        Command::Train { epochs: Some(e) } => cfg.discriminator.epochs = *e,
        Command::Generate { epochs: Some(e) } => cfg.ga.epochs = *e,
        Command::Analyze { budget, samples, .. } => {
            if let Some(b) = budget {
                cfg.analysis.budget_seconds = *b;
            }
            if let Some(s) = samples {
                cfg.analysis.n_samples = *s;
            }
        }
        _ => {}
    }
    cfg.check()?;
    Ok(cfg)
}

/// Runs a parsed command. Progress goes to `log`.
pub fn execute(cli: &Cli, log: commands::Log) -> Result<(), CliError> {
    let cfg = resolve_config(cli)?;
    let workdir = cfg.paths.workdir.clone();
    match &cli.command {
        Command::InitConfig { output } => {
            let text = commands::cmd_init_config(&cfg, output.as_deref())?;
            if output.is_none() {
                print!("{text}");
            }
        }
        Command::Plot { test, result, output } => commands::cmd_plot(test, result.as_deref(), output)?,
        Command::Seed { .. } => {
            let _lock = WorkdirLock::acquire(&workdir)?;
            commands::cmd_seed(&cfg, log)?;
        }
        Command::Train { .. } => {
            let _lock = WorkdirLock::acquire(&workdir)?;
            commands::cmd_train(&cfg, log)?;
        }
        Command::Generate { .. } => {
            let _lock = WorkdirLock::acquire(&workdir)?;
            commands::cmd_generate(&cfg, log)?;
        }
        Command::Execute { tests, results } => {
            let _lock = WorkdirLock::acquire(&workdir)?;
            let tests = tests.clone().unwrap_or_else(|| cfg.tests_dir());
            let results = results.clone().unwrap_or_else(|| cfg.results_dir());
            let summary = commands::cmd_execute(&cfg, &tests, &results, log)?;
            if !summary.malformed.is_empty() {
                eprintln!("{} malformed test file(s) skipped", summary.malformed.len());
            }
        }
        Command::Analyze { results, tests, .. } => {
            let _lock = WorkdirLock::acquire(&workdir)?;
            let results = results.clone().unwrap_or_else(|| cfg.results_dir());
            let tests = tests.clone().unwrap_or_else(|| cfg.tests_dir());
            commands::cmd_analyze(&cfg, &results, &tests, log)?;
        }
    }
    Ok(())
}

/// Parses `args`, runs the command and returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    let quiet = cli.global.quiet;
    let mut log = |line: &str| {
        if !quiet {
            let _ = writeln!(std::io::stderr(), "{line}");
        }
    };
    match execute(&cli, &mut log) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
