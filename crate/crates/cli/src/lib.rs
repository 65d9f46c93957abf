//! Command-line front end: data ingestion, configuration and report files.

pub mod commands;
pub mod config;
pub mod error;
pub mod io;

use std::ffi::OsString;
use std::path::PathBuf;
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use config::{FileConfig, Overrides, RunConfig};
use error::{CliError, CliResult};

#[derive(Debug, Parser)]
#[command(name = "odcfmsv", version, about = "Factor multivariate stochastic volatility with dynamic correlations")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Default, Args)]
pub struct Common {
    /// TOML configuration file
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Output directory
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Multiply every input value by 0.01
    #[arg(long, global = true)]
    pub rescale_percent: bool,
    /// odcfmsv, pg or sverr
    #[arg(long, global = true)]
    pub variant: Option<String>,
    #[arg(long, global = true)]
    pub burn_in: Option<usize>,
    #[arg(long, global = true)]
    pub kept: Option<usize>,
    #[arg(long, global = true)]
    pub thin: Option<usize>,
    /// Portfolio weights: "equal" or a file of numbers
    #[arg(long, global = true)]
    pub weights: Option<String>,
    /// Returns CSV (header row, one row per period)
    #[arg(long, global = true)]
    pub returns: Option<PathBuf>,
    /// Factors CSV
    #[arg(long, global = true)]
    pub factors: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate a dataset from a bundled design
    Simulate {
        #[arg(long)]
        preset: String,
        /// Number of periods (default 1000)
        #[arg(long)]
        t: Option<usize>,
        #[command(flatten)]
        common: Common,
    },
    /// Run the Gibbs sampler and summarize the posterior
    Fit {
        /// truth.json from `simulate`, for coverage and smoothing errors
        #[arg(long)]
        truth: Option<PathBuf>,
        /// Fit only the first N rows
        #[arg(long)]
        rows: Option<usize>,
        /// Continue an unfinished chain from its checkpoint
        #[arg(long)]
        resume: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
    /// One-step-ahead forecast from a fitted checkpoint
    Predict {
        #[arg(long)]
        checkpoint: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Rolling one-step-ahead forecasts with refits at every origin
    Backtest {
        /// One or two variants, comma separated (first is Model 1)
        #[arg(long)]
        models: Option<String>,
        #[arg(long)]
        periods: Option<usize>,
        /// Rows used by the first fit (default: all but the last `periods`)
        #[arg(long)]
        start: Option<usize>,
        #[command(flatten)]
        common: Common,
    },
    /// Replicated comparison of fitted and true covariance paths
    Compare {
        #[arg(long)]
        reps: Option<usize>,
        #[arg(long)]
        t: Option<usize>,
        /// odcfmsv, pg or both
        #[arg(long)]
        dgp: Option<String>,
        #[command(flatten)]
        common: Common,
    },
    /// Rolling-window sample correlations
    Evalcorr {
        #[arg(long)]
        input: Option<PathBuf>,
        /// Half-width r of the window [t-r, t+r]
        #[arg(long, default_value_t = 3)]
        window: usize,
        #[command(flatten)]
        common: Common,
    },
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Simulate { .. } => "simulate",
            Command::Fit { .. } => "fit",
            Command::Predict { .. } => "predict",
            Command::Backtest { .. } => "backtest",
            Command::Compare { .. } => "compare",
            Command::Evalcorr { .. } => "evalcorr",
        }
    }

    fn common(&self) -> &Common {
        match self {
            Command::Simulate { common, .. }
            | Command::Fit { common, .. }
            | Command::Predict { common, .. }
            | Command::Backtest { common, .. }
            | Command::Compare { common, .. }
            | Command::Evalcorr { common, .. } => common,
        }
    }
}

fn resolve(cmd: &Command) -> CliResult<RunConfig> {
    let c = cmd.common();
    let file = match &c.config {
        Some(p) => FileConfig::load(p)?,
        None => FileConfig::default(),
    };
    let mut o = Overrides {
        returns: c.returns.clone(),
        factors: c.factors.clone(),
        rescale_percent: c.rescale_percent,
        variant: c.variant.clone(),
        burn_in: c.burn_in,
        kept: c.kept,
        thin: c.thin,
        weights: c.weights.clone(),
        out: c.out.clone(),
        seed: c.seed,
        threads: c.threads,
        ..Default::default()
    };
    match cmd {
        Command::Backtest { models, periods, start, .. } => {
            o.models = models.clone();
            o.periods = *periods;
            o.start = *start;
        }
        Command::Compare { reps, t, dgp, .. } => {
            o.reps = *reps;
            o.t = *t;
            o.dgp = dgp.clone();
        }
        _ => {}
    }
    RunConfig::resolve(file, o)
}

#[derive(Serialize)]
struct Metadata<'a> {
    command: &'a str,
    version: &'a str,
    args: Vec<String>,
    started_unix: u64,
    finished_unix: u64,
    elapsed_seconds: f64,
    status: i32,
}

fn unix_now() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs())
}

/// Runs one command. Timestamps go to `metadata.json` only, so every other
/// output is reproducible from the configuration and seed.
pub fn run_command(cmd: &Command, args: &[String]) -> CliResult<()> {
    let cfg = resolve(cmd).map_err(|e| e.context(cmd.name()))?;
    std::fs::create_dir_all(&cfg.out).map_err(|e| CliError::io(&cfg.out, e))?;
    let started = unix_now();
    let clock = Instant::now();
    let result = match cfg.threads {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| CliError::Usage(format!("--threads: {e}")))?
            .install(|| dispatch(cmd, &cfg)),
        None => dispatch(cmd, &cfg),
    };
    let meta = Metadata {
        command: cmd.name(),
        version: env!("CARGO_PKG_VERSION"),
        args: args.to_vec(),
        started_unix: started,
        finished_unix: unix_now(),
        elapsed_seconds: clock.elapsed().as_secs_f64(),
        status: result.as_ref().map_or_else(CliError::exit_code, |_| 0),
    };
    io::write_json(&cfg.out.join("metadata.json"), &meta)?;
    result.map_err(|e| e.context(cmd.name()))
}

fn dispatch(cmd: &Command, cfg: &RunConfig) -> CliResult<()> {
    match cmd {
        Command::Simulate { preset, t, .. } => commands::simulate(cfg, preset, *t),
        Command::Fit { truth, rows, resume, .. } => commands::fit(cfg, truth.as_deref(), *rows, resume.as_deref()),
        Command::Predict { checkpoint, .. } => commands::predict(cfg, checkpoint),
        Command::Backtest { .. } => commands::backtest(cfg).map(|_| ()),
        Command::Compare { .. } => commands::compare(cfg).map(|_| ()),
        Command::Evalcorr { input, window, .. } => commands::evalcorr(cfg, input.as_deref(), *window),
    }
}

/// Parses arguments and runs; returns the process exit status.
pub fn main_with_args<I: IntoIterator<Item = OsString>>(args: I) -> i32 {
    let args: Vec<OsString> = args.into_iter().collect();
    let cli = match Cli::try_parse_from(&args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    let text: Vec<String> = args.iter().map(|a| a.to_string_lossy().into_owned()).collect();
    match run_command(&cli.command, &text) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
