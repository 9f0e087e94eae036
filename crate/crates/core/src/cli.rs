//! Command-line front end. Exit codes: 0 success, 1 verification failure,
//! 2 usage, config or I/O error.

use std::ffi::OsString;
use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::bounds::{emit_curves, theta_grid, write_curves_csv, RateSource};
use crate::error::{invalid, Result};
use crate::harness::{
    run_experiment, sweep, write_sweep_csv, write_trials_csv, ExperimentConfig,
};
use crate::verify::{run_batteries, BATTERIES};

#[derive(Debug, Parser)]
#[command(name = "agt", version, about = "Noisy adaptive group testing simulator")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run a Monte Carlo experiment from a JSON config.
    Simulate(SimulateArgs),
    /// Rerun an experiment for several values of one budget field.
    Sweep(SweepArgs),
    /// Emit asymptotic rate curves as CSV.
    Bounds(BoundsArgs),
    /// Run the invariant batteries and report pass/fail.
    Verify(VerifyArgs),
}

#[derive(Debug, Args)]
pub struct RunArgs {
    /// JSON experiment config.
    #[arg(long)]
    pub config: PathBuf,
    /// Output CSV path; defaults to the config's `output`, then stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Override the config's master seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Cap on worker threads; results do not depend on it.
    #[arg(long)]
    pub threads: Option<usize>,
    /// Override the config's trial count.
    #[arg(long)]
    pub trials: Option<usize>,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub run: RunArgs,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub run: RunArgs,
    /// Pipeline field to vary, e.g. `c1` or `options.separate_threshold`.
    #[arg(long)]
    pub knob: String,
    /// Comma-separated knob values.
    #[arg(long, value_delimiter = ',', num_args = 1.., allow_negative_numbers = true)]
    pub values: Vec<f64>,
}

#[derive(Debug, Args)]
pub struct BoundsArgs {
    /// Noise level.
    #[arg(long)]
    pub rho: f64,
    /// Number of interior grid points `i / (N + 1)`.
    #[arg(long, alias = "grid", default_value_t = 99)]
    pub theta_grid: usize,
    /// Comma-separated rate sources, or `all`.
    #[arg(long, value_delimiter = ',', default_value = "all")]
    pub sources: Vec<String>,
    /// Output CSV path; stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    /// Run a single battery.
    #[arg(long, value_parser = BATTERIES)]
    pub only: Option<String>,
    /// Negate the change-of-measure inequality; the run must then fail.
    #[arg(long)]
    pub inject_fault: bool,
}

fn open_out(path: Option<&Path>) -> Result<Box<dyn Write>> {
    match path {
        Some(p) => {
            let f = File::create(p).map_err(|e| invalid(format!("cannot create {}: {e}", p.display())))?;
            Ok(Box::new(BufWriter::new(f)))
        }
        None => Ok(Box::new(io::stdout().lock())),
    }
}

fn load_config(args: &RunArgs) -> Result<ExperimentConfig> {
    let text = std::fs::read_to_string(&args.config)
        .map_err(|e| invalid(format!("cannot read {}: {e}", args.config.display())))?;
    let mut cfg: ExperimentConfig =
        serde_json::from_str(&text).map_err(|e| invalid(format!("bad config: {e}")))?;
    if let Some(seed) = args.seed {
        cfg.master_seed = seed;
    }
    if let Some(t) = args.threads {
        cfg.threads = Some(t);
    }
    if let Some(n) = args.trials {
        cfg.trials = n;
    }
    if let Some(out) = &args.out {
        cfg.output = Some(out.clone());
    }
    cfg.validate()?;
    Ok(cfg)
}

fn summary_path(out: &Path) -> PathBuf {
    let mut name = out.file_stem().unwrap_or_default().to_os_string();
    name.push(".summary.json");
    out.with_file_name(name)
}

fn cmd_simulate(args: &SimulateArgs) -> Result<i32> {
    let cfg = load_config(&args.run)?;
    let res = run_experiment(&cfg)?;
    let out = cfg.output.as_deref();
    write_trials_csv(open_out(out)?, &res.trials, cfg.dmax)?;
    let json = serde_json::to_string_pretty(&res.summary).map_err(|e| invalid(e.to_string()))?;
    match out {
        Some(path) => {
            let sp = summary_path(path);
            std::fs::write(&sp, format!("{json}\n"))
                .map_err(|e| invalid(format!("cannot write {}: {e}", sp.display())))?;
            println!("{json}");
        }
        None => eprintln!("{json}"),
    }
    Ok(0)
}

fn cmd_sweep(args: &SweepArgs) -> Result<i32> {
    let cfg = load_config(&args.run)?;
    let rows = sweep(&cfg, &args.knob, &args.values)?;
    write_sweep_csv(open_out(cfg.output.as_deref())?, &rows)?;
    Ok(0)
}

fn parse_sources(list: &[String]) -> Result<Vec<RateSource>> {
    let names: Vec<&str> = list.iter().map(|s| s.trim()).filter(|s| !s.is_empty()).collect();
    if names.is_empty() {
        return Err(invalid("no rate sources given"));
    }
    if names == ["all"] {
        return Ok(RateSource::ALL.to_vec());
    }
    names.into_iter().map(str::parse).collect()
}

fn cmd_bounds(args: &BoundsArgs) -> Result<i32> {
    let sources = parse_sources(&args.sources)?;
    let rows = emit_curves(args.rho, &theta_grid(args.theta_grid), &sources)?;
    write_curves_csv(open_out(args.out.as_deref())?, &rows)?;
    Ok(0)
}

fn cmd_verify(args: &VerifyArgs) -> Result<i32> {
    let reports = run_batteries(args.only.as_deref(), args.inject_fault)?;
    let mut ok = true;
    for r in &reports {
        print!("{r}");
        ok &= r.passed();
    }
    println!("{}", if ok { "all batteries passed" } else { "verification FAILED" });
    Ok(if ok { 0 } else { 1 })
}

/// Parse `args` and run the chosen subcommand, returning the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    let res = match &cli.command {
        Command::Simulate(a) => cmd_simulate(a),
        Command::Sweep(a) => cmd_sweep(a),
        Command::Bounds(a) => cmd_bounds(a),
        Command::Verify(a) => cmd_verify(a),
    };
    match res {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            2
        }
    }
}
