//! The `demix` command-line surface.
//!
//! Exit codes are stable: 0 success, 1 configuration or I/O error,
//! 2 solver divergence, 3 self-check failure.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::bench::{
    emit_csv, make_instance, median_error, run_experiment_with, run_solver, success_probability,
    ExperimentSpec,
};
use crate::config::ConfigMap;
use crate::error::{DemixError, Result};
use crate::par::{with_threads, Exec};
use crate::plot::{emit_svg, PlotKind};
use crate::selfcheck::{run_checks, Fault};
use crate::vecops::{dist2, norm2};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 1;
pub const EXIT_DIVERGED: i32 = 2;
pub const EXIT_CHECK_FAILED: i32 = 3;

pub const THREADS_ENV: &str = "DEMIX_THREADS";

#[derive(Debug, Parser)]
#[command(name = "demix", about = "Demixing of block-sparse signals from nonlinear observations")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate one synthetic instance, solve it, and write the iteration trace.
    Solve(RunArgs),
    /// Run the Monte-Carlo phase-transition experiment.
    Phase(RunArgs),
    /// Run the embedded invariant suite.
    Check(CheckArgs),
    /// Print version information.
    Version,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    /// Experiment config file (`key = value` lines).
    #[arg(long)]
    pub config: PathBuf,
    /// `key=value` assignment applied after the config file; repeatable.
    #[arg(long = "override", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
    /// Output directory.
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
    /// Worker threads (0 = auto). Falls back to $DEMIX_THREADS.
    #[arg(long)]
    pub threads: Option<usize>,
}

#[derive(Debug, Args)]
pub struct CheckArgs {
    #[arg(long, hide = true, value_parser = parse_fault)]
    pub fault_inject: Option<Fault>,
}

fn parse_fault(s: &str) -> std::result::Result<Fault, String> {
    match s {
        "tie-break" => Ok(Fault::TieBreak),
        "none" => Ok(Fault::None),
        other => Err(format!("unknown fault `{other}`")),
    }
}

/// Thread count from the flag, then `$DEMIX_THREADS`, then 0 (auto).
pub fn resolve_threads(flag: Option<usize>) -> Result<usize> {
    if let Some(t) = flag {
        return Ok(t);
    }
    match std::env::var(THREADS_ENV) {
        Ok(v) if !v.trim().is_empty() => v.trim().parse().map_err(|_| DemixError::Config {
            key: THREADS_ENV.to_string(),
            message: format!("expected a non-negative integer, got `{v}`"),
        }),
        _ => Ok(0),
    }
}

fn load(args: &RunArgs) -> Result<ExperimentSpec> {
    let mut map = ConfigMap::load(&args.config)?;
    for o in &args.overrides {
        map.apply_override(o)?;
    }
    map.to_spec()
}

fn ensure_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| DemixError::io(dir, e))
}

fn report_error(e: &DemixError) -> i32 {
    eprintln!("error: {e}");
    match e {
        DemixError::Diverged { .. } => EXIT_DIVERGED,
        _ => EXIT_CONFIG,
    }
}

fn cmd_solve(args: &RunArgs) -> Result<()> {
    let spec = load(args)?;
    let n = spec.n.unwrap_or(spec.sample_grid[spec.sample_grid.len() - 1]);
    ensure_dir(&args.out)?;
    let basis = spec.basis()?;
    let inst = make_instance(&spec, &basis, n, 0)?;
    let est = run_solver(&spec, spec.solver, &inst, true)?;
    let norm_error = dist2(&est.beta_hat, &inst.beta) / norm2(&inst.beta);
    if let Some(trace) = &est.trace {
        trace.write_csv(&args.out.join("trace.csv"))?;
    }
    println!("solver={} n={} p={} s={} b={}", spec.solver, n, spec.p, spec.s, spec.b);
    println!("norm_error={norm_error:e}");
    println!("iterations={}", est.iterations_used);
    println!("converged={}", est.converged);
    Ok(())
}

fn cmd_phase(args: &RunArgs) -> Result<()> {
    let spec = load(args)?;
    let threads = resolve_threads(args.threads)?;
    ensure_dir(&args.out)?;
    let results = with_threads(threads, || run_experiment_with(&spec, Exec::Parallel))?;
    emit_csv(&results, &args.out.join("results.csv"))?;
    emit_svg(&results, &args.out.join("success.svg"), PlotKind::Success, spec.success_threshold)?;
    emit_svg(&results, &args.out.join("error.svg"), PlotKind::Error, spec.success_threshold)?;
    let cfg_path = args.out.join("run.cfg");
    std::fs::write(&cfg_path, spec.to_config_string()).map_err(|e| DemixError::io(&cfg_path, e))?;

    println!("{:<12} {:>7} {:>9} {:>13}", "solver", "n", "success", "median_error");
    for &solver in &spec.solvers {
        for &n in &spec.sample_grid {
            let sp = success_probability(&results, solver, n, spec.success_threshold)?;
            let med = median_error(&results, solver, n)?;
            println!("{:<12} {:>7} {:>9.2} {:>13.3e}", solver.name(), n, sp, med);
        }
    }
    println!("wrote {}", args.out.display());
    Ok(())
}

fn cmd_check(args: &CheckArgs) -> i32 {
    match run_checks(args.fault_inject.unwrap_or_default()) {
        Ok(report) => {
            println!("{report}");
            if report.all_passed() {
                EXIT_OK
            } else {
                EXIT_CHECK_FAILED
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_CHECK_FAILED
        }
    }
}

/// Parses `args` (including the program name) and runs the command,
/// returning the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match &cli.command {
        Command::Solve(a) => cmd_solve(a).map_or_else(|e| report_error(&e), |()| EXIT_OK),
        Command::Phase(a) => cmd_phase(a).map_or_else(|e| report_error(&e), |()| EXIT_OK),
        Command::Check(a) => cmd_check(a),
        Command::Version => {
            let backend = if cfg!(feature = "parallel") { "rayon" } else { "sequential" };
            println!("demix {} ({backend})", env!("CARGO_PKG_VERSION"));
            EXIT_OK
        }
    }
}
