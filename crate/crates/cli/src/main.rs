use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use hfbflow_cli::config::DiagnosticsSection;
use hfbflow_cli::run::output_dir;
use hfbflow_cli::{parse_axis, run_diagnose, run_evolve, run_oracle, run_sweep, CliError, RunConfig};

/// Coupled condensate / pair-excitation dynamics and its Fock-space reference.
#[derive(Parser)]
#[command(name = "hfbflow", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct Common {
    /// TOML run configuration.
    #[arg(long, value_name = "PATH")]
    config: PathBuf,
    /// Output directory; overrides `output.directory`.
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Seed for random initial data; overrides `output.seed`.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Integrate the coupled system.
    Evolve(Common),
    /// Compare with the exact truncated many-body evolution.
    Oracle(Common),
    /// Repeat a run over a list of values of one parameter.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// `NAME=v1,v2,...` with NAME one of N, beta, dt, n.
        #[arg(long, value_name = "NAME=v1,v2,...")]
        axis: String,
    },
    /// Recompute norm reports from a stored trajectory.
    Diagnose {
        /// `trajectory.json` written by a run.
        trajectory: PathBuf,
        /// Configuration supplying `[diagnostics]` parameters.
        #[arg(long, value_name = "PATH")]
        config: Option<PathBuf>,
        #[arg(long, value_name = "DIR")]
        out: Option<PathBuf>,
    },
}

fn load(common: &Common) -> Result<(RunConfig, PathBuf), CliError> {
    let mut cfg = RunConfig::load(&common.config)?;
    if let Some(seed) = common.seed {
        cfg.output.seed = seed;
    }
    let out = output_dir(&cfg, common.out.clone());
    cfg.output.directory = out.clone();
    Ok((cfg, out))
}

fn dispatch(cli: Cli) -> Result<i32, CliError> {
    match cli.command {
        Command::Evolve(common) => {
            let (cfg, out) = load(&common)?;
            let outcome = run_evolve(&cfg, &out)?;
            report_abort(&outcome.summary.abort);
            Ok(outcome.summary.exit_code)
        }
        Command::Oracle(common) => {
            let (cfg, out) = load(&common)?;
            if !cfg.oracle.enabled {
                return Err(CliError::Config("oracle.enabled is false".into()));
            }
            let outcome = run_oracle(&cfg, &out)?;
            report_abort(&outcome.summary.abort);
            Ok(outcome.summary.exit_code)
        }
        Command::Sweep { common, axis } => {
            let (cfg, out) = load(&common)?;
            let (axis, values) = parse_axis(&axis)?;
            let (summary, code) = run_sweep(&cfg, axis, &values, &out)?;
            for row in summary.rows.iter().filter(|r| r.exit_code != 0) {
                eprintln!(
                    "row {} = {}: exit {}: {}",
                    axis.name(),
                    row.value,
                    row.exit_code,
                    row.reason.as_deref().unwrap_or("failed")
                );
            }
            Ok(code)
        }
        Command::Diagnose { trajectory, config, out } => {
            let params = match &config {
                Some(path) => RunConfig::load(path)?.diagnostics,
                None => DiagnosticsSection::default(),
            };
            let out = out.unwrap_or_else(|| {
                trajectory
                    .parent()
                    .map(PathBuf::from)
                    .unwrap_or_else(|| PathBuf::from("."))
            });
            let report = run_diagnose(&trajectory, &params, &out)?;
            if report.bbgky_flag {
                eprintln!(
                    "hierarchy residual flagged near frame {}",
                    report.bbgky_flag_frame.unwrap_or(0)
                );
            }
            Ok(0)
        }
    }
}

fn report_abort(abort: &Option<hfbflow::dynamics::AbortRecord>) {
    if let Some(a) = abort {
        eprintln!("aborted at t = {}: {} = {:e}", a.t, a.monitor, a.value);
    }
}

fn main() -> ExitCode {
    env_logger::init();
    let cli = Cli::parse();
    let code = match dispatch(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    };
    ExitCode::from(code as u8)
}
