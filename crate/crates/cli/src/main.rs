//! `edgecc`: analytic sweeps, Monte-Carlo simulation, CCE scenario runs
//! and simulator validation from one scenario config.
//!
//! Exit status: 0 on success, 1 when validation fails, 2 on usage or
//! configuration errors.

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use edgecc::cce;
use edgecc::harness::{self, CellStatus, HarnessError, ScenarioConfig};

#[derive(Parser)]
#[command(
    name = "edgecc",
    version,
    about = "Edge-assisted congestion control toolkit",
    arg_required_else_help = true
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Closed-form holders, requesters, delivery probability and delay over the TTL grid.
    Analytic(CommonArgs),
    /// Monte-Carlo estimates for every (h0, deadline) in the configured mode.
    Simulate(CommonArgs),
    /// Congestion control engine run over the configured load profile.
    Cce(CommonArgs),
    /// Simulator-vs-analytic validation report.
    Validate(CommonArgs),
}

#[derive(Args)]
struct CommonArgs {
    /// Scenario config file.
    #[arg(long)]
    config: PathBuf,
    /// Output CSV path (standard output when omitted).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Overrides `sim.seed`.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides `sim.replications`.
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    replications: Option<u64>,
    /// Suppresses the summary line on standard error.
    #[arg(long)]
    quiet: bool,
}

enum Failure {
    Usage(String),
    ValidationFailed,
}

impl From<HarnessError> for Failure {
    fn from(e: HarnessError) -> Self {
        Failure::Usage(e.to_string())
    }
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        Failure::Usage(e.to_string())
    }
}

fn load(args: &CommonArgs) -> Result<ScenarioConfig, Failure> {
    let mut config =
        ScenarioConfig::load(&args.config).map_err(|e| Failure::Usage(format!("{}:\n{e}", args.config.display())))?;
    if let Some(seed) = args.seed {
        config.sim.seed = Some(seed);
    }
    if let Some(reps) = args.replications {
        config.sim.replications = reps as usize;
    }
    Ok(config)
}

fn sink(path: Option<&Path>) -> Result<Box<dyn Write>, Failure> {
    Ok(match path {
        Some(p) => {
            let f = File::create(p).map_err(|e| Failure::Usage(format!("cannot create {}: {e}", p.display())))?;
            Box::new(BufWriter::new(f))
        }
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn summary_path(out: &Path) -> PathBuf {
    let stem = out
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    out.with_file_name(format!("{stem}.summary.csv"))
}

fn run(command: Command) -> Result<(), Failure> {
    match command {
        Command::Analytic(args) => {
            let config = load(&args)?;
            let rows = harness::analytic_sweep(&config)?;
            let mut out = sink(args.out.as_deref())?;
            edgecc::analytic::write_sweep_csv(&rows, &mut out)?;
            out.flush()?;
            if !args.quiet {
                eprintln!(
                    "analytic: {} rows ({} h0 values x {} TTLs)",
                    rows.len(),
                    config.population.h0.len(),
                    config.ttl_grid().len()
                );
            }
        }
        Command::Simulate(args) => {
            let config = load(&args)?;
            let rows = harness::simulate(&config)?;
            let mut out = sink(args.out.as_deref())?;
            harness::write_simulation_csv(&rows, &mut out)?;
            out.flush()?;
            if !args.quiet {
                eprintln!(
                    "simulate: {} cells, {} replications each",
                    rows.len(),
                    config.sim.replications
                );
            }
        }
        Command::Cce(args) => {
            let config = load(&args)?;
            let base = args.config.parent().unwrap_or(Path::new("."));
            let metrics = harness::run_cce(&config, base)?;
            let mut out = sink(args.out.as_deref())?;
            cce::write_trace_csv(&metrics, &mut out)?;
            out.flush()?;
            if let Some(path) = &args.out {
                let mut s = sink(Some(&summary_path(path)))?;
                cce::write_summary_csv(&metrics.summary, &mut s)?;
                s.flush()?;
            }
            if !args.quiet {
                let s = &metrics.summary;
                eprintln!(
                    "cce: peak utilization {:.4} (baseline {:.4}), buffered {}, edge {}, forced {}, deadline misses {}",
                    s.peak_cce_util,
                    s.peak_baseline_util,
                    s.buffered_count,
                    s.edge_count,
                    s.forced_count,
                    s.deadline_misses
                );
            }
        }
        Command::Validate(args) => {
            let config = load(&args)?;
            let report = harness::validate(&config)?;
            let mut out = sink(args.out.as_deref())?;
            harness::write_validation_csv(&report, &mut out)?;
            out.flush()?;
            let count = |status| report.cells.iter().filter(|c| c.status == status).count();
            if !args.quiet {
                eprintln!(
                    "validate: {} pass, {} fail, {} degenerate -> {}",
                    count(CellStatus::Pass),
                    count(CellStatus::Fail),
                    count(CellStatus::Degenerate),
                    if report.passed() { "PASS" } else { "FAIL" }
                );
            }
            if !report.passed() {
                return Err(Failure::ValidationFailed);
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::ValidationFailed) => ExitCode::from(1),
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}
