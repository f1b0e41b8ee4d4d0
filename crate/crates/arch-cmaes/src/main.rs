//! Benchmark CLI: `run` executes trial batches and writes one CSV log per
//! trial; `aggregate` folds trial logs into criterion-distance quantile
//! curves. Exit codes: 0 success, 1 invalid configuration, 2 failure while
//! running or aggregating.

use arch_cmaes::harness::runner::{BatchConfig, aggregate_files};
use arch_cmaes::harness::{
    ConstraintHandling, CoordinateSystem, HarnessError, ObjectiveId, records, run_batch,
};
use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand, ValueEnum};
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "arch-cmaes", about = "Constrained CMA-ES benchmark harness")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run benchmark trials and write one CSV log per trial.
    Run(RunArgs),
    /// Aggregate trial logs into quantile curves of the criterion distance.
    Aggregate(AggregateArgs),
}

#[derive(Args)]
struct RunArgs {
    /// Objective function.
    #[arg(long)]
    function: FunctionArg,
    /// Problem dimension.
    #[arg(long)]
    n: usize,
    /// Coordinate system the problem is materialized in.
    #[arg(long)]
    coords: CoordsArg,
    /// Constraint handling technique.
    #[arg(long)]
    cht: ChtArg,
    /// Base seed; trial k uses seed + k.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Number of independent trials.
    #[arg(long, default_value_t = 1)]
    trials: usize,
    /// Iteration cap per trial.
    #[arg(long = "max-iters", default_value_t = 20_000)]
    max_iters: usize,
    /// Criterion distance at which a trial stops.
    #[arg(long, default_value_t = 1e-10)]
    target: f64,
    /// Directory receiving the trial logs.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct AggregateArgs {
    /// Trial log files produced by `run`.
    #[arg(required = true)]
    files: Vec<PathBuf>,
    /// Output file; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum FunctionArg {
    Sphere,
    Ellipsoid,
    Rotellipsoid,
}

impl From<FunctionArg> for ObjectiveId {
    fn from(f: FunctionArg) -> Self {
        match f {
            FunctionArg::Sphere => ObjectiveId::Sphere,
            FunctionArg::Ellipsoid => ObjectiveId::Ellipsoid,
            FunctionArg::Rotellipsoid => ObjectiveId::RotEllipsoid,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum CoordsArg {
    Box,
    Rotbox,
    Illrotbox,
}

impl From<CoordsArg> for CoordinateSystem {
    fn from(c: CoordsArg) -> Self {
        match c {
            CoordsArg::Box => CoordinateSystem::Box,
            CoordsArg::Rotbox => CoordinateSystem::RotBox,
            CoordsArg::Illrotbox => CoordinateSystem::IllRotBox,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ChtArg {
    Arch,
    Resampling,
    Apbch,
    None,
}

impl From<ChtArg> for ConstraintHandling {
    fn from(c: ChtArg) -> Self {
        match c {
            ChtArg::Arch => ConstraintHandling::Arch,
            ChtArg::Resampling => ConstraintHandling::Resampling,
            ChtArg::Apbch => ConstraintHandling::ApBchApprox,
            ChtArg::None => ConstraintHandling::None,
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                HarnessError::InvalidConfiguration { .. } => ExitCode::from(1),
                _ => ExitCode::from(2),
            }
        }
    }
}

fn execute(cli: Cli) -> Result<(), HarnessError> {
    match cli.command {
        Command::Run(args) => {
            let cfg = BatchConfig {
                id: args.function.into(),
                n: args.n,
                coords: args.coords.into(),
                cht: args.cht.into(),
                base_seed: args.seed,
                trials: args.trials,
                max_iterations: args.max_iters,
                target_d_crit: args.target,
            };
            let paths = run_batch(&cfg, &args.out)?;
            for path in paths {
                println!("{}", path.display());
            }
            Ok(())
        }
        Command::Aggregate(args) => {
            let agg = aggregate_files(&args.files)?;
            match args.out {
                Some(path) => {
                    let mut out = BufWriter::new(File::create(path)?);
                    records::write_aggregate(&mut out, &agg)?;
                    out.flush()?;
                }
                None => {
                    let stdout = std::io::stdout();
                    let mut lock = stdout.lock();
                    records::write_aggregate(&mut lock, &agg)?;
                    lock.flush()?;
                }
            }
            Ok(())
        }
    }
}
