use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use sfdvi_cli::{exit, parse_scenario, run_scenario, write_results, Kind, RunError};

#[derive(Parser)]
#[command(
    name = "sfdvi",
    version,
    about = "Stochastic fractional differential variational inequality runner"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Integrate paths of a model and tabulate the mean trajectory.
    Simulate(RunArgs),
    /// Error table of a perturbed family against its limit.
    Stability(RunArgs),
    /// Projection gaps of a scaled set family.
    Projection(RunArgs),
    /// Spatial price equilibrium market with equilibrium checks.
    Spep(RunArgs),
    /// Differential game with Nash certificates.
    Game(RunArgs),
    /// Monte-Carlo checks of the noise generator.
    Sanity(RunArgs),
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    /// Overrides `output.csv`; without either the CSV goes to stdout.
    #[arg(long)]
    out_csv: Option<PathBuf>,
    #[arg(long)]
    out_json: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    paths: Option<usize>,
    /// Worker threads; results do not depend on it.
    #[arg(long)]
    threads: Option<usize>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (kind, args) = match cli.command {
        Command::Simulate(a) => (Kind::Simulate, a),
        Command::Stability(a) => (Kind::Stability, a),
        Command::Projection(a) => (Kind::Projection, a),
        Command::Spep(a) => (Kind::Spep, a),
        Command::Game(a) => (Kind::Game, a),
        Command::Sanity(a) => (Kind::Sanity, a),
    };
    ExitCode::from(run(kind, args) as u8)
}

fn run(kind: Kind, args: RunArgs) -> i32 {
    let text = match fs::read_to_string(&args.config) {
        Ok(t) => t,
        Err(e) => {
            eprintln!("error: cannot read {}: {e}", args.config.display());
            return exit::IO;
        }
    };
    let mut cfg = match parse_scenario(&text) {
        Ok(c) => c,
        Err(errs) => {
            eprintln!("error: rejected configuration {}", args.config.display());
            eprintln!("{errs}");
            return exit::CONFIG;
        }
    };
    if cfg.kind != kind {
        eprintln!(
            "error: {} declares kind {:?}, the subcommand runs {:?}",
            args.config.display(),
            cfg.kind.name(),
            kind.name()
        );
        return exit::CONFIG;
    }
    if let Some(seed) = args.seed {
        cfg.noise.seed = seed;
    }
    if let Some(paths) = args.paths {
        cfg.mc.paths = paths;
    }
    if args.seed.is_some() || args.paths.is_some() {
        if let Err(errs) = cfg.validate() {
            eprintln!("error: rejected overrides");
            eprintln!("{errs}");
            return exit::CONFIG;
        }
    }

    let pool = match rayon::ThreadPoolBuilder::new()
        .num_threads(args.threads.unwrap_or(0))
        .build()
    {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: cannot start worker threads: {e}");
            return exit::IO;
        }
    };
    let table = match pool.install(|| run_scenario(&cfg)) {
        Ok(t) => t,
        Err(e @ RunError::Config(_)) => {
            eprintln!("error: {e}");
            return exit::CONFIG;
        }
        Err(e @ RunError::Numeric(_)) => {
            eprintln!("error: {e}");
            return exit::NUMERIC;
        }
    };

    let csv = args
        .out_csv
        .or_else(|| cfg.output.csv.as_ref().map(PathBuf::from));
    let json = args
        .out_json
        .or_else(|| cfg.output.json.as_ref().map(PathBuf::from));
    if csv.is_none() {
        print!("{}", table.to_csv());
    }
    if let Err(e) = write_results(&table, csv.as_deref(), json.as_deref()) {
        eprintln!("error: cannot write results: {e}");
        return exit::IO;
    }
    exit::OK
}
