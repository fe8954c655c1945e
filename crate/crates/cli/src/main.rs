//! `mgame`: solve, sweep, verify and generate matrix-game instances.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::{Arc, Mutex};

use clap::{Args, Parser, Subcommand, ValueEnum};
use mgame_core::bench::config::{sweep_spec, verify_spec, KeyValues};
use mgame_core::bench::sweep::{write_csv, write_jsonl};
use mgame_core::oracle::{read_matrix, write_matrix};
use mgame_core::{
    generate, mirror_prox_baseline, run_sweep, solve_game, verify, Generator, InstanceSpec, Kind, MgameError, Result,
    SolveConfig, Solver, Tracer,
};

#[derive(Parser)]
#[command(name = "mgame", version, about = "Matvec-metered matrix-game solver and benchmark harness")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve one instance and print its report as JSON.
    Solve(SolveArgs),
    /// Run a sweep described by a config file.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        /// Output file; standard output when absent.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = Format::Jsonl)]
        format: Format,
    },
    /// Run the invariant suites on one seeded instance.
    Verify {
        #[arg(long)]
        config: PathBuf,
    },
    /// Generate an instance and write it in the binary matrix format.
    Gen {
        #[command(flatten)]
        instance: InstanceArgs,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Jsonl,
    Csv,
}

#[derive(Args)]
struct InstanceArgs {
    #[arg(long, default_value = "l1l1")]
    kind: String,
    #[arg(long, default_value_t = 16)]
    m: usize,
    /// Defaults to `m`.
    #[arg(long)]
    n: Option<usize>,
    /// rademacher, gaussian_rownorm, diag_dominant or low_rank_plus_noise(r,sigma).
    #[arg(long = "gen")]
    generator: Option<String>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

impl InstanceArgs {
    fn spec(&self) -> Result<InstanceSpec> {
        let kind: Kind = self.kind.parse()?;
        let generator = match &self.generator {
            Some(g) => g.parse()?,
            None if kind == Kind::L1L1 => Generator::Rademacher,
            None => Generator::GaussianRownorm,
        };
        Ok(InstanceSpec { kind, m: self.m, n: self.n.unwrap_or(self.m), generator, seed: self.seed })
    }
}

#[derive(Args)]
struct SolveArgs {
    #[command(flatten)]
    instance: InstanceArgs,
    #[arg(long, default_value_t = 0.1)]
    eps: f64,
    /// Run the dense invariant audits.
    #[arg(long)]
    audit: bool,
    #[arg(long, default_value = "multiprox")]
    solver: String,
    /// Read the matrix from a file written by `gen` instead of generating it.
    #[arg(long)]
    input: Option<PathBuf>,
    /// Write a JSON-lines trace of the solve.
    #[arg(long)]
    trace: Option<PathBuf>,
}

fn output(path: &Option<PathBuf>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p)?)),
        None => Box::new(std::io::stdout().lock()),
    })
}

fn print_json(v: &impl serde::Serialize) -> Result<()> {
    let text = serde_json::to_string_pretty(v).map_err(|e| MgameError::InternalInvariant(e.to_string()))?;
    println!("{text}");
    Ok(())
}

fn solve(args: &SolveArgs) -> Result<ExitCode> {
    let (kind, a) = match &args.input {
        Some(p) => read_matrix(p)?,
        None => {
            let spec = args.instance.spec()?;
            (spec.kind, generate(&spec)?)
        }
    };
    let report = match args.solver.parse::<Solver>()? {
        Solver::Multiprox => {
            let tracer = match &args.trace {
                Some(p) => Tracer::new(Arc::new(Mutex::new(BufWriter::new(File::create(p)?)))),
                None => Tracer::disabled(),
            };
            solve_game(kind, &a, args.eps, &SolveConfig { audit: args.audit, tracer, ..SolveConfig::default() })?
        }
        Solver::MirrorProxBaseline => mirror_prox_baseline(kind, &a, args.eps)?,
    };
    print_json(&report)?;
    let audit_ok = report.audit.as_ref().is_none_or(|r| r.all_pass());
    Ok(if audit_ok { ExitCode::SUCCESS } else { ExitCode::from(3) })
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Solve(args) => solve(&args),
        Command::Sweep { config, out, format } => {
            let spec = sweep_spec(&KeyValues::read(&config)?)?;
            let records = run_sweep(&spec)?;
            let mut w = output(&out)?;
            match format {
                Format::Jsonl => write_jsonl(&records, &mut w)?,
                Format::Csv => write_csv(&records, &mut w)?,
            }
            w.flush()?;
            Ok(ExitCode::SUCCESS)
        }
        Command::Verify { config } => {
            let report = verify(&verify_spec(&KeyValues::read(&config)?)?);
            print_json(&report)?;
            Ok(if report.all_pass { ExitCode::SUCCESS } else { ExitCode::from(3) })
        }
        Command::Gen { instance, out } => {
            let spec = instance.spec()?;
            write_matrix(&out, spec.kind, &generate(&spec)?)?;
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
