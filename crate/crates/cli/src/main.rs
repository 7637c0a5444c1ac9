use std::path::PathBuf;
use std::process::ExitCode;

use bkrylov::{LatencyModel, OverlapPolicy, WorldConfig};
use bkrylov_cli::bench::{bench_kernels, kernel_table, overlap_table};
use bkrylov_cli::check::{check, SuiteOptions};
use bkrylov_cli::error::EXIT_CHECK_FAILED;
use bkrylov_cli::solve::write_file;
use bkrylov_cli::sweep::{expand, history_table, run_sweep, summary_table, SweepAxis};
use bkrylov_cli::{execute, CliError, RunFlags};
use clap::{Parser, Subcommand};

/// Environment variable holding the log filter, e.g. `info` or `debug`.
const LOG_ENV: &str = "BKRYLOV_LOG";

#[derive(Parser)]
#[command(name = "bkrylov", version, about = "Block Krylov solvers on a simulated distributed machine")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one solve; writes solve.csv and solve.json into --out if given.
    Solve(RunFlags),
    /// Run the cartesian product of --sweep axes over a base configuration.
    Sweep {
        #[command(flatten)]
        flags: RunFlags,
        /// Axis as key=v1,v2,...; repeat for more axes.
        #[arg(long = "sweep", required = true)]
        axes: Vec<String>,
    },
    /// Time BOP, BDOT and BAXPY next to their counter-model characteristics.
    BenchKernels {
        /// Approximate rows of the block vectors.
        #[arg(long, default_value_t = 65536)]
        n: usize,
        /// Comma-separated column counts.
        #[arg(long, value_delimiter = ',', default_values_t = [8usize, 64])]
        s: Vec<usize>,
        #[arg(long, default_value_t = 5)]
        reps: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// CSV file; stdout if absent.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Hidden reduction latency as local work doubles, on the virtual clock.
    BenchOverlap {
        #[arg(long, default_value_t = 16)]
        ranks: usize,
        #[arg(long = "latency-model", default_value = "log")]
        latency_model: String,
        #[arg(long, default_value = "full")]
        overlap: String,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the invariant suite twice and compare the outputs byte for byte.
    Check {
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// Randomized trials per algebra variant.
        #[arg(long, default_value_t = 1000)]
        trials: usize,
        #[arg(long, default_value_t = 8)]
        s: usize,
        /// Directory for the per-section outputs of the first run.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn emit(out: Option<&PathBuf>, text: &str) -> Result<(), CliError> {
    match out {
        Some(path) => write_file(path, text),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn run(command: Command) -> Result<i32, CliError> {
    match command {
        Command::Solve(flags) => {
            let cfg = flags.load()?;
            let result = execute(&cfg)?;
            match &cfg.out {
                Some(dir) => {
                    result.write(dir, "solve")?;
                    println!("{}: {} iterations", result.status.label(), result.report.iterations());
                }
                None => println!("{}", result.summary_json()),
            }
            if let Some(e) = &result.error {
                eprintln!("{e}");
            }
            Ok(result.status.exit_code())
        }
        Command::Sweep { flags, axes } => {
            let base = flags.load()?;
            let axes: Vec<SweepAxis> = axes.iter().map(|a| a.parse()).collect::<Result<_, _>>()?;
            let entries = expand(&base, &axes)?;
            let results = run_sweep(&entries)?;
            let summary = summary_table(&results);
            if let Some(dir) = &base.out {
                for (entry, result) in entries.iter().zip(&results) {
                    result.write(dir, &entry.stem())?;
                }
                write_file(&dir.join("sweep.csv"), &summary)?;
                write_file(&dir.join("sweep_history.csv"), &history_table(&results))?;
            }
            print!("{summary}");
            Ok(0)
        }
        Command::BenchKernels { n, s, reps, seed, out } => {
            let rows = bench_kernels(n, &s, reps, seed)?;
            emit(out.as_ref(), &kernel_table(&rows))?;
            Ok(0)
        }
        Command::BenchOverlap { ranks, latency_model, overlap, out } => {
            let world = WorldConfig {
                ranks,
                latency: LatencyModel::parse(&latency_model).map_err(|e| CliError::Config(e.to_string()))?,
                overlap: OverlapPolicy::parse(&overlap).map_err(|e| CliError::Config(e.to_string()))?,
                ..WorldConfig::default()
            };
            emit(out.as_ref(), &overlap_table(world)?)?;
            Ok(0)
        }
        Command::Check { seed, trials, s, out } => {
            let outcome = check(&SuiteOptions { seed, trials, s })?;
            if let Some(dir) = &out {
                for section in &outcome.sections {
                    write_file(&dir.join(format!("{}.txt", section.name)), &section.output)?;
                }
            }
            for line in outcome.lines() {
                println!("{line}");
            }
            Ok(if outcome.passed() { 0 } else { EXIT_CHECK_FAILED })
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or(LOG_ENV, "warn")).init();
    let cli = Cli::parse();
    let code = match run(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    };
    ExitCode::from(u8::try_from(code).unwrap_or(1))
}
