use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use rdeg::harness::{
    parse_config, run_experiment, run_sweep, ConfigError, ExecOptions, HarnessError, SweepParam, SweepSpec,
};
use rdeg::selftest;

#[derive(Parser)]
#[command(name = "rdeg", version, about = "Byzantine-resilient distributed extra-gradient experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment and write trace.csv and summary.json.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Overrides the config's seed.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value = "rdeg-out")]
        out: PathBuf,
        #[arg(long, default_value_t = 1)]
        workers: usize,
        /// Record elapsed milliseconds in the wall_ms column (zero otherwise).
        #[arg(long)]
        wall_clock: bool,
    },
    /// Sweep one parameter over a list of values with several seeds each.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        /// alpha, agents or sigma2.
        #[arg(long)]
        param: String,
        /// Comma-separated values.
        #[arg(long, value_delimiter = ',', num_args = 1..)]
        values: Vec<f64>,
        #[arg(long, default_value_t = 5)]
        trials: usize,
        #[arg(long, default_value = "rdeg-sweep")]
        out: PathBuf,
        #[arg(long, default_value_t = 1)]
        workers: usize,
    },
    /// Run the built-in invariant checks.
    Selftest,
}

fn load(path: &PathBuf) -> Result<rdeg::harness::RunConfig, HarnessError> {
    let text = fs::read_to_string(path).map_err(|source| HarnessError::Io {
        path: path.display().to_string(),
        source,
    })?;
    Ok(parse_config(&text)?)
}

fn execute(command: Command) -> Result<ExitCode, HarnessError> {
    match command {
        Command::Run {
            config,
            seed,
            out,
            workers,
            wall_clock,
        } => {
            let mut cfg = load(&config)?;
            if let Some(seed) = seed {
                cfg.seed = seed;
            }
            let result = run_experiment(&cfg, ExecOptions { workers, wall_clock }, Some(&out))?;
            let s = &result.summary;
            if let Some(round) = s.aborted_at_round {
                eprintln!(
                    "numerical abort in round {round}; partial trace written to {}",
                    out.display()
                );
                return Ok(ExitCode::from(3));
            }
            println!(
                "{} {}: {} rounds, final gap {:.6e}, error floor {:.6e}, output in {}",
                s.algo,
                s.problem,
                s.rounds_completed,
                s.final_gap.unwrap_or(f64::NAN),
                s.error_floor.unwrap_or(f64::NAN),
                out.display()
            );
            Ok(ExitCode::SUCCESS)
        }
        Command::Sweep {
            config,
            param,
            values,
            trials,
            out,
            workers,
        } => {
            let base = load(&config)?;
            let param = SweepParam::from_name(&param).ok_or_else(|| ConfigError {
                line: 0,
                message: format!("unknown sweep parameter '{param}' (expected alpha, agents or sigma2)"),
            })?;
            let spec = SweepSpec {
                base,
                param,
                values,
                trials,
            };
            let report = run_sweep(&spec, workers, Some(&out))?;
            print!("{}", report.text());
            Ok(ExitCode::SUCCESS)
        }
        Command::Selftest => {
            let checks = selftest::run_all();
            for check in &checks {
                println!("{}", check.line());
            }
            Ok(if checks.iter().all(|c| c.passed) {
                ExitCode::SUCCESS
            } else {
                ExitCode::FAILURE
            })
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
