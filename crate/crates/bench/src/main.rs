use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use emacflow_bench::config::RunConfig;
use emacflow_bench::record::read_rows;
use emacflow_bench::runner::run_benchmark;
use emacflow_bench::verify::{run_verification, Suite};
use emacflow_core::quantities::estimate_period;

#[derive(Parser)]
#[command(name = "emacflow", version, about = "Flow past a cylinder with Taylor-Hood elements")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the cylinder benchmark.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Continue from a checkpoint written by an earlier run.
        #[arg(long)]
        resume: Option<PathBuf>,
        /// Single worker thread; repeated runs give identical output.
        #[arg(long)]
        deterministic: bool,
        #[arg(long)]
        threads: Option<usize>,
    },
    /// Run a verification suite and print its JSON report.
    Verify {
        #[arg(long)]
        suite: Suite,
    },
    /// Estimate the shedding period from a run CSV.
    Period {
        #[arg(long)]
        csv: PathBuf,
        /// Evaluation window as `start:end`.
        #[arg(long, default_value = "280:480", value_parser = parse_window)]
        window: (f64, f64),
    },
}

fn parse_window(s: &str) -> Result<(f64, f64), String> {
    let (a, b) = s
        .split_once(':')
        .ok_or_else(|| format!("expected start:end, got '{s}'"))?;
    let num = |v: &str| v.trim().parse::<f64>().map_err(|e| format!("'{v}': {e}"));
    Ok((num(a)?, num(b)?))
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match execute(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}

fn execute(command: Command) -> Result<ExitCode, Box<dyn std::error::Error>> {
    match command {
        Command::Run {
            config,
            resume,
            deterministic,
            threads,
        } => {
            let mut cfg = RunConfig::load(&config)?;
            cfg.deterministic |= deterministic;
            if threads.is_some() {
                cfg.threads = threads;
            }
            let record = run_benchmark(&cfg, resume.as_deref())?;
            println!("{}", serde_json::to_string_pretty(&record.summary)?);
            Ok(match record.failure {
                Some(reason) => {
                    eprintln!("{reason}");
                    ExitCode::from(1)
                }
                None => ExitCode::SUCCESS,
            })
        }
        Command::Verify { suite } => {
            let report = run_verification(suite);
            println!("{}", serde_json::to_string_pretty(&report)?);
            Ok(if report.passed {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            })
        }
        Command::Period { csv, window } => {
            let rows = read_rows(&csv)?;
            let t: Vec<f64> = rows.iter().map(|r| r.t).collect();
            let drag: Vec<f64> = rows.iter().map(|r| r.drag).collect();
            let lift: Vec<f64> = rows.iter().map(|r| r.lift).collect();
            let est = estimate_period(&t, &drag, &lift, window)?;
            let out = serde_json::json!({
                "period": est.period,
                "period_dev": est.deviation,
                "cycles": est.cycles,
                "window": [est.window.0, est.window.1],
                "samples": est.samples,
                "valid": est.valid,
            });
            println!("{}", serde_json::to_string_pretty(&out)?);
            Ok(if est.valid {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            })
        }
    }
}
