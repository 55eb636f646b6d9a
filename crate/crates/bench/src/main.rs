use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Duration;

use clap::Parser;
use mizsrv_bench::{emit_report, run_scenario, Scenario, SourceMode};

/// Measures remote-submission latency against local verification.
#[derive(Debug, Parser)]
#[command(name = "latency-harness", version)]
struct Args {
    /// Article sizes in lines; one scenario per value.
    #[arg(long, value_delimiter = ',', default_value = "3657")]
    lines: Vec<u32>,
    /// Simulated verification time per run.
    #[arg(long, default_value_t = 10.0)]
    simulated_seconds: f64,
    #[arg(long, value_delimiter = ',', default_value = "500")]
    poll_interval_ms: Vec<u64>,
    #[arg(long, default_value = "inline")]
    source_mode: SourceMode,
    #[arg(long, default_value_t = 5)]
    repetitions: usize,
    /// Also write the CSV report here.
    #[arg(long)]
    csv: Option<PathBuf>,
}

fn main() -> ExitCode {
    let args = Args::parse();
    if !(args.simulated_seconds.is_finite() && args.simulated_seconds >= 0.0) {
        eprintln!("latency-harness: --simulated-seconds must be a non-negative number");
        return ExitCode::from(2);
    }
    let mut results = Vec::new();
    for &lines in &args.lines {
        for &poll in &args.poll_interval_ms {
            let s = Scenario {
                article_lines: lines,
                simulated_verify: Duration::from_secs_f64(args.simulated_seconds),
                poll_interval_ms: poll,
                source_mode: args.source_mode,
                repetitions: args.repetitions,
            };
            match run_scenario(&s) {
                Ok(m) => results.push(m),
                Err(e) => {
                    eprintln!("latency-harness: {lines} lines, poll {poll} ms: {e}");
                    return ExitCode::FAILURE;
                }
            }
        }
    }
    let report = match emit_report(&results) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("latency-harness: {e}");
            return ExitCode::FAILURE;
        }
    };
    print!("{}", report.text);
    if let Some(path) = args.csv {
        if let Err(e) = std::fs::write(&path, &report.csv) {
            eprintln!("latency-harness: {}: {e}", path.display());
            return ExitCode::FAILURE;
        }
    }
    ExitCode::SUCCESS
}
