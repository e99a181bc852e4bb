use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use railgate_core::bench::{run_plan, summarize, LoadPlan};

/// Staged-ramp load tester for the ticket-sale engine.
#[derive(Parser)]
#[command(name = "bench", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Executes a load plan and writes the aggregate report as CSV.
    Run {
        /// Plan JSON (see README for the field list).
        #[arg(long)]
        plan: PathBuf,
        /// Report CSV output path.
        #[arg(long)]
        out: PathBuf,
        /// Fail (exit nonzero) when TOTAL anomaly rate exceeds this
        /// percentage; overrides the plan's ceiling.
        #[arg(long)]
        max_error_rate: Option<f64>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::Run { plan, out, max_error_rate } => run(plan, out, max_error_rate),
    }
}

fn run(plan_path: PathBuf, out: PathBuf, max_error_rate: Option<f64>) -> ExitCode {
    let plan: LoadPlan = match std::fs::read_to_string(&plan_path)
        .map_err(|e| e.to_string())
        .and_then(|text| serde_json::from_str(&text).map_err(|e| e.to_string()))
    {
        Ok(plan) => plan,
        Err(e) => {
            eprintln!("cannot load plan {}: {e}", plan_path.display());
            return ExitCode::FAILURE;
        }
    };

    let samples = match run_plan(&plan) {
        Ok(samples) => samples,
        Err(e) => {
            eprintln!("run aborted: {e}");
            return ExitCode::FAILURE;
        }
    };
    let report = match summarize(&samples) {
        Ok(report) => report,
        Err(e) => {
            eprintln!("no report: {e}");
            return ExitCode::FAILURE;
        }
    };

    let csv = report.to_csv();
    if let Err(e) = std::fs::write(&out, &csv) {
        eprintln!("cannot write {}: {e}", out.display());
        return ExitCode::FAILURE;
    }
    print!("{csv}");
    println!("report written to {}", out.display());

    let ceiling = max_error_rate.or(plan.error_rate_ceiling_pct).unwrap_or(100.0);
    let total_error = report.total().error_rate_pct;
    if total_error > ceiling {
        eprintln!("TOTAL anomaly rate {total_error:.2}% exceeds ceiling {ceiling:.2}%");
        return ExitCode::FAILURE;
    }
    ExitCode::SUCCESS
}
