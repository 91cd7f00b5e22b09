//! `sam`: fit, score, generate and benchmark counterfactual anomaly detectors.
//!
//! Exit status: 0 on success, 1 on usage errors, 2 on data or model errors.
//! Standard output only ever carries data; diagnostics go to standard error.

mod bench;
mod fit;
mod gen;
mod score;

use std::fmt;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

#[derive(Debug, Parser)]
#[command(name = "sam", version, about = "Counterfactual-regression anomaly detection")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Fit a model on a CSV file and write it as JSON.
    Fit(fit::FitArgs),
    /// Score the rows of a CSV file with a fitted model.
    Score(score::ScoreArgs),
    /// Run the repeated bootstrap benchmark and print a results table.
    Bench(bench::BenchArgs),
    /// Generate a synthetic labeled dataset.
    Gen(gen::GenArgs),
}

/// Bad flags or flag combinations; exits with status 1.
#[derive(Debug)]
pub struct Usage(pub String);

impl fmt::Display for Usage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Usage {}

fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if cause.is::<Usage>() {
            return 1;
        }
        if let Some(sam_core::Error::InvalidConfig(_)) = cause.downcast_ref::<sam_core::Error>() {
            return 1;
        }
    }
    2
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let result = match cli.command {
        Command::Fit(a) => fit::run(a),
        Command::Score(a) => score::run(a),
        Command::Bench(a) => bench::run(a),
        Command::Gen(a) => gen::run(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}

/// Label column to use: the one asked for, else a column literally named `label`.
pub fn resolve_label_column(path: &std::path::Path, requested: Option<&str>) -> anyhow::Result<Option<String>> {
    if let Some(col) = requested {
        return Ok(Some(col.to_string()));
    }
    let header = sam_core::csv_header(path)?;
    Ok(header.iter().any(|h| h == "label").then(|| "label".to_string()))
}
