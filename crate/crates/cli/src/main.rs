#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand};

mod commands;
mod record;

use commands::{Failure, Outcome};

#[derive(Parser, Debug)]
#[command(
    name = "eigenlab",
    version,
    about = "Embedded eigenvalues of matrix Schrödinger operators and their persistence"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Scenario file (JSON).
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,

    /// Directory for result files.
    #[arg(long, global = true, value_name = "DIR", default_value = "./out")]
    out: PathBuf,

    /// Worker threads for the λ-scan.
    #[arg(long, global = true, value_name = "N", default_value_t = 1)]
    threads: usize,

    /// Also write the coarse (λ, sigma_min) curve as curve.csv.
    #[arg(long, global = true)]
    emit_curve: bool,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Check the standing assumptions and print the spectral bookkeeping.
    Validate,
    /// Search the λ-window for an embedded eigenvalue.
    Detect,
    /// Re-detect along B(s) = s·B, with B taken from the scenario.
    Sweep {
        #[arg(long, default_value = "s")]
        param: String,
        #[arg(long, allow_negative_numbers = true)]
        from: f64,
        #[arg(long, allow_negative_numbers = true)]
        to: f64,
        #[arg(long)]
        steps: usize,
    },
    /// Melnikov matrix of a perturbation family and its rank.
    Melnikov {
        #[arg(long, value_name = "FILE")]
        family: Option<PathBuf>,
    },
    /// As `melnikov`, additionally writing the tangent directions.
    Tangent {
        #[arg(long, value_name = "FILE")]
        family: Option<PathBuf>,
    },
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Validate => "validate",
            Command::Detect => "detect",
            Command::Sweep { .. } => "sweep",
            Command::Melnikov { .. } => "melnikov",
            Command::Tangent { .. } => "tangent",
        }
    }
}

fn run(cli: &Cli, started: Instant) -> Result<Outcome, Failure> {
    let config = cli
        .config
        .as_ref()
        .ok_or_else(|| Failure::usage("--config PATH is required"))?;
    let input = commands::Input::load(config, cli.threads.max(1))?;
    let mut outcome = match &cli.command {
        Command::Validate => commands::validate(&input)?,
        Command::Detect => commands::detect(&input, cli.emit_curve)?,
        Command::Sweep {
            param,
            from,
            to,
            steps,
        } => commands::sweep(&input, param, *from, *to, *steps)?,
        Command::Melnikov { family } => commands::melnikov(&input, family.as_deref(), false)?,
        Command::Tangent { family } => commands::melnikov(&input, family.as_deref(), true)?,
    };
    let sidecar = record::RunRecord::new(cli.command.name(), &input, &outcome, started);
    outcome.files.push(("run.json".into(), sidecar.to_json()));
    Ok(outcome)
}

fn main() -> ExitCode {
    let started = Instant::now();
    let cli = Cli::parse();
    let outcome = match run(&cli, started) {
        Ok(o) => o,
        Err(f) => {
            eprintln!("error: {}", f.message);
            return ExitCode::from(f.code);
        }
    };
    if let Err(e) = outcome.write(&cli.out) {
        eprintln!("error: cannot write results to {}: {e}", cli.out.display());
        return ExitCode::from(4);
    }
    for line in &outcome.report {
        println!("{line}");
    }
    for note in &outcome.notes {
        eprintln!("note: {note}");
    }
    ExitCode::from(outcome.code)
}
