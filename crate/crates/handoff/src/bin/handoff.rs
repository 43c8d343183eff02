//! Command-line harness: validate documents, run scenarios, render
//! timelines. Exit codes: 0 success, 1 invalid input or failed run,
//! 2 usage errors (from clap).

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use handoff::dsl::{
    parse_machine_bytes, parse_scenario_bytes, DirSource, ParseDiagnostic,
};
use handoff::report::{compute_latency, render_latency, render_timeline};
use handoff::scenario::Scenario;
use handoff::sim::{run_scenario_with, EventLog, SimOptions};

#[derive(Parser)]
#[command(name = "handoff", version, about = "Deterministic multi-robot handoff simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check a .machine or .scenario document and print diagnostics.
    Validate {
        /// Document to check; the extension selects the format.
        file: PathBuf,
        /// Directory behaviors are loaded from (default: the
        /// scenario's directory).
        #[arg(long)]
        behaviors: Option<PathBuf>,
    },
    /// Run a scenario and emit the structured event log.
    Run {
        scenario: PathBuf,
        /// Override the scenario's seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Write the log here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        behaviors: Option<PathBuf>,
        /// Also print latency statistics to stderr.
        #[arg(long)]
        stats: bool,
    },
    /// Render a mission timeline from a scenario or a saved event log.
    Timeline {
        /// A .scenario document (which is run first) or a log file
        /// produced by `run`.
        file: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        behaviors: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = Format::Text)]
        format: Format,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    /// Human-readable lane grid plus the full event listing.
    Text,
    /// The canonical structured log.
    Structured,
}

fn main() -> ExitCode {
    match Cli::parse().command {
        Command::Validate { file, behaviors } => validate(&file, behaviors),
        Command::Run {
            scenario,
            seed,
            out,
            behaviors,
            stats,
        } => run(&scenario, seed, out, behaviors, stats),
        Command::Timeline {
            file,
            seed,
            behaviors,
            format,
        } => timeline(&file, seed, behaviors, format),
    }
}

fn print_diags(path: &Path, diags: &[ParseDiagnostic]) {
    for d in diags {
        eprintln!("{}:{d}", path.display());
    }
}

fn load_scenario(
    path: &Path,
    behaviors: Option<PathBuf>,
) -> Result<(Scenario, Vec<ParseDiagnostic>), ExitCode> {
    let bytes = match std::fs::read(path) {
        Ok(b) => b,
        Err(e) => {
            eprintln!("{}: {e}", path.display());
            return Err(ExitCode::FAILURE);
        }
    };
    let root = behaviors
        .or_else(|| path.parent().map(Path::to_path_buf))
        .unwrap_or_else(|| PathBuf::from("."));
    match parse_scenario_bytes(&bytes, &DirSource { root }) {
        Ok(ok) => Ok(ok),
        Err(diags) => {
            print_diags(path, &diags);
            Err(ExitCode::FAILURE)
        }
    }
}

fn validate(path: &Path, behaviors: Option<PathBuf>) -> ExitCode {
    if path.extension().is_some_and(|e| e == "machine") {
        let bytes = match std::fs::read(path) {
            Ok(b) => b,
            Err(e) => {
                eprintln!("{}: {e}", path.display());
                return ExitCode::FAILURE;
            }
        };
        return match parse_machine_bytes(&bytes) {
            Ok((_, warnings)) => {
                print_diags(path, &warnings);
                println!("ok");
                ExitCode::SUCCESS
            }
            Err(diags) => {
                print_diags(path, &diags);
                ExitCode::FAILURE
            }
        };
    }
    match load_scenario(path, behaviors) {
        Ok((_, warnings)) => {
            print_diags(path, &warnings);
            println!("ok");
            ExitCode::SUCCESS
        }
        Err(code) => code,
    }
}

fn execute(
    path: &Path,
    seed: Option<u64>,
    behaviors: Option<PathBuf>,
) -> Result<EventLog, ExitCode> {
    let (sc, warnings) = load_scenario(path, behaviors)?;
    print_diags(path, &warnings);
    let opts = SimOptions {
        seed_override: seed,
        ..SimOptions::default()
    };
    run_scenario_with(&sc, &opts).map_err(|issues| {
        for i in issues {
            eprintln!("{}: {i}", path.display());
        }
        ExitCode::FAILURE
    })
}

fn run(
    path: &Path,
    seed: Option<u64>,
    out: Option<PathBuf>,
    behaviors: Option<PathBuf>,
    stats: bool,
) -> ExitCode {
    let log = match execute(path, seed, behaviors) {
        Ok(log) => log,
        Err(code) => return code,
    };
    let text = log.to_structured();
    if let Some(out) = out {
        if let Err(e) = std::fs::write(&out, &text) {
            eprintln!("{}: {e}", out.display());
            return ExitCode::FAILURE;
        }
    } else {
        print!("{text}");
    }
    if stats {
        eprint!("{}", render_latency(&compute_latency(&log)));
    }
    ExitCode::SUCCESS
}

fn timeline(
    path: &Path,
    seed: Option<u64>,
    behaviors: Option<PathBuf>,
    format: Format,
) -> ExitCode {
    // A saved log is recognized by its header; anything else is
    // treated as a scenario document.
    let log = match std::fs::read_to_string(path) {
        Ok(text) if text.starts_with("# handoff-log") => match EventLog::parse_structured(&text) {
            Ok(log) => log,
            Err(e) => {
                eprintln!("{}: {e}", path.display());
                return ExitCode::FAILURE;
            }
        },
        Ok(_) => match execute(path, seed, behaviors) {
            Ok(log) => log,
            Err(code) => return code,
        },
        Err(e) => {
            eprintln!("{}: {e}", path.display());
            return ExitCode::FAILURE;
        }
    };
    match format {
        Format::Text => print!("{}", render_timeline(&log)),
        Format::Structured => print!("{}", log.to_structured()),
    }
    ExitCode::SUCCESS
}
