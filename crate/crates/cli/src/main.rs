//! `sdfmap`: expand, schedule, simulate and execute dataflow graphs.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

mod commands;
mod rach;
mod scenario;

/// Failure with its exit status: 1 for domain failures, 2 for usage or
/// input errors.
#[derive(Debug)]
pub struct CliError {
    pub code: u8,
    pub message: String,
}

pub fn usage(msg: impl Into<String>) -> CliError {
    CliError { code: 2, message: msg.into() }
}

pub fn domain(msg: impl Into<String>) -> CliError {
    CliError { code: 1, message: msg.into() }
}

/// Result of a command that ran to completion: `false` is a failed check
/// (deadline miss, verification mismatch) and exits with status 1.
pub type Verdict = Result<bool, CliError>;

#[derive(Parser)]
#[command(name = "sdfmap", version, about = "Synchronous dataflow mapping toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
pub struct ScenarioArgs {
    /// Scenario file (graph, timing, constraints, deadline)
    #[arg(long, short)]
    pub scenario: PathBuf,
    /// Architecture preset or file, overriding the scenario's
    #[arg(long, short)]
    pub arch: Option<String>,
    /// Merge transfers after scheduling
    #[arg(long)]
    pub reduce_syncs: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Repetition vector, firing count and schedule expression of a graph
    Expand {
        graph: PathBuf,
        /// Also write the flattened graph here
        #[arg(long)]
        flat: Option<PathBuf>,
    },
    /// Schedule and simulate one scenario on several architectures
    Explore {
        #[arg(long, short)]
        scenario: PathBuf,
        /// Comma-separated presets or architecture files (default: the scenario's list)
        #[arg(long, value_delimiter = ',')]
        presets: Option<Vec<String>>,
        /// CSV twin of the table (default: explore.csv in the output directory)
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// List-schedule a scenario and write the schedule as JSON
    Schedule {
        #[command(flatten)]
        scenario: ScenarioArgs,
        #[arg(long, short)]
        out: Option<PathBuf>,
    },
    /// Replay a schedule and check the deadline
    Simulate {
        #[command(flatten)]
        scenario: ScenarioArgs,
        /// Issue this many back-to-back graph iterations
        #[arg(long, default_value_t = 1)]
        iterations: usize,
    },
    /// Export the simulated timeline as SVG plus a JSON twin
    Gantt {
        #[command(flatten)]
        scenario: ScenarioArgs,
        #[arg(long, short, default_value = "gantt.svg")]
        out: PathBuf,
    },
    /// Execute the generated per-core programs on host threads
    Run(commands::RunArgs),
    /// Modeled transfer cost and bandwidth per message size
    BenchTransfer {
        /// Architecture preset or file
        #[arg(long, short)]
        arch: String,
        /// Comma-separated message sizes in bytes
        #[arg(long, value_delimiter = ',', default_value = "0,1024,4800,16384,65536,262144,1048576")]
        sizes: Vec<u64>,
        /// Medium index within the architecture
        #[arg(long, default_value_t = 0)]
        medium: usize,
    },
    /// Synthesize a RACH slot, detect preambles and print the report
    RachpdDemo(commands::DemoArgs),
}

fn dispatch(cli: Cli) -> Verdict {
    match cli.command {
        Command::Expand { graph, flat } => commands::expand(&graph, flat.as_deref()),
        Command::Explore { scenario, presets, csv } => commands::explore(&scenario, presets, csv),
        Command::Schedule { scenario, out } => commands::schedule(&scenario, out.as_deref()),
        Command::Simulate { scenario, iterations } => commands::simulate(&scenario, iterations),
        Command::Gantt { scenario, out } => commands::gantt(&scenario, &out),
        Command::Run(args) => commands::run(&args),
        Command::BenchTransfer { arch, sizes, medium } => commands::bench_transfer(&arch, &sizes, medium),
        Command::RachpdDemo(args) => commands::rachpd_demo(&args),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {}", e.message);
            ExitCode::from(e.code)
        }
    }
}
