//! `conceptviz`: batch front end for synthesis, derivation, formulation and the HTTP service.
//!
//! Exit codes:
//!
//! | code | meaning |
//! |------|---------|
//! | 0 | success |
//! | 1 | error: unreadable input, bad request, unavailable backend |
//! | 2 | no result: no reshaping program, every formula candidate rejected, synthesis timeout |
//! | 3 | the chart needs an example relation and none was given |
//! | 64 | command-line usage error |

mod commands;
mod config;
mod fail;

use std::net::SocketAddr;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use fail::Failure;

#[derive(Parser)]
#[command(name = "conceptviz", version, about = "Concept-driven chart authoring from the command line")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Find reshaping programs whose output contains an example relation.
    Synth(SynthArgs),
    /// Derive a new column from a natural-language description.
    Derive(DeriveArgs),
    /// Turn a chart request into candidate tables and Vega-Lite specs.
    Formulate(FormulateArgs),
    /// Create and edit session files.
    #[command(subcommand)]
    Session(SessionCommand),
    /// Run the HTTP service.
    Serve(ServeArgs),
}

#[derive(Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub table: PathBuf,
    /// CSV whose header names the example columns.
    #[arg(long)]
    pub example: PathBuf,
    #[arg(long, default_value_t = 2)]
    pub max_depth: usize,
    /// Print results as JSON.
    #[arg(long)]
    pub json: bool,
}

#[derive(Args)]
pub struct BackendArgs {
    /// Overrides the backend kind from the config file.
    #[arg(long, value_parser = ["offline", "remote"])]
    pub backend: Option<String>,
    /// TOML file with a `[backend]` table.
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Args)]
pub struct DeriveArgs {
    #[arg(long)]
    pub table: PathBuf,
    /// Source column names, comma separated, in parameter order.
    #[arg(long, value_delimiter = ',', required = true)]
    pub sources: Vec<String>,
    #[arg(long)]
    pub desc: String,
    /// Name of the new column.
    #[arg(long)]
    pub out: String,
    /// Apply the N-th surviving candidate (1-based).
    #[arg(long, default_value_t = 1)]
    pub pick: usize,
    /// List every candidate with its sample outputs on stderr.
    #[arg(long)]
    pub show_candidates: bool,
    #[command(flatten)]
    pub backend: BackendArgs,
}

#[derive(Args)]
pub struct FormulateArgs {
    #[arg(long)]
    pub session: PathBuf,
    /// Chart request JSON: `{"template": ..., "encodings": [...]}`.
    #[arg(long)]
    pub chart: PathBuf,
    /// Example relation CSV, used when the chart has unknown concepts.
    #[arg(long)]
    pub example: Option<PathBuf>,
    /// Directory for candidate-k.table.csv and candidate-k.spec.json.
    #[arg(long, default_value = ".")]
    pub out_dir: PathBuf,
    /// Save candidate K (1-based) and write the session file back.
    #[arg(long)]
    pub save: Option<usize>,
}

#[derive(Subcommand)]
pub enum SessionCommand {
    /// Start a session file from a CSV table.
    New {
        #[arg(long)]
        table: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Session id; defaults to the output file stem.
        #[arg(long)]
        id: Option<String>,
    },
    /// Add a custom concept given by example values.
    Custom {
        #[arg(long)]
        session: PathBuf,
        #[arg(long)]
        name: String,
        /// Example values, comma separated.
        #[arg(long, value_delimiter = ',', required = true)]
        examples: Vec<String>,
    },
    /// Derive a concept from existing ones.
    Derive {
        #[arg(long)]
        session: PathBuf,
        /// Source concept names, comma separated.
        #[arg(long, value_delimiter = ',', required = true)]
        sources: Vec<String>,
        #[arg(long)]
        desc: String,
        #[arg(long)]
        name: String,
        #[arg(long, default_value_t = 1)]
        pick: usize,
        /// Use this formula text instead of generating one.
        #[arg(long)]
        formula: Option<String>,
        #[command(flatten)]
        backend: BackendArgs,
    },
    /// Print concepts, charts and the working table.
    Show {
        #[arg(long)]
        session: PathBuf,
        #[arg(long)]
        json: bool,
    },
}

#[derive(Args)]
pub struct ServeArgs {
    /// TOML file with server settings and an optional `[backend]` table.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub bind: Option<SocketAddr>,
    /// Listen on all interfaces instead of loopback.
    #[arg(long, conflicts_with = "bind")]
    pub expose: bool,
    #[arg(long)]
    pub port: Option<u16>,
    #[arg(long)]
    pub data_dir: Option<PathBuf>,
    /// Browser origin allowed to call the API; repeatable.
    #[arg(long = "cors-origin")]
    pub cors_origins: Vec<String>,
    #[arg(long, value_parser = ["offline", "remote"])]
    pub backend: Option<String>,
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Synth(a) => commands::synth(a),
        Command::Derive(a) => commands::derive(a),
        Command::Formulate(a) => commands::formulate(a),
        Command::Session(c) => commands::session(c),
        Command::Serve(a) => commands::serve(a),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { fail::USAGE } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            if !f.message.is_empty() {
                eprintln!("error: {}", f.message);
            }
            ExitCode::from(f.code)
        }
    }
}
