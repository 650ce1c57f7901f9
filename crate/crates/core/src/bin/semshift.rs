//! Command-line front end: one subcommand per pipeline stage, plus `all`.
//!
//! Exit codes: 0 success, 2 configuration error, 3 upstream stage missing,
//! 4 data or I/O error.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use semshift::pipeline::{Pipeline, PipelineConfig, Stage, StageOutcome};

#[derive(Parser)]
#[command(name = "semshift", version, about = "Diachronic semantic change in a poetry corpus")]
struct Cli {
    /// TOML config; built-in defaults are used when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Directory holding stage outputs and the run manifest.
    #[arg(long, global = true, env = "SEMSHIFT_WORKDIR")]
    workdir: Option<PathBuf>,
    /// Corpus file (JSONL) or directory of text files; overrides the config.
    #[arg(long, global = true)]
    corpus: Option<PathBuf>,
    /// Run seed; overrides the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    /// Read and validate raw documents.
    Ingest,
    /// Normalize, tokenize and split into century and poet slices.
    Slice,
    /// Subsample centuries to a common token budget.
    Balance,
    /// Train century, poet and global reference embeddings.
    Train,
    /// Align embeddings across centuries and into the reference space.
    Align,
    /// Build mutual k-NN graphs and detect communities.
    Graph,
    /// Drift, turnover, reallocation, volatility and agreement for the panel.
    Metrics,
    /// Poet dispersions and the poet similarity matrix.
    Poet,
    /// Classify each panel word's pressure profile.
    Compare,
    /// Write figure and table data from whatever stages have run.
    Report,
    /// Generate a synthetic corpus with planted changes.
    Synth,
    /// Run every stage in order, skipping those already up to date.
    All,
}

impl Command {
    fn stage(self) -> Option<Stage> {
        Some(match self {
            Command::Ingest => Stage::Ingest,
            Command::Slice => Stage::Slice,
            Command::Balance => Stage::Balance,
            Command::Train => Stage::Train,
            Command::Align => Stage::Align,
            Command::Graph => Stage::Graph,
            Command::Metrics => Stage::Metrics,
            Command::Poet => Stage::Poet,
            Command::Compare => Stage::Compare,
            Command::Report => Stage::Report,
            Command::Synth => Stage::Synth,
            Command::All => return None,
        })
    }
}

fn print(stage: Stage, outcome: StageOutcome) {
    match outcome {
        StageOutcome::Ran => println!("{stage}: done"),
        StageOutcome::Skipped => println!("{stage}: up to date"),
    }
}

fn run(cli: Cli) -> semshift::Result<()> {
    let mut config = match &cli.config {
        Some(path) => PipelineConfig::load(path)?,
        None => PipelineConfig::default(),
    };
    if let Some(dir) = cli.workdir {
        config.paths.workdir = dir;
    }
    if let Some(corpus) = cli.corpus {
        config.paths.corpus = Some(corpus);
    }
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    let pipeline = Pipeline::new(config)?;
    match cli.command.stage() {
        Some(stage) => print(stage, pipeline.run(stage)?),
        None => {
            for (stage, outcome) in pipeline.run_all()? {
                print(stage, outcome);
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
