//! Operator front end: train, calibrate, scan, stats, gen-corpus, export-viz.
//!
//! Exit codes: 0 clean/success, 1 detection (scan found a match), 2 usage
//! errors, 3 data or model errors.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

mod commands;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Mode {
    /// Use the whole file as-is.
    Raw,
    /// Extract executable/.text/CODE sections from PE files.
    Pe,
}

#[derive(Debug, Parser)]
#[command(
    name = "eigenscan",
    about = "Eigenspace recognition of metamorphic binary families",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct TrainArgs {
    /// Directory with one subdirectory per family; files inside are samples.
    samples_dir: PathBuf,
    /// Vector length in bytes; samples are zero-padded or end-truncated.
    #[arg(long, default_value_t = 65536)]
    n: usize,
    /// Basis width: how many top eigenvectors to keep.
    #[arg(long = "m-prime", default_value_t = 3)]
    m_prime: usize,
    #[arg(long, value_enum, default_value_t = Mode::Raw)]
    mode: Mode,
    /// Where to write the model file.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct CalibrateArgs {
    /// Directory with one subdirectory per family holding calibration files.
    labeled_dir: PathBuf,
    #[arg(long)]
    model: PathBuf,
    /// Threshold slack multiplier; 1.0 keeps the exact observed maxima.
    #[arg(long, default_value_t = 1.0)]
    margin: f64,
    #[arg(long, value_enum, default_value_t = Mode::Raw)]
    mode: Mode,
    /// Output path; defaults to rewriting the input model.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct ScanArgs {
    /// Files to scan.
    #[arg(required = true)]
    files: Vec<PathBuf>,
    #[arg(long)]
    model: PathBuf,
    #[arg(long, value_enum, default_value_t = Mode::Raw)]
    mode: Mode,
}

#[derive(Debug, Args)]
struct StatsArgs {
    #[arg(long)]
    model: PathBuf,
}

#[derive(Debug, Args)]
struct GenCorpusArgs {
    /// Seed assembly files; each file founds one family named by its stem.
    #[arg(required = true)]
    seeds: Vec<PathBuf>,
    /// Output directory; variants land in <out>/<family>/<index>.bin.
    #[arg(long)]
    out: PathBuf,
    /// Variants per family.
    #[arg(long, default_value_t = 10)]
    count: u32,
    /// Master seed; every variant's mutation seed derives from it.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 0.05)]
    garbage_rate: f64,
    #[arg(long, default_value_t = 1)]
    rounds: u32,
    #[arg(long)]
    no_garbage: bool,
    #[arg(long)]
    no_rename: bool,
    #[arg(long)]
    no_substitute: bool,
    #[arg(long)]
    no_permute: bool,
    #[arg(long)]
    no_transpose: bool,
}

#[derive(Debug, Args)]
struct ExportVizArgs {
    /// Optional sample files to project into the weight CSV.
    files: Vec<PathBuf>,
    #[arg(long)]
    model: PathBuf,
    #[arg(long, value_enum, default_value_t = Mode::Raw)]
    mode: Mode,
    /// Output directory for PGM images and weights.csv.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Build a model from a labeled sample tree.
    Train(TrainArgs),
    /// Set per-class thresholds from a labeled calibration tree.
    Calibrate(CalibrateArgs),
    /// Classify files against a model.
    Scan(ScanArgs),
    /// Print per-class deviation and threshold tables.
    Stats(StatsArgs),
    /// Generate a synthetic metamorphic corpus from seed programs.
    GenCorpus(GenCorpusArgs),
    /// Export eigenvector images and weight coordinates.
    ExportViz(ExportVizArgs),
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Train(args) => commands::train(args),
        Command::Calibrate(args) => commands::calibrate(args),
        Command::Scan(args) => commands::scan(args),
        Command::Stats(args) => commands::stats(args),
        Command::GenCorpus(args) => commands::gen_corpus(args),
        Command::ExportViz(args) => commands::export_viz(args),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(3)
        }
    }
}
