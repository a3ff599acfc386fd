//! `hann`: bounds, compression round trips, cell enumeration, training and
//! the experiment runners behind one binary.
//!
//! Exit codes: 0 success, 1 verification or total run failure, 2 usage or
//! input error.

mod commands;
mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(name = "hann", version, about = "Hyperplane arrangement classifiers and quantized networks")]
struct Cli {
    #[command(flatten)]
    global: GlobalOpts,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, ValueEnum)]
pub enum Format {
    Json,
    Csv,
    Svg,
}

#[derive(Debug, Clone, Args)]
pub struct GlobalOpts {
    /// JSON config file with a "schema_version" field; explicit flags win.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Master seed; overrides the config's "seed".
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Run directory. Defaults to hann-out/<command>.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Output formats to write; repeatable. Defaults to all.
    #[arg(long, value_enum, global = true)]
    pub format: Vec<Format>,
    /// Worker threads for the experiment pool.
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    /// Omit timestamps from SVG metadata.
    #[arg(long, global = true)]
    pub deterministic: bool,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Compression scheme size, VC upper bound and head parameter counts.
    VcBound { d: u64, r: u64, k: u64 },
    /// Compress a realizable sample against a classifier.
    Compress {
        /// JSON array of {"x": [...], "y": ±1}.
        #[arg(long)]
        data: PathBuf,
        /// Classifier JSON consistent with the data.
        #[arg(long)]
        classifier: PathBuf,
    },
    /// Rebuild a classifier from a compressed sample.
    Reconstruct {
        /// Compressed sample, binary or .json.
        #[arg(long)]
        compressed: PathBuf,
    },
    /// Check that a compressed sample reconstructs a classifier consistent
    /// with the data.
    Verify {
        #[arg(long)]
        compressed: PathBuf,
        #[arg(long)]
        data: PathBuf,
    },
    /// Enumerate the nonempty cells of an arrangement.
    Cells {
        /// Arrangement JSON.
        #[arg(long, conflicts_with = "classifier", required_unless_present = "classifier")]
        arrangement: Option<PathBuf>,
        /// Classifier JSON; its arrangement is used.
        #[arg(long)]
        classifier: Option<PathBuf>,
    },
    /// Train one HANN on a dataset.
    Train,
    /// Two-moons study of the two surrogate gradients with cell analysis.
    Moons,
    /// Excess-risk rate of the certified grid histogram classifier.
    Rate,
    /// Tabular benchmark with the dropout grid and smoothed selection.
    Bench,
}

fn init_logging() {
    let env = env_logger::Env::new().filter_or("HANN_LOG", "warn");
    let _ = env_logger::Builder::from_env(env).format_timestamp(None).try_init();
}

fn main() -> ExitCode {
    init_logging();
    let cli = Cli::parse();
    if let Some(jobs) = cli.global.jobs {
        if jobs == 0 {
            eprintln!("error: --jobs must be at least 1");
            return ExitCode::from(2);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(jobs).build_global() {
            eprintln!("error: cannot size the worker pool: {e}");
            return ExitCode::from(2);
        }
    }
    let g = &cli.global;
    let result = match &cli.command {
        Command::VcBound { d, r, k } => commands::vc_bound(g, *d, *r, *k),
        Command::Compress { data, classifier } => commands::compress(g, data, classifier),
        Command::Reconstruct { compressed } => commands::reconstruct(g, compressed),
        Command::Verify { compressed, data } => commands::verify(g, compressed, data),
        Command::Cells { arrangement, classifier } => commands::cells(g, arrangement.as_deref(), classifier.as_deref()),
        Command::Train => commands::train(g),
        Command::Moons => commands::moons(g),
        Command::Rate => commands::rate(g),
        Command::Bench => commands::bench(g),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message());
            ExitCode::from(f.code())
        }
    }
}
