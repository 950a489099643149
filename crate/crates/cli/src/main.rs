mod commands;
mod error;
mod manifest;
mod settings;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use walklab::corpus::Protocol;
use walklab::eval::Task;
use walklab::seq2seq::Variant;

use crate::error::CliError;

/// Train, evaluate and run attention-based instruction followers on
/// grid-world navigation data.
#[derive(Debug, Parser)]
#[command(name = "walklab", version)]
struct Cli {
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// More log output on stderr (-v info, -vv debug).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Build a canonical corpus directory from raw XML or synthetic data.
    Ingest(IngestArgs),
    /// Train per-fold ensembles.
    Train(TrainArgs),
    /// Evaluate trained ensembles on their held-out maps.
    Eval(EvalArgs),
    /// Follow one instruction on a map.
    Follow(FollowArgs),
    /// Train and evaluate every model variant.
    Ablate(AblateArgs),
    /// Render a follow trace as an alignment heatmap and a path drawing.
    Visualize(VisualizeArgs),
}

#[derive(Debug, Args)]
#[group(required = true, multiple = false, id = "source")]
struct IngestSource {
    /// Directory of raw XML map and instruction files.
    #[arg(long, value_name = "DIR")]
    raw: Option<PathBuf>,
    /// Generate a synthetic corpus on the bundled maps instead.
    #[arg(long)]
    synthetic: bool,
}

#[derive(Debug, Args)]
pub struct IngestArgs {
    #[command(flatten)]
    source: IngestSource,
    /// Output corpus directory.
    #[arg(long, value_name = "DIR")]
    pub out: PathBuf,
    /// Synthetic paragraphs per map.
    #[arg(long, default_value_t = 60)]
    pub paragraphs: usize,
    /// Synthetic generation seed.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

impl IngestArgs {
    pub fn raw(&self) -> Option<&PathBuf> {
        self.source.raw.as_ref()
    }
}

/// Flags shared by commands that train.
#[derive(Debug, Args)]
pub struct TrainingFlags {
    /// Corpus directory.
    #[arg(long, env = "WALKLAB_DATA", value_name = "DIR")]
    pub data: PathBuf,
    /// JSON file with `model` and `train` overrides; flags win over it.
    #[arg(long, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Early-stopping protocol: vdev or vtest.
    #[arg(long)]
    pub protocol: Option<Protocol>,
    /// Ensemble members per fold.
    #[arg(long)]
    pub ensemble: Option<usize>,
    /// Base seed; member i uses seed + i.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Maximum training epochs.
    #[arg(long)]
    pub epochs: Option<usize>,
    /// Hidden (and embedding) size.
    #[arg(long)]
    pub hidden: Option<usize>,
    /// Adam step size.
    #[arg(long)]
    pub learning_rate: Option<f64>,
    /// Keep only the first N training items of each fold.
    #[arg(long, value_name = "N")]
    pub limit_train: Option<usize>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub flags: TrainingFlags,
    /// Held-out map of the fold to train: grid, jelly, l, or all.
    #[arg(long, default_value = "all")]
    pub fold: String,
    /// Model variant.
    #[arg(long, default_value = "full")]
    pub variant: Variant,
    /// Output model directory.
    #[arg(long, value_name = "DIR")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Model directory written by `train`.
    #[arg(long, value_name = "DIR")]
    pub model: PathBuf,
    /// Corpus directory.
    #[arg(long, env = "WALKLAB_DATA", value_name = "DIR")]
    pub data: PathBuf,
    /// Must match the protocol the models were trained with.
    #[arg(long)]
    pub protocol: Option<Protocol>,
    /// single (pose must match) or multi (paragraph, node must match).
    #[arg(long, default_value = "single")]
    pub task: Task,
    /// Beam width (default: the model's).
    #[arg(long)]
    pub beam: Option<usize>,
    /// Output report file.
    #[arg(long, value_name = "FILE")]
    pub report: PathBuf,
}

#[derive(Debug, Args)]
pub struct FollowArgs {
    /// Model directory: a fold directory, or a `train` output (see --fold).
    #[arg(long, value_name = "DIR")]
    pub model: PathBuf,
    /// Fold subdirectory to use (default: the one named after --map).
    #[arg(long)]
    pub fold: Option<String>,
    /// Map name.
    #[arg(long)]
    pub map: String,
    /// Start pose as NODE,DEGREES, e.g. 14,90.
    #[arg(long)]
    pub start: String,
    /// Instruction text; sentences are split on . ! ?
    #[arg(long)]
    pub instruction: String,
    /// Beam width (default: the model's).
    #[arg(long)]
    pub beam: Option<usize>,
    /// Write per-step distributions and attention to this file.
    #[arg(long, value_name = "FILE")]
    pub trace: Option<PathBuf>,
    /// Corpus directory to take the map from (default: bundled maps).
    #[arg(long, value_name = "DIR")]
    pub data: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct AblateArgs {
    #[command(flatten)]
    pub flags: TrainingFlags,
    /// Comma-separated variants, or all.
    #[arg(long, default_value = "all")]
    pub variants: String,
    /// Beam width (default: the model's).
    #[arg(long)]
    pub beam: Option<usize>,
    /// Output table (JSON; a CSV copy is written next to it).
    #[arg(long, value_name = "FILE")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct VisualizeArgs {
    /// Trace file written by `follow --trace`.
    #[arg(long, value_name = "FILE")]
    pub trace: PathBuf,
    /// Output SVG heatmap.
    #[arg(long, value_name = "FILE")]
    pub out: PathBuf,
    /// Sentence of the trace to draw.
    #[arg(long, default_value_t = 0)]
    pub sentence: usize,
    /// Also write the heatmap as an 8-bit PGM raster.
    #[arg(long, value_name = "FILE")]
    pub raster: Option<PathBuf>,
    /// Also draw the walked path as SVG.
    #[arg(long, value_name = "FILE")]
    pub path: Option<PathBuf>,
    /// Corpus directory to take the map from (default: bundled maps).
    #[arg(long, value_name = "DIR")]
    pub data: Option<PathBuf>,
}

fn run(cli: Cli) -> Result<(), CliError> {
    if let Some(jobs) = cli.jobs {
        if jobs == 0 {
            return Err(CliError::user("--jobs must be at least 1"));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build_global()
            .map_err(|e| CliError::user(format!("cannot size worker pool: {e}")))?;
    }
    match cli.command {
        Command::Ingest(a) => commands::ingest(&a),
        Command::Train(a) => commands::train(&a),
        Command::Eval(a) => commands::eval(&a),
        Command::Follow(a) => commands::follow(&a),
        Command::Ablate(a) => commands::ablate(&a),
        Command::Visualize(a) => commands::visualize(&a),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
