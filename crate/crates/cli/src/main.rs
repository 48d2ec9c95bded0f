//! `gsr`: simulate degraded corpora, train and run the restoration model,
//! evaluate fidelity, and render the gradient analyses.

mod commands;
mod plot;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Parser)]
#[command(name = "gsr", version, about = "Universal speech restoration toolkit")]
struct Cli {
    /// TOML configuration; built-in defaults when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Checkpoint directory, or a run directory whose latest `ckpt_*` is used.
    #[arg(long, global = true)]
    ckpt: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write paired clean/degraded WAVs, a pair list and a recipe log.
    Simulate(SimulateArgs),
    /// Train from a pair list or an on-the-fly degraded clean list.
    Train(TrainArgs),
    /// Restore a WAV file or every WAV under a directory.
    Enhance(EnhanceArgs),
    /// LSD and SI-SNR over a pair list.
    Eval(EvalArgs),
    #[command(subcommand)]
    Analyze(AnalyzeCommand),
    /// Write `(frequency_hz, beta)` rows of the learnable softplus as CSV.
    ExportBetas {
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Args)]
struct CorpusArgs {
    /// Clean file list, one path per line.
    #[arg(long)]
    clean: Option<PathBuf>,
    #[arg(long)]
    noise: Option<PathBuf>,
    #[arg(long)]
    rir: Option<PathBuf>,
}

#[derive(Args)]
struct SimulateArgs {
    #[command(flatten)]
    corpus: CorpusArgs,
    /// Items to write; one per clean file when omitted.
    #[arg(long)]
    count: Option<usize>,
    #[arg(long, default_value = "train")]
    split: String,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct TrainArgs {
    /// Pre-simulated `degraded<TAB>clean` pair list.
    #[arg(long, conflicts_with = "clean")]
    pairs: Option<PathBuf>,
    #[command(flatten)]
    corpus: CorpusArgs,
    /// Run directory for metrics and checkpoints.
    #[arg(long)]
    out: PathBuf,
    /// Continue from the latest checkpoint in `--out` (or from `--ckpt`).
    #[arg(long)]
    resume: bool,
    #[arg(long)]
    max_steps: Option<u64>,
}

#[derive(Args)]
struct EnhanceArgs {
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    pairs: PathBuf,
    /// Report file; printed to stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Score the degraded input itself instead of a model.
    #[arg(long)]
    identity: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum Axis {
    Snr,
    Cutoff,
}

#[derive(Subcommand)]
enum AnalyzeCommand {
    /// Per-resolution attribution masks and gradient-weighted spectrograms.
    Gradients {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Mean resolution IoU per item; with `--against`, a paired Wilcoxon
    /// test between the two models.
    Iou {
        /// List of degraded WAVs.
        #[arg(long)]
        inputs: PathBuf,
        #[arg(long)]
        against: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Periodic/local gradient-norm ratio across degradation intensity.
    GlpRatio {
        #[arg(long)]
        clean: PathBuf,
        #[arg(long)]
        noise: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "snr")]
        axis: Axis,
        /// Comma-separated levels; the axis defaults when omitted.
        #[arg(long, value_delimiter = ',')]
        levels: Option<Vec<f64>>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Learnable softplus β per frequency, as a table and a curve.
    Betas {
        #[arg(long)]
        out: PathBuf,
    },
}

fn main() -> anyhow::Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let ctx = commands::Context { config: cli.config, seed: cli.seed, ckpt: cli.ckpt };
    match cli.command {
        Command::Simulate(a) => commands::simulate(&ctx, &a),
        Command::Train(a) => commands::train(&ctx, &a),
        Command::Enhance(a) => commands::enhance(&ctx, &a.input, &a.out),
        Command::Eval(a) => commands::eval(&ctx, &a),
        Command::Analyze(a) => commands::analyze(&ctx, a),
        Command::ExportBetas { out } => commands::export_betas(&ctx, &out),
    }
}
