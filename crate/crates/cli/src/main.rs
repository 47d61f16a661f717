//! `odiprobe`: command-line driver for the complaint-probing pipeline.

mod backends;
mod commands;

use std::path::PathBuf;

use anyhow::Result;
use clap::{ArgAction, Args, Parser, Subcommand, ValueEnum};

#[derive(Parser, Debug)]
#[command(name = "odiprobe", version, about = "Cloze-probe masked language models on vehicle complaint narratives")]
pub struct Cli {
    /// Pipeline config (TOML). Defaults apply when omitted.
    #[arg(short, long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,

    /// Override every seed in the config (split, shuffle, masking, init)
    #[arg(long, global = true)]
    pub seed: Option<u64>,

    /// Output root; overrides `output_root` in the config
    #[arg(long, global = true, env = "ODIPROBE_OUT", value_name = "DIR")]
    pub out_root: Option<PathBuf>,

    /// Increase log verbosity (-v, -vv)
    #[arg(short, long, global = true, action = ArgAction::Count)]
    pub verbose: u8,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Print a config file with every default filled in
    InitConfig,
    /// Write a synthetic complaint file in the ODI flat-file layout
    Synth(SynthArgs),
    /// Parse, filter, normalize and split the complaint file
    Ingest,
    /// Build or inspect the component-term dictionary
    #[command(subcommand)]
    Dict(DictCommand),
    /// Generate or filter cloze probes
    #[command(subcommand)]
    Probes(ProbesCommand),
    /// Evaluate one backend on the probe set
    Eval(EvalArgs),
    /// Continually pre-train a backend and evaluate at fixed example counts
    Train(TrainArgs),
    /// Merge run reports into one table
    Report(ReportArgs),
    /// Sequence-length descriptives of the train split, raw and per tokenizer
    Stats(StatsArgs),
}

#[derive(Args, Debug)]
pub struct SynthArgs {
    #[arg(long, default_value_t = 1000)]
    pub records: usize,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Subcommand, Debug)]
pub enum DictCommand {
    /// Extract terms from component descriptions and count them in the train split
    Build,
    /// Show the N most frequent terms
    Top {
        n: usize,
        #[arg(long, value_enum, default_value_t = Format::Md)]
        format: Format,
    },
}

#[derive(Subcommand, Debug)]
pub enum ProbesCommand {
    /// One probe per dictionary-term occurrence in the held-out split
    Generate {
        #[arg(long)]
        dict: Option<PathBuf>,
        /// Corpus file; only records tagged heldout are used
        #[arg(long)]
        heldout: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Keep probes whose ground truth is a single token for one backend
    Filter {
        #[arg(long)]
        model: String,
        #[command(flatten)]
        backend: BackendArgs,
        #[arg(long)]
        probes: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args, Debug, Clone, Default)]
pub struct BackendArgs {
    /// Score tables for the mock backend (probe_id → {token: score})
    #[arg(long, value_name = "PATH")]
    pub mock_table: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct EvalArgs {
    #[arg(long)]
    pub backend: String,
    #[command(flatten)]
    pub backend_args: BackendArgs,
    /// Checkpoint directory to evaluate instead of the untouched backend
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    #[arg(long)]
    pub probes: Option<PathBuf>,
    /// Comma-separated k values; overrides `eval.ks`
    #[arg(long, value_delimiter = ',')]
    pub ks: Option<Vec<usize>>,
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    #[arg(long)]
    pub backend: String,
    #[command(flatten)]
    pub backend_args: BackendArgs,
    /// TOTAL:INTERVAL in examples; overrides `[plan]`
    #[arg(long, value_name = "TOTAL:INTERVAL")]
    pub plan: Option<String>,
    #[arg(long)]
    pub probes: Option<PathBuf>,
    /// Run directory
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Continue an interrupted run in the run directory
    #[arg(long)]
    pub resume: bool,
}

#[derive(Args, Debug)]
pub struct ReportArgs {
    /// Comma-separated run directories or report files
    #[arg(long, value_delimiter = ',', required = true)]
    pub runs: Vec<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Md)]
    pub format: Format,
    /// Merge runs evaluated on different probe sets
    #[arg(long)]
    pub force: bool,
    /// Write here instead of stdout
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct StatsArgs {
    /// Backends whose tokenizers get a row; defaults to `backends` in the config
    #[arg(long, value_delimiter = ',')]
    pub backends: Option<Vec<String>>,
    #[command(flatten)]
    pub backend_args: BackendArgs,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Md,
    Csv,
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "info",
        1 => "debug",
        _ => "trace",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .init();
    commands::run(cli)
}
