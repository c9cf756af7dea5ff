//! `morphmt` command-line tool.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(name = "morphmt", version, about = "Morphology-aware neural machine translation on a synthetic toy language")]
pub struct Cli {
    /// Run data-parallel work on a single thread.
    #[arg(long, global = true)]
    pub sequential: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a toy language and a parallel corpus.
    SynthData(SynthArgs),
    /// Print a default run configuration as JSON.
    Config(ConfigArgs),
    /// Train a model and write a checkpoint plus per-epoch metrics.
    Train(TrainArgs),
    /// Translate a text file, one sentence per line.
    Translate(TranslateArgs),
    /// Corpus ChrF++ of a hypothesis file against a reference file.
    Evaluate(EvaluateArgs),
    /// Greedy decode of one sentence with the full per-step inflection trace.
    DecodeDebug(DecodeDebugArgs),
    /// Translate monolingual text into synthetic parallel pairs.
    Backtranslate(BacktranslateArgs),
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Output directory (grammar.json, corpus.jsonl, heldout.jsonl).
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub n: usize,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// Add this many source-equals-target pairs (names, places, digits).
    #[arg(long, default_value_t = 0)]
    pub copy_pairs: usize,
    /// Add this many spelled-number pairs.
    #[arg(long, default_value_t = 0)]
    pub numbers: usize,
    /// Substitute foreign terms into this fraction of eligible sentences.
    #[arg(long)]
    pub codeswitch: Option<f64>,
    /// Also write this many held-out pairs unseen in the corpus.
    #[arg(long, default_value_t = 0)]
    pub held_out: usize,
    /// Reuse an existing grammar instead of generating one from the seed.
    #[arg(long)]
    pub grammar: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum Profile {
    Desk,
    Full,
}

#[derive(Debug, Args)]
pub struct ConfigArgs {
    #[arg(long, value_enum, default_value = "desk")]
    pub profile: Profile,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Run configuration JSON; the desk profile when omitted.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub corpus: PathBuf,
    /// Grammar JSON; defaults to grammar.json next to the corpus.
    #[arg(long)]
    pub grammar: Option<PathBuf>,
    /// Held-out pairs scored after every epoch.
    #[arg(long)]
    pub dev: Option<PathBuf>,
    /// Checkpoint path.
    #[arg(long)]
    pub out: PathBuf,
    /// Metrics JSONL path; defaults to the checkpoint path with a
    /// `.metrics.jsonl` suffix.
    #[arg(long)]
    pub metrics: Option<PathBuf>,
    /// sum | gradvac
    #[arg(long)]
    pub method: Option<String>,
    /// Comma-separated subset of xpos, lm_bias, morpho.
    #[arg(long, default_value = "")]
    pub ablate: String,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub max_steps: Option<u64>,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct TranslateArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub beam: Option<usize>,
    /// Score sidecar path; defaults to the output path with `.json` appended.
    #[arg(long)]
    pub sidecar: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub hyp: PathBuf,
    #[arg(long = "ref")]
    pub reference: PathBuf,
}

#[derive(Debug, Args)]
pub struct DecodeDebugArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub sentence: String,
}

#[derive(Debug, Args)]
pub struct BacktranslateArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long = "in")]
    pub input: PathBuf,
    /// Output corpus JSONL.
    #[arg(long)]
    pub out: PathBuf,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let usage = e.use_stderr();
            let _ = e.print();
            return ExitCode::from(if usage { 1 } else { 0 });
        }
    };
    match commands::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
