mod commands;
mod config;
mod manifest;

use std::fmt;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use reason_forge::annotate::AnnotationMode;
use reason_forge::trainer::Objective;

use crate::config::{Config, LlmBackendKind};

#[derive(Debug)]
pub enum CliError {
    /// Bad flags, config or inputs. Exit 1.
    Usage(String),
    /// Library failure; exit 2 when a remote service caused it, else 1.
    Core(reason_forge::Error),
    /// A rerun produced different bytes. Exit 1.
    Mismatch(Vec<String>),
}

impl CliError {
    pub fn io(path: &Path, e: std::io::Error) -> Self {
        CliError::Core(reason_forge::Error::io(path.display().to_string(), e))
    }

    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Core(e) if e.is_external() => 2,
            _ => 1,
        }
    }
}

impl From<reason_forge::Error> for CliError {
    fn from(e: reason_forge::Error) -> Self {
        CliError::Core(e)
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "{m}"),
            CliError::Core(e) => write!(f, "{e}"),
            CliError::Mismatch(paths) => write!(f, "rerun changed {}", paths.join(", ")),
        }
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "reason-forge",
    version,
    about = "Synthetic retrieval data, adapter training and evaluation"
)]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct GlobalArgs {
    /// TOML config file. Flags override it; RF_API_BASE, RF_API_KEY and RF_MODEL sit in between.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Run seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Chat-completions endpoint base URL.
    #[arg(long, global = true)]
    pub api_base: Option<String>,
    #[arg(long, global = true)]
    pub model: Option<String>,
    /// Use the offline mock LLM backend.
    #[arg(long, global = true)]
    pub mock: bool,
    /// Attempts per remote request before giving up.
    #[arg(long, global = true)]
    pub max_attempts: Option<u32>,
    /// Precomputed embedding file (keys q:<id>, qr:<id>, d:<id>) used instead of the configured backend.
    #[arg(long, global = true)]
    pub embeddings: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Filter a corpus and generate synthetic queries for one task.
    Synth(SynthArgs),
    /// Mine top-k candidate documents for each query.
    Mine(MineArgs),
    /// Score candidates with the LLM and split them into positives and hard negatives.
    Annotate(AnnotateArgs),
    /// Attach reasoning-augmented queries to training samples.
    Reason(ReasonArgs),
    /// Embed queries, reasoning queries and documents into one file.
    Embed(EmbedArgs),
    /// Train the adapter head.
    Train(TrainArgs),
    /// nDCG@k of a head on a benchmark.
    Eval(EvalArgs),
    /// Maximum lexical overlap between test and training queries.
    Contaminate(ContaminateArgs),
    /// Dataset statistics.
    Stats(StatsArgs),
    /// Rerun a stage from its manifest and check the outputs are unchanged.
    Rerun(RerunArgs),
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    /// Task name, short (`Bio.`) or long (`biology`).
    #[arg(long)]
    pub task: String,
    /// Document ids never used as sources: one id per line, or JSONL objects with an `id`.
    #[arg(long)]
    pub exclude: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub queries_per_doc: Option<usize>,
    #[arg(long)]
    pub max_docs: Option<usize>,
    /// Skip the relevance filter.
    #[arg(long)]
    pub no_filter: bool,
}

#[derive(Debug, Args)]
pub struct MineArgs {
    #[arg(long)]
    pub queries: Option<PathBuf>,
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    #[arg(long)]
    pub k: Option<usize>,
    /// Search the whole corpus instead of each query's own task.
    #[arg(long)]
    pub all_tasks: bool,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct AnnotateArgs {
    #[arg(long)]
    pub candidates: Option<PathBuf>,
    #[arg(long)]
    pub queries: Option<PathBuf>,
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    #[arg(long)]
    pub mode: Option<AnnotationMode>,
    #[arg(long)]
    pub threshold: Option<u8>,
    /// Append-only JSONL of annotations; pairs already in it are not re-sent.
    #[arg(long)]
    pub ledger: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ReasonArgs {
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long)]
    pub queries: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EmbedArgs {
    #[arg(long)]
    pub queries: Option<PathBuf>,
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    /// Training samples whose reasoning queries are embedded too.
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Per-step report JSONL.
    #[arg(long)]
    pub report: Option<PathBuf>,
    #[arg(long)]
    pub tau: Option<f64>,
    #[arg(long)]
    pub kappa: Option<f64>,
    #[arg(long)]
    pub warmup_steps: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub negatives_per_query: Option<usize>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub max_steps: Option<usize>,
    #[arg(long, value_parser = parse_objective)]
    pub objective: Option<Objective>,
}

fn parse_objective(s: &str) -> Result<Objective, String> {
    match s {
        "ri_infonce" => Ok(Objective::RiInfonce),
        "infonce" => Ok(Objective::Infonce),
        _ => Err(format!("expected ri_infonce or infonce, got {s:?}")),
    }
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Adapter head; the identity head when omitted.
    #[arg(long)]
    pub head: Option<PathBuf>,
    #[arg(long)]
    pub queries: Option<PathBuf>,
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    #[arg(long)]
    pub qrels: Option<PathBuf>,
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ContaminateArgs {
    #[arg(long)]
    pub train: Option<PathBuf>,
    #[arg(long)]
    pub test: Option<PathBuf>,
    /// JSON object mapping each test task to the training tasks it is compared with.
    #[arg(long, conflicts_with = "all_domains")]
    pub domain_map: Option<PathBuf>,
    /// Compare every test query with every training query.
    #[arg(long)]
    pub all_domains: bool,
    #[arg(long)]
    pub top_n: Option<usize>,
    /// Also compute the exhaustive maximum and flag shortlist misses.
    #[arg(long)]
    pub audit: bool,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct StatsArgs {
    /// Raw (pre-annotation) queries.
    #[arg(long)]
    pub queries: Option<PathBuf>,
    /// Training samples.
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    /// Written to stdout when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct RerunArgs {
    #[arg(long)]
    pub manifest: PathBuf,
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Synth(_) => "synth",
            Command::Mine(_) => "mine",
            Command::Annotate(_) => "annotate",
            Command::Reason(_) => "reason",
            Command::Embed(_) => "embed",
            Command::Train(_) => "train",
            Command::Eval(_) => "eval",
            Command::Contaminate(_) => "contaminate",
            Command::Stats(_) => "stats",
            Command::Rerun(_) => "rerun",
        }
    }
}

/// File, then environment, then global flags. A manifest's config replaces
/// the first two on reruns; keys still come from the environment.
pub fn resolve_config(global: &GlobalArgs, preset: Option<Config>) -> Result<Config, CliError> {
    let env = |k: &str| std::env::var(k).ok();
    let mut cfg = match preset {
        Some(mut c) => {
            c.apply_secret_env(env);
            c
        }
        None => {
            let mut c = match &global.config {
                Some(p) => Config::from_file(p)?,
                None => Config::default(),
            };
            c.apply_env(env);
            c
        }
    };
    if let Some(s) = global.seed {
        cfg.seed = s;
    }
    if let Some(b) = &global.api_base {
        cfg.llm.api_base = Some(b.clone());
    }
    if let Some(m) = &global.model {
        cfg.llm.model = Some(m.clone());
    }
    if global.mock {
        cfg.llm.backend = LlmBackendKind::Mock;
    }
    if let Some(n) = global.max_attempts {
        cfg.llm.max_attempts = n;
    }
    if let Some(p) = &global.embeddings {
        cfg.embedding.backend = config::EmbeddingBackendKind::Precomputed;
        cfg.embedding.path = Some(p.clone());
    }
    Ok(cfg)
}

/// Parses `args` (without the program name) and runs the stage.
pub fn run(args: Vec<String>, preset: Option<Config>) -> Result<(), CliError> {
    let cli = Cli::try_parse_from(std::iter::once("reason-forge".to_string()).chain(args.iter().cloned()))
        .map_err(|e| CliError::Usage(e.to_string()))?;
    if let Command::Rerun(r) = &cli.command {
        return commands::rerun(&r.manifest);
    }
    let cfg = resolve_config(&cli.global, preset)?;
    commands::dispatch(&cli.command, cfg, args)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let args: Vec<String> = std::env::args().skip(1).collect();
    // Help and version go to stdout with exit 0; every other parse error is a usage error.
    if let Err(e) = Cli::try_parse_from(std::iter::once("reason-forge".to_string()).chain(args.iter().cloned())) {
        use clap::error::ErrorKind;
        return match e.kind() {
            ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                let _ = e.print();
                ExitCode::SUCCESS
            }
            _ => {
                let _ = e.print();
                ExitCode::from(1)
            }
        };
    }
    match run(args, None) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
