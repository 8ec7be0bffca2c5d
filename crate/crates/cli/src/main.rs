//! `pathhunter` command-line driver.

mod commands;
mod config;
mod load;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use thiserror::Error;

/// Seed used by randomized commands when neither `--seed` nor the config
/// file gives one.
pub const DEFAULT_SEED: u64 = 0;

#[derive(Debug, Error)]
pub enum CliError {
    /// Bad flags, config or missing files: exit status 1.
    #[error("{0}")]
    Validation(String),
    /// Failure while processing valid input: exit status 2.
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            Self::Validation(_) => 1,
            Self::Runtime(_) => 2,
        }
    }
}

macro_rules! runtime_from {
    ($($t:ty),*) => {$(
        impl From<$t> for CliError {
            fn from(e: $t) -> Self {
                Self::Runtime(e.to_string())
            }
        }
    )*};
}

runtime_from!(
    pathhunter::kg::KgError,
    pathhunter::dialogue::DialogueError,
    pathhunter::critic::CriticError,
    pathhunter::corrupt::CorruptError,
    pathhunter::embed::EmbedError,
    pathhunter::retrieve::RetrieveError,
    pathhunter::metrics::MetricsError,
    std::io::Error,
    serde_json::Error
);

#[derive(Debug, Parser)]
#[command(
    name = "pathhunter",
    version,
    about = "Detect and repair hallucinated entity mentions in KG-grounded dialogue",
    after_help = "Exit status: 0 success, 1 invalid arguments or configuration, 2 runtime failure.\n\
                  Defaults marked (paper) follow the published setup; (artifact) are choices of this tool."
)]
pub struct Cli {
    /// JSON file of settings; command-line flags take precedence over it.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,

    /// Worker threads for per-record commands. Output order and content do
    /// not depend on it [default: 1] (artifact)
    #[arg(long, global = true, value_name = "N")]
    pub workers: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Knowledge-graph utilities.
    Kg {
        #[command(subcommand)]
        command: KgCommand,
    },
    /// Print the k-hop neighbourhood of one or more entities as JSON.
    Subgraph(SubgraphArgs),
    /// Build a synthetic hallucination dataset from clean dialogues.
    Corrupt(CorruptArgs),
    /// Train DistMult embeddings and write a snapshot.
    Train(TrainArgs),
    /// Label every entity mention of each response.
    Critique(CritiqueArgs),
    /// Replace flagged mentions with entities retrieved from the graph.
    Refine(RefineArgs),
    /// Ranking metrics, BLEU and hallucination rate.
    Eval(EvalArgs),
}

#[derive(Debug, Subcommand)]
pub enum KgCommand {
    /// Entity, relation and triple counts as JSON.
    Stats(GraphArgs),
}

#[derive(Debug, Clone, Args)]
pub struct GraphArgs {
    /// Triple file, `subject<TAB>predicate<TAB>object` per line.
    #[arg(long, value_name = "FILE")]
    pub kg: Option<PathBuf>,
    /// Alias file, `entity<TAB>surface` per line. Its entities join the
    /// vocabulary even without edges [default: canonical names only] (artifact)
    #[arg(long, value_name = "FILE")]
    pub aliases: Option<PathBuf>,
    /// Entity-type file, `entity<TAB>type` per line.
    #[arg(long, value_name = "FILE")]
    pub types: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum OnOff {
    On,
    Off,
}

#[derive(Debug, Args)]
pub struct SubgraphArgs {
    #[command(flatten)]
    pub graph: GraphArgs,
    /// Anchor entity name; repeat for several.
    #[arg(long = "anchor", value_name = "NAME", required = true)]
    pub anchors: Vec<String>,
    /// Hops [default: 2] (paper: grounding paths are 1- or 2-hop)
    #[arg(long)]
    pub k: Option<usize>,
}

#[derive(Debug, Args)]
pub struct CorruptArgs {
    #[command(flatten)]
    pub graph: GraphArgs,
    /// Clean dialogues, JSON Lines.
    #[arg(long = "in", value_name = "FILE")]
    pub input: PathBuf,
    /// Fraction of records given extrinsic corruption [default: 0.6] (paper: 60/40 split)
    #[arg(long)]
    pub frac: Option<f64>,
    /// Root seed [default: 0] (artifact)
    #[arg(long)]
    pub seed: Option<u64>,
    /// What to do when a record's strategy is inapplicable:
    /// fallback | drop [default: fallback] (artifact)
    #[arg(long)]
    pub policy: Option<String>,
    /// Radius of the subgraph replacements must avoid [default: 1] (paper: extrinsic w.r.t. the 1-hop subgraph)
    #[arg(long)]
    pub hops: Option<usize>,
    /// Anchor source: grounding | last_turn | auto [default: auto] (artifact)
    #[arg(long)]
    pub anchors: Option<String>,
    /// Output JSON Lines [default: stdout]
    #[arg(long, value_name = "FILE")]
    pub out: Option<PathBuf>,
    /// Write the summary JSON here instead of stderr.
    #[arg(long, value_name = "FILE")]
    pub summary: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub graph: GraphArgs,
    /// Embedding dimension [default: 64] (artifact)
    #[arg(long)]
    pub dim: Option<usize>,
    /// Negative sampler: uniform | sans:K | inbatch [default: uniform] (paper: uniform over all entities)
    #[arg(long)]
    pub sampler: Option<String>,
    /// Negatives per positive [default: 50] (paper: 50 negatives)
    #[arg(long)]
    pub neg: Option<usize>,
    /// Epochs [default: 100] (artifact)
    #[arg(long)]
    pub epochs: Option<usize>,
    /// Root seed [default: 0] (artifact)
    #[arg(long)]
    pub seed: Option<u64>,
    /// Learning rate [default: 0.01] (artifact)
    #[arg(long)]
    pub lr: Option<f64>,
    /// Positives per batch [default: 32] (artifact)
    #[arg(long)]
    pub batch_size: Option<usize>,
    /// Optimizer: sgd | adam [default: sgd] (artifact)
    #[arg(long)]
    pub optimizer: Option<String>,
    /// L2 penalty on touched rows [default: 0.0001] (artifact)
    #[arg(long)]
    pub l2: Option<f64>,
    /// Relational message-passing layers applied after training [default: none] (artifact)
    #[arg(long)]
    pub enrich_layers: Option<usize>,
    /// Snapshot output path.
    #[arg(long, value_name = "FILE")]
    pub out: PathBuf,
    /// Write the per-epoch loss trace as CSV.
    #[arg(long, value_name = "FILE")]
    pub loss_csv: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct CritiqueArgs {
    #[command(flatten)]
    pub graph: GraphArgs,
    /// Dialogues, JSON Lines.
    #[arg(long = "in", value_name = "FILE")]
    pub input: PathBuf,
    /// Subgraph radius for the extrinsic test [default: 1] (paper: 1-hop subgraph)
    #[arg(long)]
    pub k: Option<usize>,
    /// Intrinsic check: undirected | directed [default: undirected] (artifact)
    #[arg(long)]
    pub mode: Option<String>,
    /// Relation phrase lexicon, `relation<TAB>phrase` per line (directed mode).
    #[arg(long, value_name = "FILE")]
    pub lexicon: Option<PathBuf>,
    /// Anchor source: grounding | last_turn | auto [default: auto] (artifact)
    #[arg(long)]
    pub anchors: Option<String>,
    /// Output JSON Lines [default: stdout]
    #[arg(long, value_name = "FILE")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct RefineArgs {
    #[command(flatten)]
    pub graph: GraphArgs,
    /// Dialogues, JSON Lines.
    #[arg(long = "in", value_name = "FILE")]
    pub input: PathBuf,
    /// Embedding snapshot.
    #[arg(long, value_name = "FILE")]
    pub emb: Option<PathBuf>,
    /// Retrieval radius [default: 2] (paper: grounding paths are 1- or 2-hop)
    #[arg(long)]
    pub k: Option<usize>,
    /// Critic radius used to flag mentions [default: 1] (paper: 1-hop subgraph)
    #[arg(long)]
    pub critic_k: Option<usize>,
    /// Query mode: oracle | inferred | external [default: oracle] (artifact)
    #[arg(long)]
    pub mode: Option<String>,
    /// Query vectors in snapshot format, one per flagged mention in input order (external mode).
    #[arg(long, value_name = "FILE")]
    pub queries: Option<PathBuf>,
    /// Add each retrieved entity to the anchors [default: on] (paper: order-dependent queries)
    #[arg(long)]
    pub chain: Option<OnOff>,
    /// Anchor source: grounding | last_turn | auto [default: auto] (artifact)
    #[arg(long)]
    pub anchors: Option<String>,
    /// Output JSON Lines [default: stdout]
    #[arg(long, value_name = "FILE")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[command(flatten)]
    pub graph: GraphArgs,
    /// Snapshot to evaluate on `--holdout`.
    #[arg(long, value_name = "FILE")]
    pub emb: Option<PathBuf>,
    /// Held-out triples for link prediction.
    #[arg(long, value_name = "FILE")]
    pub holdout: Option<PathBuf>,
    /// Unfiltered ranking [default: filtered by every known triple] (paper: filtered Hits@k)
    #[arg(long)]
    pub raw: bool,
    /// Query slots: object | subject | both [default: object] (paper: ⟨c, q, ?⟩ queries)
    #[arg(long)]
    pub slots: Option<String>,
    /// Rank among the K-hop neighbourhood of the query anchor instead of all entities.
    #[arg(long, value_name = "K")]
    pub subgraph_k: Option<usize>,
    /// Write per-query ranks as CSV.
    #[arg(long, value_name = "FILE")]
    pub ranks_csv: Option<PathBuf>,
    /// Dialogue JSON Lines for BLEU (against `gold_response`) and critic hallucination rate.
    /// Uses `refined_response` when present, else `response`.
    #[arg(long = "in", value_name = "FILE")]
    pub input: Option<PathBuf>,
    /// Critic radius [default: 1] (paper: 1-hop subgraph)
    #[arg(long)]
    pub k: Option<usize>,
    /// BLEU level: corpus | sentence [default: corpus] (artifact)
    #[arg(long)]
    pub bleu_level: Option<String>,
    /// Output JSON [default: stdout]
    #[arg(long, value_name = "FILE")]
    pub out: Option<PathBuf>,
}

fn run(cli: Cli) -> Result<(), CliError> {
    let cfg = match &cli.config {
        Some(p) => config::RunConfig::load(p)?,
        None => config::RunConfig::default(),
    };
    let workers = config::pick(cli.workers, cfg.workers, 1);
    if workers == 0 {
        return Err(CliError::Validation("--workers must be at least 1".into()));
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| CliError::Runtime(e.to_string()))?;
    pool.install(|| match cli.command {
        Command::Kg { command: KgCommand::Stats(a) } => commands::kg_stats(a, &cfg),
        Command::Subgraph(a) => commands::subgraph(a, &cfg),
        Command::Corrupt(a) => commands::corrupt(a, &cfg),
        Command::Train(a) => commands::train(a, &cfg),
        Command::Critique(a) => commands::critique(a, &cfg),
        Command::Refine(a) => commands::refine(a, &cfg),
        Command::Eval(a) => commands::eval(a, &cfg),
    })
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
