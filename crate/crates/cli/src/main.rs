use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

mod commands;
mod llm;

#[derive(Parser)]
#[command(name = "synthex", version, about = "Synthesis-condition extraction from MOF literature")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Read line-delimited documents into a corpus store.
    Ingest {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Intake report; defaults to `<out>.stats.json`.
        #[arg(long)]
        stats: Option<PathBuf>,
    },
    /// Train or apply the synthesis-paragraph detector.
    #[command(subcommand)]
    Detect(DetectCommand),
    /// Rank demonstrations for one paragraph.
    Retrieve {
        #[arg(long, default_value = "bm25")]
        algo: String,
        #[arg(long, default_value_t = 4)]
        k: usize,
        #[arg(long)]
        pool: PathBuf,
        /// Paragraph id, looked up in the pool or in `--corpus`.
        #[arg(long)]
        query_id: String,
        #[arg(long)]
        corpus: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[command(flatten)]
        embed: EmbedArgs,
    },
    /// Extract conditions from the paragraphs that survive the corpus funnel.
    Extract {
        #[command(flatten)]
        extract: ExtractArgs,
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        pool: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Extract these paragraphs instead of the funnel output.
        #[arg(long = "paragraph")]
        paragraphs: Vec<String>,
        #[arg(long, default_value_t = 1)]
        parallelism: usize,
        #[command(flatten)]
        llm: llm::LlmArgs,
        #[command(flatten)]
        embed: EmbedArgs,
    },
    /// Replace linker proxies (H2L, L1, …) with their full names.
    Resolve {
        #[arg(long)]
        results: PathBuf,
        #[arg(long)]
        corpus: PathBuf,
        /// Defaults to overwriting `--results`.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Per-proxy table; defaults to `<out>.resolution.md`.
        #[arg(long)]
        report: Option<PathBuf>,
        #[arg(long, default_value = "gpt-4-turbo")]
        model: String,
        #[command(flatten)]
        llm: llm::LlmArgs,
    },
    /// Canonicalize names, apply the frequency filter and export features.
    Normalize {
        #[arg(long)]
        results: PathBuf,
        /// Metal, linker and solvent cutoffs (`inf` for none).
        #[arg(long, default_value = "100,135,20")]
        filter: String,
        #[arg(long)]
        export: PathBuf,
        #[arg(long, default_value_t = 90.0)]
        threshold: f64,
        /// Skip the LLM synonym rounds.
        #[arg(long)]
        no_llm: bool,
        /// Normalized results store.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, default_value = "gpt-4-turbo")]
        model: String,
        #[command(flatten)]
        llm: llm::LlmArgs,
    },
    /// Score results against gold records.
    Eval {
        #[arg(long)]
        gold: PathBuf,
        #[arg(long)]
        results: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Leave-one-out experiments over a demonstration pool.
    Sweep {
        #[command(subcommand)]
        what: SweepCommand,
    },
    /// Query a results store.
    Search {
        query: String,
        #[arg(long)]
        db: PathBuf,
        #[arg(long, default_value_t = 20)]
        limit: usize,
        #[arg(long, default_value_t = 0)]
        offset: usize,
    },
    /// Chat-model utilities.
    #[command(subcommand)]
    Llm(LlmCommand),
    /// Run the HTTP service.
    Serve {
        #[arg(long, default_value_t = 8080)]
        port: u16,
        #[arg(long, default_value = "127.0.0.1")]
        host: String,
        /// Initial demonstration pool.
        #[arg(long)]
        pool: Option<PathBuf>,
        /// Append-only event log; replayed on start.
        #[arg(long)]
        log: Option<PathBuf>,
        /// Detector model used to label ingested paragraphs.
        #[arg(long)]
        model: Option<PathBuf>,
        /// Web UI build directory served under /app.
        #[arg(long)]
        static_dir: Option<PathBuf>,
        #[arg(long, default_value_t = 2)]
        max_jobs: usize,
        #[command(flatten)]
        llm: llm::LlmArgs,
        #[command(flatten)]
        embed: EmbedArgs,
    },
    /// Ingest → detect → extract → resolve → normalize → eval in one go.
    Pipeline {
        #[arg(long)]
        corpus: PathBuf,
        /// Detector model.
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        pool: PathBuf,
        #[arg(long)]
        gold: Option<PathBuf>,
        /// Artifact directory.
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value = "100,135,20")]
        filter: String,
        #[arg(long)]
        no_resolve: bool,
        #[arg(long, default_value_t = 1)]
        parallelism: usize,
        #[command(flatten)]
        extract: ExtractArgs,
        #[command(flatten)]
        llm: llm::LlmArgs,
        #[command(flatten)]
        embed: EmbedArgs,
    },
}

#[derive(Subcommand)]
enum DetectCommand {
    /// Stratified k-fold cross-validation, then a final fit on all samples.
    Train {
        #[arg(long)]
        samples: PathBuf,
        #[arg(long, default_value_t = 5)]
        folds: usize,
        #[arg(long, default_value = "detector.bin")]
        out: PathBuf,
        /// Cross-validation report; defaults to `<out>.cv.json`.
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Label every corpus paragraph and store the labels in the corpus.
    Run {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        corpus: PathBuf,
        /// Defaults to updating `--corpus` in place.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Subcommand)]
enum SweepCommand {
    /// F1/ACC against the number of shots (0 = zero-shot).
    K {
        #[arg(long, value_delimiter = ',', default_value = "0,1,2,3,4,5")]
        values: Vec<usize>,
        #[command(flatten)]
        common: SweepArgs,
    },
    /// F1/ACC against demonstration-pool size, sub-pools sampled per seed.
    Pool {
        #[arg(long, value_delimiter = ',')]
        sizes: Vec<usize>,
        #[arg(long, default_value_t = 4)]
        k: usize,
        #[command(flatten)]
        common: SweepArgs,
    },
    /// Same shots, different prompt orderings.
    Ordering {
        #[arg(long, value_delimiter = ',', default_value = "asc,desc,pool,random:0")]
        orderings: Vec<String>,
        #[arg(long, default_value_t = 4)]
        k: usize,
        #[command(flatten)]
        common: SweepArgs,
    },
}

#[derive(Args)]
struct SweepArgs {
    #[arg(long)]
    pool: PathBuf,
    #[arg(long, default_value = "bm25")]
    algo: String,
    #[arg(long, value_delimiter = ',', default_value = "0,1,2")]
    seeds: Vec<u64>,
    #[arg(long, default_value = "gpt-4-turbo")]
    model: String,
    #[arg(long)]
    no_knowledge: bool,
    /// Report file (scoring-policy header + JSON).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Plot-ready table (TSV).
    #[arg(long)]
    table: Option<PathBuf>,
    #[arg(long, default_value_t = 1)]
    parallelism: usize,
    #[command(flatten)]
    llm: llm::LlmArgs,
    #[command(flatten)]
    embed: EmbedArgs,
}

#[derive(Subcommand)]
enum LlmCommand {
    /// Send one tiny request and print the reply and usage.
    Ping {
        #[arg(long, default_value = "gpt-4-turbo")]
        model: String,
        #[command(flatten)]
        llm: llm::LlmArgs,
    },
}

#[derive(Args, Clone)]
struct ExtractArgs {
    #[arg(long, default_value = "few")]
    mode: String,
    #[arg(long, default_value_t = 4)]
    k: usize,
    #[arg(long, default_value = "bm25")]
    algo: String,
    #[arg(long, default_value = "asc")]
    ordering: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value = "gpt-4-turbo")]
    model_name: String,
    #[arg(long, default_value_t = 1024)]
    max_output_tokens: u32,
    /// Drop the definitions and constraints sections (ablation).
    #[arg(long)]
    no_knowledge: bool,
    /// Prompt template file; defaults to the built-in one.
    #[arg(long)]
    template: Option<PathBuf>,
}

#[derive(Args, Clone, Default)]
struct EmbedArgs {
    /// Embedding endpoint: POST {"texts": [...]} → {"vectors": [[...]]}.
    #[arg(long)]
    embed_url: Option<String>,
    /// Vector dimension of `--embed-url`, or of the offline hashing
    /// embedder when no URL is given.
    #[arg(long, default_value_t = 256)]
    embed_dim: usize,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match commands::run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
