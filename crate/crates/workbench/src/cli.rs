//! Command-line interface. Exit codes: 0 success, 1 partial failure,
//! 2 invocation or configuration error.

use std::net::SocketAddr;
use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};
use polyprobe_core::analytics::Metric;
use polyprobe_core::embedding::{Aggregation, LengthMode, LengthPolicy};
use polyprobe_core::probe::{ClassifierKind, ProbeConfig};
use polyprobe_core::tasks::SplitSpec;

use crate::pipeline::{self, AnalyzeOptions, ConvertOptions, ProbeOptions, RunManifest};
use crate::service::{self, AppState, DEFAULT_MAX_FRECHET, DEFAULT_MIN_ABS_PEARSON};
use crate::views::SnapshotSource;

pub const EXIT_OK: u8 = 0;
pub const EXIT_PARTIAL: u8 = 1;
pub const EXIT_USAGE: u8 = 2;

#[derive(Debug, Parser)]
#[command(name = "polyprobe", version, about = "Multilingual morphological probing workbench")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Turn CONLL-U treebanks into SentEval-style probing tasks.
    Convert(ConvertArgs),
    /// Train layer-wise probes and append experiment records.
    Probe(ProbeArgs),
    /// Write curves, heatmap, similarity graphs and ANOVA tables.
    Analyze(AnalyzeArgs),
    /// Serve the results API and explorer assets.
    Serve(ServeArgs),
}

#[derive(Debug, Args)]
pub struct ConvertArgs {
    /// Directory (searched recursively) or single .conllu file.
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub output: PathBuf,
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
    /// Train, validation and test fractions.
    #[arg(long, value_delimiter = ',', num_args = 3, default_values_t = [0.8, 0.1, 0.1])]
    pub ratios: Vec<f64>,
    #[arg(long, default_value_t = 3)]
    pub min_class_count: usize,
    /// Always split by stratified sampling, even when train/dev/test files exist.
    #[arg(long)]
    pub ignore_declared_split: bool,
}

#[derive(Debug, Args)]
pub struct ProbeArgs {
    /// Task files, directories of task files, or glob patterns.
    #[arg(long, required = true, num_args = 1..)]
    pub input: Vec<String>,
    #[arg(long)]
    pub output: PathBuf,
    /// hash[:DIM] | file:PATH | http:URL[#MODEL]
    #[arg(long, default_value = "hash")]
    pub provider: String,
    #[arg(long, default_value = "cls")]
    pub aggregation: Aggregation,
    #[arg(long, default_value_t = 512)]
    pub max_tokens: usize,
    #[arg(long, default_value = "truncate")]
    pub length_mode: LengthMode,
    #[arg(long, default_value = "logistic_regression")]
    pub classifier: ClassifierKind,
    #[arg(long, default_value_t = 10)]
    pub epochs: usize,
    #[arg(long, default_value_t = 5)]
    pub runs: usize,
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
    #[arg(long, default_value_t = 64)]
    pub batch_size: usize,
    #[arg(long, default_value_t = 1e-3)]
    pub learning_rate: f64,
    #[arg(long, default_value_t = 1e-2)]
    pub weight_decay: f64,
    #[arg(long, default_value_t = 256)]
    pub mlp_hidden: usize,
    /// Parallel experiment workers.
    #[arg(long, env = "POLYPROBE_WORKERS")]
    pub workers: Option<usize>,
}

#[derive(Debug, Args)]
pub struct AnalyzeArgs {
    /// Records file or directory of .jsonl files.
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub output: PathBuf,
    /// Language metadata CSV.
    #[arg(long)]
    pub meta: Option<PathBuf>,
    #[arg(long, default_value = "weighted_f1")]
    pub metric: Metric,
    #[arg(long, default_value_t = DEFAULT_MAX_FRECHET)]
    pub max_frechet: f64,
    #[arg(long, default_value_t = DEFAULT_MIN_ABS_PEARSON)]
    pub min_abs_pearson: f64,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    /// Records file or directory of .jsonl files.
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub meta: Option<PathBuf>,
    #[arg(long, default_value = "127.0.0.1:8080")]
    pub bind: SocketAddr,
    /// Built explorer assets served under /.
    #[arg(long)]
    pub assets: Option<PathBuf>,
}

fn summarize(run: &RunManifest) {
    for w in &run.warnings {
        eprintln!("warning: {w}");
    }
    for f in &run.failures {
        eprintln!("failed: {f}");
    }
    eprintln!(
        "{}: {} output(s), {} warning(s), {} failure(s)",
        run.stage,
        run.outputs.len(),
        run.warnings.len(),
        run.failures.len()
    );
}

fn usage_error(e: anyhow::Error) -> ExitCode {
    eprintln!("error: {e:#}");
    ExitCode::from(EXIT_USAGE)
}

fn partial_if(failed: bool) -> ExitCode {
    ExitCode::from(if failed { EXIT_PARTIAL } else { EXIT_OK })
}

pub fn run(cli: Cli) -> ExitCode {
    match cli.command {
        Command::Convert(args) => convert(args),
        Command::Probe(args) => probe(args),
        Command::Analyze(args) => analyze(args),
        Command::Serve(args) => serve(args),
    }
}

fn convert(args: ConvertArgs) -> ExitCode {
    let mut split = SplitSpec {
        seed: args.seed,
        respect_declared_split: !args.ignore_declared_split,
        ..SplitSpec::default()
    };
    split.ratios.copy_from_slice(&args.ratios);
    let options = ConvertOptions {
        split,
        min_class_count: args.min_class_count,
    };
    match pipeline::convert(&args.input, &args.output, &options) {
        Ok(run) => {
            summarize(&run);
            let tasks = pipeline::task_count(&run);
            if tasks == 0 {
                eprintln!("error: no probing task could be built");
            }
            partial_if(tasks == 0 || !run.failures.is_empty())
        }
        Err(e) => usage_error(e),
    }
}

fn probe(args: ProbeArgs) -> ExitCode {
    let files = match pipeline::resolve_task_files(&args.input) {
        Ok(f) => f,
        Err(e) => return usage_error(e),
    };
    let provider = match pipeline::build_provider(&args.provider) {
        Ok(p) => p,
        Err(e) => return usage_error(e),
    };
    let options = ProbeOptions {
        aggregation: args.aggregation,
        policy: LengthPolicy {
            max_tokens: args.max_tokens,
            mode: args.length_mode,
        },
        config: ProbeConfig {
            classifier: args.classifier,
            epochs: args.epochs,
            runs: args.runs,
            batch_size: args.batch_size,
            learning_rate: args.learning_rate,
            weight_decay: args.weight_decay,
            mlp_hidden: args.mlp_hidden,
            seed: args.seed,
        },
        workers: args.workers,
    };
    match pipeline::probe(&files, provider.as_ref(), &args.provider, &args.output, &options) {
        Ok(run) => {
            summarize(&run);
            partial_if(!run.failures.is_empty())
        }
        Err(e) => usage_error(e),
    }
}

fn analyze(args: AnalyzeArgs) -> ExitCode {
    let options = AnalyzeOptions {
        metric: args.metric,
        max_frechet: args.max_frechet,
        min_abs_pearson: args.min_abs_pearson,
    };
    match pipeline::analyze(&args.input, args.meta.as_deref(), &args.output, &options) {
        Ok(run) => {
            summarize(&run);
            partial_if(!run.failures.is_empty())
        }
        Err(e) => usage_error(e),
    }
}

fn serve(args: ServeArgs) -> ExitCode {
    let source = SnapshotSource {
        records: args.input,
        meta: args.meta,
    };
    let state = match AppState::from_source(source) {
        Ok(s) => Arc::new(s),
        Err(e) => return usage_error(e),
    };
    let snap = state.snapshot();
    for m in &snap.malformed {
        eprintln!("warning: skipped malformed record {m}");
    }
    for w in &snap.warnings {
        eprintln!("warning: {w}");
    }
    let runtime = match tokio::runtime::Runtime::new() {
        Ok(r) => r,
        Err(e) => return usage_error(e.into()),
    };
    match runtime.block_on(service::serve(state, args.assets, args.bind)) {
        Ok(()) => ExitCode::from(EXIT_OK),
        Err(e) => usage_error(e),
    }
}
