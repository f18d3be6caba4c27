use std::collections::HashMap;
use std::fs::File;
use std::io::{self, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;
use std::time::{Duration, Instant};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use siftrank::graphrank::{
    build_clusters, compute_function_weights, generate_call_chains, ranked_chains, read_function_list,
    score_clusters, write_cluster_table, CallGraph,
};
use siftrank::preprocess::{summarize_corpus, SummaryOptions, SummaryTemplate};
use siftrank::rankers::{
    ChatClient, LlmRanker, NoiseKind, NoiseModel, OracleRanker, RemoteConfig, DEFAULT_API_KEY_ENV, DEFAULT_BASE_URL,
};
use siftrank::report::RankerInfo;
use siftrank::{
    load_documents, run_ranking, Document, InflectionMethod, InputFormat, RankConfig, RankError, RunReport, Statistic,
};

#[derive(Parser)]
#[command(name = "siftrank", version, about = "Rank large document sets against a query with a batch ranker")]
struct Cli {
    /// More log output (-v info, -vv debug).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Rank documents and write a JSON run report.
    Rank(Box<RankArgs>),
    /// Build call-chain documents from a call graph and a changed-function list.
    Chains(ChainsArgs),
    /// Weight functions from ranked chains and write the cluster table.
    Cluster(ClusterArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum FormatArg {
    Auto,
    Jsonl,
    Text,
}

impl From<FormatArg> for InputFormat {
    fn from(f: FormatArg) -> Self {
        match f {
            FormatArg::Auto => InputFormat::Auto,
            FormatArg::Jsonl => InputFormat::JsonLines,
            FormatArg::Text => InputFormat::Text,
        }
    }
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum RankerKind {
    Llm,
    Oracle,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Preset {
    General,
    Security,
}

#[derive(Clone, Copy, ValueEnum)]
enum TemplateArg {
    Function,
    Query,
}

#[derive(Args)]
#[command(group = clap::ArgGroup::new("query_source").required(true).args(["query", "query_file"]))]
struct RankArgs {
    /// Documents: JSON lines (`id`, `text`, optional `summary`) or one document per line.
    input: PathBuf,
    /// Query the documents are ranked against.
    #[arg(short, long)]
    query: Option<String>,
    /// Read the query from a file.
    #[arg(long, value_name = "PATH")]
    query_file: Option<PathBuf>,
    /// Report destination; stdout when omitted.
    #[arg(short, long)]
    output: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "auto")]
    format: FormatArg,

    /// `security` switches the default batch size to 5.
    #[arg(long, value_enum, default_value = "general")]
    preset: Preset,
    #[arg(short = 's', long)]
    batch_size: Option<usize>,
    #[arg(short = 't', long, default_value_t = 50)]
    max_trials: usize,
    #[arg(short = 'w', long, default_value_t = 5)]
    window: usize,
    #[arg(long, default_value = "mean")]
    statistic: Statistic,
    #[arg(long, default_value = "elbow")]
    inflection: InflectionMethod,
    /// Allowed spread of inflection indices within the window.
    #[arg(long, default_value_t = 0)]
    tolerance: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Batches ranked at the same time.
    #[arg(long, default_value_t = 1)]
    concurrency: usize,
    /// Extra attempts per failed batch.
    #[arg(long, default_value_t = 3)]
    retries: u32,
    /// Abort rather than exceed this many ranker calls.
    #[arg(long)]
    max_requests: Option<u64>,

    #[arg(long, value_enum, default_value = "llm")]
    ranker: RankerKind,
    /// Oracle ground truth: one document id per line, most relevant first.
    #[arg(long, value_name = "PATH")]
    oracle_order: Option<PathBuf>,
    /// Oracle noise: `none`, `swap:P` or `shuffle:P`.
    #[arg(long, default_value = "none", value_parser = parse_noise)]
    noise: (NoiseKind, f64),
    #[arg(long, default_value_t = 0)]
    noise_seed: u64,

    #[arg(long, default_value = "gpt-4o-mini")]
    model: String,
    #[arg(long, default_value = DEFAULT_BASE_URL)]
    base_url: String,
    /// Environment variable holding the API key.
    #[arg(long, default_value = DEFAULT_API_KEY_ENV)]
    api_key_env: String,
    #[arg(long)]
    reasoning_effort: Option<String>,
    #[arg(long)]
    temperature: Option<f32>,
    /// Client-side request rate limit.
    #[arg(long)]
    requests_per_second: Option<f64>,
    #[arg(long, default_value_t = 120)]
    timeout_secs: u64,

    /// Summarize documents before ranking and rank the summaries.
    #[arg(long)]
    summarize: bool,
    #[arg(long, value_enum, default_value = "function")]
    summary_template: TemplateArg,
    /// Re-summarize documents that already carry a summary.
    #[arg(long)]
    force_summaries: bool,
    /// Ask the model to explain each batch ordering and keep the explanations.
    #[arg(long)]
    reasoning: bool,
}

#[derive(Args)]
struct ChainsArgs {
    /// Edge list, one `caller callee` pair per line.
    #[arg(long)]
    graph: PathBuf,
    /// Changed functions, one id per line.
    #[arg(long)]
    changed: PathBuf,
    /// Per-function text (JSON lines with `id`, `text`, optional `summary`).
    #[arg(long)]
    texts: Option<PathBuf>,
    /// JSON-lines destination; stdout when omitted.
    #[arg(short, long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct ClusterArgs {
    /// Run report from ranking the chain documents.
    #[arg(long)]
    report: PathBuf,
    #[arg(long)]
    graph: PathBuf,
    /// Ignore chains that did not survive past the first iteration.
    #[arg(long)]
    survivors_only: bool,
    #[arg(long, value_delimiter = ',', default_value = "1,2,3")]
    diameters: Vec<usize>,
    /// Add a `members` column.
    #[arg(long)]
    members: bool,
    /// CSV destination; stdout when omitted.
    #[arg(short, long)]
    output: Option<PathBuf>,
}

fn parse_noise(s: &str) -> Result<(NoiseKind, f64), String> {
    if s == "none" {
        return Ok((NoiseKind::None, 0.0));
    }
    let (kind, p) = s.split_once(':').ok_or_else(|| format!("expected none, swap:P or shuffle:P, got `{s}`"))?;
    let kind = match kind {
        "swap" => NoiseKind::AdjacentSwap,
        "shuffle" => NoiseKind::UniformShuffle,
        other => return Err(format!("unknown noise kind `{other}`")),
    };
    let p: f64 = p.parse().map_err(|_| format!("bad noise parameter `{p}`"))?;
    if !(0.0..=1.0).contains(&p) {
        return Err(format!("noise parameter must lie in [0, 1], got {p}"));
    }
    Ok((kind, p))
}

fn output(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(
            File::create(p).with_context(|| format!("cannot create {}", p.display()))?,
        )),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn open(path: &Path) -> Result<BufReader<File>> {
    Ok(BufReader::new(File::open(path).with_context(|| format!("cannot open {}", path.display()))?))
}

fn rank_config(args: &RankArgs) -> Result<RankConfig> {
    let base = match args.preset {
        Preset::General => RankConfig::default(),
        Preset::Security => RankConfig::security_preset(),
    };
    let config = RankConfig {
        batch_size: args.batch_size.unwrap_or(base.batch_size),
        max_trials: args.max_trials,
        stability_window: args.window,
        statistic: args.statistic,
        inflection_method: args.inflection,
        inflection_tolerance: args.tolerance,
        concurrency_cap: args.concurrency,
        rng_seed: args.seed,
        retry_limit: args.retries,
        max_requests: args.max_requests,
    };
    config.validate()?;
    Ok(config)
}

fn remote_client(args: &RankArgs) -> Result<Arc<ChatClient>> {
    let mut remote = RemoteConfig::from_env(&args.base_url, &args.model, &args.api_key_env)?;
    remote.temperature = args.temperature;
    remote.reasoning_effort = args.reasoning_effort.clone();
    remote.requests_per_second = args.requests_per_second;
    remote.timeout = Duration::from_secs(args.timeout_secs);
    let client = ChatClient::new(remote)?;
    client.check_auth().context("API credentials rejected")?;
    Ok(Arc::new(client))
}

fn oracle(args: &RankArgs, docs: &[Document]) -> Result<OracleRanker> {
    let path = args.oracle_order.as_deref().context("--ranker oracle needs --oracle-order")?;
    // ids may contain spaces (chain ids do), so this is one id per line verbatim
    let order: Vec<String> = std::fs::read_to_string(path)
        .with_context(|| format!("cannot read {}", path.display()))?
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .map(String::from)
        .collect();
    let known: std::collections::HashSet<&str> = order.iter().map(String::as_str).collect();
    if let Some(missing) = docs.iter().find(|d| !known.contains(d.id.as_str())) {
        bail!("document `{}` is not in the oracle order file", missing.id);
    }
    let (kind, p) = args.noise;
    Ok(OracleRanker::new(order, NoiseModel::new(kind, p, args.noise_seed)?))
}

fn cmd_rank(args: &RankArgs) -> Result<()> {
    let mut docs = load_documents(&args.input, args.format.into())
        .with_context(|| format!("cannot load {}", args.input.display()))?;
    let query = match (&args.query, &args.query_file) {
        (Some(q), _) => q.clone(),
        (None, Some(p)) => std::fs::read_to_string(p).with_context(|| format!("cannot read {}", p.display()))?,
        (None, None) => unreachable!("clap requires a query source"),
    };
    let query = query.trim().to_string();
    if query.is_empty() {
        bail!("query is empty");
    }
    let config = rank_config(args)?;

    // credentials are checked before anything is spent
    let client = if args.ranker == RankerKind::Llm || args.summarize {
        Some(remote_client(args)?)
    } else {
        None
    };
    let oracle = match args.ranker {
        RankerKind::Oracle => Some(oracle(args, &docs)?),
        RankerKind::Llm => None,
    };

    let started = Instant::now();
    let summarization = match (&client, args.summarize) {
        (Some(client), true) => {
            let template = match args.summary_template {
                TemplateArg::Function => SummaryTemplate::Function,
                TemplateArg::Query => SummaryTemplate::QueryFocused,
            };
            let options = SummaryOptions {
                template,
                query: Some(query.clone()),
                concurrency: config.concurrency_cap,
                retry_limit: config.retry_limit,
                force: args.force_summaries,
                ..SummaryOptions::default()
            };
            let report = summarize_corpus(&mut docs, client.as_ref(), &options)?;
            log::info!(
                "summarized {} documents ({} skipped, {} failed)",
                report.summarized,
                report.skipped,
                report.failed.len()
            );
            Some(report)
        }
        _ => None,
    };

    let (outcome, info) = match (&oracle, &client) {
        (Some(oracle), _) => (run_ranking(&docs, &query, &config, oracle), RankerInfo { kind: "oracle".into(), model: None }),
        (None, Some(client)) => {
            let remote = client.config();
            let ranker = LlmRanker::new(client.clone())
                .with_reasoning(args.reasoning)
                .with_backoff(remote.backoff_base, remote.backoff_max);
            (
                run_ranking(&docs, &query, &config, &ranker),
                RankerInfo { kind: "llm".into(), model: Some(args.model.clone()) },
            )
        }
        (None, None) => unreachable!("an llm run always has a client"),
    };
    let outcome = match outcome {
        Ok(o) => o,
        Err(RankError::Aborted(diag)) => {
            bail!(
                "run aborted in iteration {}, trial {} after {} ranker calls ({} iterations complete): {}",
                diag.iteration,
                diag.trial,
                diag.ranker_calls,
                diag.completed.len(),
                diag.cause
            );
        }
        Err(e) => return Err(e.into()),
    };

    let mut report = RunReport::new(query, config, info, outcome);
    report.summarization = summarization;
    if args.ranker == RankerKind::Llm {
        report.wall_time_ms = Some(started.elapsed().as_millis() as u64);
    }
    let mut out = output(args.output.as_deref())?;
    report.write_json(&mut out)?;
    out.flush()?;
    log::info!(
        "ranked {} documents in {} iterations with {} ranker calls",
        report.corpus_size,
        report.iterations.len(),
        report.usage.requests
    );
    Ok(())
}

fn cmd_chains(args: &ChainsArgs) -> Result<()> {
    let graph = CallGraph::read_edge_list(open(&args.graph)?).with_context(|| format!("reading {}", args.graph.display()))?;
    let changed = read_function_list(open(&args.changed)?).with_context(|| format!("reading {}", args.changed.display()))?;
    let texts: HashMap<String, String> = match &args.texts {
        Some(p) => load_documents(p, InputFormat::JsonLines)
            .with_context(|| format!("cannot load {}", p.display()))?
            .into_iter()
            .map(|d| {
                let text = d.ranking_text().to_string();
                (d.id, text)
            })
            .collect(),
        None => HashMap::new(),
    };
    let chains = generate_call_chains(&graph, &changed, &texts)?;
    let mut out = output(args.output.as_deref())?;
    for chain in &chains {
        serde_json::to_writer(&mut out, &serde_json::json!({"id": chain.id(), "text": chain.text}))?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    log::info!("{} chains from {} changed functions", chains.len(), changed.len());
    Ok(())
}

fn cmd_cluster(args: &ClusterArgs) -> Result<()> {
    let report = RunReport::read_json(open(&args.report)?).with_context(|| format!("reading {}", args.report.display()))?;
    let graph = CallGraph::read_edge_list(open(&args.graph)?).with_context(|| format!("reading {}", args.graph.display()))?;
    let outcome = report.to_outcome();
    let mut chains = ranked_chains(&outcome)?;
    chains.retain(|c| {
        let unknown: Vec<&String> = c.functions.iter().filter(|f| !graph.contains(f)).collect();
        if unknown.is_empty() {
            return true;
        }
        log::warn!("chain {:?} references unknown function(s) {unknown:?}; skipped", c.functions);
        false
    });
    let weights = compute_function_weights(&chains, args.survivors_only);
    if weights.is_empty() {
        log::warn!("no weighted functions; the cluster table is empty");
    }
    let clusters = score_clusters(build_clusters(&graph, &weights, &args.diameters));
    let mut out = output(args.output.as_deref())?;
    write_cluster_table(&mut out, &clusters, args.members)?;
    out.flush()?;
    log::info!("{} clusters from {} weighted functions", clusters.len(), weights.len());
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    let result = match &cli.command {
        Command::Rank(args) => cmd_rank(args),
        Command::Chains(args) => cmd_chains(args),
        Command::Cluster(args) => cmd_cluster(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
