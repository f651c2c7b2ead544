use std::fs;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use claimlens_core::annotation::{load_sample_jsonl, AnnotationStore};
use claimlens_core::corpus::ParagraphRecord;
use claimlens_core::finetune::{export_training_jsonl, read_labeled_jsonl};
use claimlens_core::gateway::Gateway;
use claimlens_core::pipeline::{
    classify_stage, ingest_stage, read_gold, read_jsonl, run_benchmark, run_social_pipeline,
    sample_stage, write_json, write_jsonl, ConfigOverrides, FunnelReport, PipelineConfig,
    ResultRecord,
};
use claimlens_core::prompts::PromptStyle;
use claimlens_core::report::{render_report, EvaluationLevel, EvaluationReport, ReportFormat};
use clap::{Args, Parser, Subcommand};
use tracing_subscriber::EnvFilter;

/// Climate-claim classification pipeline and evaluation harness.
#[derive(Debug, Parser)]
#[command(name = "claimlens", version)]
struct Cli {
    /// TOML run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Taxonomy JSON file (defaults to the bundled 27-label taxonomy).
    #[arg(long, global = true)]
    taxonomy: Option<PathBuf>,
    /// Seed for invalid-response replacement and sampling.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// rubric, compact-qa or finetune.
    #[arg(long, global = true)]
    prompt_style: Option<PromptStyle>,
    /// Evaluation level: super or sub.
    #[arg(long, global = true)]
    level: Option<EvaluationLevel>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Filter a JSON-lines article corpus and split it into paragraphs.
    Ingest {
        /// Article corpus, one JSON object per line.
        #[arg(long = "in")]
        input: PathBuf,
        /// Paragraph JSON-lines output.
        #[arg(long)]
        out: PathBuf,
        /// Where to write the stage counts.
        #[arg(long)]
        funnel: Option<PathBuf>,
    },
    /// Classify paragraphs with one backend.
    Classify {
        /// Paragraph JSON lines from `ingest`.
        #[arg(long = "in")]
        input: PathBuf,
        /// Classified paragraphs, one JSON object per line.
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        backend: BackendChoice,
        /// Raw-response journal used to resume interrupted runs.
        #[arg(long)]
        journal: Option<PathBuf>,
    },
    /// Score every configured backend against a gold dataset.
    Evaluate {
        /// CSV or JSON-lines file with text and label columns.
        #[arg(long)]
        gold: PathBuf,
        /// Report JSON output.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Directory for per-backend results.
        #[arg(long)]
        results_dir: Option<PathBuf>,
    },
    /// Draw the stratified expert-review sample.
    Sample {
        /// Classified paragraphs from `classify` or `run`.
        #[arg(long = "in")]
        input: PathBuf,
        /// Sample size (even); half is drawn from no-claim paragraphs.
        #[arg(long)]
        n: Option<usize>,
        /// Sample records with empty annotation slots.
        #[arg(long)]
        out: PathBuf,
        /// Where to write the sample plan.
        #[arg(long)]
        plan: Option<PathBuf>,
    },
    /// Run ingest, classify and sample in one go.
    Run {
        /// Article corpus, one JSON object per line.
        #[arg(long)]
        corpus: PathBuf,
        /// Directory for the journal, results, funnel and sample files.
        #[arg(long)]
        out_dir: PathBuf,
        #[command(flatten)]
        backend: BackendChoice,
        /// Sample size (even).
        #[arg(long)]
        n: Option<usize>,
    },
    /// Write chat-message JSONL for fine-tuning.
    ExportFinetune {
        /// JSON lines with `text`, `label` and optional `paragraph_id`.
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Serve the annotation API (and optionally a static UI).
    Serve {
        /// Sample records from `sample` or `run`.
        #[arg(long)]
        sample: PathBuf,
        /// Directory holding the annotation log and snapshot.
        #[arg(long)]
        store: PathBuf,
        #[arg(long, default_value_t = 8080)]
        port: u16,
        #[arg(long, default_value = "127.0.0.1")]
        host: String,
        /// Directory of static UI assets served at `/`.
        #[arg(long)]
        ui: Option<PathBuf>,
    },
    /// Render a saved evaluation report.
    Report {
        /// Report JSON written by `evaluate --out`.
        #[arg(long = "in")]
        input: PathBuf,
        /// table or json.
        #[arg(long, default_value = "table")]
        format: ReportFormat,
    },
}

#[derive(Debug, Args)]
struct BackendChoice {
    /// Backend name from the config (defaults to the first one).
    #[arg(long)]
    backend: Option<String>,
}

fn load_config(cli: &Cli) -> Result<PipelineConfig> {
    let mut config = match &cli.config {
        Some(path) => PipelineConfig::load(path)?,
        None => PipelineConfig::default(),
    };
    config.apply(&ConfigOverrides {
        taxonomy: cli.taxonomy.clone(),
        prompt_style: cli.prompt_style,
        seed: cli.seed,
        level: cli.level,
        ..Default::default()
    });
    Ok(config)
}

fn pick_gateway(config: &PipelineConfig, choice: &BackendChoice) -> Result<Gateway> {
    let backend = match &choice.backend {
        Some(name) => config
            .backends
            .iter()
            .find(|b| &b.name == name)
            .with_context(|| format!("no backend named {name:?} in the config"))?,
        None => config
            .backends
            .first()
            .context("no backends configured; add a [[backends]] table to the config")?,
    };
    Ok(Gateway::from_config(backend.clone())?)
}

fn print_funnel(funnel: &FunnelReport) {
    eprintln!(
        "funnel: {} records, {} articles, {} keyword, {} low-credibility, {} paragraphs, {} classified ({} resumed), {} sampled",
        funnel.records_read,
        funnel.articles,
        funnel.keyword_matched,
        funnel.low_credibility,
        funnel.paragraphs,
        funnel.resumed + funnel.requested,
        funnel.resumed,
        funnel.sampled
    );
}

async fn run(cli: Cli) -> Result<()> {
    let config = load_config(&cli)?;
    match &cli.command {
        Command::Ingest { input, out, funnel } => {
            let text = fs::read_to_string(input)
                .with_context(|| format!("reading {}", input.display()))?;
            let mut counts = FunnelReport::default();
            let paragraphs = ingest_stage(
                text.lines(),
                &config.keyword_list()?,
                &config.credibility_tables()?,
                config.min_paragraph_words,
                &mut counts,
            );
            write_jsonl(out, &paragraphs)?;
            if let Some(path) = funnel {
                write_json(path, &counts)?;
            }
            print_funnel(&counts);
        }
        Command::Classify {
            input,
            out,
            backend,
            journal,
        } => {
            let taxonomy = config.load_taxonomy()?;
            let gateway = pick_gateway(&config, backend)?;
            let paragraphs: Vec<ParagraphRecord> = read_jsonl(input)?;
            let journal = journal
                .clone()
                .unwrap_or_else(|| out.with_extension("journal.jsonl"));
            let mut counts = FunnelReport::default();
            let results = classify_stage(
                &paragraphs,
                &gateway,
                &config,
                &taxonomy,
                &config.templates()?,
                &journal,
                &mut counts,
            )
            .await?;
            write_jsonl(out, &results)?;
            eprintln!(
                "classified {} paragraphs: {} valid, {} invalid, {} transport failures",
                results.len(),
                counts.valid,
                counts.invalid,
                counts.transport_failed
            );
        }
        Command::Evaluate {
            gold,
            out,
            results_dir,
        } => {
            let taxonomy = config.load_taxonomy()?;
            let items = read_gold(gold, &config.gold, &taxonomy)?;
            let gateways = config.gateways()?;
            if gateways.is_empty() {
                bail!("no backends configured; add a [[backends]] table to the config");
            }
            let run =
                run_benchmark(&config, &items, &gateways, &taxonomy, &config.templates()?).await?;
            if let Some(dir) = results_dir {
                for (name, results) in &run.results {
                    write_jsonl(&dir.join(format!("{name}.jsonl")), results)?;
                }
            }
            if let Some(path) = out {
                write_json(path, &run.report)?;
            }
            print!("{}", render_report(&run.report, ReportFormat::Table));
        }
        Command::Sample {
            input,
            n,
            out,
            plan,
        } => {
            let taxonomy = config.load_taxonomy()?;
            let results: Vec<ResultRecord> = read_jsonl(input)?;
            let n = n.unwrap_or(config.sample_size);
            let (draw, records) = sample_stage(&results, &taxonomy, n, config.sample_seed()?)?;
            write_jsonl(out, &records)?;
            if let Some(path) = plan {
                write_json(path, &draw.plan)?;
            }
            eprintln!("sampled {} of {} paragraphs", records.len(), results.len());
        }
        Command::Run {
            corpus,
            out_dir,
            backend,
            n,
        } => {
            let mut config = config.clone();
            if let Some(n) = n {
                config.sample_size = *n;
            }
            let taxonomy = config.load_taxonomy()?;
            let gateway = pick_gateway(&config, backend)?;
            let run = run_social_pipeline(
                &config,
                corpus,
                &gateway,
                &taxonomy,
                &config.templates()?,
                out_dir,
            )
            .await?;
            print_funnel(&run.funnel);
        }
        Command::ExportFinetune { input, out } => {
            let taxonomy = config.load_taxonomy()?;
            let pairs = read_labeled_jsonl(input, &taxonomy)?;
            let summary = export_training_jsonl(&pairs, &taxonomy, out)?;
            eprintln!(
                "wrote {} examples ({} bytes, {} characters)",
                summary.lines, summary.bytes, summary.chars
            );
        }
        Command::Serve {
            sample,
            store,
            port,
            host,
            ui,
        } => {
            let taxonomy = config.load_taxonomy()?;
            let records = load_sample_jsonl(sample)?;
            let store = AnnotationStore::open(store, records, taxonomy)?;
            let addr: SocketAddr = format!("{host}:{port}")
                .parse()
                .with_context(|| format!("invalid address {host}:{port}"))?;
            let listener = tokio::net::TcpListener::bind(addr)
                .await
                .with_context(|| format!("binding {addr}"))?;
            eprintln!("annotation service on http://{addr}/api/v1");
            claimlens_server::serve(listener, claimlens_server::app(store, ui.clone())).await?;
        }
        Command::Report { input, format } => {
            let report = read_report(input)?;
            print!("{}", render_report(&report, *format));
        }
    }
    Ok(())
}

fn read_report(path: &Path) -> Result<EvaluationReport> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

#[tokio::main]
async fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(
            EnvFilter::try_from_default_env().unwrap_or_else(|_| EnvFilter::new("warn")),
        )
        .with_writer(std::io::stderr)
        .init();
    match run(Cli::parse()).await {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
