//! End-to-end runs: the benchmark against a gold dataset and the social
//! media pipeline (ingest, filter, segment, classify, sample).
//!
//! Stages exchange plain files so each can also run on its own. The
//! classification stage keeps a journal of raw responses keyed by paragraph
//! id; a rerun only sends paragraphs missing from it, and replacement draws
//! always follow paragraph order, so resumed and uninterrupted runs produce
//! the same results.

use std::collections::HashMap;
use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, BufWriter, Read, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::codec::{
    parse_response, replace_invalid, validity_rate, ClassificationResult, CodecError,
    LabeledOutcome, OutcomeKind,
};
use crate::corpus::{
    credibility_tag, ingest_articles, keyword_filter, load_keywords, segment_paragraphs_with,
    CorpusError, CredibilityTables, KeywordList, ParagraphRecord, MIN_PARAGRAPH_WORDS,
};
use crate::gateway::{
    BackendConfig, ClassificationRequest, Gateway, GatewayError, RawModelResponse, TransportStatus,
};
use crate::metrics::{confusion_matrix, evaluate, ClassSetPolicy, Evaluation, MetricsError};
use crate::prompts::{PromptError, PromptStyle, PromptTemplates};
use crate::report::{BackendReport, EvaluationLevel, EvaluationReport};
use crate::sampler::{stratified_sample, SampleDraw, SampleError, SampleRecord};
use crate::taxonomy::{ClaimLabel, Taxonomy, TaxonomyError};

pub const JOURNAL_FILE: &str = "journal.jsonl";
pub const RESULTS_FILE: &str = "results.jsonl";
pub const FUNNEL_FILE: &str = "funnel.json";
pub const SAMPLE_FILE: &str = "sample.jsonl";
pub const SAMPLE_PLAN_FILE: &str = "sample_plan.json";

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("config: {0}")]
    Config(String),
    #[error("{0} is required for this run")]
    MissingSeed(&'static str),
    #[error("{path}:{line}: {message}")]
    Input {
        path: PathBuf,
        line: usize,
        message: String,
    },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Taxonomy(#[from] TaxonomyError),
    #[error(transparent)]
    Prompt(#[from] PromptError),
    #[error(transparent)]
    Gateway(#[from] GatewayError),
    #[error(transparent)]
    Codec(#[from] CodecError),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error(transparent)]
    Sample(#[from] SampleError),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> PipelineError + '_ {
    move |source| PipelineError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn input_err(path: &Path, line: usize, message: impl ToString) -> PipelineError {
    PipelineError::Input {
        path: path.to_path_buf(),
        line,
        message: message.to_string(),
    }
}

/// Column names of a gold dataset.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GoldColumns {
    pub id_column: Option<String>,
    pub text_column: String,
    pub label_column: String,
}

impl Default for GoldColumns {
    fn default() -> Self {
        Self {
            id_column: None,
            text_column: "text".into(),
            label_column: "claim".into(),
        }
    }
}

fn default_parallelism() -> usize {
    4
}

fn default_sample_size() -> usize {
    914
}

fn default_min_words() -> usize {
    MIN_PARAGRAPH_WORDS
}

/// Run configuration, read from a TOML file. Relative paths in the file are
/// resolved against the file's directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    #[serde(default)]
    pub taxonomy: Option<PathBuf>,
    /// Directory with edited copies of the prompt templates.
    #[serde(default)]
    pub prompts_dir: Option<PathBuf>,
    #[serde(default)]
    pub prompt_style: PromptStyle,
    #[serde(default)]
    pub backends: Vec<BackendConfig>,
    #[serde(default = "default_parallelism")]
    pub parallelism: usize,
    /// Requests per second for backends without their own limit.
    #[serde(default)]
    pub rate_limit_rps: Option<f64>,
    #[serde(default)]
    pub replacement_seed: Option<u64>,
    #[serde(default = "default_sample_size")]
    pub sample_size: usize,
    #[serde(default)]
    pub sample_seed: Option<u64>,
    #[serde(default)]
    pub level: EvaluationLevel,
    /// Classes entering macro averages; all gold classes when absent.
    #[serde(default)]
    pub macro_classes: Option<Vec<String>>,
    #[serde(default)]
    pub gold: GoldColumns,
    #[serde(default)]
    pub keywords: Option<PathBuf>,
    #[serde(default)]
    pub mbfc: Option<PathBuf>,
    #[serde(default)]
    pub newsguard: Option<PathBuf>,
    #[serde(default = "default_min_words")]
    pub min_paragraph_words: usize,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        toml::from_str("").expect("empty config uses defaults")
    }
}

/// Command-line values that take precedence over the config file.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ConfigOverrides {
    pub taxonomy: Option<PathBuf>,
    pub prompt_style: Option<PromptStyle>,
    /// Sets both the replacement and the sample seed.
    pub seed: Option<u64>,
    pub level: Option<EvaluationLevel>,
    pub parallelism: Option<usize>,
    pub sample_size: Option<usize>,
}

fn resolve(base: &Path, path: &mut Option<PathBuf>) {
    if let Some(p) = path {
        if p.is_relative() {
            *p = base.join(&*p);
        }
    }
}

impl PipelineConfig {
    pub fn from_toml_str(text: &str) -> Result<Self, PipelineError> {
        toml::from_str(text).map_err(|e| PipelineError::Config(e.to_string()))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, PipelineError> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(io_err(path))?;
        let mut config = Self::from_toml_str(&text)
            .map_err(|e| PipelineError::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        for p in [
            &mut config.taxonomy,
            &mut config.prompts_dir,
            &mut config.keywords,
            &mut config.mbfc,
            &mut config.newsguard,
        ] {
            resolve(base, p);
        }
        for backend in &mut config.backends {
            resolve(base, &mut backend.mock_table);
        }
        Ok(config)
    }

    pub fn apply(&mut self, overrides: &ConfigOverrides) {
        if let Some(t) = &overrides.taxonomy {
            self.taxonomy = Some(t.clone());
        }
        if let Some(style) = overrides.prompt_style {
            self.prompt_style = style;
        }
        if let Some(seed) = overrides.seed {
            self.replacement_seed = Some(seed);
            self.sample_seed = Some(seed);
        }
        if let Some(level) = overrides.level {
            self.level = level;
        }
        if let Some(p) = overrides.parallelism {
            self.parallelism = p;
        }
        if let Some(n) = overrides.sample_size {
            self.sample_size = n;
        }
    }

    pub fn load_taxonomy(&self) -> Result<Taxonomy, PipelineError> {
        Ok(match &self.taxonomy {
            Some(path) => Taxonomy::from_path(path)?,
            None => Taxonomy::default_cards(),
        })
    }

    pub fn templates(&self) -> Result<PromptTemplates, PipelineError> {
        Ok(match &self.prompts_dir {
            Some(dir) => PromptTemplates::from_dir(dir)?,
            None => PromptTemplates::default(),
        })
    }

    pub fn gateways(&self) -> Result<Vec<Gateway>, PipelineError> {
        Ok(self
            .backends
            .iter()
            .cloned()
            .map(Gateway::from_config)
            .collect::<Result<_, _>>()?)
    }

    pub fn class_set_policy(&self) -> ClassSetPolicy {
        match &self.macro_classes {
            Some(list) => ClassSetPolicy::ExplicitList(list.clone()),
            None => ClassSetPolicy::AllGoldClasses,
        }
    }

    pub fn replacement_seed(&self) -> Result<u64, PipelineError> {
        self.replacement_seed
            .ok_or(PipelineError::MissingSeed("replacement_seed"))
    }

    pub fn sample_seed(&self) -> Result<u64, PipelineError> {
        self.sample_seed
            .ok_or(PipelineError::MissingSeed("sample_seed"))
    }

    pub fn keyword_list(&self) -> Result<KeywordList, PipelineError> {
        match &self.keywords {
            Some(path) => load_keywords(path).map_err(io_err(path)),
            None => Ok(KeywordList::default_climate()),
        }
    }

    pub fn credibility_tables(&self) -> Result<CredibilityTables, PipelineError> {
        let mut tables = CredibilityTables::default();
        if let Some(path) = &self.mbfc {
            tables.read_mbfc(File::open(path).map_err(io_err(path))?)?;
        }
        if let Some(path) = &self.newsguard {
            tables.read_newsguard(File::open(path).map_err(io_err(path))?)?;
        }
        Ok(tables)
    }

    fn rate_limit(&self, gateway: &Gateway) -> Option<f64> {
        gateway.config().rate_limit_rps.or(self.rate_limit_rps)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GoldItem {
    pub paragraph: ParagraphRecord,
    pub label: ClaimLabel,
}

fn gold_item(
    path: &Path,
    line: usize,
    id: Option<String>,
    text: String,
    label: &str,
    taxonomy: &Taxonomy,
) -> Result<GoldItem, PipelineError> {
    let label = taxonomy
        .parse_label(label)
        .map_err(|e| input_err(path, line, e))?;
    let id = id.unwrap_or_else(|| format!("gold-{line:06}"));
    Ok(GoldItem {
        paragraph: ParagraphRecord::standalone(id, text),
        label,
    })
}

/// Reads a gold dataset from CSV (with a header row) or from JSON lines.
/// Files ending in `.csv` are read as CSV, anything else as JSON lines.
pub fn read_gold(
    path: impl AsRef<Path>,
    columns: &GoldColumns,
    taxonomy: &Taxonomy,
) -> Result<Vec<GoldItem>, PipelineError> {
    let path = path.as_ref();
    let is_csv = path
        .extension()
        .is_some_and(|e| e.eq_ignore_ascii_case("csv"));
    if is_csv {
        read_gold_csv(path, columns, taxonomy)
    } else {
        read_gold_jsonl(path, columns, taxonomy)
    }
}

fn read_gold_csv(
    path: &Path,
    columns: &GoldColumns,
    taxonomy: &Taxonomy,
) -> Result<Vec<GoldItem>, PipelineError> {
    let mut reader = csv::Reader::from_path(path).map_err(|e| input_err(path, 0, e))?;
    let headers = reader.headers().map_err(|e| input_err(path, 1, e))?.clone();
    let find = |name: &str| {
        headers
            .iter()
            .position(|h| h.trim() == name)
            .ok_or_else(|| input_err(path, 1, format!("missing column {name:?}")))
    };
    let text_col = find(&columns.text_column)?;
    let label_col = find(&columns.label_column)?;
    let id_col = columns.id_column.as_deref().map(find).transpose()?;
    let mut items = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let line = i + 2;
        let record = record.map_err(|e| input_err(path, line, e))?;
        let field = |col: usize| record.get(col).unwrap_or("").to_string();
        items.push(gold_item(
            path,
            line,
            id_col.map(field),
            field(text_col),
            field(label_col).trim(),
            taxonomy,
        )?);
    }
    Ok(items)
}

fn read_gold_jsonl(
    path: &Path,
    columns: &GoldColumns,
    taxonomy: &Taxonomy,
) -> Result<Vec<GoldItem>, PipelineError> {
    let reader = BufReader::new(File::open(path).map_err(io_err(path))?);
    let mut items = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line_no = i + 1;
        let line = line.map_err(io_err(path))?;
        if line.trim().is_empty() {
            continue;
        }
        let value: serde_json::Value =
            serde_json::from_str(&line).map_err(|e| input_err(path, line_no, e))?;
        let string = |name: &str| -> Result<String, PipelineError> {
            match value.get(name) {
                Some(serde_json::Value::String(s)) => Ok(s.clone()),
                Some(serde_json::Value::Number(n)) => Ok(n.to_string()),
                _ => Err(input_err(path, line_no, format!("missing field {name:?}"))),
            }
        };
        let id = columns.id_column.as_deref().map(string).transpose()?;
        let text = string(&columns.text_column)?;
        let label = string(&columns.label_column)?;
        items.push(gold_item(path, line_no, id, text, label.trim(), taxonomy)?);
    }
    Ok(items)
}

/// Code of `label` at the evaluation level.
pub fn level_code(label: ClaimLabel, level: EvaluationLevel) -> String {
    match level {
        EvaluationLevel::SuperClaim => label.super_claim().to_string(),
        EvaluationLevel::SubClaim => label.code(),
    }
}

pub fn level_classes(taxonomy: &Taxonomy, level: EvaluationLevel) -> Vec<String> {
    match level {
        EvaluationLevel::SuperClaim => taxonomy
            .super_claims()
            .into_iter()
            .map(|s| s.to_string())
            .collect(),
        EvaluationLevel::SubClaim => taxonomy.labels().map(|l| l.code()).collect(),
    }
}

/// Scores predicted labels against gold labels at `level`.
pub fn score_labels(
    gold: &[ClaimLabel],
    predicted: &[ClaimLabel],
    taxonomy: &Taxonomy,
    level: EvaluationLevel,
    policy: &ClassSetPolicy,
) -> Result<Evaluation, PipelineError> {
    let g: Vec<String> = gold.iter().map(|&l| level_code(l, level)).collect();
    let p: Vec<String> = predicted.iter().map(|&l| level_code(l, level)).collect();
    let m = confusion_matrix(&g, &p, &level_classes(taxonomy, level))?;
    Ok(evaluate(m, policy)?)
}

fn requests_for(
    paragraphs: &[&ParagraphRecord],
    style: PromptStyle,
    taxonomy: &Taxonomy,
    templates: &PromptTemplates,
) -> Result<Vec<ClassificationRequest>, PipelineError> {
    paragraphs
        .iter()
        .map(|p| {
            Ok(ClassificationRequest {
                paragraph_id: p.paragraph_id.clone(),
                bundle: templates.bundle(style, p, taxonomy)?,
            })
        })
        .collect()
}

fn finalize(
    responses: &[RawModelResponse],
    taxonomy: &Taxonomy,
    style: PromptStyle,
    seed: u64,
) -> Result<Vec<ClassificationResult>, PipelineError> {
    let outcomes: Vec<LabeledOutcome> = responses
        .iter()
        .map(|raw| LabeledOutcome {
            paragraph_id: raw.paragraph_id.clone(),
            backend_name: raw.backend_name.clone(),
            outcome: parse_response(raw, taxonomy, style),
        })
        .collect();
    Ok(replace_invalid(&outcomes, taxonomy, seed)?)
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchmarkRun {
    pub report: EvaluationReport,
    /// Per backend, in roster order.
    pub results: Vec<(String, Vec<ClassificationResult>)>,
}

/// Classifies the gold set with every gateway and scores each backend.
pub async fn run_benchmark(
    config: &PipelineConfig,
    gold: &[GoldItem],
    gateways: &[Gateway],
    taxonomy: &Taxonomy,
    templates: &PromptTemplates,
) -> Result<BenchmarkRun, PipelineError> {
    let seed = config.replacement_seed()?;
    let policy = config.class_set_policy();
    let paragraphs: Vec<&ParagraphRecord> = gold.iter().map(|g| &g.paragraph).collect();
    let gold_labels: Vec<ClaimLabel> = gold.iter().map(|g| g.label).collect();
    let requests = requests_for(&paragraphs, config.prompt_style, taxonomy, templates)?;

    let mut backends = Vec::with_capacity(gateways.len());
    let mut all_results = Vec::with_capacity(gateways.len());
    for gateway in gateways {
        tracing::info!(
            backend = gateway.name(),
            items = requests.len(),
            "classifying"
        );
        let responses = gateway
            .classify_batch(&requests, config.parallelism, config.rate_limit(gateway))
            .await;
        let results = finalize(&responses, taxonomy, config.prompt_style, seed)?;
        let complete = results.is_empty()
            || results
                .iter()
                .any(|r| r.outcome.kind != OutcomeKind::TransportFailed);
        if !complete {
            tracing::warn!(
                backend = gateway.name(),
                "every request failed; report is incomplete"
            );
        }
        let predicted: Vec<ClaimLabel> = results.iter().map(|r| r.final_label).collect();
        let evaluation = score_labels(&gold_labels, &predicted, taxonomy, config.level, &policy)?;
        let validity = validity_rate(&results)
            .remove(gateway.name())
            .unwrap_or_default();
        backends.push(BackendReport {
            backend: gateway.name().to_string(),
            model_id: gateway.config().model_id.clone(),
            items: results.len(),
            complete,
            validity,
            evaluation,
        });
        all_results.push((gateway.name().to_string(), results));
    }
    Ok(BenchmarkRun {
        report: EvaluationReport {
            level: config.level,
            prompt_style: config.prompt_style,
            class_set_policy: policy,
            replacement_seed: seed,
            taxonomy_version: taxonomy.version().to_string(),
            backends,
        },
        results: all_results,
    })
}

/// Stage counts of the social media pipeline. Every stage's output is at
/// most its input; the difference is broken down in the neighbouring
/// fields.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FunnelReport {
    pub records_read: usize,
    pub rejected: usize,
    pub duplicates: usize,
    pub articles: usize,
    pub keyword_matched: usize,
    pub low_credibility: usize,
    pub empty_bodies: usize,
    pub dropped_short: usize,
    pub paragraphs: usize,
    pub resumed: usize,
    pub requested: usize,
    pub valid: usize,
    pub invalid: usize,
    pub transport_failed: usize,
    pub sampled: usize,
}

/// Filters a corpus down to low-credibility, keyword-matching articles
/// and splits them into paragraphs.
pub fn ingest_stage<I, S>(
    lines: I,
    keywords: &KeywordList,
    tables: &CredibilityTables,
    min_words: usize,
    funnel: &mut FunnelReport,
) -> Vec<ParagraphRecord>
where
    I: IntoIterator<Item = S>,
    S: AsRef<str>,
{
    let lines: Vec<S> = lines.into_iter().collect();
    funnel.records_read = lines
        .iter()
        .filter(|l| !l.as_ref().trim().is_empty())
        .count();
    let outcome = ingest_articles(lines);
    funnel.rejected = outcome.rejected.len();
    funnel.duplicates = outcome.duplicates;
    funnel.articles = outcome.articles.len();

    let matched: Vec<_> = outcome
        .articles
        .into_iter()
        .filter(|a| keyword_filter(a, keywords))
        .collect();
    funnel.keyword_matched = matched.len();
    let low: Vec<_> = matched
        .into_iter()
        .filter(|a| credibility_tag(a, tables).low_credibility)
        .collect();
    funnel.low_credibility = low.len();

    let mut paragraphs = Vec::new();
    for article in &low {
        let seg = segment_paragraphs_with(article, min_words);
        funnel.empty_bodies += usize::from(seg.empty_body);
        funnel.dropped_short += seg.dropped_short;
        paragraphs.extend(seg.paragraphs);
    }
    funnel.paragraphs = paragraphs.len();
    tracing::info!(
        read = funnel.records_read,
        articles = funnel.articles,
        keyword = funnel.keyword_matched,
        low_credibility = funnel.low_credibility,
        paragraphs = funnel.paragraphs,
        "ingest funnel"
    );
    paragraphs
}

/// A classified paragraph as written to `results.jsonl`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResultRecord {
    #[serde(flatten)]
    pub result: ClassificationResult,
    pub article_id: String,
    pub text: String,
}

fn read_journal(
    path: &Path,
    backend: &str,
) -> Result<HashMap<String, RawModelResponse>, PipelineError> {
    let mut done = HashMap::new();
    if !path.exists() {
        return Ok(done);
    }
    let reader = BufReader::new(File::open(path).map_err(io_err(path))?);
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(io_err(path))?;
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str::<RawModelResponse>(&line) {
            Ok(raw)
                if raw.backend_name == backend && raw.transport_status == TransportStatus::Ok =>
            {
                done.insert(raw.paragraph_id.clone(), raw);
            }
            Ok(_) => {}
            // An interrupted write leaves at most one partial line.
            Err(e) => tracing::warn!(line = i + 1, error = %e, "skipping journal line"),
        }
    }
    Ok(done)
}

fn ends_mid_line(path: &Path) -> std::io::Result<bool> {
    let mut file = File::open(path)?;
    let len = file.metadata()?.len();
    if len == 0 {
        return Ok(false);
    }
    file.seek(SeekFrom::Start(len - 1))?;
    let mut last = [0u8];
    file.read_exact(&mut last)?;
    Ok(last[0] != b'\n')
}

/// Classifies paragraphs, reusing successful responses already in the
/// journal and appending new ones as each chunk completes.
#[allow(clippy::too_many_arguments)]
pub async fn classify_stage(
    paragraphs: &[ParagraphRecord],
    gateway: &Gateway,
    config: &PipelineConfig,
    taxonomy: &Taxonomy,
    templates: &PromptTemplates,
    journal: &Path,
    funnel: &mut FunnelReport,
) -> Result<Vec<ResultRecord>, PipelineError> {
    let seed = config.replacement_seed()?;
    let mut done = read_journal(journal, gateway.name())?;
    let pending: Vec<&ParagraphRecord> = paragraphs
        .iter()
        .filter(|p| !done.contains_key(&p.paragraph_id))
        .collect();
    funnel.resumed = paragraphs.len() - pending.len();
    funnel.requested = pending.len();

    if !pending.is_empty() {
        if let Some(dir) = journal.parent() {
            fs::create_dir_all(dir).map_err(io_err(dir))?;
        }
        let mut log = OpenOptions::new()
            .create(true)
            .append(true)
            .open(journal)
            .map_err(io_err(journal))?;
        // Terminate a torn last line so the next entry starts on its own.
        if ends_mid_line(journal).map_err(io_err(journal))? {
            log.write_all(b"\n").map_err(io_err(journal))?;
        }
        let chunk_size = config.parallelism.max(1) * 8;
        for chunk in pending.chunks(chunk_size) {
            let requests = requests_for(chunk, config.prompt_style, taxonomy, templates)?;
            let responses = gateway
                .classify_batch(&requests, config.parallelism, config.rate_limit(gateway))
                .await;
            let mut buf = Vec::new();
            for raw in &responses {
                serde_json::to_writer(&mut buf, raw).expect("response serializes");
                buf.push(b'\n');
            }
            log.write_all(&buf).map_err(io_err(journal))?;
            log.sync_data().map_err(io_err(journal))?;
            for raw in responses {
                done.insert(raw.paragraph_id.clone(), raw);
            }
        }
    }

    let ordered: Vec<RawModelResponse> = paragraphs
        .iter()
        .map(|p| {
            done.remove(&p.paragraph_id)
                .expect("every paragraph has a response")
        })
        .collect();
    let results = finalize(&ordered, taxonomy, config.prompt_style, seed)?;
    for r in &results {
        match r.outcome.kind {
            OutcomeKind::Valid => funnel.valid += 1,
            OutcomeKind::Invalid => funnel.invalid += 1,
            OutcomeKind::TransportFailed => funnel.transport_failed += 1,
        }
    }
    Ok(results
        .into_iter()
        .zip(paragraphs)
        .map(|(result, p)| ResultRecord {
            result,
            article_id: p.article_id.clone(),
            text: p.text.clone(),
        })
        .collect())
}

/// Draws the review sample and builds its records (text, model label,
/// empty annotation slots) in draw order.
pub fn sample_stage(
    results: &[ResultRecord],
    taxonomy: &Taxonomy,
    n_total: usize,
    seed: u64,
) -> Result<(SampleDraw, Vec<SampleRecord>), PipelineError> {
    let classified: Vec<ClassificationResult> = results.iter().map(|r| r.result.clone()).collect();
    let draw = stratified_sample(&classified, taxonomy, n_total, seed)?;
    let by_id: HashMap<&str, &ResultRecord> = results
        .iter()
        .map(|r| (r.result.paragraph_id.as_str(), r))
        .collect();
    let records = draw
        .selected
        .iter()
        .map(|id| {
            let r = by_id[id.as_str()];
            SampleRecord {
                paragraph_id: id.clone(),
                text: r.text.clone(),
                model_label: r.result.final_label,
                annotations: Default::default(),
            }
        })
        .collect();
    Ok((draw, records))
}

pub fn write_jsonl<T: Serialize>(path: &Path, items: &[T]) -> Result<(), PipelineError> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(io_err(dir))?;
    }
    let mut out = BufWriter::new(File::create(path).map_err(io_err(path))?);
    for item in items {
        serde_json::to_writer(&mut out, item).expect("record serializes");
        out.write_all(b"\n").map_err(io_err(path))?;
    }
    out.flush().map_err(io_err(path))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), PipelineError> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(io_err(dir))?;
    }
    let mut text = serde_json::to_string_pretty(value).expect("value serializes");
    text.push('\n');
    fs::write(path, text).map_err(io_err(path))
}

pub fn read_jsonl<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>, PipelineError> {
    let reader = BufReader::new(File::open(path).map_err(io_err(path))?);
    let mut items = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(io_err(path))?;
        if line.trim().is_empty() {
            continue;
        }
        items.push(serde_json::from_str(&line).map_err(|e| input_err(path, i + 1, e))?);
    }
    Ok(items)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SocialRun {
    pub funnel: FunnelReport,
    pub results: Vec<ResultRecord>,
    /// Absent when nothing was classified.
    pub sample: Option<SampleDraw>,
}

/// Ingest, filter, segment, classify, sample. Writes the journal,
/// `results.jsonl`, `funnel.json` and, when paragraphs were classified,
/// `sample.jsonl` and `sample_plan.json` into `out_dir`.
pub async fn run_social_pipeline(
    config: &PipelineConfig,
    corpus: &Path,
    gateway: &Gateway,
    taxonomy: &Taxonomy,
    templates: &PromptTemplates,
    out_dir: &Path,
) -> Result<SocialRun, PipelineError> {
    let sample_seed = config.sample_seed()?;
    config.replacement_seed()?;
    let keywords = config.keyword_list()?;
    let tables = config.credibility_tables()?;
    let text = fs::read_to_string(corpus).map_err(io_err(corpus))?;

    let mut funnel = FunnelReport::default();
    let paragraphs = ingest_stage(
        text.lines(),
        &keywords,
        &tables,
        config.min_paragraph_words,
        &mut funnel,
    );
    let results = classify_stage(
        &paragraphs,
        gateway,
        config,
        taxonomy,
        templates,
        &out_dir.join(JOURNAL_FILE),
        &mut funnel,
    )
    .await?;
    write_jsonl(&out_dir.join(RESULTS_FILE), &results)?;

    let sample = if results.is_empty() {
        None
    } else {
        let (draw, records) = sample_stage(&results, taxonomy, config.sample_size, sample_seed)?;
        funnel.sampled = records.len();
        write_jsonl(&out_dir.join(SAMPLE_FILE), &records)?;
        write_json(&out_dir.join(SAMPLE_PLAN_FILE), &draw.plan)?;
        Some(draw)
    };
    write_json(&out_dir.join(FUNNEL_FILE), &funnel)?;
    Ok(SocialRun {
        funnel,
        results,
        sample,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_config() {
        let c = PipelineConfig::default();
        assert_eq!(c.parallelism, 4);
        assert_eq!(c.sample_size, 914);
        assert_eq!(c.level, EvaluationLevel::SuperClaim);
        assert_eq!(c.prompt_style, PromptStyle::Rubric);
        assert!(c.replacement_seed().is_err());
    }

    #[test]
    fn file_then_cli_precedence() {
        let mut c = PipelineConfig::from_toml_str(
            r#"
            prompt_style = "compact-qa"
            replacement_seed = 1
            sample_seed = 2
            level = "sub_claim"
            macro_classes = ["1", "2"]

            [[backends]]
            name = "m"
            kind = "mock"
            "#,
        )
        .unwrap();
        assert_eq!(c.prompt_style, PromptStyle::CompactQa);
        assert_eq!(c.level, EvaluationLevel::SubClaim);
        assert_eq!(c.backends[0].max_retries, 3);
        c.apply(&ConfigOverrides {
            seed: Some(9),
            level: Some(EvaluationLevel::SuperClaim),
            ..Default::default()
        });
        assert_eq!((c.replacement_seed, c.sample_seed), (Some(9), Some(9)));
        assert_eq!(c.level, EvaluationLevel::SuperClaim);
        assert_eq!(c.prompt_style, PromptStyle::CompactQa);
        assert_eq!(
            c.class_set_policy(),
            ClassSetPolicy::ExplicitList(vec!["1".into(), "2".into()])
        );
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(PipelineConfig::from_toml_str("paralelism = 3").is_err());
    }

    #[test]
    fn level_mapping() {
        let l: ClaimLabel = "4_3".parse().unwrap();
        assert_eq!(level_code(l, EvaluationLevel::SuperClaim), "4");
        assert_eq!(level_code(l, EvaluationLevel::SubClaim), "4_3");
        let tax = Taxonomy::default_cards();
        assert_eq!(
            level_classes(&tax, EvaluationLevel::SuperClaim),
            ["0", "1", "2", "3", "4", "5"]
        );
        assert_eq!(level_classes(&tax, EvaluationLevel::SubClaim).len(), 27);
    }

    #[test]
    fn gold_csv_and_jsonl() {
        let dir = tempfile::tempdir().unwrap();
        let tax = Taxonomy::default_cards();
        let csv = dir.path().join("gold.csv");
        fs::write(&csv, "text,claim\n\"Hello, world\",1_1\nSecond,0_0\n").unwrap();
        let items = read_gold(&csv, &GoldColumns::default(), &tax).unwrap();
        assert_eq!(items.len(), 2);
        assert_eq!(items[0].paragraph.text, "Hello, world");
        assert_eq!(items[1].label, ClaimLabel::NO_CLAIM);

        let jsonl = dir.path().join("gold.jsonl");
        fs::write(
            &jsonl,
            "{\"id\":\"a\",\"body\":\"x y\",\"code\":\"5_2\"}\n\n",
        )
        .unwrap();
        let cols = GoldColumns {
            id_column: Some("id".into()),
            text_column: "body".into(),
            label_column: "code".into(),
        };
        let items = read_gold(&jsonl, &cols, &tax).unwrap();
        assert_eq!(items[0].paragraph.paragraph_id, "a");
        assert_eq!(items[0].label.code(), "5_2");

        fs::write(&csv, "text,claim\nx,9_9\n").unwrap();
        assert!(matches!(
            read_gold(&csv, &GoldColumns::default(), &tax),
            Err(PipelineError::Input { line: 2, .. })
        ));
        fs::write(&csv, "body,claim\nx,1_1\n").unwrap();
        assert!(read_gold(&csv, &GoldColumns::default(), &tax).is_err());
    }
}
