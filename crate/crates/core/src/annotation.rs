//! Dual-annotator store: task queues, revisioned labels, disagreements,
//! reconciliation into a gold set, and agreement snapshots.
//!
//! State lives in `events.jsonl`, an append-only log synced before each
//! write is acknowledged. [`AnnotationStore::compact`] folds the log into
//! `snapshot.json` (written to a temporary file and renamed) and starts a
//! fresh log; every event carries a sequence number so a crash between the
//! two steps never replays an event twice.

use std::collections::{BTreeMap, HashMap};
use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::metrics::{krippendorff_alpha, Alpha, MetricsError, ReliabilityInput};
use crate::sampler::SampleRecord;
use crate::taxonomy::{ClaimLabel, Taxonomy};

const EVENTS_FILE: &str = "events.jsonl";
const SNAPSHOT_FILE: &str = "snapshot.json";

/// Log events between automatic compactions.
pub const DEFAULT_SNAPSHOT_EVERY: usize = 1000;

#[derive(Debug, Error)]
pub enum AnnotationError {
    #[error("paragraph {0} is not in the active sample")]
    UnknownParagraph(String),
    #[error("{0:?} is not a taxonomy label")]
    InvalidLabel(String),
    #[error("paragraph {0} does not yet have two annotations")]
    NotYetDoubleCoded(String),
    #[error("no paragraph has been labelled by two annotators")]
    NoPairableItems,
    #[error("annotator id must not be empty")]
    EmptyAnnotator,
    #[error("paragraph {0} appears twice in the sample")]
    DuplicateSampleParagraph(String),
    #[error("{file}:{line}: {message}")]
    Corrupt {
        file: PathBuf,
        line: usize,
        message: String,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnnotationRecord {
    pub annotator_id: String,
    pub paragraph_id: String,
    pub label: ClaimLabel,
    pub annotated_at: DateTime<Utc>,
    pub revision: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReconciliationSource {
    Agreement,
    Reconciliation,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReconciledLabel {
    pub paragraph_id: String,
    pub final_label: ClaimLabel,
    pub resolved_by: String,
    pub source: ReconciliationSource,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
enum Event {
    Annotation { seq: u64, record: AnnotationRecord },
    Reconciliation { seq: u64, label: ReconciledLabel },
}

impl Event {
    fn seq(&self) -> u64 {
        match self {
            Event::Annotation { seq, .. } | Event::Reconciliation { seq, .. } => *seq,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
struct Snapshot {
    last_seq: u64,
    annotations: Vec<AnnotationRecord>,
    reconciliations: Vec<ReconciledLabel>,
}

/// The next paragraph an annotator has not labelled yet.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Task {
    pub paragraph_id: String,
    pub index: usize,
    pub text: String,
    pub done: usize,
    pub total: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Disagreement {
    pub paragraph_id: String,
    pub labels: BTreeMap<String, ClaimLabel>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgreementSnapshot {
    /// Sub-claim level.
    pub alpha: Alpha,
    /// Same codings mapped to their super-claim.
    pub super_claim_alpha: Alpha,
    pub double_coded: usize,
    pub total: usize,
    pub coverage: f64,
    pub disagreements: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GoldRecord {
    #[serde(flatten)]
    pub label: ReconciledLabel,
    pub text: String,
}

#[derive(Debug, Default)]
struct State {
    history: Vec<AnnotationRecord>,
    /// paragraph -> annotator -> latest record.
    latest: HashMap<String, BTreeMap<String, AnnotationRecord>>,
    reconciled: HashMap<String, ReconciledLabel>,
    reconciliation_log: Vec<ReconciledLabel>,
    last_seq: u64,
}

impl State {
    fn apply(&mut self, event: Event) {
        self.last_seq = event.seq();
        match event {
            Event::Annotation { record, .. } => self.apply_annotation(record),
            Event::Reconciliation { label, .. } => self.apply_reconciliation(label),
        }
    }

    fn apply_annotation(&mut self, record: AnnotationRecord) {
        self.latest
            .entry(record.paragraph_id.clone())
            .or_default()
            .insert(record.annotator_id.clone(), record.clone());
        self.history.push(record);
    }

    fn apply_reconciliation(&mut self, label: ReconciledLabel) {
        self.reconciled
            .insert(label.paragraph_id.clone(), label.clone());
        self.reconciliation_log.push(label);
    }
}

pub struct AnnotationStore {
    dir: PathBuf,
    taxonomy: Taxonomy,
    sample: Vec<SampleRecord>,
    index: HashMap<String, usize>,
    state: State,
    log: File,
    events_in_log: usize,
    snapshot_every: usize,
}

impl std::fmt::Debug for AnnotationStore {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("AnnotationStore")
            .field("dir", &self.dir)
            .field("sample", &self.sample.len())
            .field("last_seq", &self.state.last_seq)
            .finish()
    }
}

fn corrupt(file: &Path, line: usize, message: impl ToString) -> AnnotationError {
    AnnotationError::Corrupt {
        file: file.to_path_buf(),
        line,
        message: message.to_string(),
    }
}

impl AnnotationStore {
    /// Opens (or creates) the store in `dir` and replays its history.
    pub fn open(
        dir: impl AsRef<Path>,
        sample: Vec<SampleRecord>,
        taxonomy: Taxonomy,
    ) -> Result<Self, AnnotationError> {
        let dir = dir.as_ref().to_path_buf();
        fs::create_dir_all(&dir)?;
        let mut index = HashMap::with_capacity(sample.len());
        for (i, record) in sample.iter().enumerate() {
            if index.insert(record.paragraph_id.clone(), i).is_some() {
                return Err(AnnotationError::DuplicateSampleParagraph(
                    record.paragraph_id.clone(),
                ));
            }
        }

        let mut state = State::default();
        let snapshot_path = dir.join(SNAPSHOT_FILE);
        if snapshot_path.exists() {
            let snapshot: Snapshot = serde_json::from_slice(&fs::read(&snapshot_path)?)
                .map_err(|e| corrupt(&snapshot_path, e.line(), e))?;
            for record in snapshot.annotations {
                state.apply_annotation(record);
            }
            for label in snapshot.reconciliations {
                state.apply_reconciliation(label);
            }
            state.last_seq = snapshot.last_seq;
        }

        let events_path = dir.join(EVENTS_FILE);
        let mut events_in_log = 0;
        if events_path.exists() {
            let reader = BufReader::new(File::open(&events_path)?);
            for (i, line) in reader.lines().enumerate() {
                let line = line?;
                if line.trim().is_empty() {
                    continue;
                }
                let event: Event =
                    serde_json::from_str(&line).map_err(|e| corrupt(&events_path, i + 1, e))?;
                events_in_log += 1;
                if event.seq() > state.last_seq {
                    state.apply(event);
                }
            }
        }
        for paragraph in state.latest.keys().chain(state.reconciled.keys()) {
            if !index.contains_key(paragraph) {
                return Err(corrupt(
                    &events_path,
                    0,
                    format!("history references paragraph {paragraph} outside the sample"),
                ));
            }
        }

        let log = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&events_path)?;
        Ok(Self {
            dir,
            taxonomy,
            sample,
            index,
            state,
            log,
            events_in_log,
            snapshot_every: DEFAULT_SNAPSHOT_EVERY,
        })
    }

    pub fn with_snapshot_every(mut self, events: usize) -> Self {
        self.snapshot_every = events.max(1);
        self
    }

    pub fn taxonomy(&self) -> &Taxonomy {
        &self.taxonomy
    }

    pub fn sample(&self) -> &[SampleRecord] {
        &self.sample
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    /// Every stored revision, in submission order.
    pub fn history(&self) -> &[AnnotationRecord] {
        &self.state.history
    }

    pub fn latest_labels(&self, paragraph_id: &str) -> BTreeMap<String, ClaimLabel> {
        self.state
            .latest
            .get(paragraph_id)
            .map(|m| m.iter().map(|(a, r)| (a.clone(), r.label)).collect())
            .unwrap_or_default()
    }

    fn label(&self, code: &str) -> Result<ClaimLabel, AnnotationError> {
        self.taxonomy
            .parse_label(code)
            .map_err(|_| AnnotationError::InvalidLabel(code.to_string()))
    }

    fn require_paragraph(&self, paragraph_id: &str) -> Result<usize, AnnotationError> {
        self.index
            .get(paragraph_id)
            .copied()
            .ok_or_else(|| AnnotationError::UnknownParagraph(paragraph_id.to_string()))
    }

    fn append(&mut self, event: Event) -> Result<(), AnnotationError> {
        let mut line = serde_json::to_vec(&event).expect("event serializes");
        line.push(b'\n');
        self.log.write_all(&line)?;
        self.log.sync_data()?;
        self.events_in_log += 1;
        self.state.apply(event);
        if self.events_in_log >= self.snapshot_every {
            self.compact()?;
        }
        Ok(())
    }

    /// Stores a new revision once it is durable on disk.
    pub fn submit_annotation(
        &mut self,
        annotator_id: &str,
        paragraph_id: &str,
        label: &str,
    ) -> Result<AnnotationRecord, AnnotationError> {
        if annotator_id.trim().is_empty() {
            return Err(AnnotationError::EmptyAnnotator);
        }
        self.require_paragraph(paragraph_id)?;
        let label = self.label(label)?;
        let revision = self
            .state
            .latest
            .get(paragraph_id)
            .and_then(|m| m.get(annotator_id))
            .map_or(1, |r| r.revision + 1);
        let record = AnnotationRecord {
            annotator_id: annotator_id.to_string(),
            paragraph_id: paragraph_id.to_string(),
            label,
            annotated_at: Utc::now(),
            revision,
        };
        let seq = self.state.last_seq + 1;
        self.append(Event::Annotation {
            seq,
            record: record.clone(),
        })?;
        Ok(record)
    }

    pub fn next_task(&self, annotator_id: &str) -> Option<Task> {
        let labelled = |id: &str| {
            self.state
                .latest
                .get(id)
                .is_some_and(|m| m.contains_key(annotator_id))
        };
        let done = self
            .sample
            .iter()
            .filter(|r| labelled(&r.paragraph_id))
            .count();
        self.sample
            .iter()
            .enumerate()
            .find(|(_, r)| !labelled(&r.paragraph_id))
            .map(|(index, r)| Task {
                paragraph_id: r.paragraph_id.clone(),
                index,
                text: r.text.clone(),
                done,
                total: self.sample.len(),
            })
    }

    /// Paragraphs with two or more latest labels, in sample order.
    fn double_coded(
        &self,
    ) -> impl Iterator<Item = (&SampleRecord, &BTreeMap<String, AnnotationRecord>)> {
        self.sample.iter().filter_map(|r| {
            self.state
                .latest
                .get(&r.paragraph_id)
                .filter(|m| m.len() >= 2)
                .map(|m| (r, m))
        })
    }

    fn agrees(labels: &BTreeMap<String, AnnotationRecord>) -> Option<ClaimLabel> {
        let mut values = labels.values().map(|r| r.label);
        let first = values.next()?;
        values.all(|l| l == first).then_some(first)
    }

    /// Double-coded paragraphs whose latest labels differ, in sample order.
    pub fn list_disagreements(&self) -> Vec<Disagreement> {
        self.double_coded()
            .filter(|(_, m)| Self::agrees(m).is_none())
            .map(|(r, m)| Disagreement {
                paragraph_id: r.paragraph_id.clone(),
                labels: m.iter().map(|(a, rec)| (a.clone(), rec.label)).collect(),
            })
            .collect()
    }

    pub fn reconcile(
        &mut self,
        paragraph_id: &str,
        final_label: &str,
        resolved_by: &str,
    ) -> Result<ReconciledLabel, AnnotationError> {
        self.require_paragraph(paragraph_id)?;
        let final_label = self.label(final_label)?;
        let latest = self
            .state
            .latest
            .get(paragraph_id)
            .filter(|m| m.len() >= 2)
            .ok_or_else(|| AnnotationError::NotYetDoubleCoded(paragraph_id.to_string()))?;
        let source = if Self::agrees(latest) == Some(final_label) {
            ReconciliationSource::Agreement
        } else {
            ReconciliationSource::Reconciliation
        };
        let label = ReconciledLabel {
            paragraph_id: paragraph_id.to_string(),
            final_label,
            resolved_by: resolved_by.to_string(),
            source,
        };
        let seq = self.state.last_seq + 1;
        self.append(Event::Reconciliation {
            seq,
            label: label.clone(),
        })?;
        Ok(label)
    }

    /// Reconciles every agreeing, not yet reconciled paragraph to its
    /// shared label.
    pub fn auto_reconcile(
        &mut self,
        resolved_by: &str,
    ) -> Result<Vec<ReconciledLabel>, AnnotationError> {
        let pending: Vec<(String, ClaimLabel)> = self
            .double_coded()
            .filter(|(r, _)| !self.state.reconciled.contains_key(&r.paragraph_id))
            .filter_map(|(r, m)| Self::agrees(m).map(|l| (r.paragraph_id.clone(), l)))
            .collect();
        pending
            .into_iter()
            .map(|(id, label)| self.reconcile(&id, &label.code(), resolved_by))
            .collect()
    }

    pub fn reliability_input(&self) -> ReliabilityInput {
        let mut input = ReliabilityInput::new();
        for (paragraph, labels) in &self.state.latest {
            for (annotator, record) in labels {
                input.add(annotator, paragraph, &record.label.code());
            }
        }
        input
    }

    pub fn agreement_snapshot(&self) -> Result<AgreementSnapshot, AnnotationError> {
        let input = self.reliability_input();
        let mut coarse = ReliabilityInput::new();
        for (item, coders) in &input.codings {
            for (coder, code) in coders {
                let super_claim = code.split('_').next().unwrap_or(code);
                coarse.add(coder, item, super_claim);
            }
        }
        let map_err = |e| match e {
            MetricsError::NoPairableItems => AnnotationError::NoPairableItems,
            other => unreachable!("alpha only fails without pairable items: {other}"),
        };
        let fine = krippendorff_alpha(&input).map_err(map_err)?;
        let coarse = krippendorff_alpha(&coarse).map_err(map_err)?;
        let total = self.sample.len();
        Ok(AgreementSnapshot {
            alpha: fine.alpha,
            super_claim_alpha: coarse.alpha,
            double_coded: fine.pairable_items,
            total,
            coverage: fine.pairable_items as f64 / total as f64,
            disagreements: self.list_disagreements().len(),
        })
    }

    /// Reconciled paragraphs with their text, in sample order.
    pub fn export_gold(&self) -> Vec<GoldRecord> {
        self.sample
            .iter()
            .filter_map(|r| {
                self.state
                    .reconciled
                    .get(&r.paragraph_id)
                    .map(|label| GoldRecord {
                        label: label.clone(),
                        text: r.text.clone(),
                    })
            })
            .collect()
    }

    /// Folds the history into the snapshot file and starts an empty log.
    pub fn compact(&mut self) -> Result<(), AnnotationError> {
        let snapshot = Snapshot {
            last_seq: self.state.last_seq,
            annotations: self.state.history.clone(),
            reconciliations: self.state.reconciliation_log.clone(),
        };
        let tmp = self.dir.join(format!("{SNAPSHOT_FILE}.tmp"));
        {
            let mut file = File::create(&tmp)?;
            file.write_all(&serde_json::to_vec(&snapshot).expect("snapshot serializes"))?;
            file.sync_all()?;
        }
        fs::rename(&tmp, self.dir.join(SNAPSHOT_FILE))?;
        let events_path = self.dir.join(EVENTS_FILE);
        let fresh = File::create(&events_path)?;
        fresh.sync_all()?;
        self.log = OpenOptions::new().append(true).open(&events_path)?;
        self.events_in_log = 0;
        Ok(())
    }
}

/// Reads a sample file written by the sampler.
pub fn load_sample_jsonl(path: impl AsRef<Path>) -> Result<Vec<SampleRecord>, AnnotationError> {
    let path = path.as_ref();
    let reader = BufReader::new(File::open(path)?);
    let mut records = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        records.push(serde_json::from_str(&line).map_err(|e| corrupt(path, i + 1, e))?);
    }
    Ok(records)
}
