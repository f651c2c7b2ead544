//! Chat-message JSONL export for supervised fine-tuning, and the matching
//! inference messages for a fine-tuned backend.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::ParagraphRecord;
use crate::gateway::{ChatMessage, Role};
use crate::prompts::render_finetune_system_prompt;
use crate::taxonomy::{ClaimLabel, Taxonomy};

#[derive(Debug, Error)]
pub enum FinetuneError {
    #[error("label {label} for paragraph {paragraph_id} is not in the taxonomy")]
    InvalidLabel { paragraph_id: String, label: String },
    #[error("paragraph {0} has no text")]
    EmptyText(String),
    #[error("line {line}: {message}")]
    MalformedInput { line: usize, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrainingExample {
    pub messages: Vec<ChatMessage>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExportSummary {
    pub lines: usize,
    pub bytes: u64,
    pub chars: u64,
}

pub fn training_example(
    paragraph: &ParagraphRecord,
    label: ClaimLabel,
    taxonomy: &Taxonomy,
) -> Result<TrainingExample, FinetuneError> {
    if !taxonomy.contains(label) {
        return Err(FinetuneError::InvalidLabel {
            paragraph_id: paragraph.paragraph_id.clone(),
            label: label.code(),
        });
    }
    let mut messages = build_inference_messages(paragraph, taxonomy)?;
    messages.push(ChatMessage::new(Role::Assistant, label.code()));
    Ok(TrainingExample { messages })
}

/// Writes one `{"messages":[system, user, assistant]}` object per line.
/// Every pair is validated before the file is created.
pub fn export_training_jsonl(
    pairs: &[(ParagraphRecord, ClaimLabel)],
    taxonomy: &Taxonomy,
    out: impl AsRef<Path>,
) -> Result<ExportSummary, FinetuneError> {
    let examples = pairs
        .iter()
        .map(|(paragraph, label)| training_example(paragraph, *label, taxonomy))
        .collect::<Result<Vec<_>, _>>()?;
    let mut writer = BufWriter::new(File::create(out)?);
    let mut summary = ExportSummary::default();
    for example in &examples {
        let line = serde_json::to_string(example).expect("training example serializes");
        writer.write_all(line.as_bytes())?;
        writer.write_all(b"\n")?;
        summary.lines += 1;
        summary.bytes += line.len() as u64 + 1;
        summary.chars += line.chars().count() as u64 + 1;
    }
    writer.flush()?;
    Ok(summary)
}

/// System and user messages only; the assistant turn is what the model
/// produces.
pub fn build_inference_messages(
    paragraph: &ParagraphRecord,
    taxonomy: &Taxonomy,
) -> Result<Vec<ChatMessage>, FinetuneError> {
    if paragraph.text.trim().is_empty() {
        return Err(FinetuneError::EmptyText(paragraph.paragraph_id.clone()));
    }
    Ok(vec![
        ChatMessage::new(Role::System, render_finetune_system_prompt(taxonomy)),
        ChatMessage::new(Role::User, paragraph.text.clone()),
    ])
}

/// A line of a labelled-paragraph file: `{"paragraph_id"?, "text", "label"}`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabeledParagraph {
    #[serde(default)]
    pub paragraph_id: Option<String>,
    pub text: String,
    pub label: String,
}

/// Reads labelled paragraphs, resolving labels against the taxonomy.
/// Missing ids become `row-{n}` (1-based).
pub fn read_labeled_jsonl(
    path: impl AsRef<Path>,
    taxonomy: &Taxonomy,
) -> Result<Vec<(ParagraphRecord, ClaimLabel)>, FinetuneError> {
    let reader = BufReader::new(File::open(path)?);
    let mut pairs = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let record: LabeledParagraph =
            serde_json::from_str(&line).map_err(|e| FinetuneError::MalformedInput {
                line: i + 1,
                message: e.to_string(),
            })?;
        let id = record
            .paragraph_id
            .unwrap_or_else(|| format!("row-{}", pairs.len() + 1));
        let label =
            taxonomy
                .parse_label(&record.label)
                .map_err(|_| FinetuneError::InvalidLabel {
                    paragraph_id: id.clone(),
                    label: record.label.clone(),
                })?;
        pairs.push((ParagraphRecord::standalone(id, record.text), label));
    }
    Ok(pairs)
}
