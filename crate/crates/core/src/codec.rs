//! Model output parsing, seeded replacement of invalid responses, and
//! per-backend validity rates.
//!
//! Parsing never fails: every response maps to exactly one [`OutcomeKind`].
//! Invalid and transport-failed responses are then replaced by uniform draws
//! over the taxonomy from a [`SplitMix64`] stream seeded explicitly by the
//! caller, consumed in input order.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gateway::{RawModelResponse, TransportStatus};
use crate::prompts::PromptStyle;
use crate::rng::SplitMix64;
use crate::taxonomy::{ClaimLabel, LabelError, Taxonomy};

/// Characters of raw content kept on an outcome for auditing.
pub const EXCERPT_CHARS: usize = 200;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum CodecError {
    #[error("taxonomy is empty; nothing to sample replacements from")]
    EmptyTaxonomy,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutcomeKind {
    Valid,
    Invalid,
    TransportFailed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InvalidReason {
    NotJson,
    SchemaMismatch,
    UnknownLabel,
    RefusalOrChatter,
    Empty,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParseOutcome {
    pub kind: OutcomeKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<ClaimLabel>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reason: Option<InvalidReason>,
    pub raw_excerpt: String,
}

impl ParseOutcome {
    pub fn valid(label: ClaimLabel, content: &str) -> Self {
        Self {
            kind: OutcomeKind::Valid,
            label: Some(label),
            reason: None,
            raw_excerpt: excerpt(content),
        }
    }

    pub fn invalid(reason: InvalidReason, content: &str) -> Self {
        Self {
            kind: OutcomeKind::Invalid,
            label: None,
            reason: Some(reason),
            raw_excerpt: excerpt(content),
        }
    }

    pub fn transport_failed() -> Self {
        Self {
            kind: OutcomeKind::TransportFailed,
            label: None,
            reason: None,
            raw_excerpt: String::new(),
        }
    }

    pub fn is_valid(&self) -> bool {
        self.kind == OutcomeKind::Valid
    }
}

fn excerpt(content: &str) -> String {
    content.chars().take(EXCERPT_CHARS).collect()
}

/// Byte range of the first balanced `{...}` region, honouring JSON string
/// literals. `None` when no `{` occurs; `Some(Err(()))` when the first `{`
/// is never closed.
fn first_json_object(content: &str) -> Option<Result<&str, ()>> {
    let start = content.find('{')?;
    let mut depth = 0usize;
    let mut in_string = false;
    let mut escaped = false;
    for (offset, ch) in content[start..].char_indices() {
        if in_string {
            match ch {
                _ if escaped => escaped = false,
                '\\' => escaped = true,
                '"' => in_string = false,
                _ => {}
            }
            continue;
        }
        match ch {
            '"' => in_string = true,
            '{' => depth += 1,
            '}' => {
                depth -= 1;
                if depth == 0 {
                    return Some(Ok(&content[start..start + offset + 1]));
                }
            }
            _ => {}
        }
    }
    Some(Err(()))
}

fn parse_bare_label(trimmed: &str, taxonomy: &Taxonomy) -> Result<ClaimLabel, InvalidReason> {
    let token = trimmed
        .trim_end_matches(['.', ',', ';', ':', '!', '?'])
        .trim_end();
    match taxonomy.parse_label(token) {
        Ok(label) => Ok(label),
        Err(LabelError::Unknown(_)) => Err(InvalidReason::UnknownLabel),
        Err(LabelError::Malformed(_)) => Err(InvalidReason::RefusalOrChatter),
    }
}

fn parse_rubric_object(object: &str, taxonomy: &Taxonomy) -> Result<ClaimLabel, InvalidReason> {
    let value: serde_json::Value =
        serde_json::from_str(object).map_err(|_| InvalidReason::NotJson)?;
    let code = value.get("code").and_then(|v| v.as_str());
    let identifier = value.get("identifier").and_then(|v| {
        v.as_i64()
            .or_else(|| v.as_str().and_then(|s| s.trim().parse().ok()))
    });
    let claim = value.get("claim").and_then(|v| v.as_str());
    let (Some(code), Some(identifier), Some(_claim)) = (code, identifier, claim) else {
        return Err(InvalidReason::SchemaMismatch);
    };
    let label = match taxonomy.parse_label(code) {
        Ok(label) => label,
        Err(LabelError::Unknown(_)) => return Err(InvalidReason::UnknownLabel),
        Err(LabelError::Malformed(_)) => return Err(InvalidReason::SchemaMismatch),
    };
    if let Some(entry) = taxonomy.entry(label) {
        if entry.identifier != identifier {
            tracing::debug!(
                code,
                identifier,
                expected = entry.identifier,
                "identifier does not match taxonomy; code governs"
            );
        }
    }
    Ok(label)
}

/// Classifies a raw response. Rubric style expects the JSON response object
/// (a bare label is also accepted); the compact and fine-tuned styles expect
/// a bare label optionally followed by punctuation.
pub fn parse_response(
    raw: &RawModelResponse,
    taxonomy: &Taxonomy,
    style: PromptStyle,
) -> ParseOutcome {
    if raw.transport_status == TransportStatus::FailedAfterRetries {
        return ParseOutcome::transport_failed();
    }
    parse_content(&raw.content, taxonomy, style)
}

pub fn parse_content(content: &str, taxonomy: &Taxonomy, style: PromptStyle) -> ParseOutcome {
    let trimmed = content.trim();
    if trimmed.is_empty() {
        return ParseOutcome::invalid(InvalidReason::Empty, content);
    }
    let parsed = match style {
        PromptStyle::Rubric => match first_json_object(trimmed) {
            Some(Ok(object)) => parse_rubric_object(object, taxonomy),
            Some(Err(())) => Err(InvalidReason::NotJson),
            None => parse_bare_label(trimmed, taxonomy),
        },
        PromptStyle::CompactQa | PromptStyle::Finetune => parse_bare_label(trimmed, taxonomy),
    };
    match parsed {
        Ok(label) => ParseOutcome::valid(label, content),
        Err(reason) => ParseOutcome::invalid(reason, content),
    }
}

/// A parse outcome tagged with its item and backend.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabeledOutcome {
    pub paragraph_id: String,
    pub backend_name: String,
    pub outcome: ParseOutcome,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassificationResult {
    pub paragraph_id: String,
    pub backend_name: String,
    pub outcome: ParseOutcome,
    pub final_label: ClaimLabel,
    pub replaced: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub replacement_seed: Option<u64>,
    /// Position of the draw in the seeded replacement stream.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub replacement_seed_index: Option<u64>,
}

/// Gives every non-valid outcome a label drawn uniformly from the taxonomy.
/// Valid outcomes pass through unchanged.
pub fn replace_invalid(
    outcomes: &[LabeledOutcome],
    taxonomy: &Taxonomy,
    seed: u64,
) -> Result<Vec<ClassificationResult>, CodecError> {
    if taxonomy.is_empty() {
        return Err(CodecError::EmptyTaxonomy);
    }
    let mut rng = SplitMix64::new(seed);
    let mut draws = 0u64;
    let results = outcomes
        .iter()
        .map(|item| {
            let base = ClassificationResult {
                paragraph_id: item.paragraph_id.clone(),
                backend_name: item.backend_name.clone(),
                outcome: item.outcome.clone(),
                final_label: ClaimLabel::NO_CLAIM,
                replaced: false,
                replacement_seed: None,
                replacement_seed_index: None,
            };
            match (item.outcome.kind, item.outcome.label) {
                (OutcomeKind::Valid, Some(label)) => ClassificationResult {
                    final_label: label,
                    ..base
                },
                _ => {
                    let label = taxonomy.entries()[rng.index(taxonomy.len())].label;
                    let index = draws;
                    draws += 1;
                    ClassificationResult {
                        final_label: label,
                        replaced: true,
                        replacement_seed: Some(seed),
                        replacement_seed_index: Some(index),
                        ..base
                    }
                }
            }
        })
        .collect();
    Ok(results)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
pub struct ValidityRow {
    pub valid: usize,
    pub invalid: usize,
    pub transport_failed: usize,
    pub rate: f64,
}

/// Valid share per backend: `valid / (valid + invalid + transport_failed)`.
pub fn validity_rate(results: &[ClassificationResult]) -> BTreeMap<String, ValidityRow> {
    let mut table: BTreeMap<String, ValidityRow> = BTreeMap::new();
    for r in results {
        let row = table.entry(r.backend_name.clone()).or_default();
        match r.outcome.kind {
            OutcomeKind::Valid => row.valid += 1,
            OutcomeKind::Invalid => row.invalid += 1,
            OutcomeKind::TransportFailed => row.transport_failed += 1,
        }
    }
    for row in table.values_mut() {
        let total = row.valid + row.invalid + row.transport_failed;
        row.rate = row.valid as f64 / total as f64;
    }
    table
}
