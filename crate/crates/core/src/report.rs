//! Evaluation reports and their text renderings.
//!
//! Renderers only format numbers already computed by [`crate::metrics`];
//! stored values keep full precision and tables print two decimals.

use std::fmt::{self, Write as _};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::codec::ValidityRow;
use crate::metrics::{ClassSetPolicy, Evaluation};
use crate::prompts::PromptStyle;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum EvaluationLevel {
    #[default]
    #[serde(alias = "super")]
    SuperClaim,
    #[serde(alias = "sub")]
    SubClaim,
}

impl FromStr for EvaluationLevel {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "super" | "super_claim" | "super-claim" => Ok(Self::SuperClaim),
            "sub" | "sub_claim" | "sub-claim" => Ok(Self::SubClaim),
            other => Err(format!(
                "unknown evaluation level {other:?} (expected super or sub)"
            )),
        }
    }
}

impl fmt::Display for EvaluationLevel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::SuperClaim => "super_claim",
            Self::SubClaim => "sub_claim",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BackendReport {
    pub backend: String,
    pub model_id: String,
    pub items: usize,
    /// False when every request for this backend failed in transport.
    pub complete: bool,
    pub validity: ValidityRow,
    pub evaluation: Evaluation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub level: EvaluationLevel,
    pub prompt_style: PromptStyle,
    pub class_set_policy: ClassSetPolicy,
    pub replacement_seed: u64,
    pub taxonomy_version: String,
    pub backends: Vec<BackendReport>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ReportFormat {
    #[default]
    Table,
    Json,
}

impl FromStr for ReportFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "table" => Ok(Self::Table),
            "json" => Ok(Self::Json),
            other => Err(format!(
                "unknown report format {other:?} (expected table or json)"
            )),
        }
    }
}

/// Backends by macro F1, highest first; equal F1 falls back to the name.
/// Incomplete backends go last.
pub fn ranked(report: &EvaluationReport) -> Vec<&BackendReport> {
    let mut rows: Vec<&BackendReport> = report.backends.iter().collect();
    rows.sort_by(|a, b| {
        b.complete
            .cmp(&a.complete)
            .then(
                b.evaluation
                    .macro_avg
                    .f1
                    .total_cmp(&a.evaluation.macro_avg.f1),
            )
            .then_with(|| a.backend.cmp(&b.backend))
    });
    rows
}

fn name_width<'a>(names: impl Iterator<Item = &'a str>, header: &str) -> usize {
    names.map(str::len).chain([header.len()]).max().unwrap_or(0)
}

/// Model ranking with macro-averaged precision, recall and F1.
pub fn render_ranking_table(report: &EvaluationReport) -> String {
    let rows = ranked(report);
    let w = name_width(rows.iter().map(|r| r.backend.as_str()), "Model");
    let mut out = String::new();
    let _ = writeln!(out, "{:<w$}  {:>4}  {:>4}  {:>4}", "Model", "P", "R", "F1");
    for row in rows {
        let avg = &row.evaluation.macro_avg;
        let _ = write!(
            out,
            "{:<w$}  {:.2}  {:.2}  {:.2}",
            row.backend, avg.precision, avg.recall, avg.f1
        );
        if !row.complete {
            out.push_str("  (incomplete)");
        }
        out.push('\n');
    }
    out
}

/// Per-class precision, recall, F1 and support, followed by accuracy and
/// both averages.
pub fn render_class_table(row: &BackendReport) -> String {
    let eval = &row.evaluation;
    let labels: Vec<&str> = eval.per_class.iter().map(|c| c.class.as_str()).collect();
    let w = name_width(labels.iter().copied(), "Weighted avg");
    let total: u64 = eval.per_class.iter().map(|c| c.support).sum();
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{:<w$}  {:>9}  {:>6}  {:>4}  {:>7}",
        "", "Precision", "Recall", "F1", "Support"
    );
    for c in &eval.per_class {
        let _ = writeln!(
            out,
            "{:<w$}  {:>9.2}  {:>6.2}  {:>4.2}  {:>7}",
            c.class, c.precision, c.recall, c.f1, c.support
        );
    }
    let _ = writeln!(
        out,
        "{:<w$}  {:>9}  {:>6}  {:>4.2}  {:>7}",
        "Accuracy", "", "", eval.accuracy, total
    );
    for (name, avg) in [
        ("Macro avg", &eval.macro_avg),
        ("Weighted avg", &eval.weighted_avg),
    ] {
        let _ = writeln!(
            out,
            "{:<w$}  {:>9.2}  {:>6.2}  {:>4.2}  {:>7}",
            name, avg.precision, avg.recall, avg.f1, total
        );
    }
    out
}

/// Valid, invalid and transport-failed counts per backend.
pub fn render_validity_table(report: &EvaluationReport) -> String {
    let w = name_width(report.backends.iter().map(|b| b.backend.as_str()), "Model");
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{:<w$}  {:>6}  {:>7}  {:>9}  {:>8}",
        "Model", "Valid", "Invalid", "Transport", "Validity"
    );
    let mut rows: Vec<&BackendReport> = report.backends.iter().collect();
    rows.sort_by(|a, b| a.backend.cmp(&b.backend));
    for row in rows {
        let v = &row.validity;
        let _ = writeln!(
            out,
            "{:<w$}  {:>6}  {:>7}  {:>9}  {:>8.2}",
            row.backend, v.valid, v.invalid, v.transport_failed, v.rate
        );
    }
    out
}

pub fn render_report(report: &EvaluationReport, format: ReportFormat) -> String {
    match format {
        ReportFormat::Json => {
            let mut s = serde_json::to_string_pretty(report).expect("report serializes");
            s.push('\n');
            s
        }
        ReportFormat::Table => {
            let policy = match &report.class_set_policy {
                ClassSetPolicy::AllGoldClasses => "all gold classes".to_string(),
                ClassSetPolicy::ExplicitList(list) => list.join(", "),
            };
            let mut out = format!(
                "Level: {}  Prompt: {}  Macro classes: {}  Seed: {}\n\n",
                report.level, report.prompt_style, policy, report.replacement_seed
            );
            out.push_str(&render_ranking_table(report));
            out.push('\n');
            out.push_str(&render_validity_table(report));
            for row in ranked(report) {
                let _ = write!(out, "\n{}\n", row.backend);
                out.push_str(&render_class_table(row));
            }
            out
        }
    }
}
