//! Prompt families: the coding-rubric system/user pair, the compact
//! question-answer template, and the fine-tuning system prompt.
//!
//! Templates live as text files under `prompts/` and are compiled in as
//! defaults; [`PromptTemplates::from_dir`] loads an edited copy.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::ParagraphRecord;
use crate::taxonomy::{Taxonomy, TaxonomyEntry};

#[derive(Debug, Error)]
pub enum PromptError {
    #[error("paragraph text is empty")]
    EmptyText,
    #[error("cannot read template {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum PromptStyle {
    #[default]
    Rubric,
    #[serde(alias = "compact_qa")]
    CompactQa,
    Finetune,
}

impl FromStr for PromptStyle {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "rubric" => Ok(Self::Rubric),
            "compact-qa" | "compact_qa" | "qa" => Ok(Self::CompactQa),
            "finetune" | "fine-tune" | "fine-tuned" => Ok(Self::Finetune),
            other => Err(format!("unknown prompt style {other:?}")),
        }
    }
}

impl fmt::Display for PromptStyle {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Rubric => "rubric",
            Self::CompactQa => "compact-qa",
            Self::Finetune => "finetune",
        })
    }
}

/// A rendered prompt ready for a chat-completion request.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptBundle {
    pub style: PromptStyle,
    pub system_text: Option<String>,
    pub user_text: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptTemplates {
    pub rubric_system: String,
    pub rubric_user: String,
    pub compact_qa: String,
    pub finetune_system: String,
}

fn strip_final_newline(text: &str) -> String {
    text.strip_suffix('\n').unwrap_or(text).to_string()
}

impl Default for PromptTemplates {
    fn default() -> Self {
        Self {
            rubric_system: strip_final_newline(include_str!("../prompts/rubric_system.txt")),
            rubric_user: strip_final_newline(include_str!("../prompts/rubric_user.txt")),
            compact_qa: strip_final_newline(include_str!("../prompts/compact_qa.txt")),
            finetune_system: strip_final_newline(include_str!("../prompts/finetune_system.txt")),
        }
    }
}

impl PromptTemplates {
    /// Loads the four template files from `dir` (same file names as the
    /// bundled `prompts/` directory).
    pub fn from_dir(dir: impl AsRef<Path>) -> Result<Self, PromptError> {
        let read = |name: &str| {
            let path = dir.as_ref().join(name);
            std::fs::read_to_string(&path)
                .map(|t| strip_final_newline(&t))
                .map_err(|source| PromptError::Io {
                    path: path.display().to_string(),
                    source,
                })
        };
        Ok(Self {
            rubric_system: read("rubric_system.txt")?,
            rubric_user: read("rubric_user.txt")?,
            compact_qa: read("compact_qa.txt")?,
            finetune_system: read("finetune_system.txt")?,
        })
    }

    pub fn render_rubric_system_prompt(&self, taxonomy: &Taxonomy) -> String {
        // TaxonomyEntry serialises as {"code", "identifier", "claim"}, the
        // rubric shape, and serde_json's pretty printer indents by two spaces.
        let claims: Vec<&TaxonomyEntry> = taxonomy.claims().collect();
        let rubric = serde_json::to_string_pretty(&claims).expect("rubric serialises");
        let no_claim =
            serde_json::to_string_pretty(taxonomy.no_claim()).expect("no-claim entry serialises");
        substitute(
            &self.rubric_system,
            &[("rubric", rubric.as_str()), ("no_claim", no_claim.as_str())],
        )
    }

    pub fn render_user_prompt(&self, paragraph: &ParagraphRecord) -> Result<String, PromptError> {
        let text = non_empty(paragraph)?;
        Ok(substitute(&self.rubric_user, &[("text", text)]))
    }

    pub fn render_qa_prompt(
        &self,
        paragraph: &ParagraphRecord,
        taxonomy: &Taxonomy,
    ) -> Result<String, PromptError> {
        let text = non_empty(paragraph)?;
        let classes = taxonomy
            .entries()
            .iter()
            .map(|e| {
                let claim = e.claim_text.trim_end();
                let stop = if claim.ends_with('.') { "" } else { "." };
                format!("{}: {claim}{stop}", e.label)
            })
            .collect::<Vec<_>>()
            .join("\n");
        let count = taxonomy.len().to_string();
        Ok(substitute(
            &self.compact_qa,
            &[
                ("class_count", count.as_str()),
                ("classes", classes.as_str()),
                ("text", text),
            ],
        ))
    }

    pub fn render_finetune_system_prompt(&self, taxonomy: &Taxonomy) -> String {
        let labels = taxonomy
            .labels()
            .map(|l| l.code())
            .collect::<Vec<_>>()
            .join(", ");
        substitute(&self.finetune_system, &[("labels", labels.as_str())])
    }

    /// Renders the bundle a backend receives for `paragraph` under `style`.
    pub fn bundle(
        &self,
        style: PromptStyle,
        paragraph: &ParagraphRecord,
        taxonomy: &Taxonomy,
    ) -> Result<PromptBundle, PromptError> {
        let (system_text, user_text) = match style {
            PromptStyle::Rubric => (
                Some(self.render_rubric_system_prompt(taxonomy)),
                self.render_user_prompt(paragraph)?,
            ),
            PromptStyle::CompactQa => (None, self.render_qa_prompt(paragraph, taxonomy)?),
            PromptStyle::Finetune => (
                Some(self.render_finetune_system_prompt(taxonomy)),
                non_empty(paragraph)?.to_string(),
            ),
        };
        Ok(PromptBundle {
            style,
            system_text,
            user_text,
        })
    }
}

fn non_empty(paragraph: &ParagraphRecord) -> Result<&str, PromptError> {
    if paragraph.text.trim().is_empty() {
        Err(PromptError::EmptyText)
    } else {
        Ok(&paragraph.text)
    }
}

/// Single left-to-right pass over `template`, replacing `{name}` tokens that
/// appear in `values`. Inserted text is never rescanned; other braces are
/// copied as-is.
pub fn substitute(template: &str, values: &[(&str, &str)]) -> String {
    let mut out = String::with_capacity(template.len());
    let mut rest = template;
    while let Some(open) = rest.find('{') {
        out.push_str(&rest[..open]);
        let after = &rest[open + 1..];
        let name_len = after
            .bytes()
            .take_while(|b| b.is_ascii_lowercase() || *b == b'_')
            .count();
        let closes = after.as_bytes().get(name_len) == Some(&b'}');
        let value = closes
            .then(|| values.iter().find(|(k, _)| *k == &after[..name_len]))
            .flatten();
        match value {
            Some((_, v)) if name_len > 0 => {
                out.push_str(v);
                rest = &after[name_len + 1..];
            }
            _ => {
                out.push('{');
                rest = after;
            }
        }
    }
    out.push_str(rest);
    out
}

pub fn render_rubric_system_prompt(taxonomy: &Taxonomy) -> String {
    PromptTemplates::default().render_rubric_system_prompt(taxonomy)
}

pub fn render_user_prompt(paragraph: &ParagraphRecord) -> Result<String, PromptError> {
    PromptTemplates::default().render_user_prompt(paragraph)
}

pub fn render_qa_prompt(
    paragraph: &ParagraphRecord,
    taxonomy: &Taxonomy,
) -> Result<String, PromptError> {
    PromptTemplates::default().render_qa_prompt(paragraph, taxonomy)
}

pub fn render_finetune_system_prompt(taxonomy: &Taxonomy) -> String {
    PromptTemplates::default().render_finetune_system_prompt(taxonomy)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::taxonomy::load_taxonomy;

    fn para(text: &str) -> ParagraphRecord {
        ParagraphRecord::standalone("p1", text)
    }

    #[test]
    fn substitute_is_single_pass() {
        assert_eq!(substitute("a {x} b", &[("x", "{x}")]), "a {x} b");
        assert_eq!(
            substitute("{ \"k\": 1 } {y}", &[("x", "1")]),
            "{ \"k\": 1 } {y}"
        );
        assert_eq!(substitute("{x}{x}", &[("x", "1")]), "11");
        assert_eq!(substitute("{}", &[("", "no")]), "{}");
    }

    #[test]
    fn user_prompt_keeps_literal_placeholder_in_content() {
        let templates = PromptTemplates::default();
        let text = "The {text} token stays in place here.";
        let rendered = templates.render_user_prompt(&para(text)).unwrap();
        assert_eq!(rendered.matches(text).count(), 1);
        assert_eq!(
            rendered.len(),
            templates.rubric_user.len() - "{text}".len() + text.len()
        );
        assert!(rendered.ends_with("Answer:"));
    }

    #[test]
    fn empty_text_rejected() {
        let tax = Taxonomy::default_cards();
        assert!(matches!(
            render_user_prompt(&para("")),
            Err(PromptError::EmptyText)
        ));
        assert!(matches!(
            render_qa_prompt(&para("  "), &tax),
            Err(PromptError::EmptyText)
        ));
    }

    #[test]
    fn degenerate_taxonomy() {
        let tax = load_taxonomy(r#"[{"code":"0_0","identifier":0,"claim":"no claim"}]"#).unwrap();
        let system = render_rubric_system_prompt(&tax);
        assert!(system.contains("answer the task assigned to you:\n[]\n"));
        assert!(system.contains("\"code\": \"0_0\""));
        let qa = render_qa_prompt(&para("some text"), &tax).unwrap();
        assert!(qa.contains("Classes:\n0_0: no claim.\n\nRespond"));
        assert!(qa.contains("one of the 1 classes"));
        assert!(render_finetune_system_prompt(&tax).contains("comma: 0_0. Your"));
    }

    #[test]
    fn finetune_label_order_follows_taxonomy() {
        let tax = Taxonomy::default_cards();
        let text = render_finetune_system_prompt(&tax);
        let codes: Vec<String> = tax.labels().map(|l| l.code()).collect();
        assert!(text.contains(&codes.join(", ")));
        assert_eq!(text, render_finetune_system_prompt(&tax));
    }

    #[test]
    fn bundles_by_style() {
        let tax = Taxonomy::default_cards();
        let t = PromptTemplates::default();
        let p = para("Paragraph text for the bundle.");
        let rubric = t.bundle(PromptStyle::Rubric, &p, &tax).unwrap();
        assert!(rubric.system_text.as_deref().is_some_and(|s| !s.is_empty()));
        let qa = t.bundle(PromptStyle::CompactQa, &p, &tax).unwrap();
        assert!(qa.system_text.is_none());
        assert_eq!(qa.user_text.matches(&p.text).count(), 1);
        let ft = t.bundle(PromptStyle::Finetune, &p, &tax).unwrap();
        assert_eq!(ft.user_text, p.text);
    }

    #[test]
    fn style_parsing() {
        assert_eq!(
            "compact-qa".parse::<PromptStyle>(),
            Ok(PromptStyle::CompactQa)
        );
        assert_eq!("RUBRIC".parse::<PromptStyle>(), Ok(PromptStyle::Rubric));
        assert!("other".parse::<PromptStyle>().is_err());
        let json = serde_json::to_string(&PromptStyle::CompactQa).unwrap();
        assert_eq!(json, "\"compact-qa\"");
    }
}
