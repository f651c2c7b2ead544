use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use super::ArticleRecord;

/// Blocks with fewer whitespace-delimited words are dropped (bylines,
/// captions).
pub const MIN_PARAGRAPH_WORDS: usize = 5;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParagraphRecord {
    pub paragraph_id: String,
    pub article_id: String,
    pub index: usize,
    pub text: String,
}

impl ParagraphRecord {
    /// A paragraph that does not belong to a segmented article (gold
    /// datasets, ad-hoc prompts).
    pub fn standalone(paragraph_id: impl Into<String>, text: impl Into<String>) -> Self {
        let paragraph_id = paragraph_id.into();
        Self {
            article_id: paragraph_id.clone(),
            paragraph_id,
            index: 0,
            text: text.into(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Segmentation {
    pub paragraphs: Vec<ParagraphRecord>,
    /// The body was empty or whitespace only.
    pub empty_body: bool,
    /// Blocks dropped for being shorter than [`MIN_PARAGRAPH_WORDS`].
    pub dropped_short: usize,
}

fn blank_line() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"\n[ \t\r\f\v]*\n\s*").expect("valid regex"))
}

pub fn paragraph_id(article_id: &str, index: usize) -> String {
    format!("{article_id}-p{index:04}")
}

/// Splits the body on blank lines, trims each block and keeps blocks of at
/// least [`MIN_PARAGRAPH_WORDS`] words, in order.
pub fn segment_paragraphs(article: &ArticleRecord) -> Segmentation {
    segment_paragraphs_with(article, MIN_PARAGRAPH_WORDS)
}

/// [`segment_paragraphs`] with an explicit minimum word count.
pub fn segment_paragraphs_with(article: &ArticleRecord, min_words: usize) -> Segmentation {
    let body = article.body.replace("\r\n", "\n");
    if body.trim().is_empty() {
        return Segmentation {
            empty_body: true,
            ..Default::default()
        };
    }
    let mut out = Segmentation::default();
    for block in blank_line().split(&body) {
        let text = block.trim();
        if text.is_empty() {
            continue;
        }
        if text.split_whitespace().count() < min_words {
            out.dropped_short += 1;
            continue;
        }
        let index = out.paragraphs.len();
        out.paragraphs.push(ParagraphRecord {
            paragraph_id: paragraph_id(&article.article_id, index),
            article_id: article.article_id.clone(),
            index,
            text: text.to_string(),
        });
    }
    out
}
