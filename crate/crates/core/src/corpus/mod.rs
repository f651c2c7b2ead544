//! Article ingestion, relevance and credibility filtering, and paragraph
//! segmentation.

mod credibility;
mod fetch;
mod keywords;
mod segment;

pub use credibility::{credibility_tag, CredibilityTables, CredibilityTag, MbfcCategory};
pub use fetch::{extract_document, fetch_article, FetchConfig, FetchError};
pub use keywords::{keyword_filter, load_keywords, KeywordList, DEFAULT_KEYWORDS};
pub use segment::{
    paragraph_id, segment_paragraphs, segment_paragraphs_with, ParagraphRecord, Segmentation,
    MIN_PARAGRAPH_WORDS,
};

use std::collections::HashSet;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CorpusError {
    #[error("malformed record: {0}")]
    MalformedRecord(String),
    #[error("unknown MBFC category {0:?}")]
    UnknownCategory(String),
    #[error("invalid NewsGuard score {0:?}")]
    InvalidScore(String),
    #[error("csv error: {0}")]
    Csv(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Platform {
    Facebook,
    X,
    #[default]
    Other,
}

impl Platform {
    fn parse_loose(text: &str) -> Self {
        match text.trim().to_ascii_lowercase().as_str() {
            "facebook" | "fb" => Platform::Facebook,
            "x" | "twitter" => Platform::X,
            _ => Platform::Other,
        }
    }
}

/// One raw input line of the corpus file. Only `url`, `headline` and `body`
/// are required.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ArticleDocument {
    #[serde(default)]
    pub url: Option<String>,
    #[serde(default)]
    pub domain: Option<String>,
    #[serde(default)]
    pub headline: Option<String>,
    #[serde(default)]
    pub body: Option<String>,
    #[serde(default)]
    pub published_at: Option<String>,
    #[serde(default)]
    pub platform: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArticleRecord {
    pub article_id: String,
    pub url: String,
    pub domain: String,
    pub headline: String,
    pub body: String,
    pub published_at: Option<NaiveDate>,
    pub platform: Platform,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RejectedRecord {
    /// 1-based line number in the input stream.
    pub line: usize,
    pub error: CorpusError,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct IngestOutcome {
    pub articles: Vec<ArticleRecord>,
    pub rejected: Vec<RejectedRecord>,
    pub duplicates: usize,
}

/// Canonical form used for deduplication and ids: parsed URL with lowercase
/// scheme and host and no fragment.
pub fn normalize_url(raw: &str) -> Result<url::Url, CorpusError> {
    let mut parsed = url::Url::parse(raw.trim())
        .map_err(|e| CorpusError::MalformedRecord(format!("bad url {raw:?}: {e}")))?;
    parsed.set_fragment(None);
    Ok(parsed)
}

/// Lowercase host with a leading `www.` removed.
pub fn domain_of(url: &url::Url) -> Option<String> {
    let host = url.host_str()?.to_ascii_lowercase();
    Some(host.strip_prefix("www.").unwrap_or(&host).to_string())
}

/// First 16 hex digits of SHA-256 over the normalized URL.
pub fn article_id_for(url: &url::Url) -> String {
    let digest = Sha256::digest(url.as_str().as_bytes());
    hex::encode(digest)[..16].to_string()
}

fn parse_date(text: &str) -> Result<NaiveDate, CorpusError> {
    let head = text.trim().get(..10).unwrap_or(text.trim());
    NaiveDate::parse_from_str(head, "%Y-%m-%d")
        .map_err(|_| CorpusError::MalformedRecord(format!("bad published_at {text:?}")))
}

/// Validates one document into an [`ArticleRecord`].
pub fn article_from_document(doc: ArticleDocument) -> Result<ArticleRecord, CorpusError> {
    let missing = |field: &str| CorpusError::MalformedRecord(format!("missing {field}"));
    let raw_url = doc.url.ok_or_else(|| missing("url"))?;
    let headline = doc.headline.ok_or_else(|| missing("headline"))?;
    let body = doc.body.ok_or_else(|| missing("body"))?;
    let url = normalize_url(&raw_url)?;
    let domain = match doc.domain {
        Some(d) if !d.trim().is_empty() => d.trim().to_ascii_lowercase(),
        _ => domain_of(&url).ok_or_else(|| missing("domain"))?,
    };
    let published_at = doc.published_at.as_deref().map(parse_date).transpose()?;
    Ok(ArticleRecord {
        article_id: article_id_for(&url),
        url: url.to_string(),
        domain,
        headline,
        body,
        published_at,
        platform: doc
            .platform
            .as_deref()
            .map(Platform::parse_loose)
            .unwrap_or_default(),
    })
}

/// Parses newline-delimited JSON article documents. Malformed lines are
/// logged and skipped; duplicate URLs keep the first occurrence.
pub fn ingest_articles<I, S>(lines: I) -> IngestOutcome
where
    I: IntoIterator<Item = S>,
    S: AsRef<str>,
{
    let mut outcome = IngestOutcome::default();
    let mut seen = HashSet::new();
    for (idx, line) in lines.into_iter().enumerate() {
        let line = line.as_ref();
        if line.trim().is_empty() {
            continue;
        }
        let parsed = serde_json::from_str::<ArticleDocument>(line)
            .map_err(|e| CorpusError::MalformedRecord(e.to_string()))
            .and_then(article_from_document);
        match parsed {
            Ok(article) => {
                if seen.insert(article.article_id.clone()) {
                    outcome.articles.push(article);
                } else {
                    outcome.duplicates += 1;
                }
            }
            Err(error) => {
                tracing::warn!(line = idx + 1, %error, "skipping article record");
                outcome.rejected.push(RejectedRecord {
                    line: idx + 1,
                    error,
                });
            }
        }
    }
    outcome
}
