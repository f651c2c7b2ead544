//! Optional plain-HTTP article fetcher with best-effort main-text extraction.

use std::sync::OnceLock;
use std::time::Duration;

use regex::Regex;
use thiserror::Error;

use super::{domain_of, ArticleDocument};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum FetchError {
    #[error("not an http(s) url: {0}")]
    InvalidUrl(String),
    #[error("transport error: {0}")]
    Transport(String),
    #[error("http status {0}")]
    HttpStatus(u16),
    #[error("could not extract article text: {0}")]
    Extraction(String),
}

#[derive(Debug, Clone)]
pub struct FetchConfig {
    pub timeout: Duration,
    /// Retries after the first attempt, for transport errors and 5xx only.
    pub max_retries: u32,
    pub initial_backoff: Duration,
}

impl Default for FetchConfig {
    fn default() -> Self {
        Self {
            timeout: Duration::from_secs(20),
            max_retries: 2,
            initial_backoff: Duration::from_millis(500),
        }
    }
}

/// GETs `url` and extracts headline and body.
pub async fn fetch_article(
    client: &reqwest::Client,
    url: &str,
    config: &FetchConfig,
) -> Result<ArticleDocument, FetchError> {
    let parsed = url::Url::parse(url).map_err(|_| FetchError::InvalidUrl(url.to_string()))?;
    if !matches!(parsed.scheme(), "http" | "https") {
        return Err(FetchError::InvalidUrl(url.to_string()));
    }
    let mut backoff = config.initial_backoff;
    let mut attempt = 0;
    let html = loop {
        let result = async {
            let resp = client
                .get(parsed.clone())
                .timeout(config.timeout)
                .send()
                .await
                .map_err(|e| FetchError::Transport(e.to_string()))?;
            let status = resp.status();
            if !status.is_success() {
                return Err(FetchError::HttpStatus(status.as_u16()));
            }
            resp.text()
                .await
                .map_err(|e| FetchError::Transport(e.to_string()))
        }
        .await;
        let retryable = match &result {
            Err(FetchError::Transport(_)) => true,
            Err(FetchError::HttpStatus(code)) => *code >= 500,
            _ => false,
        };
        if retryable && attempt < config.max_retries {
            attempt += 1;
            tracing::debug!(url, attempt, "retrying fetch");
            tokio::time::sleep(backoff).await;
            backoff *= 2;
            continue;
        }
        break result?;
    };
    let mut doc = extract_document(&html)?;
    doc.url = Some(parsed.to_string());
    doc.domain = domain_of(&parsed);
    Ok(doc)
}

fn re(cell: &'static OnceLock<Regex>, pattern: &str) -> &'static Regex {
    cell.get_or_init(|| Regex::new(pattern).expect("valid regex"))
}

fn strip_tags(fragment: &str) -> String {
    static TAG: OnceLock<Regex> = OnceLock::new();
    let text = re(&TAG, r"(?s)<[^>]*>").replace_all(fragment, " ");
    let decoded = text
        .replace("&nbsp;", " ")
        .replace("&quot;", "\"")
        .replace("&#39;", "'")
        .replace("&apos;", "'")
        .replace("&lt;", "<")
        .replace("&gt;", ">")
        .replace("&amp;", "&");
    decoded.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Headline from `<title>`, body from `<p>` elements joined by blank lines
/// (falling back to the whole `<body>` text).
pub fn extract_document(html: &str) -> Result<ArticleDocument, FetchError> {
    static TITLE: OnceLock<Regex> = OnceLock::new();
    static PARA: OnceLock<Regex> = OnceLock::new();
    static NOISE: OnceLock<Regex> = OnceLock::new();
    static BODY: OnceLock<Regex> = OnceLock::new();

    let cleaned = re(
        &NOISE,
        r"(?is)<(script|style|noscript)[^>]*>.*?</(script|style|noscript)>",
    )
    .replace_all(html, " ");
    let headline = re(&TITLE, r"(?is)<title[^>]*>(.*?)</title>")
        .captures(&cleaned)
        .map(|c| strip_tags(&c[1]))
        .unwrap_or_default();
    let paragraphs: Vec<String> = re(&PARA, r"(?is)<p(?:\s[^>]*)?>(.*?)</p>")
        .captures_iter(&cleaned)
        .map(|c| strip_tags(&c[1]))
        .filter(|p| !p.is_empty())
        .collect();
    let body = if paragraphs.is_empty() {
        re(&BODY, r"(?is)<body[^>]*>(.*)</body>")
            .captures(&cleaned)
            .map(|c| strip_tags(&c[1]))
            .unwrap_or_default()
    } else {
        paragraphs.join("\n\n")
    };
    if headline.is_empty() && body.is_empty() {
        return Err(FetchError::Extraction("no title or body text".into()));
    }
    Ok(ArticleDocument {
        headline: Some(headline),
        body: Some(body),
        ..Default::default()
    })
}
