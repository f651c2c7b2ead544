//! Climate keyword relevance filter.
//!
//! Matching is case-insensitive. Tokens are maximal runs of letters, digits
//! and hyphens; a keyword matches where its text occurs with its first token
//! starting and its last token ending on token boundaries. Runs of whitespace
//! in the searched text are collapsed to single spaces first, so multi-word
//! keywords match as contiguous phrases.

use std::path::Path;

use super::ArticleRecord;

/// Bundled keyword list, one keyword per line.
pub const DEFAULT_KEYWORDS: &str = include_str!("../../data/keywords.txt");

/// Words of the body (after the headline) that the filter inspects.
pub const BODY_WORD_WINDOW: usize = 250;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct KeywordList {
    keywords: Vec<String>,
}

impl KeywordList {
    pub fn new<I, S>(keywords: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let keywords = keywords
            .into_iter()
            .map(|k| normalize(k.as_ref()))
            .filter(|k| !k.is_empty())
            .collect();
        Self { keywords }
    }

    pub fn parse(text: &str) -> Self {
        Self::new(text.lines())
    }

    pub fn default_climate() -> Self {
        Self::parse(DEFAULT_KEYWORDS)
    }

    pub fn len(&self) -> usize {
        self.keywords.len()
    }

    pub fn is_empty(&self) -> bool {
        self.keywords.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &str> {
        self.keywords.iter().map(String::as_str)
    }

    /// True when any keyword occurs in `text`.
    pub fn matches_text(&self, text: &str) -> bool {
        let haystack = normalize(text);
        self.keywords
            .iter()
            .any(|k| contains_on_boundaries(&haystack, k))
    }
}

pub fn load_keywords(path: impl AsRef<Path>) -> std::io::Result<KeywordList> {
    Ok(KeywordList::parse(&std::fs::read_to_string(path)?))
}

fn is_token_char(c: char) -> bool {
    c.is_alphanumeric() || c == '-'
}

fn normalize(text: &str) -> String {
    text.split_whitespace()
        .collect::<Vec<_>>()
        .join(" ")
        .to_lowercase()
}

fn contains_on_boundaries(haystack: &str, needle: &str) -> bool {
    if needle.is_empty() {
        return false;
    }
    let mut from = 0;
    while let Some(offset) = haystack[from..].find(needle) {
        let start = from + offset;
        let end = start + needle.len();
        let before_ok = haystack[..start]
            .chars()
            .next_back()
            .is_none_or(|c| !is_token_char(c));
        let after_ok = haystack[end..]
            .chars()
            .next()
            .is_none_or(|c| !is_token_char(c));
        if before_ok && after_ok {
            return true;
        }
        // Advance by one character to find overlapping occurrences.
        from = start + haystack[start..].chars().next().map_or(1, char::len_utf8);
    }
    false
}

/// Headline in full, plus the first 250 whitespace-delimited words of the
/// body. The two fields are searched separately.
pub fn keyword_filter(article: &ArticleRecord, keywords: &KeywordList) -> bool {
    if keywords.matches_text(&article.headline) {
        return true;
    }
    let window = article
        .body
        .split_whitespace()
        .take(BODY_WORD_WINDOW)
        .collect::<Vec<_>>()
        .join(" ");
    keywords.matches_text(&window)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Platform;

    fn article(headline: &str, body: &str) -> ArticleRecord {
        ArticleRecord {
            article_id: "a".into(),
            url: "https://example.com".into(),
            domain: "example.com".into(),
            headline: headline.into(),
            body: body.into(),
            published_at: None,
            platform: Platform::Other,
        }
    }

    #[test]
    fn default_list_has_35_terms() {
        let list = KeywordList::default_climate();
        assert_eq!(list.len(), 35);
        assert!(list.iter().any(|k| k == "ipcc"));
    }

    #[test]
    fn headline_match() {
        let kw = KeywordList::default_climate();
        assert!(keyword_filter(&article("New IPCC report lands", ""), &kw));
        assert!(!keyword_filter(
            &article("Local team wins", "nothing here"),
            &kw
        ));
    }

    #[test]
    fn body_window_is_250_words() {
        let kw = KeywordList::default_climate();
        let filler = vec!["word"; 250].join(" ");
        let late = format!("{filler} climate change");
        assert!(!keyword_filter(&article("headline", &late), &kw));
        let filler = vec!["word"; 248].join(" ");
        let edge = format!("{filler} climate change");
        assert!(keyword_filter(&article("headline", &edge), &kw));
    }

    #[test]
    fn boundaries_are_enforced() {
        let kw = KeywordList::new(["climate change", "ipcc", "net zero"]);
        assert!(!kw.matches_text("epic climate changeover"));
        assert!(!kw.matches_text("bioclimate change"));
        assert!(!kw.matches_text("the IPCC-backed study"));
        assert!(kw.matches_text("(IPCC)"));
        assert!(kw.matches_text("CLIMATE\n  Change!"));
        assert!(kw.matches_text("reaching net zero."));
        assert!(!kw.matches_text("net-zero"));
    }
}
