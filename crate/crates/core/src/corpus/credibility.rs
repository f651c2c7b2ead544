//! Domain-level credibility tagging from MBFC categories and NewsGuard scores.

use std::collections::HashMap;
use std::io::Read;

use serde::{Deserialize, Serialize};

use super::{ArticleRecord, CorpusError};

/// NewsGuard scores at or below this mark an untrustworthy source.
pub const NEWSGUARD_THRESHOLD: f64 = 60.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MbfcCategory {
    LeastBiased,
    Left,
    LeftCenter,
    RightCenter,
    Right,
    ConspiracyPseudoscience,
    Questionable,
    ProScience,
    Satire,
}

impl MbfcCategory {
    /// Accepts the spellings found in MBFC exports ("Right Bias",
    /// "Questionable Sources", "Conspiracy-Pseudoscience", ...).
    pub fn parse(text: &str) -> Option<Self> {
        let key: String = text
            .trim()
            .to_lowercase()
            .chars()
            .map(|c| if c.is_alphanumeric() { c } else { '_' })
            .collect();
        let key = key
            .split('_')
            .filter(|s| !s.is_empty())
            .collect::<Vec<_>>()
            .join("_");
        let cat = match key.as_str() {
            "least_biased" | "least_bias" | "center" => Self::LeastBiased,
            "left" | "left_bias" => Self::Left,
            "left_center" | "left_center_bias" => Self::LeftCenter,
            "right_center" | "right_center_bias" => Self::RightCenter,
            "right" | "right_bias" => Self::Right,
            "conspiracy_pseudoscience" | "conspiracy_pseudocience" | "conspiracy" => {
                Self::ConspiracyPseudoscience
            }
            "questionable" | "questionable_source" | "questionable_sources" => Self::Questionable,
            "pro_science" => Self::ProScience,
            "satire" => Self::Satire,
            _ => return None,
        };
        Some(cat)
    }

    pub fn is_low_credibility(self) -> bool {
        matches!(
            self,
            Self::Right | Self::ConspiracyPseudoscience | Self::Questionable
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CredibilityTag {
    pub mbfc_category: Option<MbfcCategory>,
    pub newsguard_score: Option<f64>,
    pub low_credibility: bool,
}

impl CredibilityTag {
    pub fn new(mbfc_category: Option<MbfcCategory>, newsguard_score: Option<f64>) -> Self {
        let low_credibility = mbfc_category.is_some_and(MbfcCategory::is_low_credibility)
            || newsguard_score.is_some_and(|s| s <= NEWSGUARD_THRESHOLD);
        Self {
            mbfc_category,
            newsguard_score,
            low_credibility,
        }
    }
}

/// Lookup tables keyed by lowercase domain.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct CredibilityTables {
    pub mbfc: HashMap<String, MbfcCategory>,
    pub newsguard: HashMap<String, f64>,
}

fn domain_key(domain: &str) -> String {
    let d = domain.trim().to_ascii_lowercase();
    d.strip_prefix("www.").map(str::to_string).unwrap_or(d)
}

fn two_column_rows<R: Read>(reader: R) -> Result<Vec<(String, String)>, CorpusError> {
    let mut csv = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(reader);
    let mut rows = Vec::new();
    for (i, record) in csv.records().enumerate() {
        let record = record.map_err(|e| CorpusError::Csv(e.to_string()))?;
        if record.len() < 2 {
            return Err(CorpusError::Csv(format!(
                "row {} has {} columns, expected 2",
                i + 1,
                record.len()
            )));
        }
        if i == 0 && record[0].eq_ignore_ascii_case("domain") {
            continue;
        }
        rows.push((domain_key(&record[0]), record[1].to_string()));
    }
    Ok(rows)
}

impl CredibilityTables {
    /// Reads `domain,category` rows; a leading `domain,...` header is skipped.
    pub fn read_mbfc<R: Read>(&mut self, reader: R) -> Result<(), CorpusError> {
        for (domain, category) in two_column_rows(reader)? {
            let cat = MbfcCategory::parse(&category)
                .ok_or_else(|| CorpusError::UnknownCategory(category.clone()))?;
            self.mbfc.insert(domain, cat);
        }
        Ok(())
    }

    /// Reads `domain,score` rows with scores in 0..=100.
    pub fn read_newsguard<R: Read>(&mut self, reader: R) -> Result<(), CorpusError> {
        for (domain, score) in two_column_rows(reader)? {
            let value: f64 = score
                .parse()
                .map_err(|_| CorpusError::InvalidScore(score.clone()))?;
            if !(0.0..=100.0).contains(&value) {
                return Err(CorpusError::InvalidScore(score));
            }
            self.newsguard.insert(domain, value);
        }
        Ok(())
    }

    pub fn tag_domain(&self, domain: &str) -> CredibilityTag {
        let key = domain_key(domain);
        CredibilityTag::new(
            self.mbfc.get(&key).copied(),
            self.newsguard.get(&key).copied(),
        )
    }
}

pub fn credibility_tag(article: &ArticleRecord, tables: &CredibilityTables) -> CredibilityTag {
    tables.tag_domain(&article.domain)
}
