//! Claim label space.
//!
//! A [`ClaimLabel`] pairs a super-claim category (0 to 5) with a sub-claim
//! index and renders as `"super_sub"`, e.g. `"5_2"`. Label `0_0` means no
//! claim. The [`Taxonomy`] is data-driven: it is loaded from a JSON array of
//! `{"code", "identifier", "claim"}` objects, and the bundled default holds the
//! 27 labels of the coding rubric.

use std::collections::HashSet;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use sha2::{Digest, Sha256};
use thiserror::Error;

/// Bundled taxonomy document.
pub const DEFAULT_TAXONOMY_JSON: &str = include_str!("../data/taxonomy.json");

/// Highest super-claim category.
pub const MAX_SUPER_CLAIM: u8 = 5;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum LabelError {
    #[error("malformed label {0:?}: expected DIGITS_DIGITS")]
    Malformed(String),
    #[error("label {0:?} is not in the active taxonomy")]
    Unknown(String),
}

#[derive(Debug, Error)]
pub enum TaxonomyError {
    #[error("taxonomy document is not valid JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error("cannot read taxonomy file {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("duplicate label {0}")]
    DuplicateLabel(String),
    #[error("duplicate identifier {identifier} on label {code}")]
    DuplicateIdentifier { code: String, identifier: i64 },
    #[error("malformed code {0:?}")]
    MalformedCode(String),
    #[error("entry {0} has an empty claim text")]
    EmptyClaim(String),
    #[error("taxonomy has no 0_0 \"no claim\" entry")]
    MissingNoClaim,
}

/// A super-claim/sub-claim pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ClaimLabel {
    super_claim: u8,
    sub_claim: u8,
}

impl ClaimLabel {
    pub const NO_CLAIM: ClaimLabel = ClaimLabel {
        super_claim: 0,
        sub_claim: 0,
    };

    /// Checks the shape invariants only (super in 0..=5, super 0 implies sub
    /// 0). Membership in a taxonomy is checked by [`Taxonomy::parse_label`].
    pub fn new(super_claim: u8, sub_claim: u8) -> Option<Self> {
        if super_claim > MAX_SUPER_CLAIM || (super_claim == 0 && sub_claim != 0) {
            return None;
        }
        Some(Self {
            super_claim,
            sub_claim,
        })
    }

    pub fn super_claim(&self) -> u8 {
        self.super_claim
    }

    pub fn sub_claim(&self) -> u8 {
        self.sub_claim
    }

    pub fn is_no_claim(&self) -> bool {
        *self == Self::NO_CLAIM
    }

    pub fn code(&self) -> String {
        self.to_string()
    }

    /// Parses the `D_D` shape after trimming surrounding whitespace.
    pub fn parse_shape(text: &str) -> Result<Self, LabelError> {
        let trimmed = text.trim();
        let malformed = || LabelError::Malformed(trimmed.to_string());
        let (left, right) = trimmed.split_once('_').ok_or_else(malformed)?;
        let digits = |s: &str| !s.is_empty() && s.bytes().all(|b| b.is_ascii_digit());
        if !digits(left) || !digits(right) {
            return Err(malformed());
        }
        // Well-formed but out of range values are unknown rather than malformed.
        let unknown = || LabelError::Unknown(trimmed.to_string());
        let super_claim: u8 = left.parse().map_err(|_| unknown())?;
        let sub_claim: u8 = right.parse().map_err(|_| unknown())?;
        ClaimLabel::new(super_claim, sub_claim).ok_or_else(unknown)
    }
}

impl fmt::Display for ClaimLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}_{}", self.super_claim, self.sub_claim)
    }
}

impl FromStr for ClaimLabel {
    type Err = LabelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ClaimLabel::parse_shape(s)
    }
}

impl Serialize for ClaimLabel {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for ClaimLabel {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let text = String::deserialize(deserializer)?;
        ClaimLabel::parse_shape(&text).map_err(serde::de::Error::custom)
    }
}

/// The integer before the underscore.
pub fn super_claim_of(label: ClaimLabel) -> u8 {
    label.super_claim
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaxonomyEntry {
    #[serde(rename = "code")]
    pub label: ClaimLabel,
    pub identifier: i64,
    #[serde(rename = "claim")]
    pub claim_text: String,
}

#[derive(Debug, Deserialize)]
struct RawEntry {
    code: String,
    identifier: i64,
    claim: String,
}

/// Ordered, validated label set.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Taxonomy {
    entries: Vec<TaxonomyEntry>,
    version: String,
}

impl Taxonomy {
    /// The bundled 27-label taxonomy.
    pub fn default_cards() -> Self {
        load_taxonomy(DEFAULT_TAXONOMY_JSON).expect("bundled taxonomy is valid")
    }

    pub fn from_path(path: impl AsRef<Path>) -> Result<Self, TaxonomyError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| TaxonomyError::Io {
            path: path.display().to_string(),
            source,
        })?;
        load_taxonomy(&text)
    }

    pub fn entries(&self) -> &[TaxonomyEntry] {
        &self.entries
    }

    /// Content tag: `sha256:` followed by the first 12 hex digits of the
    /// document bytes.
    pub fn version(&self) -> &str {
        &self.version
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn labels(&self) -> impl Iterator<Item = ClaimLabel> + '_ {
        self.entries.iter().map(|e| e.label)
    }

    pub fn contains(&self, label: ClaimLabel) -> bool {
        self.entries.iter().any(|e| e.label == label)
    }

    pub fn entry(&self, label: ClaimLabel) -> Option<&TaxonomyEntry> {
        self.entries.iter().find(|e| e.label == label)
    }

    pub fn position(&self, label: ClaimLabel) -> Option<usize> {
        self.entries.iter().position(|e| e.label == label)
    }

    pub fn no_claim(&self) -> &TaxonomyEntry {
        self.entry(ClaimLabel::NO_CLAIM)
            .expect("validated taxonomy contains 0_0")
    }

    /// Entries other than `0_0`, in taxonomy order.
    pub fn claims(&self) -> impl Iterator<Item = &TaxonomyEntry> + '_ {
        self.entries.iter().filter(|e| !e.label.is_no_claim())
    }

    /// Distinct super-claim categories in taxonomy order.
    pub fn super_claims(&self) -> Vec<u8> {
        let mut out: Vec<u8> = Vec::new();
        for label in self.labels() {
            if !out.contains(&label.super_claim) {
                out.push(label.super_claim);
            }
        }
        out
    }

    /// Parses `text` and checks membership.
    pub fn parse_label(&self, text: &str) -> Result<ClaimLabel, LabelError> {
        let label = ClaimLabel::parse_shape(text)?;
        if self.contains(label) {
            Ok(label)
        } else {
            Err(LabelError::Unknown(text.trim().to_string()))
        }
    }

    /// Serialises back to the document shape (array of code/identifier/claim).
    pub fn to_document(&self) -> serde_json::Value {
        serde_json::to_value(&self.entries).expect("entries serialise")
    }
}

/// Validates a taxonomy document.
pub fn load_taxonomy(document: &str) -> Result<Taxonomy, TaxonomyError> {
    let raw: Vec<RawEntry> = serde_json::from_str(document)?;
    let mut seen_labels = HashSet::new();
    let mut seen_ids = HashSet::new();
    let mut entries = Vec::with_capacity(raw.len());
    for item in raw {
        let code = item.code.trim().to_string();
        let label = ClaimLabel::parse_shape(&code)
            .map_err(|_| TaxonomyError::MalformedCode(item.code.clone()))?;
        if !seen_labels.insert(label) {
            return Err(TaxonomyError::DuplicateLabel(code));
        }
        if !seen_ids.insert(item.identifier) {
            return Err(TaxonomyError::DuplicateIdentifier {
                code,
                identifier: item.identifier,
            });
        }
        if item.claim.trim().is_empty() {
            return Err(TaxonomyError::EmptyClaim(code));
        }
        entries.push(TaxonomyEntry {
            label,
            identifier: item.identifier,
            claim_text: item.claim,
        });
    }
    if !seen_labels.contains(&ClaimLabel::NO_CLAIM) {
        return Err(TaxonomyError::MissingNoClaim);
    }
    let digest = Sha256::digest(document.as_bytes());
    let version = format!("sha256:{}", &hex::encode(digest)[..12]);
    Ok(Taxonomy { entries, version })
}

#[cfg(test)]
mod tests {
    use super::*;

    const EXPECTED_CODES: [&str; 27] = [
        "0_0", "1_1", "1_2", "1_3", "1_4", "1_5", "1_6", "1_7", "1_8", "2_1", "2_2", "2_3", "2_4",
        "2_5", "3_1", "3_2", "3_3", "3_4", "3_5", "3_6", "4_1", "4_2", "4_3", "4_4", "4_5", "5_1",
        "5_2",
    ];

    #[test]
    fn default_taxonomy_matches_enumeration() {
        let tax = Taxonomy::default_cards();
        let codes: Vec<String> = tax.labels().map(|l| l.code()).collect();
        assert_eq!(codes, EXPECTED_CODES);
        assert_eq!(tax.no_claim().claim_text, "no claim");
        assert_eq!(
            tax.entry("2_1".parse().unwrap()).unwrap().claim_text,
            "It's natural cycles/variation"
        );
        assert_eq!(tax.super_claims(), vec![0, 1, 2, 3, 4, 5]);
    }

    #[test]
    fn parse_label_examples() {
        let tax = Taxonomy::default_cards();
        let l = tax.parse_label("5_2").unwrap();
        assert_eq!((l.super_claim(), l.sub_claim()), (5, 2));
        assert_eq!(tax.parse_label("0_0").unwrap(), ClaimLabel::NO_CLAIM);
        assert_eq!(tax.parse_label("  4_5\n").unwrap().code(), "4_5");
        assert!(matches!(
            tax.parse_label("9_9"),
            Err(LabelError::Unknown(_))
        ));
        assert!(matches!(
            tax.parse_label("1_9"),
            Err(LabelError::Unknown(_))
        ));
        assert!(matches!(
            tax.parse_label("1.6"),
            Err(LabelError::Malformed(_))
        ));
        assert!(matches!(
            tax.parse_label("1_"),
            Err(LabelError::Malformed(_))
        ));
        assert!(matches!(
            tax.parse_label("a_1"),
            Err(LabelError::Malformed(_))
        ));
        assert!(matches!(
            tax.parse_label("+1_1"),
            Err(LabelError::Malformed(_))
        ));
        assert!(matches!(tax.parse_label(""), Err(LabelError::Malformed(_))));
    }

    #[test]
    fn super_claim_extraction_matches_prefix() {
        let tax = Taxonomy::default_cards();
        assert_eq!(super_claim_of("4_5".parse().unwrap()), 4);
        assert_eq!(super_claim_of(ClaimLabel::NO_CLAIM), 0);
        for code in EXPECTED_CODES {
            let prefix: u8 = code.split('_').next().unwrap().parse().unwrap();
            assert_eq!(super_claim_of(tax.parse_label(code).unwrap()), prefix);
            assert_eq!(tax.parse_label(code).unwrap().code(), code);
        }
    }

    #[test]
    fn rejects_duplicate_label() {
        let doc = r#"[{"code":"0_0","identifier":0,"claim":"no claim"},
                      {"code":"1_1","identifier":6,"claim":"a"},
                      {"code":"1_1","identifier":7,"claim":"b"}]"#;
        match load_taxonomy(doc) {
            Err(TaxonomyError::DuplicateLabel(code)) => assert_eq!(code, "1_1"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn rejects_missing_no_claim() {
        let doc = r#"[{"code":"1_1","identifier":6,"claim":"a"}]"#;
        assert!(matches!(
            load_taxonomy(doc),
            Err(TaxonomyError::MissingNoClaim)
        ));
    }

    #[test]
    fn rejects_malformed_and_empty() {
        let doc = r#"[{"code":"0_0","identifier":0,"claim":"no claim"},
                      {"code":"1-1","identifier":6,"claim":"a"}]"#;
        match load_taxonomy(doc) {
            Err(TaxonomyError::MalformedCode(code)) => assert_eq!(code, "1-1"),
            other => panic!("unexpected {other:?}"),
        }
        let doc = r#"[{"code":"0_0","identifier":0,"claim":"no claim"},
                      {"code":"0_3","identifier":6,"claim":"a"}]"#;
        assert!(matches!(
            load_taxonomy(doc),
            Err(TaxonomyError::MalformedCode(_))
        ));
        let doc = r#"[{"code":"0_0","identifier":0,"claim":"no claim"},
                      {"code":"1_1","identifier":0,"claim":"a"}]"#;
        assert!(matches!(
            load_taxonomy(doc),
            Err(TaxonomyError::DuplicateIdentifier { .. })
        ));
        let doc = r#"[{"code":"0_0","identifier":0,"claim":"  "}]"#;
        assert!(matches!(
            load_taxonomy(doc),
            Err(TaxonomyError::EmptyClaim(_))
        ));
    }

    #[test]
    fn load_is_deterministic() {
        let a = load_taxonomy(DEFAULT_TAXONOMY_JSON).unwrap();
        let b = load_taxonomy(DEFAULT_TAXONOMY_JSON).unwrap();
        assert_eq!(a, b);
        assert!(a.version().starts_with("sha256:"));
    }

    #[test]
    fn document_round_trip() {
        let tax = Taxonomy::default_cards();
        let text = serde_json::to_string(&tax.to_document()).unwrap();
        let again = load_taxonomy(&text).unwrap();
        assert_eq!(tax.entries(), again.entries());
    }
}
