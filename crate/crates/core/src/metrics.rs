//! Classification metrics and inter-annotator reliability.
//!
//! Conventions: precision (recall) is 0 when its column (row) sum is 0, and
//! F1 is 0 when precision + recall is 0. Krippendorff's alpha is nominal and
//! undefined when every pairable value is identical.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum MetricsError {
    #[error("gold has {gold} labels but predictions have {pred}")]
    LengthMismatch { gold: usize, pred: usize },
    #[error("no pairs to score")]
    Empty,
    #[error("class {0} is not in the class set")]
    UnknownClass(String),
    #[error("no item has two or more codings")]
    NoPairableItems,
}

/// Rows are gold classes, columns are predicted classes.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub classes: Vec<String>,
    pub counts: Vec<Vec<u64>>,
    pub total: u64,
}

impl ConfusionMatrix {
    pub fn row_sum(&self, i: usize) -> u64 {
        self.counts[i].iter().sum()
    }

    pub fn col_sum(&self, j: usize) -> u64 {
        self.counts.iter().map(|row| row[j]).sum()
    }

    pub fn trace(&self) -> u64 {
        (0..self.classes.len()).map(|i| self.counts[i][i]).sum()
    }

    pub fn cell(&self, gold: &str, pred: &str) -> Option<u64> {
        let g = self.classes.iter().position(|c| c == gold)?;
        let p = self.classes.iter().position(|c| c == pred)?;
        Some(self.counts[g][p])
    }
}

pub fn confusion_matrix<S: AsRef<str>>(
    gold: &[S],
    pred: &[S],
    classes: &[S],
) -> Result<ConfusionMatrix, MetricsError> {
    if gold.len() != pred.len() {
        return Err(MetricsError::LengthMismatch {
            gold: gold.len(),
            pred: pred.len(),
        });
    }
    if gold.is_empty() {
        return Err(MetricsError::Empty);
    }
    let classes: Vec<String> = classes.iter().map(|c| c.as_ref().to_string()).collect();
    let index: HashMap<&str, usize> = classes
        .iter()
        .enumerate()
        .map(|(i, c)| (c.as_str(), i))
        .collect();
    let position = |code: &str| {
        index
            .get(code)
            .copied()
            .ok_or_else(|| MetricsError::UnknownClass(code.to_string()))
    };
    let mut counts = vec![vec![0u64; classes.len()]; classes.len()];
    for (g, p) in gold.iter().zip(pred) {
        counts[position(g.as_ref())?][position(p.as_ref())?] += 1;
    }
    Ok(ConfusionMatrix {
        classes,
        counts,
        total: gold.len() as u64,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassScores {
    pub class: String,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: u64,
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

pub fn f1_score(precision: f64, recall: f64) -> f64 {
    if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        0.0
    }
}

pub fn per_class_prf(m: &ConfusionMatrix) -> Vec<ClassScores> {
    m.classes
        .iter()
        .enumerate()
        .map(|(i, class)| {
            let tp = m.counts[i][i];
            let precision = ratio(tp, m.col_sum(i));
            let recall = ratio(tp, m.row_sum(i));
            ClassScores {
                class: class.clone(),
                precision,
                recall,
                f1: f1_score(precision, recall),
                support: m.row_sum(i),
            }
        })
        .collect()
}

pub fn accuracy(m: &ConfusionMatrix) -> f64 {
    ratio(m.trace(), m.total)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AverageMode {
    Macro,
    Weighted,
}

/// Which classes enter an average.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case", tag = "policy", content = "classes")]
pub enum ClassSetPolicy {
    /// Every class with non-zero gold support.
    #[default]
    AllGoldClasses,
    ExplicitList(Vec<String>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateScores {
    pub mode: AverageMode,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    /// Present when the scores came from a confusion matrix.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub accuracy: Option<f64>,
    pub class_set_policy: ClassSetPolicy,
    pub classes: Vec<String>,
}

/// Averages per-class scores over the classes selected by `policy`.
pub fn aggregate_prf(
    scores: &[ClassScores],
    mode: AverageMode,
    policy: &ClassSetPolicy,
) -> Result<AggregateScores, MetricsError> {
    let selected: Vec<&ClassScores> = match policy {
        ClassSetPolicy::AllGoldClasses => scores.iter().filter(|s| s.support > 0).collect(),
        ClassSetPolicy::ExplicitList(list) => list
            .iter()
            .map(|class| {
                scores
                    .iter()
                    .find(|s| &s.class == class)
                    .ok_or_else(|| MetricsError::UnknownClass(class.clone()))
            })
            .collect::<Result<_, _>>()?,
    };
    if selected.is_empty() {
        return Err(MetricsError::Empty);
    }
    let weight = |s: &ClassScores| match mode {
        AverageMode::Macro => 1.0,
        AverageMode::Weighted => s.support as f64,
    };
    let total_weight: f64 = selected.iter().map(|s| weight(s)).sum();
    let mean = |metric: fn(&ClassScores) -> f64| {
        if total_weight == 0.0 {
            0.0
        } else {
            selected.iter().map(|s| metric(s) * weight(s)).sum::<f64>() / total_weight
        }
    };
    Ok(AggregateScores {
        mode,
        precision: mean(|s| s.precision),
        recall: mean(|s| s.recall),
        f1: mean(|s| s.f1),
        accuracy: None,
        class_set_policy: policy.clone(),
        classes: selected.iter().map(|s| s.class.clone()).collect(),
    })
}

/// Per-class table, both averages and accuracy for one confusion matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub confusion: ConfusionMatrix,
    pub per_class: Vec<ClassScores>,
    pub macro_avg: AggregateScores,
    pub weighted_avg: AggregateScores,
    pub accuracy: f64,
}

pub fn evaluate(m: ConfusionMatrix, policy: &ClassSetPolicy) -> Result<Evaluation, MetricsError> {
    let per_class = per_class_prf(&m);
    let acc = accuracy(&m);
    let mut macro_avg = aggregate_prf(&per_class, AverageMode::Macro, policy)?;
    let mut weighted_avg = aggregate_prf(&per_class, AverageMode::Weighted, policy)?;
    macro_avg.accuracy = Some(acc);
    weighted_avg.accuracy = Some(acc);
    Ok(Evaluation {
        confusion: m,
        per_class,
        macro_avg,
        weighted_avg,
        accuracy: acc,
    })
}

/// Codings keyed by item, then coder.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReliabilityInput {
    pub codings: BTreeMap<String, BTreeMap<String, String>>,
}

impl ReliabilityInput {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, coder: &str, item: &str, value: &str) {
        self.codings
            .entry(item.to_string())
            .or_default()
            .insert(coder.to_string(), value.to_string());
    }

    /// One sequence per coder, aligned by position; `None` is a missing
    /// coding.
    pub fn from_sequences<S: AsRef<str>>(coders: &[(&str, Vec<Option<S>>)]) -> Self {
        let mut input = Self::new();
        for (coder, values) in coders {
            for (i, value) in values.iter().enumerate() {
                if let Some(v) = value {
                    input.add(coder, &format!("{i}"), v.as_ref());
                }
            }
        }
        input
    }

    pub fn coders(&self) -> BTreeSet<&str> {
        self.codings
            .values()
            .flat_map(|c| c.keys().map(String::as_str))
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Alpha {
    Value(f64),
    /// Every pairable value is the same, so expected disagreement is zero.
    Undefined,
}

impl Alpha {
    pub fn value(self) -> Option<f64> {
        match self {
            Alpha::Value(v) => Some(v),
            Alpha::Undefined => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlphaReport {
    pub alpha: Alpha,
    pub observed_agreement: f64,
    pub expected_agreement: f64,
    /// Items with at least two codings.
    pub pairable_items: usize,
    /// Items with a single coding, left out.
    pub excluded_items: usize,
    /// Number of pairable values `n`.
    pub pairable_values: usize,
}

/// Nominal Krippendorff's alpha from the coincidence matrix.
pub fn krippendorff_alpha(input: &ReliabilityInput) -> Result<AlphaReport, MetricsError> {
    let mut coincidence: BTreeMap<(&str, &str), f64> = BTreeMap::new();
    let mut value_totals: BTreeMap<&str, usize> = BTreeMap::new();
    let (mut pairable_items, mut excluded_items, mut n) = (0usize, 0usize, 0usize);
    for coders in input.codings.values() {
        let values: Vec<&str> = coders.values().map(String::as_str).collect();
        let m = values.len();
        if m < 2 {
            excluded_items += 1;
            continue;
        }
        pairable_items += 1;
        n += m;
        let weight = 1.0 / (m - 1) as f64;
        for (i, a) in values.iter().enumerate() {
            *value_totals.entry(a).or_default() += 1;
            for (j, b) in values.iter().enumerate() {
                if i != j {
                    *coincidence.entry((a, b)).or_default() += weight;
                }
            }
        }
    }
    if pairable_items == 0 {
        return Err(MetricsError::NoPairableItems);
    }
    let diagonal: f64 = coincidence
        .iter()
        .filter(|((a, b), _)| a == b)
        .map(|(_, w)| w)
        .sum();
    let observed = diagonal / n as f64;
    let expected_num: usize = value_totals.values().map(|&c| c * (c - 1)).sum();
    let expected = expected_num as f64 / (n * (n - 1)) as f64;
    let alpha = if value_totals.len() == 1 {
        Alpha::Undefined
    } else {
        Alpha::Value((observed - expected) / (1.0 - expected))
    };
    Ok(AlphaReport {
        alpha,
        observed_agreement: observed,
        expected_agreement: expected,
        pairable_items,
        excluded_items,
        pairable_values: n,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tally() -> ConfusionMatrix {
        confusion_matrix(
            &["4", "4", "0", "5"],
            &["4", "0", "0", "5"],
            &["0", "4", "5"],
        )
        .unwrap()
    }

    #[test]
    fn tally_example() {
        let m = tally();
        assert_eq!(m.counts, vec![vec![1, 0, 0], vec![1, 1, 0], vec![0, 0, 1]]);
        assert_eq!(m.cell("4", "0"), Some(1));
        assert_eq!(accuracy(&m), 0.75);
        let s = per_class_prf(&m);
        assert_eq!((s[0].precision, s[0].recall), (0.5, 1.0));
        assert_eq!((s[1].precision, s[1].recall), (1.0, 0.5));
        assert!((s[0].f1 - 2.0 / 3.0).abs() < 1e-15);
        assert!((s[1].f1 - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!((s[2].precision, s[2].recall, s[2].f1), (1.0, 1.0, 1.0));
        assert_eq!(s.iter().map(|c| c.support).collect::<Vec<_>>(), [1, 2, 1]);
    }

    #[test]
    fn matrix_errors() {
        assert_eq!(
            confusion_matrix(&["1"], &["1", "2"], &["1", "2"]),
            Err(MetricsError::LengthMismatch { gold: 1, pred: 2 })
        );
        assert_eq!(
            confusion_matrix::<&str>(&[], &[], &["1"]),
            Err(MetricsError::Empty)
        );
        assert_eq!(
            confusion_matrix(&["1"], &["9"], &["1", "2"]),
            Err(MetricsError::UnknownClass("9".into()))
        );
    }

    #[test]
    fn empty_column_gives_zero_precision() {
        let m = confusion_matrix(&["1", "2"], &["1", "1"], &["1", "2"]).unwrap();
        let s = per_class_prf(&m);
        assert_eq!((s[1].precision, s[1].recall, s[1].f1), (0.0, 0.0, 0.0));
        let zero = confusion_matrix(&["1", "2"], &["2", "1"], &["1", "2"]).unwrap();
        assert_eq!(accuracy(&zero), 0.0);
    }

    #[test]
    fn symmetric_average() {
        let scores = [("a", 1.0), ("b", 0.5)].map(|(c, f)| ClassScores {
            class: c.into(),
            precision: f,
            recall: f,
            f1: f,
            support: 10,
        });
        let policy = ClassSetPolicy::default();
        assert_eq!(
            aggregate_prf(&scores, AverageMode::Macro, &policy)
                .unwrap()
                .f1,
            0.75
        );
        assert_eq!(
            aggregate_prf(&scores, AverageMode::Weighted, &policy)
                .unwrap()
                .f1,
            0.75
        );
    }

    #[test]
    fn class_set_policies() {
        let m = confusion_matrix(&["0", "1", "1"], &["0", "1", "2"], &["0", "1", "2"]).unwrap();
        let s = per_class_prf(&m);
        let gold = aggregate_prf(&s, AverageMode::Macro, &ClassSetPolicy::AllGoldClasses).unwrap();
        assert_eq!(gold.classes, ["0", "1"]);
        let explicit = ClassSetPolicy::ExplicitList(vec!["1".into(), "2".into()]);
        let only = aggregate_prf(&s, AverageMode::Macro, &explicit).unwrap();
        assert_eq!(only.precision, 0.5);
        let bad = ClassSetPolicy::ExplicitList(vec!["7".into()]);
        assert!(aggregate_prf(&s, AverageMode::Macro, &bad).is_err());
    }

    #[test]
    fn alpha_worked_case() {
        let input = ReliabilityInput::from_sequences(&[
            ("c1", ["1", "2", "3", "3"].map(Some).to_vec()),
            ("c2", ["1", "2", "3", "4"].map(Some).to_vec()),
        ]);
        let report = krippendorff_alpha(&input).unwrap();
        let expected = (0.75 - 10.0 / 56.0) / (1.0 - 10.0 / 56.0);
        assert!((report.alpha.value().unwrap() - expected).abs() < 1e-12);
        assert_eq!(report.pairable_values, 8);
    }

    #[test]
    fn alpha_edge_cases() {
        let same: Vec<_> = (0..50).map(|i| Some(format!("{}_1", i % 5 + 1))).collect();
        let input = ReliabilityInput::from_sequences(&[("a", same.clone()), ("b", same)]);
        assert_eq!(krippendorff_alpha(&input).unwrap().alpha, Alpha::Value(1.0));

        let flat = ReliabilityInput::from_sequences(&[
            ("a", vec![Some("0_0"); 5]),
            ("b", vec![Some("0_0"); 5]),
        ]);
        assert_eq!(krippendorff_alpha(&flat).unwrap().alpha, Alpha::Undefined);

        assert_eq!(
            krippendorff_alpha(&ReliabilityInput::new()),
            Err(MetricsError::NoPairableItems)
        );
        let single = ReliabilityInput::from_sequences(&[("a", vec![Some("1_1"), None])]);
        assert_eq!(
            krippendorff_alpha(&single),
            Err(MetricsError::NoPairableItems)
        );
    }

    #[test]
    fn alpha_excludes_single_codings() {
        let input = ReliabilityInput::from_sequences(&[
            (
                "a",
                vec![Some("1"), Some("2"), Some("3"), Some("3"), Some("5")],
            ),
            ("b", vec![Some("1"), Some("2"), Some("3"), Some("4"), None]),
        ]);
        let report = krippendorff_alpha(&input).unwrap();
        assert_eq!(report.excluded_items, 1);
        assert!((report.alpha.value().unwrap() - 32.0 / 46.0).abs() < 1e-12);
    }

    #[test]
    fn alpha_serializes_undefined_as_null() {
        assert_eq!(serde_json::to_string(&Alpha::Undefined).unwrap(), "null");
        assert_eq!(serde_json::to_string(&Alpha::Value(0.5)).unwrap(), "0.5");
    }
}
