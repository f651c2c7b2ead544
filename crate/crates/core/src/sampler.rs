//! Stratified sampling of classified paragraphs for expert review.
//!
//! Half of the sample comes from paragraphs labelled `0_0`; the other half
//! is apportioned across the claim labels in proportion to their frequency
//! (largest remainder, ties broken by taxonomy order). All draws share one
//! [`SplitMix64`] stream: the no-claim stratum first, then the claim strata
//! in taxonomy order.

use std::collections::{BTreeMap, HashSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::codec::ClassificationResult;
use crate::rng::SplitMix64;
use crate::taxonomy::{ClaimLabel, Taxonomy};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum SampleError {
    #[error("stratum {label} has {available} items but {needed} were requested")]
    InsufficientPopulation {
        label: String,
        needed: usize,
        available: usize,
    },
    #[error("sample size must be a positive even number, got {0}")]
    InvalidSampleSize(usize),
    #[error("paragraph {0} appears more than once in the classified input")]
    DuplicateParagraph(String),
    #[error("label {0} is not in the taxonomy")]
    UnknownLabel(ClaimLabel),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SamplePlan {
    pub n_total: usize,
    pub n_no_claim: usize,
    pub allocations: BTreeMap<ClaimLabel, usize>,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SampleDraw {
    pub plan: SamplePlan,
    /// No-claim picks first, then each claim stratum in taxonomy order; each
    /// stratum in draw order.
    pub selected: Vec<String>,
}

/// Largest-remainder apportionment of `n` across `counts`. The order of
/// `counts` is the tie-break priority for equal remainders.
pub fn proportional_allocation(
    counts: &[(ClaimLabel, usize)],
    n: usize,
) -> Result<Vec<(ClaimLabel, usize)>, SampleError> {
    let total: usize = counts.iter().map(|(_, c)| c).sum();
    if total < n {
        return Err(SampleError::InsufficientPopulation {
            label: "claims".into(),
            needed: n,
            available: total,
        });
    }
    if n == 0 {
        return Ok(counts.iter().map(|&(label, _)| (label, 0)).collect());
    }
    let (n128, total128) = (n as u128, total as u128);
    let mut alloc: Vec<(ClaimLabel, usize)> = Vec::with_capacity(counts.len());
    let mut remainders: Vec<(u128, usize)> = Vec::with_capacity(counts.len());
    for (pos, &(label, count)) in counts.iter().enumerate() {
        let numerator = n128 * count as u128;
        alloc.push((label, (numerator / total128) as usize));
        remainders.push((numerator % total128, pos));
    }
    let assigned: usize = alloc.iter().map(|(_, c)| c).sum();
    // Larger remainder first; earlier position wins ties.
    remainders.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)));
    for &(_, pos) in remainders.iter().take(n - assigned) {
        alloc[pos].1 += 1;
    }
    Ok(alloc)
}

fn draw_stratum(
    rng: &mut SplitMix64,
    label: ClaimLabel,
    mut population: Vec<String>,
    k: usize,
) -> Result<Vec<String>, SampleError> {
    if population.len() < k {
        return Err(SampleError::InsufficientPopulation {
            label: label.code(),
            needed: k,
            available: population.len(),
        });
    }
    Ok(rng.choose_prefix(&mut population, k).to_vec())
}

/// Draws the expert-review sample from classified paragraphs, stratifying on
/// the full sub-claim label.
pub fn stratified_sample(
    classified: &[ClassificationResult],
    taxonomy: &Taxonomy,
    n_total: usize,
    seed: u64,
) -> Result<SampleDraw, SampleError> {
    if n_total == 0 || !n_total.is_multiple_of(2) {
        return Err(SampleError::InvalidSampleSize(n_total));
    }
    let mut seen = HashSet::new();
    let mut strata: BTreeMap<ClaimLabel, Vec<String>> = BTreeMap::new();
    for result in classified {
        if !seen.insert(result.paragraph_id.as_str()) {
            return Err(SampleError::DuplicateParagraph(result.paragraph_id.clone()));
        }
        if !taxonomy.contains(result.final_label) {
            return Err(SampleError::UnknownLabel(result.final_label));
        }
        strata
            .entry(result.final_label)
            .or_default()
            .push(result.paragraph_id.clone());
    }
    let n_no_claim = n_total / 2;
    let claim_counts: Vec<(ClaimLabel, usize)> = taxonomy
        .claims()
        .filter_map(|e| strata.get(&e.label).map(|ids| (e.label, ids.len())))
        .collect();
    let allocation = proportional_allocation(&claim_counts, n_total - n_no_claim)?;

    let mut rng = SplitMix64::new(seed);
    let no_claim = taxonomy.no_claim().label;
    let mut selected = draw_stratum(
        &mut rng,
        no_claim,
        strata.remove(&no_claim).unwrap_or_default(),
        n_no_claim,
    )?;
    for &(label, k) in &allocation {
        let population = strata.remove(&label).unwrap_or_default();
        selected.extend(draw_stratum(&mut rng, label, population, k)?);
    }
    Ok(SampleDraw {
        plan: SamplePlan {
            n_total,
            n_no_claim,
            allocations: allocation.into_iter().collect(),
            seed,
        },
        selected,
    })
}

/// One paragraph of the review sample, with empty annotation slots.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SampleRecord {
    pub paragraph_id: String,
    pub text: String,
    pub model_label: ClaimLabel,
    #[serde(default)]
    pub annotations: BTreeMap<String, ClaimLabel>,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codec::ParseOutcome;

    fn l(code: &str) -> ClaimLabel {
        code.parse().unwrap()
    }

    fn result(id: String, code: &str) -> ClassificationResult {
        ClassificationResult {
            paragraph_id: id,
            backend_name: "mock".into(),
            outcome: ParseOutcome::valid(l(code), code),
            final_label: l(code),
            replaced: false,
            replacement_seed: None,
            replacement_seed_index: None,
        }
    }

    fn population(strata: &[(&str, usize)]) -> Vec<ClassificationResult> {
        strata
            .iter()
            .flat_map(|&(code, n)| (0..n).map(move |i| result(format!("{code}-{i}"), code)))
            .collect()
    }

    #[test]
    fn allocation_examples() {
        let (a, b, c) = (l("1_1"), l("1_2"), l("1_3"));
        assert_eq!(
            proportional_allocation(&[(a, 100), (b, 100)], 10).unwrap(),
            [(a, 5), (b, 5)]
        );
        assert_eq!(
            proportional_allocation(&[(a, 2), (b, 1)], 3).unwrap(),
            [(a, 2), (b, 1)]
        );
        assert_eq!(
            proportional_allocation(&[(a, 5), (b, 3), (c, 2)], 7).unwrap(),
            [(a, 4), (b, 2), (c, 1)]
        );
    }

    #[test]
    fn allocation_tie_goes_to_earlier_label() {
        let (a, b) = (l("1_1"), l("1_2"));
        assert_eq!(
            proportional_allocation(&[(a, 1), (b, 1)], 1).unwrap(),
            [(a, 1), (b, 0)]
        );
        assert_eq!(
            proportional_allocation(&[(b, 1), (a, 1)], 1).unwrap(),
            [(b, 1), (a, 0)]
        );
    }

    #[test]
    fn allocation_requires_population() {
        assert!(matches!(
            proportional_allocation(&[(l("1_1"), 2)], 3),
            Err(SampleError::InsufficientPopulation { .. })
        ));
    }

    #[test]
    fn sample_of_twenty() {
        let pop = population(&[("0_0", 500), ("1_1", 30), ("4_1", 60), ("5_2", 10)]);
        let draw = stratified_sample(&pop, &Taxonomy::default_cards(), 20, 7).unwrap();
        assert_eq!(draw.plan.n_no_claim, 10);
        let expected: BTreeMap<_, _> = [(l("1_1"), 3), (l("4_1"), 6), (l("5_2"), 1)].into();
        assert_eq!(draw.plan.allocations, expected);
        assert_eq!(draw.selected.len(), 20);
        let unique: HashSet<_> = draw.selected.iter().collect();
        assert_eq!(unique.len(), 20);
        assert!(draw.selected[..10].iter().all(|id| id.starts_with("0_0-")));
        assert_eq!(
            draw,
            stratified_sample(&pop, &Taxonomy::default_cards(), 20, 7).unwrap()
        );
    }

    #[test]
    fn degenerate_sample_of_two() {
        let pop = population(&[("0_0", 5), ("1_1", 2), ("4_1", 3), ("5_2", 1)]);
        let draw = stratified_sample(&pop, &Taxonomy::default_cards(), 2, 1).unwrap();
        assert_eq!(draw.selected.len(), 2);
        assert!(draw.selected[1].starts_with("4_1-"));
    }

    #[test]
    fn rejects_bad_input() {
        let tax = Taxonomy::default_cards();
        let pop = population(&[("0_0", 3), ("1_1", 3)]);
        assert_eq!(
            stratified_sample(&pop, &tax, 3, 0),
            Err(SampleError::InvalidSampleSize(3))
        );
        assert!(matches!(
            stratified_sample(&pop, &tax, 8, 0),
            Err(SampleError::InsufficientPopulation { .. })
        ));
        let mut dup = pop.clone();
        dup.push(pop[0].clone());
        assert!(matches!(
            stratified_sample(&dup, &tax, 2, 0),
            Err(SampleError::DuplicateParagraph(_))
        ));
    }
}
