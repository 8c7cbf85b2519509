//! Stratified exploration/test split.
//!
//! Within each mRS stratum of size n, the exploration arm receives
//! round-half-even(fraction * n) records chosen by seeded shuffle. Stratum
//! members are sorted by id before shuffling, so the assignment depends only
//! on (id set, fraction, seed) and not on file order.

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::{Cohort, CorpusError};
use crate::rng::substream_rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitAssignment {
    pub exploration_ids: BTreeSet<String>,
    pub test_ids: BTreeSet<String>,
    pub seed: u64,
    pub fraction: f64,
}

impl SplitAssignment {
    pub fn arm(&self, name: &str) -> Option<&BTreeSet<String>> {
        match name {
            "exploration" => Some(&self.exploration_ids),
            "test" => Some(&self.test_ids),
            _ => None,
        }
    }
}

pub fn stratified_split(
    cohort: &Cohort,
    fraction: f64,
    seed: u64,
) -> Result<SplitAssignment, CorpusError> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(CorpusError::BadFraction(fraction));
    }
    let mut strata: BTreeMap<u8, Vec<&str>> = BTreeMap::new();
    for record in &cohort.records {
        let label = record.mrs_90d.ok_or_else(|| CorpusError::UnlabeledRecord {
            id: record.id.clone(),
        })?;
        strata.entry(label).or_default().push(&record.id);
    }

    let mut exploration = BTreeSet::new();
    let mut test = BTreeSet::new();
    for (label, mut ids) in strata {
        ids.sort_unstable();
        let n = ids.len();
        let take = (fraction * n as f64).round_ties_even().clamp(0.0, n as f64) as usize;
        let mut rng = substream_rng(seed, label as u64);
        ids.shuffle(&mut rng);
        for (i, id) in ids.into_iter().enumerate() {
            if i < take {
                exploration.insert(id.to_string());
            } else {
                test.insert(id.to_string());
            }
        }
    }

    Ok(SplitAssignment {
        exploration_ids: exploration,
        test_ids: test,
        seed,
        fraction,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::PatientRecord;

    fn labeled(id: &str, mrs: u8) -> PatientRecord {
        PatientRecord {
            id: id.into(),
            note_text: "note".into(),
            mrs_90d: Some(mrs),
            mrs_followup_days: None,
            age_years: None,
            sex: None,
            evt: None,
            died_in_hospital: None,
            structured_overrides: None,
        }
    }

    fn cohort_with_strata(counts: &[(u8, usize)]) -> Cohort {
        let mut records = Vec::new();
        for (label, n) in counts {
            for i in 0..*n {
                records.push(labeled(&format!("mrs{label}-{i:03}"), *label));
            }
        }
        Cohort::from_records(records, "test").unwrap()
    }

    #[test]
    fn one_per_stratum_at_fifth() {
        let cohort = cohort_with_strata(&[(0, 5), (3, 5)]);
        let split = stratified_split(&cohort, 0.2, 11).unwrap();
        assert_eq!(split.exploration_ids.len(), 2);
        assert_eq!(split.test_ids.len(), 8);
        let explore0 = split
            .exploration_ids
            .iter()
            .filter(|id| id.starts_with("mrs0"))
            .count();
        assert_eq!(explore0, 1);
    }

    #[test]
    fn disjoint_and_exhaustive() {
        let cohort = cohort_with_strata(&[(0, 7), (1, 13), (4, 29)]);
        let split = stratified_split(&cohort, 0.3, 5).unwrap();
        assert!(split.exploration_ids.is_disjoint(&split.test_ids));
        let all: BTreeSet<String> = cohort.records.iter().map(|r| r.id.clone()).collect();
        let union: BTreeSet<String> = split
            .exploration_ids
            .union(&split.test_ids)
            .cloned()
            .collect();
        assert_eq!(all, union);
    }

    #[test]
    fn insensitive_to_record_order() {
        let cohort = cohort_with_strata(&[(0, 8), (2, 9), (6, 4)]);
        let mut reversed_records = cohort.records.clone();
        reversed_records.reverse();
        let reversed = Cohort::from_records(reversed_records, "test").unwrap();
        let a = stratified_split(&cohort, 0.25, 99).unwrap();
        let b = stratified_split(&reversed, 0.25, 99).unwrap();
        assert_eq!(a.exploration_ids, b.exploration_ids);
        assert_eq!(a.test_ids, b.test_ids);
    }

    #[test]
    fn deterministic_per_seed_and_sensitive_to_seed() {
        let cohort = cohort_with_strata(&[(1, 20), (2, 20)]);
        let a = stratified_split(&cohort, 0.2, 1).unwrap();
        let b = stratified_split(&cohort, 0.2, 1).unwrap();
        let c = stratified_split(&cohort, 0.2, 2).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.exploration_ids, c.exploration_ids);
    }

    #[test]
    fn round_half_even_per_stratum() {
        // 0.2 * 2 = 0.4 -> 0; 0.2 * 12 = 2.4 -> 2; 0.5 * 5 = 2.5 -> 2;
        // 0.5 * 7 = 3.5 -> 4.
        let cohort = cohort_with_strata(&[(0, 2), (1, 12)]);
        let split = stratified_split(&cohort, 0.2, 3).unwrap();
        assert_eq!(split.exploration_ids.len(), 2);

        let cohort = cohort_with_strata(&[(0, 5), (1, 7)]);
        let split = stratified_split(&cohort, 0.5, 3).unwrap();
        assert_eq!(split.exploration_ids.len(), 6);
    }

    #[test]
    fn unlabeled_record_rejected() {
        let mut records = vec![labeled("a", 1)];
        records.push(PatientRecord {
            mrs_90d: None,
            ..labeled("b", 0)
        });
        let cohort = Cohort::from_records(records, "test").unwrap();
        let err = stratified_split(&cohort, 0.2, 1).unwrap_err();
        assert!(matches!(err, CorpusError::UnlabeledRecord { id } if id == "b"));
    }

    #[test]
    fn fraction_bounds_enforced() {
        let cohort = cohort_with_strata(&[(0, 4)]);
        assert!(stratified_split(&cohort, 0.0, 1).is_err());
        assert!(stratified_split(&cohort, 1.0, 1).is_err());
    }
}
