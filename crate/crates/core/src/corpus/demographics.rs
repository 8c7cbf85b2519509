//! Table-1-style demographics summaries, per split arm.

use serde::{Deserialize, Serialize};

use super::{Cohort, PatientRecord, SplitAssignment};
use crate::features::Sex;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CountPct {
    pub count: usize,
    pub pct: f64,
}

fn count_pct(count: usize, n: usize) -> CountPct {
    CountPct {
        count,
        pct: if n == 0 {
            0.0
        } else {
            100.0 * count as f64 / n as f64
        },
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MedianIqr {
    pub median: f64,
    pub q1: f64,
    pub q3: f64,
}

/// Summary of one arm (whole cohort, exploration, or test).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArmDemographics {
    pub arm: String,
    pub n: usize,
    pub male: CountPct,
    pub female: CountPct,
    pub evt: CountPct,
    pub age: Option<MedianIqr>,
    /// Counts of mRS 0..=6 among labeled records.
    pub mrs_distribution: Vec<CountPct>,
    /// Percentage of records missing each variable.
    pub missing_sex_pct: f64,
    pub missing_evt_pct: f64,
    pub missing_age_pct: f64,
    pub missing_mrs_pct: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DemographicsTable {
    pub arms: Vec<ArmDemographics>,
}

/// Nearest-rank quantile of sorted values: the ceil(p*n)-th smallest.
pub(crate) fn nearest_rank(sorted: &[f64], p: f64) -> f64 {
    debug_assert!(!sorted.is_empty());
    let rank = (p * sorted.len() as f64).ceil() as usize;
    sorted[rank.clamp(1, sorted.len()) - 1]
}

fn summarize_arm(arm: &str, records: &[&PatientRecord]) -> ArmDemographics {
    let n = records.len();
    let male = records.iter().filter(|r| r.sex == Some(Sex::Male)).count();
    let female = records
        .iter()
        .filter(|r| r.sex == Some(Sex::Female))
        .count();
    let evt = records.iter().filter(|r| r.evt == Some(true)).count();
    let missing_sex = records.iter().filter(|r| r.sex.is_none()).count();
    let missing_evt = records.iter().filter(|r| r.evt.is_none()).count();
    let missing_age = records.iter().filter(|r| r.age_years.is_none()).count();
    let missing_mrs = records.iter().filter(|r| r.mrs_90d.is_none()).count();

    let mut ages: Vec<f64> = records
        .iter()
        .filter_map(|r| r.age_years.map(|a| a as f64))
        .collect();
    ages.sort_by(|a, b| a.total_cmp(b));
    let age = if ages.is_empty() {
        None
    } else {
        Some(MedianIqr {
            median: nearest_rank(&ages, 0.5),
            q1: nearest_rank(&ages, 0.25),
            q3: nearest_rank(&ages, 0.75),
        })
    };

    let mrs_distribution = (0u8..=6)
        .map(|score| {
            count_pct(
                records.iter().filter(|r| r.mrs_90d == Some(score)).count(),
                n,
            )
        })
        .collect();

    ArmDemographics {
        arm: arm.to_string(),
        n,
        male: count_pct(male, n),
        female: count_pct(female, n),
        evt: count_pct(evt, n),
        age,
        mrs_distribution,
        missing_sex_pct: count_pct(missing_sex, n).pct,
        missing_evt_pct: count_pct(missing_evt, n).pct,
        missing_age_pct: count_pct(missing_age, n).pct,
        missing_mrs_pct: count_pct(missing_mrs, n).pct,
    }
}

/// Summarizes the cohort; with a split, one arm per subset, otherwise a
/// single "all" arm.
pub fn summarize_demographics(
    cohort: &Cohort,
    split: Option<&SplitAssignment>,
) -> DemographicsTable {
    let arms = match split {
        None => {
            let all: Vec<&PatientRecord> = cohort.records.iter().collect();
            vec![summarize_arm("all", &all)]
        }
        Some(split) => {
            let explore: Vec<&PatientRecord> = cohort
                .records
                .iter()
                .filter(|r| split.exploration_ids.contains(&r.id))
                .collect();
            let test: Vec<&PatientRecord> = cohort
                .records
                .iter()
                .filter(|r| split.test_ids.contains(&r.id))
                .collect();
            vec![
                summarize_arm("exploration", &explore),
                summarize_arm("test", &test),
            ]
        }
    };
    DemographicsTable { arms }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Cohort;

    fn rec(id: &str, age: Option<u32>, sex: Option<Sex>, mrs: Option<u8>) -> PatientRecord {
        PatientRecord {
            id: id.into(),
            note_text: "note".into(),
            mrs_90d: mrs,
            mrs_followup_days: None,
            age_years: age,
            sex,
            evt: None,
            died_in_hospital: None,
            structured_overrides: None,
        }
    }

    #[test]
    fn all_male_is_hundred_percent() {
        let cohort = Cohort::from_records(
            vec![
                rec("a", Some(60), Some(Sex::Male), Some(1)),
                rec("b", Some(70), Some(Sex::Male), Some(2)),
            ],
            "test",
        )
        .unwrap();
        let table = summarize_demographics(&cohort, None);
        assert_eq!(table.arms[0].male.pct, 100.0);
        assert_eq!(table.arms[0].female.count, 0);
    }

    #[test]
    fn median_and_iqr_by_nearest_rank() {
        // ages {60, 70, 80}: median 70, IQR 60-80.
        let cohort = Cohort::from_records(
            vec![
                rec("a", Some(60), None, Some(0)),
                rec("b", Some(70), None, Some(0)),
                rec("c", Some(80), None, Some(0)),
            ],
            "test",
        )
        .unwrap();
        let table = summarize_demographics(&cohort, None);
        let age = table.arms[0].age.as_ref().unwrap();
        assert_eq!(age.median, 70.0);
        assert_eq!(age.q1, 60.0);
        assert_eq!(age.q3, 80.0);
    }

    #[test]
    fn missingness_reported() {
        let cohort = Cohort::from_records(
            vec![
                rec("a", None, Some(Sex::Female), Some(3)),
                rec("b", Some(70), None, Some(3)),
            ],
            "test",
        )
        .unwrap();
        let arm = &summarize_demographics(&cohort, None).arms[0];
        assert_eq!(arm.missing_age_pct, 50.0);
        assert_eq!(arm.missing_sex_pct, 50.0);
        assert_eq!(arm.missing_mrs_pct, 0.0);
    }

    #[test]
    fn split_arms_partition_records() {
        let records: Vec<PatientRecord> = (0..40)
            .map(|i| rec(&format!("p{i:02}"), Some(50 + i), None, Some((i % 7) as u8)))
            .collect();
        let cohort = Cohort::from_records(records, "test").unwrap();
        let split = crate::corpus::stratified_split(&cohort, 0.25, 7).unwrap();
        let table = summarize_demographics(&cohort, Some(&split));
        assert_eq!(table.arms.len(), 2);
        assert_eq!(table.arms[0].arm, "exploration");
        assert_eq!(table.arms[0].n + table.arms[1].n, 40);
    }

    #[test]
    fn stable_json_shape() {
        let cohort =
            Cohort::from_records(vec![rec("a", Some(60), Some(Sex::Male), Some(1))], "t").unwrap();
        let table = summarize_demographics(&cohort, None);
        let json = serde_json::to_string(&table).unwrap();
        let back: DemographicsTable = serde_json::from_str(&json).unwrap();
        assert_eq!(table, back);
        assert!(json.find("\"arm\"").unwrap() < json.find("\"male\"").unwrap());
    }
}
