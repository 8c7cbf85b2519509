//! Patient records: ingestion, the exclusion flowchart, the stratified
//! exploration/test split, text utilities, and demographics summaries.

mod chunk;
mod demographics;
mod ingest;
mod split;

pub use chunk::{chunk_spans, chunk_tokens, whitespace_tokens, DEFAULT_OVERLAP, DEFAULT_WINDOW};
pub use demographics::{summarize_demographics, ArmDemographics, CountPct, DemographicsTable};
pub use ingest::{ingest_corpus, ingest_jsonl_str, CorpusFormat, RowIssue};
pub use split::{stratified_split, SplitAssignment};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::features::{Sex, StructuredFeatures};

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("{} malformed row(s):\n{}", issues.len(), format_issues(issues))]
    MalformedRows { issues: Vec<RowIssue> },
    #[error("duplicate record id(s): {}", ids.join(", "))]
    DuplicateIds { ids: Vec<String> },
    #[error("record {id} has no mrs_90d label; stratified split requires labels")]
    UnlabeledRecord { id: String },
    #[error("split fraction must be in (0, 1), got {0}")]
    BadFraction(f64),
    #[error("chunk window ({window}) must exceed overlap ({overlap})")]
    BadChunkGeometry { window: usize, overlap: usize },
    #[error("quartile bins need at least 4 values, got {0}")]
    TooFewValues(usize),
}

fn format_issues(issues: &[RowIssue]) -> String {
    issues
        .iter()
        .map(|i| format!("  line {}: {}", i.line, i.problem))
        .collect::<Vec<_>>()
        .join("\n")
}

/// One patient: free-text discharge summary, outcome label, covariates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatientRecord {
    pub id: String,
    pub note_text: String,
    #[serde(default)]
    pub mrs_90d: Option<u8>,
    #[serde(default)]
    pub mrs_followup_days: Option<u32>,
    #[serde(default)]
    pub age_years: Option<u32>,
    #[serde(default)]
    pub sex: Option<Sex>,
    #[serde(default)]
    pub evt: Option<bool>,
    #[serde(default)]
    pub died_in_hospital: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub structured_overrides: Option<StructuredFeatures>,
}

/// Where a cohort came from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub source: String,
    pub ingested_at_unix: u64,
    pub content_hash: String,
}

/// An ordered, immutable collection of patient records with unique ids.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cohort {
    pub provenance: Provenance,
    pub records: Vec<PatientRecord>,
}

impl Cohort {
    /// Builds a cohort from records, computing the content hash. Fails on
    /// duplicate ids.
    pub fn from_records(records: Vec<PatientRecord>, source: &str) -> Result<Self, CorpusError> {
        let mut seen = std::collections::BTreeSet::new();
        let mut dups = Vec::new();
        for r in &records {
            if !seen.insert(r.id.clone()) && !dups.contains(&r.id) {
                dups.push(r.id.clone());
            }
        }
        if !dups.is_empty() {
            return Err(CorpusError::DuplicateIds { ids: dups });
        }
        let content_hash = content_hash(&records);
        Ok(Cohort {
            provenance: Provenance {
                source: source.to_string(),
                ingested_at_unix: now_unix(),
                content_hash,
            },
            records,
        })
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn record(&self, id: &str) -> Option<&PatientRecord> {
        self.records.iter().find(|r| r.id == id)
    }

    /// Canonical JSONL serialization (one record per line, stable key order).
    /// Re-ingesting this output reproduces the same content hash.
    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for r in &self.records {
            out.push_str(&serde_json::to_string(r).expect("record serializes"));
            out.push('\n');
        }
        out
    }

    pub fn content_hash(&self) -> &str {
        &self.provenance.content_hash
    }
}

/// Hash over the canonical serialization of the records, independent of the
/// input container format (JSONL and CSV of the same data hash identically).
pub fn content_hash(records: &[PatientRecord]) -> String {
    let mut hasher = Sha256::new();
    for r in records {
        hasher.update(serde_json::to_string(r).expect("record serializes"));
        hasher.update(b"\n");
    }
    hex(&hasher.finalize())
}

pub(crate) fn hex(bytes: &[u8]) -> String {
    use std::fmt::Write;
    bytes.iter().fold(String::new(), |mut s, b| {
        let _ = write!(s, "{b:02x}");
        s
    })
}

pub(crate) fn now_unix() -> u64 {
    std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}

/// Why records were removed, counted in application order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExclusionReport {
    pub initial: usize,
    pub missing_mrs_90d: usize,
    pub in_hospital_death: usize,
    pub retained: usize,
}

/// Applies the exclusion flowchart: first records without a 90-day mRS label,
/// then in-hospital deaths among the remainder. Idempotent.
pub fn apply_exclusions(cohort: &Cohort) -> (Cohort, ExclusionReport) {
    let initial = cohort.records.len();
    let labeled: Vec<&PatientRecord> = cohort
        .records
        .iter()
        .filter(|r| r.mrs_90d.is_some())
        .collect();
    let missing = initial - labeled.len();
    let kept: Vec<PatientRecord> = labeled
        .into_iter()
        .filter(|r| r.died_in_hospital != Some(true))
        .cloned()
        .collect();
    let deaths = initial - missing - kept.len();
    let report = ExclusionReport {
        initial,
        missing_mrs_90d: missing,
        in_hospital_death: deaths,
        retained: kept.len(),
    };
    let filtered = Cohort {
        provenance: Provenance {
            source: cohort.provenance.source.clone(),
            ingested_at_unix: cohort.provenance.ingested_at_unix,
            content_hash: content_hash(&kept),
        },
        records: kept,
    };
    (filtered, report)
}

/// Count of maximal whitespace-delimited nonempty substrings.
pub fn word_count(note_text: &str) -> usize {
    note_text.split_whitespace().count()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(id: &str, mrs: Option<u8>, died: Option<bool>) -> PatientRecord {
        PatientRecord {
            id: id.into(),
            note_text: "note".into(),
            mrs_90d: mrs,
            mrs_followup_days: None,
            age_years: None,
            sex: None,
            evt: None,
            died_in_hospital: died,
            structured_overrides: None,
        }
    }

    #[test]
    fn exclusion_order_and_counts() {
        // 5 records, 2 missing label, 1 of the remaining 3 died in hospital.
        let cohort = Cohort::from_records(
            vec![
                rec("a", None, None),
                rec("b", Some(3), Some(true)),
                rec("c", Some(2), Some(false)),
                rec("d", None, Some(true)),
                rec("e", Some(0), None),
            ],
            "test",
        )
        .unwrap();
        let (kept, report) = apply_exclusions(&cohort);
        assert_eq!(report.missing_mrs_90d, 2);
        assert_eq!(report.in_hospital_death, 1);
        assert_eq!(report.retained, 2);
        assert_eq!(kept.len(), 2);
        let ids: Vec<&str> = kept.records.iter().map(|r| r.id.as_str()).collect();
        assert_eq!(ids, vec!["c", "e"]);
    }

    #[test]
    fn exclusions_identity_when_clean() {
        let cohort = Cohort::from_records(
            vec![rec("a", Some(1), Some(false)), rec("b", Some(2), None)],
            "test",
        )
        .unwrap();
        let (kept, report) = apply_exclusions(&cohort);
        assert_eq!(kept.records, cohort.records);
        assert_eq!(report.missing_mrs_90d, 0);
        assert_eq!(report.in_hospital_death, 0);
    }

    #[test]
    fn exclusions_idempotent() {
        let cohort = Cohort::from_records(
            vec![
                rec("a", None, None),
                rec("b", Some(3), Some(true)),
                rec("c", Some(2), None),
            ],
            "test",
        )
        .unwrap();
        let (once, _) = apply_exclusions(&cohort);
        let (twice, report) = apply_exclusions(&once);
        assert_eq!(once.records, twice.records);
        assert_eq!(report.missing_mrs_90d + report.in_hospital_death, 0);
        assert_eq!(once.content_hash(), twice.content_hash());
    }

    #[test]
    fn paper_scale_exclusions() {
        // 1462 identified, 937 without labels, 61 in-hospital deaths -> 464.
        let mut records = Vec::new();
        for i in 0..937 {
            records.push(rec(&format!("m{i}"), None, None));
        }
        for i in 0..61 {
            records.push(rec(&format!("d{i}"), Some(6), Some(true)));
        }
        for i in 0..464 {
            records.push(rec(&format!("k{i}"), Some((i % 7) as u8), Some(false)));
        }
        assert_eq!(records.len(), 1462);
        let cohort = Cohort::from_records(records, "test").unwrap();
        let (kept, report) = apply_exclusions(&cohort);
        assert_eq!(report.missing_mrs_90d, 937);
        assert_eq!(report.in_hospital_death, 61);
        assert_eq!(kept.len(), 464);
    }

    #[test]
    fn word_count_whitespace_rule() {
        assert_eq!(word_count(""), 0);
        assert_eq!(word_count("NIHSS 15 on arrival"), 4);
        assert_eq!(word_count("a\n b\t\tc"), 3);
        assert_eq!(word_count("   "), 0);
    }

    #[test]
    fn duplicate_ids_rejected() {
        let err = Cohort::from_records(
            vec![rec("p1", Some(1), None), rec("p1", Some(2), None)],
            "test",
        )
        .unwrap_err();
        match err {
            CorpusError::DuplicateIds { ids } => assert_eq!(ids, vec!["p1".to_string()]),
            other => panic!("unexpected error {other:?}"),
        }
    }
}
