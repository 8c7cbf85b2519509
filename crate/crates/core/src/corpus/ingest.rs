//! Corpus ingestion from JSONL and CSV.
//!
//! Malformed rows are collected into one error report naming line numbers,
//! never silently dropped. Unknown fields are ignored. CSV treats the empty
//! string as missing for optional fields.

use std::path::Path;

use serde::Deserialize;

use super::{Cohort, CorpusError, PatientRecord};
use crate::features::{Sex, StructuredFeatures};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CorpusFormat {
    Jsonl,
    Csv,
}

impl CorpusFormat {
    /// Guesses from the file extension; defaults to JSONL.
    pub fn from_path(path: &Path) -> CorpusFormat {
        match path.extension().and_then(|e| e.to_str()) {
            Some("csv") => CorpusFormat::Csv,
            _ => CorpusFormat::Jsonl,
        }
    }
}

/// One problem found while ingesting, anchored to its input line.
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct RowIssue {
    pub line: usize,
    pub problem: String,
}

/// Reads a corpus file into a cohort.
pub fn ingest_corpus(path: &Path, format: CorpusFormat) -> Result<Cohort, CorpusError> {
    let text = std::fs::read_to_string(path).map_err(|source| CorpusError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let source = path.display().to_string();
    match format {
        CorpusFormat::Jsonl => ingest_jsonl_str(&text, &source),
        CorpusFormat::Csv => ingest_csv_str(&text, &source),
    }
}

pub fn ingest_jsonl_str(text: &str, source: &str) -> Result<Cohort, CorpusError> {
    let mut records = Vec::new();
    let mut issues = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        let line_no = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str::<RawRecord>(line) {
            Ok(raw) => match raw.validate(line_no) {
                Ok(record) => records.push(record),
                Err(mut row_issues) => issues.append(&mut row_issues),
            },
            Err(e) => issues.push(RowIssue {
                line: line_no,
                problem: format!("invalid JSON: {e}"),
            }),
        }
    }
    finish(records, issues, source)
}

fn ingest_csv_str(text: &str, source: &str) -> Result<Cohort, CorpusError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_reader(text.as_bytes());
    let headers = reader
        .headers()
        .map_err(|e| CorpusError::MalformedRows {
            issues: vec![RowIssue {
                line: 1,
                problem: format!("cannot read CSV header: {e}"),
            }],
        })?
        .clone();
    let mut records = Vec::new();
    let mut issues = Vec::new();
    for (idx, row) in reader.records().enumerate() {
        // Header occupies line 1; data starts at line 2. Quoted multi-line
        // fields shift true line numbers, so this is the row position.
        let line_no = idx + 2;
        let row = match row {
            Ok(r) => r,
            Err(e) => {
                issues.push(RowIssue {
                    line: line_no,
                    problem: format!("invalid CSV row: {e}"),
                });
                continue;
            }
        };
        let field = |name: &str| -> Option<&str> {
            headers
                .iter()
                .position(|h| h == name)
                .and_then(|i| row.get(i))
                .filter(|v| !v.is_empty())
        };
        let raw = RawRecord {
            id: field("id").map(str::to_string),
            note_text: field("note_text").map(str::to_string),
            mrs_90d: field("mrs_90d")
                .map(|v| parse_json_number(v, line_no, "mrs_90d", &mut issues)),
            mrs_followup_days: field("mrs_followup_days")
                .map(|v| parse_json_number(v, line_no, "mrs_followup_days", &mut issues)),
            age_years: field("age_years")
                .map(|v| parse_json_number(v, line_no, "age_years", &mut issues)),
            sex: field("sex").map(|v| serde_json::Value::String(v.to_string())),
            evt: field("evt").map(|v| parse_json_bool(v, line_no, "evt", &mut issues)),
            died_in_hospital: field("died_in_hospital")
                .map(|v| parse_json_bool(v, line_no, "died_in_hospital", &mut issues)),
            structured_overrides: field("structured_overrides").map(|v| {
                serde_json::from_str(v).unwrap_or_else(|e| {
                    issues.push(RowIssue {
                        line: line_no,
                        problem: format!("structured_overrides is not a JSON object: {e}"),
                    });
                    serde_json::Value::Null
                })
            }),
        };
        match raw.validate(line_no) {
            Ok(record) => records.push(record),
            Err(mut row_issues) => issues.append(&mut row_issues),
        }
    }
    finish(records, issues, source)
}

fn parse_json_number(
    v: &str,
    line: usize,
    name: &str,
    issues: &mut Vec<RowIssue>,
) -> serde_json::Value {
    match v.trim().parse::<i64>() {
        Ok(n) => serde_json::Value::from(n),
        Err(_) => {
            issues.push(RowIssue {
                line,
                problem: format!("{name} is not an integer: {v:?}"),
            });
            serde_json::Value::Null
        }
    }
}

fn parse_json_bool(
    v: &str,
    line: usize,
    name: &str,
    issues: &mut Vec<RowIssue>,
) -> serde_json::Value {
    match v.trim().to_ascii_lowercase().as_str() {
        "true" | "1" => serde_json::Value::Bool(true),
        "false" | "0" => serde_json::Value::Bool(false),
        _ => {
            issues.push(RowIssue {
                line,
                problem: format!("{name} is not a boolean: {v:?}"),
            });
            serde_json::Value::Null
        }
    }
}

fn finish(
    records: Vec<PatientRecord>,
    issues: Vec<RowIssue>,
    source: &str,
) -> Result<Cohort, CorpusError> {
    if !issues.is_empty() {
        return Err(CorpusError::MalformedRows { issues });
    }
    Cohort::from_records(records, source)
}

/// Permissive wire shape; validation happens in `validate` so every problem
/// in a row is reported, not just the first.
#[derive(Debug, Deserialize)]
struct RawRecord {
    #[serde(default)]
    id: Option<String>,
    #[serde(default)]
    note_text: Option<String>,
    #[serde(default)]
    mrs_90d: Option<serde_json::Value>,
    #[serde(default)]
    mrs_followup_days: Option<serde_json::Value>,
    #[serde(default)]
    age_years: Option<serde_json::Value>,
    #[serde(default)]
    sex: Option<serde_json::Value>,
    #[serde(default)]
    evt: Option<serde_json::Value>,
    #[serde(default)]
    died_in_hospital: Option<serde_json::Value>,
    #[serde(default)]
    structured_overrides: Option<serde_json::Value>,
}

impl RawRecord {
    fn validate(self, line: usize) -> Result<PatientRecord, Vec<RowIssue>> {
        let mut issues = Vec::new();
        let issue = |problem: String| RowIssue { line, problem };

        let id = match self.id {
            Some(ref s) if !s.trim().is_empty() => s.clone(),
            Some(_) => {
                issues.push(issue("`id` is empty".into()));
                String::new()
            }
            None => {
                issues.push(issue("missing required field `id`".into()));
                String::new()
            }
        };
        let note_text = match self.note_text {
            Some(ref s) if !s.trim().is_empty() => s.clone(),
            Some(_) => {
                issues.push(issue("`note_text` is empty".into()));
                String::new()
            }
            None => {
                issues.push(issue("missing required field `note_text`".into()));
                String::new()
            }
        };

        let mrs_90d = match opt_u64(&self.mrs_90d) {
            Ok(v) => {
                let v = v.filter(|v| *v <= 6).map(|v| v as u8);
                if v.is_none() && matches!(opt_u64(&self.mrs_90d), Ok(Some(_))) {
                    issues.push(issue("mrs_90d must be an integer in [0, 6]".into()));
                }
                v
            }
            Err(_) => {
                issues.push(issue("mrs_90d must be an integer in [0, 6] or null".into()));
                None
            }
        };
        let mrs_followup_days = match opt_u64(&self.mrs_followup_days) {
            Ok(v) => v.map(|v| v as u32),
            Err(_) => {
                issues.push(issue("mrs_followup_days must be an integer or null".into()));
                None
            }
        };
        let age_years = match opt_u64(&self.age_years) {
            Ok(v) => v.map(|v| v as u32),
            Err(_) => {
                issues.push(issue(
                    "age_years must be a non-negative integer or null".into(),
                ));
                None
            }
        };
        let sex = match &self.sex {
            None | Some(serde_json::Value::Null) => None,
            Some(serde_json::Value::String(s)) => match s.as_str() {
                "male" => Some(Sex::Male),
                "female" => Some(Sex::Female),
                other => {
                    issues.push(issue(format!(
                        "sex must be \"male\" or \"female\", got {other:?}"
                    )));
                    None
                }
            },
            Some(other) => {
                issues.push(issue(format!("sex must be a string, got {other}")));
                None
            }
        };
        let evt = match opt_bool(&self.evt) {
            Ok(v) => v,
            Err(_) => {
                issues.push(issue("evt must be a boolean or null".into()));
                None
            }
        };
        let died_in_hospital = match opt_bool(&self.died_in_hospital) {
            Ok(v) => v,
            Err(_) => {
                issues.push(issue("died_in_hospital must be a boolean or null".into()));
                None
            }
        };
        let structured_overrides = match &self.structured_overrides {
            None | Some(serde_json::Value::Null) => None,
            Some(v @ serde_json::Value::Object(_)) => {
                match serde_json::from_value::<StructuredFeatures>(v.clone()) {
                    Ok(f) => Some(f),
                    Err(e) => {
                        issues.push(issue(format!("structured_overrides: {e}")));
                        None
                    }
                }
            }
            Some(other) => {
                issues.push(issue(format!(
                    "structured_overrides must be an object, got {other}"
                )));
                None
            }
        };

        if issues.is_empty() {
            Ok(PatientRecord {
                id,
                note_text,
                mrs_90d,
                mrs_followup_days,
                age_years,
                sex,
                evt,
                died_in_hospital,
                structured_overrides,
            })
        } else {
            Err(issues)
        }
    }
}

fn opt_u64(v: &Option<serde_json::Value>) -> Result<Option<u64>, ()> {
    match v {
        None | Some(serde_json::Value::Null) => Ok(None),
        Some(serde_json::Value::Number(n)) => n.as_u64().map(Some).ok_or(()),
        Some(_) => Err(()),
    }
}

fn opt_bool(v: &Option<serde_json::Value>) -> Result<Option<bool>, ()> {
    match v {
        None | Some(serde_json::Value::Null) => Ok(None),
        Some(serde_json::Value::Bool(b)) => Ok(Some(*b)),
        Some(_) => Err(()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn three_valid_rows() {
        let text = r#"{"id":"p1","note_text":"note one","mrs_90d":3}
{"id":"p2","note_text":"note two","mrs_90d":null,"age_years":70,"sex":"female"}
{"id":"p3","note_text":"note three","evt":true,"died_in_hospital":false}
"#;
        let cohort = ingest_jsonl_str(text, "mem").unwrap();
        assert_eq!(cohort.len(), 3);
        assert_eq!(cohort.records[0].mrs_90d, Some(3));
        assert_eq!(cohort.records[1].sex, Some(Sex::Female));
        assert_eq!(cohort.records[2].evt, Some(true));
    }

    #[test]
    fn missing_id_names_line() {
        let text = "{\"id\":\"p1\",\"note_text\":\"a\"}\n{\"note_text\":\"b\"}\n";
        let err = ingest_jsonl_str(text, "mem").unwrap_err();
        match err {
            CorpusError::MalformedRows { issues } => {
                assert_eq!(issues.len(), 1);
                assert_eq!(issues[0].line, 2);
                assert!(issues[0].problem.contains("id"));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn duplicate_id_reported() {
        let text = "{\"id\":\"p1\",\"note_text\":\"a\"}\n{\"id\":\"p1\",\"note_text\":\"b\"}\n";
        let err = ingest_jsonl_str(text, "mem").unwrap_err();
        match err {
            CorpusError::DuplicateIds { ids } => assert_eq!(ids, vec!["p1".to_string()]),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn unknown_fields_ignored() {
        let text = "{\"id\":\"p1\",\"note_text\":\"a\",\"extra\":42}\n";
        let cohort = ingest_jsonl_str(text, "mem").unwrap();
        assert_eq!(cohort.len(), 1);
    }

    #[test]
    fn mrs_out_of_range_is_an_issue() {
        let text = "{\"id\":\"p1\",\"note_text\":\"a\",\"mrs_90d\":7}\n";
        let err = ingest_jsonl_str(text, "mem").unwrap_err();
        assert!(matches!(err, CorpusError::MalformedRows { .. }));
    }

    #[test]
    fn all_problems_reported_at_once() {
        let text = "{\"note_text\":\"\"}\nnot json\n";
        let err = ingest_jsonl_str(text, "mem").unwrap_err();
        match err {
            CorpusError::MalformedRows { issues } => {
                assert!(issues.len() >= 3, "issues: {issues:?}");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn csv_round_trip_with_empty_as_missing() {
        let csv = "id,note_text,mrs_90d,mrs_followup_days,age_years,sex,evt,died_in_hospital\n\
                   p1,\"Baseline NIHSS 12. Recovering.\",3,92,70,male,true,false\n\
                   p2,\"Minor deficits only.\",,,,,,\n";
        let cohort = ingest_corpus_from_csv(csv);
        assert_eq!(cohort.len(), 2);
        assert_eq!(cohort.records[0].mrs_90d, Some(3));
        assert_eq!(cohort.records[0].sex, Some(Sex::Male));
        assert_eq!(cohort.records[1].mrs_90d, None);
        assert_eq!(cohort.records[1].age_years, None);
    }

    #[test]
    fn csv_and_jsonl_hash_identically() {
        let csv = "id,note_text,mrs_90d,age_years,sex\np1,hello world,2,65,female\n";
        let from_csv = ingest_corpus_from_csv(csv);
        let jsonl = from_csv.to_jsonl();
        let from_jsonl = ingest_jsonl_str(&jsonl, "mem2").unwrap();
        assert_eq!(from_csv.content_hash(), from_jsonl.content_hash());
        assert_eq!(from_csv.records, from_jsonl.records);
    }

    fn ingest_corpus_from_csv(text: &str) -> Cohort {
        super::ingest_csv_str(text, "mem.csv").unwrap()
    }

    #[test]
    fn jsonl_round_trip_same_hash() {
        let text = r#"{"id":"a","note_text":"x","mrs_90d":1,"age_years":55,"sex":"male","evt":false}
{"id":"b","note_text":"y","mrs_90d":4,"structured_overrides":{"nihss_baseline":9}}
"#;
        let first = ingest_jsonl_str(text, "one").unwrap();
        let second = ingest_jsonl_str(&first.to_jsonl(), "two").unwrap();
        assert_eq!(first.content_hash(), second.content_hash());
        assert_eq!(first.records, second.records);
    }
}
