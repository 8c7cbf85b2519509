//! Rule-based extraction of structured clinical variables from note text.
//!
//! Extraction is best-effort: absent evidence leaves a field missing, never a
//! default value. Conflicting mentions resolve last-mention-wins (discharge-
//! proximal mentions appear later in summaries) and are logged for audit.

use super::grammar::{Grammar, Match, MatchValue};
use super::{DischargeDestination, Sex, StructuredFeatures, TiciGrade};

/// Audit trail of an extraction pass.
#[derive(Debug, Clone, Default)]
pub struct ExtractionLog {
    /// One entry per field whose mentions disagreed; the kept value is the last.
    pub conflicts: Vec<String>,
    /// Values found but rejected (out of physiologic range, unknown enum token).
    pub rejected: Vec<String>,
}

/// Extracts structured variables from `note_text`, then applies `overrides`
/// (pre-extracted values take precedence over pattern hits).
pub fn extract_features(
    note_text: &str,
    overrides: Option<&StructuredFeatures>,
) -> StructuredFeatures {
    extract_features_logged(note_text, overrides).0
}

pub fn extract_features_logged(
    note_text: &str,
    overrides: Option<&StructuredFeatures>,
) -> (StructuredFeatures, ExtractionLog) {
    let grammar = Grammar::builtin();
    let lower = note_text.to_lowercase();
    let mut features = StructuredFeatures::default();
    let mut log = ExtractionLog::default();

    for field in &grammar.fields {
        let matches = grammar.matches_for(field, &lower);
        if matches.is_empty() {
            continue;
        }
        if matches
            .windows(2)
            .any(|w| !same_value(&w[0].value, &w[1].value))
        {
            log.conflicts.push(format!(
                "{}: {} mentions disagree, kept the last",
                field.field,
                matches.len()
            ));
        }
        // Last mention wins.
        let winner = matches.last().expect("nonempty");
        apply(&mut features, &field.field, winner, &mut log);
    }

    match overrides {
        Some(ov) => (features.with_overrides(ov), log),
        None => (features, log),
    }
}

fn same_value(a: &MatchValue, b: &MatchValue) -> bool {
    match (a, b) {
        (MatchValue::Number(x), MatchValue::Number(y)) => x == y,
        (MatchValue::Flag(x), MatchValue::Flag(y)) => x == y,
        (MatchValue::Choice(x), MatchValue::Choice(y)) => x == y,
        _ => false,
    }
}

fn apply(features: &mut StructuredFeatures, field: &str, m: &Match, log: &mut ExtractionLog) {
    let mut reject = |msg: String| log.rejected.push(msg);
    match (field, &m.value) {
        ("age_years", MatchValue::Number(v)) => {
            if *v >= 0.0 && *v <= 130.0 && v.fract() == 0.0 {
                features.age_years = Some(*v as u32);
            } else {
                reject(format!("age_years: implausible value {v}"));
            }
        }
        ("sex", MatchValue::Choice(c)) => {
            features.sex = match c.as_str() {
                "male" => Some(Sex::Male),
                "female" => Some(Sex::Female),
                other => {
                    reject(format!("sex: unknown token {other:?}"));
                    None
                }
            }
        }
        ("prior_stroke", MatchValue::Flag(b)) => features.prior_stroke = Some(*b),
        ("hypertension", MatchValue::Flag(b)) => features.hypertension = Some(*b),
        ("diabetes", MatchValue::Flag(b)) => features.diabetes = Some(*b),
        ("atrial_fibrillation", MatchValue::Flag(b)) => features.atrial_fibrillation = Some(*b),
        ("transfer_status", MatchValue::Flag(b)) => features.transfer_status = Some(*b),
        ("nihss_baseline", MatchValue::Number(v)) => set_nihss(
            &mut features.nihss_baseline,
            *v,
            "nihss_baseline",
            &mut reject,
        ),
        ("nihss_24h", MatchValue::Number(v)) => {
            set_nihss(&mut features.nihss_24h, *v, "nihss_24h", &mut reject)
        }
        ("nihss_discharge", MatchValue::Number(v)) => set_nihss(
            &mut features.nihss_discharge,
            *v,
            "nihss_discharge",
            &mut reject,
        ),
        ("hba1c", MatchValue::Number(v)) => features.hba1c = Some(*v),
        ("ldl", MatchValue::Number(v)) => features.ldl = Some(*v),
        ("iv_tpa", MatchValue::Flag(b)) => features.iv_tpa = Some(*b),
        ("evt", MatchValue::Flag(b)) => features.evt = Some(*b),
        ("tici", MatchValue::Choice(c)) => {
            features.tici = match c.as_str() {
                "0" => Some(TiciGrade::Grade0),
                "1" => Some(TiciGrade::Grade1),
                "2a" => Some(TiciGrade::Grade2a),
                "2b" => Some(TiciGrade::Grade2b),
                "2c" => Some(TiciGrade::Grade2c),
                "3" => Some(TiciGrade::Grade3),
                other => {
                    reject(format!("tici: unknown grade {other:?}"));
                    None
                }
            }
        }
        ("procedure_complication", MatchValue::Flag(b)) => {
            features.procedure_complication = Some(*b)
        }
        ("discharge_destination", MatchValue::Choice(c)) => {
            features.discharge_destination = match c.as_str() {
                "home" => Some(DischargeDestination::Home),
                "acute_rehab" => Some(DischargeDestination::AcuteRehab),
                "snf" => Some(DischargeDestination::Snf),
                "ltac" => Some(DischargeDestination::Ltac),
                "hospice" => Some(DischargeDestination::Hospice),
                "other" => Some(DischargeDestination::Other),
                other => {
                    reject(format!("discharge_destination: unknown token {other:?}"));
                    None
                }
            }
        }
        (field, value) => reject(format!("{field}: unexpected match value {value:?}")),
    }
}

fn set_nihss(slot: &mut Option<u8>, v: f64, name: &str, reject: &mut impl FnMut(String)) {
    if (0.0..=42.0).contains(&v) && v.fract() == 0.0 {
        *slot = Some(v as u8);
    } else {
        reject(format!("{name}: value {v} outside 0-42"));
    }
}
