//! Numeric encoding of structured features with missingness handling.
//!
//! The encoder is fit on training rows only (imputation values and z-score
//! statistics), then applied to any rows. Every feature with missingness in
//! the training rows gets a companion 0/1 missing-indicator column.

use serde::{Deserialize, Serialize};

use super::{DischargeDestination, FeatureError, Sex, StructuredFeatures, TiciGrade};

/// How a column maps back to a `StructuredFeatures` field.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum ColumnEncoding {
    /// z-scored numeric: stored value is (raw - mean) / std.
    Numeric { mean: f64, std: f64 },
    /// 0/1 flag.
    Boolean,
    /// Raw ordinal level (TICI grades 0..=5).
    Ordinal,
    /// One-hot slice member for a categorical field.
    OneHot { category: String },
    /// 1 when the source field was missing in this row.
    MissingIndicator { of: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnSpec {
    pub name: String,
    pub encoding: ColumnEncoding,
    /// Raw-scale value substituted when the field is missing.
    pub imputation: f64,
}

/// Encoded rows plus the column spec that fully determines decoding.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FeatureMatrix {
    pub rows: Vec<Vec<f64>>,
    pub missing_mask: Vec<Vec<bool>>,
    pub column_spec: Vec<ColumnSpec>,
}

impl FeatureMatrix {
    pub fn width(&self) -> usize {
        self.column_spec.len()
    }
}

/// Fitted encoder: imputation values, z-score statistics, indicator layout.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FeatureEncoder {
    columns: Vec<ColumnSpec>,
    /// Base fields that carry a missing-indicator column.
    indicator_fields: Vec<String>,
    /// Fields observed nowhere in the training rows (kept, indicator only).
    pub all_missing_fields: Vec<String>,
}

const NUMERIC_FIELDS: [&str; 6] = [
    "age_years",
    "nihss_baseline",
    "nihss_24h",
    "nihss_discharge",
    "hba1c",
    "ldl",
];
const BOOLEAN_FIELDS: [&str; 9] = [
    "sex_female",
    "prior_stroke",
    "hypertension",
    "diabetes",
    "atrial_fibrillation",
    "transfer_status",
    "iv_tpa",
    "evt",
    "procedure_complication",
];

fn numeric_value(f: &StructuredFeatures, name: &str) -> Option<f64> {
    match name {
        "age_years" => f.age_years.map(|v| v as f64),
        "nihss_baseline" => f.nihss_baseline.map(|v| v as f64),
        "nihss_24h" => f.nihss_24h.map(|v| v as f64),
        "nihss_discharge" => f.nihss_discharge.map(|v| v as f64),
        "hba1c" => f.hba1c,
        "ldl" => f.ldl,
        _ => unreachable!("unknown numeric field {name}"),
    }
}

fn boolean_value(f: &StructuredFeatures, name: &str) -> Option<f64> {
    let b = match name {
        "sex_female" => f.sex.map(|s| s == Sex::Female),
        "prior_stroke" => f.prior_stroke,
        "hypertension" => f.hypertension,
        "diabetes" => f.diabetes,
        "atrial_fibrillation" => f.atrial_fibrillation,
        "transfer_status" => f.transfer_status,
        "iv_tpa" => f.iv_tpa,
        "evt" => f.evt,
        "procedure_complication" => f.procedure_complication,
        _ => unreachable!("unknown boolean field {name}"),
    };
    b.map(|b| if b { 1.0 } else { 0.0 })
}

/// Nearest-rank median of observed values. Caller guarantees nonempty.
fn nearest_rank_median(values: &mut [f64]) -> f64 {
    values.sort_by(|a, b| a.total_cmp(b));
    let rank = (values.len() as f64 * 0.5).ceil() as usize;
    values[rank.max(1) - 1]
}

impl FeatureEncoder {
    /// Fits imputation and standardization statistics on training rows.
    pub fn fit(train: &[StructuredFeatures]) -> Result<Self, FeatureError> {
        if train.is_empty() {
            return Err(FeatureError::EmptyMatrix);
        }
        let n = train.len() as f64;
        let mut columns = Vec::new();
        let mut indicator_fields = Vec::new();
        let mut all_missing_fields = Vec::new();

        let mut note_missing = |field: &str, observed: usize| {
            if observed < train.len() {
                indicator_fields.push(field.to_string());
            }
            if observed == 0 {
                all_missing_fields.push(field.to_string());
            }
        };

        for name in NUMERIC_FIELDS {
            let mut observed: Vec<f64> = train
                .iter()
                .filter_map(|f| numeric_value(f, name))
                .collect();
            note_missing(name, observed.len());
            let (mean, std, imputation) = if observed.is_empty() {
                (0.0, 0.0, 0.0)
            } else {
                let mean = observed.iter().sum::<f64>() / observed.len() as f64;
                let var = observed.iter().map(|v| (v - mean).powi(2)).sum::<f64>()
                    / observed.len() as f64;
                (mean, var.sqrt(), nearest_rank_median(&mut observed))
            };
            columns.push(ColumnSpec {
                name: name.to_string(),
                encoding: ColumnEncoding::Numeric { mean, std },
                imputation,
            });
        }

        for name in BOOLEAN_FIELDS {
            let observed: Vec<f64> = train
                .iter()
                .filter_map(|f| boolean_value(f, name))
                .collect();
            note_missing(name, observed.len());
            let ones = observed.iter().filter(|v| **v == 1.0).count();
            // Mode; ties resolve to 0.
            let imputation = if ones * 2 > observed.len() { 1.0 } else { 0.0 };
            columns.push(ColumnSpec {
                name: name.to_string(),
                encoding: ColumnEncoding::Boolean,
                imputation,
            });
        }

        {
            let observed: Vec<f64> = train
                .iter()
                .filter_map(|f| f.tici.map(TiciGrade::ordinal))
                .collect();
            note_missing("tici", observed.len());
            let imputation = mode(&observed).unwrap_or(0.0);
            columns.push(ColumnSpec {
                name: "tici".to_string(),
                encoding: ColumnEncoding::Ordinal,
                imputation,
            });
        }

        {
            let observed: Vec<DischargeDestination> = train
                .iter()
                .filter_map(|f| f.discharge_destination)
                .collect();
            note_missing("discharge_destination", observed.len());
            let mode_dest = DischargeDestination::ALL
                .iter()
                .max_by_key(|d| observed.iter().filter(|o| *o == *d).count())
                .copied()
                .unwrap_or(DischargeDestination::Other);
            for dest in DischargeDestination::ALL {
                columns.push(ColumnSpec {
                    name: format!("discharge_destination={}", dest.as_str()),
                    encoding: ColumnEncoding::OneHot {
                        category: dest.as_str().to_string(),
                    },
                    imputation: if dest == mode_dest { 1.0 } else { 0.0 },
                });
            }
        }

        for field in &indicator_fields {
            columns.push(ColumnSpec {
                name: format!("{field}_missing"),
                encoding: ColumnEncoding::MissingIndicator { of: field.clone() },
                imputation: 0.0,
            });
        }

        let _ = n;
        Ok(FeatureEncoder {
            columns,
            indicator_fields,
            all_missing_fields,
        })
    }

    pub fn column_spec(&self) -> &[ColumnSpec] {
        &self.columns
    }

    pub fn width(&self) -> usize {
        self.columns.len()
    }

    /// Encodes rows using the fitted statistics.
    pub fn transform(&self, rows: &[StructuredFeatures]) -> FeatureMatrix {
        let mut out_rows = Vec::with_capacity(rows.len());
        let mut out_mask = Vec::with_capacity(rows.len());
        for f in rows {
            let (row, mask) = self.encode_row(f);
            out_rows.push(row);
            out_mask.push(mask);
        }
        FeatureMatrix {
            rows: out_rows,
            missing_mask: out_mask,
            column_spec: self.columns.clone(),
        }
    }

    pub fn encode_row(&self, f: &StructuredFeatures) -> (Vec<f64>, Vec<bool>) {
        let mut row = Vec::with_capacity(self.columns.len());
        let mut mask = Vec::with_capacity(self.columns.len());
        let mut missing_by_field: Vec<(&str, bool)> = Vec::new();

        for spec in &self.columns {
            let (value, missing) = match &spec.encoding {
                ColumnEncoding::Numeric { mean, std } => {
                    let raw = numeric_value(f, &spec.name);
                    let missing = raw.is_none();
                    let raw = raw.unwrap_or(spec.imputation);
                    let z = if *std > 0.0 { (raw - mean) / std } else { 0.0 };
                    (z, missing)
                }
                ColumnEncoding::Boolean => {
                    let raw = boolean_value(f, &spec.name);
                    (raw.unwrap_or(spec.imputation), raw.is_none())
                }
                ColumnEncoding::Ordinal => {
                    let raw = f.tici.map(TiciGrade::ordinal);
                    (raw.unwrap_or(spec.imputation), raw.is_none())
                }
                ColumnEncoding::OneHot { category } => match f.discharge_destination {
                    Some(d) => ((d.as_str() == category) as u8 as f64, false),
                    None => (spec.imputation, true),
                },
                ColumnEncoding::MissingIndicator { of } => {
                    let was_missing = missing_by_field
                        .iter()
                        .find(|(name, _)| name == of)
                        .map(|(_, m)| *m)
                        .unwrap_or(false);
                    (if was_missing { 1.0 } else { 0.0 }, false)
                }
            };
            if !matches!(spec.encoding, ColumnEncoding::MissingIndicator { .. }) {
                let base = spec.name.split('=').next().unwrap_or(&spec.name);
                if !missing_by_field.iter().any(|(name, _)| *name == base) {
                    missing_by_field.push((base, missing));
                }
            }
            row.push(value);
            mask.push(missing);
        }
        (row, mask)
    }

    /// Inverts an encoded row back to raw-scale values; used to verify that
    /// the column spec fully determines decoding.
    pub fn decode_row(&self, row: &[f64]) -> StructuredFeatures {
        let mut f = StructuredFeatures::default();
        let mut best_dest: Option<(f64, DischargeDestination)> = None;
        for (spec, value) in self.columns.iter().zip(row) {
            match &spec.encoding {
                ColumnEncoding::Numeric { mean, std } => {
                    // std == 0 means every observed value equaled the mean.
                    let raw = if *std > 0.0 {
                        value * std + mean
                    } else {
                        *mean
                    };
                    match spec.name.as_str() {
                        "age_years" => f.age_years = Some(raw.round() as u32),
                        "nihss_baseline" => f.nihss_baseline = Some(raw.round() as u8),
                        "nihss_24h" => f.nihss_24h = Some(raw.round() as u8),
                        "nihss_discharge" => f.nihss_discharge = Some(raw.round() as u8),
                        "hba1c" => f.hba1c = Some(raw),
                        "ldl" => f.ldl = Some(raw),
                        _ => {}
                    }
                }
                ColumnEncoding::Boolean => {
                    let b = *value >= 0.5;
                    match spec.name.as_str() {
                        "sex_female" => f.sex = Some(if b { Sex::Female } else { Sex::Male }),
                        "prior_stroke" => f.prior_stroke = Some(b),
                        "hypertension" => f.hypertension = Some(b),
                        "diabetes" => f.diabetes = Some(b),
                        "atrial_fibrillation" => f.atrial_fibrillation = Some(b),
                        "transfer_status" => f.transfer_status = Some(b),
                        "iv_tpa" => f.iv_tpa = Some(b),
                        "evt" => f.evt = Some(b),
                        "procedure_complication" => f.procedure_complication = Some(b),
                        _ => {}
                    }
                }
                ColumnEncoding::Ordinal => f.tici = TiciGrade::from_ordinal(*value),
                ColumnEncoding::OneHot { category } => {
                    if best_dest.is_none_or(|(v, _)| *value > v) {
                        let dest = DischargeDestination::ALL
                            .iter()
                            .find(|d| d.as_str() == category)
                            .copied()
                            .unwrap_or(DischargeDestination::Other);
                        best_dest = Some((*value, dest));
                    }
                }
                ColumnEncoding::MissingIndicator { .. } => {}
            }
        }
        f.discharge_destination = best_dest.map(|(_, d)| d);
        f
    }
}

fn mode(values: &[f64]) -> Option<f64> {
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.total_cmp(b));
    let mut best: Option<(usize, f64)> = None;
    let mut i = 0;
    while i < sorted.len() {
        let j = sorted[i..].iter().take_while(|v| **v == sorted[i]).count();
        if best.is_none_or(|(count, _)| j > count) {
            best = Some((j, sorted[i]));
        }
        i += j;
    }
    best.map(|(_, v)| v)
}
