//! Structured clinical variables: rule-based extraction from note text,
//! numeric encoding with missingness handling, and the linear SVR baseline.

mod encode;
mod extract;
mod grammar;
mod svr;

pub use encode::{ColumnEncoding, ColumnSpec, FeatureEncoder, FeatureMatrix};
pub use extract::{extract_features, extract_features_logged, ExtractionLog};
pub use grammar::{Grammar, GrammarError, GRAMMAR_VERSION};
pub use svr::{
    predict_clinical_ml, train_svr, ClinicalPrediction, SvrError, SvrHyperparams, SvrModel,
    SvrTrainConfig,
};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum FeatureError {
    #[error("feature matrix is empty")]
    EmptyMatrix,
    #[error("non-finite value in feature matrix at row {row}, column {column}")]
    NonFinite { row: usize, column: usize },
    #[error("row width {got} does not match model width {expected}")]
    WidthMismatch { got: usize, expected: usize },
    #[error("labels length {labels} does not match row count {rows}")]
    LabelMismatch { labels: usize, rows: usize },
}

/// Patient sex as recorded in the registry.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Sex {
    Male,
    Female,
}

/// Thrombolysis in Cerebral Infarction reperfusion grade.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum TiciGrade {
    #[serde(rename = "0")]
    Grade0,
    #[serde(rename = "1")]
    Grade1,
    #[serde(rename = "2a")]
    Grade2a,
    #[serde(rename = "2b")]
    Grade2b,
    #[serde(rename = "2c")]
    Grade2c,
    #[serde(rename = "3")]
    Grade3,
}

impl TiciGrade {
    /// Ordinal encoding used by the feature matrix.
    pub fn ordinal(self) -> f64 {
        match self {
            TiciGrade::Grade0 => 0.0,
            TiciGrade::Grade1 => 1.0,
            TiciGrade::Grade2a => 2.0,
            TiciGrade::Grade2b => 3.0,
            TiciGrade::Grade2c => 4.0,
            TiciGrade::Grade3 => 5.0,
        }
    }

    pub fn from_ordinal(v: f64) -> Option<Self> {
        match v.round() as i64 {
            0 => Some(TiciGrade::Grade0),
            1 => Some(TiciGrade::Grade1),
            2 => Some(TiciGrade::Grade2a),
            3 => Some(TiciGrade::Grade2b),
            4 => Some(TiciGrade::Grade2c),
            5 => Some(TiciGrade::Grade3),
            _ => None,
        }
    }
}

/// Where the patient went after the acute stay.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DischargeDestination {
    Home,
    AcuteRehab,
    Snf,
    Ltac,
    Hospice,
    Other,
}

impl DischargeDestination {
    pub const ALL: [DischargeDestination; 6] = [
        DischargeDestination::Home,
        DischargeDestination::AcuteRehab,
        DischargeDestination::Snf,
        DischargeDestination::Ltac,
        DischargeDestination::Hospice,
        DischargeDestination::Other,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            DischargeDestination::Home => "home",
            DischargeDestination::AcuteRehab => "acute_rehab",
            DischargeDestination::Snf => "snf",
            DischargeDestination::Ltac => "ltac",
            DischargeDestination::Hospice => "hospice",
            DischargeDestination::Other => "other",
        }
    }
}

/// The clinical-variable vector used by the Clinical ML baseline. Every field
/// is optional: absence means the note carried no extractable evidence, never
/// a default value.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct StructuredFeatures {
    pub age_years: Option<u32>,
    pub sex: Option<Sex>,
    pub prior_stroke: Option<bool>,
    pub hypertension: Option<bool>,
    pub diabetes: Option<bool>,
    pub atrial_fibrillation: Option<bool>,
    pub transfer_status: Option<bool>,
    pub nihss_baseline: Option<u8>,
    pub nihss_24h: Option<u8>,
    pub nihss_discharge: Option<u8>,
    pub hba1c: Option<f64>,
    pub ldl: Option<f64>,
    pub iv_tpa: Option<bool>,
    pub evt: Option<bool>,
    pub tici: Option<TiciGrade>,
    pub procedure_complication: Option<bool>,
    pub discharge_destination: Option<DischargeDestination>,
}

impl StructuredFeatures {
    /// Applies `overrides` on top of `self`: any populated override field
    /// replaces the extracted value.
    pub fn with_overrides(mut self, overrides: &StructuredFeatures) -> Self {
        macro_rules! take {
            ($field:ident) => {
                if overrides.$field.is_some() {
                    self.$field = overrides.$field;
                }
            };
        }
        take!(age_years);
        take!(sex);
        take!(prior_stroke);
        take!(hypertension);
        take!(diabetes);
        take!(atrial_fibrillation);
        take!(transfer_status);
        take!(nihss_baseline);
        take!(nihss_24h);
        take!(nihss_discharge);
        take!(hba1c);
        take!(ldl);
        take!(iv_tpa);
        take!(evt);
        take!(tici);
        take!(procedure_complication);
        take!(discharge_destination);
        self
    }
}
