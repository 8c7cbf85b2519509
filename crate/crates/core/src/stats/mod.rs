//! Evaluation statistics: the three outcome metrics, bootstrap confidence
//! intervals, paired bootstrap model comparisons with Benjamini-Hochberg
//! control, and subgroup analyses producing forest-plot data.
//!
//! Everything here is deterministic given (B, seed): each bootstrap resample
//! draws from its own derived substream, so results are independent of
//! evaluation order and parallelism.

mod bootstrap;
mod compare;
mod subgroup;

pub use bootstrap::{bootstrap_ci, paired_bootstrap_test, paired_bootstrap_tests};
pub use compare::{benjamini_hochberg, compare_outcomes, ComparisonResult, MetricComparison};
pub use subgroup::{
    age_band, quartile_bins, subgroup_report, AgeBand, ForestRow, QuartileBins, SubgroupAxis,
};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::Cohort;
use crate::pipeline::{PredictionLine, PredictionStatus};

#[derive(Debug, Error)]
pub enum StatsError {
    #[error("outcomes are empty")]
    EmptyOutcomes,
    #[error("aligned vectors differ in length: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("mRS value {0} outside [0, 6]")]
    ValueOutOfRange(u8),
    #[error("bootstrap needs n >= 2 and B >= 100 (got n = {n}, B = {b})")]
    DegenerateBootstrap { n: usize, b: usize },
    #[error("patient id sets differ between arms (e.g. {example})")]
    IdMismatch { example: String },
    #[error("arms disagree on y_true for patient {0}")]
    TruthMismatch(String),
    #[error("p-value {0} outside (0, 1]")]
    BadPValue(f64),
    #[error("FDR level q must be in (0, 1), got {0}")]
    BadQ(f64),
    #[error("quartile bins need at least 4 values, got {0}")]
    TooFewValues(usize),
    #[error("prediction for unknown patient id {0}")]
    UnknownPatient(String),
    #[error("axis {0:?} is not one of sex, evt, length, age")]
    UnknownAxis(String),
}

/// Aligned truth/prediction vectors for the records that produced a score.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairedOutcomes {
    patient_ids: Vec<String>,
    y_true: Vec<u8>,
    y_pred: Vec<u8>,
}

impl PairedOutcomes {
    pub fn new(
        patient_ids: Vec<String>,
        y_true: Vec<u8>,
        y_pred: Vec<u8>,
    ) -> Result<Self, StatsError> {
        if patient_ids.is_empty() {
            return Err(StatsError::EmptyOutcomes);
        }
        if patient_ids.len() != y_true.len() {
            return Err(StatsError::LengthMismatch(patient_ids.len(), y_true.len()));
        }
        if y_true.len() != y_pred.len() {
            return Err(StatsError::LengthMismatch(y_true.len(), y_pred.len()));
        }
        if let Some(v) = y_true.iter().chain(&y_pred).find(|v| **v > 6) {
            return Err(StatsError::ValueOutOfRange(*v));
        }
        Ok(PairedOutcomes {
            patient_ids,
            y_true,
            y_pred,
        })
    }

    pub fn len(&self) -> usize {
        self.patient_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.patient_ids.is_empty()
    }

    pub fn patient_ids(&self) -> &[String] {
        &self.patient_ids
    }

    pub fn y_true(&self) -> &[u8] {
        &self.y_true
    }

    pub fn y_pred(&self) -> &[u8] {
        &self.y_pred
    }

    /// |y_pred - y_true| per patient; every metric is a function of these.
    pub fn abs_diffs(&self) -> Vec<u8> {
        self.y_true
            .iter()
            .zip(&self.y_pred)
            .map(|(t, p)| t.abs_diff(*p))
            .collect()
    }

    /// Restriction to a subset of patient ids, preserving order.
    pub fn filter_ids(&self, keep: &dyn Fn(&str) -> bool) -> Option<PairedOutcomes> {
        let mut ids = Vec::new();
        let mut t = Vec::new();
        let mut p = Vec::new();
        for i in 0..self.len() {
            if keep(&self.patient_ids[i]) {
                ids.push(self.patient_ids[i].clone());
                t.push(self.y_true[i]);
                p.push(self.y_pred[i]);
            }
        }
        PairedOutcomes::new(ids, t, p).ok()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    Mae,
    Acc,
    Within1Acc,
}

impl Metric {
    pub const ALL: [Metric; 3] = [Metric::Mae, Metric::Acc, Metric::Within1Acc];

    pub fn as_str(self) -> &'static str {
        match self {
            Metric::Mae => "mae",
            Metric::Acc => "acc",
            Metric::Within1Acc => "within1_acc",
        }
    }

    pub fn from_name(name: &str) -> Option<Metric> {
        match name {
            "mae" => Some(Metric::Mae),
            "acc" => Some(Metric::Acc),
            "within1_acc" | "within1" | "pm1_acc" => Some(Metric::Within1Acc),
            _ => None,
        }
    }

    /// Value of the metric over a diff vector.
    pub fn from_diffs(self, diffs: &[u8]) -> f64 {
        debug_assert!(!diffs.is_empty());
        let n = diffs.len() as f64;
        match self {
            Metric::Mae => diffs.iter().map(|d| *d as f64).sum::<f64>() / n,
            Metric::Acc => diffs.iter().filter(|d| **d == 0).count() as f64 / n,
            Metric::Within1Acc => diffs.iter().filter(|d| **d <= 1).count() as f64 / n,
        }
    }

    pub fn compute(self, outcomes: &PairedOutcomes) -> f64 {
        self.from_diffs(&outcomes.abs_diffs())
    }
}

/// Mean absolute error between predicted and actual scores.
pub fn mae(outcomes: &PairedOutcomes) -> f64 {
    Metric::Mae.compute(outcomes)
}

/// Fraction of exact matches.
pub fn exact_acc(outcomes: &PairedOutcomes) -> f64 {
    Metric::Acc.compute(outcomes)
}

/// Fraction of predictions within one point of the truth.
pub fn within1_acc(outcomes: &PairedOutcomes) -> f64 {
    Metric::Within1Acc.compute(outcomes)
}

/// Records dropped from `PairedOutcomes`, carried in every report header.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExcludedCounts {
    pub parse_failed: usize,
    pub backend_failed: usize,
    pub missing_label: usize,
}

/// Joins persisted predictions with cohort labels. Failed records and
/// unlabeled records are excluded and counted.
pub fn paired_from_predictions(
    lines: &[PredictionLine],
    cohort: &Cohort,
) -> Result<(PairedOutcomes, ExcludedCounts), StatsError> {
    let mut excluded = ExcludedCounts::default();
    let mut ids = Vec::new();
    let mut y_true = Vec::new();
    let mut y_pred = Vec::new();
    for line in lines {
        match line.status {
            PredictionStatus::ParseFailed => {
                excluded.parse_failed += 1;
                continue;
            }
            PredictionStatus::BackendFailed => {
                excluded.backend_failed += 1;
                continue;
            }
            PredictionStatus::Ok => {}
        }
        let record = cohort
            .record(&line.patient_id)
            .ok_or_else(|| StatsError::UnknownPatient(line.patient_id.clone()))?;
        let Some(label) = record.mrs_90d else {
            excluded.missing_label += 1;
            continue;
        };
        ids.push(line.patient_id.clone());
        y_true.push(label);
        y_pred.push(line.predicted_mrs.expect("ok status implies a score"));
    }
    Ok((PairedOutcomes::new(ids, y_true, y_pred)?, excluded))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricCi {
    pub point: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
}

/// Point estimates with bootstrap CIs for all three metrics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub engine: Option<String>,
    pub n: usize,
    pub excluded: ExcludedCounts,
    pub bootstrap_samples: usize,
    pub seed: u64,
    pub mae: MetricCi,
    pub acc: MetricCi,
    pub within1_acc: MetricCi,
}

pub fn metric_report(
    outcomes: &PairedOutcomes,
    excluded: ExcludedCounts,
    engine: Option<String>,
    bootstrap_samples: usize,
    seed: u64,
) -> Result<MetricReport, StatsError> {
    let one = |metric: Metric| -> Result<MetricCi, StatsError> {
        let (ci_lo, ci_hi) = bootstrap_ci(outcomes, metric, bootstrap_samples, seed)?;
        Ok(MetricCi {
            point: metric.compute(outcomes),
            ci_lo,
            ci_hi,
        })
    };
    Ok(MetricReport {
        engine,
        n: outcomes.len(),
        excluded,
        bootstrap_samples,
        seed,
        mae: one(Metric::Mae)?,
        acc: one(Metric::Acc)?,
        within1_acc: one(Metric::Within1Acc)?,
    })
}
