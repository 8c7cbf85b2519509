//! Linear epsilon-insensitive support-vector regression trained by
//! deterministic full-batch subgradient descent with a backtracking step
//! search, so the recorded objective is non-increasing by construction.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{FeatureError, FeatureMatrix};

#[derive(Debug, Error)]
pub enum SvrError {
    #[error(transparent)]
    Feature(#[from] FeatureError),
    #[error("hyperparameter out of range: {0}")]
    BadHyperparam(String),
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct SvrHyperparams {
    /// Slack penalty, > 0.
    pub c: f64,
    /// Insensitivity zone half-width, >= 0.
    pub epsilon: f64,
}

impl Default for SvrHyperparams {
    fn default() -> Self {
        // epsilon = half an mRS step: errors inside half a label are free.
        SvrHyperparams {
            c: 1.0,
            epsilon: 0.5,
        }
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct SvrTrainConfig {
    pub max_epochs: usize,
    pub initial_step: f64,
    /// Stop when the objective improves by less than this between epochs.
    pub tolerance: f64,
}

impl Default for SvrTrainConfig {
    fn default() -> Self {
        SvrTrainConfig {
            max_epochs: 2000,
            initial_step: 0.5,
            tolerance: 1e-10,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SvrModel {
    pub weights: Vec<f64>,
    pub bias: f64,
    pub hyperparams: SvrHyperparams,
    pub iterations: usize,
    pub final_objective: f64,
    /// Objective value after each accepted epoch; non-increasing.
    pub objective_trace: Vec<f64>,
}

impl SvrModel {
    pub fn raw_score(&self, row: &[f64]) -> Result<f64, FeatureError> {
        if row.len() != self.weights.len() {
            return Err(FeatureError::WidthMismatch {
                got: row.len(),
                expected: self.weights.len(),
            });
        }
        Ok(dot(&self.weights, row) + self.bias)
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct ClinicalPrediction {
    pub raw_score: f64,
    pub mrs: u8,
}

/// Raw score clamped into the label space with banker's rounding, so every
/// engine is scored on the same integer outputs.
pub fn predict_clinical_ml(
    model: &SvrModel,
    row: &[f64],
) -> Result<ClinicalPrediction, FeatureError> {
    let raw = model.raw_score(row)?;
    let mrs = raw.round_ties_even().clamp(0.0, 6.0) as u8;
    Ok(ClinicalPrediction {
        raw_score: raw,
        mrs,
    })
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn objective(w: &[f64], b: f64, rows: &[Vec<f64>], y: &[f64], hp: SvrHyperparams) -> f64 {
    let reg = 0.5 * dot(w, w);
    let loss: f64 = rows
        .iter()
        .zip(y)
        .map(|(x, yi)| ((yi - (dot(w, x) + b)).abs() - hp.epsilon).max(0.0))
        .sum();
    reg + hp.c * loss
}

/// Minimizes (1/2)||w||^2 + C * sum(max(0, |y - (w.x + b)| - eps)).
pub fn train_svr(
    matrix: &FeatureMatrix,
    labels: &[f64],
    hyperparams: SvrHyperparams,
    config: SvrTrainConfig,
) -> Result<SvrModel, SvrError> {
    if matrix.rows.len() < 2 {
        return Err(FeatureError::EmptyMatrix.into());
    }
    if labels.len() != matrix.rows.len() {
        return Err(FeatureError::LabelMismatch {
            labels: labels.len(),
            rows: matrix.rows.len(),
        }
        .into());
    }
    if hyperparams.c <= 0.0
        || hyperparams.epsilon < 0.0
        || hyperparams.c.is_nan()
        || hyperparams.epsilon.is_nan()
    {
        return Err(SvrError::BadHyperparam(format!(
            "C = {}, epsilon = {}",
            hyperparams.c, hyperparams.epsilon
        )));
    }
    for (i, row) in matrix.rows.iter().enumerate() {
        if row.len() != matrix.width() {
            return Err(FeatureError::WidthMismatch {
                got: row.len(),
                expected: matrix.width(),
            }
            .into());
        }
        if let Some(j) = row.iter().position(|v| !v.is_finite()) {
            return Err(FeatureError::NonFinite { row: i, column: j }.into());
        }
    }

    let width = matrix.width();
    let n = matrix.rows.len();
    let mut w = vec![0.0; width];
    let mut b = 0.0;
    let mut obj = objective(&w, b, &matrix.rows, labels, hyperparams);
    let mut trace = vec![obj];
    let mut step = config.initial_step;
    let mut epochs = 0;

    for _ in 0..config.max_epochs {
        // Full-batch subgradient.
        let mut gw = w.clone();
        let mut gb = 0.0;
        for (x, yi) in matrix.rows.iter().zip(labels) {
            let r = yi - (dot(&w, x) + b);
            if r.abs() > hyperparams.epsilon {
                let s = r.signum();
                for (g, xj) in gw.iter_mut().zip(x) {
                    *g -= hyperparams.c * s * xj;
                }
                gb -= hyperparams.c * s;
            }
        }
        let gnorm = (dot(&gw, &gw) + gb * gb).sqrt();
        if gnorm == 0.0 {
            break;
        }

        // Backtracking: accept the first step that does not increase the
        // objective. A subgradient need not be a descent direction at a kink,
        // so bail out when no step helps.
        let mut accepted = false;
        let mut trial = step;
        for _ in 0..40 {
            let wt: Vec<f64> = w.iter().zip(&gw).map(|(wi, gi)| wi - trial * gi).collect();
            let bt = b - trial * gb;
            let new_obj = objective(&wt, bt, &matrix.rows, labels, hyperparams);
            if new_obj <= obj {
                let improved = obj - new_obj;
                w = wt;
                b = bt;
                obj = new_obj;
                accepted = true;
                // Grow the step cautiously so progress does not stall.
                step = (trial * 1.5).min(config.initial_step * 64.0);
                if improved < config.tolerance * n as f64 {
                    epochs += 1;
                    trace.push(obj);
                    return Ok(finish(w, b, hyperparams, epochs, obj, trace));
                }
                break;
            }
            trial *= 0.5;
        }
        epochs += 1;
        trace.push(obj);
        if !accepted {
            break;
        }
    }

    Ok(finish(w, b, hyperparams, epochs, obj, trace))
}

fn finish(
    weights: Vec<f64>,
    bias: f64,
    hyperparams: SvrHyperparams,
    iterations: usize,
    final_objective: f64,
    objective_trace: Vec<f64>,
) -> SvrModel {
    SvrModel {
        weights,
        bias,
        hyperparams,
        iterations,
        final_objective,
        objective_trace,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::{ColumnEncoding, ColumnSpec};

    fn matrix_1d(xs: &[f64]) -> FeatureMatrix {
        FeatureMatrix {
            rows: xs.iter().map(|x| vec![*x]).collect(),
            missing_mask: xs.iter().map(|_| vec![false]).collect(),
            column_spec: vec![ColumnSpec {
                name: "x".into(),
                encoding: ColumnEncoding::Numeric {
                    mean: 0.0,
                    std: 1.0,
                },
                imputation: 0.0,
            }],
        }
    }

    #[test]
    fn constant_labels_fit_inside_epsilon_tube() {
        let m = matrix_1d(&[0.0, 1.0, 2.0, 3.0]);
        let labels = vec![3.0; 4];
        let hp = SvrHyperparams {
            c: 1.0,
            epsilon: 0.5,
        };
        let model = train_svr(&m, &labels, hp, SvrTrainConfig::default()).unwrap();
        for x in [0.0, 1.0, 2.0, 3.0] {
            let p = model.raw_score(&[x]).unwrap();
            assert!((2.5..=3.5).contains(&p), "prediction {p} outside tube");
        }
        assert!(model.weights[0].abs() < 0.05, "w = {}", model.weights[0]);
    }

    #[test]
    fn noiseless_line_matches_least_squares() {
        let m = matrix_1d(&[0.0, 1.0, 2.0]);
        let labels = vec![0.0, 1.0, 2.0];
        let hp = SvrHyperparams {
            c: 100.0,
            epsilon: 0.0,
        };
        let model = train_svr(&m, &labels, hp, SvrTrainConfig::default()).unwrap();
        let p = model.raw_score(&[1.5]).unwrap();
        assert!((p - 1.5).abs() < 0.1, "prediction {p}");
    }

    #[test]
    fn deterministic_across_runs() {
        let m = matrix_1d(&[0.0, 0.5, 1.0, 1.5, 2.0]);
        let labels = vec![1.0, 1.2, 2.1, 2.9, 3.4];
        let hp = SvrHyperparams::default();
        let a = train_svr(&m, &labels, hp, SvrTrainConfig::default()).unwrap();
        let b = train_svr(&m, &labels, hp, SvrTrainConfig::default()).unwrap();
        assert_eq!(a.weights, b.weights);
        assert_eq!(a.bias, b.bias);
        assert_eq!(a.objective_trace, b.objective_trace);
    }

    #[test]
    fn objective_trace_never_increases() {
        let m = matrix_1d(&[0.0, 1.0, 2.0, 3.0, 4.0]);
        let labels = vec![0.3, 1.1, 1.8, 3.2, 3.9];
        let model = train_svr(
            &m,
            &labels,
            SvrHyperparams::default(),
            SvrTrainConfig::default(),
        )
        .unwrap();
        for pair in model.objective_trace.windows(2) {
            assert!(pair[1] <= pair[0]);
        }
    }

    #[test]
    fn rounding_and_clamping() {
        let model = SvrModel {
            weights: vec![1.0],
            bias: 0.0,
            hyperparams: SvrHyperparams::default(),
            iterations: 0,
            final_objective: 0.0,
            objective_trace: vec![],
        };
        assert_eq!(predict_clinical_ml(&model, &[2.5]).unwrap().mrs, 2);
        assert_eq!(predict_clinical_ml(&model, &[3.5]).unwrap().mrs, 4);
        assert_eq!(predict_clinical_ml(&model, &[-0.7]).unwrap().mrs, 0);
        assert_eq!(predict_clinical_ml(&model, &[6.9]).unwrap().mrs, 6);
    }

    #[test]
    fn non_finite_rejected() {
        let m = matrix_1d(&[0.0, f64::NAN]);
        let err = train_svr(
            &m,
            &[0.0, 1.0],
            SvrHyperparams::default(),
            SvrTrainConfig::default(),
        )
        .unwrap_err();
        assert!(matches!(
            err,
            SvrError::Feature(FeatureError::NonFinite { row: 1, column: 0 })
        ));
    }
}
