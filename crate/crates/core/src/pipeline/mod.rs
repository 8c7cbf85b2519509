//! The two-step prediction engine and its baselines: prompt rendering, the
//! reasoning and extraction calls, output parsing with retry, and cohort runs
//! with persisted artifacts.

mod parse;
mod runner;
mod template;

pub use parse::{parse_mrs, ParseError, ParsedMrs};
pub use runner::{
    load_manifest, load_predictions, run_cohort, EngineSpec, PredictionLine, RunManifest,
    RunOptions, StatusCounts,
};
pub use template::{
    bind_one, PromptTemplate, RoleLayout, TemplateError, PLACEHOLDER_DISCHARGE_SUMMARY,
    PLACEHOLDER_REASONING_TEXT,
};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::backends::{Backend, SamplingParams, DEFAULT_EXTRACTION_MAX_TOKENS};
use crate::corpus::PatientRecord;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("record {id}: note_text is empty")]
    EmptyNote { id: String },
    #[error(transparent)]
    Template(#[from] TemplateError),
    #[error("run directory {path}: {message}")]
    RunDir { path: String, message: String },
    #[error("run directory is locked by {owner} (remove {path} if that run is dead)")]
    Locked { owner: String, path: String },
    #[error("engine {engine} requires a backend")]
    MissingBackend { engine: &'static str },
    #[error(transparent)]
    Feature(#[from] crate::features::FeatureError),
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EngineKind {
    Cope,
    SingleStep,
    ClinicalMl,
}

impl EngineKind {
    pub fn as_str(self) -> &'static str {
        match self {
            EngineKind::Cope => "cope",
            EngineKind::SingleStep => "single_step",
            EngineKind::ClinicalMl => "clinical_ml",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PredictionStatus {
    Ok,
    ParseFailed,
    BackendFailed,
}

/// Step-1 output for one patient.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReasoningArtifact {
    pub patient_id: String,
    pub reasoning_text: String,
    pub backend_model: String,
    pub latency_ms: u64,
}

/// Per-patient pipeline artifact. `predicted_mrs` is present exactly when
/// `status` is `Ok`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionRecord {
    pub patient_id: String,
    pub engine: EngineKind,
    pub status: PredictionStatus,
    pub predicted_mrs: Option<u8>,
    pub raw_extraction_output: String,
    pub reasoning: Option<ReasoningArtifact>,
    /// Prediction attempts, counting the extraction retries.
    pub attempts: u32,
    pub lenient_parse: bool,
    pub latency_ms: u64,
    pub error: Option<String>,
}

impl PredictionRecord {
    #[allow(clippy::too_many_arguments)]
    fn failed(
        patient_id: &str,
        engine: EngineKind,
        status: PredictionStatus,
        raw: String,
        reasoning: Option<ReasoningArtifact>,
        attempts: u32,
        latency_ms: u64,
        error: String,
    ) -> Self {
        PredictionRecord {
            patient_id: patient_id.to_string(),
            engine,
            status,
            predicted_mrs: None,
            raw_extraction_output: raw,
            reasoning,
            attempts: attempts.max(1),
            lenient_parse: false,
            latency_ms,
            error: Some(error),
        }
    }
}

/// Per-attempt sampling for the extraction step: temperature escalates by
/// +0.2 per retry (a temperature-0 retry of an identical request would just
/// replay the cached failure), token budget stays tiny.
fn extraction_params(backend: &Backend, attempt: u32) -> SamplingParams {
    SamplingParams {
        temperature: backend.config().temperature + 0.2 * (attempt - 1) as f64,
        max_tokens: DEFAULT_EXTRACTION_MAX_TOKENS.min(backend.config().max_tokens),
    }
}

/// Single-step retries escalate temperature the same way but keep the
/// configured token budget: free-form output is the point of the baseline.
fn single_step_params(backend: &Backend, attempt: u32) -> SamplingParams {
    SamplingParams {
        temperature: backend.config().temperature + 0.2 * (attempt - 1) as f64,
        max_tokens: backend.config().max_tokens,
    }
}

/// Two-step prediction: reasoning over the full note, then strict extraction
/// over the reasoning text (never the note). Parse failures re-issue the
/// extraction step up to the backend's retry budget.
pub fn predict_cope(
    record: &PatientRecord,
    reasoning_template: &PromptTemplate,
    extraction_template: &PromptTemplate,
    backend: &Backend,
) -> Result<PredictionRecord, PipelineError> {
    if record.note_text.trim().is_empty() {
        return Err(PipelineError::EmptyNote {
            id: record.id.clone(),
        });
    }
    let started = std::time::Instant::now();
    let engine = EngineKind::Cope;

    let reasoning_request =
        reasoning_template.render(&bind_one(PLACEHOLDER_DISCHARGE_SUMMARY, &record.note_text))?;
    let reasoning_response = match backend.complete(&reasoning_request) {
        Ok(r) => r,
        Err(e) => {
            return Ok(PredictionRecord::failed(
                &record.id,
                engine,
                PredictionStatus::BackendFailed,
                String::new(),
                None,
                1,
                started.elapsed().as_millis() as u64,
                format!("reasoning step: {e}"),
            ))
        }
    };
    let reasoning = ReasoningArtifact {
        patient_id: record.id.clone(),
        reasoning_text: reasoning_response.content.clone(),
        backend_model: backend.model_name().to_string(),
        latency_ms: reasoning_response.latency_ms,
    };

    let max_attempts = backend.config().max_retries + 1;
    let mut attempt = 0;
    let mut last: Option<(String, ParseError)> = None;
    while attempt < max_attempts {
        attempt += 1;
        let request = extraction_template
            .render(&bind_one(
                PLACEHOLDER_REASONING_TEXT,
                &reasoning.reasoning_text,
            ))?
            .with_params(extraction_params(backend, attempt));
        let response = match backend.complete(&request) {
            Ok(r) => r,
            Err(e) => {
                return Ok(PredictionRecord::failed(
                    &record.id,
                    engine,
                    PredictionStatus::BackendFailed,
                    last.map(|(raw, _)| raw).unwrap_or_default(),
                    Some(reasoning),
                    attempt,
                    started.elapsed().as_millis() as u64,
                    format!("extraction step: {e}"),
                ))
            }
        };
        match parse_mrs(&response.content) {
            Ok(parsed) => {
                return Ok(PredictionRecord {
                    patient_id: record.id.clone(),
                    engine,
                    status: PredictionStatus::Ok,
                    predicted_mrs: Some(parsed.score),
                    raw_extraction_output: response.content,
                    reasoning: Some(reasoning),
                    attempts: attempt,
                    lenient_parse: parsed.lenient,
                    latency_ms: started.elapsed().as_millis() as u64,
                    error: None,
                })
            }
            Err(e) => last = Some((response.content, e)),
        }
    }
    let (raw, parse_error) = last.expect("at least one extraction attempt");
    Ok(PredictionRecord::failed(
        &record.id,
        engine,
        PredictionStatus::ParseFailed,
        raw,
        Some(reasoning),
        attempt,
        started.elapsed().as_millis() as u64,
        format!("{} ({parse_error})", parse_error.class()),
    ))
}

/// Single-step baseline: one prompt straight from the note to a score, no
/// intermediate reasoning. Retry semantics match the extraction step.
pub fn predict_single_step(
    record: &PatientRecord,
    template: &PromptTemplate,
    backend: &Backend,
) -> Result<PredictionRecord, PipelineError> {
    if record.note_text.trim().is_empty() {
        return Err(PipelineError::EmptyNote {
            id: record.id.clone(),
        });
    }
    let started = std::time::Instant::now();
    let engine = EngineKind::SingleStep;
    let max_attempts = backend.config().max_retries + 1;
    let mut attempt = 0;
    let mut last: Option<(String, ParseError)> = None;
    while attempt < max_attempts {
        attempt += 1;
        let request = template
            .render(&bind_one(PLACEHOLDER_DISCHARGE_SUMMARY, &record.note_text))?
            .with_params(single_step_params(backend, attempt));
        let response = match backend.complete(&request) {
            Ok(r) => r,
            Err(e) => {
                return Ok(PredictionRecord::failed(
                    &record.id,
                    engine,
                    PredictionStatus::BackendFailed,
                    last.map(|(raw, _)| raw).unwrap_or_default(),
                    None,
                    attempt,
                    started.elapsed().as_millis() as u64,
                    e.to_string(),
                ))
            }
        };
        match parse_mrs(&response.content) {
            Ok(parsed) => {
                return Ok(PredictionRecord {
                    patient_id: record.id.clone(),
                    engine,
                    status: PredictionStatus::Ok,
                    predicted_mrs: Some(parsed.score),
                    raw_extraction_output: response.content,
                    reasoning: None,
                    attempts: attempt,
                    lenient_parse: parsed.lenient,
                    latency_ms: started.elapsed().as_millis() as u64,
                    error: None,
                })
            }
            Err(e) => last = Some((response.content, e)),
        }
    }
    let (raw, parse_error) = last.expect("at least one attempt");
    Ok(PredictionRecord::failed(
        &record.id,
        engine,
        PredictionStatus::ParseFailed,
        raw,
        None,
        attempt,
        started.elapsed().as_millis() as u64,
        format!("{} ({parse_error})", parse_error.class()),
    ))
}

/// Clinical ML baseline for one record: extract features, encode with the
/// trained encoder, score with the trained model. The raw score is persisted
/// in `raw_extraction_output`.
pub fn predict_clinical_ml_record(
    record: &PatientRecord,
    encoder: &crate::features::FeatureEncoder,
    model: &crate::features::SvrModel,
) -> Result<PredictionRecord, PipelineError> {
    let started = std::time::Instant::now();
    let features =
        crate::features::extract_features(&record.note_text, record.structured_overrides.as_ref());
    let (row, _) = encoder.encode_row(&features);
    let prediction = crate::features::predict_clinical_ml(model, &row)?;
    Ok(PredictionRecord {
        patient_id: record.id.clone(),
        engine: EngineKind::ClinicalMl,
        status: PredictionStatus::Ok,
        predicted_mrs: Some(prediction.mrs),
        raw_extraction_output: format!("{:.6}", prediction.raw_score),
        reasoning: None,
        attempts: 1,
        lenient_parse: false,
        latency_ms: started.elapsed().as_millis() as u64,
        error: None,
    })
}
