//! Deterministic in-process stand-in for the reasoning and extraction models.
//!
//! The mock closes the loop with the synth generator: it re-extracts the
//! variables embedded in a synthetic note, applies the same outcome oracle,
//! and answers accordingly. Three prompt shapes are recognized:
//!
//! - reasoning prompt (contains a synthetic note): emits a narrative that
//!   restates the note's variables and states the oracle score
//! - single-step prompt (synthetic note plus a strict-integer instruction):
//!   emits the bare score
//! - extraction prompt (contains mock reasoning): returns the integer the
//!   reasoning stated
//!
//! Optional noise perturbs the stated score reproducibly per (note, seed).

use thiserror::Error;

use super::{BackendConfig, ChatRequest, Transport, TransportError};
use crate::features::extract_features;
use crate::rng::splitmix64;
use crate::synth::oracle_mrs_parts;

/// Sentence stem the mock's reasoning always ends with; the extraction path
/// keys on it.
pub const REASONING_SCORE_MARKER: &str = "most likely mRS score at 90 days is";

const NOTE_MARKER: &str = "DISCHARGE SUMMARY";
const STRICT_OUTPUT_MARKER: &str = "strictly a single integer";

#[derive(Debug, Error)]
pub enum MockError {
    #[error("prompt is recognizably neither a reasoning nor an extraction prompt: {0}")]
    UnrecognizedPrompt(String),
    #[error("synthetic note is missing variables the oracle needs: {0}")]
    MissingVariables(String),
}

#[derive(Debug, Clone, Copy, Default)]
pub struct MockConfig {
    /// 0 = exact oracle answers; k perturbs the stated score by up to +/-k.
    pub noise_level: u8,
    pub seed: u64,
}

/// Answers a prompt the way the deterministic mock model would.
pub fn mock_complete(content: &str, config: &MockConfig) -> Result<String, MockError> {
    if let Some(idx) = content.rfind(REASONING_SCORE_MARKER) {
        // Extraction over mock reasoning: return the stated integer.
        let tail = &content[idx + REASONING_SCORE_MARKER.len()..];
        let score = tail
            .chars()
            .skip_while(|c| !c.is_ascii_digit())
            .take_while(|c| c.is_ascii_digit())
            .collect::<String>();
        if score.is_empty() {
            return Err(MockError::UnrecognizedPrompt(
                "score marker present but no integer follows".into(),
            ));
        }
        return Ok(score);
    }

    if !content.contains(NOTE_MARKER) {
        return Err(MockError::UnrecognizedPrompt(format!(
            "no synthetic note and no reasoning text; content starts: {}",
            content.chars().take(80).collect::<String>()
        )));
    }

    let features = extract_features(content, None);
    let nihss_discharge = features
        .nihss_discharge
        .ok_or_else(|| MockError::MissingVariables("no discharge NIHSS mention found".into()))?;
    let age = features
        .age_years
        .ok_or_else(|| MockError::MissingVariables("no age mention found".into()))?;
    let oracle = oracle_mrs_parts(nihss_discharge, age);
    let score = perturb(oracle, config, content);

    if content.contains(STRICT_OUTPUT_MARKER) {
        // Single-step prompt: the instruction demands a bare integer.
        return Ok(score.to_string());
    }

    let treatment = match (features.evt, features.iv_tpa) {
        (Some(true), Some(true)) => "thrombolysis followed by endovascular treatment",
        (Some(true), _) => "endovascular treatment",
        (_, Some(true)) => "intravenous thrombolysis",
        _ => "medical management",
    };
    let trajectory = match score {
        0 | 1 => "a largely independent recovery",
        2 | 3 => "a partial recovery with residual deficits",
        4 | 5 => "substantial long-term disability",
        _ => "a poor outcome",
    };
    Ok(format!(
        "Clinical assessment: the patient is {age} years old and received {treatment}. \
         The examination trajectory is summarized by a baseline score of {baseline}, \
         {h24} at twenty-four hours, and {discharge} at discharge. Residual deficits \
         at discharge drive the expected ninety-day function, pointing toward \
         {trajectory}. Weighing severity, age, and treatment response, the \
         {REASONING_SCORE_MARKER} {score}.",
        baseline = features
            .nihss_baseline
            .map(|v| v.to_string())
            .unwrap_or_else(|| "unknown".into()),
        h24 = features
            .nihss_24h
            .map(|v| v.to_string())
            .unwrap_or_else(|| "unknown".into()),
        discharge = nihss_discharge,
    ))
}

fn perturb(oracle: u8, config: &MockConfig, content: &str) -> u8 {
    if config.noise_level == 0 {
        return oracle;
    }
    // Content-keyed so the same note always perturbs the same way.
    let mut h = 0xcbf2_9ce4_8422_2325u64;
    for b in content.as_bytes() {
        h = (h ^ *b as u64).wrapping_mul(0x100_0000_01b3);
    }
    let draw = splitmix64(h ^ splitmix64(config.seed));
    let span = 2 * config.noise_level as i64 + 1;
    let delta = (draw % span as u64) as i64 - config.noise_level as i64;
    (oracle as i64 + delta).clamp(0, 6) as u8
}

/// `Transport` adapter over `mock_complete`.
pub struct MockTransport {
    config: MockConfig,
}

impl MockTransport {
    pub fn new(config: MockConfig) -> Self {
        MockTransport { config }
    }
}

impl Transport for MockTransport {
    fn send(&self, _: &BackendConfig, request: &ChatRequest) -> Result<String, TransportError> {
        let content = request
            .last_user_content()
            .ok_or_else(|| TransportError::Mock("request has no user message".into()))?;
        mock_complete(content, &self.config).map_err(|e| TransportError::Mock(e.to_string()))
    }
}
