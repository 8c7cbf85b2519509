//! TOML run configuration. Every seed and threshold is explicit here or on
//! the command line; there is no hidden entropy anywhere in a run.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Duration;

use serde::Deserialize;

use cope_core::backends::{Backend, BackendConfig, BackendKind, Cache, MockConfig};

use crate::errors::AppError;

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    #[serde(default)]
    pub paths: PathsSection,
    #[serde(default)]
    pub split: SplitSection,
    #[serde(default)]
    pub stats: StatsSection,
    #[serde(default)]
    pub run: RunSection,
    #[serde(default)]
    pub subgroup: SubgroupSection,
    #[serde(default)]
    pub clinical_ml: ClinicalMlSection,
    #[serde(default)]
    pub backends: BTreeMap<String, BackendSection>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PathsSection {
    pub corpus: Option<PathBuf>,
    pub cache_dir: Option<PathBuf>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitSection {
    pub fraction: f64,
    pub seed: u64,
}

impl Default for SplitSection {
    fn default() -> Self {
        SplitSection {
            fraction: 0.2,
            seed: 17,
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StatsSection {
    pub bootstrap_samples: usize,
    pub seed: u64,
    pub fdr_q: f64,
}

impl Default for StatsSection {
    fn default() -> Self {
        StatsSection {
            bootstrap_samples: 10_000,
            seed: 99,
            fdr_q: 0.05,
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSection {
    pub concurrency: usize,
}

impl Default for RunSection {
    fn default() -> Self {
        RunSection { concurrency: 4 }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SubgroupSection {
    pub axes: Vec<String>,
}

impl Default for SubgroupSection {
    fn default() -> Self {
        SubgroupSection {
            axes: vec!["sex".into(), "evt".into(), "length".into(), "age".into()],
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClinicalMlSection {
    pub c: f64,
    pub epsilon: f64,
}

impl Default for ClinicalMlSection {
    fn default() -> Self {
        ClinicalMlSection {
            c: 1.0,
            epsilon: 0.5,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BackendSection {
    pub kind: String,
    pub base_url: Option<String>,
    pub model_name: Option<String>,
    pub temperature: Option<f64>,
    pub max_tokens: Option<u32>,
    pub request_timeout_secs: Option<u64>,
    pub max_retries: Option<u32>,
    pub auth_token_env: Option<String>,
    pub mock_noise: Option<u8>,
    pub mock_seed: Option<u64>,
}

impl FileConfig {
    /// Loads and validates a config file, reporting every problem at once.
    pub fn load(path: Option<&Path>) -> Result<FileConfig, AppError> {
        let Some(path) = path else {
            return Ok(FileConfig::default());
        };
        let text = std::fs::read_to_string(path)
            .map_err(|e| AppError::config(format!("cannot read config {}: {e}", path.display())))?;
        let config: FileConfig = toml::from_str(&text)
            .map_err(|e| AppError::config(format!("config {}: {e}", path.display())))?;
        config.validate()?;
        Ok(config)
    }

    fn validate(&self) -> Result<(), AppError> {
        let mut problems = Vec::new();
        if !(self.split.fraction > 0.0 && self.split.fraction < 1.0) {
            problems.push(format!(
                "split.fraction must be in (0, 1), got {}",
                self.split.fraction
            ));
        }
        if self.stats.bootstrap_samples < 100 {
            problems.push(format!(
                "stats.bootstrap_samples must be >= 100, got {}",
                self.stats.bootstrap_samples
            ));
        }
        if !(self.stats.fdr_q > 0.0 && self.stats.fdr_q < 1.0) {
            problems.push(format!(
                "stats.fdr_q must be in (0, 1), got {}",
                self.stats.fdr_q
            ));
        }
        if self.run.concurrency == 0 {
            problems.push("run.concurrency must be >= 1".into());
        }
        if self.clinical_ml.c <= 0.0 || self.clinical_ml.c.is_nan() {
            problems.push(format!(
                "clinical_ml.c must be > 0, got {}",
                self.clinical_ml.c
            ));
        }
        if self.clinical_ml.epsilon < 0.0 {
            problems.push(format!(
                "clinical_ml.epsilon must be >= 0, got {}",
                self.clinical_ml.epsilon
            ));
        }
        for name in self.subgroup.axes.iter() {
            if cope_core::stats::SubgroupAxis::from_name(name).is_err() {
                problems.push(format!(
                    "subgroup.axes: {name:?} is not one of sex, evt, length, age"
                ));
            }
        }
        for (name, section) in &self.backends {
            match section.kind.as_str() {
                "mock" => {}
                "http_chat" => {
                    if section.base_url.is_none() {
                        problems.push(format!("backends.{name}: http_chat requires base_url"));
                    }
                    if section.model_name.is_none() {
                        problems.push(format!("backends.{name}: http_chat requires model_name"));
                    }
                }
                other => problems.push(format!(
                    "backends.{name}: kind must be \"http_chat\" or \"mock\", got {other:?}"
                )),
            }
            if let Some(t) = section.temperature {
                if !(t.is_finite() && t >= 0.0) {
                    problems.push(format!(
                        "backends.{name}: temperature must be finite and >= 0"
                    ));
                }
            }
            if section.max_tokens == Some(0) {
                problems.push(format!("backends.{name}: max_tokens must be >= 1"));
            }
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(
                AppError::config(format!("{} config problem(s) found", problems.len()))
                    .with_details(problems),
            )
        }
    }

    /// Builds the named backend. "mock" works without any config file.
    pub fn build_backend(&self, name: &str, cache: Option<Cache>) -> Result<Backend, AppError> {
        let section = match self.backends.get(name) {
            Some(section) => section.clone(),
            None if name == "mock" => BackendSection {
                kind: "mock".into(),
                base_url: None,
                model_name: None,
                temperature: None,
                max_tokens: None,
                request_timeout_secs: None,
                max_retries: None,
                auth_token_env: None,
                mock_noise: None,
                mock_seed: None,
            },
            None => {
                let known: Vec<&str> = self.backends.keys().map(|s| s.as_str()).collect();
                return Err(AppError::config(format!(
                    "backend {name:?} is not defined (known: mock{}{})",
                    if known.is_empty() { "" } else { ", " },
                    known.join(", ")
                )));
            }
        };

        let kind = match section.kind.as_str() {
            "mock" => BackendKind::Mock,
            "http_chat" => BackendKind::HttpChat,
            other => {
                return Err(AppError::config(format!(
                    "backend {name:?}: unknown kind {other:?}"
                )))
            }
        };
        let config = BackendConfig {
            kind,
            base_url: section.base_url.clone(),
            model_name: section
                .model_name
                .clone()
                .unwrap_or_else(|| "mock-oracle".into()),
            temperature: section.temperature.unwrap_or(0.0),
            max_tokens: section.max_tokens.unwrap_or(1024),
            request_timeout: Duration::from_secs(section.request_timeout_secs.unwrap_or(120)),
            max_retries: section.max_retries.unwrap_or(2),
            auth_token_env: match kind {
                BackendKind::HttpChat => Some(
                    section
                        .auth_token_env
                        .clone()
                        .unwrap_or_else(|| "COPE_API_TOKEN".into()),
                ),
                BackendKind::Mock => None,
            },
        };
        let backend = match kind {
            BackendKind::Mock => Backend::with_mock(
                config,
                cache,
                MockConfig {
                    noise_level: section.mock_noise.unwrap_or(0),
                    seed: section.mock_seed.unwrap_or(0),
                },
            )?,
            BackendKind::HttpChat => Backend::new(config, cache)?,
        };
        Ok(backend)
    }
}
