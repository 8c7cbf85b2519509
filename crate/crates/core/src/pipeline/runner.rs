//! Cohort runs: bounded-concurrency evaluation with per-record persistence,
//! crash-safe resume, and a manifest written last.
//!
//! Run directory layout:
//!   manifest.json              written last, atomically
//!   predictions.jsonl          one record per line, sorted by patient id
//!   reasoning/<patient_id>.txt step-1 text for two-step runs
//!
//! During a run new results are appended to predictions.jsonl as they land;
//! on completion the file is rewritten sorted. A crash therefore leaves a
//! resumable file: re-running skips records already persisted with status ok.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{
    predict_clinical_ml_record, predict_cope, predict_single_step, EngineKind, PipelineError,
    PredictionRecord, PredictionStatus, PromptTemplate,
};
use crate::backends::{Backend, BackendSnapshot};
use crate::corpus::PatientRecord;
use crate::features::{FeatureEncoder, SvrModel};

/// What to run over the cohort subset.
pub enum EngineSpec {
    Cope {
        reasoning: PromptTemplate,
        extraction: PromptTemplate,
    },
    SingleStep {
        template: PromptTemplate,
    },
    ClinicalMl {
        encoder: FeatureEncoder,
        model: SvrModel,
    },
}

impl EngineSpec {
    pub fn kind(&self) -> EngineKind {
        match self {
            EngineSpec::Cope { .. } => EngineKind::Cope,
            EngineSpec::SingleStep { .. } => EngineKind::SingleStep,
            EngineSpec::ClinicalMl { .. } => EngineKind::ClinicalMl,
        }
    }

    /// Hashes identifying the prompt templates (or trained model) in use.
    fn content_hashes(&self) -> BTreeMap<String, String> {
        let mut hashes = BTreeMap::new();
        match self {
            EngineSpec::Cope {
                reasoning,
                extraction,
            } => {
                hashes.insert("reasoning".into(), reasoning.content_hash());
                hashes.insert("extraction".into(), extraction.content_hash());
            }
            EngineSpec::SingleStep { template } => {
                hashes.insert("single_step".into(), template.content_hash());
            }
            EngineSpec::ClinicalMl { model, .. } => {
                let mut hasher = Sha256::new();
                hasher.update(serde_json::to_vec(model).expect("model serializes"));
                hashes.insert("svr_model".into(), crate::corpus::hex(&hasher.finalize()));
            }
        }
        hashes
    }
}

#[derive(Debug, Clone, Copy)]
pub struct RunOptions {
    /// Upper bound on concurrently processed patients.
    pub concurrency: usize,
}

impl Default for RunOptions {
    fn default() -> Self {
        RunOptions { concurrency: 4 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct StatusCounts {
    pub ok: usize,
    pub parse_failed: usize,
    pub backend_failed: usize,
}

impl StatusCounts {
    pub fn total(&self) -> usize {
        self.ok + self.parse_failed + self.backend_failed
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub run_id: String,
    pub engine: EngineKind,
    pub n_records: usize,
    pub counts: StatusCounts,
    pub lenient_parses: usize,
    pub backend: Option<BackendSnapshot>,
    pub content_hashes: BTreeMap<String, String>,
    pub cohort_subset_hash: String,
    pub started_unix: u64,
    pub finished_unix: u64,
}

/// Persisted form of a prediction; reasoning text lives in its own file and
/// is referenced by path.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionLine {
    pub patient_id: String,
    pub engine: EngineKind,
    pub status: PredictionStatus,
    pub predicted_mrs: Option<u8>,
    pub raw_extraction_output: String,
    pub reasoning_path: Option<String>,
    pub reasoning_model: Option<String>,
    pub reasoning_latency_ms: Option<u64>,
    pub attempts: u32,
    pub lenient_parse: bool,
    pub latency_ms: u64,
    pub error: Option<String>,
}

impl PredictionLine {
    fn from_record(record: &PredictionRecord) -> Self {
        PredictionLine {
            patient_id: record.patient_id.clone(),
            engine: record.engine,
            status: record.status,
            predicted_mrs: record.predicted_mrs,
            raw_extraction_output: record.raw_extraction_output.clone(),
            reasoning_path: record
                .reasoning
                .as_ref()
                .map(|r| format!("reasoning/{}.txt", r.patient_id)),
            reasoning_model: record.reasoning.as_ref().map(|r| r.backend_model.clone()),
            reasoning_latency_ms: record.reasoning.as_ref().map(|r| r.latency_ms),
            attempts: record.attempts,
            lenient_parse: record.lenient_parse,
            latency_ms: record.latency_ms,
            error: record.error.clone(),
        }
    }
}

/// Guard file against concurrent runs in one directory. Removed on drop;
/// a crash leaves it behind and the next run reports the stale owner.
struct RunLock {
    path: PathBuf,
}

impl RunLock {
    fn acquire(run_dir: &Path) -> Result<RunLock, PipelineError> {
        let path = run_dir.join(".lock");
        let owner = format!("pid {}", std::process::id());
        match std::fs::OpenOptions::new()
            .write(true)
            .create_new(true)
            .open(&path)
        {
            Ok(mut f) => {
                let _ = f.write_all(owner.as_bytes());
                Ok(RunLock { path })
            }
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => {
                let owner = std::fs::read_to_string(&path).unwrap_or_default();
                Err(PipelineError::Locked {
                    owner: if owner.is_empty() {
                        "unknown".into()
                    } else {
                        owner
                    },
                    path: path.display().to_string(),
                })
            }
            Err(e) => Err(e.into()),
        }
    }
}

impl Drop for RunLock {
    fn drop(&mut self) {
        let _ = std::fs::remove_file(&self.path);
    }
}

fn predictions_path(run_dir: &Path) -> PathBuf {
    run_dir.join("predictions.jsonl")
}

fn manifest_path(run_dir: &Path) -> PathBuf {
    run_dir.join("manifest.json")
}

/// Loads persisted prediction lines; later lines win on duplicate ids, which
/// makes interrupted append files safe to reread.
pub fn load_predictions(run_dir: &Path) -> Result<Vec<PredictionLine>, PipelineError> {
    let path = predictions_path(run_dir);
    let text = match std::fs::read_to_string(&path) {
        Ok(t) => t,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(Vec::new()),
        Err(e) => return Err(e.into()),
    };
    let mut by_id: BTreeMap<String, PredictionLine> = BTreeMap::new();
    for line in text.lines().filter(|l| !l.trim().is_empty()) {
        let parsed: PredictionLine =
            serde_json::from_str(line).map_err(|e| PipelineError::RunDir {
                path: path.display().to_string(),
                message: format!("corrupt prediction line: {e}"),
            })?;
        by_id.insert(parsed.patient_id.clone(), parsed);
    }
    Ok(by_id.into_values().collect())
}

pub fn load_manifest(run_dir: &Path) -> Result<RunManifest, PipelineError> {
    let path = manifest_path(run_dir);
    let text = std::fs::read_to_string(&path).map_err(|e| PipelineError::RunDir {
        path: path.display().to_string(),
        message: format!("no manifest (incomplete run?): {e}"),
    })?;
    serde_json::from_str(&text).map_err(|e| PipelineError::RunDir {
        path: path.display().to_string(),
        message: format!("corrupt manifest: {e}"),
    })
}

fn write_atomic(path: &Path, bytes: &[u8]) -> std::io::Result<()> {
    let tmp = path.with_extension("tmp");
    std::fs::write(&tmp, bytes)?;
    std::fs::rename(&tmp, path)
}

fn subset_hash(records: &[&PatientRecord]) -> String {
    let mut hasher = Sha256::new();
    for r in records {
        hasher.update(r.id.as_bytes());
        hasher.update(b"\n");
        hasher.update(r.note_text.as_bytes());
        hasher.update(b"\0");
    }
    crate::corpus::hex(&hasher.finalize())
}

fn derive_run_id(
    engine: &EngineSpec,
    backend: Option<&Backend>,
    cohort_subset_hash: &str,
) -> String {
    let mut hasher = Sha256::new();
    hasher.update(engine.kind().as_str().as_bytes());
    for (name, hash) in engine.content_hashes() {
        hasher.update(name.as_bytes());
        hasher.update(hash.as_bytes());
    }
    if let Some(backend) = backend {
        let snapshot = BackendSnapshot::from(backend.config());
        hasher.update(serde_json::to_vec(&snapshot).expect("snapshot serializes"));
    }
    hasher.update(cohort_subset_hash.as_bytes());
    crate::corpus::hex(&hasher.finalize())[..12].to_string()
}

/// Evaluates every record with bounded concurrency and persists all
/// artifacts. Records already persisted with status ok are skipped; failed
/// ones are retried. The manifest is written last, atomically, so its
/// presence marks a completed run.
pub fn run_cohort(
    records: &[&PatientRecord],
    engine: &EngineSpec,
    backend: Option<&Backend>,
    run_dir: &Path,
    options: &RunOptions,
) -> Result<RunManifest, PipelineError> {
    match engine {
        EngineSpec::Cope { .. } | EngineSpec::SingleStep { .. } if backend.is_none() => {
            return Err(PipelineError::MissingBackend {
                engine: engine.kind().as_str(),
            })
        }
        _ => {}
    }
    std::fs::create_dir_all(run_dir)?;
    std::fs::create_dir_all(run_dir.join("reasoning"))?;
    let _lock = RunLock::acquire(run_dir)?;
    let started_unix = crate::corpus::now_unix();

    // Resume state: keep ok lines for records in this subset. Lines from a
    // different engine never carry over; a run directory is engine-scoped.
    let mut kept: BTreeMap<String, PredictionLine> = BTreeMap::new();
    for line in load_predictions(run_dir)? {
        if line.engine == engine.kind()
            && line.status == PredictionStatus::Ok
            && records.iter().any(|r| r.id == line.patient_id)
        {
            kept.insert(line.patient_id.clone(), line);
        }
    }
    let mut queue: Vec<&PatientRecord> = records
        .iter()
        .copied()
        .filter(|r| !kept.contains_key(&r.id))
        .collect();
    queue.sort_by(|a, b| a.id.cmp(&b.id));

    let appender = Mutex::new(
        std::fs::OpenOptions::new()
            .create(true)
            .append(true)
            .open(predictions_path(run_dir))?,
    );
    let results: Mutex<Vec<PredictionLine>> = Mutex::new(Vec::new());
    let fatal: Mutex<Option<PipelineError>> = Mutex::new(None);
    let next: Mutex<usize> = Mutex::new(0);

    let worker_count = options.concurrency.clamp(1, queue.len().max(1));
    std::thread::scope(|scope| {
        for _ in 0..worker_count {
            scope.spawn(|| loop {
                if fatal.lock().unwrap().is_some() {
                    return;
                }
                let index = {
                    let mut next = next.lock().unwrap();
                    let i = *next;
                    *next += 1;
                    i
                };
                let Some(record) = queue.get(index) else {
                    return;
                };
                let outcome = match engine {
                    EngineSpec::Cope {
                        reasoning,
                        extraction,
                    } => predict_cope(
                        record,
                        reasoning,
                        extraction,
                        backend.expect("validated above"),
                    ),
                    EngineSpec::SingleStep { template } => {
                        predict_single_step(record, template, backend.expect("validated above"))
                    }
                    EngineSpec::ClinicalMl { encoder, model } => {
                        predict_clinical_ml_record(record, encoder, model)
                    }
                };
                match outcome {
                    Ok(prediction) => {
                        if let Some(reasoning) = &prediction.reasoning {
                            let path =
                                run_dir.join(format!("reasoning/{}.txt", reasoning.patient_id));
                            if let Err(e) = std::fs::write(&path, &reasoning.reasoning_text) {
                                *fatal.lock().unwrap() = Some(e.into());
                                return;
                            }
                        }
                        let line = PredictionLine::from_record(&prediction);
                        let serialized =
                            serde_json::to_string(&line).expect("prediction serializes");
                        {
                            let mut file = appender.lock().unwrap();
                            if let Err(e) = writeln!(file, "{serialized}") {
                                *fatal.lock().unwrap() = Some(e.into());
                                return;
                            }
                        }
                        results.lock().unwrap().push(line);
                    }
                    Err(e) => {
                        *fatal.lock().unwrap() = Some(e);
                        return;
                    }
                }
            });
        }
    });

    if let Some(e) = fatal.into_inner().unwrap() {
        return Err(e);
    }

    for line in results.into_inner().unwrap() {
        kept.insert(line.patient_id.clone(), line);
    }

    // Final sorted rewrite: deterministic ordering by patient id.
    let mut body = String::new();
    let mut counts = StatusCounts::default();
    let mut lenient_parses = 0;
    for line in kept.values() {
        match line.status {
            PredictionStatus::Ok => counts.ok += 1,
            PredictionStatus::ParseFailed => counts.parse_failed += 1,
            PredictionStatus::BackendFailed => counts.backend_failed += 1,
        }
        lenient_parses += usize::from(line.lenient_parse);
        body.push_str(&serde_json::to_string(line).expect("prediction serializes"));
        body.push('\n');
    }
    write_atomic(&predictions_path(run_dir), body.as_bytes())?;

    let subset: Vec<&PatientRecord> = records.to_vec();
    let cohort_subset_hash = subset_hash(&subset);
    let manifest = RunManifest {
        run_id: derive_run_id(engine, backend, &cohort_subset_hash),
        engine: engine.kind(),
        n_records: records.len(),
        counts,
        lenient_parses,
        backend: backend.map(|b| BackendSnapshot::from(b.config())),
        content_hashes: engine.content_hashes(),
        cohort_subset_hash,
        started_unix,
        finished_unix: crate::corpus::now_unix(),
    };
    write_atomic(
        &manifest_path(run_dir),
        serde_json::to_string_pretty(&manifest)
            .expect("manifest serializes")
            .as_bytes(),
    )?;
    Ok(manifest)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backends::{BackendConfig, MockConfig};
    use crate::synth::{generate_corpus, SynthConfig};

    fn mock_backend() -> Backend {
        Backend::with_mock(
            BackendConfig::mock("mock-oracle"),
            None,
            MockConfig::default(),
        )
        .unwrap()
    }

    fn cope_spec() -> EngineSpec {
        EngineSpec::Cope {
            reasoning: PromptTemplate::reasoning_default(),
            extraction: PromptTemplate::extraction_default(),
        }
    }

    #[test]
    fn empty_subset_is_a_valid_run() {
        let dir = tempfile::tempdir().unwrap();
        let backend = mock_backend();
        let manifest = run_cohort(
            &[],
            &cope_spec(),
            Some(&backend),
            dir.path(),
            &RunOptions::default(),
        )
        .unwrap();
        assert_eq!(manifest.counts.total(), 0);
        assert_eq!(manifest.n_records, 0);
        assert!(dir.path().join("manifest.json").exists());
        assert!(dir.path().join("predictions.jsonl").exists());
    }

    #[test]
    fn run_produces_sorted_complete_artifacts() {
        let (cohort, _) = generate_corpus(&SynthConfig {
            n: 12,
            ..Default::default()
        })
        .unwrap();
        let refs: Vec<&PatientRecord> = cohort.records.iter().collect();
        let dir = tempfile::tempdir().unwrap();
        let backend = mock_backend();
        let manifest = run_cohort(
            &refs,
            &cope_spec(),
            Some(&backend),
            dir.path(),
            &RunOptions { concurrency: 3 },
        )
        .unwrap();
        assert_eq!(manifest.counts.ok, 12);
        assert_eq!(manifest.counts.total(), 12);
        let lines = load_predictions(dir.path()).unwrap();
        assert_eq!(lines.len(), 12);
        let ids: Vec<&str> = lines.iter().map(|l| l.patient_id.as_str()).collect();
        let mut sorted = ids.clone();
        sorted.sort_unstable();
        assert_eq!(ids, sorted);
        for line in &lines {
            let reasoning = dir.path().join(line.reasoning_path.as_deref().unwrap());
            assert!(reasoning.exists());
        }
    }

    #[test]
    fn lock_rejects_concurrent_invocation() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join(".lock"), "pid 12345").unwrap();
        let backend = mock_backend();
        let err = run_cohort(
            &[],
            &cope_spec(),
            Some(&backend),
            dir.path(),
            &RunOptions::default(),
        )
        .unwrap_err();
        assert!(matches!(err, PipelineError::Locked { .. }));
    }

    #[test]
    fn missing_backend_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let err =
            run_cohort(&[], &cope_spec(), None, dir.path(), &RunOptions::default()).unwrap_err();
        assert!(matches!(err, PipelineError::MissingBackend { .. }));
    }
}
