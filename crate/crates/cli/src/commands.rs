//! Subcommand implementations. Each one is a thin wrapper over a library
//! operation: load inputs, call, persist outputs, print a short summary.

use std::collections::BTreeSet;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;

use cope_core::backends::Cache;
use cope_core::corpus::{
    apply_exclusions, ingest_corpus, stratified_split, summarize_demographics, Cohort,
    CorpusFormat, PatientRecord, SplitAssignment,
};
use cope_core::features::{train_svr, FeatureEncoder, SvrHyperparams, SvrTrainConfig};
use cope_core::pipeline::{
    load_manifest, load_predictions, run_cohort, EngineKind, EngineSpec, PromptTemplate, RunOptions,
};
use cope_core::stats::{
    compare_outcomes, metric_report, paired_from_predictions, subgroup_report, ForestRow, Metric,
    MetricReport, PairedOutcomes, SubgroupAxis,
};
use cope_core::synth::{generate_corpus, SynthConfig};

use crate::config::FileConfig;
use crate::errors::AppError;
use crate::report;

fn write_text(path: &Path, text: &str) -> Result<(), AppError> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)?;
        }
    }
    std::fs::write(path, text)?;
    Ok(())
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), AppError> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write_text(path, &text)
}

fn read_json<T: DeserializeOwned>(path: &Path, what: &str) -> Result<T, AppError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| AppError::data(format!("cannot read {what} at {}: {e}", path.display())))?;
    serde_json::from_str(&text)
        .map_err(|e| AppError::data(format!("{what} at {} is corrupt: {e}", path.display())))
}

fn load_cohort(path: &Path) -> Result<Cohort, AppError> {
    Ok(ingest_corpus(path, CorpusFormat::from_path(path))?)
}

/// `--cohort` flag with fallback to `paths.corpus` from the config file.
pub fn resolve_cohort(
    config: &FileConfig,
    flag: Option<&Path>,
) -> Result<std::path::PathBuf, AppError> {
    flag.map(Path::to_path_buf)
        .or_else(|| config.paths.corpus.clone())
        .ok_or_else(|| {
            AppError::config("no cohort given: pass --cohort or set paths.corpus in the config")
        })
}

pub fn ingest(input: &Path, format: Option<&str>, out: &Path) -> Result<(), AppError> {
    let format = match format {
        Some("jsonl") => CorpusFormat::Jsonl,
        Some("csv") => CorpusFormat::Csv,
        Some(other) => {
            return Err(AppError::config(format!(
                "--format must be jsonl or csv, got {other:?}"
            )))
        }
        None => CorpusFormat::from_path(input),
    };
    let cohort = ingest_corpus(input, format)?;
    write_text(out, &cohort.to_jsonl())?;
    println!(
        "{}",
        serde_json::json!({
            "records": cohort.len(),
            "content_hash": cohort.content_hash(),
            "source": cohort.provenance.source,
            "out": out.display().to_string(),
        })
    );
    Ok(())
}

pub fn exclude(cohort_path: &Path, out: &Path, report_path: Option<&Path>) -> Result<(), AppError> {
    let cohort = load_cohort(cohort_path)?;
    let (kept, report) = apply_exclusions(&cohort);
    write_text(out, &kept.to_jsonl())?;
    if let Some(report_path) = report_path {
        write_json(report_path, &report)?;
    }
    println!("{}", serde_json::to_string(&report)?);
    Ok(())
}

pub fn split(
    config: &FileConfig,
    cohort_path: &Path,
    fraction: Option<f64>,
    seed: Option<u64>,
    out: &Path,
    demographics_out: Option<&Path>,
) -> Result<(), AppError> {
    let cohort = load_cohort(cohort_path)?;
    let fraction = fraction.unwrap_or(config.split.fraction);
    let seed = seed.unwrap_or(config.split.seed);
    let assignment = stratified_split(&cohort, fraction, seed)?;
    write_json(out, &assignment)?;
    let demographics = summarize_demographics(&cohort, Some(&assignment));
    if let Some(path) = demographics_out {
        write_json(path, &demographics)?;
    }
    println!(
        "{}",
        serde_json::json!({
            "exploration": assignment.exploration_ids.len(),
            "test": assignment.test_ids.len(),
            "fraction": fraction,
            "seed": seed,
            "out": out.display().to_string(),
        })
    );
    Ok(())
}

#[allow(clippy::too_many_arguments)]
pub fn synth(
    n: usize,
    seed: u64,
    noise: u8,
    length_target: usize,
    out: &Path,
    profiles_out: &Path,
) -> Result<(), AppError> {
    let config = SynthConfig {
        n,
        seed,
        noise_level: noise,
        note_length_target: length_target,
        ..Default::default()
    };
    let (cohort, ledger) = generate_corpus(&config)?;
    write_text(out, &cohort.to_jsonl())?;
    let mut profile_lines = String::new();
    for entry in &ledger {
        profile_lines.push_str(&serde_json::to_string(entry)?);
        profile_lines.push('\n');
    }
    write_text(profiles_out, &profile_lines)?;
    println!(
        "{}",
        serde_json::json!({
            "records": cohort.len(),
            "seed": seed,
            "noise": noise,
            "content_hash": cohort.content_hash(),
            "out": out.display().to_string(),
            "profiles": profiles_out.display().to_string(),
        })
    );
    Ok(())
}

fn subset_records<'a>(
    cohort: &'a Cohort,
    assignment: Option<&SplitAssignment>,
    subset: &str,
) -> Result<Vec<&'a PatientRecord>, AppError> {
    match (subset, assignment) {
        ("all", _) => Ok(cohort.records.iter().collect()),
        ("exploration", Some(split)) | ("test", Some(split)) => {
            let arm = split.arm(subset).expect("matched above");
            let members: Vec<&PatientRecord> = cohort
                .records
                .iter()
                .filter(|r| arm.contains(&r.id))
                .collect();
            if members.len() != arm.len() {
                return Err(AppError::data(format!(
                    "split references {} ids missing from the cohort",
                    arm.len() - members.len()
                )));
            }
            Ok(members)
        }
        ("exploration", None) | ("test", None) => Err(AppError::config(format!(
            "--subset {subset} requires --split <split.json>"
        ))),
        (other, _) => Err(AppError::config(format!(
            "--subset must be exploration, test, or all, got {other:?}"
        ))),
    }
}

pub struct RunArgs<'a> {
    pub engine: &'a str,
    pub backend: &'a str,
    pub cohort_path: &'a Path,
    pub split_path: Option<&'a Path>,
    pub subset: &'a str,
    pub run_dir: &'a Path,
    pub reasoning_template: Option<&'a Path>,
    pub extraction_template: Option<&'a Path>,
    pub single_template: Option<&'a Path>,
    pub concurrency: Option<usize>,
    pub cache_dir: Option<&'a Path>,
    pub no_cache: bool,
}

pub fn run(config: &FileConfig, args: &RunArgs) -> Result<(), AppError> {
    let cohort = load_cohort(args.cohort_path)?;
    let assignment: Option<SplitAssignment> = match args.split_path {
        Some(path) => Some(read_json(path, "split assignment")?),
        None => None,
    };
    let records = subset_records(&cohort, assignment.as_ref(), args.subset)?;

    let template = |name: &str, path: Option<&Path>, default: fn() -> PromptTemplate| match path {
        Some(path) => {
            PromptTemplate::from_file(name, path).map_err(|e| AppError::config(e.to_string()))
        }
        None => Ok(default()),
    };

    let engine = match args.engine {
        "cope" => EngineSpec::Cope {
            reasoning: template(
                "reasoning",
                args.reasoning_template,
                PromptTemplate::reasoning_default,
            )?,
            extraction: template(
                "extraction",
                args.extraction_template,
                PromptTemplate::extraction_default,
            )?,
        },
        "single_step" => EngineSpec::SingleStep {
            template: template(
                "single_step",
                args.single_template,
                PromptTemplate::single_step_default,
            )?,
        },
        "clinical_ml" => build_clinical_ml(config, &cohort, assignment.as_ref(), args.run_dir)?,
        other => {
            return Err(AppError::config(format!(
                "--engine must be cope, single_step, or clinical_ml, got {other:?}"
            )))
        }
    };

    let backend = match engine.kind() {
        EngineKind::ClinicalMl => None,
        _ => {
            let cache = if args.no_cache {
                None
            } else {
                let dir = args
                    .cache_dir
                    .map(Path::to_path_buf)
                    .or_else(|| config.paths.cache_dir.clone());
                match dir {
                    Some(dir) => Some(Cache::open(&dir)?),
                    None => None,
                }
            };
            Some(config.build_backend(args.backend, cache)?)
        }
    };

    let options = RunOptions {
        concurrency: args.concurrency.unwrap_or(config.run.concurrency),
    };
    let manifest = run_cohort(&records, &engine, backend.as_ref(), args.run_dir, &options)?;
    println!("{}", serde_json::to_string(&manifest)?);

    if manifest.counts.backend_failed > 0 {
        return Err(AppError::backend(format!(
            "{} record(s) failed at the backend; the run directory is resumable, re-run to retry",
            manifest.counts.backend_failed
        )));
    }
    if manifest.counts.parse_failed > 0 {
        eprintln!(
            "note: {} record(s) ended parse_failed; they are recorded and excluded from metrics",
            manifest.counts.parse_failed
        );
    }
    Ok(())
}

/// Trains the SVR baseline on the exploration arm and persists the model
/// beside the run for audit.
fn build_clinical_ml(
    config: &FileConfig,
    cohort: &Cohort,
    assignment: Option<&SplitAssignment>,
    run_dir: &Path,
) -> Result<EngineSpec, AppError> {
    let split = assignment.ok_or_else(|| {
        AppError::config("clinical_ml requires --split: the model trains on the exploration arm")
    })?;
    let train_records: Vec<&PatientRecord> = cohort
        .records
        .iter()
        .filter(|r| split.exploration_ids.contains(&r.id))
        .collect();
    if train_records.len() < 2 {
        return Err(AppError::data(format!(
            "clinical_ml needs at least 2 exploration records, found {}",
            train_records.len()
        )));
    }
    let mut features = Vec::with_capacity(train_records.len());
    let mut labels = Vec::with_capacity(train_records.len());
    for record in &train_records {
        let label = record.mrs_90d.ok_or_else(|| {
            AppError::data(format!(
                "exploration record {} has no mrs_90d label",
                record.id
            ))
        })?;
        features.push(cope_core::features::extract_features(
            &record.note_text,
            record.structured_overrides.as_ref(),
        ));
        labels.push(label as f64);
    }
    let encoder = FeatureEncoder::fit(&features).map_err(|e| AppError::data(e.to_string()))?;
    let matrix = encoder.transform(&features);
    let model = train_svr(
        &matrix,
        &labels,
        SvrHyperparams {
            c: config.clinical_ml.c,
            epsilon: config.clinical_ml.epsilon,
        },
        SvrTrainConfig::default(),
    )
    .map_err(|e| AppError::data(e.to_string()))?;

    std::fs::create_dir_all(run_dir)?;
    write_json(&run_dir.join("svr_model.json"), &model)?;
    write_json(&run_dir.join("feature_encoder.json"), &encoder)?;
    Ok(EngineSpec::ClinicalMl { encoder, model })
}

/// Loads a run's predictions joined with cohort labels.
fn run_outcomes(
    run_dir: &Path,
    cohort: &Cohort,
) -> Result<(PairedOutcomes, cope_core::stats::ExcludedCounts, EngineKind), AppError> {
    let manifest = load_manifest(run_dir)?;
    let lines = load_predictions(run_dir)?;
    if lines.is_empty() {
        return Err(AppError::data(format!(
            "run {} has no predictions",
            run_dir.display()
        )));
    }
    let (outcomes, excluded) = paired_from_predictions(&lines, cohort)?;
    Ok((outcomes, excluded, manifest.engine))
}

pub fn eval(
    config: &FileConfig,
    run_dir: &Path,
    cohort_path: &Path,
    bootstrap_samples: Option<usize>,
    seed: Option<u64>,
    out: Option<&Path>,
) -> Result<(), AppError> {
    let cohort = load_cohort(cohort_path)?;
    let (outcomes, excluded, engine) = run_outcomes(run_dir, &cohort)?;
    let report = metric_report(
        &outcomes,
        excluded,
        Some(engine.as_str().to_string()),
        bootstrap_samples.unwrap_or(config.stats.bootstrap_samples),
        seed.unwrap_or(config.stats.seed),
    )?;
    let out = out
        .map(Path::to_path_buf)
        .unwrap_or_else(|| run_dir.join("metrics.json"));
    write_json(&out, &report)?;
    println!("{}", serde_json::to_string_pretty(&report)?);
    Ok(())
}

#[allow(clippy::too_many_arguments)]
pub fn compare(
    config: &FileConfig,
    run_a: &Path,
    run_b: &Path,
    cohort_path: &Path,
    family: Option<&str>,
    bootstrap_samples: Option<usize>,
    seed: Option<u64>,
    q: Option<f64>,
    out: Option<&Path>,
) -> Result<(), AppError> {
    let cohort = load_cohort(cohort_path)?;
    let (outcomes_a, _, engine_a) = run_outcomes(run_a, &cohort)?;
    let (outcomes_b, _, engine_b) = run_outcomes(run_b, &cohort)?;

    // Arms may fail on different records; compare on the intersection and
    // report what was dropped.
    let ids_a: BTreeSet<&str> = outcomes_a
        .patient_ids()
        .iter()
        .map(|s| s.as_str())
        .collect();
    let ids_b: BTreeSet<&str> = outcomes_b
        .patient_ids()
        .iter()
        .map(|s| s.as_str())
        .collect();
    let shared: BTreeSet<String> = ids_a.intersection(&ids_b).map(|s| s.to_string()).collect();
    if shared.len() < 2 {
        return Err(AppError::data(format!(
            "only {} record(s) scored in both runs; nothing to compare",
            shared.len()
        )));
    }
    let dropped_a = ids_a.len() - shared.len();
    let dropped_b = ids_b.len() - shared.len();
    let arm_a = outcomes_a
        .filter_ids(&|id| shared.contains(id))
        .expect("shared nonempty");
    let arm_b = outcomes_b
        .filter_ids(&|id| shared.contains(id))
        .expect("shared nonempty");

    let family = parse_family(family)?;
    let result = compare_outcomes(
        engine_a.as_str(),
        engine_b.as_str(),
        &arm_a,
        &arm_b,
        &family,
        bootstrap_samples.unwrap_or(config.stats.bootstrap_samples),
        seed.unwrap_or(config.stats.seed),
        q.unwrap_or(config.stats.fdr_q),
    )?;

    let payload = serde_json::json!({
        "comparison": result,
        "dropped_only_in_a": dropped_a,
        "dropped_only_in_b": dropped_b,
    });
    if let Some(out) = out {
        write_json(out, &payload)?;
    }
    println!("{}", serde_json::to_string_pretty(&payload)?);
    Ok(())
}

fn parse_family(family: Option<&str>) -> Result<Vec<Metric>, AppError> {
    match family {
        None => Ok(Metric::ALL.to_vec()),
        Some(spec) => {
            let mut metrics = Vec::new();
            let mut problems = Vec::new();
            for name in spec.split(',').map(str::trim).filter(|s| !s.is_empty()) {
                match Metric::from_name(name) {
                    Some(metric) => metrics.push(metric),
                    None => problems.push(format!(
                        "unknown metric {name:?} (expected mae, acc, within1_acc)"
                    )),
                }
            }
            if !problems.is_empty() {
                return Err(AppError::config("bad --family").with_details(problems));
            }
            if metrics.is_empty() {
                return Err(AppError::config("--family selected no metrics"));
            }
            Ok(metrics)
        }
    }
}

pub fn subgroup(
    config: &FileConfig,
    run_dir: &Path,
    cohort_path: &Path,
    axes: Option<&str>,
    bootstrap_samples: Option<usize>,
    seed: Option<u64>,
) -> Result<(), AppError> {
    let cohort = load_cohort(cohort_path)?;
    let (outcomes, _, _) = run_outcomes(run_dir, &cohort)?;
    let axis_names: Vec<String> = match axes {
        Some(spec) => spec
            .split(',')
            .map(|s| s.trim().to_string())
            .filter(|s| !s.is_empty())
            .collect(),
        None => config.subgroup.axes.clone(),
    };
    let mut parsed_axes = Vec::new();
    let mut problems = Vec::new();
    for name in &axis_names {
        match SubgroupAxis::from_name(name) {
            Ok(axis) => parsed_axes.push(axis),
            Err(e) => problems.push(e.to_string()),
        }
    }
    if !problems.is_empty() {
        return Err(AppError::config("bad --axes").with_details(problems));
    }

    let rows = subgroup_report(
        &outcomes,
        &cohort,
        &parsed_axes,
        bootstrap_samples.unwrap_or(config.stats.bootstrap_samples),
        seed.unwrap_or(config.stats.seed),
    )?;
    write_json(&run_dir.join("forest.json"), &rows)?;
    write_text(&run_dir.join("forest.csv"), &report::forest_csv(&rows))?;
    println!("{}", serde_json::to_string_pretty(&rows)?);
    Ok(())
}

pub fn render_report(run_dir: &Path, format: &str, out: Option<&Path>) -> Result<(), AppError> {
    let manifest = load_manifest(run_dir)?;
    let metrics: Option<MetricReport> = {
        let path = run_dir.join("metrics.json");
        if path.exists() {
            Some(read_json(&path, "metrics report")?)
        } else {
            None
        }
    };
    let forest: Option<Vec<ForestRow>> = {
        let path = run_dir.join("forest.json");
        if path.exists() {
            Some(read_json(&path, "forest table")?)
        } else {
            None
        }
    };

    let mut written = Vec::new();
    match format {
        "json" => {
            let path = out
                .map(Path::to_path_buf)
                .unwrap_or_else(|| run_dir.join("report.json"));
            write_json(
                &path,
                &serde_json::json!({
                    "manifest": manifest,
                    "metrics": metrics,
                    "forest": forest,
                }),
            )?;
            written.push(path);
        }
        "csv" => {
            let metrics = metrics.ok_or_else(|| {
                AppError::data("no metrics.json in the run directory; run `cope eval` first")
            })?;
            let path = out
                .map(Path::to_path_buf)
                .unwrap_or_else(|| run_dir.join("report_metrics.csv"));
            write_text(&path, &report::metrics_csv(&metrics))?;
            written.push(path);
            if let Some(forest) = forest {
                let path = run_dir.join("report_forest.csv");
                write_text(&path, &report::forest_csv(&forest))?;
                written.push(path);
            }
        }
        "svg" => {
            let forest = forest.ok_or_else(|| {
                AppError::data("no forest.json in the run directory; run `cope subgroup` first")
            })?;
            let path = out
                .map(Path::to_path_buf)
                .unwrap_or_else(|| run_dir.join("report.svg"));
            let title = format!(
                "{} subgroups (run {})",
                manifest.engine.as_str(),
                manifest.run_id
            );
            write_text(&path, &report::forest_svg(&forest, &title))?;
            written.push(path);
        }
        other => {
            return Err(AppError::config(format!(
                "--format must be csv, json, or svg, got {other:?}"
            )))
        }
    }
    println!(
        "{}",
        serde_json::json!({
            "written": written.iter().map(|p| p.display().to_string()).collect::<Vec<_>>(),
        })
    );
    Ok(())
}
