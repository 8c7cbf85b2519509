//! End-to-end CLI workflow against the mock backend: synth -> ingest ->
//! exclude -> split -> run -> eval -> compare -> subgroup -> report, plus
//! exit-code behavior for the error taxonomy.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn cope() -> Command {
    Command::new(env!("CARGO_BIN_EXE_cope"))
}

fn run_ok(command: &mut Command) -> Output {
    let output = command.output().expect("spawn cope");
    assert!(
        output.status.success(),
        "command failed\nstdout: {}\nstderr: {}",
        String::from_utf8_lossy(&output.stdout),
        String::from_utf8_lossy(&output.stderr),
    );
    output
}

fn stdout_json(output: &Output) -> serde_json::Value {
    serde_json::from_slice(&output.stdout).expect("stdout is JSON")
}

fn stderr_error(output: &Output) -> serde_json::Value {
    let text = String::from_utf8_lossy(&output.stderr);
    let line = text.lines().last().unwrap_or_default();
    serde_json::from_str(line).unwrap_or_else(|_| panic!("stderr not JSON: {text}"))
}

struct Workspace {
    _dir: tempfile::TempDir,
    root: PathBuf,
}

impl Workspace {
    fn new() -> Self {
        let dir = tempfile::tempdir().unwrap();
        let root = dir.path().to_path_buf();
        Workspace { _dir: dir, root }
    }

    fn path(&self, name: &str) -> PathBuf {
        self.root.join(name)
    }

    /// synth + exclude + split, returning (cohort, split) paths.
    fn prepared_cohort(&self, n: usize) -> (PathBuf, PathBuf) {
        let raw = self.path("raw.jsonl");
        let profiles = self.path("profiles.jsonl");
        run_ok(
            cope()
                .args([
                    "synth",
                    "--n",
                    &n.to_string(),
                    "--seed",
                    "11",
                    "--noise",
                    "0",
                ])
                .arg("--length-target")
                .arg("350")
                .arg("--out")
                .arg(&raw)
                .arg("--profiles")
                .arg(&profiles),
        );

        let cohort = self.path("cohort.jsonl");
        run_ok(
            cope()
                .args(["ingest", "--format", "jsonl"])
                .arg("--input")
                .arg(&raw)
                .arg("--out")
                .arg(&cohort),
        );

        let kept = self.path("kept.jsonl");
        let report = self.path("exclusions.json");
        run_ok(
            cope()
                .arg("exclude")
                .arg("--cohort")
                .arg(&cohort)
                .arg("--out")
                .arg(&kept)
                .arg("--report")
                .arg(&report),
        );

        let split = self.path("split.json");
        let demographics = self.path("demographics.json");
        run_ok(
            cope()
                .args(["split", "--fraction", "0.2", "--seed", "5"])
                .arg("--cohort")
                .arg(&kept)
                .arg("--out")
                .arg(&split)
                .arg("--demographics")
                .arg(&demographics),
        );
        (kept, split)
    }

    fn run_engine(&self, engine: &str, cohort: &Path, split: &Path, dir_name: &str) -> PathBuf {
        let run_dir = self.path(dir_name);
        run_ok(
            cope()
                .args([
                    "run",
                    "--engine",
                    engine,
                    "--backend",
                    "mock",
                    "--subset",
                    "test",
                ])
                .arg("--cohort")
                .arg(cohort)
                .arg("--split")
                .arg(split)
                .arg("--run-dir")
                .arg(&run_dir)
                .arg("--cache-dir")
                .arg(self.path("cache")),
        );
        run_dir
    }
}

#[test]
fn full_workflow_oracle_closure() {
    let ws = Workspace::new();
    let (cohort, split) = ws.prepared_cohort(120);

    // Demographics cover both arms.
    let demographics: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(ws.path("demographics.json")).unwrap())
            .unwrap();
    let arms = demographics["arms"].as_array().unwrap();
    assert_eq!(arms.len(), 2);
    assert_eq!(arms[0]["arm"], "exploration");

    let run_dir = ws.run_engine("cope", &cohort, &split, "run-cope");
    assert!(run_dir.join("manifest.json").exists());
    assert!(run_dir.join("predictions.jsonl").exists());

    // Oracle closure: MAE 0, ACC 1 on the test arm.
    let eval_out = run_ok(
        cope()
            .args(["eval", "--bootstrap", "500", "--seed", "3"])
            .arg("--run")
            .arg(&run_dir)
            .arg("--cohort")
            .arg(&cohort),
    );
    let metrics = stdout_json(&eval_out);
    assert_eq!(metrics["mae"]["point"], 0.0);
    assert_eq!(metrics["acc"]["point"], 1.0);
    assert_eq!(metrics["excluded"]["parse_failed"], 0);
    assert!(run_dir.join("metrics.json").exists());

    // Compare a run against an identical second run: p = 1, no rejections.
    let run_dir_b = ws.run_engine("cope", &cohort, &split, "run-cope-b");
    let compare_out = run_ok(
        cope()
            .args(["compare", "--bootstrap", "500", "--seed", "4"])
            .arg("--a")
            .arg(&run_dir)
            .arg("--b")
            .arg(&run_dir_b)
            .arg("--cohort")
            .arg(&cohort),
    );
    let comparison = stdout_json(&compare_out);
    for row in comparison["comparison"]["results"].as_array().unwrap() {
        assert_eq!(row["p_value"], 1.0);
        assert_eq!(row["bh_reject"], false);
    }

    // Subgroups: 2 + 2 + 4 + 4 populated bands, no unknowns on synth data.
    run_ok(
        cope()
            .args([
                "subgroup",
                "--axes",
                "sex,evt,length,age",
                "--bootstrap",
                "500",
                "--seed",
                "6",
            ])
            .arg("--run")
            .arg(&run_dir)
            .arg("--cohort")
            .arg(&cohort),
    );
    let forest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(run_dir.join("forest.json")).unwrap())
            .unwrap();
    let rows = forest.as_array().unwrap();
    assert_eq!(rows.len(), 12);
    assert!(rows.iter().all(|r| r["band"] != "unknown"));
    assert!(rows.iter().all(|r| r["n"].as_u64().unwrap() > 0));
    let forest_csv = std::fs::read_to_string(run_dir.join("forest.csv")).unwrap();
    assert!(forest_csv.starts_with("axis,band,n,mae,ci_lo,ci_hi"));
    assert_eq!(forest_csv.lines().count(), 13);

    // Reports render from persisted artifacts only.
    run_ok(
        cope()
            .args(["report", "--format", "json"])
            .arg("--run")
            .arg(&run_dir),
    );
    run_ok(
        cope()
            .args(["report", "--format", "csv"])
            .arg("--run")
            .arg(&run_dir),
    );
    run_ok(
        cope()
            .args(["report", "--format", "svg"])
            .arg("--run")
            .arg(&run_dir),
    );
    let svg = std::fs::read_to_string(run_dir.join("report.svg")).unwrap();
    assert!(svg.starts_with("<svg"));
    assert!(run_dir.join("report.json").exists());
    assert!(run_dir.join("report_metrics.csv").exists());
    assert!(run_dir.join("report_forest.csv").exists());
}

#[test]
fn single_step_and_clinical_ml_runs() {
    let ws = Workspace::new();
    let (cohort, split) = ws.prepared_cohort(80);

    let single = ws.run_engine("single_step", &cohort, &split, "run-single");
    let eval_out = run_ok(
        cope()
            .args(["eval", "--bootstrap", "500", "--seed", "3"])
            .arg("--run")
            .arg(&single)
            .arg("--cohort")
            .arg(&cohort),
    );
    let metrics = stdout_json(&eval_out);
    // Mock answers single-step prompts with the oracle score directly.
    assert_eq!(metrics["mae"]["point"], 0.0);

    let clinical = ws.run_engine("clinical_ml", &cohort, &split, "run-clinical");
    assert!(clinical.join("svr_model.json").exists());
    assert!(clinical.join("feature_encoder.json").exists());
    let eval_out = run_ok(
        cope()
            .args(["eval", "--bootstrap", "500", "--seed", "3"])
            .arg("--run")
            .arg(&clinical)
            .arg("--cohort")
            .arg(&cohort),
    );
    let metrics = stdout_json(&eval_out);
    let mae = metrics["mae"]["point"].as_f64().unwrap();
    assert!(mae.is_finite() && mae < 6.0, "clinical_ml MAE {mae}");
    // Raw SVR scores are persisted alongside the rounded predictions.
    let lines = std::fs::read_to_string(clinical.join("predictions.jsonl")).unwrap();
    let first: serde_json::Value = serde_json::from_str(lines.lines().next().unwrap()).unwrap();
    assert!(first["raw_extraction_output"]
        .as_str()
        .unwrap()
        .parse::<f64>()
        .is_ok());
}

#[test]
fn exit_codes_and_error_json() {
    let ws = Workspace::new();
    let (cohort, split) = ws.prepared_cohort(30);

    // Unknown engine -> config error (2).
    let out = cope()
        .args(["run", "--engine", "bogus", "--backend", "mock"])
        .arg("--cohort")
        .arg(&cohort)
        .arg("--run-dir")
        .arg(ws.path("r"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    let err = stderr_error(&out);
    assert_eq!(err["error"]["code"], "config");
    assert_eq!(err["error"]["exit"], 2);

    // Missing cohort file -> data error (3).
    let out = cope()
        .args(["eval"])
        .arg("--run")
        .arg(ws.path("nonexistent-run"))
        .arg("--cohort")
        .arg(ws.path("missing.jsonl"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(3));
    assert_eq!(stderr_error(&out)["error"]["code"], "data");

    // Locked run dir -> partial-run error (5).
    let locked = ws.path("locked-run");
    std::fs::create_dir_all(&locked).unwrap();
    std::fs::write(locked.join(".lock"), "pid 999999").unwrap();
    let out = cope()
        .args([
            "run",
            "--engine",
            "cope",
            "--backend",
            "mock",
            "--subset",
            "test",
        ])
        .arg("--cohort")
        .arg(&cohort)
        .arg("--split")
        .arg(&split)
        .arg("--run-dir")
        .arg(&locked)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(5));
    assert_eq!(stderr_error(&out)["error"]["code"], "partial_run");

    // Unknown backend name -> config error listing known names.
    let out = cope()
        .args(["run", "--engine", "cope", "--backend", "nope"])
        .arg("--cohort")
        .arg(&cohort)
        .arg("--run-dir")
        .arg(ws.path("r2"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));

    // Config file with multiple problems enumerates them all.
    let bad_config = ws.path("bad.toml");
    std::fs::write(
        &bad_config,
        "[split]\nfraction = 2.0\nseed = 1\n\n[run]\nconcurrency = 0\n",
    )
    .unwrap();
    let out = cope()
        .arg("--config")
        .arg(&bad_config)
        .args(["synth", "--n", "5"])
        .arg("--out")
        .arg(ws.path("x.jsonl"))
        .arg("--profiles")
        .arg(ws.path("p.jsonl"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    let err = stderr_error(&out);
    assert!(err["error"]["details"].as_array().unwrap().len() >= 2);
}

#[test]
fn deterministic_outputs_across_invocations() {
    let ws = Workspace::new();
    let (cohort, split) = ws.prepared_cohort(40);
    let run_a = ws.run_engine("cope", &cohort, &split, "det-a");
    let run_b = ws.run_engine("cope", &cohort, &split, "det-b");

    let normalize = |dir: &Path| -> Vec<String> {
        std::fs::read_to_string(dir.join("predictions.jsonl"))
            .unwrap()
            .lines()
            .map(|line| {
                let mut v: serde_json::Value = serde_json::from_str(line).unwrap();
                let obj = v.as_object_mut().unwrap();
                obj.remove("latency_ms");
                obj.remove("reasoning_latency_ms");
                serde_json::to_string(&v).unwrap()
            })
            .collect()
    };
    assert_eq!(normalize(&run_a), normalize(&run_b));

    // Same seeds -> byte-identical eval artifacts.
    for dir in [&run_a, &run_b] {
        run_ok(
            cope()
                .args(["eval", "--bootstrap", "500", "--seed", "3"])
                .arg("--run")
                .arg(dir)
                .arg("--cohort")
                .arg(&cohort),
        );
    }
    let metrics_a = std::fs::read_to_string(run_a.join("metrics.json")).unwrap();
    let metrics_b = std::fs::read_to_string(run_b.join("metrics.json")).unwrap();
    assert_eq!(metrics_a, metrics_b);
}

#[test]
fn csv_ingestion_and_exploration_subset() {
    let ws = Workspace::new();

    // CSV with a quoted multi-line note and empty optional cells.
    let csv_path = ws.path("cohort.csv");
    std::fs::write(
        &csv_path,
        "id,note_text,mrs_90d,mrs_followup_days,age_years,sex,evt,died_in_hospital\n\
         p1,\"DISCHARGE SUMMARY\n\nAge 70 years. The patient is a man. Discharge NIHSS 3.\",1,92,70,male,true,false\n\
         p2,\"DISCHARGE SUMMARY\n\nAge 55 years. The patient is a woman. Discharge NIHSS 0.\",0,,55,female,,\n\
         p3,\"DISCHARGE SUMMARY\n\nAge 81 years. The patient is a man. Discharge NIHSS 16.\",5,88,81,male,false,false\n\
         p4,\"DISCHARGE SUMMARY\n\nAge 62 years. The patient is a woman. Discharge NIHSS 7.\",2,95,62,female,true,false\n",
    )
    .unwrap();
    let cohort = ws.path("from-csv.jsonl");
    let out = run_ok(
        cope()
            .args(["ingest", "--format", "csv"])
            .arg("--input")
            .arg(&csv_path)
            .arg("--out")
            .arg(&cohort),
    );
    assert_eq!(stdout_json(&out)["records"], 4);

    let jsonl = std::fs::read_to_string(&cohort).unwrap();
    let p2: serde_json::Value = serde_json::from_str(jsonl.lines().nth(1).unwrap()).unwrap();
    assert_eq!(p2["id"], "p2");
    assert_eq!(p2["mrs_followup_days"], serde_json::Value::Null);
    assert_eq!(p2["evt"], serde_json::Value::Null);
    assert_eq!(p2["sex"], "female");

    // Tiny split, then run the exploration arm against the mock.
    let split = ws.path("csv-split.json");
    run_ok(
        cope()
            .args(["split", "--fraction", "0.25", "--seed", "2"])
            .arg("--cohort")
            .arg(&cohort)
            .arg("--out")
            .arg(&split),
    );
    let split_json: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&split).unwrap()).unwrap();
    let explore_n = split_json["exploration_ids"].as_array().unwrap().len();
    assert_eq!(
        explore_n + split_json["test_ids"].as_array().unwrap().len(),
        4
    );

    let run_dir = ws.path("csv-run");
    run_ok(
        cope()
            .args([
                "run",
                "--engine",
                "cope",
                "--backend",
                "mock",
                "--subset",
                "exploration",
            ])
            .arg("--cohort")
            .arg(&cohort)
            .arg("--split")
            .arg(&split)
            .arg("--run-dir")
            .arg(&run_dir),
    );
    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(run_dir.join("manifest.json")).unwrap())
            .unwrap();
    assert_eq!(manifest["n_records"].as_u64().unwrap() as usize, explore_n);
    assert_eq!(
        manifest["counts"]["ok"].as_u64().unwrap() as usize,
        explore_n
    );
}

#[test]
fn config_file_supplies_defaults() {
    let ws = Workspace::new();
    let (cohort, _split) = ws.prepared_cohort(30);
    let config = ws.path("cope.toml");
    std::fs::write(
        &config,
        format!(
            "[paths]\ncorpus = {:?}\n\n[stats]\nbootstrap_samples = 500\nseed = 12\nfdr_q = 0.05\n\n[backends.mock2]\nkind = \"mock\"\nmodel_name = \"mock-two\"\n",
            cohort.display().to_string()
        ),
    )
    .unwrap();

    // --cohort omitted: paths.corpus from the config is used; the named
    // backend from the config resolves.
    let run_dir = ws.path("cfg-run");
    run_ok(
        cope()
            .arg("--config")
            .arg(&config)
            .args(["run", "--engine", "cope", "--backend", "mock2"])
            .arg("--run-dir")
            .arg(&run_dir),
    );
    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(run_dir.join("manifest.json")).unwrap())
            .unwrap();
    assert_eq!(manifest["backend"]["model_name"], "mock-two");
    assert_eq!(manifest["counts"]["ok"], 30);

    run_ok(
        cope()
            .arg("--config")
            .arg(&config)
            .arg("eval")
            .arg("--run")
            .arg(&run_dir),
    );
    let metrics: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(run_dir.join("metrics.json")).unwrap())
            .unwrap();
    assert_eq!(metrics["bootstrap_samples"], 500);
    assert_eq!(metrics["seed"], 12);
}
