//! `cope`: a workbench for two-step chain-of-thought prediction of 90-day
//! mRS outcomes from discharge summaries, with baselines and the full
//! statistical evaluation protocol.
//!
//! Workflow: `synth`/`ingest` -> `exclude` -> `split` -> `run` -> `eval` ->
//! `compare` / `subgroup` -> `report`. Exit codes: 0 ok, 2 config error,
//! 3 data error, 4 backend error, 5 partial run. Errors also land on stderr
//! as one JSON object.

mod commands;
mod config;
mod errors;
mod report;

use std::path::PathBuf;

use clap::{Parser, Subcommand};

use config::FileConfig;
use errors::AppError;

#[derive(Parser)]
#[command(
    name = "cope",
    version,
    about = "Chain-of-thought mRS outcome prediction workbench"
)]
struct Cli {
    /// TOML config file with defaults for paths, backends, seeds, and stats.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Validate and normalize a corpus file (JSONL or CSV) into corpus JSONL.
    Ingest {
        #[arg(long)]
        input: PathBuf,
        /// jsonl or csv; inferred from the extension when omitted.
        #[arg(long)]
        format: Option<String>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Apply the exclusion flowchart: missing 90-day mRS, then in-hospital death.
    Exclude {
        /// Defaults to paths.corpus from the config file.
        #[arg(long)]
        cohort: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Where to write the exclusion report (also printed to stdout).
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Stratified exploration/test split by mRS label, plus demographics.
    Split {
        #[arg(long)]
        cohort: Option<PathBuf>,
        #[arg(long)]
        fraction: Option<f64>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        demographics: Option<PathBuf>,
    },
    /// Generate a synthetic corpus with a deterministic outcome oracle.
    Synth {
        #[arg(long, default_value_t = 200)]
        n: usize,
        #[arg(long, default_value_t = 7)]
        seed: u64,
        /// 0 = labels equal the oracle; 1..=2 perturb labels by one step.
        #[arg(long, default_value_t = 0)]
        noise: u8,
        #[arg(long, default_value_t = 600)]
        length_target: usize,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        profiles: PathBuf,
    },
    /// Run an engine over a cohort subset into a resumable run directory.
    Run {
        /// cope, single_step, or clinical_ml.
        #[arg(long)]
        engine: String,
        /// Backend name from the config; "mock" is always available.
        #[arg(long, default_value = "mock")]
        backend: String,
        #[arg(long)]
        cohort: Option<PathBuf>,
        #[arg(long)]
        split: Option<PathBuf>,
        /// exploration, test, or all.
        #[arg(long, default_value = "all")]
        subset: String,
        #[arg(long)]
        run_dir: PathBuf,
        #[arg(long)]
        reasoning_template: Option<PathBuf>,
        #[arg(long)]
        extraction_template: Option<PathBuf>,
        #[arg(long)]
        single_template: Option<PathBuf>,
        #[arg(long)]
        concurrency: Option<usize>,
        #[arg(long)]
        cache_dir: Option<PathBuf>,
        /// Disable the response cache for this run.
        #[arg(long, default_value_t = false)]
        no_cache: bool,
    },
    /// Metrics with bootstrap CIs for a completed run.
    Eval {
        #[arg(long)]
        run: PathBuf,
        #[arg(long)]
        cohort: Option<PathBuf>,
        #[arg(long)]
        bootstrap: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        /// Defaults to <run>/metrics.json.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Paired bootstrap comparison of two runs with BH correction.
    Compare {
        #[arg(long)]
        a: PathBuf,
        #[arg(long)]
        b: PathBuf,
        #[arg(long)]
        cohort: Option<PathBuf>,
        /// Comma-separated metric family (default: mae,acc,within1_acc).
        #[arg(long)]
        family: Option<String>,
        #[arg(long)]
        bootstrap: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        q: Option<f64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Per-band MAE with CIs across subgroup axes; writes forest.json/.csv.
    Subgroup {
        #[arg(long)]
        run: PathBuf,
        #[arg(long)]
        cohort: Option<PathBuf>,
        /// Comma-separated: sex, evt, length, age.
        #[arg(long)]
        axes: Option<String>,
        #[arg(long)]
        bootstrap: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Render persisted artifacts as csv, json, or an SVG forest plot.
    Report {
        #[arg(long)]
        run: PathBuf,
        #[arg(long)]
        format: String,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn dispatch(cli: Cli) -> Result<(), AppError> {
    let config = FileConfig::load(cli.config.as_deref())?;
    match &cli.command {
        Command::Ingest { input, format, out } => commands::ingest(input, format.as_deref(), out),
        Command::Exclude {
            cohort,
            out,
            report,
        } => commands::exclude(
            &commands::resolve_cohort(&config, cohort.as_deref())?,
            out,
            report.as_deref(),
        ),
        Command::Split {
            cohort,
            fraction,
            seed,
            out,
            demographics,
        } => commands::split(
            &config,
            &commands::resolve_cohort(&config, cohort.as_deref())?,
            *fraction,
            *seed,
            out,
            demographics.as_deref(),
        ),
        Command::Synth {
            n,
            seed,
            noise,
            length_target,
            out,
            profiles,
        } => commands::synth(*n, *seed, *noise, *length_target, out, profiles),
        Command::Run {
            engine,
            backend,
            cohort,
            split,
            subset,
            run_dir,
            reasoning_template,
            extraction_template,
            single_template,
            concurrency,
            cache_dir,
            no_cache,
        } => commands::run(
            &config,
            &commands::RunArgs {
                engine,
                backend,
                cohort_path: &commands::resolve_cohort(&config, cohort.as_deref())?,
                split_path: split.as_deref(),
                subset,
                run_dir,
                reasoning_template: reasoning_template.as_deref(),
                extraction_template: extraction_template.as_deref(),
                single_template: single_template.as_deref(),
                concurrency: *concurrency,
                cache_dir: cache_dir.as_deref(),
                no_cache: *no_cache,
            },
        ),
        Command::Eval {
            run,
            cohort,
            bootstrap,
            seed,
            out,
        } => commands::eval(
            &config,
            run,
            &commands::resolve_cohort(&config, cohort.as_deref())?,
            *bootstrap,
            *seed,
            out.as_deref(),
        ),
        Command::Compare {
            a,
            b,
            cohort,
            family,
            bootstrap,
            seed,
            q,
            out,
        } => commands::compare(
            &config,
            a,
            b,
            &commands::resolve_cohort(&config, cohort.as_deref())?,
            family.as_deref(),
            *bootstrap,
            *seed,
            *q,
            out.as_deref(),
        ),
        Command::Subgroup {
            run,
            cohort,
            axes,
            bootstrap,
            seed,
        } => commands::subgroup(
            &config,
            run,
            &commands::resolve_cohort(&config, cohort.as_deref())?,
            axes.as_deref(),
            *bootstrap,
            *seed,
        ),
        Command::Report { run, format, out } => {
            commands::render_report(run, format, out.as_deref())
        }
    }
}

fn main() {
    let cli = Cli::parse();
    if let Err(error) = dispatch(cli) {
        eprintln!("{}", error.to_stderr_json());
        std::process::exit(error.kind.exit_code());
    }
}
