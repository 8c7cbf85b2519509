//! Percentile bootstrap confidence intervals and the paired bootstrap
//! hypothesis test.
//!
//! Resample i draws its indices from substream(seed, i), so a B-resample
//! job can be split, reordered, or parallelized without changing results.

use rand::RngExt;

use super::{Metric, PairedOutcomes, StatsError};
use crate::rng::substream_rng;

fn check(outcomes: &PairedOutcomes, b: usize) -> Result<(), StatsError> {
    if outcomes.len() < 2 || b < 100 {
        return Err(StatsError::DegenerateBootstrap {
            n: outcomes.len(),
            b,
        });
    }
    Ok(())
}

/// 95% percentile interval (2.5th and 97.5th by nearest rank) of the metric
/// over B resamples of patient indices with replacement.
pub fn bootstrap_ci(
    outcomes: &PairedOutcomes,
    metric: Metric,
    b: usize,
    seed: u64,
) -> Result<(f64, f64), StatsError> {
    check(outcomes, b)?;
    let diffs = outcomes.abs_diffs();
    let n = diffs.len();
    let mut stats = Vec::with_capacity(b);
    let mut resampled = vec![0u8; n];
    for i in 0..b {
        let mut rng = substream_rng(seed, i as u64);
        for slot in resampled.iter_mut() {
            *slot = diffs[rng.random_range(0..n)];
        }
        stats.push(metric.from_diffs(&resampled));
    }
    stats.sort_by(|a, b| a.total_cmp(b));
    let lo_rank = ((0.025 * b as f64).ceil() as usize).clamp(1, b);
    let hi_rank = ((0.975 * b as f64).ceil() as usize).clamp(1, b);
    Ok((stats[lo_rank - 1], stats[hi_rank - 1]))
}

fn check_paired(a: &PairedOutcomes, b_arm: &PairedOutcomes) -> Result<(), StatsError> {
    if a.len() != b_arm.len() {
        return Err(StatsError::IdMismatch {
            example: format!("arm sizes {} vs {}", a.len(), b_arm.len()),
        });
    }
    for i in 0..a.len() {
        if a.patient_ids()[i] != b_arm.patient_ids()[i] {
            return Err(StatsError::IdMismatch {
                example: format!(
                    "{} vs {} at position {i}",
                    a.patient_ids()[i],
                    b_arm.patient_ids()[i]
                ),
            });
        }
        if a.y_true()[i] != b_arm.y_true()[i] {
            return Err(StatsError::TruthMismatch(a.patient_ids()[i].clone()));
        }
    }
    Ok(())
}

/// Two-sided paired bootstrap p-value for the difference in one metric.
///
/// Patient indices are resampled jointly, the metric difference is computed
/// per resample, and p = 2 * min(#{d <= 0} + 1, #{d >= 0} + 1) / (B + 1),
/// capped at 1. Add-one smoothing keeps p > 0.
pub fn paired_bootstrap_test(
    arm_a: &PairedOutcomes,
    arm_b: &PairedOutcomes,
    metric: Metric,
    b: usize,
    seed: u64,
) -> Result<f64, StatsError> {
    paired_bootstrap_tests(arm_a, arm_b, &[metric], b, seed).map(|mut v| v.pop().unwrap().1)
}

/// Family version: one shared sequence of resamples scores every metric, so
/// family-wide results stay coherent and a single pass suffices.
/// Returns (metric, p_value, observed delta a-b) per metric.
pub fn paired_bootstrap_tests(
    arm_a: &PairedOutcomes,
    arm_b: &PairedOutcomes,
    metrics: &[Metric],
    b: usize,
    seed: u64,
) -> Result<Vec<(Metric, f64, f64)>, StatsError> {
    check(arm_a, b)?;
    check_paired(arm_a, arm_b)?;
    let diffs_a = arm_a.abs_diffs();
    let diffs_b = arm_b.abs_diffs();
    let n = diffs_a.len();

    let mut le = vec![0usize; metrics.len()];
    let mut ge = vec![0usize; metrics.len()];
    let mut res_a = vec![0u8; n];
    let mut res_b = vec![0u8; n];
    for i in 0..b {
        let mut rng = substream_rng(seed, i as u64);
        for j in 0..n {
            let idx = rng.random_range(0..n);
            res_a[j] = diffs_a[idx];
            res_b[j] = diffs_b[idx];
        }
        for (m, metric) in metrics.iter().enumerate() {
            let delta = metric.from_diffs(&res_a) - metric.from_diffs(&res_b);
            if delta <= 0.0 {
                le[m] += 1;
            }
            if delta >= 0.0 {
                ge[m] += 1;
            }
        }
    }

    Ok(metrics
        .iter()
        .enumerate()
        .map(|(m, metric)| {
            let p = 2.0 * (le[m].min(ge[m]) + 1) as f64 / (b as f64 + 1.0);
            let observed = metric.from_diffs(&diffs_a) - metric.from_diffs(&diffs_b);
            (*metric, p.min(1.0), observed)
        })
        .collect())
}
