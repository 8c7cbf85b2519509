//! Model comparison across a metric family with Benjamini-Hochberg control.

use serde::{Deserialize, Serialize};

use super::{paired_bootstrap_tests, Metric, PairedOutcomes, StatsError};

/// Step-up Benjamini-Hochberg at FDR level `q`: sort ascending, find the
/// largest k with p_(k) <= k*q/m, reject hypotheses 1..k in sorted order.
/// Decisions come back in the original input order.
pub fn benjamini_hochberg(p_values: &[f64], q: f64) -> Result<Vec<bool>, StatsError> {
    if !(q > 0.0 && q < 1.0) {
        return Err(StatsError::BadQ(q));
    }
    for p in p_values {
        if !(*p > 0.0 && *p <= 1.0) {
            return Err(StatsError::BadPValue(*p));
        }
    }
    let m = p_values.len();
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|a, b| p_values[*a].total_cmp(&p_values[*b]));

    let mut cut = 0;
    for (rank0, idx) in order.iter().enumerate() {
        let k = rank0 + 1;
        if p_values[*idx] <= k as f64 * q / m as f64 {
            cut = k;
        }
    }
    let mut decisions = vec![false; m];
    for idx in order.into_iter().take(cut) {
        decisions[idx] = true;
    }
    Ok(decisions)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricComparison {
    pub metric: Metric,
    /// Observed metric_a - metric_b.
    pub delta: f64,
    pub p_value: f64,
    pub bh_reject: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonResult {
    pub model_a: String,
    pub model_b: String,
    pub n: usize,
    pub bootstrap_samples: usize,
    pub seed: u64,
    pub q: f64,
    pub results: Vec<MetricComparison>,
}

/// Paired bootstrap tests over `family`, BH-corrected as one family.
/// The caller defines the family; the default CLI family is the three
/// headline metrics of a single A-vs-B comparison.
#[allow(clippy::too_many_arguments)]
pub fn compare_outcomes(
    model_a: &str,
    model_b: &str,
    arm_a: &PairedOutcomes,
    arm_b: &PairedOutcomes,
    family: &[Metric],
    bootstrap_samples: usize,
    seed: u64,
    q: f64,
) -> Result<ComparisonResult, StatsError> {
    let tested = paired_bootstrap_tests(arm_a, arm_b, family, bootstrap_samples, seed)?;
    let p_values: Vec<f64> = tested.iter().map(|(_, p, _)| *p).collect();
    let decisions = benjamini_hochberg(&p_values, q)?;
    Ok(ComparisonResult {
        model_a: model_a.to_string(),
        model_b: model_b.to_string(),
        n: arm_a.len(),
        bootstrap_samples,
        seed,
        q,
        results: tested
            .into_iter()
            .zip(decisions)
            .map(|((metric, p_value, delta), bh_reject)| MetricComparison {
                metric,
                delta,
                p_value,
                bh_reject,
            })
            .collect(),
    })
}
