//! Subgroup and sensitivity analyses: per-band MAE with bootstrap CIs,
//! emitted as forest-plot rows ordered by axis then band.

use serde::{Deserialize, Serialize};

use super::{bootstrap_ci, Metric, PairedOutcomes, StatsError};
use crate::corpus::{word_count, Cohort};
use crate::features::Sex;
use crate::rng::substream_seed;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SubgroupAxis {
    Sex,
    Evt,
    NoteLengthQuartile,
    AgeBand,
}

impl SubgroupAxis {
    pub fn as_str(self) -> &'static str {
        match self {
            SubgroupAxis::Sex => "sex",
            SubgroupAxis::Evt => "evt",
            SubgroupAxis::NoteLengthQuartile => "note_length_quartile",
            SubgroupAxis::AgeBand => "age_band",
        }
    }

    pub fn from_name(name: &str) -> Result<SubgroupAxis, StatsError> {
        match name {
            "sex" => Ok(SubgroupAxis::Sex),
            "evt" => Ok(SubgroupAxis::Evt),
            "length" | "note_length" | "note_length_quartile" => {
                Ok(SubgroupAxis::NoteLengthQuartile)
            }
            "age" | "age_band" => Ok(SubgroupAxis::AgeBand),
            other => Err(StatsError::UnknownAxis(other.to_string())),
        }
    }
}

/// Nearest-rank quartile cutoffs. A value equal to a cutoff joins the band
/// below it, so 1..=8 yields bands {1,2} {3,4} {5,6} {7,8} at cutoffs 2,4,6.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuartileBins {
    pub cutoffs: [f64; 3],
    /// All cutoffs equal: every value lands in the first band.
    pub degenerate: bool,
}

impl QuartileBins {
    pub fn assign(&self, value: f64) -> usize {
        if value <= self.cutoffs[0] {
            0
        } else if value <= self.cutoffs[1] {
            1
        } else if value <= self.cutoffs[2] {
            2
        } else {
            3
        }
    }

    pub fn band_label(&self, band: usize) -> String {
        let fmt = |v: f64| {
            if v.fract() == 0.0 {
                format!("{}", v as i64)
            } else {
                format!("{v:.1}")
            }
        };
        match band {
            0 => format!("q1 (<= {})", fmt(self.cutoffs[0])),
            1 => format!("q2 ({} - {}]", fmt(self.cutoffs[0]), fmt(self.cutoffs[1])),
            2 => format!("q3 ({} - {}]", fmt(self.cutoffs[1]), fmt(self.cutoffs[2])),
            _ => format!("q4 (> {})", fmt(self.cutoffs[2])),
        }
    }
}

/// Nearest-rank 25/50/75th percentiles over `values` (n >= 4).
pub fn quartile_bins(values: &[f64]) -> Result<QuartileBins, StatsError> {
    if values.len() < 4 {
        return Err(StatsError::TooFewValues(values.len()));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.total_cmp(b));
    let rank = |p: f64| {
        let r = (p * sorted.len() as f64).ceil() as usize;
        sorted[r.clamp(1, sorted.len()) - 1]
    };
    let cutoffs = [rank(0.25), rank(0.5), rank(0.75)];
    Ok(QuartileBins {
        cutoffs,
        degenerate: cutoffs[0] == cutoffs[2],
    })
}

/// Age bands as used for subgroup analysis: <46, 46-64, 65-80, >80 years.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum AgeBand {
    Under46,
    From46To64,
    From65To80,
    Over80,
}

impl AgeBand {
    pub const ALL: [AgeBand; 4] = [
        AgeBand::Under46,
        AgeBand::From46To64,
        AgeBand::From65To80,
        AgeBand::Over80,
    ];

    pub fn label(self) -> &'static str {
        match self {
            AgeBand::Under46 => "<46",
            AgeBand::From46To64 => "46-64",
            AgeBand::From65To80 => "65-80",
            AgeBand::Over80 => ">80",
        }
    }
}

pub fn age_band(age_years: u32) -> AgeBand {
    match age_years {
        0..=45 => AgeBand::Under46,
        46..=64 => AgeBand::From46To64,
        65..=80 => AgeBand::From65To80,
        _ => AgeBand::Over80,
    }
}

/// One forest-plot row. Empty bands keep their row with n = 0 and no
/// estimates; singleton bands report the MAE but no interval.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestRow {
    pub axis: String,
    pub band: String,
    pub n: usize,
    pub mae: Option<f64>,
    pub ci_lo: Option<f64>,
    pub ci_hi: Option<f64>,
}

/// Per-band MAE with bootstrap CIs for the requested axes. Records whose
/// covariate is missing land in a trailing "unknown" band per axis.
pub fn subgroup_report(
    outcomes: &PairedOutcomes,
    cohort: &Cohort,
    axes: &[SubgroupAxis],
    bootstrap_samples: usize,
    seed: u64,
) -> Result<Vec<ForestRow>, StatsError> {
    for id in outcomes.patient_ids() {
        if cohort.record(id).is_none() {
            return Err(StatsError::UnknownPatient(id.clone()));
        }
    }

    let mut rows = Vec::new();
    for (axis_index, axis) in axes.iter().enumerate() {
        let bands: Vec<(String, Vec<usize>)> = partition(outcomes, cohort, *axis)?;
        for (band_index, (band, members)) in bands.into_iter().enumerate() {
            let band_seed =
                substream_seed(substream_seed(seed, axis_index as u64), band_index as u64);
            rows.push(band_row(
                outcomes,
                axis.as_str(),
                &band,
                &members,
                bootstrap_samples,
                band_seed,
            )?);
        }
    }
    Ok(rows)
}

/// Band name -> member positions in `outcomes`, in canonical band order,
/// with an "unknown" band appended when covariates are missing.
fn partition(
    outcomes: &PairedOutcomes,
    cohort: &Cohort,
    axis: SubgroupAxis,
) -> Result<Vec<(String, Vec<usize>)>, StatsError> {
    let record = |i: usize| cohort.record(&outcomes.patient_ids()[i]).expect("checked");
    let n = outcomes.len();
    let mut unknown: Vec<usize> = Vec::new();

    let mut bands: Vec<(String, Vec<usize>)> = match axis {
        SubgroupAxis::Sex => {
            let mut male = Vec::new();
            let mut female = Vec::new();
            for i in 0..n {
                match record(i).sex {
                    Some(Sex::Male) => male.push(i),
                    Some(Sex::Female) => female.push(i),
                    None => unknown.push(i),
                }
            }
            vec![("male".into(), male), ("female".into(), female)]
        }
        SubgroupAxis::Evt => {
            let mut evt = Vec::new();
            let mut non_evt = Vec::new();
            for i in 0..n {
                match record(i).evt {
                    Some(true) => evt.push(i),
                    Some(false) => non_evt.push(i),
                    None => unknown.push(i),
                }
            }
            vec![("non_evt".into(), non_evt), ("evt".into(), evt)]
        }
        SubgroupAxis::NoteLengthQuartile => {
            let lengths: Vec<f64> = (0..n)
                .map(|i| word_count(&record(i).note_text) as f64)
                .collect();
            let bins = quartile_bins(&lengths)?;
            let mut members: [Vec<usize>; 4] = Default::default();
            for (i, len) in lengths.iter().enumerate() {
                members[bins.assign(*len)].push(i);
            }
            members
                .into_iter()
                .enumerate()
                .map(|(b, m)| (bins.band_label(b), m))
                .collect()
        }
        SubgroupAxis::AgeBand => {
            let mut members: [Vec<usize>; 4] = Default::default();
            for i in 0..n {
                match record(i).age_years {
                    Some(age) => {
                        let band = AgeBand::ALL
                            .iter()
                            .position(|b| *b == age_band(age))
                            .expect("band covers all ages");
                        members[band].push(i);
                    }
                    None => unknown.push(i),
                }
            }
            members
                .into_iter()
                .zip(AgeBand::ALL)
                .map(|(m, b)| (b.label().to_string(), m))
                .collect()
        }
    };
    if !unknown.is_empty() {
        bands.push(("unknown".into(), unknown));
    }
    Ok(bands)
}

fn band_row(
    outcomes: &PairedOutcomes,
    axis: &str,
    band: &str,
    members: &[usize],
    bootstrap_samples: usize,
    seed: u64,
) -> Result<ForestRow, StatsError> {
    let mut row = ForestRow {
        axis: axis.to_string(),
        band: band.to_string(),
        n: members.len(),
        mae: None,
        ci_lo: None,
        ci_hi: None,
    };
    if members.is_empty() {
        return Ok(row);
    }
    let ids: std::collections::BTreeSet<&str> = members
        .iter()
        .map(|i| outcomes.patient_ids()[*i].as_str())
        .collect();
    let subset = outcomes
        .filter_ids(&|id| ids.contains(id))
        .expect("members are nonempty");
    row.mae = Some(Metric::Mae.compute(&subset));
    if subset.len() >= 2 {
        let (lo, hi) = bootstrap_ci(&subset, Metric::Mae, bootstrap_samples, seed)?;
        row.ci_lo = Some(lo);
        row.ci_hi = Some(hi);
    }
    Ok(row)
}
