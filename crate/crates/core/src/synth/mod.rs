//! Synthetic discharge summaries with embedded clinical variables and a
//! deterministic outcome oracle, for end-to-end testing without PHI.
//!
//! The oracle mapping is a documented synthetic convention, not a clinical
//! claim: tests rely on closure properties (generator, extractor, and mock
//! model share one phrasing contract), never on realism.

mod phrasing;

pub use phrasing::PHRASING_BANK_VERSION;

use rand::RngExt;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{Cohort, CorpusError, PatientRecord};
use crate::features::{DischargeDestination, Sex, StructuredFeatures, TiciGrade};
use crate::rng::{substream_rng, substream_seed};

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("synth config: n must be >= 1")]
    EmptyConfig,
    #[error(transparent)]
    Corpus(#[from] CorpusError),
}

/// Fully-specified ground truth behind one synthetic note. TICI and the
/// complication flag apply only when the profile includes thrombectomy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatentProfile {
    pub age_years: u32,
    pub sex: Sex,
    pub prior_stroke: bool,
    pub hypertension: bool,
    pub diabetes: bool,
    pub atrial_fibrillation: bool,
    pub transfer_status: bool,
    pub nihss_baseline: u8,
    pub nihss_24h: u8,
    pub nihss_discharge: u8,
    pub hba1c: f64,
    pub ldl: f64,
    pub iv_tpa: bool,
    pub evt: bool,
    pub tici: Option<TiciGrade>,
    pub procedure_complication: Option<bool>,
    pub discharge_destination: DischargeDestination,
}

impl LatentProfile {
    /// The populated fields as a structured-features vector; used to check
    /// extraction against the generator.
    pub fn as_features(&self) -> StructuredFeatures {
        StructuredFeatures {
            age_years: Some(self.age_years),
            sex: Some(self.sex),
            prior_stroke: Some(self.prior_stroke),
            hypertension: Some(self.hypertension),
            diabetes: Some(self.diabetes),
            atrial_fibrillation: Some(self.atrial_fibrillation),
            transfer_status: Some(self.transfer_status),
            nihss_baseline: Some(self.nihss_baseline),
            nihss_24h: Some(self.nihss_24h),
            nihss_discharge: Some(self.nihss_discharge),
            hba1c: Some(self.hba1c),
            ldl: Some(self.ldl),
            iv_tpa: Some(self.iv_tpa),
            evt: Some(self.evt),
            tici: self.tici,
            procedure_complication: self.procedure_complication,
            discharge_destination: Some(self.discharge_destination),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SynthConfig {
    pub n: usize,
    pub seed: u64,
    /// 0 = labels equal the oracle; >= 1 perturbs labels by +/-1 (seeded).
    pub noise_level: u8,
    /// Approximate words per note; actual lengths vary around it.
    pub note_length_target: usize,
    pub phrasing_bank_version: u32,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            n: 200,
            seed: 7,
            noise_level: 0,
            note_length_target: 600,
            phrasing_bank_version: PHRASING_BANK_VERSION,
        }
    }
}

/// Ledger row pairing a generated record with its ground truth.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ProfileEntry {
    pub id: String,
    pub oracle_mrs: u8,
    pub profile: LatentProfile,
}

/// Deterministic outcome score from discharge severity and age.
///
/// Base score from discharge NIHSS bands {0 -> 0, 1-4 -> 1, 5-9 -> 2,
/// 10-14 -> 3, 15-20 -> 4, >20 -> 5}, plus one if age > 80, clamped to [0, 6].
pub fn oracle_mrs_parts(nihss_discharge: u8, age_years: u32) -> u8 {
    let base = match nihss_discharge {
        0 => 0,
        1..=4 => 1,
        5..=9 => 2,
        10..=14 => 3,
        15..=20 => 4,
        _ => 5,
    };
    let bumped = base + u8::from(age_years > 80);
    bumped.min(6)
}

pub fn oracle_mrs(profile: &LatentProfile) -> u8 {
    oracle_mrs_parts(profile.nihss_discharge, profile.age_years)
}

/// Generates `config.n` synthetic records plus the profile ledger.
///
/// Labels span all seven mRS values for n >= 7: the first records cycle
/// through forced (severity, age) combinations, the rest are sampled freely.
pub fn generate_corpus(config: &SynthConfig) -> Result<(Cohort, Vec<ProfileEntry>), SynthError> {
    if config.n == 0 {
        return Err(SynthError::EmptyConfig);
    }
    let mut records = Vec::with_capacity(config.n);
    let mut ledger = Vec::with_capacity(config.n);
    for i in 0..config.n {
        let id = format!("synth-{i:05}");
        let mut rng = substream_rng(config.seed, i as u64);
        let forced_label = if i < 14 { Some((i % 7) as u8) } else { None };
        let profile = sample_profile(&mut rng, forced_label);
        let oracle = oracle_mrs(&profile);
        let label = perturb_label(oracle, config.noise_level, config.seed, i as u64);
        let note_text = phrasing::render_note(&id, &profile, config.note_length_target, &mut rng);
        records.push(PatientRecord {
            id: id.clone(),
            note_text,
            mrs_90d: Some(label),
            mrs_followup_days: Some(60 + rng.random_range(0..61)),
            age_years: Some(profile.age_years),
            sex: Some(profile.sex),
            evt: Some(profile.evt),
            died_in_hospital: Some(false),
            structured_overrides: None,
        });
        ledger.push(ProfileEntry {
            id,
            oracle_mrs: oracle,
            profile,
        });
    }
    let cohort = Cohort::from_records(records, &format!("synth(seed={})", config.seed))?;
    Ok((cohort, ledger))
}

fn perturb_label(oracle: u8, noise_level: u8, seed: u64, index: u64) -> u8 {
    if noise_level == 0 {
        return oracle;
    }
    let mut rng = substream_rng(substream_seed(seed, 0xb1a5), index);
    // Half the labels move one step; direction is uniform, clamped in range.
    if rng.random_range(0..2) == 0 {
        return oracle;
    }
    let delta: i8 = if rng.random_range(0..2) == 0 { -1 } else { 1 };
    (oracle as i8 + delta).clamp(0, 6) as u8
}

fn sample_profile(rng: &mut rand_pcg::Pcg64Mcg, forced_label: Option<u8>) -> LatentProfile {
    // Pick severity band and age jointly so every label is reachable.
    let (base, age_years) = match forced_label {
        Some(6) => (5u8, rng.random_range(81..=95)),
        Some(label) => (label, rng.random_range(26..=80)),
        None => (rng.random_range(0..=5), rng.random_range(26..=95)),
    };
    let nihss_discharge: u8 = match base {
        0 => 0,
        1 => rng.random_range(1..=4),
        2 => rng.random_range(5..=9),
        3 => rng.random_range(10..=14),
        4 => rng.random_range(15..=20),
        _ => rng.random_range(21..=32),
    };
    let evt = rng.random_range(0..10) < 6;
    let procedure_complication = evt.then(|| rng.random_range(0..100) < 15);
    let nihss_24h = if procedure_complication == Some(true) {
        nihss_discharge.saturating_sub(rng.random_range(1..=5))
    } else {
        (nihss_discharge + rng.random_range(0..=8)).min(42)
    };
    let nihss_baseline = (nihss_24h.max(nihss_discharge) + rng.random_range(0..=8)).min(42);
    let tici = evt.then(|| {
        [
            TiciGrade::Grade2a,
            TiciGrade::Grade2b,
            TiciGrade::Grade2b,
            TiciGrade::Grade2c,
            TiciGrade::Grade3,
            TiciGrade::Grade3,
        ][rng.random_range(0..6)]
    });
    let discharge_destination = match base {
        0 | 1 => DischargeDestination::Home,
        2 => {
            if rng.random_range(0..2) == 0 {
                DischargeDestination::Home
            } else {
                DischargeDestination::AcuteRehab
            }
        }
        3 => DischargeDestination::AcuteRehab,
        4 => {
            if rng.random_range(0..2) == 0 {
                DischargeDestination::AcuteRehab
            } else {
                DischargeDestination::Snf
            }
        }
        _ => [
            DischargeDestination::Snf,
            DischargeDestination::Ltac,
            DischargeDestination::Hospice,
            DischargeDestination::Other,
        ][rng.random_range(0..4)],
    };

    LatentProfile {
        age_years,
        sex: if rng.random_range(0..2) == 0 {
            Sex::Male
        } else {
            Sex::Female
        },
        prior_stroke: rng.random_range(0..5) == 0,
        hypertension: rng.random_range(0..10) < 6,
        diabetes: rng.random_range(0..10) < 3,
        atrial_fibrillation: rng.random_range(0..10) < 3,
        transfer_status: rng.random_range(0..10) < 4,
        nihss_baseline,
        nihss_24h,
        nihss_discharge,
        hba1c: (rng.random_range(48..=119) as f64) / 10.0,
        ldl: rng.random_range(40..=200) as f64,
        iv_tpa: rng.random_range(0..2) == 0,
        evt,
        tici,
        procedure_complication,
        discharge_destination,
    }
}
