//! Phrasing bank for synthetic notes.
//!
//! Every populated profile field is rendered through at least one phrase the
//! extraction grammar recognizes; the bank and the grammar are versioned
//! together so drift between generator and extractor fails tests loudly.

use rand::RngExt;
use rand_pcg::Pcg64Mcg;

use super::LatentProfile;
use crate::features::{DischargeDestination, Sex, TiciGrade};

/// Must equal `features::GRAMMAR_VERSION`; asserted by tests.
pub const PHRASING_BANK_VERSION: u32 = 1;

const FILLER: [&str; 14] = [
    "The hospital course was otherwise notable for close neurologic monitoring in the stroke unit.",
    "Physical therapy and occupational therapy evaluated the patient and made disposition recommendations.",
    "Speech and swallow evaluation was completed prior to advancing the diet.",
    "Telemetry monitoring continued throughout the stay without sustained arrhythmia beyond the findings above.",
    "The family meeting reviewed goals of care and anticipated recovery trajectory in detail.",
    "Repeat imaging showed expected evolution of the infarct without hemorrhagic transformation.",
    "Blood pressure parameters were liberalized per the stroke service protocol before disposition.",
    "The patient tolerated the neurologic examinations well and participated in therapy sessions.",
    "Nursing staff reinforced education regarding medication adherence and stroke warning signs.",
    "Case management coordinated equipment needs and outpatient follow-up appointments.",
    "The primary team communicated the plan with the outpatient neurologist of record.",
    "Secondary prevention measures were reviewed, including risk factor modification and lifestyle counseling.",
    "The swallow screen was repeated before discharge per protocol with stable results.",
    "Wound checks at prior access sites remained unremarkable during the remainder of the stay.",
];

fn sex_word(sex: Sex) -> &'static str {
    match sex {
        Sex::Male => "man",
        Sex::Female => "woman",
    }
}

fn tici_label(grade: TiciGrade) -> &'static str {
    match grade {
        TiciGrade::Grade0 => "TICI 0",
        TiciGrade::Grade1 => "TICI 1",
        TiciGrade::Grade2a => "TICI 2a",
        TiciGrade::Grade2b => "TICI 2b",
        TiciGrade::Grade2c => "TICI 2c",
        TiciGrade::Grade3 => "TICI 3",
    }
}

fn destination_phrase(dest: DischargeDestination) -> &'static str {
    match dest {
        DischargeDestination::Home => "discharged to home",
        DischargeDestination::AcuteRehab => "discharged to acute rehabilitation",
        DischargeDestination::Snf => "discharged to a skilled nursing facility",
        DischargeDestination::Ltac => "discharged to a long-term acute care facility",
        DischargeDestination::Hospice => "discharged to hospice",
        DischargeDestination::Other => "discharged to another facility",
    }
}

/// Renders one discharge-summary-like note. Phrase variants are chosen from
/// the profile's RNG stream; filler pads the body toward the length target.
pub fn render_note(
    id: &str,
    p: &LatentProfile,
    length_target: usize,
    rng: &mut Pcg64Mcg,
) -> String {
    let mut s = String::with_capacity(length_target * 8);
    s.push_str("DISCHARGE SUMMARY\n\n");
    s.push_str(&format!("Patient identifier: {id}.\n"));

    // Demographics.
    if rng.random_range(0..2) == 0 {
        s.push_str(&format!(
            "The patient is a {}-year-old {} evaluated for acute ischemic stroke.\n",
            p.age_years,
            sex_word(p.sex)
        ));
    } else {
        s.push_str(&format!(
            "Age {} years. The patient is a {} admitted with acute ischemic stroke.\n",
            p.age_years,
            sex_word(p.sex)
        ));
    }

    // History block.
    s.push_str("Past medical history: ");
    s.push_str(if p.hypertension {
        "History of hypertension. "
    } else {
        "No history of hypertension. "
    });
    s.push_str(if p.diabetes {
        if rng.random_range(0..2) == 0 {
            "Type 2 diabetes mellitus. "
        } else {
            "Diabetes mellitus on oral therapy. "
        }
    } else {
        "No history of diabetes. "
    });
    s.push_str(if p.atrial_fibrillation {
        "Known atrial fibrillation. "
    } else {
        "No atrial fibrillation documented. "
    });
    s.push_str(if p.prior_stroke {
        "History of prior stroke. "
    } else {
        "No prior history of stroke. "
    });
    s.push('\n');

    // Arrival.
    s.push_str(if p.transfer_status {
        "The patient was transferred from an outside hospital for a higher level of care. "
    } else {
        "The patient presented directly to our emergency department. "
    });
    if rng.random_range(0..2) == 0 {
        s.push_str(&format!("Baseline NIHSS {}.\n", p.nihss_baseline));
    } else {
        s.push_str(&format!("NIHSS on admission was {}.\n", p.nihss_baseline));
    }

    // Treatment.
    s.push_str(if p.iv_tpa {
        "IV tPA was administered within the treatment window. "
    } else {
        "IV tPA was not administered. "
    });
    if p.evt {
        let tici = p.tici.expect("thrombectomy profiles carry a TICI grade");
        s.push_str(&format!(
            "The patient underwent endovascular thrombectomy with final {} reperfusion. ",
            tici_label(tici)
        ));
        if p.procedure_complication == Some(true) {
            s.push_str(
                "The procedure was complicated by distal embolization requiring additional passes. ",
            );
        } else {
            s.push_str("There were no procedural complications. ");
        }
    } else {
        s.push_str("The patient did not undergo thrombectomy. ");
    }
    s.push('\n');

    // Course and labs.
    if rng.random_range(0..2) == 0 {
        s.push_str(&format!("24-hour NIHSS {}. ", p.nihss_24h));
    } else {
        s.push_str(&format!("NIHSS at 24 hours was {}. ", p.nihss_24h));
    }
    s.push_str(&format!(
        "Laboratory results were notable for HbA1c {:.1} and LDL {} mg per deciliter.\n",
        p.hba1c, p.ldl
    ));

    // Discharge.
    if rng.random_range(0..2) == 0 {
        s.push_str(&format!("Discharge NIHSS {}. ", p.nihss_discharge));
    } else {
        s.push_str(&format!("NIHSS at discharge was {}. ", p.nihss_discharge));
    }
    s.push_str(&format!(
        "The patient was {}.\n\nHospital course details: ",
        destination_phrase(p.discharge_destination)
    ));

    // Pad toward the target with digit-free filler.
    let jitter = 0.6 + rng.random_range(0..81) as f64 / 100.0;
    let target = ((length_target as f64) * jitter) as usize;
    let mut words = s.split_whitespace().count();
    let mut k = rng.random_range(0..FILLER.len());
    while words < target {
        let sentence = FILLER[k % FILLER.len()];
        s.push_str(sentence);
        s.push(' ');
        words += sentence.split_whitespace().count();
        k += 1;
    }
    s.push('\n');
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    fn profile() -> LatentProfile {
        LatentProfile {
            age_years: 83,
            sex: Sex::Female,
            prior_stroke: false,
            hypertension: true,
            diabetes: false,
            atrial_fibrillation: true,
            transfer_status: true,
            nihss_baseline: 18,
            nihss_24h: 12,
            nihss_discharge: 9,
            hba1c: 6.5,
            ldl: 130.0,
            iv_tpa: true,
            evt: true,
            tici: Some(TiciGrade::Grade2b),
            procedure_complication: Some(false),
            discharge_destination: DischargeDestination::AcuteRehab,
        }
    }

    #[test]
    fn note_mentions_every_field() {
        let mut rng = Pcg64Mcg::seed_from_u64(3);
        let note = render_note("synth-x", &profile(), 300, &mut rng);
        for needle in [
            "DISCHARGE SUMMARY",
            "83",
            "woman",
            "hypertension",
            "diabetes",
            "atrial fibrillation",
            "prior",
            "outside hospital",
            "18",
            "IV tPA",
            "thrombectomy",
            "TICI 2b",
            "12",
            "6.5",
            "130",
            "9",
            "acute rehabilitation",
        ] {
            assert!(note.contains(needle), "missing {needle:?} in:\n{note}");
        }
    }

    #[test]
    fn filler_is_digit_free_and_grammar_safe() {
        for sentence in FILLER {
            assert!(!sentence.chars().any(|c| c.is_ascii_digit()), "{sentence}");
            let extracted = crate::features::extract_features(sentence, None);
            assert_eq!(
                extracted,
                crate::features::StructuredFeatures::default(),
                "filler sentence triggers the extraction grammar: {sentence}"
            );
        }
    }
}
