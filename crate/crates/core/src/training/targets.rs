//! Remaining-time targets and per-patient weights.

use crate::cohort::{EncodedSequence, DAYS_PER_YEAR};
use crate::error::{Error, Result};
use crate::weibull::WeibullParams;
use serde::{Deserialize, Serialize};

/// Censored targets never exceed this many years from the index date.
pub const TARGET_CAP_YEARS: f64 = 5.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingTarget {
    /// Years remaining at each valid step.
    pub tau: Vec<f64>,
    pub weight: f64,
    pub censored: bool,
    /// Imputed total event time for censored patients, in years.
    pub bg_total: Option<f64>,
}

impl TrainingTarget {
    pub fn steps(&self) -> usize {
        self.tau.len()
    }
}

/// Best-guess event time for a patient censored at `censor_years` under an
/// exponential with mean `mean_survival`, capped at five years.
pub fn censored_total(censor_years: f64, mean_survival: f64) -> Result<f64> {
    if !(mean_survival > 0.0) || !mean_survival.is_finite() {
        return Err(Error::InvalidInput(format!(
            "mean survival must be positive, got {mean_survival}"
        )));
    }
    let bg = WeibullParams::new(1.0, mean_survival)?.best_guess(censor_years)?;
    Ok(bg.min(TARGET_CAP_YEARS))
}

/// Builds the targets of one encoded patient. `mean_survival` is the
/// discrete-time model's mean survival and is required when censored.
pub fn build_target(seq: &EncodedSequence, mean_survival: Option<f64>, tau_floor: f64) -> Result<TrainingTarget> {
    let c = seq.followup_end_day as f64 / DAYS_PER_YEAR;
    if !(c > 0.0) {
        return Err(Error::InvalidInput(format!(
            "patient {} has non-positive follow-up",
            seq.patient_id
        )));
    }
    let steps = &seq.step_days[..seq.valid_steps];
    if seq.event {
        let tau = steps
            .iter()
            .map(|&d| ((seq.followup_end_day - d) as f64 / DAYS_PER_YEAR).max(tau_floor))
            .collect();
        return Ok(TrainingTarget {
            tau,
            weight: 1.0,
            censored: false,
            bg_total: None,
        });
    }
    let mean = mean_survival
        .ok_or_else(|| Error::InvalidInput(format!("censored patient {} needs a mean survival", seq.patient_id)))?;
    let total = censored_total(c, mean)?;
    let tau = steps
        .iter()
        .map(|&d| (total - d as f64 / DAYS_PER_YEAR).max(tau_floor))
        .collect();
    Ok(TrainingTarget {
        tau,
        weight: (c / TARGET_CAP_YEARS).min(1.0),
        censored: true,
        bg_total: Some(total),
    })
}
