use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

pub const DAYS_PER_YEAR: f64 = 365.25;

/// One timestamped measurement, `day` relative to the index date.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub day: i32,
    pub feature: String,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Diagnosis {
    pub day: i32,
    pub comorbidity: String,
}

/// Raw longitudinal record of one patient, values in original units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatientRecord {
    pub id: String,
    /// Calendar date of day 0, when known (ISO 8601).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub index_date: Option<String>,
    pub static_features: BTreeMap<String, f64>,
    pub age_at_index: f64,
    pub observations: Vec<Observation>,
    pub diagnoses: Vec<Diagnosis>,
    /// Last day of follow-up: the event day when `event` is set, otherwise
    /// the censoring day.
    pub followup_end_day: i32,
    pub event: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub event_type: Option<String>,
}

impl PatientRecord {
    /// Observed time from the index date, in years.
    pub fn observed_years(&self) -> f64 {
        self.followup_end_day as f64 / DAYS_PER_YEAR
    }

    pub fn is_censored(&self) -> bool {
        !self.event
    }
}
