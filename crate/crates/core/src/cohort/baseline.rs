//! Index-date covariates for the static baselines.
//!
//! Dynamic measurements use the observation closest to day 0 within one
//! year either side; comorbidities are present when diagnosed in the ten
//! years up to day 0. Gaps are filled with training means.

use super::features::{FeatureKind, FeatureRoster, AGE};
use super::record::PatientRecord;
use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

pub const BASELINE_WINDOW_DAYS: i32 = 365;
pub const COMORBIDITY_LOOKBACK_DAYS: i32 = 3652;

/// Raw index-date value of every roster feature, `None` when unavailable.
pub fn baseline_values(record: &PatientRecord, roster: &FeatureRoster) -> Vec<Option<f64>> {
    roster
        .specs()
        .iter()
        .map(|spec| {
            if spec.name == AGE {
                return record.age_at_index.is_finite().then_some(record.age_at_index);
            }
            if spec.is_static {
                return record.static_features.get(&spec.name).copied();
            }
            if spec.kind == FeatureKind::Comorbidity {
                let hit = record
                    .diagnoses
                    .iter()
                    .any(|d| d.comorbidity == spec.name && (-COMORBIDITY_LOOKBACK_DAYS..=0).contains(&d.day));
                return Some(hit as u8 as f64);
            }
            // Closest to day 0; on equal distance the earlier day wins.
            record
                .observations
                .iter()
                .filter(|o| o.feature == spec.name && o.day.abs() <= BASELINE_WINDOW_DAYS)
                .min_by_key(|o| (o.day.abs(), o.day))
                .map(|o| o.value)
        })
        .collect()
}

/// Column selection and imputation values learned on a training set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineDesign {
    /// Roster indices kept as columns.
    pub columns: Vec<usize>,
    pub names: Vec<String>,
    /// Imputation value for each kept column.
    pub means: Vec<f64>,
    pub dropped: Vec<String>,
}

impl BaselineDesign {
    /// Learns imputation means; columns constant across the training set
    /// are dropped since they are not identifiable next to an intercept.
    pub fn fit(training: &[PatientRecord], roster: &FeatureRoster) -> Result<Self> {
        if training.is_empty() {
            return Err(Error::InvalidInput("baseline design needs training records".into()));
        }
        let rows: Vec<Vec<Option<f64>>> = training.iter().map(|r| baseline_values(r, roster)).collect();
        let mut design = BaselineDesign {
            columns: vec![],
            names: vec![],
            means: vec![],
            dropped: vec![],
        };
        for (d, spec) in roster.specs().iter().enumerate() {
            let vals: Vec<f64> = rows.iter().filter_map(|r| r[d]).collect();
            let constant = vals.windows(2).all(|w| w[0] == w[1]);
            if vals.is_empty() || constant {
                design.dropped.push(spec.name.clone());
                continue;
            }
            design.columns.push(d);
            design.names.push(spec.name.clone());
            design.means.push(vals.iter().sum::<f64>() / vals.len() as f64);
        }
        Ok(design)
    }

    pub fn row(&self, record: &PatientRecord, roster: &FeatureRoster) -> Vec<f64> {
        let raw = baseline_values(record, roster);
        self.columns
            .iter()
            .zip(&self.means)
            .map(|(&d, &m)| raw[d].unwrap_or(m))
            .collect()
    }

    pub fn matrix(&self, records: &[PatientRecord], roster: &FeatureRoster) -> Vec<Vec<f64>> {
        records.iter().map(|r| self.row(r, roster)).collect()
    }
}
