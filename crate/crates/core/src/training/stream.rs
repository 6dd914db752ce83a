//! Prediction on partial records as new measurements arrive.

use crate::cohort::{encode_prefix, PatientRecord};
use crate::error::{Error, Result};
use crate::grud::{forward_steps, Checkpoint, GrudParameters};
use crate::weibull::WeibullParams;

#[derive(Debug, Clone, PartialEq)]
pub struct StreamPrediction {
    pub step: usize,
    pub step_day: i32,
    pub params: WeibullParams,
    /// Predicted median remaining time, in years.
    pub pmst: f64,
    /// Survival probability at each requested horizon (years from the step).
    pub survival: Vec<f64>,
}

/// A loaded checkpoint ready for repeated prediction.
#[derive(Debug, Clone)]
pub struct StreamPredictor {
    checkpoint: Checkpoint,
    params: GrudParameters,
}

/// Latest day carrying information in a partial record.
pub fn latest_day(record: &PatientRecord) -> Option<i32> {
    let o = record.observations.iter().map(|o| o.day);
    let d = record.diagnoses.iter().map(|d| d.day);
    o.chain(d).max()
}

impl StreamPredictor {
    pub fn new(checkpoint: Checkpoint) -> Result<Self> {
        let params = checkpoint.params()?;
        Ok(Self { checkpoint, params })
    }

    pub fn checkpoint(&self) -> &Checkpoint {
        &self.checkpoint
    }

    /// Outputs for every step up to and including the one containing `day`.
    pub fn trajectory(&self, record: &PatientRecord, day: i32) -> Result<Vec<WeibullParams>> {
        let ck = &self.checkpoint;
        let step = ck.grid.bucket(day).ok_or_else(|| {
            Error::InvalidInput(format!(
                "day {day} lies outside the grid window [{}, {}]",
                ck.grid.start_day(),
                ck.grid.end_day()
            ))
        })?;
        let seq = encode_prefix(record, &ck.feature_roster, &ck.grid, &ck.norms, step + 1)?;
        Ok(forward_steps(&self.params, &seq, step + 1)?.outputs)
    }

    pub fn predict_at(&self, record: &PatientRecord, day: i32, horizons: &[f64]) -> Result<StreamPrediction> {
        let outputs = self.trajectory(record, day)?;
        let step = outputs.len() - 1;
        let params = outputs[step];
        let survival = horizons.iter().map(|&h| params.survival(h)).collect::<Result<_>>()?;
        Ok(StreamPrediction {
            step,
            step_day: self.checkpoint.grid.day(step),
            params,
            pmst: params.median(),
            survival,
        })
    }
}

/// Prediction at the step holding the record's latest information.
pub fn predict_stream(checkpoint: &Checkpoint, record: &PatientRecord, horizons: &[f64]) -> Result<StreamPrediction> {
    let day = latest_day(record)
        .ok_or_else(|| Error::InvalidInput(format!("patient {} has no timestamped data", record.id)))?;
    StreamPredictor::new(checkpoint.clone())?.predict_at(record, day, horizons)
}
