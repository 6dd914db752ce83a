//! Grid encoding of raw records into value / mask / elapsed-time matrices.

use super::features::{FeatureKind, FeatureRoster, Preprocessing, AGE};
use super::grid::TimeGrid;
use super::record::{PatientRecord, DAYS_PER_YEAR};
use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

/// Days a comorbidity stays observed after its diagnosis day.
pub const COMORBIDITY_WINDOW_DAYS: i32 = 100;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureNorm {
    pub feature: String,
    pub mean: f64,
    pub sd: f64,
    /// Mean of the preprocessed values; the imputation target once an
    /// observation has decayed.
    pub empirical_mean: f64,
}

/// Per-feature normalisation computed from training patients only.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Norms {
    pub features: Vec<FeatureNorm>,
    #[serde(default)]
    pub warnings: Vec<String>,
}

impl Norms {
    pub fn empirical_means(&self) -> Vec<f64> {
        self.features.iter().map(|f| f.empirical_mean).collect()
    }

    /// Maps a raw value into model units.
    pub fn preprocess(&self, roster: &FeatureRoster, d: usize, raw: f64) -> (f64, bool) {
        let n = &self.features[d];
        match roster.get(d).preprocessing {
            Preprocessing::ZScore => {
                if n.sd > 0.0 {
                    ((raw - n.mean) / n.sd, false)
                } else {
                    (0.0, true)
                }
            }
            Preprocessing::DivideBy100 => (raw / 100.0, false),
            Preprocessing::Identity => (raw, false),
        }
    }

    /// Inverse of [`Norms::preprocess`], for reporting.
    pub fn to_raw(&self, roster: &FeatureRoster, d: usize, value: f64) -> f64 {
        let n = &self.features[d];
        match roster.get(d).preprocessing {
            Preprocessing::ZScore => value * n.sd + n.mean,
            Preprocessing::DivideBy100 => value * 100.0,
            Preprocessing::Identity => value,
        }
    }
}

fn sample_mean_sd(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let ss: f64 = values.iter().map(|v| (v - mean) * (v - mean)).sum();
    (mean, (ss / (n - 1.0)).sqrt())
}

fn in_window(grid: &TimeGrid, day: i32) -> bool {
    day >= grid.start_day() && day <= grid.end_day()
}

/// Steps of `grid` covered by the window opened by a diagnosis on `day`.
pub(crate) fn comorbidity_steps(grid: &TimeGrid, day: i32) -> impl Iterator<Item = usize> + '_ {
    let lo = grid.days().partition_point(|&d| d < day);
    let hi = grid
        .days()
        .partition_point(|&d| d <= day.saturating_add(COMORBIDITY_WINDOW_DAYS));
    lo..hi
}

/// Sample mean and SD (n − 1) of every feature over the training records.
///
/// Features never observed get mean 0 and SD 1 with a warning. The
/// empirical mean of a comorbidity is the fraction of valid patient-steps
/// that fall inside a diagnosis window.
pub fn compute_norms(training: &[PatientRecord], roster: &FeatureRoster, grid: &TimeGrid) -> Result<Norms> {
    if training.is_empty() {
        return Err(Error::InvalidInput("norms need a nonempty training set".into()));
    }
    let mut features = Vec::with_capacity(roster.len());
    let mut warnings = Vec::new();
    for spec in roster.specs() {
        let raw: Vec<f64> = if spec.name == AGE {
            training
                .iter()
                .map(|r| r.age_at_index)
                .filter(|a| a.is_finite())
                .collect()
        } else if spec.is_static {
            training
                .iter()
                .filter_map(|r| r.static_features.get(&spec.name).copied())
                .collect()
        } else if spec.kind == FeatureKind::Comorbidity {
            let mut inside = 0usize;
            let mut total = 0usize;
            for r in training {
                let valid = grid.valid_steps(r.followup_end_day);
                let mut covered = vec![false; valid];
                for dx in r.diagnoses.iter().filter(|d| d.comorbidity == spec.name) {
                    for t in comorbidity_steps(grid, dx.day).filter(|&t| t < valid) {
                        covered[t] = true;
                    }
                }
                inside += covered.iter().filter(|&&c| c).count();
                total += valid;
            }
            let frac = if total > 0 { inside as f64 / total as f64 } else { 0.0 };
            features.push(FeatureNorm {
                feature: spec.name.clone(),
                mean: frac,
                sd: 1.0,
                empirical_mean: frac,
            });
            continue;
        } else {
            training
                .iter()
                .flat_map(|r| r.observations.iter())
                .filter(|o| o.feature == spec.name && in_window(grid, o.day))
                .map(|o| o.value)
                .collect()
        };
        if raw.is_empty() {
            warnings.push(format!("feature `{}` never observed in training data", spec.name));
            features.push(FeatureNorm {
                feature: spec.name.clone(),
                mean: 0.0,
                sd: 1.0,
                empirical_mean: 0.0,
            });
            continue;
        }
        let (mean, sd) = sample_mean_sd(&raw);
        let empirical_mean = match spec.preprocessing {
            Preprocessing::ZScore if sd > 0.0 => raw.iter().map(|v| (v - mean) / sd).sum::<f64>() / raw.len() as f64,
            Preprocessing::ZScore => 0.0,
            Preprocessing::DivideBy100 => mean / 100.0,
            Preprocessing::Identity => mean,
        };
        if sd == 0.0 && spec.preprocessing == Preprocessing::ZScore {
            warnings.push(format!("feature `{}` has zero SD in training data", spec.name));
        }
        features.push(FeatureNorm {
            feature: spec.name.clone(),
            mean,
            sd,
            empirical_mean,
        });
    }
    Ok(Norms { features, warnings })
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EncodeStats {
    /// Z-scores forced to zero because the training SD was zero.
    pub zero_sd: usize,
    /// Raw observations outside the grid window.
    pub out_of_window: usize,
}

/// A patient's record on the grid. Matrices are step-major:
/// entry `(t, d)` lives at `t * n_features + d`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncodedSequence {
    pub patient_id: String,
    pub n_features: usize,
    pub n_steps: usize,
    /// Preprocessed values, 0 where missing.
    pub x: Vec<f64>,
    /// 1 where observed.
    pub m: Vec<f64>,
    /// Days since the feature was last observed.
    pub delta_days: Vec<f64>,
    pub gap_days: Vec<f64>,
    pub step_days: Vec<i32>,
    pub empirical_means: Vec<f64>,
    /// Steps strictly before the event or censoring day.
    pub valid_steps: usize,
    pub followup_end_day: i32,
    pub event: bool,
    #[serde(default)]
    pub stats: EncodeStats,
}

impl EncodedSequence {
    #[inline]
    pub fn at(&self, t: usize, d: usize) -> usize {
        t * self.n_features + d
    }

    pub fn x_step(&self, t: usize) -> &[f64] {
        &self.x[t * self.n_features..(t + 1) * self.n_features]
    }

    pub fn m_step(&self, t: usize) -> &[f64] {
        &self.m[t * self.n_features..(t + 1) * self.n_features]
    }

    pub fn delta_step(&self, t: usize) -> &[f64] {
        &self.delta_days[t * self.n_features..(t + 1) * self.n_features]
    }

    /// Rebuilds the elapsed-time row of feature `d` from its mask.
    pub fn recompute_delta(&mut self, d: usize) {
        for t in 0..self.n_steps {
            let i = self.at(t, d);
            self.delta_days[i] = if t == 0 {
                0.0
            } else {
                let prev = self.at(t - 1, d);
                if self.m[prev] == 0.0 {
                    self.gap_days[t] + self.delta_days[prev]
                } else {
                    self.gap_days[t]
                }
            };
        }
    }

    /// Remaining time to the end of follow-up from step `t`, in years.
    pub fn remaining_years(&self, t: usize) -> f64 {
        (self.followup_end_day - self.step_days[t]) as f64 / DAYS_PER_YEAR
    }
}

/// Encodes the full grid.
pub fn encode(
    record: &PatientRecord,
    roster: &FeatureRoster,
    grid: &TimeGrid,
    norms: &Norms,
) -> Result<EncodedSequence> {
    let valid = grid.valid_steps(record.followup_end_day);
    encode_steps(record, roster, grid, norms, grid.len(), valid)
}

/// Encodes only the first `n_steps` grid steps, all of them treated as
/// valid. Used for streaming prediction on a partial record.
pub fn encode_prefix(
    record: &PatientRecord,
    roster: &FeatureRoster,
    grid: &TimeGrid,
    norms: &Norms,
    n_steps: usize,
) -> Result<EncodedSequence> {
    if n_steps == 0 || n_steps > grid.len() {
        return Err(Error::InvalidInput(format!(
            "prefix length {n_steps} outside 1..={}",
            grid.len()
        )));
    }
    encode_steps(record, roster, grid, norms, n_steps, n_steps)
}

fn encode_steps(
    record: &PatientRecord,
    roster: &FeatureRoster,
    grid: &TimeGrid,
    norms: &Norms,
    n_steps: usize,
    valid_steps: usize,
) -> Result<EncodedSequence> {
    let nf = roster.len();
    if norms.features.len() != nf {
        return Err(Error::InvalidInput(format!(
            "norms cover {} features, roster has {nf}",
            norms.features.len()
        )));
    }
    let mut stats = EncodeStats::default();
    let mut x = vec![0.0; n_steps * nf];
    let mut m = vec![0.0; n_steps * nf];

    // Latest observation within a step wins; ties keep input order.
    let mut order: Vec<usize> = (0..record.observations.len()).collect();
    order.sort_by_key(|&i| record.observations[i].day);
    for i in order {
        let obs = &record.observations[i];
        let d = roster.index_of(&obs.feature)?;
        let spec = roster.get(d);
        if spec.is_static || spec.kind == FeatureKind::Comorbidity || spec.name == AGE {
            return Err(Error::InvalidInput(format!(
                "feature `{}` cannot appear as a timestamped observation",
                spec.name
            )));
        }
        let Some(t) = grid.bucket(obs.day) else {
            stats.out_of_window += 1;
            continue;
        };
        if t >= n_steps {
            continue;
        }
        let (v, zero_sd) = norms.preprocess(roster, d, obs.value);
        stats.zero_sd += zero_sd as usize;
        x[t * nf + d] = v;
        m[t * nf + d] = 1.0;
    }

    for dx in &record.diagnoses {
        let d = roster.index_of(&dx.comorbidity)?;
        if roster.get(d).kind != FeatureKind::Comorbidity {
            return Err(Error::InvalidInput(format!(
                "`{}` is not a comorbidity feature",
                dx.comorbidity
            )));
        }
        for t in comorbidity_steps(grid, dx.day).filter(|&t| t < n_steps) {
            x[t * nf + d] = 1.0;
            m[t * nf + d] = 1.0;
        }
    }

    for (d, spec) in roster.specs().iter().enumerate() {
        if spec.name == AGE {
            if !record.age_at_index.is_finite() {
                continue;
            }
            for t in 0..n_steps {
                let age = record.age_at_index + grid.day(t) as f64 / DAYS_PER_YEAR;
                x[t * nf + d] = norms.preprocess(roster, d, age).0;
                m[t * nf + d] = 1.0;
            }
        } else if spec.is_static {
            let v = match record.static_features.get(&spec.name) {
                Some(&raw) => norms.preprocess(roster, d, raw).0,
                None => norms.features[d].empirical_mean,
            };
            for t in 0..n_steps {
                x[t * nf + d] = v;
                m[t * nf + d] = 1.0;
            }
        }
    }
    for (name, _) in &record.static_features {
        let d = roster.index_of(name)?;
        if !roster.get(d).is_static {
            return Err(Error::InvalidInput(format!("`{name}` is not a static feature")));
        }
    }

    let gap_days: Vec<f64> = (0..n_steps).map(|t| grid.gap_days(t) as f64).collect();
    let mut seq = EncodedSequence {
        patient_id: record.id.clone(),
        n_features: nf,
        n_steps,
        x,
        m,
        delta_days: vec![0.0; n_steps * nf],
        gap_days,
        step_days: grid.days()[..n_steps].to_vec(),
        empirical_means: norms.empirical_means(),
        valid_steps,
        followup_end_day: record.followup_end_day,
        event: record.event,
        stats,
    };
    for d in 0..nf {
        seq.recompute_delta(d);
    }
    Ok(seq)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cohort::record::{Diagnosis, Observation};
    use std::collections::BTreeMap;

    fn record(observations: Vec<Observation>, diagnoses: Vec<Diagnosis>) -> PatientRecord {
        let mut statics = BTreeMap::new();
        statics.insert("gender".to_string(), 1.0);
        statics.insert("race".to_string(), 0.0);
        PatientRecord {
            id: "p1".into(),
            index_date: None,
            static_features: statics,
            age_at_index: 70.0,
            observations,
            diagnoses,
            followup_end_day: 1000,
            event: true,
            event_type: None,
        }
    }

    fn obs(day: i32, feature: &str, value: f64) -> Observation {
        Observation {
            day,
            feature: feature.into(),
            value,
        }
    }

    fn setup() -> (FeatureRoster, TimeGrid, Norms) {
        let roster = FeatureRoster::standard();
        let grid = TimeGrid::standard();
        let training = vec![record(
            vec![obs(0, "sbp", 120.0), obs(30, "sbp", 140.0), obs(-40, "egfr", 20.0)],
            vec![],
        )];
        let norms = compute_norms(&training, &roster, &grid).unwrap();
        (roster, grid, norms)
    }

    #[test]
    fn norms_use_sample_sd() {
        let (roster, _, norms) = setup();
        let sbp = &norms.features[roster.index_of("sbp").unwrap()];
        assert_eq!(sbp.mean, 130.0);
        assert!((sbp.sd - 200f64.sqrt()).abs() < 1e-12);
        let egfr = &norms.features[roster.index_of("egfr").unwrap()];
        assert_eq!(egfr.sd, 0.0);
        let albumin = &norms.features[roster.index_of("albumin").unwrap()];
        assert_eq!((albumin.mean, albumin.sd), (0.0, 1.0));
        assert!(norms.warnings.iter().any(|w| w.contains("albumin")));
    }

    #[test]
    fn norms_two_observations() {
        let roster = FeatureRoster::standard();
        let grid = TimeGrid::standard();
        let training = vec![record(vec![obs(0, "bmi", 1.0), obs(15, "bmi", 3.0)], vec![])];
        let norms = compute_norms(&training, &roster, &grid).unwrap();
        let bmi = &norms.features[roster.index_of("bmi").unwrap()];
        assert_eq!(bmi.mean, 2.0);
        assert!((bmi.sd - 2f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn zscore_of_mean_is_zero() {
        let (roster, grid, norms) = setup();
        let seq = encode(&record(vec![obs(0, "sbp", 130.0)], vec![]), &roster, &grid, &norms).unwrap();
        let d = roster.index_of("sbp").unwrap();
        let t0 = grid.step_at(0).unwrap();
        for t in 0..seq.n_steps {
            let i = seq.at(t, d);
            if t == t0 {
                assert_eq!((seq.x[i], seq.m[i]), (0.0, 1.0));
            } else {
                assert_eq!((seq.x[i], seq.m[i]), (0.0, 0.0));
            }
        }
    }

    #[test]
    fn zero_sd_maps_to_zero_and_counts() {
        let (roster, grid, norms) = setup();
        let seq = encode(&record(vec![obs(0, "egfr", 55.0)], vec![]), &roster, &grid, &norms).unwrap();
        let d = roster.index_of("egfr").unwrap();
        let i = seq.at(grid.step_at(0).unwrap(), d);
        assert_eq!(seq.x[i], 0.0);
        assert_eq!(seq.m[i], 1.0);
        assert_eq!(seq.stats.zero_sd, 1);
    }

    #[test]
    fn comorbidity_window() {
        let (roster, grid, norms) = setup();
        let dx = Diagnosis {
            day: 0,
            comorbidity: "chf".into(),
        };
        let seq = encode(&record(vec![], vec![dx]), &roster, &grid, &norms).unwrap();
        let d = roster.index_of("chf").unwrap();
        for t in 0..seq.n_steps {
            let day = grid.day(t);
            let inside = (0..=100).contains(&day);
            assert_eq!(seq.m[seq.at(t, d)], inside as u8 as f64, "day {day}");
            assert_eq!(seq.x[seq.at(t, d)], inside as u8 as f64);
        }
    }

    #[test]
    fn delta_recurrence() {
        let (roster, grid, norms) = setup();
        // steps 1 and 4 of the 30-day left arm
        let s1 = grid.day(1);
        let s4 = grid.day(4);
        let seq = encode(
            &record(vec![obs(s1, "bmi", 30.0), obs(s4, "bmi", 31.0)], vec![]),
            &roster,
            &grid,
            &norms,
        )
        .unwrap();
        let d = roster.index_of("bmi").unwrap();
        let delta: Vec<f64> = (0..6).map(|t| seq.delta_days[seq.at(t, d)]).collect();
        assert_eq!(delta, vec![0.0, 30.0, 30.0, 60.0, 90.0, 30.0]);
    }

    #[test]
    fn latest_observation_in_interval_wins() {
        let (roster, grid, norms) = setup();
        let seq = encode(
            &record(vec![obs(14, "sbp", 999.0), obs(1, "sbp", 130.0)], vec![]),
            &roster,
            &grid,
            &norms,
        )
        .unwrap();
        let d = roster.index_of("sbp").unwrap();
        let i = seq.at(grid.step_at(15).unwrap(), d);
        assert!((seq.x[i] - (999.0 - 130.0) / 200f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn statics_and_age_fully_observed() {
        let (roster, grid, norms) = setup();
        let seq = encode(&record(vec![], vec![]), &roster, &grid, &norms).unwrap();
        for name in ["gender", "race", "age"] {
            let d = roster.index_of(name).unwrap();
            assert!((0..seq.n_steps).all(|t| seq.m[seq.at(t, d)] == 1.0));
        }
        let age = roster.index_of("age").unwrap();
        let t0 = grid.step_at(0).unwrap();
        assert!((seq.x[seq.at(t0, age)] - 0.70).abs() < 1e-15);
        assert_eq!(seq.valid_steps, grid.valid_steps(1000));
    }

    #[test]
    fn unknown_feature_rejected_by_name() {
        let (roster, grid, norms) = setup();
        let err = encode(&record(vec![obs(0, "ldl", 1.0)], vec![]), &roster, &grid, &norms).unwrap_err();
        assert!(matches!(err, Error::UnknownFeature(ref n) if n == "ldl"));
    }

    #[test]
    fn out_of_window_dropped() {
        let (roster, grid, norms) = setup();
        let seq = encode(&record(vec![obs(-2000, "sbp", 1.0)], vec![]), &roster, &grid, &norms).unwrap();
        assert_eq!(seq.stats.out_of_window, 1);
        let d = roster.index_of("sbp").unwrap();
        assert!((0..seq.n_steps).all(|t| seq.m[seq.at(t, d)] == 0.0));
    }

    #[test]
    fn prefix_matches_full_encoding() {
        let (roster, grid, norms) = setup();
        let r = record(vec![obs(0, "sbp", 120.0), obs(400, "sbp", 150.0)], vec![]);
        let full = encode(&r, &roster, &grid, &norms).unwrap();
        let pre = encode_prefix(&r, &roster, &grid, &norms, 50).unwrap();
        let nf = roster.len();
        assert_eq!(&full.x[..50 * nf], &pre.x[..]);
        assert_eq!(&full.m[..50 * nf], &pre.m[..]);
        assert_eq!(&full.delta_days[..50 * nf], &pre.delta_days[..]);
        assert_eq!(pre.valid_steps, 50);
    }
}
