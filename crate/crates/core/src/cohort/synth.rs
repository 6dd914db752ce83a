//! Synthetic longitudinal cohort with a known Weibull generative model.
//!
//! Each continuous feature follows a latent standardised trajectory: a
//! patient intercept, a slope before the index date, a different slope
//! after it, and measurement noise. The hazard has a Weibull time shape
//! whose scale follows the current latent values and active comorbidity
//! windows, so later measurements carry information the index-date values
//! lack.

use super::features::{FeatureKind, FeatureRoster, AGE};
use super::grid::TimeGrid;
use super::record::{Diagnosis, Observation, PatientRecord, DAYS_PER_YEAR};
use crate::error::{Error, Result};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContinuousSim {
    pub name: String,
    /// Population mean and SD in raw units.
    pub mean: f64,
    pub sd: f64,
    /// Probability that a grid step carries no measurement.
    pub missing_rate: f64,
    pub pre_slope_sd: f64,
    pub post_slope_sd: f64,
    pub noise_sd: f64,
    /// Effects on log λ of the current latent value `z`:
    /// `linear * z + quadratic * z²`.
    pub linear: f64,
    pub quadratic: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComorbiditySim {
    pub name: String,
    /// Share of patients who carry the condition.
    pub prevalence: f64,
    /// Chance a carrier gets a diagnosis code in any given year.
    pub yearly_code_rate: f64,
    /// Effect on log λ while inside a diagnosis window.
    pub effect: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinarySim {
    pub name: String,
    pub prevalence: f64,
    /// Ignored for static features.
    pub missing_rate: f64,
    pub effect: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticConfig {
    pub n_patients: usize,
    pub censoring_target: f64,
    pub kappa: f64,
    /// log λ for a patient at every population mean.
    pub log_lambda_intercept: f64,
    pub age_mean: f64,
    pub age_sd: f64,
    /// Effect on log λ per decade of age above `age_mean`.
    pub age_effect_per_decade: f64,
    pub continuous: Vec<ContinuousSim>,
    pub comorbidities: Vec<ComorbiditySim>,
    pub binary: Vec<BinarySim>,
    pub parabola_feature: String,
    pub noise_feature: String,
    pub admin_censor_days: i32,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        let c = |name: &str, mean, sd, missing_rate, post_slope_sd, linear, quadratic| ContinuousSim {
            name: name.into(),
            mean,
            sd,
            missing_rate,
            pre_slope_sd: 0.15,
            post_slope_sd,
            noise_sd: 0.25,
            linear,
            quadratic,
        };
        let cm = |name: &str, prevalence, effect| ComorbiditySim {
            name: name.into(),
            prevalence,
            yearly_code_rate: 0.8,
            effect,
        };
        let b = |name: &str, prevalence, missing_rate, effect| BinarySim {
            name: name.into(),
            prevalence,
            missing_rate,
            effect,
        };
        Self {
            n_patients: 5000,
            censoring_target: 0.49,
            kappa: 1.6,
            log_lambda_intercept: 2.2,
            age_mean: 72.0,
            age_sd: 11.0,
            age_effect_per_decade: -0.2,
            continuous: vec![
                c("egfr", 22.0, 5.0, 0.7, 1.0, 0.5, 0.0),
                c("albumin", 3.6, 0.5, 0.8, 0.3, 0.2, 0.0),
                c("phosphorus", 4.2, 0.9, 0.8, 0.6, -0.2, 0.0),
                c("calcium", 9.1, 0.6, 0.8, 0.3, 0.0, 0.0),
                c("uacr", 800.0, 900.0, 0.85, 0.3, -0.1, 0.0),
                c("bicarbonate", 24.0, 3.5, 0.8, 0.3, -0.1, -0.05),
                c("sbp", 135.0, 20.0, 0.6, 0.6, 0.0, -0.4),
                c("dbp", 70.0, 12.0, 0.6, 0.3, -0.1, 0.0),
                c("bmi", 30.0, 6.0, 0.85, 0.2, 0.05, 0.0),
            ],
            comorbidities: vec![
                cm("dm", 0.5, 0.0),
                cm("chf", 0.3, -0.6),
                cm("cad", 0.35, -0.2),
                cm("cirrhosis", 0.05, -0.5),
                cm("dyslipidemia", 0.5, 0.0),
            ],
            binary: vec![
                b("smoking", 0.15, 0.9, -0.15),
                b("alcohol", 0.1, 0.9, -0.05),
                b("gender", 0.5, 0.0, 0.05),
                b("race", 0.15, 0.0, 0.0),
            ],
            parabola_feature: "sbp".into(),
            noise_feature: "calcium".into(),
            admin_censor_days: 1825,
        }
    }
}

impl SyntheticConfig {
    pub fn validate(&self, roster: &FeatureRoster) -> Result<()> {
        if self.n_patients == 0 {
            return Err(Error::InvalidInput("n_patients must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.censoring_target) {
            return Err(Error::InvalidInput("censoring_target must lie in [0, 1)".into()));
        }
        if !(self.kappa > 0.0) || !(self.age_sd >= 0.0) {
            return Err(Error::InvalidInput("kappa must be positive, age_sd nonnegative".into()));
        }
        for c in &self.continuous {
            let d = roster.index_of(&c.name)?;
            if roster.get(d).kind != FeatureKind::Continuous || c.name == AGE {
                return Err(Error::InvalidInput(format!(
                    "`{}` is not a measured continuous feature",
                    c.name
                )));
            }
            if !(0.0..=1.0).contains(&c.missing_rate) || !(c.sd > 0.0) {
                return Err(Error::InvalidInput(format!("bad simulation settings for `{}`", c.name)));
            }
        }
        for c in &self.comorbidities {
            let d = roster.index_of(&c.name)?;
            if roster.get(d).kind != FeatureKind::Comorbidity {
                return Err(Error::InvalidInput(format!("`{}` is not a comorbidity", c.name)));
            }
        }
        for b in &self.binary {
            let d = roster.index_of(&b.name)?;
            if roster.get(d).kind != FeatureKind::Binary {
                return Err(Error::InvalidInput(format!("`{}` is not a binary feature", b.name)));
            }
        }
        let find = |n: &str| self.continuous.iter().find(|c| c.name == n);
        match find(&self.parabola_feature) {
            Some(c) if c.quadratic < 0.0 => {}
            _ => {
                return Err(Error::InvalidInput(format!(
                    "parabola feature `{}` needs a negative quadratic effect",
                    self.parabola_feature
                )))
            }
        }
        match find(&self.noise_feature) {
            Some(c) if c.linear == 0.0 && c.quadratic == 0.0 => {}
            _ => {
                return Err(Error::InvalidInput(format!(
                    "noise feature `{}` must have zero effects",
                    self.noise_feature
                )))
            }
        }
        Ok(())
    }
}

/// Generating parameters of one patient, kept apart from the record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub patient_id: String,
    pub kappa: f64,
    /// log λ at the index date; the hazard follows the latent values, so
    /// λ changes over follow-up.
    pub log_lambda_at_index: f64,
    pub event_time_years: f64,
    /// Random (non-administrative) censoring time.
    pub censor_time_years: f64,
    /// Latent value at the index date and yearly slope after it, per
    /// continuous feature.
    pub latent_index: BTreeMap<String, f64>,
    pub latent_slopes: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticCohort {
    pub records: Vec<PatientRecord>,
    pub truth: Vec<GroundTruth>,
    pub censored_fraction: f64,
    pub censor_max_days: f64,
    pub tuning_iterations: usize,
    /// False when the target could not be reached.
    pub target_reached: bool,
}

struct Draft {
    record: PatientRecord,
    truth: GroundTruth,
    event_day: i32,
    censor_u: f64,
}

/// The hazard is held constant over intervals of this many days.
const HAZARD_STEP_DAYS: i32 = 30;
const MAX_TUNING_ITERATIONS: usize = 50;

fn to_day(years: f64) -> i32 {
    (years * DAYS_PER_YEAR).round().clamp(1.0, i32::MAX as f64 / 2.0) as i32
}

struct Traj {
    b: f64,
    pre: f64,
    post: f64,
}

impl Traj {
    fn at(&self, years: f64) -> f64 {
        let slope = if years < 0.0 { self.pre } else { self.post };
        self.b + slope * years
    }
}

/// Time at which the cumulative hazard of a Weibull with shape `kappa` and
/// piecewise-constant log scale reaches `target`.
fn invert_cumulative_hazard(kappa: f64, target: f64, log_lambda: impl Fn(f64) -> f64, horizon_days: i32) -> f64 {
    let mut h = 0.0;
    let mut start = 0;
    let mut last = log_lambda(0.0);
    while start < horizon_days {
        let (a, b) = (
            start as f64 / DAYS_PER_YEAR,
            (start + HAZARD_STEP_DAYS) as f64 / DAYS_PER_YEAR,
        );
        last = log_lambda(0.5 * (a + b));
        let rate = (-kappa * last).exp();
        let inc = rate * (b.powf(kappa) - a.powf(kappa));
        if h + inc >= target {
            return (a.powf(kappa) + (target - h) / rate).powf(1.0 / kappa);
        }
        h += inc;
        start += HAZARD_STEP_DAYS;
    }
    // Past the horizon the last interval's hazard continues.
    let a = start as f64 / DAYS_PER_YEAR;
    (a.powf(kappa) + (target - h) * (kappa * last).exp()).powf(1.0 / kappa)
}

fn draft_patient(cfg: &SyntheticConfig, grid: &TimeGrid, static_binary: &[bool], seed: u64, i: usize) -> Draft {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(i as u64 + 1);
    let id = format!("P{i:06}");

    let mut base = cfg.log_lambda_intercept;
    let z: f64 = rng.sample(StandardNormal);
    let age = (cfg.age_mean + cfg.age_sd * z).clamp(18.0, 100.0);
    base += cfg.age_effect_per_decade * (age - cfg.age_mean) / 10.0;

    let mut trajectories = Vec::with_capacity(cfg.continuous.len());
    let mut latent_index = BTreeMap::new();
    let mut latent_slopes = BTreeMap::new();
    for c in &cfg.continuous {
        let b: f64 = rng.sample(StandardNormal);
        let pre = c.pre_slope_sd * rng.sample::<f64, _>(StandardNormal);
        let post = c.post_slope_sd * rng.sample::<f64, _>(StandardNormal);
        latent_index.insert(c.name.clone(), b);
        latent_slopes.insert(c.name.clone(), post);
        trajectories.push(Traj { b, pre, post });
    }

    // Diagnosis schedules over the whole window.
    let mut diagnosis_schedule = Vec::with_capacity(cfg.comorbidities.len());
    for c in &cfg.comorbidities {
        let carrier = rng.random_bool(c.prevalence.clamp(0.0, 1.0));
        let mut days = Vec::new();
        if carrier {
            let mut year_start = grid.start_day();
            while year_start <= grid.end_day() {
                if rng.random_bool(c.yearly_code_rate.clamp(0.0, 1.0)) {
                    days.push(year_start + rng.random_range(0..365));
                }
                year_start += 365;
            }
        }
        diagnosis_schedule.push(days);
    }

    let mut statics = BTreeMap::new();
    let mut binary_status = Vec::with_capacity(cfg.binary.len());
    for b in &cfg.binary {
        let on = rng.random_bool(b.prevalence.clamp(0.0, 1.0));
        base += b.effect * on as u8 as f64;
        binary_status.push(on);
    }

    let log_lambda = |years: f64| {
        let mut v = base;
        for (c, tr) in cfg.continuous.iter().zip(&trajectories) {
            let z = tr.at(years);
            v += c.linear * z + c.quadratic * z * z;
        }
        let day = (years * DAYS_PER_YEAR).round() as i32;
        for (c, days) in cfg.comorbidities.iter().zip(&diagnosis_schedule) {
            if days
                .iter()
                .any(|&d| day >= d && day <= d + super::encode::COMORBIDITY_WINDOW_DAYS)
            {
                v += c.effect;
            }
        }
        v
    };
    let u: f64 = rng.random::<f64>();
    let event_time = invert_cumulative_hazard(cfg.kappa, -(1.0 - u).ln(), log_lambda, cfg.admin_censor_days);
    let log_lambda_at_index = log_lambda(0.0);
    let censor_u: f64 = rng.random::<f64>();
    let event_day = to_day(event_time);

    // Measurements are generated up to the latest possible follow-up day
    // and trimmed once censoring is fixed.
    let mut observations = Vec::new();
    for (t, &step_day) in grid.days().iter().enumerate() {
        let gap = grid.gap_days(t).max(1);
        for (c, tr) in cfg.continuous.iter().zip(&trajectories) {
            if rng.random::<f64>() < c.missing_rate {
                continue;
            }
            let day = step_day - rng.random_range(0..gap);
            let z = tr.at(day as f64 / DAYS_PER_YEAR) + c.noise_sd * rng.sample::<f64, _>(StandardNormal);
            observations.push(Observation {
                day,
                feature: c.name.clone(),
                value: c.mean + c.sd * z,
            });
        }
        for ((b, &on), &is_static) in cfg.binary.iter().zip(&binary_status).zip(static_binary) {
            if is_static {
                continue;
            }
            if rng.random::<f64>() < b.missing_rate {
                continue;
            }
            let day = step_day - rng.random_range(0..gap);
            observations.push(Observation {
                day,
                feature: b.name.clone(),
                value: on as u8 as f64,
            });
        }
    }
    for ((b, &on), &is_static) in cfg.binary.iter().zip(&binary_status).zip(static_binary) {
        if is_static {
            statics.insert(b.name.clone(), on as u8 as f64);
        }
    }
    let diagnoses = cfg
        .comorbidities
        .iter()
        .zip(diagnosis_schedule)
        .flat_map(|(c, days)| {
            days.into_iter().map(move |day| Diagnosis {
                day,
                comorbidity: c.name.clone(),
            })
        })
        .collect();

    Draft {
        record: PatientRecord {
            id: id.clone(),
            index_date: None,
            static_features: statics,
            age_at_index: age,
            observations,
            diagnoses,
            followup_end_day: event_day,
            event: true,
            event_type: None,
        },
        truth: GroundTruth {
            patient_id: id,
            kappa: cfg.kappa,
            log_lambda_at_index,
            event_time_years: event_time,
            censor_time_years: f64::INFINITY,
            latent_index,
            latent_slopes,
        },
        event_day,
        censor_u,
    }
}

fn censored_fraction(drafts: &[Draft], admin: i32, c_max: f64) -> f64 {
    let n = drafts
        .iter()
        .filter(|d| {
            let c = to_day(d.censor_u * c_max / DAYS_PER_YEAR).min(admin);
            d.event_day > c
        })
        .count();
    n as f64 / drafts.len() as f64
}

/// Draws a cohort; identical seeds give identical output.
pub fn generate_synthetic_cohort(
    cfg: &SyntheticConfig,
    roster: &FeatureRoster,
    grid: &TimeGrid,
    seed: u64,
) -> Result<SyntheticCohort> {
    cfg.validate(roster)?;
    let static_binary: Vec<bool> = cfg
        .binary
        .iter()
        .map(|b| roster.index_of(&b.name).map(|d| roster.get(d).is_static))
        .collect::<Result<_>>()?;
    let mut drafts: Vec<Draft> = (0..cfg.n_patients)
        .into_par_iter()
        .map(|i| draft_patient(cfg, grid, &static_binary, seed, i))
        .collect();

    let admin = cfg.admin_censor_days;
    // Censoring falls as c_max grows; bisect on the log scale.
    let (mut lo, mut hi) = (1.0f64, 1e7f64);
    let mut iterations = 0;
    let floor = censored_fraction(&drafts, admin, hi);
    let mut target_reached = true;
    let c_max = if floor > cfg.censoring_target {
        target_reached = false;
        hi
    } else if censored_fraction(&drafts, admin, lo) < cfg.censoring_target {
        target_reached = false;
        lo
    } else {
        while iterations < MAX_TUNING_ITERATIONS {
            iterations += 1;
            let mid = (lo * hi).sqrt();
            if censored_fraction(&drafts, admin, mid) > cfg.censoring_target {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        hi
    };
    let achieved = censored_fraction(&drafts, admin, c_max);
    if (achieved - cfg.censoring_target).abs() > 0.02 {
        target_reached = false;
    }

    for d in &mut drafts {
        let censor_years = d.censor_u * c_max / DAYS_PER_YEAR;
        let c = to_day(censor_years).min(admin);
        d.truth.censor_time_years = censor_years;
        let r = &mut d.record;
        r.event = d.event_day <= c;
        r.followup_end_day = d.event_day.min(c);
        r.event_type = r.event.then(|| "composite".to_string());
        let end = r.followup_end_day;
        r.observations.retain(|o| o.day < end);
        r.diagnoses.retain(|x| x.day < end);
    }
    let (records, truth) = drafts.into_iter().map(|d| (d.record, d.truth)).unzip();
    Ok(SyntheticCohort {
        records,
        truth,
        censored_fraction: achieved,
        censor_max_days: c_max,
        tuning_iterations: iterations,
        target_reached,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(n: usize) -> SyntheticConfig {
        SyntheticConfig {
            n_patients: n,
            ..Default::default()
        }
    }

    #[test]
    fn reproducible() {
        let roster = FeatureRoster::standard();
        let grid = TimeGrid::standard();
        let a = generate_synthetic_cohort(&small(40), &roster, &grid, 5).unwrap();
        let b = generate_synthetic_cohort(&small(40), &roster, &grid, 5).unwrap();
        assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
        let c = generate_synthetic_cohort(&small(40), &roster, &grid, 6).unwrap();
        assert_ne!(a.records, c.records);
    }

    #[test]
    fn observations_stay_before_followup_end() {
        let roster = FeatureRoster::standard();
        let grid = TimeGrid::standard();
        let c = generate_synthetic_cohort(&small(60), &roster, &grid, 1).unwrap();
        for r in &c.records {
            assert!(r.followup_end_day >= 1 && r.followup_end_day <= 1825);
            assert!(r
                .observations
                .iter()
                .all(|o| o.day < r.followup_end_day && o.day >= -1095));
            assert_eq!(r.static_features.len(), 2);
        }
    }

    #[test]
    fn rejects_noise_feature_with_effect() {
        let mut cfg = small(10);
        cfg.continuous.iter_mut().find(|c| c.name == "calcium").unwrap().linear = 0.1;
        let err = generate_synthetic_cohort(&cfg, &FeatureRoster::standard(), &TimeGrid::standard(), 0);
        assert!(err.is_err());
    }
}
