//! Metrics re-evaluated at every grid step of follow-up, aggregated over
//! the models of a cross-validated ensemble.

use super::calibration::{brier, hosmer_lemeshow};
use super::point::{l1_losses, parkes_serious_error};
use super::rank::{c_tau, harrell_c, horizon_auroc};
use crate::cohort::{EncodedSequence, TimeGrid, DAYS_PER_YEAR};
use crate::error::{Error, Result};
use crate::grud::{forward, GrudParameters};
use crate::mtlr::curve_point_estimates;
use crate::weibull::WeibullParams;
use rayon::prelude::*;
use std::io::Write;

/// A predicted distribution of remaining time.
#[derive(Debug, Clone, PartialEq)]
pub enum Prediction {
    Weibull(WeibullParams),
    /// Survival at increasing times, linear from (0, 1) between points and
    /// flat after the last.
    Curve {
        times: Vec<f64>,
        survival: Vec<f64>,
    },
}

impl Prediction {
    pub fn survival(&self, h: f64) -> f64 {
        match self {
            Prediction::Weibull(w) => w.survival(h.max(0.0)).unwrap_or(f64::NAN),
            Prediction::Curve { times, survival } => {
                let (mut t0, mut s0) = (0.0, 1.0);
                for (&t1, &s1) in times.iter().zip(survival) {
                    if h <= t1 {
                        return s0 + (s1 - s0) * (h - t0) / (t1 - t0);
                    }
                    (t0, s0) = (t1, s1);
                }
                s0
            }
        }
    }

    pub fn pmst(&self) -> f64 {
        match self {
            Prediction::Weibull(w) => w.median(),
            Prediction::Curve { times, survival } => curve_point_estimates(times, survival).pmst,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Metric {
    CIndex,
    CTau,
    Auroc,
    Brier,
    HosmerLemeshow,
    L1,
    L1Margin,
    Parkes,
}

impl Metric {
    pub const ALL: [Metric; 8] = [
        Metric::CIndex,
        Metric::CTau,
        Metric::Auroc,
        Metric::Brier,
        Metric::HosmerLemeshow,
        Metric::L1,
        Metric::L1Margin,
        Metric::Parkes,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Metric::CIndex => "c_index",
            Metric::CTau => "c_tau",
            Metric::Auroc => "auroc",
            Metric::Brier => "brier",
            Metric::HosmerLemeshow => "hl",
            Metric::L1 => "l1",
            Metric::L1Margin => "l1_margin",
            Metric::Parkes => "parkes",
        }
    }
}

impl std::str::FromStr for Metric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Metric::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::InvalidInput(format!("unknown metric `{s}`")))
    }
}

/// Outcome data of one evaluated patient.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepPatient {
    pub followup_end_day: i32,
    pub event: bool,
    /// Imputed total event time in years, for censored patients.
    pub bg_total: Option<f64>,
}

impl SweepPatient {
    pub fn from_sequence(seq: &EncodedSequence, bg_total: Option<f64>) -> Self {
        Self {
            followup_end_day: seq.followup_end_day,
            event: seq.event,
            bg_total,
        }
    }
}

/// Per-patient predictions of one model starting at grid step `start_step`.
#[derive(Debug, Clone)]
pub struct Trajectories {
    pub start_step: usize,
    /// Last step the model makes predictions for (inclusive), whether or
    /// not anyone is still at risk there.
    pub last_step: usize,
    pub per_patient: Vec<Vec<Prediction>>,
}

impl Trajectories {
    fn at(&self, patient: usize, step: usize) -> Option<&Prediction> {
        step.checked_sub(self.start_step)
            .and_then(|k| self.per_patient[patient].get(k))
    }

    /// One prediction per patient at a single step.
    pub fn single_step(step: usize, predictions: Vec<Prediction>) -> Self {
        Self {
            start_step: step,
            last_step: step,
            per_patient: predictions.into_iter().map(|p| vec![p]).collect(),
        }
    }
}

pub fn grud_trajectories(params: &GrudParameters, seqs: &[EncodedSequence]) -> Result<Trajectories> {
    let per_patient = seqs
        .par_iter()
        .map(|s| {
            Ok(forward(params, s, false)?
                .outputs
                .into_iter()
                .map(Prediction::Weibull)
                .collect())
        })
        .collect::<Result<_>>()?;
    Ok(Trajectories {
        start_step: 0,
        last_step: seqs.iter().map(|s| s.n_steps).max().unwrap_or(1).saturating_sub(1),
        per_patient,
    })
}

/// Models evaluated together; their spread gives the interval.
#[derive(Debug, Clone)]
pub struct ModelGroup {
    pub id: String,
    pub members: Vec<Trajectories>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepConfig {
    pub horizons: Vec<f64>,
    pub metrics: Vec<Metric>,
    /// Grid steps to evaluate; all steps when empty.
    pub steps: Vec<usize>,
    pub hl_bins: usize,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            horizons: vec![1.0, 3.0, 5.0],
            metrics: Metric::ALL.to_vec(),
            steps: vec![],
            hl_bins: 10,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalRow {
    pub timestep_day: i32,
    pub horizon_years: f64,
    pub metric: Metric,
    pub model_id: String,
    pub value: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub n_effective: usize,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct EvalReport {
    pub rows: Vec<EvalRow>,
}

/// Metric value and the number of patients it used.
pub type MetricValue = Option<(f64, usize)>;

/// Evaluates one metric on the data of one step.
pub fn evaluate_metric(
    metric: Metric,
    preds: &[&Prediction],
    times: &[f64],
    events: &[bool],
    best_guess: &[Option<f64>],
    horizon: f64,
    hl_bins: usize,
) -> MetricValue {
    let surv = || preds.iter().map(|p| p.survival(horizon)).collect::<Vec<f64>>();
    let pmst = || preds.iter().map(|p| p.pmst()).collect::<Vec<f64>>();
    match metric {
        Metric::CIndex => harrell_c(&surv(), times, events).ok().map(|c| (c.c, times.len())),
        Metric::CTau => c_tau(&surv(), times, events, horizon).ok().map(|c| (c.c, times.len())),
        Metric::Auroc => {
            let p: Vec<f64> = surv().iter().map(|s| 1.0 - s).collect();
            horizon_auroc(&p, times, events, horizon)
                .ok()
                .map(|a| (a.auc, a.positives + a.negatives))
        }
        Metric::Brier => brier(&surv(), times, events, horizon).ok().map(|b| (b.score, b.used)),
        Metric::HosmerLemeshow => hosmer_lemeshow(&surv(), times, events, horizon, hl_bins)
            .ok()
            .map(|h| (h.statistic, times.len())),
        Metric::L1 => l1_losses(&pmst(), times, events, best_guess)
            .ok()
            .and_then(|r| r.uncensored)
            .map(|u| (u.mean, u.n)),
        Metric::L1Margin => l1_losses(&pmst(), times, events, best_guess)
            .ok()
            .and_then(|r| r.margin_mean.map(|m| (m, r.n_censored))),
        Metric::Parkes => {
            let p = pmst();
            let (pu, tu): (Vec<f64>, Vec<f64>) = (0..times.len())
                .filter(|&i| events[i])
                .map(|i| (p[i], times[i]))
                .unzip();
            parkes_serious_error(&pu, &tu).ok().map(|v| (v, pu.len()))
        }
    }
}

/// Mean and normal-approximation 95% interval across models.
pub fn aggregate(values: &[f64]) -> (f64, f64, f64) {
    let k = values.len();
    if k == 0 {
        return (f64::NAN, f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / k as f64;
    if k == 1 {
        return (mean, mean, mean);
    }
    let sd = (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (k - 1) as f64).sqrt();
    let half = 1.96 * sd / (k as f64).sqrt();
    (mean, mean - half, mean + half)
}

fn step_rows(
    group: &ModelGroup,
    patients: &[SweepPatient],
    grid: &TimeGrid,
    cfg: &SweepConfig,
    step: usize,
) -> Vec<EvalRow> {
    let day = grid.day(step);
    if group.members.iter().any(|m| step < m.start_step || step > m.last_step) {
        return vec![];
    }
    let covered = |p: usize| group.members.iter().all(|m| m.at(p, step).is_some());
    let at_risk: Vec<usize> = (0..patients.len())
        .filter(|&p| patients[p].followup_end_day > day && covered(p))
        .collect();
    let times: Vec<f64> = at_risk
        .iter()
        .map(|&p| (patients[p].followup_end_day - day) as f64 / DAYS_PER_YEAR)
        .collect();
    let events: Vec<bool> = at_risk.iter().map(|&p| patients[p].event).collect();
    let elapsed = day as f64 / DAYS_PER_YEAR;
    let bg: Vec<Option<f64>> = at_risk
        .iter()
        .map(|&p| patients[p].bg_total.map(|b| (b - elapsed).max(1.0 / DAYS_PER_YEAR)))
        .collect();
    let mut rows = vec![];
    for &h in &cfg.horizons {
        for &metric in &cfg.metrics {
            let mut vals = vec![];
            let mut n_eff = 0;
            if !at_risk.is_empty() {
                for m in &group.members {
                    let preds: Vec<&Prediction> = at_risk.iter().map(|&p| m.at(p, step).unwrap()).collect();
                    if let Some((v, n)) = evaluate_metric(metric, &preds, &times, &events, &bg, h, cfg.hl_bins) {
                        if v.is_finite() {
                            vals.push(v);
                            n_eff = n_eff.max(n);
                        }
                    }
                }
            }
            let (value, ci_low, ci_high) = aggregate(&vals);
            rows.push(EvalRow {
                timestep_day: day,
                horizon_years: h,
                metric,
                model_id: group.id.clone(),
                value,
                ci_low,
                ci_high,
                n_effective: n_eff,
            });
        }
    }
    rows
}

/// Rows in (model group, step, horizon, metric) order. Steps where a group
/// has no predictions at all are omitted; steps with an empty risk set
/// produce NaN rows with `n_effective` 0.
pub fn time_sweep(
    groups: &[ModelGroup],
    patients: &[SweepPatient],
    grid: &TimeGrid,
    cfg: &SweepConfig,
) -> Result<EvalReport> {
    for g in groups {
        if g.members.is_empty() {
            return Err(Error::InvalidInput(format!("model group `{}` has no members", g.id)));
        }
        if g.members.iter().any(|m| m.per_patient.len() != patients.len()) {
            return Err(Error::InvalidInput(format!(
                "model group `{}` does not cover every patient",
                g.id
            )));
        }
    }
    let steps: Vec<usize> = if cfg.steps.is_empty() {
        (0..grid.len()).collect()
    } else {
        cfg.steps.clone()
    };
    if let Some(&bad) = steps.iter().find(|&&s| s >= grid.len()) {
        return Err(Error::InvalidInput(format!("step {bad} beyond the grid")));
    }
    let mut rows = vec![];
    for g in groups {
        let per_step: Vec<Vec<EvalRow>> = steps
            .par_iter()
            .map(|&s| step_rows(g, patients, grid, cfg, s))
            .collect();
        rows.extend(per_step.into_iter().flatten());
    }
    Ok(EvalReport { rows })
}

impl EvalReport {
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record([
            "timestep_day",
            "horizon_years",
            "metric",
            "model_id",
            "value",
            "ci_low",
            "ci_high",
            "n_effective",
        ])?;
        for r in &self.rows {
            w.write_record([
                r.timestep_day.to_string(),
                r.horizon_years.to_string(),
                r.metric.name().to_string(),
                r.model_id.clone(),
                format!("{:.10}", r.value),
                format!("{:.10}", r.ci_low),
                format!("{:.10}", r.ci_high),
                r.n_effective.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn find(&self, model_id: &str, metric: Metric, horizon: f64, day: i32) -> Option<&EvalRow> {
        self.rows.iter().find(|r| {
            r.model_id == model_id && r.metric == metric && r.horizon_years == horizon && r.timestep_day == day
        })
    }
}
