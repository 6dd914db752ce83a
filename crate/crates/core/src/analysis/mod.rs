//! Model interpretation: permutation importance over follow-up time and
//! partial dependence of the predicted median.

use crate::cohort::encode::comorbidity_steps;
use crate::cohort::features::AGE;
use crate::cohort::{encode, EncodedSequence, FeatureKind, FeatureRoster, Norms, PatientRecord, TimeGrid};
use crate::error::{Error, Result};
use crate::grud::{forward, Checkpoint, GrudParameters};
use crate::metrics::point::median;
use crate::metrics::sweep::aggregate;
use crate::metrics::{grud_trajectories, time_sweep, Metric, ModelGroup, SweepConfig, SweepPatient};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use std::io::Write;

/// Weights plus the held-out patients encoded with the norms they were
/// trained under.
#[derive(Debug, Clone)]
pub struct EncodedModel {
    pub params: GrudParameters,
    pub norms: Norms,
    pub seqs: Vec<EncodedSequence>,
}

impl EncodedModel {
    pub fn from_checkpoint(ck: &Checkpoint, records: &[PatientRecord]) -> Result<Self> {
        let seqs = records
            .iter()
            .map(|r| encode(r, &ck.feature_roster, &ck.grid, &ck.norms))
            .collect::<Result<_>>()?;
        Ok(Self {
            params: ck.params()?,
            norms: ck.norms.clone(),
            seqs,
        })
    }
}

/// Copies feature `d`'s trajectory (values, mask, elapsed times) of patient
/// `perm[i]` into patient `i`.
pub fn permute_feature(seqs: &[EncodedSequence], d: usize, perm: &[usize]) -> Vec<EncodedSequence> {
    assert_eq!(seqs.len(), perm.len());
    seqs.iter()
        .enumerate()
        .map(|(i, s)| {
            let mut out = s.clone();
            let src = &seqs[perm[i]];
            for t in 0..out.n_steps.min(src.n_steps) {
                let (a, b) = (out.at(t, d), src.at(t, d));
                out.x[a] = src.x[b];
                out.m[a] = src.m[b];
                out.delta_days[a] = src.delta_days[b];
            }
            out
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct ImportanceRow {
    pub feature: String,
    pub timestep_day: i32,
    pub horizon_years: f64,
    pub delta_c_mean: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub replicates: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ImportanceOptions {
    pub n_perm: usize,
    pub horizons: Vec<f64>,
    /// Grid steps to evaluate; all when empty.
    pub steps: Vec<usize>,
    pub seed: u64,
}

impl Default for ImportanceOptions {
    fn default() -> Self {
        Self {
            n_perm: 5,
            horizons: vec![1.0, 3.0, 5.0],
            steps: vec![],
            seed: 0,
        }
    }
}

fn c_table(
    params: &GrudParameters,
    seqs: &[EncodedSequence],
    patients: &[SweepPatient],
    grid: &TimeGrid,
    cfg: &SweepConfig,
) -> Result<Vec<f64>> {
    let group = ModelGroup {
        id: String::new(),
        members: vec![grud_trajectories(params, seqs)?],
    };
    Ok(time_sweep(&[group], patients, grid, cfg)?
        .rows
        .iter()
        .map(|r| r.value)
        .collect())
}

/// ΔC = C(original) − C(permuted) at each step and horizon, replicated
/// `n_perm` times per model with independent permutations.
pub fn permutation_importance(
    models: &[EncodedModel],
    patients: &[SweepPatient],
    grid: &TimeGrid,
    roster: &FeatureRoster,
    feature: &str,
    opts: &ImportanceOptions,
) -> Result<Vec<ImportanceRow>> {
    let d = roster.index_of(feature)?;
    if models.is_empty()
        || models
            .iter()
            .any(|m| m.seqs.is_empty() || m.seqs.len() != patients.len())
    {
        return Err(Error::InvalidInput(
            "importance needs models and held-out patients".into(),
        ));
    }
    let cfg = SweepConfig {
        horizons: opts.horizons.clone(),
        metrics: vec![Metric::CIndex],
        steps: opts.steps.clone(),
        hl_bins: 10,
    };
    let mut replicates: Vec<Vec<f64>> = vec![];
    for (mi, model) in models.iter().enumerate() {
        let (params, seqs) = (&model.params, &model.seqs);
        let before = c_table(params, seqs, patients, grid, &cfg)?;
        let deltas: Vec<Vec<f64>> = (0..opts.n_perm)
            .into_par_iter()
            .map(|r| {
                let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
                rng.set_stream((mi * opts.n_perm + r) as u64 + 1);
                let mut perm: Vec<usize> = (0..seqs.len()).collect();
                perm.shuffle(&mut rng);
                let after = c_table(params, &permute_feature(seqs, d, &perm), patients, grid, &cfg)?;
                Ok(before.iter().zip(&after).map(|(b, a)| b - a).collect())
            })
            .collect::<Result<_>>()?;
        replicates.extend(deltas);
    }
    let steps: Vec<usize> = if opts.steps.is_empty() {
        (0..grid.len()).collect()
    } else {
        opts.steps.clone()
    };
    let mut rows = vec![];
    let mut cell = 0;
    for &s in &steps {
        for &h in &opts.horizons {
            let vals: Vec<f64> = replicates.iter().map(|r| r[cell]).filter(|v| v.is_finite()).collect();
            let (mean, lo, hi) = aggregate(&vals);
            rows.push(ImportanceRow {
                feature: feature.to_string(),
                timestep_day: grid.day(s),
                horizon_years: h,
                delta_c_mean: mean,
                ci_low: lo,
                ci_high: hi,
                replicates: vals.len(),
            });
            cell += 1;
        }
    }
    Ok(rows)
}

pub fn write_importance_csv<W: Write>(rows: &[ImportanceRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "feature",
        "timestep_day",
        "horizon_years",
        "delta_c_mean",
        "ci_low",
        "ci_high",
    ])?;
    for r in rows {
        w.write_record([
            r.feature.clone(),
            r.timestep_day.to_string(),
            r.horizon_years.to_string(),
            format!("{:.10}", r.delta_c_mean),
            format!("{:.10}", r.ci_low),
            format!("{:.10}", r.ci_high),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// One modification of a feature's trajectory.
#[derive(Debug, Clone, PartialEq)]
pub enum Shift {
    /// Added to every observed value in model units.
    Model(f64),
    /// Added to every observed value in raw units, before preprocessing.
    Raw(f64),
    /// Feature absent (comorbidity) or zero wherever observed.
    AllZero,
    /// Diagnosis, or a positive observation, once a year across the grid.
    Yearly,
    /// Static indicator set for everyone.
    AllOne,
}

impl Shift {
    pub fn label(&self) -> String {
        match self {
            Shift::Model(v) | Shift::Raw(v) => format!("{v}"),
            Shift::AllZero => "all_zero".into(),
            Shift::Yearly => "yearly".into(),
            Shift::AllOne => "all_one".into(),
        }
    }
}

/// Shifts explored for a feature: ±2 SD in half-SD steps for z-scored
/// features, ±20 years in 5-year steps for age, indicator variants
/// otherwise.
pub fn shift_grid(roster: &FeatureRoster, d: usize) -> Vec<Shift> {
    let spec = roster.get(d);
    if spec.name == AGE {
        return (-4..=4).map(|k| Shift::Raw(5.0 * k as f64)).collect();
    }
    match spec.kind {
        FeatureKind::Continuous => (-4..=4).map(|k| Shift::Model(0.5 * k as f64)).collect(),
        _ if spec.is_static => vec![Shift::AllZero, Shift::AllOne],
        _ => vec![Shift::AllZero, Shift::Yearly],
    }
}

/// Returns a copy of `seq` with feature `d` modified.
pub fn apply_shift(
    seq: &EncodedSequence,
    d: usize,
    shift: &Shift,
    roster: &FeatureRoster,
    norms: &Norms,
    grid: &TimeGrid,
) -> EncodedSequence {
    let mut out = seq.clone();
    let idx: Vec<usize> = (0..out.n_steps).map(|t| out.at(t, d)).collect();
    let kind = roster.get(d).kind;
    match shift {
        Shift::Model(v) => idx.iter().filter(|&&i| out.m[i] == 1.0).for_each(|&i| out.x[i] += v),
        Shift::Raw(v) => {
            for &i in &idx {
                if out.m[i] == 1.0 {
                    let raw = norms.to_raw(roster, d, out.x[i]) + v;
                    out.x[i] = norms.preprocess(roster, d, raw).0;
                }
            }
        }
        Shift::AllOne => idx.iter().for_each(|&i| {
            out.x[i] = 1.0;
            out.m[i] = 1.0;
        }),
        Shift::AllZero => {
            for &i in &idx {
                out.x[i] = 0.0;
                if kind == FeatureKind::Comorbidity {
                    out.m[i] = 0.0;
                }
            }
            out.recompute_delta(d);
        }
        Shift::Yearly => {
            for &i in &idx {
                out.x[i] = 0.0;
                out.m[i] = 0.0;
            }
            let mut day = grid.start_day();
            while day <= grid.end_day() {
                let steps: Vec<usize> = if kind == FeatureKind::Comorbidity {
                    comorbidity_steps(grid, day).collect()
                } else {
                    grid.bucket(day).into_iter().collect()
                };
                for t in steps.into_iter().filter(|&t| t < out.n_steps) {
                    let i = out.at(t, d);
                    out.x[i] = 1.0;
                    out.m[i] = 1.0;
                }
                day += 365;
            }
            out.recompute_delta(d);
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct PdpRow {
    pub feature: String,
    pub shift: String,
    pub raw_mean_after_shift: f64,
    pub followup_day: i32,
    pub pmst_median: f64,
    pub pmst_mean: f64,
}

/// Median and mean predicted median across at-risk patients at each
/// requested grid step, averaged over models, for every shift.
pub fn partial_dependence(
    models: &[EncodedModel],
    roster: &FeatureRoster,
    grid: &TimeGrid,
    feature: &str,
    steps: &[usize],
) -> Result<Vec<PdpRow>> {
    let d = roster.index_of(feature)?;
    if models.is_empty() || models.iter().any(|m| m.seqs.is_empty()) {
        return Err(Error::InvalidInput(
            "partial dependence needs models and held-out patients".into(),
        ));
    }
    let mut rows = vec![];
    for shift in shift_grid(roster, d) {
        let (mut raw_sum, mut raw_n) = (0.0, 0usize);
        let mut outputs: Vec<Vec<Vec<f64>>> = vec![];
        for m in models {
            let shifted: Vec<EncodedSequence> = m
                .seqs
                .iter()
                .map(|s| apply_shift(s, d, &shift, roster, &m.norms, grid))
                .collect();
            for s in &shifted {
                for t in 0..s.valid_steps {
                    let i = s.at(t, d);
                    if s.m[i] == 1.0 {
                        raw_sum += m.norms.to_raw(roster, d, s.x[i]);
                        raw_n += 1;
                    }
                }
            }
            outputs.push(
                shifted
                    .par_iter()
                    .map(|s| {
                        Ok(forward(&m.params, s, false)?
                            .outputs
                            .iter()
                            .map(|w| w.median())
                            .collect())
                    })
                    .collect::<Result<Vec<Vec<f64>>>>()?,
            );
        }
        let raw_mean = if raw_n == 0 { f64::NAN } else { raw_sum / raw_n as f64 };
        for &t in steps {
            let (mut med, mut mean, mut used) = (0.0, 0.0, 0usize);
            for per_model in &outputs {
                let mut v: Vec<f64> = per_model.iter().filter_map(|o| o.get(t).copied()).collect();
                if v.is_empty() {
                    continue;
                }
                mean += v.iter().sum::<f64>() / v.len() as f64;
                med += median(&mut v);
                used += 1;
            }
            let (pmst_median, pmst_mean) = if used == 0 {
                (f64::NAN, f64::NAN)
            } else {
                (med / used as f64, mean / used as f64)
            };
            rows.push(PdpRow {
                feature: feature.to_string(),
                shift: shift.label(),
                raw_mean_after_shift: raw_mean,
                followup_day: grid.day(t),
                pmst_median,
                pmst_mean,
            });
        }
    }
    Ok(rows)
}

pub fn write_pdp_csv<W: Write>(rows: &[PdpRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "feature",
        "shift",
        "raw_mean_after_shift",
        "followup_day",
        "pmst_median",
        "pmst_mean",
    ])?;
    for r in rows {
        w.write_record([
            r.feature.clone(),
            r.shift.clone(),
            format!("{:.10}", r.raw_mean_after_shift),
            r.followup_day.to_string(),
            format!("{:.10}", r.pmst_median),
            format!("{:.10}", r.pmst_mean),
        ])?;
    }
    w.flush()?;
    Ok(())
}
