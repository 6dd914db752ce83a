//! One PASS/FAIL line per acceptance criterion; exits nonzero if any fails.

#[path = "../../core/tests/common/mod.rs"]
mod common;

use common::{
    brute_auroc, brute_censor_km_left, brute_harrell, brute_km, central_difference, integrate, integrate_to_infinity,
    random_params, random_sequence, rel_err,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Exp1, StandardNormal};
use std::io::Write;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::process::{Command, Stdio};
use std::time::{Duration, Instant};
use survgru::aft::{self, AftOptions};
use survgru::analysis::{partial_dependence, permutation_importance, EncodedModel, ImportanceOptions};
use survgru::cohort::split::assign_all;
use survgru::cohort::{
    encode, generate_synthetic_cohort, Assignment, EncodedSequence, FeatureRoster, PatientRecord, SyntheticConfig,
    TimeGrid,
};
use survgru::grud::{backward, forward, GrudParameters, HeadMode, Tensor};
use survgru::metrics::{
    brier, c_tau, grud_trajectories, harrell_c, horizon_auroc, hosmer_lemeshow, parkes_serious_error, time_sweep,
    Metric, ModelGroup, Prediction, SweepConfig, SweepPatient, Trajectories,
};
use survgru::mtlr::{MtlrModel, MtlrOptions};
use survgru::training::{cv, train_model, EarlyStopMode, TrainConfig};
use survgru::weibull::{composite_loss, composite_loss_grad, kappa_where_mode_equals_median};
use survgru::WeibullParams;

type Check = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

struct Harness {
    failed: usize,
}

impl Harness {
    fn run(&mut self, n: usize, name: &str, budget: Duration, f: impl FnOnce() -> Check) {
        let t0 = Instant::now();
        let result = match catch_unwind(AssertUnwindSafe(f)) {
            Ok(r) => r,
            Err(p) => Err(p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into())),
        };
        let took = t0.elapsed();
        let result = match result {
            Ok(d) if took > budget => Err(format!("{d}; over the {budget:?} budget")),
            r => r,
        };
        let (tag, detail) = match &result {
            Ok(d) => ("PASS", d),
            Err(d) => ("FAIL", d),
        };
        if result.is_err() {
            self.failed += 1;
        }
        println!("{tag} {n:>2} {name} ({:.1}s): {detail}", took.as_secs_f64());
        let _ = std::io::stdout().flush();
    }
}

fn w(k: f64, l: f64) -> WeibullParams {
    WeibullParams::new(k, l).unwrap()
}

const KAPPAS: [f64; 5] = [0.5, 1.0, 2.0, 3.2589, 8.0];
const LAMBDAS: [f64; 4] = [0.5, 1.0, 4.24, 10.0];

fn weibull_identities() -> Check {
    let (mut quad, mut med, mut prod) = (0.0f64, 0.0f64, 0.0f64);
    for k in KAPPAS {
        for l in LAMBDAS {
            let p = w(k, l);
            let head = integrate(&|t| if t == 0.0 { 0.0 } else { p.pdf(t).unwrap() }, 0.0, l, 1e-11);
            let tail = integrate_to_infinity(&|t| p.pdf(t).unwrap(), l, 1e-11);
            quad = quad.max((head + tail - 1.0).abs());
            med = med.max((p.survival(p.median()).unwrap() - 0.5).abs());
            for t in [0.01, 0.3, 1.0, 2.5, 7.0] {
                let lhs = p.pdf(t).unwrap();
                if lhs > 1e-290 {
                    prod = prod.max(rel_err(lhs, p.hazard(t).unwrap() * p.survival(t).unwrap(), 0.0));
                }
            }
        }
    }
    ensure(quad < 1e-6 && med < 1e-12 && prod < 1e-12, || {
        format!("quadrature {quad:e}, median {med:e}, pdf/hazard·S {prod:e}")
    })?;
    Ok(format!(
        "max |∫pdf−1| {quad:.1e}, |S(median)−½| {med:.1e}, pdf vs h·S rel {prod:.1e}"
    ))
}

fn mode_median_crossing() -> Check {
    let k = kappa_where_mode_equals_median();
    let m = w(2.0, 4.24).mode().unwrap();
    ensure((k - 3.2589).abs() < 1e-3 && (m - 3.0).abs() < 0.01, || {
        format!("κ* {k:.5}, mode {m:.5}")
    })?;
    Ok(format!("κ* = {k:.5}, mode(2, 4.24) = {m:.5}"))
}

fn best_guess() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    let mut closed = 0.0f64;
    for _ in 0..50 {
        let l = rng.random_range(0.2..10.0);
        let c = rng.random_range(0.0..8.0);
        closed = closed.max((w(1.0, l).best_guess(c).unwrap() - (c + l)).abs() / (c + l));
    }
    let mut general = 0.0f64;
    for _ in 0..50 {
        let p = w(rng.random_range(0.5..5.0), rng.random_range(0.3..8.0));
        let c = rng.random_range(0.0..2.0 * p.lambda());
        let oracle = c + integrate_to_infinity(&|t| p.survival(t).unwrap(), c, 1e-12) / p.survival(c).unwrap();
        general = general.max((p.best_guess(c).unwrap() - oracle).abs());
    }
    ensure(closed < 1e-12 && general < 1e-6, || {
        format!("κ=1 rel {closed:e}, general abs {general:e}")
    })?;
    Ok(format!("κ=1 rel err {closed:.1e}, quadrature abs err {general:.1e}"))
}

fn grud_max_rel_err(steps: usize, seed: u64, coords: usize) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (nf, nh) = (4, 6);
    let seq = random_sequence(&mut rng, nf, steps);
    let p = random_params(&mut rng, nf, nh, HeadMode::Free);
    let taus: Vec<f64> = (0..steps)
        .map(|t| 3.0 - 0.05 * t as f64 + rng.random_range(0.0..0.5))
        .collect();
    let loss = |q: &GrudParameters| -> f64 {
        let tr = forward(q, &seq, false).unwrap();
        tr.outputs
            .iter()
            .zip(&taus)
            .map(|(o, &tau)| composite_loss(o, tau).unwrap().total)
            .sum()
    };
    let trace = forward(&p, &seq, true).unwrap();
    let (mut dk, mut dl) = (vec![], vec![]);
    for (o, &tau) in trace.outputs.iter().zip(&taus) {
        let g = composite_loss_grad(o, tau).unwrap();
        dk.push(g.d_kappa);
        dl.push(g.d_lambda);
    }
    let mut grad = vec![0.0; p.values.len()];
    backward(&p, &seq, trace.cache.as_ref().unwrap(), &dk, &dl, &mut grad);
    let mut probes: Vec<usize> = Tensor::ALL.iter().map(|&t| p.layout.range(t).start).collect();
    while probes.len() < coords {
        probes.push(rng.random_range(0..p.values.len()));
    }
    let mut worst = 0.0f64;
    for i in probes {
        let mut q = p.clone();
        let fd = central_difference(
            &mut |v| {
                q.values[i] = v;
                loss(&q)
            },
            p.values[i],
            1e-6,
        );
        worst = worst.max(rel_err(grad[i], fd, 1e-6));
    }
    worst
}

/// ln τ = β₀ + x′β + σ ln E, E ~ Exp(1), censored by Uniform(0, c_max) tuned
/// to the requested share.
fn aft_sample(
    seed: u64,
    n: usize,
    intercept: f64,
    beta: &[f64],
    sigma: f64,
    censored_share: f64,
) -> (Vec<Vec<f64>>, Vec<f64>, Vec<bool>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let xs: Vec<Vec<f64>> = (0..n)
        .map(|_| beta.iter().map(|_| rng.sample::<f64, _>(StandardNormal)).collect())
        .collect();
    let t: Vec<f64> = xs
        .iter()
        .map(|x| {
            let lin = intercept + x.iter().zip(beta).map(|(a, b)| a * b).sum::<f64>();
            let e: f64 = rng.sample(Exp1);
            (lin + sigma * e.ln()).exp()
        })
        .collect();
    let u: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
    let share = |cmax: f64| t.iter().zip(&u).filter(|(&ti, &ui)| ui * cmax < ti).count() as f64 / n as f64;
    let (mut lo, mut hi): (f64, f64) = (1e-3, 1e4);
    for _ in 0..200 {
        let mid = (lo * hi).sqrt();
        if share(mid) > censored_share {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let times = t.iter().zip(&u).map(|(&ti, &ui)| ti.min(ui * hi)).collect();
    let events = t.iter().zip(&u).map(|(&ti, &ui)| ti <= ui * hi).collect();
    (xs, times, events)
}

fn gradient_suites() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let mut loss_err = 0.0f64;
    for _ in 0..100 {
        let k = rng.random_range(0.3..10.0);
        let l = rng.random_range(0.3..10.0);
        let t = rng.random_range(0.05..8.0);
        let g = composite_loss_grad(&w(k, l), t).unwrap();
        let dk = central_difference(&mut |x| composite_loss(&w(x, l), t).unwrap().total, k, 1e-6);
        let dl = central_difference(&mut |x| composite_loss(&w(k, x), t).unwrap().total, l, 1e-6);
        loss_err = loss_err
            .max(rel_err(g.d_kappa, dk, 1e-3))
            .max(rel_err(g.d_lambda, dl, 1e-3));
    }

    let one_step = (0..5).map(|s| grud_max_rel_err(1, s, 30)).fold(0.0, f64::max);
    let bptt = (10..15).map(|s| grud_max_rel_err(10, s, 40)).fold(0.0, f64::max);

    let (xs, times, events) = aft_sample(9, 40, 0.3, &[0.5, -0.3, 0.2], 0.8, 0.3);
    let mut aft_err = 0.0f64;
    for _ in 0..20 {
        let theta: Vec<f64> = (0..5).map(|_| rng.random_range(-0.8..0.8)).collect();
        let (_, g, _) = aft::loglik_derivatives(&theta, &xs, &times, &events);
        for (i, gi) in g.iter().enumerate() {
            let mut th = theta.clone();
            let fd = central_difference(
                &mut |v| {
                    th[i] = v;
                    aft::loglik(&th, &xs, &times, &events)
                },
                theta[i],
                1e-5,
            );
            aft_err = aft_err.max(rel_err(*gi, fd, 1e-3));
        }
    }

    let mut mtlr_err = 0.0f64;
    let (nf, m) = (3, 5);
    let mxs: Vec<Vec<f64>> = (0..50)
        .map(|_| (0..nf).map(|_| rng.random_range(-1.0..1.0)).collect())
        .collect();
    let mtimes: Vec<f64> = mxs
        .iter()
        .map(|x| (0.1 + rng.random_range(0.0..6.0) * (1.0 + 0.3 * x[0])).max(0.05))
        .collect();
    let mevents: Vec<bool> = (0..50).map(|_| rng.random_bool(0.7)).collect();
    for _ in 0..5 {
        let mut model = MtlrModel::zeros((1..=m).map(|k| k as f64).collect(), nf).unwrap();
        model
            .theta
            .iter_mut()
            .flatten()
            .for_each(|v| *v = rng.random_range(-1.0..1.0));
        model.bias.iter_mut().for_each(|v| *v = rng.random_range(-1.0..1.0));
        model.l2_strength = 0.7;
        let g = model.objective_grad(&mxs, &mtimes, &mevents);
        for (i, gi) in g.iter().enumerate() {
            let set = |mm: &mut MtlrModel, v: f64| {
                if i < m * nf {
                    mm.theta[i / nf][i % nf] = v;
                } else {
                    mm.bias[i - m * nf] = v;
                }
            };
            let x0 = if i < m * nf {
                model.theta[i / nf][i % nf]
            } else {
                model.bias[i - m * nf]
            };
            let mut mm = model.clone();
            let fd = central_difference(
                &mut |v| {
                    set(&mut mm, v);
                    mm.objective(&mxs, &mtimes, &mevents)
                },
                x0,
                1e-5,
            );
            mtlr_err = mtlr_err.max(rel_err(*gi, fd, 1e-3));
        }
    }
    let all = [loss_err, one_step, bptt, aft_err, mtlr_err];
    let detail = format!(
        "max rel err: loss {loss_err:.1e}, one step {one_step:.1e}, BPTT {bptt:.1e}, AFT {aft_err:.1e}, MTLR {mtlr_err:.1e}"
    );
    ensure(all.iter().all(|&e| e < 1e-4), || detail.clone())?;
    Ok(detail)
}

struct Sample {
    scores: Vec<f64>,
    times: Vec<f64>,
    events: Vec<bool>,
}

fn sample(seed: u64, n: usize, coarse: bool) -> Sample {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut s = Sample {
        scores: vec![],
        times: vec![],
        events: vec![],
    };
    for _ in 0..n {
        let (t, sc) = if coarse {
            (
                rng.random_range(1..40) as f64 / 8.0,
                rng.random_range(0..25) as f64 / 24.0,
            )
        } else {
            (rng.random_range(0.01..5.0), rng.random_range(0.0..1.0))
        };
        s.times.push(t);
        s.scores.push(sc);
        s.events.push(rng.random_bool(0.6));
    }
    s
}

fn metric_oracles() -> Check {
    let mut brier_err = 0.0f64;
    let mut cohorts = 0;
    for seed in 0..20 {
        for coarse in [false, true] {
            let s = sample(1000 + seed, 200, coarse);
            let (num, den) = brute_harrell(&s.scores, &s.times, &s.events);
            let c = harrell_c(&s.scores, &s.times, &s.events).unwrap();
            ensure(c.c == num / den as f64, || format!("harrell seed {seed}"))?;

            let tau = 2.0;
            let (mut tn, mut td) = (0.0, 0u64);
            for i in 0..s.times.len() {
                if !(s.events[i] && s.times[i] <= tau) {
                    continue;
                }
                for j in 0..s.times.len() {
                    if s.times[i] < s.times[j].min(tau) {
                        td += 1;
                        tn += if s.scores[i] < s.scores[j] {
                            1.0
                        } else if s.scores[i] == s.scores[j] {
                            0.5
                        } else {
                            0.0
                        };
                    }
                }
            }
            let ct = c_tau(&s.scores, &s.times, &s.events, tau).unwrap();
            ensure(ct.c == tn / td as f64, || format!("c_tau seed {seed}"))?;

            let (mut pos, mut neg) = (vec![], vec![]);
            for i in 0..s.times.len() {
                if s.times[i] > tau {
                    neg.push(s.scores[i]);
                } else if s.events[i] {
                    pos.push(s.scores[i]);
                }
            }
            let a = horizon_auroc(&s.scores, &s.times, &s.events, tau).unwrap();
            ensure(a.auc == brute_auroc(&pos, &neg), || format!("auroc seed {seed}"))?;

            let g_star = brute_censor_km_left(&s.times, &s.events, tau.next_up());
            let mut total = 0.0;
            for i in 0..s.times.len() {
                let p = s.scores[i];
                if s.times[i] <= tau {
                    if s.events[i] {
                        total += p * p / brute_censor_km_left(&s.times, &s.events, s.times[i]);
                    }
                } else {
                    total += (1.0 - p).powi(2) / g_star;
                }
            }
            let b = brier(&s.scores, &s.times, &s.events, tau).unwrap();
            brier_err = brier_err.max(rel_err(b.score, total / s.times.len() as f64, 0.0));
            cohorts += 1;
        }
    }
    ensure(brier_err < 1e-12, || format!("brier rel err {brier_err:e}"))?;
    Ok(format!(
        "{cohorts} cohorts: rank metrics exact, brier rel err {brier_err:.1e}"
    ))
}

fn calibration_fixtures() -> Check {
    let times: Vec<f64> = (0..20)
        .map(|i| {
            if i < 10 {
                0.2 + 0.15 * i as f64
            } else {
                0.5 + 0.4 * i as f64
            }
        })
        .collect();
    let events: Vec<bool> = (0..20).map(|i| i % 3 != 1).collect();
    let tau = 3.0;
    let km_a = brute_km(&times[..10], &events[..10], tau);
    let km_b = brute_km(&times[10..], &events[10..], tau);
    let surv: Vec<f64> = (0..20).map(|i| if i < 10 { km_a } else { km_b }).collect();
    let hl = hosmer_lemeshow(&surv, &times, &events, tau, 2).unwrap().statistic;

    let s = sample(9, 300, false);
    let all = vec![true; s.times.len()];
    let half = vec![0.5; s.times.len()];
    let b = brier(&half, &s.times, &all, 2.0).unwrap().score;
    let parkes = parkes_serious_error(&s.times, &s.times).unwrap();
    ensure(hl.abs() < 1e-12 && (b - 0.25).abs() < 1e-12 && parkes == 0.0, || {
        format!("HL {hl:e}, Brier {b}, Parkes {parkes}")
    })?;
    Ok(format!("HL {hl:.1e}, Brier(½) {b}, Parkes(perfect) {parkes}"))
}

fn aft_recovery() -> Check {
    let beta = [0.5, -0.3];
    let sigma = 0.7;
    let names: Vec<String> = vec!["x0".into(), "x1".into()];
    let mut worst = 0.0f64;
    for seed in [1, 2, 3] {
        let (xs, times, events) = aft_sample(seed, 5000, 1.0, &beta, sigma, 0.3);
        let m = aft::fit(&xs, &times, &events, &names, &AftOptions::default()).map_err(|e| e.to_string())?;
        for (b, want) in m.beta.iter().zip(beta) {
            worst = worst.max((b - want).abs());
        }
        worst = worst.max((m.sigma - sigma).abs());
    }
    ensure(worst < 0.05, || format!("max |error| {worst:.4}"))?;
    Ok(format!("3 seeds, max |β̂−β|, |σ̂−σ| = {worst:.4}"))
}

fn overfit() -> Check {
    let roster = FeatureRoster::standard();
    let grid = TimeGrid::standard();
    let cfg = SyntheticConfig {
        n_patients: 400,
        ..Default::default()
    };
    let cohort = generate_synthetic_cohort(&cfg, &roster, &grid, 8).map_err(|e| e.to_string())?;
    let pts: Vec<PatientRecord> = cohort.records.into_iter().filter(|r| r.event).take(64).collect();
    ensure(pts.len() == 64, || "fewer than 64 events".into())?;
    let tc = TrainConfig {
        epochs: 200,
        batch_size: 8,
        seed: 8,
        early_stop_mode: EarlyStopMode::Off,
        ..Default::default()
    };
    let prep = cv::prepare_fold(&pts, &[], &roster, &grid, &tc, &MtlrOptions::default()).map_err(|e| e.to_string())?;
    let out = train_model(&prep.train, &[], &tc, 1).map_err(|e| e.to_string())?;
    let first = out.curve[0].train_loss;
    let last = out.curve.last().unwrap().train_loss;
    let idx = grid.step_at(0).unwrap();
    let (mut pmst, mut tau, mut err) = (vec![], vec![], vec![]);
    for ex in &prep.train {
        let o = forward(&out.params, &ex.seq, false).map_err(|e| e.to_string())?.outputs[idx];
        let t = ex.target.tau[idx];
        pmst.push(o.median());
        tau.push(t);
        err.push((o.median() - t).abs());
    }
    let c = harrell_c(&pmst, &tau, &vec![true; tau.len()]).unwrap().c;
    let med = survgru::metrics::point::median(&mut err);
    let ratio = last / first;
    let detail = format!(
        "loss {first:.3} → {last:.3} (ratio {ratio:.3}), training C at index {c:.4}, median |PMST−τ| {med:.3} y"
    );
    ensure(ratio < 0.25 && c >= 0.95 && med < 0.3, || detail.clone())?;
    Ok(detail)
}

struct SeedRun {
    model: EncodedModel,
    holdout: Vec<SweepPatient>,
}

fn trend_seed(seed: u64) -> Result<(String, bool, SeedRun), String> {
    let e = |x: survgru::Error| x.to_string();
    let roster = FeatureRoster::standard();
    let grid = TimeGrid::standard();
    let cfg = SyntheticConfig {
        n_patients: 5000,
        ..Default::default()
    };
    let cohort = generate_synthetic_cohort(&cfg, &roster, &grid, seed).map_err(e)?;
    let folds = assign_all(&cohort.records, 1000, 5, seed).map_err(e)?;
    let pick =
        |a: Assignment| -> Vec<PatientRecord> { folds.filter(&cohort.records, a).into_iter().cloned().collect() };
    let train: Vec<PatientRecord> = (1..=3).flat_map(|f| pick(Assignment::Fold(f))).collect();
    let val = pick(Assignment::Fold(4));
    let hold = pick(Assignment::Holdout);
    let tc = TrainConfig {
        epochs: 40,
        batch_size: 100,
        seed,
        ..Default::default()
    };
    let prep = cv::prepare_fold(&train, &val, &roster, &grid, &tc, &MtlrOptions::default()).map_err(e)?;
    let out = train_model(&prep.train, &prep.validation, &tc, 1).map_err(e)?;

    let times: Vec<f64> = train.iter().map(|r| r.observed_years()).collect();
    let events: Vec<bool> = train.iter().map(|r| r.event).collect();
    let design = &prep.design;
    let aft_model = aft::fit(
        &design.matrix(&train, &roster),
        &times,
        &events,
        &design.names,
        &AftOptions::default(),
    )
    .map_err(e)?;

    let seqs: Vec<EncodedSequence> = hold
        .iter()
        .map(|r| encode(r, &roster, &grid, &prep.norms))
        .collect::<survgru::Result<_>>()
        .map_err(e)?;
    let patients: Vec<SweepPatient> = seqs.iter().map(|s| SweepPatient::from_sequence(s, None)).collect();
    let idx = grid.step_at(0).unwrap();
    let aft_preds = design
        .matrix(&hold, &roster)
        .iter()
        .map(|x| aft_model.predict(x).map(Prediction::Weibull))
        .collect::<survgru::Result<Vec<_>>>()
        .map_err(e)?;
    let groups = [
        ModelGroup {
            id: "grud".into(),
            members: vec![grud_trajectories(&out.params, &seqs).map_err(e)?],
        },
        ModelGroup {
            id: "aft".into(),
            members: vec![Trajectories::single_step(idx, aft_preds)],
        },
    ];
    let horizons = [1.0, 3.0, 5.0];
    let report = time_sweep(
        &groups,
        &patients,
        &grid,
        &SweepConfig {
            horizons: horizons.to_vec(),
            metrics: vec![Metric::CIndex],
            steps: vec![],
            hl_bins: 10,
        },
    )
    .map_err(e)?;
    let follow: Vec<usize> = (0..grid.len()).filter(|&s| grid.day(s) >= 0).collect();
    let last_third = &follow[follow.len() - follow.len() / 3..];
    let mut parts = vec![];
    let mut pass = false;
    for h in horizons {
        let at = |id: &str, s: usize| report.find(id, Metric::CIndex, h, grid.day(s)).map(|r| r.value);
        let vals: Vec<f64> = last_third
            .iter()
            .filter_map(|&s| at("grud", s))
            .filter(|v| v.is_finite())
            .collect();
        let late = vals.iter().sum::<f64>() / vals.len() as f64;
        let index = at("grud", idx).unwrap_or(f64::NAN);
        let static_c = at("aft", idx).unwrap_or(f64::NAN);
        if h == 1.0 {
            pass = late - index >= 0.02 && late - static_c >= 0.02;
        }
        parts.push(format!("{h}y late {late:.3} index {index:.3} aft {static_c:.3}"));
    }
    let run = SeedRun {
        model: EncodedModel {
            params: out.params,
            norms: prep.norms,
            seqs,
        },
        holdout: patients,
    };
    Ok((parts.join(", "), pass, run))
}

fn trend(runs: &mut Vec<SeedRun>) -> Check {
    let mut passed = 0;
    let mut lines = vec![];
    for seed in [1, 2, 3] {
        let (detail, ok, run) = trend_seed(seed)?;
        passed += ok as usize;
        lines.push(format!("seed {seed} {} [{detail}]", if ok { "ok" } else { "no" }));
        runs.push(run);
    }
    let detail = format!("{passed}/3 seeds at the 1y horizon; {}", lines.join("; "));
    ensure(passed >= 2, || detail.clone())?;
    Ok(detail)
}

fn explainability(run: Option<&SeedRun>) -> Check {
    let run = run.ok_or("no trained model from the trend check")?;
    let e = |x: survgru::Error| x.to_string();
    let roster = FeatureRoster::standard();
    let grid = TimeGrid::standard();
    let cfg = SyntheticConfig::default();
    let idx = grid.step_at(0).unwrap();
    let opts = ImportanceOptions {
        n_perm: 25,
        horizons: vec![1.0, 3.0, 5.0],
        steps: vec![idx],
        seed: 1,
    };
    let models = [run.model.clone()];
    let rows = permutation_importance(&models, &run.holdout, &grid, &roster, &cfg.noise_feature, &opts).map_err(e)?;
    let noise = rows.iter().map(|r| r.delta_c_mean.abs()).fold(0.0, f64::max);

    let pdp = partial_dependence(&models, &roster, &grid, &cfg.parabola_feature, &[idx]).map_err(e)?;
    let curve: Vec<(&str, f64)> = pdp.iter().map(|r| (r.shift.as_str(), r.pmst_median)).collect();
    let best = (0..curve.len())
        .max_by(|&a, &b| curve[a].1.total_cmp(&curve[b].1))
        .unwrap();
    let interior = best > 0 && best + 1 < curve.len();
    let (left, right) = if interior {
        (curve[best].1 - curve[best - 1].1, curve[best].1 - curve[best + 1].1)
    } else {
        (0.0, 0.0)
    };
    let detail = format!(
        "noise `{}` max |mean ΔC| {noise:.4}; `{}` PDP peak {:.3} y at shift {}, drops {left:.3}/{right:.3} y",
        cfg.noise_feature, cfg.parabola_feature, curve[best].1, curve[best].0
    );
    ensure(noise < 0.01 && interior && left > 0.05 && right > 0.05, || {
        detail.clone()
    })?;
    Ok(detail)
}

fn cli(dir: &Path, args: &[&str], stdin: Option<&str>) -> Result<Vec<u8>, String> {
    let mut child = Command::new(env!("CARGO_BIN_EXE_survgru"))
        .current_dir(dir)
        .args(args)
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .spawn()
        .map_err(|e| e.to_string())?;
    child
        .stdin
        .take()
        .unwrap()
        .write_all(stdin.unwrap_or("").as_bytes())
        .map_err(|e| e.to_string())?;
    let out = child.wait_with_output().map_err(|e| e.to_string())?;
    if !out.status.success() {
        return Err(format!("{args:?}: {}", String::from_utf8_lossy(&out.stderr)));
    }
    Ok(out.stdout)
}

fn data_files(root: &Path) -> Vec<PathBuf> {
    let mut out = vec![];
    let mut stack = vec![root.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in std::fs::read_dir(&d).unwrap() {
            let p = entry.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else if !p.to_string_lossy().ends_with("manifest.json") {
                out.push(p.strip_prefix(root).unwrap().to_path_buf());
            }
        }
    }
    out.sort();
    out
}

fn determinism() -> Check {
    let commands: Vec<Vec<&str>> = vec![
        vec![
            "cohort",
            "generate",
            "--n",
            "300",
            "--seed",
            "5",
            "--out",
            "c.jsonl",
            "--csv-dir",
            "csv",
        ],
        vec![
            "prep",
            "encode",
            "--cohort",
            "c.jsonl",
            "--seed",
            "5",
            "--out-dir",
            "prep",
        ],
        vec![
            "train",
            "mtlr",
            "--cohort",
            "c.jsonl",
            "--folds",
            "prep/folds.json",
            "--out-dir",
            "mtlr",
        ],
        vec![
            "train",
            "aft",
            "--cohort",
            "c.jsonl",
            "--folds",
            "prep/folds.json",
            "--out-dir",
            "aft",
        ],
        vec![
            "train",
            "grud",
            "--cohort",
            "c.jsonl",
            "--folds",
            "prep/folds.json",
            "--out-dir",
            "grud",
            "--seed",
            "5",
            "--epochs",
            "3",
            "--hidden",
            "8",
            "--batch-size",
            "50",
            "--fold",
            "1",
            "--fold",
            "2",
        ],
        vec![
            "eval",
            "sweep",
            "--cohort",
            "c.jsonl",
            "--folds",
            "prep/folds.json",
            "--checkpoint",
            "grud/fold1.json",
            "--checkpoint",
            "grud/fold2.json",
            "--aft",
            "aft/aft_model.json",
            "--mtlr",
            "mtlr/mtlr_model.json",
            "--out",
            "report.csv",
        ],
        vec![
            "explain",
            "importance",
            "--cohort",
            "c.jsonl",
            "--folds",
            "prep/folds.json",
            "--checkpoint",
            "grud/fold1.json",
            "--feature",
            "egfr",
            "--seed",
            "5",
            "--n-perm",
            "2",
            "--days",
            "0,365",
            "--out",
            "importance.csv",
        ],
        vec![
            "explain",
            "pdp",
            "--cohort",
            "c.jsonl",
            "--folds",
            "prep/folds.json",
            "--checkpoint",
            "grud/fold1.json",
            "--feature",
            "sbp",
            "--out",
            "pdp.csv",
        ],
    ];
    let stream_input = "P1,-30,egfr,22.5\nP1,0,sbp,141\nP2,10,egfr,18\nP1,95,egfr,19.5\n";
    let stream_args = ["predict", "stream", "--checkpoint", "grud/fold1.json"];
    let dirs = [tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap()];
    let mut streams = vec![];
    for d in &dirs {
        for c in &commands {
            cli(d.path(), c, None)?;
        }
        streams.push(cli(d.path(), &stream_args, Some(stream_input))?);
    }
    let files = data_files(dirs[0].path());
    ensure(files == data_files(dirs[1].path()), || "different file sets".into())?;
    for f in &files {
        let a = std::fs::read(dirs[0].path().join(f)).unwrap();
        let b = std::fs::read(dirs[1].path().join(f)).unwrap();
        ensure(a == b, || format!("{} differs", f.display()))?;
    }
    ensure(streams[0] == streams[1] && !streams[0].is_empty(), || {
        "stream output differs".into()
    })?;
    Ok(format!(
        "{} commands plus stream, {} data files byte-identical",
        commands.len(),
        files.len()
    ))
}

fn main() {
    // Panics are reported on the criterion's line.
    std::panic::set_hook(Box::new(|_| {}));
    let mut h = Harness { failed: 0 };
    let s = Duration::from_secs;
    h.run(1, "weibull identities", s(1), weibull_identities);
    h.run(2, "mode/median crossing", s(1), mode_median_crossing);
    h.run(3, "best guess", s(5), best_guess);
    h.run(4, "gradient suites", s(30), gradient_suites);
    h.run(5, "metric oracle equivalence", s(30), metric_oracles);
    h.run(6, "calibration fixtures", s(1), calibration_fixtures);
    h.run(7, "AFT recovery", s(120), aft_recovery);
    h.run(8, "overfit check", s(600), overfit);
    let mut runs = vec![];
    h.run(9, "C-index trend over follow-up", s(3600), || trend(&mut runs));
    h.run(10, "explainability fixtures", s(600), || explainability(runs.first()));
    h.run(11, "CLI determinism", s(600), determinism);
    println!("{} of 11 criteria failed", h.failed);
    if h.failed > 0 {
        std::process::exit(1);
    }
}
