mod common;

use common::{central_difference, rel_err};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Exp1, StandardNormal};
use survgru::aft::{self, AftOptions};
use survgru::mtlr::{self, curve_point_estimates, interval_of, MtlrModel, MtlrOptions};

/// Draws from ln τ = β₀ + x′β + σ ln E with E ~ Exp(1), censored by
/// Uniform(0, c_max) with c_max bisected to the requested censored share.
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
    let cmax = hi;
    let times = t.iter().zip(&u).map(|(&ti, &ui)| ti.min(ui * cmax)).collect();
    let events = t.iter().zip(&u).map(|(&ti, &ui)| ti <= ui * cmax).collect();
    (xs, times, events)
}

fn twice<T: Clone>(v: &[T]) -> Vec<T> {
    [v, v].concat()
}

fn names(p: usize) -> Vec<String> {
    (0..p).map(|i| format!("x{i}")).collect()
}

#[test]
fn aft_gradient_and_hessian_match_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let (xs, times, events) = aft_sample(9, 40, 0.3, &[0.5, -0.3, 0.2], 0.8, 0.3);
    for _ in 0..20 {
        let theta: Vec<f64> = (0..5).map(|_| rng.random_range(-0.8..0.8)).collect();
        let (_, g, h) = aft::loglik_derivatives(&theta, &xs, &times, &events);
        for i in 0..5 {
            let mut th = theta.clone();
            let fd = central_difference(
                &mut |v| {
                    th[i] = v;
                    aft::loglik(&th, &xs, &times, &events)
                },
                theta[i],
                1e-5,
            );
            assert!(rel_err(g[i], fd, 1e-3) < 1e-6, "∂{i}: {} vs {fd}", g[i]);
            for j in 0..5 {
                let mut th = theta.clone();
                let fd = central_difference(
                    &mut |v| {
                        th[j] = v;
                        aft::loglik_derivatives(&th, &xs, &times, &events).1[i]
                    },
                    theta[j],
                    1e-5,
                );
                assert!(rel_err(h[(i, j)], fd, 1e-3) < 1e-6, "∂²{i}{j}: {} vs {fd}", h[(i, j)]);
            }
        }
    }
}

#[test]
fn aft_formulations_agree() {
    assert!((aft::extreme_value_loglik_term(0.0, 1.0, 1.0, true) + 1.0).abs() < 1e-15);
    assert!((aft::extreme_value_loglik_term(0.7, 1.3, 0.7f64.exp(), false) + 1.0).abs() < 1e-15);
    let (xs, times, events) = aft_sample(4, 60, 0.1, &[0.4], 0.6, 0.4);
    for i in 0..xs.len() {
        let lin = 0.1 + 0.4 * xs[i][0];
        let a = aft::weibull_loglik_term(lin, 0.6, times[i], events[i]).unwrap();
        let b = aft::extreme_value_loglik_term(lin, 0.6, times[i], events[i]);
        assert!(rel_err(a, b, 1e-12) < 1e-12, "{a} vs {b}");
    }
}

#[test]
fn aft_recovers_generating_parameters() {
    let beta = [0.5, -0.3];
    for seed in [1, 2, 3] {
        let (xs, times, events) = aft_sample(seed, 5000, 1.0, &beta, 0.7, 0.3);
        let m = aft::fit(&xs, &times, &events, &names(2), &AftOptions::default()).unwrap();
        for (b, want) in m.beta.iter().zip(beta) {
            assert!((b - want).abs() < 0.05, "seed {seed}: {b} vs {want}");
        }
        assert!((m.sigma - 0.7).abs() < 0.05, "seed {seed}: σ {}", m.sigma);
        assert!((m.intercept - 1.0).abs() < 0.05);
    }
}

#[test]
fn aft_duplicated_rows_shrink_errors_by_root_two() {
    let (xs, times, events) = aft_sample(6, 300, 0.5, &[0.3, 0.2], 0.9, 0.3);
    let one = aft::fit(&xs, &times, &events, &names(2), &AftOptions::default()).unwrap();
    let two = aft::fit(
        &twice(&xs),
        &twice(&times),
        &twice(&events),
        &names(2),
        &AftOptions::default(),
    )
    .unwrap();
    for (a, b) in one.theta().iter().zip(two.theta()) {
        assert!((a - b).abs() < 1e-8);
    }
    for (a, b) in one.std_errors.iter().zip(&two.std_errors) {
        assert!(rel_err(a / 2f64.sqrt(), *b, 0.0) < 1e-6);
    }
}

#[test]
fn aft_exponential_closed_form() {
    let (_, times, _) = aft_sample(8, 200, 0.2, &[], 1.0, 0.0);
    let xs = vec![vec![]; times.len()];
    let events = vec![true; times.len()];
    let opts = AftOptions {
        fixed_sigma: Some(1.0),
        ..Default::default()
    };
    let m = aft::fit(&xs, &times, &events, &[], &opts).unwrap();
    let mean = times.iter().sum::<f64>() / times.len() as f64;
    assert!(rel_err(m.intercept.exp(), mean, 0.0) < 1e-10);
    assert_eq!(m.sigma, 1.0);
}

#[test]
fn aft_predictions_share_shape() {
    let (xs, times, events) = aft_sample(10, 400, 0.4, &[0.6, 0.0], 0.5, 0.3);
    let m = aft::fit(&xs, &times, &events, &names(2), &AftOptions::default()).unwrap();
    let k = m.kappa();
    for x in xs.iter().take(20) {
        let w = m.predict(x).unwrap();
        assert_eq!(w.kappa(), k);
        let median = m.linear(x).exp() * 2f64.ln().powf(m.sigma);
        assert!(rel_err(w.median(), median, 0.0) < 1e-12);
    }
    let zero = m.predict(&[0.0, 0.0]).unwrap();
    assert!(rel_err(zero.lambda(), m.intercept.exp(), 0.0) < 1e-15);
    let mut fixed = m.clone();
    fixed.beta[1] = 0.0;
    assert_eq!(
        fixed.predict(&[0.3, 1.0]).unwrap(),
        fixed.predict(&[0.3, -2.0]).unwrap()
    );
    assert!(m.std_errors.iter().all(|s| *s > 0.0));
    assert!(m.p_values.iter().all(|p| (0.0..=1.0).contains(p)));
}

#[test]
fn aft_coefficient_table_has_header_and_rows() {
    let (xs, times, events) = aft_sample(11, 200, 0.4, &[0.6], 0.5, 0.3);
    let m = aft::fit(&xs, &times, &events, &names(1), &AftOptions::default()).unwrap();
    let mut out = vec![];
    m.write_coefficients_csv(&mut out).unwrap();
    let text = String::from_utf8(out).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "feature,coefficient,std_error,p_value");
    assert_eq!(lines.len(), 4);
}

fn mtlr_data(seed: u64, n: usize, nf: usize) -> (Vec<Vec<f64>>, Vec<f64>, Vec<bool>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let xs: Vec<Vec<f64>> = (0..n)
        .map(|_| (0..nf).map(|_| rng.random_range(-1.0..1.0)).collect())
        .collect();
    let times = xs
        .iter()
        .map(|x| (0.1 + rng.random_range(0.0..6.0) * (1.0 + 0.3 * x[0])).max(0.05))
        .collect();
    let events = (0..n).map(|_| rng.random_bool(0.7)).collect();
    (xs, times, events)
}

fn random_mtlr(rng: &mut ChaCha8Rng, m: usize, nf: usize) -> MtlrModel {
    let mut model = MtlrModel::zeros((1..=m).map(|k| k as f64).collect(), nf).unwrap();
    for row in &mut model.theta {
        for v in row {
            *v = rng.random_range(-1.0..1.0);
        }
    }
    for b in &mut model.bias {
        *b = rng.random_range(-1.0..1.0);
    }
    model.l2_strength = 0.7;
    model
}

#[test]
fn mtlr_gradient_and_hessian_match_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let (xs, times, events) = mtlr_data(1, 50, 3);
    for _ in 0..5 {
        let model = random_mtlr(&mut rng, 5, 3);
        let g = model.objective_grad(&xs, &times, &events);
        let h = model.objective_hessian(&xs, &times, &events);
        let q = g.len();
        let set = |m: &mut MtlrModel, i: usize, v: f64| {
            if i < 15 {
                m.theta[i / 3][i % 3] = v;
            } else {
                m.bias[i - 15] = v;
            }
        };
        let get = |m: &MtlrModel, i: usize| {
            if i < 15 {
                m.theta[i / 3][i % 3]
            } else {
                m.bias[i - 15]
            }
        };
        for i in 0..q {
            let mut mm = model.clone();
            let fd = central_difference(
                &mut |v| {
                    set(&mut mm, i, v);
                    mm.objective(&xs, &times, &events)
                },
                get(&model, i),
                1e-5,
            );
            assert!(rel_err(g[i], fd, 1e-3) < 1e-6, "∂{i}: {} vs {fd}", g[i]);
            for j in 0..q {
                let mut mm = model.clone();
                let fd = central_difference(
                    &mut |v| {
                        set(&mut mm, j, v);
                        mm.objective_grad(&xs, &times, &events)[i]
                    },
                    get(&model, j),
                    1e-5,
                );
                assert!(rel_err(h[(i, j)], fd, 1e-3) < 1e-6, "∂²{i}{j}: {} vs {fd}", h[(i, j)]);
            }
        }
    }
}

#[test]
fn mtlr_strong_penalty_leaves_marginal_frequencies() {
    let (xs, times, _) = mtlr_data(2, 400, 2);
    let events = vec![true; times.len()];
    let opts = MtlrOptions {
        l2_strength: 1e9,
        ..Default::default()
    };
    let m = mtlr::fit(&xs, &times, &events, &opts).unwrap();
    assert!(m.theta.iter().flatten().all(|v| v.abs() < 1e-6));
    let mut freq = vec![0.0; 6];
    for &t in &times {
        freq[interval_of(&m.times, t)] += 1.0 / times.len() as f64;
    }
    for (p, f) in m.interval_probs(&xs[0]).iter().zip(&freq) {
        assert!((p - f).abs() < 1e-5, "{p} vs {f}");
    }
}

#[test]
fn mtlr_fit_is_deterministic_and_converges() {
    let (xs, times, events) = mtlr_data(5, 300, 3);
    let a = mtlr::fit(&xs, &times, &events, &MtlrOptions::default()).unwrap();
    let b = mtlr::fit(&xs, &times, &events, &MtlrOptions::default()).unwrap();
    assert_eq!(a, b);
    assert!(a.iterations < 100);
}

#[test]
fn mtlr_early_censoring_carries_no_information() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let m = random_mtlr(&mut rng, 5, 2);
    assert!(m.patient_loglik(&[0.3, -0.2], 0.5, false).abs() < 1e-14);
    // Censored inside interval j sums the event probabilities from j on.
    let p = m.interval_probs(&[0.3, -0.2]);
    let ll = m.patient_loglik(&[0.3, -0.2], 2.5, false);
    assert!(rel_err(ll, p[2..].iter().sum::<f64>().ln(), 0.0) < 1e-12);
}

#[test]
fn mtlr_median_matches_dense_curve() {
    let times = [1.0, 2.0, 3.0, 4.0, 5.0];
    let s = [0.9, 0.7, 0.35, 0.2, 0.1];
    let est = curve_point_estimates(&times, &s);
    let curve = |t: f64| {
        let (mut t0, mut s0) = (0.0, 1.0);
        for (&t1, &s1) in times.iter().zip(&s) {
            if t <= t1 {
                return s0 + (s1 - s0) * (t - t0) / (t1 - t0);
            }
            (t0, s0) = (t1, s1);
        }
        s0
    };
    let dense = (0..=500_000)
        .map(|i| i as f64 * 1e-5)
        .find(|&t| curve(t) <= 0.5)
        .unwrap();
    assert!((est.pmst - dense).abs() < 2e-5);
    assert!(est.pmst > 2.0 && est.pmst < 3.0);
    let capped = curve_point_estimates(&times, &[0.9, 0.8, 0.7, 0.6, 0.55]);
    assert_eq!(capped.pmst, 5.0);
}

proptest! {
    #[test]
    fn mtlr_probabilities_normalise(seed in 0u64..10_000, m in 1usize..6, x0 in -3.0f64..3.0, x1 in -3.0f64..3.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let model = random_mtlr(&mut rng, m, 2);
        let p = model.interval_probs(&[x0, x1]);
        prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        let s = model.survival(&[x0, x1]);
        prop_assert!(s.windows(2).all(|w| w[1] <= w[0]));
        prop_assert!(s.iter().all(|v| (0.0..=1.0).contains(v)));
        prop_assert!((s[m - 1] - p[m]).abs() < 1e-15);
    }
}
