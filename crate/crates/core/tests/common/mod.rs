//! Independent oracles shared by the integration tests.
#![allow(dead_code)]

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use survgru::cohort::EncodedSequence;
use survgru::grud::{GrudParameters, HeadMode, Tensor};

/// Adaptive Gauss–Kronrod (7/15) quadrature on a finite interval.
pub fn integrate(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    const XK: [f64; 8] = [
        0.991455371120812639206854697526329,
        0.949107912342758524526189684047851,
        0.864864423359769072789712788640926,
        0.741531185599394439863864773280788,
        0.586087235467691130294144845693013,
        0.405845151377397166906606412076961,
        0.207784955007898467600689403773245,
        0.000000000000000000000000000000000,
    ];
    const WK: [f64; 8] = [
        0.022935322010529224963732008058970,
        0.063092092629978553290700663189204,
        0.104790010322250183839876322541518,
        0.140653259715525918745189590510238,
        0.169004726639267902826583426598550,
        0.190350578064785409913256402421014,
        0.204432940075298892414161999234649,
        0.209482141084727828012999174891714,
    ];
    const WG: [f64; 4] = [
        0.129484966168869693270611432679082,
        0.279705391489276667901467771423780,
        0.381830050505118944950369775488975,
        0.417959183673469387755102040816327,
    ];
    fn gk(f: &dyn Fn(f64) -> f64, a: f64, b: f64) -> (f64, f64) {
        let c = 0.5 * (a + b);
        let h = 0.5 * (b - a);
        let fc = f(c);
        let mut k = WK[7] * fc;
        let mut g = WG[3] * fc;
        for i in 0..7 {
            let x = h * XK[i];
            let s = f(c - x) + f(c + x);
            k += WK[i] * s;
            if i % 2 == 1 {
                g += WG[i / 2] * s;
            }
        }
        (k * h, (k - g).abs() * h)
    }
    fn rec(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64, depth: u32) -> f64 {
        let (v, err) = gk(f, a, b);
        if err <= tol || depth > 50 {
            return v;
        }
        let m = 0.5 * (a + b);
        rec(f, a, m, tol / 2.0, depth + 1) + rec(f, m, b, tol / 2.0, depth + 1)
    }
    rec(f, a, b, tol, 0)
}

/// ∫_a^∞ f via the substitution t = a + u/(1−u).
pub fn integrate_to_infinity(f: &dyn Fn(f64) -> f64, a: f64, tol: f64) -> f64 {
    let g = |u: f64| {
        if u >= 1.0 {
            return 0.0;
        }
        let t = a + u / (1.0 - u);
        f(t) / ((1.0 - u) * (1.0 - u))
    };
    integrate(&g, 0.0, 1.0, tol)
}

pub fn central_difference(f: &mut dyn FnMut(f64) -> f64, x: f64, h: f64) -> f64 {
    (f(x + h) - f(x - h)) / (2.0 * h)
}

/// Relative error with a floor so near-zero gradients compare absolutely.
pub fn rel_err(a: f64, b: f64, floor: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(floor)
}

/// O(n²) Harrell C: (concordant + ties/2, comparable).
pub fn brute_harrell(scores: &[f64], times: &[f64], events: &[bool]) -> (f64, u64) {
    let n = scores.len();
    let mut num = 0.0;
    let mut den = 0u64;
    for i in 0..n {
        if !events[i] {
            continue;
        }
        for j in 0..n {
            if times[i] < times[j] {
                den += 1;
                if scores[i] < scores[j] {
                    num += 1.0;
                } else if scores[i] == scores[j] {
                    num += 0.5;
                }
            }
        }
    }
    (num, den)
}

/// O(n²) AUROC over positive/negative pairs.
pub fn brute_auroc(pos: &[f64], neg: &[f64]) -> f64 {
    let mut s = 0.0;
    for &p in pos {
        for &q in neg {
            if p > q {
                s += 1.0;
            } else if p == q {
                s += 0.5;
            }
        }
    }
    s / (pos.len() * neg.len()) as f64
}

/// Product-limit estimate evaluated directly from its definition:
/// Π over distinct event times u ≤ t of (1 − d_u / n_u).
pub fn brute_km(times: &[f64], events: &[bool], t: f64) -> f64 {
    let mut us: Vec<f64> = times
        .iter()
        .zip(events)
        .filter(|(&u, &e)| e && u <= t)
        .map(|(&u, _)| u)
        .collect();
    us.sort_by(f64::total_cmp);
    us.dedup();
    let mut s = 1.0;
    for u in us {
        let at_risk = times.iter().filter(|&&x| x >= u).count() as f64;
        let d = times.iter().zip(events).filter(|(&x, &e)| e && x == u).count() as f64;
        s *= 1.0 - d / at_risk;
    }
    s
}

/// Left limit G(t−) of the censoring survival, computed directly.
pub fn brute_censor_km_left(times: &[f64], events: &[bool], t: f64) -> f64 {
    let flipped: Vec<bool> = events.iter().map(|e| !e).collect();
    let mut us: Vec<f64> = times
        .iter()
        .zip(&flipped)
        .filter(|(&u, &e)| e && u < t)
        .map(|(&u, _)| u)
        .collect();
    us.sort_by(f64::total_cmp);
    us.dedup();
    let mut s = 1.0;
    for u in us {
        // At tied times events leave before censorings, so they are not at
        // risk of censoring.
        let at_risk = times
            .iter()
            .zip(events)
            .filter(|(&x, &e)| x > u || (x == u && !e))
            .count() as f64;
        let d = times.iter().zip(&flipped).filter(|(&x, &c)| c && x == u).count() as f64;
        s *= 1.0 - d / at_risk;
    }
    s
}

pub fn random_sequence(rng: &mut ChaCha8Rng, nf: usize, steps: usize) -> EncodedSequence {
    let mut x = vec![0.0; nf * steps];
    let mut m = vec![0.0; nf * steps];
    for i in 0..nf * steps {
        if rng.random_bool(0.4) {
            m[i] = 1.0;
            x[i] = rng.random_range(-2.0..2.0);
        }
    }
    let gap_days: Vec<f64> = (0..steps)
        .map(|t| {
            if t == 0 {
                0.0
            } else if rng.random_bool(0.5) {
                15.0
            } else {
                30.0
            }
        })
        .collect();
    let mut step_days = vec![0i32; steps];
    for t in 1..steps {
        step_days[t] = step_days[t - 1] + gap_days[t] as i32;
    }
    let mut seq = EncodedSequence {
        patient_id: "g".into(),
        n_features: nf,
        n_steps: steps,
        x,
        m,
        delta_days: vec![0.0; nf * steps],
        gap_days,
        step_days,
        empirical_means: (0..nf).map(|_| rng.random_range(-0.5..0.5)).collect(),
        valid_steps: steps,
        followup_end_day: 10_000,
        event: true,
        stats: Default::default(),
    };
    for d in 0..nf {
        seq.recompute_delta(d);
    }
    seq
}

pub fn random_params(rng: &mut ChaCha8Rng, nf: usize, nh: usize, head: HeadMode) -> GrudParameters {
    let mut p = GrudParameters::init(nf, nh, head, 2.0, rng.random());
    // Decay weights straddle zero so both relu branches are exercised.
    for t in [
        Tensor::InputDecayW,
        Tensor::InputDecayB,
        Tensor::HiddenDecayW,
        Tensor::HiddenDecayB,
    ] {
        for v in p.get_mut(t) {
            *v = rng.random_range(-1.5..1.5);
        }
    }
    for t in [Tensor::UpdateB, Tensor::ResetB, Tensor::CandidateB, Tensor::HeadW] {
        for v in p.get_mut(t) {
            *v = rng.random_range(-0.5..0.5);
        }
    }
    p
}
