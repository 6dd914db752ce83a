//! Multi-task logistic regression: a discrete-time survival model with one
//! coefficient vector per time point.

use crate::error::{Error, Result};
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use std::io::Write;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MtlrOptions {
    /// Time points in years.
    pub times: Vec<f64>,
    pub l2_strength: f64,
    pub max_iter: usize,
    /// Bound on the ∞-norm of the per-patient mean gradient.
    pub tolerance: f64,
}

impl Default for MtlrOptions {
    fn default() -> Self {
        Self {
            times: vec![1.0, 2.0, 3.0, 4.0, 5.0],
            l2_strength: 1.0,
            max_iter: 5000,
            tolerance: 1e-6,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MtlrModel {
    pub times: Vec<f64>,
    /// Row `k` holds the coefficients of time point `k`, on the raw
    /// covariate scale.
    pub theta: Vec<Vec<f64>>,
    pub bias: Vec<f64>,
    pub l2_strength: f64,
    #[serde(default)]
    pub feature_names: Vec<String>,
    #[serde(default)]
    pub iterations: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PointEstimates {
    pub mean: f64,
    pub pmst: f64,
}

fn log_sum_exp(v: &[f64]) -> f64 {
    let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + v.iter().map(|x| (x - max).exp()).sum::<f64>().ln()
}

/// Index of the interval containing `t`: the number of time points ≤ t.
pub fn interval_of(times: &[f64], t: f64) -> usize {
    times.iter().take_while(|&&p| p <= t).count()
}

impl MtlrModel {
    pub fn zeros(times: Vec<f64>, n_features: usize) -> Result<Self> {
        if times.is_empty() || times[0] <= 0.0 || times.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidInput(
                "time points must be positive and increasing".into(),
            ));
        }
        let m = times.len();
        Ok(Self {
            times,
            theta: vec![vec![0.0; n_features]; m],
            bias: vec![0.0; m],
            l2_strength: 0.0,
            feature_names: vec![],
            iterations: 0,
        })
    }

    pub fn n_intervals(&self) -> usize {
        self.times.len() + 1
    }

    /// Scores f(x, k) = Σ_{i > k} (θ_i·x + b_i) for k = 0..=m.
    fn scores(&self, x: &[f64]) -> Vec<f64> {
        let m = self.times.len();
        let mut f = vec![0.0; m + 1];
        for k in (0..m).rev() {
            let s: f64 = self.theta[k].iter().zip(x).map(|(a, b)| a * b).sum::<f64>() + self.bias[k];
            f[k] = f[k + 1] + s;
        }
        f
    }

    pub fn sequence_logprob(&self, x: &[f64], j: usize) -> f64 {
        let f = self.scores(x);
        f[j] - log_sum_exp(&f)
    }

    pub fn interval_probs(&self, x: &[f64]) -> Vec<f64> {
        let f = self.scores(x);
        let z = log_sum_exp(&f);
        f.iter().map(|v| (v - z).exp()).collect()
    }

    /// S(t_1)..S(t_m).
    pub fn survival(&self, x: &[f64]) -> Vec<f64> {
        let p = self.interval_probs(x);
        let m = self.times.len();
        let mut s = vec![0.0; m];
        let mut tail = p[m];
        s[m - 1] = tail.min(1.0);
        for k in (0..m - 1).rev() {
            tail += p[k + 1];
            s[k] = tail.min(1.0);
        }
        s
    }

    /// Log-likelihood of one patient: the event interval when observed,
    /// every interval from the one containing the censoring time otherwise.
    pub fn patient_loglik(&self, x: &[f64], time: f64, event: bool) -> f64 {
        let f = self.scores(x);
        let j = interval_of(&self.times, time);
        let num = if event { f[j] } else { log_sum_exp(&f[j..]) };
        num - log_sum_exp(&f)
    }

    /// Σ log-likelihood − l2·‖θ‖².
    pub fn objective(&self, xs: &[Vec<f64>], times: &[f64], events: &[bool]) -> f64 {
        let ll: f64 = (0..xs.len())
            .map(|i| self.patient_loglik(&xs[i], times[i], events[i]))
            .sum();
        ll - self.l2_strength * self.theta.iter().flatten().map(|v| v * v).sum::<f64>()
    }

    /// Gradient of [`MtlrModel::objective`], laid out as all of θ row by
    /// row followed by the biases.
    pub fn objective_grad(&self, xs: &[Vec<f64>], times: &[f64], events: &[bool]) -> Vec<f64> {
        let m = self.times.len();
        let nf = self.theta.first().map_or(0, |r| r.len());
        let mut g = vec![0.0; m * nf + m];
        let mut ds = vec![0.0; m];
        for i in 0..xs.len() {
            let f = self.scores(&xs[i]);
            let z = log_sum_exp(&f);
            let j = interval_of(&self.times, times[i]);
            // q: posterior over intervals allowed by the observation.
            let mut q = vec![0.0; m + 1];
            if events[i] {
                q[j] = 1.0;
            } else {
                let zq = log_sum_exp(&f[j..]);
                for k in j..=m {
                    q[k] = (f[k] - zq).exp();
                }
            }
            // d ll / d s_k = Q(interval < k+1) − P(interval < k+1).
            let (mut cq, mut cp) = (0.0, 0.0);
            for k in 0..m {
                cq += q[k];
                cp += (f[k] - z).exp();
                ds[k] = cq - cp;
            }
            for k in 0..m {
                let row = &mut g[k * nf..(k + 1) * nf];
                for (r, xv) in row.iter_mut().zip(&xs[i]) {
                    *r += ds[k] * xv;
                }
                g[m * nf + k] += ds[k];
            }
        }
        for k in 0..m {
            for d in 0..nf {
                g[k * nf + d] -= 2.0 * self.l2_strength * self.theta[k][d];
            }
        }
        g
    }

    /// Hessian of [`MtlrModel::objective`] in the same layout as the
    /// gradient.
    pub fn objective_hessian(&self, xs: &[Vec<f64>], times: &[f64], events: &[bool]) -> DMatrix<f64> {
        let m = self.times.len();
        let nf = self.theta.first().map_or(0, |r| r.len());
        let q = m * nf + m;
        let mut h = DMatrix::zeros(q, q);
        let mut hs = vec![0.0; m * m];
        let mut xt = vec![0.0; nf + 1];
        for i in 0..xs.len() {
            let f = self.scores(&xs[i]);
            let z = log_sum_exp(&f);
            let j = interval_of(&self.times, times[i]);
            // Cumulative masses P(K ≤ k) under the model and under the
            // posterior restricted to the observation.
            let mut cp = vec![0.0; m];
            let mut cq = vec![0.0; m];
            let mut acc = 0.0;
            for k in 0..m {
                acc += (f[k] - z).exp();
                cp[k] = acc;
            }
            if events[i] {
                for k in j..m {
                    cq[k] = 1.0;
                }
            } else {
                let zq = log_sum_exp(&f[j..]);
                let mut acc = 0.0;
                for k in j..m {
                    acc += (f[k] - zq).exp();
                    cq[k] = acc;
                }
            }
            // Indicators 1[K ≤ a] have covariance C(min) − C(a)C(b).
            for a in 0..m {
                for b in 0..m {
                    let lo = a.min(b);
                    hs[a * m + b] = (cq[lo] - cq[a] * cq[b]) - (cp[lo] - cp[a] * cp[b]);
                }
            }
            xt[..nf].copy_from_slice(&xs[i]);
            xt[nf] = 1.0;
            let col = |k: usize, d: usize| if d == nf { m * nf + k } else { k * nf + d };
            for a in 0..m {
                for b in 0..m {
                    let v = hs[a * m + b];
                    if v == 0.0 {
                        continue;
                    }
                    for d in 0..=nf {
                        let r = col(a, d);
                        let vd = v * xt[d];
                        for e in 0..=nf {
                            h[(r, col(b, e))] += vd * xt[e];
                        }
                    }
                }
            }
        }
        for r in 0..m * nf {
            h[(r, r)] -= 2.0 * self.l2_strength;
        }
        h
    }

    fn flat(&self) -> Vec<f64> {
        let mut v: Vec<f64> = self.theta.iter().flatten().copied().collect();
        v.extend(&self.bias);
        v
    }

    fn set_flat(&mut self, v: &[f64]) {
        let m = self.times.len();
        let nf = self.theta.first().map_or(0, |r| r.len());
        for k in 0..m {
            self.theta[k].copy_from_slice(&v[k * nf..(k + 1) * nf]);
        }
        self.bias.copy_from_slice(&v[m * nf..]);
    }

    /// Mean survival truncated at the last time point, integrating a
    /// survival curve linear between (0, 1) and the time points; the
    /// median from the same curve, capped at the last time point.
    pub fn point_estimates(&self, x: &[f64]) -> PointEstimates {
        let s = self.survival(x);
        curve_point_estimates(&self.times, &s)
    }

    pub fn write_curves_csv<W: Write>(&self, ids: &[String], xs: &[Vec<f64>], out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["patient_id", "t_years", "survival"])?;
        for (id, x) in ids.iter().zip(xs) {
            for (t, s) in self.times.iter().zip(self.survival(x)) {
                w.write_record([id.clone(), t.to_string(), format!("{s:.10}")])?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

pub fn curve_point_estimates(times: &[f64], s: &[f64]) -> PointEstimates {
    let mut mean = 0.0;
    let (mut t0, mut s0) = (0.0, 1.0);
    let mut pmst = None;
    for (&t1, &s1) in times.iter().zip(s) {
        mean += 0.5 * (s0 + s1) * (t1 - t0);
        if pmst.is_none() && s1 <= 0.5 {
            pmst = Some(if s0 == s1 {
                t0
            } else {
                t0 + (s0 - 0.5) / (s0 - s1) * (t1 - t0)
            });
        }
        (t0, s0) = (t1, s1);
    }
    PointEstimates {
        mean,
        pmst: pmst.unwrap_or(t0),
    }
}

fn standardize(xs: &[Vec<f64>]) -> (Vec<Vec<f64>>, Vec<f64>, Vec<f64>) {
    let nf = xs.first().map_or(0, |r| r.len());
    let n = xs.len() as f64;
    let mut mean = vec![0.0; nf];
    let mut sd = vec![0.0; nf];
    for d in 0..nf {
        mean[d] = xs.iter().map(|r| r[d]).sum::<f64>() / n;
        let var = xs.iter().map(|r| (r[d] - mean[d]).powi(2)).sum::<f64>() / n;
        sd[d] = if var > 0.0 { var.sqrt() } else { 1.0 };
    }
    let z = xs
        .iter()
        .map(|r| r.iter().enumerate().map(|(d, v)| (v - mean[d]) / sd[d]).collect())
        .collect();
    (z, mean, sd)
}

/// Fits on standardized covariates by damped Newton ascent with a
/// backtracking line search, then maps the coefficients back to the raw
/// scale. The penalty applies to the standardized coefficients.
pub fn fit(xs: &[Vec<f64>], times: &[f64], events: &[bool], opts: &MtlrOptions) -> Result<MtlrModel> {
    let n = xs.len();
    if n == 0 || times.len() != n || events.len() != n {
        return Err(Error::InvalidInput("MTLR needs matching, nonempty inputs".into()));
    }
    if times.iter().any(|&t| !(t > 0.0)) {
        return Err(Error::InvalidInput("MTLR times must be positive".into()));
    }
    let (z, mean, sd) = standardize(xs);
    let nf = mean.len();
    let mut model = MtlrModel::zeros(opts.times.clone(), nf)?;
    model.l2_strength = opts.l2_strength;
    let mut params = model.flat();
    let q = params.len();
    let mut obj = model.objective(&z, times, events);
    let mut g = DVector::from_vec(model.objective_grad(&z, times, events));
    let mut iterations = 0;
    loop {
        let norm = g.amax() / n as f64;
        if !norm.is_finite() {
            return Err(Error::NonFinite {
                step: iterations,
                what: "MTLR gradient".into(),
            });
        }
        if norm < opts.tolerance {
            break;
        }
        if iterations >= opts.max_iter {
            return Err(Error::NoConvergence {
                iterations,
                grad_norm: norm,
            });
        }
        iterations += 1;
        let info = -model.objective_hessian(&z, times, events);
        let mut mu = 0.0;
        let dir = loop {
            let damped = &info + DMatrix::identity(q, q) * mu;
            if let Some(ch) = damped.cholesky() {
                break ch.solve(&g);
            }
            mu = if mu == 0.0 {
                1e-8 * info.diagonal().amax().max(1.0)
            } else {
                mu * 10.0
            };
            if !mu.is_finite() {
                return Err(Error::Singular);
            }
        };
        let slope = g.dot(&dir);
        let mut step = 1.0;
        let mut accepted = false;
        for _ in 0..60 {
            let cand: Vec<f64> = params.iter().zip(dir.iter()).map(|(p, d)| p + step * d).collect();
            let mut trial = model.clone();
            trial.set_flat(&cand);
            let next = trial.objective(&z, times, events);
            // Below the rounding of the summed objective the Armijo test
            // cannot judge a step; accept it when the gradient shrinks.
            let flat = slope * step < 1e-12 * obj.abs().max(1.0);
            let g2 = flat.then(|| DVector::from_vec(trial.objective_grad(&z, times, events)));
            let ok = match &g2 {
                Some(g2) => next.is_finite() && g2.amax() < g.amax(),
                None => next.is_finite() && next >= obj + 1e-4 * step * slope,
            };
            if ok {
                params = cand;
                model = trial;
                obj = next;
                g = g2.unwrap_or_else(|| DVector::from_vec(model.objective_grad(&z, times, events)));
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if !accepted {
            return Err(Error::NoConvergence {
                iterations,
                grad_norm: g.amax() / n as f64,
            });
        }
    }
    for k in 0..model.times.len() {
        let mut shift = 0.0;
        for d in 0..nf {
            model.theta[k][d] /= sd[d];
            shift += model.theta[k][d] * mean[d];
        }
        model.bias[k] -= shift;
    }
    model.iterations = iterations;
    Ok(model)
}
