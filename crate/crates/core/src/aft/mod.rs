//! Weibull accelerated failure time regression:
//! ln τ = x′β + σ ε with ε standard minimum extreme value.

use crate::error::{Error, Result};
use crate::weibull::WeibullParams;
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};
use std::io::Write;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AftOptions {
    pub max_iter: usize,
    /// Bound on the gradient ∞-norm of the summed log-likelihood.
    pub tolerance: f64,
    /// Holds σ at this value instead of estimating it.
    pub fixed_sigma: Option<f64>,
}

impl Default for AftOptions {
    fn default() -> Self {
        Self {
            max_iter: 200,
            tolerance: 1e-8,
            fixed_sigma: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AftModel {
    pub feature_names: Vec<String>,
    pub intercept: f64,
    pub beta: Vec<f64>,
    pub sigma: f64,
    /// Standard errors of (intercept, β…, ln σ).
    pub std_errors: Vec<f64>,
    pub p_values: Vec<f64>,
    pub covariance: Vec<Vec<f64>>,
    pub loglik: f64,
    pub iterations: usize,
}

/// One patient's log-likelihood written through the Weibull density and
/// survival function.
pub fn weibull_loglik_term(linear: f64, sigma: f64, tau: f64, event: bool) -> Result<f64> {
    let w = WeibullParams::new(1.0 / sigma, linear.exp())?;
    if event {
        w.log_pdf(tau)
    } else {
        Ok(w.survival(tau)?.ln())
    }
}

/// Same term through the standardized residual z = (ln τ − x′β)/σ.
pub fn extreme_value_loglik_term(linear: f64, sigma: f64, tau: f64, event: bool) -> f64 {
    let z = (tau.ln() - linear) / sigma;
    if event {
        -sigma.ln() - tau.ln() + z - z.exp()
    } else {
        -z.exp()
    }
}

fn check(xs: &[Vec<f64>], times: &[f64], events: &[bool]) -> Result<usize> {
    let n = xs.len();
    if n == 0 || times.len() != n || events.len() != n {
        return Err(Error::InvalidInput("AFT needs matching, nonempty inputs".into()));
    }
    if let Some(t) = times.iter().find(|&&t| !(t > 0.0)) {
        return Err(Error::InvalidInput(format!("AFT times must be positive, got {t}")));
    }
    let p = xs[0].len();
    if xs.iter().any(|r| r.len() != p) {
        return Err(Error::InvalidInput("ragged design matrix".into()));
    }
    Ok(p)
}

/// Log-likelihood, gradient and Hessian in θ = (intercept, β, ln σ).
pub fn loglik_derivatives(
    theta: &[f64],
    xs: &[Vec<f64>],
    times: &[f64],
    events: &[bool],
) -> (f64, DVector<f64>, DMatrix<f64>) {
    let q = theta.len();
    let p = q - 2;
    let sigma = theta[q - 1].exp();
    let mut ll = 0.0;
    let mut g = DVector::zeros(q);
    let mut h = DMatrix::zeros(q, q);
    let mut row = vec![0.0; p + 1];
    for i in 0..xs.len() {
        row[0] = 1.0;
        row[1..].copy_from_slice(&xs[i]);
        let lin: f64 = row.iter().zip(theta).map(|(a, b)| a * b).sum();
        let delta = if events[i] { 1.0 } else { 0.0 };
        let z = (times[i].ln() - lin) / sigma;
        let ez = z.exp();
        ll += extreme_value_loglik_term(lin, sigma, times[i], events[i]);
        let a = delta - ez;
        for r in 0..=p {
            g[r] += -a * row[r] / sigma;
        }
        g[q - 1] += -delta - a * z;
        let cross = -(z * ez - a) / sigma;
        for r in 0..=p {
            for c in 0..=p {
                h[(r, c)] += -ez * row[r] * row[c] / (sigma * sigma);
            }
            h[(r, q - 1)] += cross * row[r];
            h[(q - 1, r)] += cross * row[r];
        }
        h[(q - 1, q - 1)] += -z * z * ez + a * z;
    }
    (ll, g, h)
}

pub fn loglik(theta: &[f64], xs: &[Vec<f64>], times: &[f64], events: &[bool]) -> f64 {
    loglik_derivatives(theta, xs, times, events).0
}

/// Maximum likelihood by damped Newton steps with a backtracking line
/// search on (intercept, β, ln σ). Columns are centred and scaled for the
/// search; coefficients and covariance are mapped back to raw units.
pub fn fit(xs: &[Vec<f64>], times: &[f64], events: &[bool], names: &[String], opts: &AftOptions) -> Result<AftModel> {
    let p = check(xs, times, events)?;
    let n = xs.len() as f64;
    let mut center = vec![0.0; p];
    let mut scale = vec![1.0; p];
    for d in 0..p {
        center[d] = xs.iter().map(|r| r[d]).sum::<f64>() / n;
        let var = xs.iter().map(|r| (r[d] - center[d]).powi(2)).sum::<f64>() / n;
        if var > 0.0 {
            scale[d] = var.sqrt();
        }
    }
    let z: Vec<Vec<f64>> = xs
        .iter()
        .map(|r| (0..p).map(|d| (r[d] - center[d]) / scale[d]).collect())
        .collect();
    let m = fit_unscaled(&z, times, events, names, opts)?;
    // θ_raw = A θ_std.
    let q = p + 2;
    let mut a = DMatrix::<f64>::identity(q, q);
    for d in 0..p {
        a[(d + 1, d + 1)] = 1.0 / scale[d];
        a[(0, d + 1)] = -center[d] / scale[d];
    }
    let theta = &a * DVector::from_vec(m.theta());
    let cov_std = DMatrix::from_fn(q, q, |r, c| m.covariance[r][c]);
    let cov = &a * cov_std * a.transpose();
    let mut std_errors: Vec<f64> = (0..q).map(|i| cov[(i, i)].max(0.0).sqrt()).collect();
    if opts.fixed_sigma.is_some() {
        std_errors[q - 1] = f64::NAN;
    }
    Ok(AftModel {
        feature_names: names.to_vec(),
        intercept: theta[0],
        beta: theta.as_slice()[1..=p].to_vec(),
        sigma: m.sigma,
        p_values: wald_p_values(theta.as_slice(), &std_errors),
        std_errors,
        covariance: (0..q).map(|r| (0..q).map(|c| cov[(r, c)]).collect()).collect(),
        loglik: m.loglik,
        iterations: m.iterations,
    })
}

fn wald_p_values(theta: &[f64], se: &[f64]) -> Vec<f64> {
    let normal = Normal::standard();
    theta
        .iter()
        .zip(se)
        .map(|(t, s)| 2.0 * (1.0 - normal.cdf((t / s).abs())))
        .collect()
}

fn fit_unscaled(
    xs: &[Vec<f64>],
    times: &[f64],
    events: &[bool],
    names: &[String],
    opts: &AftOptions,
) -> Result<AftModel> {
    let p = check(xs, times, events)?;
    let q = p + 2;
    let mut theta = vec![0.0; q];
    theta[0] = times.iter().map(|t| t.ln()).sum::<f64>() / times.len() as f64;
    if let Some(s) = opts.fixed_sigma {
        if !(s > 0.0) {
            return Err(Error::InvalidInput(format!("fixed sigma must be positive, got {s}")));
        }
        theta[q - 1] = s.ln();
    }
    let derivatives = |theta: &[f64]| {
        let (ll, mut g, mut h) = loglik_derivatives(theta, xs, times, events);
        if opts.fixed_sigma.is_some() {
            g[q - 1] = 0.0;
            h.row_mut(q - 1).fill(0.0);
            h.column_mut(q - 1).fill(0.0);
            h[(q - 1, q - 1)] = -1.0;
        }
        (ll, g, h)
    };
    let (mut ll, mut g, mut h) = derivatives(&theta);
    let mut iterations = 0;
    loop {
        let norm = g.amax();
        if !norm.is_finite() {
            return Err(Error::NonFinite {
                step: iterations,
                what: "AFT gradient".into(),
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
        // Levenberg-style damping until the negated Hessian is positive
        // definite.
        let info = -&h;
        let mut mu = 0.0;
        let dir = loop {
            let damped = &info + DMatrix::identity(q, q) * mu;
            if let Some(ch) = damped.cholesky() {
                break ch.solve(&g);
            }
            mu = if mu == 0.0 {
                1e-6 * info.diagonal().amax().max(1.0)
            } else {
                mu * 10.0
            };
            if !mu.is_finite() {
                return Err(Error::Singular);
            }
        };
        let slope = g.dot(&dir);
        // Near the optimum the expected gain sits below the rounding of the
        // summed log-likelihood, so the line search cannot judge the step.
        // Take the full Newton step and keep it only if the gradient shrinks.
        if mu == 0.0 && slope < 1e-12 * ll.abs().max(1.0) {
            let cand: Vec<f64> = theta.iter().zip(dir.iter()).map(|(t, d)| t + d).collect();
            let (ll2, g2, h2) = derivatives(&cand);
            if g2.amax() < g.amax() {
                theta = cand;
                (ll, g, h) = (ll2, g2, h2);
                continue;
            }
        }
        let mut step = 1.0;
        let mut accepted = false;
        for _ in 0..60 {
            let cand: Vec<f64> = theta.iter().zip(dir.iter()).map(|(t, d)| t + step * d).collect();
            let next = loglik(&cand, xs, times, events);
            if next.is_finite() && next >= ll + 1e-4 * step * slope {
                theta = cand;
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if !accepted {
            // No ascent possible within rounding: treat as converged only
            // if the gradient is already near the tolerance.
            if g.amax() < opts.tolerance * 1e3 {
                break;
            }
            return Err(Error::NoConvergence {
                iterations,
                grad_norm: g.amax(),
            });
        }
        (ll, g, h) = derivatives(&theta);
    }
    let info = -&h;
    let cov = info.clone().try_inverse().ok_or(Error::Singular)?;
    if (0..q).any(|i| !(cov[(i, i)] > 0.0)) {
        return Err(Error::Singular);
    }
    let std_errors: Vec<f64> = (0..q).map(|i| cov[(i, i)].sqrt()).collect();
    let p_values = wald_p_values(&theta, &std_errors);
    Ok(AftModel {
        feature_names: names.to_vec(),
        intercept: theta[0],
        beta: theta[1..=p].to_vec(),
        sigma: theta[q - 1].exp(),
        std_errors,
        p_values,
        covariance: (0..q).map(|r| (0..q).map(|c| cov[(r, c)]).collect()).collect(),
        loglik: ll,
        iterations,
    })
}

impl AftModel {
    pub fn kappa(&self) -> f64 {
        1.0 / self.sigma
    }

    pub fn linear(&self, x: &[f64]) -> f64 {
        self.intercept + self.beta.iter().zip(x).map(|(b, v)| b * v).sum::<f64>()
    }

    pub fn predict(&self, x: &[f64]) -> Result<WeibullParams> {
        WeibullParams::new(self.kappa(), self.linear(x).exp())
    }

    pub fn theta(&self) -> Vec<f64> {
        let mut t = vec![self.intercept];
        t.extend(&self.beta);
        t.push(self.sigma.ln());
        t
    }

    /// `feature,coefficient,std_error,p_value`; the final row is ln σ with
    /// its test against the exponential (σ = 1).
    pub fn write_coefficients_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["feature", "coefficient", "std_error", "p_value"])?;
        let mut names = vec!["intercept".to_string()];
        names.extend(self.feature_names.iter().cloned());
        names.push("log_sigma".into());
        for (i, (name, coef)) in names.iter().zip(self.theta()).enumerate() {
            w.write_record([
                name.clone(),
                format!("{coef:.10}"),
                format!("{:.10}", self.std_errors[i]),
                format!("{:.6e}", self.p_values[i]),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}
