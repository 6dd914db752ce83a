//! Two-parameter Weibull distribution: density, survival, point summaries,
//! the conditional mean residual life used to fill in censored targets, and
//! the per-timestep composite training loss with its analytic gradient.
//!
//! Times are in years throughout. `kappa` is the shape, `lambda` the scale.

use crate::error::{Error, Result};
use crate::special::upper_incomplete_gamma_scaled;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::gamma;
use std::f64::consts::LN_2;

/// Shape/scale pair of one patient-timestep survival distribution.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeibullParams {
    kappa: f64,
    lambda: f64,
}

/// Point summaries of a Weibull distribution.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Summaries {
    pub median: f64,
    /// Absent when `kappa < 1`, where the density is unbounded at zero.
    pub mode: Option<f64>,
    pub mean: f64,
}

impl WeibullParams {
    pub fn new(kappa: f64, lambda: f64) -> Result<Self> {
        if !(kappa > 0.0) || !kappa.is_finite() {
            return Err(Error::Domain(format!("kappa must be finite and > 0, got {kappa}")));
        }
        if !(lambda > 0.0) || !lambda.is_finite() {
            return Err(Error::Domain(format!("lambda must be finite and > 0, got {lambda}")));
        }
        Ok(Self { kappa, lambda })
    }

    pub fn kappa(&self) -> f64 {
        self.kappa
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    /// Density at `tau`. For `kappa < 1` the density at zero is `+inf`.
    pub fn pdf(&self, tau: f64) -> Result<f64> {
        check_time(tau)?;
        if tau == 0.0 {
            return Ok(if self.kappa < 1.0 {
                f64::INFINITY
            } else if self.kappa == 1.0 {
                1.0 / self.lambda
            } else {
                0.0
            });
        }
        Ok(self.log_pdf_unchecked(tau).exp())
    }

    /// Natural log of the density; `tau` must be positive.
    pub fn log_pdf(&self, tau: f64) -> Result<f64> {
        if !(tau > 0.0) {
            return Err(Error::Domain(format!("log density needs tau > 0, got {tau}")));
        }
        Ok(self.log_pdf_unchecked(tau))
    }

    fn log_pdf_unchecked(&self, tau: f64) -> f64 {
        let r = tau / self.lambda;
        self.kappa.ln() - self.lambda.ln() + (self.kappa - 1.0) * r.ln() - r.powf(self.kappa)
    }

    pub fn survival(&self, tau: f64) -> Result<f64> {
        check_time(tau)?;
        Ok((-(tau / self.lambda).powf(self.kappa)).exp())
    }

    /// Instantaneous event rate, `pdf / survival`.
    pub fn hazard(&self, tau: f64) -> Result<f64> {
        check_time(tau)?;
        if tau == 0.0 {
            return self.pdf(0.0);
        }
        let r = tau / self.lambda;
        Ok(self.kappa / self.lambda * r.powf(self.kappa - 1.0))
    }

    /// Predicted median survival time.
    pub fn median(&self) -> f64 {
        self.lambda * LN_2.powf(1.0 / self.kappa)
    }

    pub fn mode(&self) -> Option<f64> {
        if self.kappa < 1.0 {
            None
        } else if self.kappa == 1.0 {
            Some(0.0)
        } else {
            Some(self.lambda * ((self.kappa - 1.0) / self.kappa).powf(1.0 / self.kappa))
        }
    }

    pub fn mean(&self) -> f64 {
        self.lambda * gamma(1.0 + 1.0 / self.kappa)
    }

    pub fn summaries(&self) -> Summaries {
        Summaries {
            median: self.median(),
            mode: self.mode(),
            mean: self.mean(),
        }
    }

    /// Expected event time given survival past `c`: `E[T | T > c]`.
    ///
    /// Uses `c + (λ/κ)·Γ(1/κ, (c/λ)^κ) / S(c)`. When `S(c)` drops below
    /// 1e−300 the asymptotic mean residual life `λ^κ c^(1−κ) / κ` is used.
    pub fn best_guess(&self, c: f64) -> Result<f64> {
        check_time(c)?;
        let x = (c / self.lambda).powf(self.kappa);
        if (-x).exp() < 1e-300 {
            return Ok(c + self.lambda.powf(self.kappa) / self.kappa * c.powf(1.0 - self.kappa));
        }
        let tail = upper_incomplete_gamma_scaled(1.0 / self.kappa, x)?;
        Ok(c + self.lambda / self.kappa * tail)
    }
}

fn check_time(tau: f64) -> Result<()> {
    if tau >= 0.0 {
        Ok(())
    } else {
        Err(Error::Domain(format!("time must be >= 0, got {tau}")))
    }
}

/// Shape at which the mode and the median of a Weibull coincide.
///
/// Solves `(κ−1)/κ = ln 2` by bisection on `[1.01, 20]`. The root does not
/// depend on the scale.
pub fn kappa_where_mode_equals_median() -> f64 {
    let g = |k: f64| (k - 1.0) / k - LN_2;
    let (mut lo, mut hi) = (1.01, 20.0);
    while hi - lo > 1e-9 {
        let mid = 0.5 * (lo + hi);
        if g(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// One timestep's share of the training loss.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossTerms {
    /// −log density at the target time.
    pub neglog: f64,
    /// Squared log error between target time and predicted median.
    pub msle: f64,
    pub total: f64,
}

impl LossTerms {
    pub fn is_finite(&self) -> bool {
        self.total.is_finite()
    }
}

/// Partial derivatives of `LossTerms::total`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossGrad {
    pub d_kappa: f64,
    pub d_lambda: f64,
}

impl LossGrad {
    pub fn is_finite(&self) -> bool {
        self.d_kappa.is_finite() && self.d_lambda.is_finite()
    }
}

fn check_target(tau: f64) -> Result<()> {
    if tau > 0.0 {
        Ok(())
    } else {
        Err(Error::Domain(format!("loss target must be > 0, got {tau}")))
    }
}

/// Negative log-likelihood plus squared log error of the median.
///
/// A non-finite `total` (density underflow or overflow of `(τ/λ)^κ`) is
/// returned as is; check [`LossTerms::is_finite`].
pub fn composite_loss(p: &WeibullParams, tau: f64) -> Result<LossTerms> {
    check_target(tau)?;
    let neglog = -p.log_pdf_unchecked(tau);
    let diff = (tau + 1.0).ln() - (p.median() + 1.0).ln();
    let msle = diff * diff;
    Ok(LossTerms {
        neglog,
        msle,
        total: neglog + msle,
    })
}

/// Analytic gradient of [`composite_loss`] with respect to shape and scale.
pub fn composite_loss_grad(p: &WeibullParams, tau: f64) -> Result<LossGrad> {
    check_target(tau)?;
    let (k, l) = (p.kappa, p.lambda);
    let r = tau / l;
    let log_r = r.ln();
    let rk = r.powf(k);

    let dneg_dk = -(1.0 / k + log_r - rk * log_r);
    let dneg_dl = (k - k * rk) / l;

    let median = p.median();
    let diff = (tau + 1.0).ln() - (median + 1.0).ln();
    let dmsle_dmedian = -2.0 * diff / (median + 1.0);
    let dmedian_dl = median / l;
    let dmedian_dk = -median * LN_2.ln() / (k * k);

    Ok(LossGrad {
        d_kappa: dneg_dk + dmsle_dmedian * dmedian_dk,
        d_lambda: dneg_dl + dmsle_dmedian * dmedian_dl,
    })
}
