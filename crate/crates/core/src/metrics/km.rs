//! Product-limit estimators for survival and for censoring.

use crate::error::{Error, Result};

/// Right-continuous step function that drops at `times[i]` to `values[i]`.
#[derive(Debug, Clone, PartialEq)]
pub struct StepFunction {
    times: Vec<f64>,
    values: Vec<f64>,
}

impl StepFunction {
    pub fn at(&self, t: f64) -> f64 {
        let k = self.times.partition_point(|&u| u <= t);
        if k == 0 {
            1.0
        } else {
            self.values[k - 1]
        }
    }

    /// Value just before `t`.
    pub fn left_limit(&self, t: f64) -> f64 {
        let k = self.times.partition_point(|&u| u < t);
        if k == 0 {
            1.0
        } else {
            self.values[k - 1]
        }
    }

    pub fn jump_times(&self) -> &[f64] {
        &self.times
    }
}

fn product_limit(times: &[f64], events: &[bool], of_censoring: bool) -> Result<StepFunction> {
    if times.is_empty() || times.len() != events.len() {
        return Err(Error::InvalidInput(
            "Kaplan-Meier needs matching, nonempty inputs".into(),
        ));
    }
    if let Some(t) = times.iter().find(|&&t| !(t > 0.0)) {
        return Err(Error::InvalidInput(format!(
            "Kaplan-Meier times must be positive, got {t}"
        )));
    }
    let mut order: Vec<usize> = (0..times.len()).collect();
    order.sort_by(|&a, &b| times[a].total_cmp(&times[b]));
    let mut at_risk = times.len();
    let mut s = 1.0;
    let mut out = StepFunction {
        times: vec![],
        values: vec![],
    };
    let mut i = 0;
    while i < order.len() {
        let t = times[order[i]];
        let (mut ev, mut cens) = (0usize, 0usize);
        while i < order.len() && times[order[i]] == t {
            if events[order[i]] {
                ev += 1;
            } else {
                cens += 1;
            }
            i += 1;
        }
        // Events precede censorings at a tied time.
        let (jumps, risk) = if of_censoring {
            (cens, at_risk - ev)
        } else {
            (ev, at_risk)
        };
        if jumps > 0 && risk > 0 {
            s *= 1.0 - jumps as f64 / risk as f64;
            out.times.push(t);
            out.values.push(s);
        }
        at_risk -= ev + cens;
    }
    Ok(out)
}

/// Survival Kaplan-Meier estimate.
pub fn kaplan_meier(times: &[f64], events: &[bool]) -> Result<StepFunction> {
    product_limit(times, events, false)
}

/// Kaplan-Meier estimate of the censoring distribution, G(t) = P(C > t).
pub fn censoring_km(times: &[f64], events: &[bool]) -> Result<StepFunction> {
    product_limit(times, events, true)
}
