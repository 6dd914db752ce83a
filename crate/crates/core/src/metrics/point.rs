//! Errors of the predicted median against observed or imputed times.

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct UncensoredL1 {
    pub n: usize,
    pub mean: f64,
    pub median: f64,
    pub sd: f64,
    /// Mean signed error among over-predictions.
    pub over_mean: Option<f64>,
    /// Mean signed error among under-predictions (negative).
    pub under_mean: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct L1Report {
    pub uncensored: Option<UncensoredL1>,
    /// Mean |pmst − best guess| over censored patients.
    pub margin_mean: Option<f64>,
    pub n_censored: usize,
}

pub fn median(v: &mut [f64]) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

fn mean(v: &[f64]) -> Option<f64> {
    (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
}

/// `best_guess[i]` must be present for every censored patient.
pub fn l1_losses(pmst: &[f64], times: &[f64], events: &[bool], best_guess: &[Option<f64>]) -> Result<L1Report> {
    let n = pmst.len();
    if times.len() != n || events.len() != n || best_guess.len() != n {
        return Err(Error::InvalidInput("L1 losses need matching inputs".into()));
    }
    let mut signed = vec![];
    let mut margin = vec![];
    for i in 0..n {
        if events[i] {
            signed.push(pmst[i] - times[i]);
        } else {
            let bg =
                best_guess[i].ok_or_else(|| Error::InvalidInput(format!("censored patient {i} lacks a best guess")))?;
            margin.push((pmst[i] - bg).abs());
        }
    }
    let uncensored = (!signed.is_empty()).then(|| {
        let mut abs: Vec<f64> = signed.iter().map(|d| d.abs()).collect();
        let m = mean(&abs).unwrap();
        let sd = if abs.len() > 1 {
            (abs.iter().map(|a| (a - m).powi(2)).sum::<f64>() / (abs.len() - 1) as f64).sqrt()
        } else {
            0.0
        };
        let over: Vec<f64> = signed.iter().copied().filter(|&d| d > 0.0).collect();
        let under: Vec<f64> = signed.iter().copied().filter(|&d| d < 0.0).collect();
        UncensoredL1 {
            n: signed.len(),
            mean: m,
            median: median(&mut abs),
            sd,
            over_mean: mean(&over),
            under_mean: mean(&under),
        }
    });
    Ok(L1Report {
        uncensored,
        margin_mean: mean(&margin),
        n_censored: margin.len(),
    })
}

/// Share of uncensored patients whose time is more than twice, or less
/// than half, the prediction.
pub fn parkes_serious_error(pmst: &[f64], times: &[f64]) -> Result<f64> {
    if pmst.is_empty() || pmst.len() != times.len() {
        return Err(Error::InvalidInput(
            "Parkes error needs matching, nonempty inputs".into(),
        ));
    }
    let serious = pmst
        .iter()
        .zip(times)
        .filter(|(&p, &t)| t > 2.0 * p || t < 0.5 * p)
        .count();
    Ok(serious as f64 / pmst.len() as f64)
}
