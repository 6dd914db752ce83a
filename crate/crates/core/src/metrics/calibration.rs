//! Calibration at a fixed horizon: Hosmer-Lemeshow and the IPCW Brier score.

use super::km::{censoring_km, kaplan_meier};
use crate::error::{Error, Result};
use statrs::distribution::{ChiSquared, ContinuousCDF};

/// Bins with a mean predicted probability of exactly 0 or 1 are evaluated
/// at this distance from the boundary.
pub const HL_CLAMP: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq)]
pub struct BinStats {
    pub n: usize,
    /// Mean predicted event probability.
    pub mean_predicted: f64,
    /// Kaplan-Meier survival of the bin at the horizon.
    pub km_survival: f64,
    pub clamped: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HosmerLemeshow {
    pub statistic: f64,
    pub p_value: f64,
    pub bins: Vec<BinStats>,
}

/// Bin sizes for `n` items in `b` bins, the remainder going to the
/// leading bins.
pub fn bin_sizes(n: usize, b: usize) -> Vec<usize> {
    (0..b).map(|i| n / b + usize::from(i < n % b)).collect()
}

pub fn hosmer_lemeshow(
    survival_probs: &[f64],
    times: &[f64],
    events: &[bool],
    tau_star: f64,
    n_bins: usize,
) -> Result<HosmerLemeshow> {
    let n = survival_probs.len();
    if times.len() != n || events.len() != n {
        return Err(Error::InvalidInput("Hosmer-Lemeshow needs matching inputs".into()));
    }
    if n_bins < 2 || n < n_bins {
        return Err(Error::InvalidInput(format!(
            "Hosmer-Lemeshow needs at least {n_bins} patients and 2 or more bins"
        )));
    }
    let mut order: Vec<usize> = (0..n).collect();
    // Ties in prediction are broken by the data so the bins do not depend
    // on input order.
    order.sort_by(|&a, &b| {
        survival_probs[a]
            .total_cmp(&survival_probs[b])
            .then(times[a].total_cmp(&times[b]))
            .then(events[a].cmp(&events[b]))
    });
    let mut bins = vec![];
    let mut statistic = 0.0;
    let mut start = 0;
    for size in bin_sizes(n, n_bins) {
        let idx = &order[start..start + size];
        start += size;
        let t: Vec<f64> = idx.iter().map(|&i| times[i]).collect();
        let e: Vec<bool> = idx.iter().map(|&i| events[i]).collect();
        let km = kaplan_meier(&t, &e)?.at(tau_star);
        let mean_predicted = idx.iter().map(|&i| 1.0 - survival_probs[i]).sum::<f64>() / size as f64;
        let clamped = mean_predicted <= 0.0 || mean_predicted >= 1.0;
        let p = mean_predicted.clamp(HL_CLAMP, 1.0 - HL_CLAMP);
        let observed = 1.0 - km;
        statistic += size as f64 * (observed - mean_predicted).powi(2) / (p * (1.0 - p));
        bins.push(BinStats {
            n: size,
            mean_predicted,
            km_survival: km,
            clamped,
        });
    }
    let df = n_bins.saturating_sub(2).max(1) as f64;
    let chi = ChiSquared::new(df).map_err(|e| Error::Domain(e.to_string()))?;
    Ok(HosmerLemeshow {
        statistic,
        p_value: 1.0 - chi.cdf(statistic),
        bins,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Brier {
    pub score: f64,
    /// Patients dropped because the censoring survival was zero.
    pub dropped: usize,
    pub used: usize,
}

/// Inverse-probability-of-censoring weighted Brier score at `tau_star`.
pub fn brier(survival_probs: &[f64], times: &[f64], events: &[bool], tau_star: f64) -> Result<Brier> {
    let n = survival_probs.len();
    if times.len() != n || events.len() != n || n == 0 {
        return Err(Error::InvalidInput(
            "Brier score needs matching, nonempty inputs".into(),
        ));
    }
    let g = censoring_km(times, events)?;
    let g_star = g.at(tau_star);
    let (mut total, mut used, mut dropped) = (0.0, 0usize, 0usize);
    for i in 0..n {
        let s = survival_probs[i];
        if times[i] <= tau_star {
            if !events[i] {
                used += 1;
                continue;
            }
            let w = g.left_limit(times[i]);
            if w <= 0.0 {
                dropped += 1;
                continue;
            }
            total += s * s / w;
        } else {
            if g_star <= 0.0 {
                dropped += 1;
                continue;
            }
            total += (1.0 - s) * (1.0 - s) / g_star;
        }
        used += 1;
    }
    if used == 0 {
        return Err(Error::InvalidInput("Brier score: every patient dropped".into()));
    }
    Ok(Brier {
        score: total / used as f64,
        dropped,
        used,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bins_spread_remainder_first() {
        assert_eq!(bin_sizes(23, 10), vec![3, 3, 3, 2, 2, 2, 2, 2, 2, 2]);
        assert_eq!(bin_sizes(20, 10).iter().sum::<usize>(), 20);
    }

    #[test]
    fn constant_half_predictor() {
        let t = [1.0, 2.0, 3.0, 4.0];
        let e = [true; 4];
        let b = brier(&[0.5; 4], &t, &e, 2.5).unwrap();
        assert_eq!(b.score, 0.25);
        let perfect = brier(&[0.0, 0.0, 1.0, 1.0], &t, &e, 2.5).unwrap();
        assert_eq!(perfect.score, 0.0);
    }
}
