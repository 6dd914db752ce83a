//! Weighted composite loss over a batch and its parameter gradient.

use super::targets::TrainingTarget;
use crate::cohort::EncodedSequence;
use crate::error::Result;
use crate::grud::{backward, forward, forward_train, Dropout, GrudParameters};
use crate::weibull::{composite_loss, composite_loss_grad};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

/// Per-step losses above this (or non-finite) are replaced by it and
/// contribute no gradient.
pub const LOSS_CLIP: f64 = 1e6;

#[derive(Debug, Clone)]
pub struct Example {
    pub seq: EncodedSequence,
    pub target: TrainingTarget,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClippedStep {
    pub patient_id: String,
    pub step: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BatchLoss {
    /// Σ w Σ_t loss / Σ T.
    pub mean: f64,
    pub steps: usize,
    pub clipped: Vec<ClippedStep>,
}

struct PatientPart {
    loss: f64,
    steps: usize,
    clipped: Vec<ClippedStep>,
    grad: Option<Vec<f64>>,
}

/// Dropout settings for one pass; each patient draws its own stream.
#[derive(Debug, Clone, Copy)]
pub struct DropoutSeed {
    pub rate: f64,
    pub seed: u64,
}

fn patient(
    params: &GrudParameters,
    ex: &Example,
    want_grad: bool,
    dropout: Option<(f64, ChaCha8Rng)>,
) -> Result<PatientPart> {
    let n = ex.target.steps().min(ex.seq.valid_steps);
    let w = ex.target.weight;
    let trace = match (want_grad, dropout) {
        (true, Some((rate, mut rng))) => forward_train(params, &ex.seq, Some(Dropout { rate, rng: &mut rng }))?,
        (true, None) => forward_train::<ChaCha8Rng>(params, &ex.seq, None)?,
        (false, _) => forward(params, &ex.seq, false)?,
    };
    let mut loss = 0.0;
    let mut clipped = vec![];
    let mut dk = vec![0.0; trace.outputs.len()];
    let mut dl = vec![0.0; trace.outputs.len()];
    for t in 0..n {
        let p = &trace.outputs[t];
        let tau = ex.target.tau[t];
        let terms = composite_loss(p, tau)?;
        if !terms.is_finite() || terms.total > LOSS_CLIP {
            loss += w * LOSS_CLIP;
            clipped.push(ClippedStep {
                patient_id: ex.seq.patient_id.clone(),
                step: t,
            });
            continue;
        }
        loss += w * terms.total;
        if want_grad {
            let g = composite_loss_grad(p, tau)?;
            if g.is_finite() {
                dk[t] = w * g.d_kappa;
                dl[t] = w * g.d_lambda;
            } else {
                clipped.push(ClippedStep {
                    patient_id: ex.seq.patient_id.clone(),
                    step: t,
                });
            }
        }
    }
    let grad = if want_grad {
        let mut g = vec![0.0; params.values.len()];
        backward(
            params,
            &ex.seq,
            trace.cache.as_ref().expect("cache kept"),
            &dk,
            &dl,
            &mut g,
        );
        Some(g)
    } else {
        None
    };
    Ok(PatientPart {
        loss,
        steps: n,
        clipped,
        grad,
    })
}

fn dropout_rng(d: &DropoutSeed, index: usize) -> (f64, ChaCha8Rng) {
    let mut rng = ChaCha8Rng::seed_from_u64(d.seed);
    rng.set_stream(index as u64 + 1);
    (d.rate, rng)
}

fn run(
    params: &GrudParameters,
    batch: &[&Example],
    want_grad: bool,
    dropout: Option<DropoutSeed>,
) -> Result<(BatchLoss, Option<Vec<f64>>)> {
    // Parallel per-patient work, then a reduction in batch order.
    let parts: Vec<PatientPart> = batch
        .par_iter()
        .enumerate()
        .map(|(i, ex)| {
            let d = dropout.filter(|d| d.rate > 0.0).map(|d| dropout_rng(&d, i));
            patient(params, ex, want_grad, d)
        })
        .collect::<Result<_>>()?;
    let steps: usize = parts.iter().map(|p| p.steps).sum();
    let denom = steps.max(1) as f64;
    let mut total = 0.0;
    let mut clipped = vec![];
    let mut grad = want_grad.then(|| vec![0.0; params.values.len()]);
    for p in parts {
        total += p.loss;
        clipped.extend(p.clipped);
        if let (Some(acc), Some(g)) = (grad.as_mut(), p.grad) {
            for (a, v) in acc.iter_mut().zip(g) {
                *a += v;
            }
        }
    }
    if let Some(g) = grad.as_mut() {
        g.iter_mut().for_each(|v| *v /= denom);
    }
    Ok((
        BatchLoss {
            mean: total / denom,
            steps,
            clipped,
        },
        grad,
    ))
}

pub fn batch_loss(params: &GrudParameters, batch: &[&Example]) -> Result<BatchLoss> {
    Ok(run(params, batch, false, None)?.0)
}

/// Mean loss and its gradient with respect to `params.values`.
pub fn batch_loss_and_grad(
    params: &GrudParameters,
    batch: &[&Example],
    dropout: Option<DropoutSeed>,
) -> Result<(BatchLoss, Vec<f64>)> {
    let (loss, grad) = run(params, batch, true, dropout)?;
    Ok((loss, grad.expect("gradient requested")))
}
