//! Mini-batch training of one model with validation tracking.

use super::config::{EarlyStopMode, TrainConfig};
use super::loss::{batch_loss, batch_loss_and_grad, DropoutSeed, Example};
use super::optim::{clip_global_norm, AmsGrad};
use crate::error::{Error, Result};
use crate::grud::{GrudParameters, HeadMode};
use rand::seq::SliceRandom;
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::io::Write;

/// An epoch whose full-pass training loss exceeds this aborts the fold.
pub const DIVERGENCE_LOSS: f64 = 1e5;

#[derive(Debug, Clone, PartialEq)]
pub struct EpochRecord {
    pub fold: usize,
    pub epoch: usize,
    pub train_loss: f64,
    /// NaN when there is no validation set.
    pub val_loss: f64,
    /// Validation exceeded training loss by more than the allowed gap.
    pub gap_exceeded: bool,
    /// Training ended early after this epoch.
    pub stopped: bool,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Weights at the best validation epoch (the last epoch without
    /// validation data).
    pub params: GrudParameters,
    pub best_epoch: usize,
    pub best_val_loss: f64,
    pub curve: Vec<EpochRecord>,
    /// Steps whose loss was clipped, summed over all batches.
    pub clipped_steps: usize,
    /// Whether the last epoch's validation/training gap was within bounds.
    pub final_gap_ok: bool,
}

pub fn head_mode(cfg: &TrainConfig) -> HeadMode {
    match cfg.fixed_kappa {
        Some((center, halfwidth)) => HeadMode::FixedKappa { center, halfwidth },
        None => HeadMode::Free,
    }
}

fn mean_target(train: &[Example]) -> f64 {
    let (s, n) = train
        .iter()
        .flat_map(|e| e.target.tau.iter())
        .fold((0.0, 0usize), |(s, n), &t| (s + t, n + 1));
    if n == 0 {
        1.0
    } else {
        s / n as f64
    }
}

fn relative_gap(train: f64, val: f64) -> f64 {
    (val - train) / train.abs().max(1e-12)
}

pub fn train_model(train: &[Example], val: &[Example], cfg: &TrainConfig, fold: usize) -> Result<TrainOutcome> {
    train_model_with(train, val, cfg, fold, |_| {})
}

/// As [`train_model`], calling `on_epoch` after every epoch.
pub fn train_model_with(
    train: &[Example],
    val: &[Example],
    cfg: &TrainConfig,
    fold: usize,
    mut on_epoch: impl FnMut(&EpochRecord),
) -> Result<TrainOutcome> {
    cfg.validate()?;
    let first = train
        .first()
        .ok_or_else(|| Error::InvalidInput("training set is empty".into()))?;
    let nf = first.seq.n_features;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(fold as u64);
    let mut params = GrudParameters::init(nf, cfg.hidden, head_mode(cfg), mean_target(train), rng.next_u64());
    let mut opt = AmsGrad::new(params.values.len(), cfg.learning_rate);
    let mut order: Vec<usize> = (0..train.len()).collect();
    let all_train: Vec<&Example> = train.iter().collect();
    let all_val: Vec<&Example> = val.iter().collect();

    let mut curve = Vec::with_capacity(cfg.epochs);
    let mut best: Option<(f64, usize, GrudParameters)> = None;
    let mut breaches = 0;
    let mut clipped_steps = 0;
    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut rng);
        for chunk in order.chunks(cfg.batch_size) {
            let batch: Vec<&Example> = chunk.iter().map(|&i| &train[i]).collect();
            let dropout = (cfg.dropout > 0.0).then(|| DropoutSeed {
                rate: cfg.dropout,
                seed: rng.next_u64(),
            });
            let (loss, mut grad) = batch_loss_and_grad(&params, &batch, dropout).map_err(|e| match e {
                Error::NonFinite { .. } => Error::Divergence {
                    fold,
                    epoch,
                    loss: f64::NAN,
                },
                other => other,
            })?;
            clipped_steps += loss.clipped.len();
            let norm = clip_global_norm(&mut grad, cfg.grad_clip_norm);
            if !norm.is_finite() {
                return Err(Error::Divergence {
                    fold,
                    epoch,
                    loss: loss.mean,
                });
            }
            opt.step(&mut params.values, &grad);
        }
        let diverged = |loss| Error::Divergence { fold, epoch, loss };
        if !params.all_finite() {
            return Err(diverged(f64::NAN));
        }
        let train_loss = batch_loss(&params, &all_train).map_err(|_| diverged(f64::NAN))?.mean;
        if !train_loss.is_finite() || train_loss > DIVERGENCE_LOSS {
            return Err(diverged(train_loss));
        }
        let val_loss = if all_val.is_empty() {
            f64::NAN
        } else {
            batch_loss(&params, &all_val).map_err(|_| diverged(f64::NAN))?.mean
        };

        let score = if val_loss.is_nan() { f64::NEG_INFINITY } else { val_loss };
        if best.as_ref().is_none_or(|(b, _, _)| score <= *b) {
            best = Some((score, epoch, params.clone()));
        }
        let gap_exceeded = !val_loss.is_nan() && relative_gap(train_loss, val_loss) > cfg.early_stop_gap;
        breaches = if gap_exceeded { breaches + 1 } else { 0 };
        let stopped = cfg.early_stop_mode == EarlyStopMode::GapStop && breaches >= 2 && epoch < cfg.epochs;
        let rec = EpochRecord {
            fold,
            epoch,
            train_loss,
            val_loss,
            gap_exceeded,
            stopped,
        };
        on_epoch(&rec);
        curve.push(rec);
        if stopped {
            break;
        }
    }
    let (best_val_loss, best_epoch, params) = best.expect("at least one epoch");
    let final_gap_ok = !curve.last().is_some_and(|r| r.gap_exceeded);
    Ok(TrainOutcome {
        params,
        best_epoch,
        best_val_loss: if best_val_loss.is_finite() {
            best_val_loss
        } else {
            f64::NAN
        },
        curve,
        clipped_steps,
        final_gap_ok,
    })
}

pub fn write_curve_csv<W: Write>(records: &[EpochRecord], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["fold", "epoch", "train_loss", "val_loss", "stopped"])?;
    for r in records {
        w.write_record([
            r.fold.to_string(),
            r.epoch.to_string(),
            format!("{:.10}", r.train_loss),
            format!("{:.10}", r.val_loss),
            r.stopped.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}
