//! Rotating-fold cross-validation: each fold is the test chunk once, the
//! next fold validates, the rest train.

use super::config::TrainConfig;
use super::loss::Example;
use super::targets::build_target;
use super::trainer::{train_model_with, EpochRecord};
use crate::cohort::{compute_norms, encode, Assignment, BaselineDesign, FeatureRoster, FoldAssignment, Norms};
use crate::cohort::{PatientRecord, TimeGrid};
use crate::error::{Error, Result};
use crate::grud::Checkpoint;
use crate::mtlr::{self, MtlrModel, MtlrOptions};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FoldRoles {
    pub test: usize,
    pub validation: usize,
}

/// Fold `f` tests on chunk `f` and validates on the next chunk.
pub fn fold_roles(f: usize, k: usize) -> FoldRoles {
    FoldRoles {
        test: f,
        validation: f % k + 1,
    }
}

#[derive(Debug, Clone)]
pub struct FoldRun {
    pub fold: usize,
    pub checkpoint: Checkpoint,
    pub curve: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub clipped_steps: usize,
    pub final_gap_ok: bool,
    pub test_ids: Vec<String>,
}

/// Everything fitted on one fold's training chunks before the network.
#[derive(Debug, Clone)]
pub struct FoldPrep {
    pub norms: Norms,
    pub design: BaselineDesign,
    pub mtlr: MtlrModel,
    pub train: Vec<Example>,
    pub validation: Vec<Example>,
}

pub fn fit_mtlr(
    records: &[PatientRecord],
    roster: &FeatureRoster,
    opts: &MtlrOptions,
) -> Result<(BaselineDesign, MtlrModel)> {
    let design = BaselineDesign::fit(records, roster)?;
    let xs = design.matrix(records, roster);
    let times: Vec<f64> = records.iter().map(|r| r.observed_years()).collect();
    let events: Vec<bool> = records.iter().map(|r| r.event).collect();
    let mut model = mtlr::fit(&xs, &times, &events, opts)?;
    model.feature_names = design.names.clone();
    Ok((design, model))
}

/// Encodes records and attaches targets; censored patients take their
/// mean survival from `mtlr`.
pub fn examples(
    records: &[PatientRecord],
    roster: &FeatureRoster,
    grid: &TimeGrid,
    norms: &Norms,
    design: &BaselineDesign,
    mtlr: &MtlrModel,
    tau_floor: f64,
) -> Result<Vec<Example>> {
    records
        .iter()
        .map(|r| {
            let seq = encode(r, roster, grid, norms)?;
            let mean = (!r.event).then(|| mtlr.point_estimates(&design.row(r, roster)).mean);
            let target = build_target(&seq, mean, tau_floor)?;
            Ok(Example { seq, target })
        })
        .collect()
}

pub fn prepare_fold(
    train: &[PatientRecord],
    validation: &[PatientRecord],
    roster: &FeatureRoster,
    grid: &TimeGrid,
    cfg: &TrainConfig,
    mtlr_opts: &MtlrOptions,
) -> Result<FoldPrep> {
    let norms = compute_norms(train, roster, grid)?;
    let (design, mtlr) = fit_mtlr(train, roster, mtlr_opts)?;
    let train_ex = examples(train, roster, grid, &norms, &design, &mtlr, cfg.tau_floor)?;
    let val_ex = examples(validation, roster, grid, &norms, &design, &mtlr, cfg.tau_floor)?;
    Ok(FoldPrep {
        norms,
        design,
        mtlr,
        train: train_ex,
        validation: val_ex,
    })
}

/// Trains the requested folds (all of `1..=k` when `which` is empty).
#[allow(clippy::too_many_arguments)]
pub fn cross_validate(
    records: &[PatientRecord],
    folds: &FoldAssignment,
    roster: &FeatureRoster,
    grid: &TimeGrid,
    cfg: &TrainConfig,
    mtlr_opts: &MtlrOptions,
    which: &[usize],
    mut on_epoch: impl FnMut(&EpochRecord),
) -> Result<Vec<FoldRun>> {
    let k = folds.k;
    if k < 3 {
        return Err(Error::InvalidInput(format!("rotation needs at least 3 folds, got {k}")));
    }
    let wanted: Vec<usize> = if which.is_empty() {
        (1..=k).collect()
    } else {
        which.to_vec()
    };
    let mut runs = vec![];
    for f in wanted {
        if !(1..=k).contains(&f) {
            return Err(Error::InvalidInput(format!("fold {f} outside 1..={k}")));
        }
        let roles = fold_roles(f, k);
        let pick = |a: usize| -> Vec<PatientRecord> {
            folds
                .filter(records, Assignment::Fold(a))
                .into_iter()
                .cloned()
                .collect()
        };
        let train: Vec<PatientRecord> = (1..=k)
            .filter(|&a| a != roles.test && a != roles.validation)
            .flat_map(pick)
            .collect();
        let validation = pick(roles.validation);
        let test_ids = pick(roles.test).into_iter().map(|r| r.id).collect();
        let prep = prepare_fold(&train, &validation, roster, grid, cfg, mtlr_opts)?;
        let out = train_model_with(&prep.train, &prep.validation, cfg, f, &mut on_epoch)?;
        let checkpoint = Checkpoint::new(
            &out.params,
            roster,
            grid,
            &prep.norms,
            serde_json::to_value(cfg)?,
            cfg.seed,
            Some(f),
        );
        runs.push(FoldRun {
            fold: f,
            checkpoint,
            curve: out.curve,
            best_epoch: out.best_epoch,
            clipped_steps: out.clipped_steps,
            final_gap_ok: out.final_gap_ok,
            test_ids,
        });
    }
    Ok(runs)
}
