//! Batch commands: each reads its inputs, writes its outputs and a manifest.

use crate::data::{
    create_dir, load_folds, parse_list, read_json, select, training_set, write_json, AftArtifact, CohortArgs,
    MtlrArtifact,
};
use crate::error::{CliError, CliResult};
use crate::manifest::{beside, Recorder};
use clap::Args;
use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use survgru::aft::{self, AftOptions};
use survgru::analysis::{partial_dependence, permutation_importance, write_importance_csv, write_pdp_csv};
use survgru::analysis::{EncodedModel, ImportanceOptions};
use survgru::cohort::io::{write_csv, write_jsonl};
use survgru::cohort::split::assign_all;
use survgru::cohort::{
    compute_norms, encode, generate_synthetic_cohort, Assignment, BaselineDesign, FeatureRoster, PatientRecord,
    SyntheticConfig, TimeGrid, DAYS_PER_YEAR,
};
use survgru::grud::Checkpoint;
use survgru::metrics::{
    grud_trajectories, time_sweep, ModelGroup, Prediction, SweepConfig, SweepPatient, Trajectories,
};
use survgru::mtlr::{self, MtlrOptions};
use survgru::training::trainer::write_curve_csv;
use survgru::training::{build_target, cross_validate, TrainConfig};

#[derive(Debug, Args)]
pub struct GenerateArgs {
    /// Number of patients.
    #[arg(long, default_value_t = 200)]
    pub n: usize,
    #[arg(long)]
    pub seed: u64,
    /// Cohort JSONL to write.
    #[arg(long)]
    pub out: PathBuf,
    /// Also write the ground truth behind each patient as JSONL.
    #[arg(long)]
    pub truth: Option<PathBuf>,
    /// Also write observations.csv, patients.csv and comorbidities.csv here.
    #[arg(long)]
    pub csv_dir: Option<PathBuf>,
    /// Target share of censored patients.
    #[arg(long)]
    pub censoring: Option<f64>,
}

pub fn cohort_generate(a: &GenerateArgs) -> CliResult<()> {
    let mut rec = Recorder::new("cohort generate");
    rec.seed = Some(a.seed);
    let mut cfg = SyntheticConfig {
        n_patients: a.n,
        ..Default::default()
    };
    if let Some(c) = a.censoring {
        cfg.censoring_target = c;
    }
    let roster = FeatureRoster::standard();
    let grid = TimeGrid::standard();
    cfg.validate(&roster).map_err(|e| CliError::Usage(e.to_string()))?;
    let cohort = generate_synthetic_cohort(&cfg, &roster, &grid, a.seed)?;
    eprintln!(
        "generated {} patients, {:.1}% censored",
        cohort.records.len(),
        100.0 * cohort.censored_fraction
    );
    if !cohort.target_reached {
        eprintln!("warning: censoring target {} not reached", cfg.censoring_target);
    }
    write_jsonl(&cohort.records, &a.out)?;
    rec.output(&a.out);
    if let Some(t) = &a.truth {
        let mut text = String::new();
        for g in &cohort.truth {
            text.push_str(&serde_json::to_string(g)?);
            text.push('\n');
        }
        std::fs::write(t, text)?;
        rec.output(t);
    }
    if let Some(dir) = &a.csv_dir {
        create_dir(dir)?;
        let paths = ["observations.csv", "patients.csv", "comorbidities.csv"].map(|n| dir.join(n));
        write_csv(&cohort.records, &paths[0], &paths[1], &paths[2])?;
        paths.iter().for_each(|p| rec.output(p));
    }
    rec.write(&beside(&a.out))
}

#[derive(Debug, Args)]
pub struct EncodeArgs {
    #[command(flatten)]
    pub cohort: CohortArgs,
    #[arg(long)]
    pub seed: u64,
    #[arg(long)]
    pub out_dir: PathBuf,
    /// Patients held out from cross-validation (default: a fifth).
    #[arg(long)]
    pub holdout: Option<usize>,
    /// Cross-validation folds.
    #[arg(long, default_value_t = 5)]
    pub k: usize,
}

pub fn prep_encode(a: &EncodeArgs) -> CliResult<()> {
    let mut rec = Recorder::new("prep encode");
    rec.seed = Some(a.seed);
    let records = a.cohort.load(&mut rec)?;
    let roster = FeatureRoster::standard();
    let grid = TimeGrid::standard();
    let holdout = a.holdout.unwrap_or(records.len() / 5);
    let folds = assign_all(&records, holdout, a.k, a.seed)?;
    let train: Vec<PatientRecord> = records
        .iter()
        .filter(|r| folds.get(&r.id) != Some(Assignment::Holdout))
        .cloned()
        .collect();
    let norms = compute_norms(&train, &roster, &grid)?;
    for w in &norms.warnings {
        eprintln!("warning: {w}");
    }
    create_dir(&a.out_dir)?;
    let folds_path = a.out_dir.join("folds.json");
    write_json(&folds, &folds_path)?;
    let norms_path = a.out_dir.join("norms.json");
    write_json(&norms, &norms_path)?;
    let enc_path = a.out_dir.join("encoded.jsonl");
    let mut text = String::new();
    let mut out_of_window = 0;
    for r in &records {
        let seq = encode(r, &roster, &grid, &norms)?;
        out_of_window += seq.stats.out_of_window;
        text.push_str(&serde_json::to_string(&seq)?);
        text.push('\n');
    }
    std::fs::write(&enc_path, text)?;
    if out_of_window > 0 {
        eprintln!("note: {out_of_window} observations fell outside the grid window");
    }
    eprintln!(
        "{} patients: {holdout} held out, {} in {} folds",
        records.len(),
        records.len() - holdout,
        a.k
    );
    for p in [&folds_path, &norms_path, &enc_path] {
        rec.output(p);
    }
    rec.write(&a.out_dir.join("manifest.json"))
}

#[derive(Debug, Args)]
pub struct TrainGrudArgs {
    #[command(flatten)]
    pub cohort: CohortArgs,
    /// Fold assignment written by `prep encode`.
    #[arg(long)]
    pub folds: PathBuf,
    #[arg(long)]
    pub out_dir: PathBuf,
    #[arg(long)]
    pub seed: u64,
    /// Flat `key = value` training config; flags below override it.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub epochs: Option<String>,
    #[arg(long)]
    pub learning_rate: Option<String>,
    #[arg(long)]
    pub batch_size: Option<String>,
    #[arg(long)]
    pub hidden: Option<String>,
    #[arg(long)]
    pub grad_clip_norm: Option<String>,
    #[arg(long)]
    pub early_stop_gap: Option<String>,
    /// `gap_stop`, `report` or `off`.
    #[arg(long)]
    pub early_stop_mode: Option<String>,
    /// `center,halfwidth`, or `none`.
    #[arg(long)]
    pub fixed_kappa: Option<String>,
    #[arg(long)]
    pub dropout: Option<String>,
    /// Train only these folds (repeatable); all folds by default.
    #[arg(long)]
    pub fold: Vec<usize>,
}

impl TrainGrudArgs {
    fn config(&self, rec: &mut Recorder) -> CliResult<TrainConfig> {
        let mut cfg = match &self.config {
            Some(p) => {
                rec.input(p);
                rec.config = Some(p.clone());
                TrainConfig::load(p).map_err(|e| CliError::Usage(format!("{}: {e}", p.display())))?
            }
            None => TrainConfig::default(),
        };
        let flags = [
            ("epochs", &self.epochs),
            ("learning_rate", &self.learning_rate),
            ("batch_size", &self.batch_size),
            ("hidden", &self.hidden),
            ("grad_clip_norm", &self.grad_clip_norm),
            ("early_stop_gap", &self.early_stop_gap),
            ("early_stop_mode", &self.early_stop_mode),
            ("fixed_kappa", &self.fixed_kappa),
            ("dropout", &self.dropout),
        ];
        for (key, value) in flags {
            if let Some(v) = value {
                cfg.set(key, v).map_err(|e| CliError::Usage(e.to_string()))?;
            }
        }
        cfg.seed = self.seed;
        cfg.validate().map_err(|e| CliError::Usage(e.to_string()))?;
        Ok(cfg)
    }
}

pub fn train_grud(a: &TrainGrudArgs) -> CliResult<()> {
    let mut rec = Recorder::new("train grud");
    rec.seed = Some(a.seed);
    let cfg = a.config(&mut rec)?;
    let records = a.cohort.load(&mut rec)?;
    let folds = load_folds(&a.folds, &mut rec)?;
    select(&records, &folds, Assignment::Holdout)?;
    let roster = FeatureRoster::standard();
    let grid = TimeGrid::standard();
    create_dir(&a.out_dir)?;
    let runs = cross_validate(
        &records,
        &folds,
        &roster,
        &grid,
        &cfg,
        &MtlrOptions::default(),
        &a.fold,
        |r| {
            eprintln!(
                "fold {} epoch {:>3}: train {:.5} val {:.5}{}",
                r.fold,
                r.epoch,
                r.train_loss,
                r.val_loss,
                if r.stopped { " (stopped)" } else { "" }
            )
        },
    )?;
    let cfg_path = a.out_dir.join("train_config.kv");
    std::fs::write(&cfg_path, cfg.to_kv())?;
    rec.output(&cfg_path);
    let mut curves = vec![];
    for run in &runs {
        let p = a.out_dir.join(format!("fold{}.json", run.fold));
        run.checkpoint.save(&p)?;
        rec.output(&p);
        curves.extend(run.curve.iter().cloned());
        eprintln!(
            "fold {}: best epoch {}, {} clipped steps{}",
            run.fold,
            run.best_epoch,
            run.clipped_steps,
            if run.final_gap_ok {
                ""
            } else {
                ", final train/validation gap above the limit"
            }
        );
    }
    let curve_path = a.out_dir.join("loss_curves.csv");
    write_curve_csv(&curves, BufWriter::new(File::create(&curve_path)?))?;
    rec.output(&curve_path);
    rec.write(&a.out_dir.join("manifest.json"))
}

#[derive(Debug, Args)]
pub struct TrainBaselineArgs {
    #[command(flatten)]
    pub cohort: CohortArgs,
    #[arg(long)]
    pub folds: PathBuf,
    #[arg(long)]
    pub out_dir: PathBuf,
    /// Fit on this rotation fold's training chunks instead of every
    /// non-holdout patient.
    #[arg(long)]
    pub fold: Option<usize>,
    /// Ridge penalty (MTLR only).
    #[arg(long)]
    pub l2: Option<f64>,
}

fn outcome(records: &[PatientRecord]) -> (Vec<f64>, Vec<bool>) {
    (
        records.iter().map(|r| r.observed_years()).collect(),
        records.iter().map(|r| r.event).collect(),
    )
}

pub fn train_aft(a: &TrainBaselineArgs) -> CliResult<()> {
    let mut rec = Recorder::new("train aft");
    if a.l2.is_some() {
        return Err(CliError::Usage("--l2 applies to `train mtlr` only".into()));
    }
    let records = a.cohort.load(&mut rec)?;
    let folds = load_folds(&a.folds, &mut rec)?;
    let train = training_set(&records, &folds, a.fold)?;
    let roster = FeatureRoster::standard();
    let design = BaselineDesign::fit(&train, &roster)?;
    let xs = design.matrix(&train, &roster);
    let (times, events) = outcome(&train);
    let model = aft::fit(&xs, &times, &events, &design.names, &AftOptions::default())?;
    eprintln!(
        "AFT on {} patients: σ = {:.4} (κ = {:.4}), {} iterations",
        train.len(),
        model.sigma,
        model.kappa(),
        model.iterations
    );
    for d in &design.dropped {
        eprintln!("note: column `{d}` is constant and was dropped");
    }
    create_dir(&a.out_dir)?;
    let coef = a.out_dir.join("aft_coefficients.csv");
    model.write_coefficients_csv(BufWriter::new(File::create(&coef)?))?;
    let art = a.out_dir.join("aft_model.json");
    write_json(&AftArtifact { roster, design, model }, &art)?;
    rec.output(&coef);
    rec.output(&art);
    rec.write(&a.out_dir.join("manifest.json"))
}

pub fn train_mtlr(a: &TrainBaselineArgs) -> CliResult<()> {
    let mut rec = Recorder::new("train mtlr");
    let records = a.cohort.load(&mut rec)?;
    let folds = load_folds(&a.folds, &mut rec)?;
    let train = training_set(&records, &folds, a.fold)?;
    let roster = FeatureRoster::standard();
    let mut opts = MtlrOptions::default();
    if let Some(l2) = a.l2 {
        opts.l2_strength = l2;
    }
    let design = BaselineDesign::fit(&train, &roster)?;
    let xs = design.matrix(&train, &roster);
    let (times, events) = outcome(&train);
    let mut model = mtlr::fit(&xs, &times, &events, &opts)?;
    model.feature_names = design.names.clone();
    eprintln!("MTLR on {} patients: {} iterations", train.len(), model.iterations);
    create_dir(&a.out_dir)?;
    let hold = select(&records, &folds, Assignment::Holdout)?;
    let curves = a.out_dir.join("mtlr_curves.csv");
    let ids: Vec<String> = hold.iter().map(|r| r.id.clone()).collect();
    model.write_curves_csv(
        &ids,
        &design.matrix(&hold, &roster),
        BufWriter::new(File::create(&curves)?),
    )?;
    let art = a.out_dir.join("mtlr_model.json");
    write_json(&MtlrArtifact { roster, design, model }, &art)?;
    rec.output(&curves);
    rec.output(&art);
    rec.write(&a.out_dir.join("manifest.json"))
}

/// Held-out patients, or one cross-validation fold's chunk.
#[derive(Debug, Args)]
pub struct EvalSet {
    /// `holdout` or a fold number.
    #[arg(long, default_value = "holdout")]
    pub on: String,
}

impl EvalSet {
    fn assignment(&self) -> CliResult<Assignment> {
        self.on
            .parse()
            .map_err(|_| CliError::Usage(format!("--on takes `holdout` or a fold number, got `{}`", self.on)))
    }
}

struct Ensemble {
    roster: FeatureRoster,
    grid: TimeGrid,
    checkpoints: Vec<Checkpoint>,
}

fn load_checkpoints(paths: &[PathBuf], rec: &mut Recorder) -> CliResult<Ensemble> {
    let mut checkpoints = vec![];
    for p in paths {
        rec.input(p);
        checkpoints.push(Checkpoint::load(p).map_err(|e| CliError::Data(format!("{}: {e}", p.display())))?);
    }
    let first = &checkpoints[0];
    for (p, ck) in paths.iter().zip(&checkpoints) {
        if ck.feature_hash != first.feature_hash || ck.grid != first.grid {
            return Err(CliError::Data(format!(
                "{} was trained on a different roster or grid than {}",
                p.display(),
                paths[0].display()
            )));
        }
    }
    Ok(Ensemble {
        roster: first.feature_roster.clone(),
        grid: first.grid.clone(),
        checkpoints,
    })
}

fn encode_all(ens: &Ensemble, records: &[PatientRecord]) -> CliResult<Vec<EncodedModel>> {
    ens.checkpoints
        .iter()
        .map(|ck| Ok(EncodedModel::from_checkpoint(ck, records)?))
        .collect()
}

fn same_roster(have: &FeatureRoster, want: &FeatureRoster, what: &Path) -> CliResult<()> {
    if have != want {
        return Err(CliError::Data(format!(
            "{} uses a different feature roster",
            what.display()
        )));
    }
    Ok(())
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub cohort: CohortArgs,
    #[arg(long)]
    pub folds: PathBuf,
    /// GRU-D checkpoint (repeat for an ensemble).
    #[arg(long, required = true)]
    pub checkpoint: Vec<PathBuf>,
    /// AFT model from `train aft`, evaluated at the index date.
    #[arg(long)]
    pub aft: Option<PathBuf>,
    /// MTLR model from `train mtlr`; evaluated at the index date and used
    /// for the best-guess times of censored patients.
    #[arg(long)]
    pub mtlr: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    /// Horizons in years.
    #[arg(long, default_value = "1,3,5")]
    pub horizons: String,
    #[arg(long, default_value_t = 10)]
    pub hl_bins: usize,
    #[command(flatten)]
    pub set: EvalSet,
}

pub fn eval_sweep(a: &SweepArgs) -> CliResult<()> {
    let mut rec = Recorder::new("eval sweep");
    let horizons: Vec<f64> = parse_list(&a.horizons, "--horizons")?;
    let ens = load_checkpoints(&a.checkpoint, &mut rec)?;
    let records = a.cohort.load(&mut rec)?;
    let folds = load_folds(&a.folds, &mut rec)?;
    let eval = select(&records, &folds, a.set.assignment()?)?;
    if eval.is_empty() {
        return Err(CliError::Data(format!("no patients in `{}`", a.set.on)));
    }
    let models = encode_all(&ens, &eval)?;
    let aft: Option<AftArtifact> = a.aft.as_ref().map(|p| read_json(p, &mut rec)).transpose()?;
    let mt: Option<MtlrArtifact> = a.mtlr.as_ref().map(|p| read_json(p, &mut rec)).transpose()?;
    if let (Some(x), Some(p)) = (&aft, &a.aft) {
        same_roster(&x.roster, &ens.roster, p)?;
    }
    if let (Some(x), Some(p)) = (&mt, &a.mtlr) {
        same_roster(&x.roster, &ens.roster, p)?;
    }

    let patients: Vec<SweepPatient> = models[0]
        .seqs
        .iter()
        .zip(&eval)
        .map(|(seq, r)| {
            let bg = match &mt {
                Some(m) if !r.event => {
                    let mean = m.model.point_estimates(&m.design.row(r, &ens.roster)).mean;
                    build_target(seq, Some(mean), 1.0 / DAYS_PER_YEAR)?.bg_total
                }
                _ => None,
            };
            Ok(SweepPatient::from_sequence(seq, bg))
        })
        .collect::<CliResult<_>>()?;
    let mut groups = vec![ModelGroup {
        id: "grud".into(),
        members: models
            .iter()
            .map(|m| grud_trajectories(&m.params, &m.seqs))
            .collect::<Result<_, _>>()?,
    }];
    let index = ens
        .grid
        .step_at(0)
        .ok_or_else(|| CliError::Data("the grid has no index-date step".into()))?;
    if let Some(x) = &aft {
        let preds = eval
            .iter()
            .map(|r| Ok(Prediction::Weibull(x.model.predict(&x.design.row(r, &ens.roster))?)))
            .collect::<CliResult<_>>()?;
        groups.push(ModelGroup {
            id: "aft".into(),
            members: vec![Trajectories::single_step(index, preds)],
        });
    }
    if let Some(x) = &mt {
        let preds = eval
            .iter()
            .map(|r| Prediction::Curve {
                times: x.model.times.clone(),
                survival: x.model.survival(&x.design.row(r, &ens.roster)),
            })
            .collect();
        groups.push(ModelGroup {
            id: "mtlr".into(),
            members: vec![Trajectories::single_step(index, preds)],
        });
    }
    let cfg = SweepConfig {
        horizons,
        hl_bins: a.hl_bins,
        ..Default::default()
    };
    let report = time_sweep(&groups, &patients, &ens.grid, &cfg)?;
    report.write_csv(BufWriter::new(File::create(&a.out)?))?;
    eprintln!("{} rows over {} patients", report.rows.len(), eval.len());
    rec.output(&a.out);
    rec.write(&beside(&a.out))
}

fn steps_for_days(grid: &TimeGrid, days: &str) -> CliResult<Vec<usize>> {
    parse_list::<i32>(days, "--days")?
        .into_iter()
        .map(|d| {
            grid.step_at_or_before(d)
                .ok_or_else(|| CliError::Usage(format!("day {d} lies before the grid")))
        })
        .collect()
}

#[derive(Debug, Args)]
pub struct ImportanceArgs {
    #[command(flatten)]
    pub cohort: CohortArgs,
    #[arg(long)]
    pub folds: PathBuf,
    #[arg(long, required = true)]
    pub checkpoint: Vec<PathBuf>,
    #[arg(long)]
    pub feature: String,
    #[arg(long)]
    pub seed: u64,
    /// Permutations per checkpoint.
    #[arg(long, default_value_t = 5)]
    pub n_perm: usize,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value = "1,3,5")]
    pub horizons: String,
    /// Follow-up days to evaluate; every grid step when omitted.
    #[arg(long)]
    pub days: Option<String>,
    #[command(flatten)]
    pub set: EvalSet,
}

pub fn explain_importance(a: &ImportanceArgs) -> CliResult<()> {
    let mut rec = Recorder::new("explain importance");
    rec.seed = Some(a.seed);
    let ens = load_checkpoints(&a.checkpoint, &mut rec)?;
    ens.roster
        .index_of(&a.feature)
        .map_err(|e| CliError::Usage(e.to_string()))?;
    let records = a.cohort.load(&mut rec)?;
    let folds = load_folds(&a.folds, &mut rec)?;
    let eval = select(&records, &folds, a.set.assignment()?)?;
    let models = encode_all(&ens, &eval)?;
    let patients: Vec<SweepPatient> = models[0]
        .seqs
        .iter()
        .map(|s| SweepPatient::from_sequence(s, None))
        .collect();
    let opts = ImportanceOptions {
        n_perm: a.n_perm,
        horizons: parse_list(&a.horizons, "--horizons")?,
        steps: match &a.days {
            Some(d) => steps_for_days(&ens.grid, d)?,
            None => vec![],
        },
        seed: a.seed,
    };
    let rows = permutation_importance(&models, &patients, &ens.grid, &ens.roster, &a.feature, &opts)?;
    write_importance_csv(&rows, BufWriter::new(File::create(&a.out)?))?;
    rec.output(&a.out);
    rec.write(&beside(&a.out))
}

#[derive(Debug, Args)]
pub struct PdpArgs {
    #[command(flatten)]
    pub cohort: CohortArgs,
    #[arg(long)]
    pub folds: PathBuf,
    #[arg(long, required = true)]
    pub checkpoint: Vec<PathBuf>,
    #[arg(long)]
    pub feature: String,
    #[arg(long)]
    pub out: PathBuf,
    /// Follow-up days to report.
    #[arg(long, default_value = "0,365,730,1095,1460,1800")]
    pub days: String,
    #[command(flatten)]
    pub set: EvalSet,
}

pub fn explain_pdp(a: &PdpArgs) -> CliResult<()> {
    let mut rec = Recorder::new("explain pdp");
    let ens = load_checkpoints(&a.checkpoint, &mut rec)?;
    ens.roster
        .index_of(&a.feature)
        .map_err(|e| CliError::Usage(e.to_string()))?;
    let records = a.cohort.load(&mut rec)?;
    let folds = load_folds(&a.folds, &mut rec)?;
    let eval = select(&records, &folds, a.set.assignment()?)?;
    let models = encode_all(&ens, &eval)?;
    let steps = steps_for_days(&ens.grid, &a.days)?;
    let rows = partial_dependence(&models, &ens.roster, &ens.grid, &a.feature, &steps)?;
    write_pdp_csv(&rows, BufWriter::new(File::create(&a.out)?))?;
    rec.output(&a.out);
    rec.write(&beside(&a.out))
}
