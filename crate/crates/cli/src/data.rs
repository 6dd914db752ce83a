//! Loading and saving the files commands pass between each other.

use crate::error::{CliError, CliResult};
use crate::manifest::Recorder;
use clap::Args;
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};
use survgru::aft::AftModel;
use survgru::cohort::io::{read_csv, read_jsonl};
use survgru::cohort::{Assignment, BaselineDesign, FeatureRoster, FoldAssignment, PatientRecord};
use survgru::mtlr::MtlrModel;

/// Where the cohort comes from: one JSONL file or the CSV triple.
#[derive(Debug, Clone, Args)]
pub struct CohortArgs {
    /// Cohort as JSON lines, one patient per line.
    #[arg(long)]
    pub cohort: Option<PathBuf>,
    /// Observations CSV (`patient_id,day,feature,value`).
    #[arg(long, requires = "patients")]
    pub observations: Option<PathBuf>,
    /// Patients CSV.
    #[arg(long, requires = "observations")]
    pub patients: Option<PathBuf>,
    /// Comorbidities CSV (`patient_id,day,comorbidity`).
    #[arg(long, requires = "observations")]
    pub comorbidities: Option<PathBuf>,
}

impl CohortArgs {
    pub fn load(&self, rec: &mut Recorder) -> CliResult<Vec<PatientRecord>> {
        let ingested = match (&self.cohort, &self.observations, &self.patients) {
            (Some(c), None, None) => {
                rec.input(c);
                read_jsonl(c)?
            }
            (None, Some(o), Some(p)) => {
                rec.input(o);
                rec.input(p);
                if let Some(c) = &self.comorbidities {
                    rec.input(c);
                }
                read_csv(o, p, self.comorbidities.as_deref())?
            }
            _ => {
                return Err(CliError::Usage(
                    "give either --cohort or --observations with --patients".into(),
                ))
            }
        };
        for w in &ingested.warnings {
            eprintln!("warning: {w}");
        }
        if ingested.records.is_empty() {
            return Err(CliError::Data("the cohort has no patients".into()));
        }
        Ok(ingested.records)
    }
}

pub fn load_folds(path: &Path, rec: &mut Recorder) -> CliResult<FoldAssignment> {
    rec.input(path);
    Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
}

/// Patients of `a`, in cohort order. Every record must be assigned.
pub fn select(records: &[PatientRecord], folds: &FoldAssignment, a: Assignment) -> CliResult<Vec<PatientRecord>> {
    if let Some(r) = records.iter().find(|r| folds.get(&r.id).is_none()) {
        return Err(CliError::Data(format!("patient `{}` missing from the fold file", r.id)));
    }
    Ok(folds.filter(records, a).into_iter().cloned().collect())
}

/// Every non-holdout patient, or the training chunks of one rotation fold.
pub fn training_set(
    records: &[PatientRecord],
    folds: &FoldAssignment,
    fold: Option<usize>,
) -> CliResult<Vec<PatientRecord>> {
    let k = folds.k;
    let keep: Vec<usize> = match fold {
        None => (1..=k).collect(),
        Some(f) if (1..=k).contains(&f) => {
            let roles = survgru::training::fold_roles(f, k);
            (1..=k).filter(|&a| a != roles.test && a != roles.validation).collect()
        }
        Some(f) => return Err(CliError::Usage(format!("--fold {f} outside 1..={k}"))),
    };
    let mut out = vec![];
    for a in keep {
        out.extend(select(records, folds, Assignment::Fold(a))?);
    }
    // Restore cohort order so results do not depend on fold numbering.
    let pos: std::collections::HashMap<&str, usize> =
        records.iter().enumerate().map(|(i, r)| (r.id.as_str(), i)).collect();
    out.sort_by_key(|r| pos[r.id.as_str()]);
    if out.is_empty() {
        return Err(CliError::Data("no training patients".into()));
    }
    Ok(out)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AftArtifact {
    pub roster: FeatureRoster,
    pub design: BaselineDesign,
    pub model: AftModel,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MtlrArtifact {
    pub roster: FeatureRoster,
    pub design: BaselineDesign,
    pub model: MtlrModel,
}

pub fn write_json<T: Serialize>(value: &T, path: &Path) -> CliResult<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text)?;
    Ok(())
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path, rec: &mut Recorder) -> CliResult<T> {
    rec.input(path);
    serde_json::from_str(&std::fs::read_to_string(path)?)
        .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

pub fn parse_list<T: std::str::FromStr>(text: &str, flag: &str) -> CliResult<Vec<T>> {
    text.split(',')
        .filter(|s| !s.trim().is_empty())
        .map(|s| {
            s.trim()
                .parse()
                .map_err(|_| CliError::Usage(format!("{flag}: cannot parse `{}`", s.trim())))
        })
        .collect()
}

pub fn create_dir(dir: &Path) -> CliResult<()> {
    std::fs::create_dir_all(dir)?;
    Ok(())
}
