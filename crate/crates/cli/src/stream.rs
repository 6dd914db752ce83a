//! `predict stream`: observation lines in, one prediction line out per
//! accepted input line.

use crate::error::{CliError, CliResult};
use crate::manifest::Recorder;
use clap::Args;
use std::collections::{BTreeMap, HashMap};
use std::io::{BufRead, Write};
use std::path::{Path, PathBuf};
use survgru::cohort::features::AGE;
use survgru::cohort::{Diagnosis, FeatureKind, FeatureRoster, Observation, PatientRecord};
use survgru::grud::Checkpoint;
use survgru::training::stream::latest_day;
use survgru::training::StreamPredictor;

const HORIZONS: [f64; 3] = [1.0, 3.0, 5.0];
const INPUT_HEADER: &str = "patient_id,day,feature,value";

#[derive(Debug, Args)]
pub struct StreamArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Patients CSV supplying `age_at_index` and static features.
    #[arg(long)]
    pub patients: Option<PathBuf>,
    /// Write a run manifest here once input ends.
    #[arg(long)]
    pub manifest: Option<PathBuf>,
}

fn blank(id: &str, end_day: i32) -> PatientRecord {
    PatientRecord {
        id: id.to_string(),
        index_date: None,
        static_features: BTreeMap::new(),
        age_at_index: f64::NAN,
        observations: vec![],
        diagnoses: vec![],
        followup_end_day: end_day,
        event: false,
        event_type: None,
    }
}

/// Age and static columns from a patients CSV, keyed by id.
fn load_patients(path: &Path, roster: &FeatureRoster, end_day: i32) -> CliResult<HashMap<String, PatientRecord>> {
    let mut rdr = csv::Reader::from_path(path)?;
    let header = rdr.headers()?.clone();
    let col = |name: &str| header.iter().position(|h| h == name);
    let id_col =
        col("patient_id").ok_or_else(|| CliError::Data(format!("{}: missing column `patient_id`", path.display())))?;
    let age_col = col("age_at_index");
    let statics: Vec<(String, usize)> = roster
        .specs()
        .iter()
        .filter(|s| s.is_static)
        .filter_map(|s| col(&s.name).map(|c| (s.name.clone(), c)))
        .collect();
    let mut out = HashMap::new();
    for (i, row) in rdr.records().enumerate() {
        let row = row?;
        let bad = |what: &str| CliError::Data(format!("{}:{}: bad {what}", path.display(), i + 2));
        let id = row.get(id_col).ok_or_else(|| bad("patient_id"))?.to_string();
        let mut r = blank(&id, end_day);
        if let Some(c) = age_col {
            r.age_at_index = row.get(c).unwrap_or("").parse().map_err(|_| bad("age_at_index"))?;
        }
        for (name, c) in &statics {
            let v = row.get(*c).unwrap_or("").trim();
            if !v.is_empty() {
                r.static_features
                    .insert(name.clone(), v.parse().map_err(|_| bad(name))?);
            }
        }
        out.insert(id, r);
    }
    Ok(out)
}

/// Folds one parsed line into the patient's record.
fn apply(r: &mut PatientRecord, roster: &FeatureRoster, day: i32, feature: &str, value: f64) -> Result<(), String> {
    if feature == "age_at_index" {
        r.age_at_index = value;
        return Ok(());
    }
    let d = roster.index_of(feature).map_err(|e| e.to_string())?;
    let spec = roster.get(d);
    if spec.name == AGE {
        r.age_at_index = value - day as f64 / survgru::cohort::DAYS_PER_YEAR;
    } else if spec.is_static {
        r.static_features.insert(spec.name.clone(), value);
    } else if spec.kind == FeatureKind::Comorbidity {
        if value != 0.0 {
            r.diagnoses.push(Diagnosis {
                day,
                comorbidity: spec.name.clone(),
            });
        }
    } else {
        r.observations.push(Observation {
            day,
            feature: spec.name.clone(),
            value,
        });
    }
    Ok(())
}

fn parse_line(line: &str) -> Result<(String, i32, String, f64), String> {
    let f: Vec<&str> = line.split(',').map(str::trim).collect();
    if f.len() != 4 {
        return Err(format!("expected 4 fields, found {}", f.len()));
    }
    if f[0].is_empty() {
        return Err("empty patient_id".into());
    }
    let day: i32 = f[1].parse().map_err(|_| format!("bad day `{}`", f[1]))?;
    let value: f64 = f[3].parse().map_err(|_| format!("bad value `{}`", f[3]))?;
    if !value.is_finite() {
        return Err(format!("non-finite value `{}`", f[3]));
    }
    Ok((f[0].to_string(), day, f[2].to_string(), value))
}

pub fn predict_stream(a: &StreamArgs) -> CliResult<()> {
    let mut rec = Recorder::new("predict stream");
    rec.input(&a.checkpoint);
    let ck = Checkpoint::load(&a.checkpoint).map_err(|e| CliError::Data(format!("{}: {e}", a.checkpoint.display())))?;
    let roster = ck.feature_roster.clone();
    let grid = ck.grid.clone();
    let (start, end) = (grid.start_day(), grid.end_day());
    let predictor = StreamPredictor::new(ck)?;
    let mut known = match &a.patients {
        Some(p) => {
            rec.input(p);
            load_patients(p, &roster, end)?
        }
        None => HashMap::new(),
    };
    let mut state: HashMap<String, PatientRecord> = HashMap::new();
    let stdin = std::io::stdin();
    let mut out = std::io::LineWriter::new(std::io::stdout().lock());
    for (i, line) in stdin.lock().lines().enumerate() {
        let line = line?;
        let n = i + 1;
        let text = line.trim();
        if text.is_empty() || (n == 1 && text == INPUT_HEADER) {
            continue;
        }
        let (id, day, feature, value) = match parse_line(text) {
            Ok(p) => p,
            Err(e) => {
                eprintln!("line {n}: {e}; skipped");
                continue;
            }
        };
        if day < start || day > end {
            eprintln!("line {n}: day {day} outside [{start}, {end}]; skipped");
            continue;
        }
        let r = state
            .entry(id.clone())
            .or_insert_with(|| known.remove(&id).unwrap_or_else(|| blank(&id, end)));
        let before = r.clone();
        if let Err(e) = apply(r, &roster, day, &feature, value) {
            eprintln!("line {n}: {e}; skipped");
            continue;
        }
        let at = latest_day(r).unwrap_or(day).max(day);
        match predictor.predict_at(r, at, &HORIZONS) {
            Ok(p) => {
                writeln!(
                    out,
                    "{id},{at},{:.10},{:.10},{:.10},{:.10},{:.10},{:.10}",
                    p.params.kappa(),
                    p.params.lambda(),
                    p.pmst,
                    p.survival[0],
                    p.survival[1],
                    p.survival[2]
                )?;
            }
            Err(e) => {
                eprintln!("line {n}: {e}; skipped");
                *r = before;
            }
        }
    }
    out.flush()?;
    if let Some(m) = &a.manifest {
        rec.write(m)?;
    }
    Ok(())
}
