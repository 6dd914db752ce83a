//! Reading and writing patient records as CSV files or JSON lines.
//!
//! CSV layout is three files: observations (`patient_id,day,feature,value`),
//! patients (`patient_id,age_at_index,<static columns>,followup_end_day,
//! event_flag,event_type[,index_date]`) and comorbidities
//! (`patient_id,day,comorbidity`). Any patients column not listed above is
//! read as a static feature.

use super::record::{Diagnosis, Observation, PatientRecord};
use crate::error::{Error, Result};
use std::collections::{BTreeMap, HashMap, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

const PATIENT_FIXED: [&str; 6] = [
    "patient_id",
    "age_at_index",
    "followup_end_day",
    "event_flag",
    "event_type",
    "index_date",
];

/// Records plus non-fatal notes such as dropped duplicates.
#[derive(Debug, Default)]
pub struct Ingested {
    pub records: Vec<PatientRecord>,
    pub warnings: Vec<String>,
}

fn source(path: &Path) -> String {
    path.display().to_string()
}

fn schema(path: &Path, line: usize, message: impl Into<String>) -> Error {
    Error::Schema {
        source_name: source(path),
        line,
        message: message.into(),
    }
}

struct Columns<'a> {
    path: &'a Path,
    index: HashMap<String, usize>,
}

impl<'a> Columns<'a> {
    fn new(path: &'a Path, headers: &csv::StringRecord) -> Self {
        let index = headers
            .iter()
            .enumerate()
            .map(|(i, h)| (h.trim().to_string(), i))
            .collect();
        Self { path, index }
    }

    fn require(&self, name: &str) -> Result<usize> {
        self.index.get(name).copied().ok_or_else(|| Error::MissingColumn {
            source_name: source(self.path),
            column: name.to_string(),
        })
    }
}

fn field<'r>(rec: &'r csv::StringRecord, i: usize, path: &Path, line: usize) -> Result<&'r str> {
    rec.get(i)
        .map(str::trim)
        .ok_or_else(|| schema(path, line, format!("missing field {}", i + 1)))
}

fn parse<T: std::str::FromStr>(s: &str, what: &str, path: &Path, line: usize) -> Result<T> {
    s.parse()
        .map_err(|_| schema(path, line, format!("cannot parse {what} from `{s}`")))
}

fn parse_flag(s: &str, path: &Path, line: usize) -> Result<bool> {
    match s {
        "1" | "true" | "TRUE" | "True" => Ok(true),
        "0" | "false" | "FALSE" | "False" => Ok(false),
        _ => Err(schema(path, line, format!("cannot parse event_flag from `{s}`"))),
    }
}

fn reader(path: &Path) -> Result<csv::Reader<File>> {
    Ok(csv::ReaderBuilder::new().has_headers(true).from_path(path)?)
}

fn line_of(rec: &csv::StringRecord) -> usize {
    rec.position().map(|p| p.line() as usize).unwrap_or(0)
}

/// Keeps the last of any repeated `(day, feature)` pair.
fn dedup_observations(r: &mut PatientRecord, warnings: &mut Vec<String>) {
    let mut seen = HashSet::new();
    let mut keep = vec![false; r.observations.len()];
    for (i, o) in r.observations.iter().enumerate().rev() {
        if seen.insert((o.day, o.feature.clone())) {
            keep[i] = true;
        } else {
            warnings.push(format!(
                "patient {}: duplicate {} on day {}; keeping the last value",
                r.id, o.feature, o.day
            ));
        }
    }
    let mut k = keep.into_iter();
    r.observations.retain(|_| k.next().unwrap());
}

pub fn read_csv(observations: &Path, patients: &Path, comorbidities: Option<&Path>) -> Result<Ingested> {
    let mut out = Ingested::default();
    let mut by_id: HashMap<String, usize> = HashMap::new();

    let mut rdr = reader(patients)?;
    let cols = Columns::new(patients, rdr.headers()?);
    let c_id = cols.require("patient_id")?;
    let c_age = cols.require("age_at_index")?;
    let c_end = cols.require("followup_end_day")?;
    let c_flag = cols.require("event_flag")?;
    let c_type = cols.index.get("event_type").copied();
    let c_date = cols.index.get("index_date").copied();
    let mut static_cols: Vec<(String, usize)> = cols
        .index
        .iter()
        .filter(|(h, _)| !PATIENT_FIXED.contains(&h.as_str()))
        .map(|(h, &i)| (h.clone(), i))
        .collect();
    static_cols.sort_by_key(|(_, i)| *i);
    for rec in rdr.records() {
        let rec = rec?;
        let line = line_of(&rec);
        let id = field(&rec, c_id, patients, line)?.to_string();
        if id.is_empty() {
            return Err(schema(patients, line, "empty patient_id"));
        }
        let mut statics = BTreeMap::new();
        for (name, i) in &static_cols {
            let v = field(&rec, *i, patients, line)?;
            if !v.is_empty() {
                statics.insert(name.clone(), parse::<f64>(v, name, patients, line)?);
            }
        }
        let opt = |c: Option<usize>| -> Result<Option<String>> {
            match c {
                Some(i) => {
                    let v = field(&rec, i, patients, line)?;
                    Ok((!v.is_empty()).then(|| v.to_string()))
                }
                None => Ok(None),
            }
        };
        let record = PatientRecord {
            id: id.clone(),
            index_date: opt(c_date)?,
            static_features: statics,
            age_at_index: parse(field(&rec, c_age, patients, line)?, "age_at_index", patients, line)?,
            observations: vec![],
            diagnoses: vec![],
            followup_end_day: parse(field(&rec, c_end, patients, line)?, "followup_end_day", patients, line)?,
            event: parse_flag(field(&rec, c_flag, patients, line)?, patients, line)?,
            event_type: opt(c_type)?,
        };
        if by_id.insert(id.clone(), out.records.len()).is_some() {
            return Err(schema(patients, line, format!("duplicate patient `{id}`")));
        }
        out.records.push(record);
    }

    let mut rdr = reader(observations)?;
    let cols = Columns::new(observations, rdr.headers()?);
    let (c_id, c_day, c_feat, c_val) = (
        cols.require("patient_id")?,
        cols.require("day")?,
        cols.require("feature")?,
        cols.require("value")?,
    );
    for rec in rdr.records() {
        let rec = rec?;
        let line = line_of(&rec);
        let id = field(&rec, c_id, observations, line)?;
        let Some(&i) = by_id.get(id) else {
            return Err(schema(observations, line, format!("unknown patient `{id}`")));
        };
        out.records[i].observations.push(Observation {
            day: parse(field(&rec, c_day, observations, line)?, "day", observations, line)?,
            feature: field(&rec, c_feat, observations, line)?.to_string(),
            value: parse(field(&rec, c_val, observations, line)?, "value", observations, line)?,
        });
    }

    if let Some(path) = comorbidities {
        let mut rdr = reader(path)?;
        let cols = Columns::new(path, rdr.headers()?);
        let (c_id, c_day, c_name) = (
            cols.require("patient_id")?,
            cols.require("day")?,
            cols.require("comorbidity")?,
        );
        for rec in rdr.records() {
            let rec = rec?;
            let line = line_of(&rec);
            let id = field(&rec, c_id, path, line)?;
            let Some(&i) = by_id.get(id) else {
                return Err(schema(path, line, format!("unknown patient `{id}`")));
            };
            out.records[i].diagnoses.push(Diagnosis {
                day: parse(field(&rec, c_day, path, line)?, "day", path, line)?,
                comorbidity: field(&rec, c_name, path, line)?.to_string(),
            });
        }
    }

    for r in &mut out.records {
        dedup_observations(r, &mut out.warnings);
    }
    Ok(out)
}

pub fn write_csv(records: &[PatientRecord], observations: &Path, patients: &Path, comorbidities: &Path) -> Result<()> {
    let statics: Vec<String> = records
        .iter()
        .flat_map(|r| r.static_features.keys().cloned())
        .collect::<std::collections::BTreeSet<_>>()
        .into_iter()
        .collect();
    let with_date = records.iter().any(|r| r.index_date.is_some());

    let mut w = csv::Writer::from_path(patients)?;
    let mut header = vec!["patient_id".to_string(), "age_at_index".to_string()];
    header.extend(statics.iter().cloned());
    header.extend(["followup_end_day", "event_flag", "event_type"].map(String::from));
    if with_date {
        header.push("index_date".into());
    }
    w.write_record(&header)?;
    for r in records {
        let mut row = vec![r.id.clone(), r.age_at_index.to_string()];
        for s in &statics {
            row.push(r.static_features.get(s).map(|v| v.to_string()).unwrap_or_default());
        }
        row.push(r.followup_end_day.to_string());
        row.push((r.event as u8).to_string());
        row.push(r.event_type.clone().unwrap_or_default());
        if with_date {
            row.push(r.index_date.clone().unwrap_or_default());
        }
        w.write_record(&row)?;
    }
    w.flush()?;

    let mut w = csv::Writer::from_path(observations)?;
    w.write_record(["patient_id", "day", "feature", "value"])?;
    for r in records {
        for o in &r.observations {
            w.write_record([&r.id, &o.day.to_string(), &o.feature, &o.value.to_string()])?;
        }
    }
    w.flush()?;

    let mut w = csv::Writer::from_path(comorbidities)?;
    w.write_record(["patient_id", "day", "comorbidity"])?;
    for r in records {
        for d in &r.diagnoses {
            w.write_record([&r.id, &d.day.to_string(), &d.comorbidity])?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn read_jsonl(path: &Path) -> Result<Ingested> {
    let mut out = Ingested::default();
    let file = BufReader::new(File::open(path)?);
    let mut ids = HashSet::new();
    for (i, line) in file.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let mut r: PatientRecord = serde_json::from_str(&line).map_err(|e| schema(path, i + 1, e.to_string()))?;
        if !ids.insert(r.id.clone()) {
            return Err(schema(path, i + 1, format!("duplicate patient `{}`", r.id)));
        }
        dedup_observations(&mut r, &mut out.warnings);
        out.records.push(r);
    }
    Ok(out)
}

pub fn write_jsonl(records: &[PatientRecord], path: &Path) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    for r in records {
        serde_json::to_writer(&mut w, r)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write(dir: &Path, name: &str, body: &str) -> std::path::PathBuf {
        let p = dir.join(name);
        std::fs::write(&p, body).unwrap();
        p
    }

    #[test]
    fn missing_column_named() {
        let dir = tempfile::tempdir().unwrap();
        let pat = write(
            dir.path(),
            "p.csv",
            "patient_id,age_at_index,gender,race,event_flag,event_type\na,70,1,0,1,\n",
        );
        let obs = write(dir.path(), "o.csv", "patient_id,day,feature,value\n");
        let err = read_csv(&obs, &pat, None).unwrap_err();
        assert!(matches!(err, Error::MissingColumn { ref column, .. } if column == "followup_end_day"));
    }

    #[test]
    fn duplicates_keep_last_and_warn() {
        let dir = tempfile::tempdir().unwrap();
        let pat = write(
            dir.path(),
            "p.csv",
            "patient_id,age_at_index,gender,race,followup_end_day,event_flag,event_type\na,70,1,0,400,1,death\n",
        );
        let obs = write(
            dir.path(),
            "o.csv",
            "patient_id,day,feature,value\na,3,sbp,120\na,5,egfr,20\na,3,sbp,130\n",
        );
        let got = read_csv(&obs, &pat, None).unwrap();
        let r = &got.records[0];
        assert_eq!(r.observations.len(), 2);
        assert_eq!(r.observations[1].value, 130.0);
        assert_eq!(got.warnings.len(), 1);
        assert_eq!(r.event_type.as_deref(), Some("death"));
        assert_eq!(r.static_features["gender"], 1.0);
    }

    #[test]
    fn bad_value_reports_line() {
        let dir = tempfile::tempdir().unwrap();
        let pat = write(
            dir.path(),
            "p.csv",
            "patient_id,age_at_index,gender,race,followup_end_day,event_flag,event_type\na,70,1,0,400,1,\n",
        );
        let obs = write(
            dir.path(),
            "o.csv",
            "patient_id,day,feature,value\na,3,sbp,120\na,x,sbp,1\n",
        );
        let err = read_csv(&obs, &pat, None).unwrap_err();
        assert!(matches!(err, Error::Schema { line: 3, .. }), "{err}");
    }

    #[test]
    fn malformed_jsonl_line() {
        let dir = tempfile::tempdir().unwrap();
        let good = r#"{"id":"a","static_features":{},"age_at_index":60.0,"observations":[],"diagnoses":[],"followup_end_day":10,"event":false}"#;
        let p = write(dir.path(), "r.jsonl", &format!("{good}\n{{\"id\": \n"));
        let err = read_jsonl(&p).unwrap_err();
        assert!(matches!(err, Error::Schema { line: 2, .. }), "{err}");
    }
}
