//! Held-out split and censoring-stratified cross-validation folds.

use super::record::PatientRecord;
use crate::error::{Error, Result};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Assignment {
    Holdout,
    /// 1-based fold number.
    Fold(usize),
}

impl std::fmt::Display for Assignment {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Assignment::Holdout => write!(f, "holdout"),
            Assignment::Fold(k) => write!(f, "{k}"),
        }
    }
}

impl std::str::FromStr for Assignment {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "holdout" => Ok(Assignment::Holdout),
            other => match other.parse::<usize>() {
                Ok(k) if k >= 1 => Ok(Assignment::Fold(k)),
                _ => Err(Error::InvalidInput(format!("bad assignment `{other}`"))),
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldAssignment {
    pub assignments: BTreeMap<String, Assignment>,
    pub k: usize,
    pub seed: u64,
}

impl FoldAssignment {
    pub fn get(&self, id: &str) -> Option<Assignment> {
        self.assignments.get(id).copied()
    }

    /// Ids assigned to `a`, in id order.
    pub fn members(&self, a: Assignment) -> Vec<&str> {
        self.assignments
            .iter()
            .filter(|(_, &v)| v == a)
            .map(|(k, _)| k.as_str())
            .collect()
    }

    pub fn filter<'a>(&self, records: &'a [PatientRecord], a: Assignment) -> Vec<&'a PatientRecord> {
        records.iter().filter(|r| self.get(&r.id) == Some(a)).collect()
    }
}

/// Draws `n_holdout` ids uniformly without replacement. Returns
/// `(holdout, remaining)` as indices into `records`, each sorted.
pub fn holdout_split(records: &[PatientRecord], n_holdout: usize, seed: u64) -> Result<(Vec<usize>, Vec<usize>)> {
    if n_holdout >= records.len() {
        return Err(Error::InvalidInput(format!(
            "holdout of {n_holdout} leaves nothing from {} patients",
            records.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut idx: Vec<usize> = (0..records.len()).collect();
    idx.shuffle(&mut rng);
    let mut hold = idx[..n_holdout].to_vec();
    let mut rest = idx[n_holdout..].to_vec();
    hold.sort_unstable();
    rest.sort_unstable();
    Ok((hold, rest))
}

/// Splits `records` into `k` folds with balanced uncensored and censored
/// counts (each differing by at most one across folds). Event times play
/// no role.
pub fn censored_stratified_kfold(records: &[PatientRecord], k: usize, seed: u64) -> Result<FoldAssignment> {
    if k == 0 || k > records.len() {
        return Err(Error::InvalidInput(format!(
            "cannot make {k} folds from {} patients",
            records.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut events: Vec<usize> = (0..records.len()).filter(|&i| records[i].event).collect();
    let mut censored: Vec<usize> = (0..records.len()).filter(|&i| !records[i].event).collect();
    events.shuffle(&mut rng);
    censored.shuffle(&mut rng);
    let mut assignments = BTreeMap::new();
    // Censored dealing resumes where the events stopped so fold totals
    // stay balanced too.
    for (j, &i) in events.iter().chain(censored.iter()).enumerate() {
        assignments.insert(records[i].id.clone(), Assignment::Fold(j % k + 1));
    }
    Ok(FoldAssignment { assignments, k, seed })
}

/// Holdout draw followed by stratified folds over the remainder.
pub fn assign_all(records: &[PatientRecord], n_holdout: usize, k: usize, seed: u64) -> Result<FoldAssignment> {
    let (hold, rest) = holdout_split(records, n_holdout, seed)?;
    let remaining: Vec<PatientRecord> = rest.iter().map(|&i| records[i].clone()).collect();
    let mut fa = censored_stratified_kfold(&remaining, k, seed.wrapping_add(1))?;
    for i in hold {
        fa.assignments.insert(records[i].id.clone(), Assignment::Holdout);
    }
    fa.seed = seed;
    Ok(fa)
}
