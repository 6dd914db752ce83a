//! Feature roster and per-feature preprocessing.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureKind {
    Continuous,
    Binary,
    Comorbidity,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Preprocessing {
    ZScore,
    DivideBy100,
    Identity,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureSpec {
    pub name: String,
    pub kind: FeatureKind,
    pub preprocessing: Preprocessing,
    /// Replicated across every timestep with the mask always set.
    #[serde(rename = "static")]
    pub is_static: bool,
}

impl FeatureSpec {
    fn new(name: &str, kind: FeatureKind, preprocessing: Preprocessing, is_static: bool) -> Self {
        Self {
            name: name.to_string(),
            kind,
            preprocessing,
            is_static,
        }
    }
}

/// Name of the dynamic feature derived from `age_at_index` and the grid day.
pub const AGE: &str = "age";

/// Ordered list of model inputs; the order fixes tensor layouts.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureRoster {
    specs: Vec<FeatureSpec>,
}

impl FeatureRoster {
    pub fn new(specs: Vec<FeatureSpec>) -> Result<Self> {
        for (i, s) in specs.iter().enumerate() {
            if specs[..i].iter().any(|o| o.name == s.name) {
                return Err(Error::InvalidInput(format!("duplicate feature `{}`", s.name)));
            }
        }
        if specs.is_empty() {
            return Err(Error::InvalidInput("empty feature roster".into()));
        }
        Ok(Self { specs })
    }

    /// The 19-feature default: six labs, two vitals, five comorbidities,
    /// age, smoking, alcohol, BMI, and the two static demographics.
    pub fn standard() -> Self {
        use FeatureKind::*;
        use Preprocessing::*;
        let c = |n| FeatureSpec::new(n, Continuous, ZScore, false);
        let cm = |n| FeatureSpec::new(n, Comorbidity, Identity, false);
        let specs = vec![
            c("egfr"),
            c("albumin"),
            c("phosphorus"),
            c("calcium"),
            c("uacr"),
            c("bicarbonate"),
            c("sbp"),
            c("dbp"),
            cm("dm"),
            cm("chf"),
            cm("cad"),
            cm("cirrhosis"),
            cm("dyslipidemia"),
            FeatureSpec::new(AGE, Continuous, DivideBy100, false),
            FeatureSpec::new("smoking", Binary, Identity, false),
            FeatureSpec::new("alcohol", Binary, Identity, false),
            c("bmi"),
            FeatureSpec::new("gender", Binary, Identity, true),
            FeatureSpec::new("race", Binary, Identity, true),
        ];
        Self { specs }
    }

    pub fn len(&self) -> usize {
        self.specs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.specs.is_empty()
    }

    pub fn specs(&self) -> &[FeatureSpec] {
        &self.specs
    }

    pub fn get(&self, i: usize) -> &FeatureSpec {
        &self.specs[i]
    }

    pub fn index_of(&self, name: &str) -> Result<usize> {
        self.specs
            .iter()
            .position(|s| s.name == name)
            .ok_or_else(|| Error::UnknownFeature(name.to_string()))
    }

    pub fn names(&self) -> Vec<String> {
        self.specs.iter().map(|s| s.name.clone()).collect()
    }

    /// Content hash of names, kinds and preprocessing in roster order.
    pub fn hash(&self) -> String {
        let mut h = Sha256::new();
        for s in &self.specs {
            let line = format!("{}\t{:?}\t{:?}\t{}\n", s.name, s.kind, s.preprocessing, s.is_static);
            h.update(line.as_bytes());
        }
        hex::encode(h.finalize())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn standard_roster_shape() {
        let r = FeatureRoster::standard();
        assert_eq!(r.len(), 19);
        let statics = r.specs().iter().filter(|s| s.is_static).count();
        assert_eq!(statics, 2);
        assert_eq!(r.index_of("age").unwrap(), 13);
        assert!(matches!(r.index_of("nope"), Err(Error::UnknownFeature(_))));
    }

    #[test]
    fn hash_tracks_order() {
        let a = FeatureRoster::standard();
        let mut specs = a.specs().to_vec();
        specs.swap(0, 1);
        let b = FeatureRoster::new(specs).unwrap();
        assert_ne!(a.hash(), b.hash());
        assert_eq!(a.hash(), FeatureRoster::standard().hash());
    }

    #[test]
    fn duplicates_rejected() {
        let s = FeatureRoster::standard().specs()[0].clone();
        assert!(FeatureRoster::new(vec![s.clone(), s]).is_err());
    }
}
