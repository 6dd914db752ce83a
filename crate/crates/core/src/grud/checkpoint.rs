//! Versioned JSON checkpoints. Weight arrays are written with 17
//! significant digits so a save/load cycle is bit-exact.

use super::params::{GrudParameters, HeadMode, Layout, Tensor};
use crate::cohort::{FeatureRoster, Norms, TimeGrid};
use crate::error::{Error, Result};
use serde::ser::SerializeSeq;
use serde::{Deserialize, Serialize, Serializer};
use serde_json::value::RawValue;
use std::path::Path;

pub const SCHEMA_VERSION: &str = "grud-weibull/1";

fn sig17<S: Serializer>(values: &[f64], s: S) -> std::result::Result<S::Ok, S::Error> {
    let mut seq = s.serialize_seq(Some(values.len()))?;
    for v in values {
        if !v.is_finite() {
            return Err(serde::ser::Error::custom("non-finite weight"));
        }
        let raw = RawValue::from_string(format!("{v:.16e}")).map_err(serde::ser::Error::custom)?;
        seq.serialize_element(&raw)?;
    }
    seq.end()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorRecord {
    pub name: String,
    pub shape: Vec<usize>,
    #[serde(serialize_with = "sig17")]
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub schema_version: String,
    pub hidden_size: usize,
    pub n_features: usize,
    pub feature_roster: FeatureRoster,
    pub feature_hash: String,
    pub grid: TimeGrid,
    pub norms: Norms,
    pub head: HeadMode,
    pub tensors: Vec<TensorRecord>,
    pub train_config: serde_json::Value,
    pub seed: u64,
    /// Fold the weights were trained on, when part of cross-validation.
    #[serde(default)]
    pub fold: Option<usize>,
}

fn mismatch(field: &str, message: impl Into<String>) -> Error {
    Error::Checkpoint {
        field: field.into(),
        message: message.into(),
    }
}

impl Checkpoint {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        params: &GrudParameters,
        roster: &FeatureRoster,
        grid: &TimeGrid,
        norms: &Norms,
        train_config: serde_json::Value,
        seed: u64,
        fold: Option<usize>,
    ) -> Self {
        let tensors = Tensor::ALL
            .iter()
            .map(|&t| TensorRecord {
                name: t.name().to_string(),
                shape: params.layout.shape(t),
                values: params.get(t).to_vec(),
            })
            .collect();
        Self {
            schema_version: SCHEMA_VERSION.to_string(),
            hidden_size: params.layout.hidden,
            n_features: params.layout.n_features,
            feature_roster: roster.clone(),
            feature_hash: roster.hash(),
            grid: grid.clone(),
            norms: norms.clone(),
            head: params.head,
            tensors,
            train_config,
            seed,
            fold,
        }
    }

    pub fn params(&self) -> Result<GrudParameters> {
        let mut p = GrudParameters::zeros(self.n_features, self.hidden_size, self.head);
        let layout = Layout {
            n_features: self.n_features,
            hidden: self.hidden_size,
        };
        if self.tensors.len() != Tensor::ALL.len() {
            return Err(mismatch("tensors", format!("expected {} tensors", Tensor::ALL.len())));
        }
        for (&t, rec) in Tensor::ALL.iter().zip(&self.tensors) {
            if rec.name != t.name() {
                return Err(mismatch(
                    "tensors",
                    format!("expected `{}`, found `{}`", t.name(), rec.name),
                ));
            }
            if rec.shape != layout.shape(t) || rec.values.len() != layout.size(t) {
                return Err(mismatch(
                    t.name(),
                    format!("shape {:?} does not match the layout", rec.shape),
                ));
            }
            p.get_mut(t).copy_from_slice(&rec.values);
        }
        Ok(p)
    }

    fn validate(&self) -> Result<()> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(mismatch(
                "schema_version",
                format!("expected {SCHEMA_VERSION}, found {}", self.schema_version),
            ));
        }
        if self.feature_roster.hash() != self.feature_hash {
            return Err(mismatch(
                "feature_hash",
                "roster content does not match its recorded hash",
            ));
        }
        if self.feature_roster.len() != self.n_features || self.norms.features.len() != self.n_features {
            return Err(mismatch("n_features", "roster, norms and tensors disagree"));
        }
        Ok(())
    }

    /// Fails unless the checkpoint was built for `roster`.
    pub fn expect_roster(&self, roster: &FeatureRoster) -> Result<()> {
        if self.feature_hash != roster.hash() {
            return Err(mismatch(
                "feature_hash",
                format!("checkpoint {}, current roster {}", self.feature_hash, roster.hash()),
            ));
        }
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        std::fs::write(path, text)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_json(&text)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let ck: Checkpoint = serde_json::from_str(text)?;
        ck.validate()?;
        ck.params()?;
        Ok(ck)
    }
}
