//! Training hyperparameters and their flat `key = value` file format.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};
use std::fmt::Write as _;
use std::path::Path;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EarlyStopMode {
    /// Stop once validation exceeds training loss by more than the gap
    /// (relative) for two consecutive epochs.
    GapStop,
    /// Run every epoch; only flag the epochs that breach the gap.
    Report,
    Off,
}

impl std::str::FromStr for EarlyStopMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gap_stop" => Ok(Self::GapStop),
            "report" => Ok(Self::Report),
            "off" => Ok(Self::Off),
            _ => Err(Error::InvalidInput(format!("unknown early_stop_mode `{s}`"))),
        }
    }
}

impl std::fmt::Display for EarlyStopMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::GapStop => "gap_stop",
            Self::Report => "report",
            Self::Off => "off",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub grad_clip_norm: f64,
    pub early_stop_gap: f64,
    pub hidden: usize,
    pub seed: u64,
    pub tau_floor: f64,
    /// (center, halfwidth) when κ is pinned to a band.
    pub fixed_kappa: Option<(f64, f64)>,
    pub early_stop_mode: EarlyStopMode,
    pub dropout: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.001,
            epochs: 50,
            batch_size: 500,
            grad_clip_norm: 1.0,
            early_stop_gap: 0.04,
            hidden: 40,
            seed: 0,
            tau_floor: 1.0 / 365.25,
            fixed_kappa: None,
            early_stop_mode: EarlyStopMode::GapStop,
            dropout: 0.0,
        }
    }
}

fn bad(line: usize, msg: String) -> Error {
    Error::Schema {
        source_name: "train config".into(),
        line,
        message: msg,
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.learning_rate > 0.0
            && self.epochs > 0
            && self.batch_size > 0
            && self.grad_clip_norm > 0.0
            && self.early_stop_gap > 0.0
            && self.early_stop_gap < 1.0
            && self.hidden > 0
            && self.tau_floor > 0.0
            && (0.0..1.0).contains(&self.dropout);
        if !ok {
            return Err(Error::InvalidInput(format!("invalid training config {self:?}")));
        }
        if let Some((c, w)) = self.fixed_kappa {
            if !(w > 0.0 && c - w > 0.0) {
                return Err(Error::InvalidInput("fixed_kappa needs 0 < halfwidth < center".into()));
            }
        }
        Ok(())
    }

    /// Applies one `key = value` setting.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let num = |v: &str| -> Result<f64> {
            v.parse::<f64>()
                .map_err(|_| Error::InvalidInput(format!("`{key}` needs a number, got `{v}`")))
        };
        let int = |v: &str| -> Result<u64> {
            v.parse::<u64>()
                .map_err(|_| Error::InvalidInput(format!("`{key}` needs an integer, got `{v}`")))
        };
        match key {
            "learning_rate" => self.learning_rate = num(value)?,
            "epochs" => self.epochs = int(value)? as usize,
            "batch_size" => self.batch_size = int(value)? as usize,
            "grad_clip_norm" => self.grad_clip_norm = num(value)?,
            "early_stop_gap" => self.early_stop_gap = num(value)?,
            "hidden" => self.hidden = int(value)? as usize,
            "seed" => self.seed = int(value)?,
            "tau_floor" => self.tau_floor = num(value)?,
            "fixed_kappa" => {
                self.fixed_kappa = match value {
                    "none" | "" => None,
                    v => {
                        let (c, w) = v
                            .split_once(',')
                            .ok_or_else(|| Error::InvalidInput("fixed_kappa is `center,halfwidth`".into()))?;
                        Some((num(c.trim())?, num(w.trim())?))
                    }
                }
            }
            "early_stop_mode" => self.early_stop_mode = value.parse()?,
            "dropout" => self.dropout = num(value)?,
            other => return Err(Error::InvalidInput(format!("unknown config key `{other}`"))),
        }
        Ok(())
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap().trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| bad(i + 1, format!("expected `key = value`, got `{line}`")))?;
            cfg.set(k.trim(), v.trim()).map_err(|e| bad(i + 1, e.to_string()))?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn to_kv(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "learning_rate = {}", self.learning_rate);
        let _ = writeln!(s, "epochs = {}", self.epochs);
        let _ = writeln!(s, "batch_size = {}", self.batch_size);
        let _ = writeln!(s, "grad_clip_norm = {}", self.grad_clip_norm);
        let _ = writeln!(s, "early_stop_gap = {}", self.early_stop_gap);
        let _ = writeln!(s, "hidden = {}", self.hidden);
        let _ = writeln!(s, "seed = {}", self.seed);
        let _ = writeln!(s, "tau_floor = {}", self.tau_floor);
        match self.fixed_kappa {
            Some((c, w)) => {
                let _ = writeln!(s, "fixed_kappa = {c},{w}");
            }
            None => {
                let _ = writeln!(s, "fixed_kappa = none");
            }
        }
        let _ = writeln!(s, "early_stop_mode = {}", self.early_stop_mode);
        let _ = writeln!(s, "dropout = {}", self.dropout);
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_match_documented_values() {
        let c = TrainConfig::default();
        assert_eq!(
            (c.learning_rate, c.epochs, c.batch_size, c.hidden),
            (0.001, 50, 500, 40)
        );
        assert_eq!(c.early_stop_gap, 0.04);
        c.validate().unwrap();
    }

    #[test]
    fn kv_round_trip() {
        let mut c = TrainConfig::default();
        c.fixed_kappa = Some((3.25, 0.1));
        c.early_stop_mode = EarlyStopMode::Report;
        c.seed = 12;
        assert_eq!(TrainConfig::parse(&c.to_kv()).unwrap(), c);
    }

    #[test]
    fn errors_carry_line_numbers() {
        let err = TrainConfig::parse("# comment\nepochs = 3\nbogus = 1\n").unwrap_err();
        assert!(matches!(err, Error::Schema { line: 3, .. }), "{err}");
        assert!(TrainConfig::parse("early_stop_gap = 1.5").is_err());
    }
}
