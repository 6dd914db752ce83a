//! Survival modelling on sparse, irregular longitudinal records: a
//! recurrent network with input decay that emits Weibull parameters at
//! every step, plus parametric and discrete-time baselines, evaluation
//! metrics, and interpretation tools.

pub mod aft;
pub mod analysis;
pub mod cohort;
pub mod error;
pub mod grud;
pub mod metrics;
pub mod mtlr;
pub mod special;
pub mod training;
pub mod weibull;

pub use error::{Error, Result};
pub use weibull::WeibullParams;
