//! Patient records, the time grid, encoding, splits and the synthetic cohort.

pub mod baseline;
pub mod encode;
pub mod features;
pub mod grid;
pub mod io;
pub mod record;

pub use encode::{compute_norms, encode, encode_prefix, EncodedSequence, Norms};
pub use features::{FeatureKind, FeatureRoster, FeatureSpec, Preprocessing};
pub use grid::TimeGrid;
pub use record::{Diagnosis, Observation, PatientRecord, DAYS_PER_YEAR};
pub mod split;
pub mod synth;

pub use baseline::BaselineDesign;
pub use split::{Assignment, FoldAssignment};
pub use synth::{generate_synthetic_cohort, SyntheticCohort, SyntheticConfig};
