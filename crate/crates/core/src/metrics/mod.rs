//! Discrimination, calibration and point-error metrics, plus the
//! follow-up time sweep.

pub mod calibration;
pub mod km;
pub mod point;
pub mod rank;
pub mod sweep;

pub use calibration::{brier, hosmer_lemeshow, BinStats, Brier, HosmerLemeshow};
pub use km::{censoring_km, kaplan_meier, StepFunction};
pub use point::{l1_losses, parkes_serious_error, L1Report, UncensoredL1};
pub use rank::{c_tau, harrell_c, horizon_auroc, Auroc, Concordance};
pub use sweep::{
    grud_trajectories, time_sweep, EvalReport, EvalRow, Metric, ModelGroup, Prediction, SweepConfig, SweepPatient,
    Trajectories,
};
