//! Targets, batch loss, optimizer and the training loop.

pub mod config;
pub mod cv;
pub mod loss;
pub mod optim;
pub mod stream;
pub mod targets;
pub mod trainer;

pub use config::{EarlyStopMode, TrainConfig};
pub use cv::{cross_validate, fold_roles, FoldRun};
pub use loss::{batch_loss, batch_loss_and_grad, BatchLoss, Example};
pub use optim::{clip_global_norm, AmsGrad};
pub use stream::{predict_stream, StreamPrediction, StreamPredictor};
pub use targets::{build_target, TrainingTarget};
pub use trainer::{train_model, train_model_with, EpochRecord, TrainOutcome};
