//! Recurrent network with learned missingness decay and a Weibull head.

pub mod checkpoint;
pub mod network;
pub mod params;

pub use checkpoint::Checkpoint;
pub use network::{backward, forward, forward_steps, forward_train, Dropout, ForwardCache, PredictionTrace};
pub use params::{GrudParameters, HeadMode, Layout, Tensor};
