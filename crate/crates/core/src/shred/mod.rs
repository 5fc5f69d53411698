//! The sensor-to-state network: a two-layer LSTM encoder over lagged
//! sensor windows feeding a shallow decoder, with from-scratch forward
//! and backward passes and an Adam training loop.

mod backward;
mod forward;
mod model;
mod train;

pub use backward::{backward, ShredGradients};
pub use forward::{loss, lstm_forward, predict, sdn_forward, Prediction};
pub use model::{LstmLayerParams, SdnParams, ShredArch, ShredModel, TensorView};
pub use train::{train, OptimizerState, TrainConfig, TrainHistory};

use alloc::string::String;

/// Network-side errors.
#[derive(Debug, Clone, PartialEq)]
pub enum ShredError {
    /// A non-finite value appeared in the forward recursion.
    Numeric { step: usize },
    /// Training loss became non-finite.
    Diverged { epoch: usize },
    Shape { op: &'static str, detail: String },
    Config(String),
}

impl core::fmt::Display for ShredError {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            ShredError::Numeric { step } => {
                write!(f, "non-finite intermediate at recursion step {step}")
            }
            ShredError::Diverged { epoch } => {
                write!(f, "training diverged at epoch {epoch}")
            }
            ShredError::Shape { op, detail } => write!(f, "shape error in {op}: {detail}"),
            ShredError::Config(msg) => write!(f, "configuration error: {msg}"),
        }
    }
}

impl core::error::Error for ShredError {}
