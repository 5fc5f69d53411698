//! Turns raw snapshot series into normalized, stacked, sensor-sampled,
//! lag-windowed training data with leak-free train/validation/test splits.

mod bundle;
mod scaling;
mod sensors;
mod split;
mod transform;
mod window;

pub use bundle::{
    rebuild_bundle,
    build_bundle, BundleOptions, CompressionMode, DatasetBundle, OutputMap, TrajectoryData,
};
pub use scaling::{FieldKind, MinMax, ScalingParams};
pub use sensors::{extract_sensor_series, ResolvedSensors, SensorSpec};
pub use split::{make_splits, SplitRole, SplitSpec};
pub use transform::{remove_hydrostatic, stack_parametric};
pub use window::{build_lagged_sequences, LaggedBatch};

use alloc::string::String;

use crate::linalg::LinalgError;

/// Dataset construction errors.
#[derive(Debug, Clone, PartialEq)]
pub enum DataError {
    Dimension { op: &'static str, detail: String },
    /// A channel's max equals its min; names the offending channel.
    DegenerateChannel { channel: String },
    SensorPlacement { index: usize, detail: String },
    SplitOverlap { detail: String },
    MissingRun { detail: String },
    Linalg(LinalgError),
}

impl From<LinalgError> for DataError {
    fn from(e: LinalgError) -> Self {
        DataError::Linalg(e)
    }
}

impl core::fmt::Display for DataError {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            DataError::Dimension { op, detail } => write!(f, "dimension error in {op}: {detail}"),
            DataError::DegenerateChannel { channel } => {
                write!(f, "degenerate scaling channel: {channel} has max == min")
            }
            DataError::SensorPlacement { index, detail } => {
                write!(f, "sensor {index} placement error: {detail}")
            }
            DataError::SplitOverlap { detail } => write!(f, "split overlap: {detail}"),
            DataError::MissingRun { detail } => write!(f, "missing run: {detail}"),
            DataError::Linalg(e) => write!(f, "linear algebra error: {e}"),
        }
    }
}

impl core::error::Error for DataError {}
