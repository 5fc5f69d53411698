use alloc::format;
use alloc::vec::Vec;

use super::DataError;
use crate::linalg::DenseMatrix;

/// One training sample: a trailing sensor window ending at `frame` and the
/// target vector belonging to that frame.
#[derive(Debug, Clone, PartialEq)]
pub struct LaggedBatch {
    /// lag x n_sensors window of normalized sensor readings.
    pub window: DenseMatrix,
    /// Concatenated normalized latent coefficients, plus the normalized
    /// drive value when parameter estimation is enabled.
    pub target: Vec<f64>,
    pub trajectory: usize,
    pub frame: usize,
}

/// Builds one sample per frame. The window for frame k covers frames
/// [k-lag+1, k]; frames before the start are padded by replicating the
/// first frame (zero padding would inject a spurious cold transient).
/// Windows never span two trajectories because each call covers one.
pub fn build_lagged_sequences(
    sensor_series: &DenseMatrix,
    targets: &DenseMatrix,
    lag: usize,
    trajectory: usize,
) -> Result<Vec<LaggedBatch>, DataError> {
    let nt = sensor_series.rows();
    let ns = sensor_series.cols();
    if nt == 0 || lag == 0 {
        return Err(DataError::Dimension {
            op: "build_lagged_sequences",
            detail: format!("need at least one frame and lag >= 1, got {nt} frames, lag {lag}"),
        });
    }
    if targets.rows() != nt {
        return Err(DataError::Dimension {
            op: "build_lagged_sequences",
            detail: format!(
                "{} target rows vs {} sensor frames",
                targets.rows(),
                nt
            ),
        });
    }

    let mut out = Vec::with_capacity(nt);
    for frame in 0..nt {
        let mut window = DenseMatrix::zeros(lag, ns);
        for step in 0..lag {
            // Source frame, clamped to the trajectory start.
            let offset = lag - 1 - step;
            let src = frame.saturating_sub(offset);
            window.row_mut(step).copy_from_slice(sensor_series.row(src));
        }
        out.push(LaggedBatch {
            window,
            target: targets.row(frame).to_vec(),
            trajectory,
            frame,
        });
    }
    Ok(out)
}
