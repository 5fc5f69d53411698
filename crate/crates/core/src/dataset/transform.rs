use alloc::format;
use alloc::vec::Vec;

use super::DataError;
use crate::linalg::DenseMatrix;

/// Subtracts the hydrostatic component rho0 (g . x) from a pressure
/// series whose rows follow `cell_coords`.
pub fn remove_hydrostatic(
    p: &DenseMatrix,
    rho0: f64,
    gravity: [f64; 3],
    cell_coords: &[[f64; 3]],
) -> Result<DenseMatrix, DataError> {
    if p.rows() != cell_coords.len() {
        return Err(DataError::Dimension {
            op: "remove_hydrostatic",
            detail: format!("{} pressure rows vs {} coordinates", p.rows(), cell_coords.len()),
        });
    }
    let mut out = p.clone();
    for (r, xyz) in cell_coords.iter().enumerate() {
        let head = rho0 * (gravity[0] * xyz[0] + gravity[1] * xyz[1] + gravity[2] * xyz[2]);
        for v in out.row_mut(r) {
            *v -= head;
        }
    }
    Ok(out)
}

/// Column-wise concatenation X = [X_1 | X_2 | ... | X_Np], returning the
/// stacked matrix and a (trajectory, frame) map for every column.
pub fn stack_parametric(
    trajectories: &[&DenseMatrix],
) -> Result<(DenseMatrix, Vec<(usize, usize)>), DataError> {
    if trajectories.is_empty() {
        return Err(DataError::Dimension {
            op: "stack_parametric",
            detail: format!("no trajectories given"),
        });
    }
    let rows = trajectories[0].rows();
    for (t, m) in trajectories.iter().enumerate() {
        if m.rows() != rows {
            return Err(DataError::Dimension {
                op: "stack_parametric",
                detail: format!("trajectory {t} has {} rows, expected {rows}", m.rows()),
            });
        }
    }
    let total_cols: usize = trajectories.iter().map(|m| m.cols()).sum();
    let mut out = DenseMatrix::zeros(rows, total_cols);
    let mut col_map = Vec::with_capacity(total_cols);
    let mut offset = 0usize;
    for (t, m) in trajectories.iter().enumerate() {
        for r in 0..rows {
            let src = m.row(r);
            out.row_mut(r)[offset..offset + m.cols()].copy_from_slice(src);
        }
        for frame in 0..m.cols() {
            col_map.push((t, frame));
        }
        offset += m.cols();
    }
    Ok((out, col_map))
}
