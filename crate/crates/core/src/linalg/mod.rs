//! Dense matrix kernels and a deterministic truncated SVD.
//!
//! Matrices are row-major `f64`. The SVD is computed by Householder
//! bidiagonalization with implicit-shift QR on the bidiagonal factor
//! (Golub–Kahan); no randomness is involved, and a fixed sign convention
//! makes the factors byte-reproducible.

mod matrix;
mod svd;

pub use matrix::DenseMatrix;
pub use svd::{truncated_svd, ReducedBasis};

use core::fmt;

/// Errors from matrix construction and factorization.
#[derive(Debug, Clone, PartialEq)]
pub enum LinalgError {
    /// Operand shapes are incompatible for the named operation.
    ShapeMismatch {
        op: &'static str,
        left: (usize, usize),
        right: (usize, usize),
    },
    /// Requested rank exceeds `min(rows, cols)`.
    RankTooLarge { rank: usize, max: usize },
    /// Input contains NaN or infinity.
    NonFinite,
    /// The bidiagonal QR iteration did not converge.
    NoConvergence,
}

impl fmt::Display for LinalgError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LinalgError::ShapeMismatch { op, left, right } => write!(
                f,
                "shape mismatch in {op}: {}x{} vs {}x{}",
                left.0, left.1, right.0, right.1
            ),
            LinalgError::RankTooLarge { rank, max } => {
                write!(f, "rank {rank} exceeds min dimension {max}")
            }
            LinalgError::NonFinite => write!(f, "matrix contains non-finite entries"),
            LinalgError::NoConvergence => write!(f, "SVD iteration failed to converge"),
        }
    }
}

impl core::error::Error for LinalgError {}
