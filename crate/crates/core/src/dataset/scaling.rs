use alloc::string::ToString;
use alloc::vec::Vec;

use super::DataError;
use crate::linalg::DenseMatrix;

/// Physical fields carried through the reconstruction pipeline.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FieldKind {
    Temperature,
    VelocityX,
    VelocityY,
    VelocityZ,
    Pressure,
}

impl FieldKind {
    pub const ALL: [FieldKind; 5] = [
        FieldKind::Temperature,
        FieldKind::VelocityX,
        FieldKind::VelocityY,
        FieldKind::VelocityZ,
        FieldKind::Pressure,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            FieldKind::Temperature => "T",
            FieldKind::VelocityX => "ux",
            FieldKind::VelocityY => "uy",
            FieldKind::VelocityZ => "uz",
            FieldKind::Pressure => "p",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.iter().copied().find(|f| f.name() == name)
    }
}

/// Min–max scaling of one channel: x_norm = (x - min) / (max - min).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MinMax {
    pub min: f64,
    pub max: f64,
}

impl MinMax {
    /// Fits over an iterator of samples; errors if the channel is
    /// degenerate (max == min) or empty.
    pub fn fit(values: impl Iterator<Item = f64>, channel: &str) -> Result<Self, DataError> {
        let mut min = f64::INFINITY;
        let mut max = f64::NEG_INFINITY;
        for v in values {
            min = min.min(v);
            max = max.max(v);
        }
        let mm = Self { min, max };
        mm.validate(channel)?;
        Ok(mm)
    }

    pub fn fit_matrices(mats: &[&DenseMatrix], channel: &str) -> Result<Self, DataError> {
        Self::fit(
            mats.iter().flat_map(|m| m.data().iter().copied()),
            channel,
        )
    }

    pub fn validate(&self, channel: &str) -> Result<(), DataError> {
        if !(self.max > self.min) || !self.min.is_finite() || !self.max.is_finite() {
            return Err(DataError::DegenerateChannel {
                channel: channel.to_string(),
            });
        }
        Ok(())
    }

    #[inline]
    pub fn normalize(&self, x: f64) -> f64 {
        (x - self.min) / (self.max - self.min)
    }

    #[inline]
    pub fn denormalize(&self, x: f64) -> f64 {
        x * (self.max - self.min) + self.min
    }

    /// Normalized copy. In-range data lands in [0, 1]; out-of-range data
    /// (parametric extrapolation) is deliberately not clipped.
    pub fn normalize_matrix(&self, m: &DenseMatrix) -> DenseMatrix {
        let data = m.data().iter().map(|&x| self.normalize(x)).collect();
        DenseMatrix::from_vec(m.rows(), m.cols(), data).expect("normalization keeps shape")
    }

    pub fn denormalize_matrix(&self, m: &DenseMatrix) -> DenseMatrix {
        let data = m.data().iter().map(|&x| self.denormalize(x)).collect();
        DenseMatrix::from_vec(m.rows(), m.cols(), data).expect("denormalization keeps shape")
    }
}

/// All scaling state of a trained model: per-field physical ranges,
/// per-mode latent ranges, and the optional drive range for the
/// parameter-estimation head. Fitted on train + validation data only.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalingParams {
    pub fields: Vec<(FieldKind, MinMax)>,
    pub latent: Vec<MinMax>,
    pub drive: Option<MinMax>,
}

impl ScalingParams {
    pub fn field(&self, kind: FieldKind) -> Option<&MinMax> {
        self.fields.iter().find(|(k, _)| *k == kind).map(|(_, m)| m)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn endpoints_map_to_unit_interval() {
        let mm = MinMax { min: 560.0, max: 600.0 };
        assert_eq!(mm.normalize(560.0), 0.0);
        assert_eq!(mm.normalize(600.0), 1.0);
        assert!((mm.normalize(580.0) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn constant_channel_is_rejected_by_name() {
        let m = DenseMatrix::from_vec(2, 2, vec![3.0; 4]).unwrap();
        let err = MinMax::fit_matrices(&[&m], "uy").unwrap_err();
        assert_eq!(
            err,
            DataError::DegenerateChannel {
                channel: "uy".to_string()
            }
        );
    }

    #[test]
    fn round_trip_is_identity() {
        let mm = MinMax { min: -2.5, max: 7.25 };
        let m = DenseMatrix::from_fn(5, 7, |i, j| (i * 7 + j) as f64 * 0.37 - 3.0);
        let back = mm.denormalize_matrix(&mm.normalize_matrix(&m));
        for (a, b) in back.data().iter().zip(m.data()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn out_of_range_data_is_not_clipped() {
        let mm = MinMax { min: 0.0, max: 1.0 };
        assert!(mm.normalize(2.5) > 1.0);
        assert!(mm.normalize(-1.0) < 0.0);
    }
}
