use alloc::format;
use alloc::vec::Vec;

use super::DataError;
use crate::mhdsim::{MagneticDrive, SnapshotSeries};

use core::f64::consts::{FRAC_PI_2, PI};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SplitRole {
    Train,
    Validation,
    Test,
}

impl SplitRole {
    pub fn name(&self) -> &'static str {
        match self {
            SplitRole::Train => "train",
            SplitRole::Validation => "validation",
            SplitRole::Test => "test",
        }
    }
}

/// Drive-parameter settings per split. The three built-in presets carry
/// the campaign tables used throughout.
#[derive(Debug, Clone, PartialEq)]
pub struct SplitSpec {
    pub train: Vec<MagneticDrive>,
    pub validation: Vec<MagneticDrive>,
    pub test: Vec<MagneticDrive>,
}

fn toroidal(bx: f64) -> MagneticDrive {
    MagneticDrive::ConstantToroidal { bx }
}

fn combined(bx: f64, by: f64) -> MagneticDrive {
    MagneticDrive::ConstantCombined { bx, by }
}

fn sinusoid(amplitude: f64, period: f64, phase: f64, offset: f64) -> MagneticDrive {
    MagneticDrive::SinusoidalToroidal {
        amplitude,
        omega: 2.0 * PI / period,
        phase,
        offset,
    }
}

impl SplitSpec {
    /// Constant toroidal field campaign: training intensities span
    /// [0.5, 2.0] T, tests at 0.75 T and 1.85 T in range plus the 2.5 T
    /// extrapolation case.
    pub fn toroidal_preset() -> Self {
        Self {
            train: [0.5, 0.7, 0.9, 1.1, 1.3, 1.6, 2.0]
                .into_iter()
                .map(toroidal)
                .collect(),
            validation: [1.0, 1.7].into_iter().map(toroidal).collect(),
            test: [0.75, 1.85, 2.5].into_iter().map(toroidal).collect(),
        }
    }

    /// Combined toroidal + poloidal campaign.
    pub fn combined_preset() -> Self {
        Self {
            train: alloc::vec![
                combined(1.0, 0.2),
                combined(1.4, 0.35),
                combined(1.8, 0.55),
                combined(2.0, 0.7),
            ],
            validation: alloc::vec![combined(1.2, 0.3)],
            test: alloc::vec![combined(1.6, 0.45)],
        }
    }

    /// Time-varying toroidal field campaign, B(t) = A sin(w t + phi) + C.
    pub fn oscillating_preset() -> Self {
        Self {
            train: alloc::vec![
                sinusoid(0.5, 1.4, -0.05 + FRAC_PI_2, 1.3),
                sinusoid(0.45, 1.5, 1.0 + FRAC_PI_2, 1.2),
                sinusoid(0.42, 0.7, FRAC_PI_2 + 3.0, 1.3),
                sinusoid(0.48, 1.1, FRAC_PI_2 + 1.3, 1.1),
                sinusoid(0.6, 1.0, -1.0, 1.25),
                sinusoid(0.7, 1.1, -1.0, 1.1),
                sinusoid(0.45, 0.8, -0.11, 1.25),
                sinusoid(0.45, 1.4, -0.11, 1.25),
                sinusoid(0.45, 1.75, -0.11, 1.25),
            ],
            validation: alloc::vec![
                sinusoid(0.6, 2.0, FRAC_PI_2, 1.1),
                sinusoid(0.55, 1.4, FRAC_PI_2 + 0.2, 1.2),
                sinusoid(0.45, 1.0, -0.11, 1.25),
                sinusoid(0.45, 1.5, -0.11, 1.25),
            ],
            test: alloc::vec![
                sinusoid(0.5, 0.8, FRAC_PI_2, 1.2),
                sinusoid(0.45, 1.25, -0.11, 1.25),
                sinusoid(0.4, 1.4, -0.8, 1.25),
            ],
        }
    }

    /// Ensures the three splits are pairwise disjoint.
    pub fn validate(&self) -> Result<(), DataError> {
        let pairs = [
            (&self.train, &self.validation, "train/validation"),
            (&self.train, &self.test, "train/test"),
            (&self.validation, &self.test, "validation/test"),
        ];
        for (a, b, name) in pairs {
            for d in a.iter() {
                if b.contains(d) {
                    return Err(DataError::SplitOverlap {
                        detail: format!("{name} share drive setting {d:?}"),
                    });
                }
            }
        }
        Ok(())
    }

    pub fn role_of(&self, drive: &MagneticDrive) -> Option<SplitRole> {
        if self.train.contains(drive) {
            Some(SplitRole::Train)
        } else if self.validation.contains(drive) {
            Some(SplitRole::Validation)
        } else if self.test.contains(drive) {
            Some(SplitRole::Test)
        } else {
            None
        }
    }

    pub fn all_settings(&self) -> Vec<(MagneticDrive, SplitRole)> {
        self.train
            .iter()
            .map(|d| (d.clone(), SplitRole::Train))
            .chain(
                self.validation
                    .iter()
                    .map(|d| (d.clone(), SplitRole::Validation)),
            )
            .chain(self.test.iter().map(|d| (d.clone(), SplitRole::Test)))
            .collect()
    }
}

/// Assigns a split role to every generated run and checks the coverage
/// both ways: every run must belong to the split and every split setting
/// must have a run.
pub fn make_splits(
    spec: &SplitSpec,
    runs: &[SnapshotSeries],
) -> Result<Vec<SplitRole>, DataError> {
    spec.validate()?;
    let mut roles = Vec::with_capacity(runs.len());
    for (idx, run) in runs.iter().enumerate() {
        match spec.role_of(&run.config.drive) {
            Some(role) => roles.push(role),
            None => {
                return Err(DataError::MissingRun {
                    detail: format!("run {idx} drive {:?} not in the split", run.config.drive),
                })
            }
        }
    }
    for (drive, role) in spec.all_settings() {
        if !runs.iter().any(|r| r.config.drive == drive) {
            return Err(DataError::MissingRun {
                detail: format!("{} setting {drive:?} has no generated run", role.name()),
            });
        }
    }
    Ok(roles)
}
