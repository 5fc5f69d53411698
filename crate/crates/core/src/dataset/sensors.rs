use alloc::format;
use alloc::vec::Vec;

use super::DataError;
use crate::linalg::DenseMatrix;
use crate::mhdsim::Grid;

/// Measurement sensor positions; the observed field is temperature.
#[derive(Debug, Clone, PartialEq)]
pub struct SensorSpec {
    pub coords: Vec<[f64; 3]>,
}

impl Default for SensorSpec {
    /// The three fixed probe locations used by every campaign.
    fn default() -> Self {
        Self {
            coords: alloc::vec![
                [0.0070, 0.0014, 0.0617],
                [0.0051, -0.0018, 0.0564],
                [-0.0027, 0.0045, 0.0066],
            ],
        }
    }
}

/// Sensor coordinates resolved to fluid cells, cached for reuse.
#[derive(Debug, Clone, PartialEq)]
pub struct ResolvedSensors {
    /// Linear cell ids on the grid.
    pub cell_ids: Vec<usize>,
    /// Row indices into the fluid-cell snapshot layout.
    pub rows: Vec<usize>,
}

impl SensorSpec {
    /// Resolves each coordinate to its containing cell, falling back to
    /// the nearest fluid cell among the immediate neighbours. A
    /// coordinate inside the pipe (no fluid neighbour) or outside the
    /// domain is a placement error.
    pub fn resolve(&self, grid: &Grid) -> Result<ResolvedSensors, DataError> {
        let fluid_ids = grid.fluid_cell_ids();
        let mut row_of = alloc::collections::BTreeMap::new();
        for (row, &c) in fluid_ids.iter().enumerate() {
            row_of.insert(c, row);
        }

        let mut cell_ids = Vec::with_capacity(self.coords.len());
        let mut rows = Vec::with_capacity(self.coords.len());
        for (s, &[x, y, z]) in self.coords.iter().enumerate() {
            let fi = crate::math::floor((x - grid.x0) / grid.hx);
            let fj = crate::math::floor((y - grid.y0) / grid.hy);
            let fk = crate::math::floor((z - grid.z0) / grid.hz);
            let in_domain = |f: f64, n: usize| f >= 0.0 && (f as usize) < n;
            if !in_domain(fi, grid.nx) || !in_domain(fj, grid.ny) {
                return Err(DataError::SensorPlacement {
                    index: s,
                    detail: format!("coordinate ({x}, {y}, {z}) lies outside the cross-section"),
                });
            }
            let (i, j) = (fi as usize, fj as usize);
            // The axial direction is periodic in 3-D and collapsed in 2-D.
            let k = if grid.nz == 1 {
                0
            } else if in_domain(fk, grid.nz) {
                fk as usize
            } else {
                return Err(DataError::SensorPlacement {
                    index: s,
                    detail: format!("coordinate ({x}, {y}, {z}) lies outside the axial extent"),
                });
            };

            let chosen = if grid.is_fluid(i, j, k) {
                Some(grid.idx(i, j, k))
            } else {
                // Nearest fluid cell among the 3x3x3 neighbourhood.
                let mut best: Option<(f64, usize)> = None;
                for dk in -1i64..=1 {
                    for dj in -1i64..=1 {
                        for di in -1i64..=1 {
                            let ni = i as i64 + di;
                            let nj = j as i64 + dj;
                            if ni < 0 || nj < 0 || ni >= grid.nx as i64 || nj >= grid.ny as i64 {
                                continue;
                            }
                            let nk = (k as i64 + dk).rem_euclid(grid.nz as i64) as usize;
                            let (ni, nj) = (ni as usize, nj as usize);
                            if !grid.is_fluid(ni, nj, nk) {
                                continue;
                            }
                            let cc = grid.cell_center(ni, nj, nk);
                            let d2 = (cc[0] - x) * (cc[0] - x)
                                + (cc[1] - y) * (cc[1] - y)
                                + (cc[2] - z) * (cc[2] - z);
                            let better = match best {
                                None => true,
                                Some((bd, bc)) => {
                                    d2 < bd - 1e-18 || (d2 <= bd + 1e-18 && grid.idx(ni, nj, nk) < bc)
                                }
                            };
                            if better {
                                best = Some((d2, grid.idx(ni, nj, nk)));
                            }
                        }
                    }
                }
                best.map(|(_, c)| c)
            };

            match chosen {
                Some(c) => {
                    cell_ids.push(c);
                    rows.push(row_of[&c]);
                }
                None => {
                    return Err(DataError::SensorPlacement {
                        index: s,
                        detail: format!(
                            "coordinate ({x}, {y}, {z}) resolves inside the pipe with no fluid neighbour"
                        ),
                    });
                }
            }
        }
        Ok(ResolvedSensors { cell_ids, rows })
    }
}

/// Samples a (normalized) temperature series at the resolved sensor rows,
/// returning an Nt x n_sensors matrix.
pub fn extract_sensor_series(
    trajectory: &DenseMatrix,
    sensors: &ResolvedSensors,
) -> Result<DenseMatrix, DataError> {
    let nt = trajectory.cols();
    let ns = sensors.rows.len();
    for &row in &sensors.rows {
        if row >= trajectory.rows() {
            return Err(DataError::Dimension {
                op: "extract_sensor_series",
                detail: format!("sensor row {row} outside {} rows", trajectory.rows()),
            });
        }
    }
    let mut out = DenseMatrix::zeros(nt, ns);
    for (s, &row) in sensors.rows.iter().enumerate() {
        for frame in 0..nt {
            out[(frame, s)] = trajectory[(row, frame)];
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mhdsim::{build_grid, Geometry};

    #[test]
    fn default_coordinates_resolve_to_three_distinct_cells() {
        let grid = build_grid(&Geometry::default()).unwrap();
        let resolved = SensorSpec::default().resolve(&grid).unwrap();
        assert_eq!(resolved.cell_ids.len(), 3);
        assert!(resolved.cell_ids[0] != resolved.cell_ids[1]);
        assert!(resolved.cell_ids[1] != resolved.cell_ids[2]);
        assert!(resolved.cell_ids[0] != resolved.cell_ids[2]);
        // All resolved cells are fluid.
        for &c in &resolved.cell_ids {
            assert!(grid.is_fluid_idx(c));
        }
    }

    #[test]
    fn cell_center_hit_returns_that_cell_verbatim() {
        let grid = build_grid(&Geometry::default()).unwrap();
        // Pick a fluid cell away from the pipe.
        let target = grid.cell_center(2, 2, 5);
        let spec = SensorSpec {
            coords: alloc::vec![target],
        };
        let resolved = spec.resolve(&grid).unwrap();
        assert_eq!(resolved.cell_ids[0], grid.idx(2, 2, 5));

        let fluid_ids = grid.fluid_cell_ids();
        let nt = 4;
        let traj = DenseMatrix::from_fn(fluid_ids.len(), nt, |r, c| (r * nt + c) as f64);
        let series = extract_sensor_series(&traj, &resolved).unwrap();
        for frame in 0..nt {
            assert_eq!(series[(frame, 0)], traj[(resolved.rows[0], frame)]);
        }
    }

    #[test]
    fn sensor_on_pipe_axis_is_rejected() {
        let grid = build_grid(&Geometry::default()).unwrap();
        let spec = SensorSpec {
            coords: alloc::vec![[0.0, 0.0, 0.035]],
        };
        let err = spec.resolve(&grid).unwrap_err();
        assert!(matches!(err, DataError::SensorPlacement { index: 0, .. }));
    }

    #[test]
    fn sensor_outside_domain_is_rejected() {
        let grid = build_grid(&Geometry::default()).unwrap();
        let spec = SensorSpec {
            coords: alloc::vec![[0.5, 0.0, 0.01]],
        };
        assert!(spec.resolve(&grid).is_err());
    }

    #[test]
    fn near_pipe_sensor_snaps_to_fluid_neighbour() {
        let grid = build_grid(&Geometry::default()).unwrap();
        // Just inside the pipe radius, close to the surface.
        let spec = SensorSpec {
            coords: alloc::vec![[0.0048, 0.0, 0.035]],
        };
        let resolved = spec.resolve(&grid).unwrap();
        assert!(grid.is_fluid_idx(resolved.cell_ids[0]));
    }
}
