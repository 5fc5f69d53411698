//! Full simulation runs producing parametric snapshot series.

use alloc::vec::Vec;

use super::stepper::Simulation;
use super::types::{SimConfig, SimError};
use crate::linalg::DenseMatrix;

/// Space–time snapshot data for one run: rows are fluid-cell DOFs in grid
/// storage order, columns are stored frames.
#[derive(Debug, Clone)]
pub struct SnapshotSeries {
    pub config: SimConfig,
    /// Frame times [s], `store_dt` apart, starting at `store_dt`.
    pub times: Vec<f64>,
    /// Imposed drive field per frame [T].
    pub drive: Vec<[f64; 3]>,
    pub t: DenseMatrix,
    pub ux: DenseMatrix,
    pub uy: DenseMatrix,
    pub uz: DenseMatrix,
    pub p: DenseMatrix,
    /// Linear cell ids of the rows.
    pub fluid_ids: Vec<usize>,
    /// (x, y, z) coordinates of the rows [m].
    pub cell_coords: Vec<[f64; 3]>,
    /// Total number of substeps taken.
    pub substeps: usize,
    /// Worst post-projection velocity divergence seen (normalized).
    pub max_velocity_divergence: f64,
}

impl SnapshotSeries {
    pub fn frame_count(&self) -> usize {
        self.times.len()
    }

    pub fn field(&self, name: &str) -> Option<&DenseMatrix> {
        match name {
            "T" => Some(&self.t),
            "ux" => Some(&self.ux),
            "uy" => Some(&self.uy),
            "uz" => Some(&self.uz),
            "p" => Some(&self.p),
            _ => None,
        }
    }
}

/// Advances the solver to `t_end`, storing frames every `store_dt`.
pub fn run_simulation(config: &SimConfig) -> Result<SnapshotSeries, SimError> {
    let mut sim = Simulation::new(config)?;
    let frames = config.frame_count();
    let grid = sim.grid().clone();
    let fluid_ids = grid.fluid_cell_ids();
    let nf = fluid_ids.len();
    let cell_coords: Vec<[f64; 3]> = fluid_ids
        .iter()
        .map(|&c| {
            let (i, j, k) = grid.decompose(c);
            grid.cell_center(i, j, k)
        })
        .collect();

    let mut t = DenseMatrix::zeros(nf, frames);
    let mut ux = DenseMatrix::zeros(nf, frames);
    let mut uy = DenseMatrix::zeros(nf, frames);
    let mut uz = DenseMatrix::zeros(nf, frames);
    let mut p = DenseMatrix::zeros(nf, frames);
    let mut times = Vec::with_capacity(frames);
    let mut drive = Vec::with_capacity(frames);
    let mut max_div = 0.0f64;

    for frame in 0..frames {
        let target = (frame + 1) as f64 * config.store_dt;
        while sim.time() < target - 1e-12 {
            let dt = sim.stable_dt().min(target - sim.time());
            if !(dt > 0.0) {
                return Err(SimError::Physics(alloc::format!(
                    "stable step collapsed to {dt} at frame {frame}"
                )));
            }
            sim.advance(dt).map_err(|e| attach_frame(e, frame))?;
            max_div = max_div.max(sim.diagnostics().velocity_divergence);
        }
        let state = sim.fluid_state();
        for (row, &c) in fluid_ids.iter().enumerate() {
            t[(row, frame)] = state.t[c];
            ux[(row, frame)] = state.u[0][c];
            uy[(row, frame)] = state.u[1][c];
            uz[(row, frame)] = state.u[2][c];
            p[(row, frame)] = state.p[c];
        }
        times.push(sim.time());
        drive.push(config.drive.value_at(sim.time()));
    }

    Ok(SnapshotSeries {
        config: config.clone(),
        times,
        drive,
        t,
        ux,
        uy,
        uz,
        p,
        fluid_ids,
        cell_coords,
        substeps: sim.step_count(),
        max_velocity_divergence: max_div,
    })
}

fn attach_frame(e: SimError, frame: usize) -> SimError {
    match e {
        SimError::Physics(msg) => {
            SimError::Physics(alloc::format!("frame {frame}: {msg}"))
        }
        other => other,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mhdsim::types::{Geometry, InductionMode, MagneticDrive};

    fn equilibrium_config() -> SimConfig {
        SimConfig {
            drive: MagneticDrive::ConstantToroidal { bx: 0.0 },
            gravity_y: 0.0,
            geometry: Geometry {
                r_pipe: 0.0,
                resolution: (8, 8, 8),
                length: 0.07,
                side: 0.02,
                ..Geometry::default()
            },
            t_end: 0.25,
            store_dt: 0.025,
            induction_mode: InductionMode::QuasiStatic,
            ..SimConfig::default()
        }
    }

    #[test]
    fn zero_field_no_pipe_run_is_steady() {
        let series = run_simulation(&equilibrium_config()).unwrap();
        assert_eq!(series.frame_count(), 10);
        let frames = series.frame_count();
        for f in 1..frames {
            for row in 0..series.t.rows() {
                assert!((series.t[(row, f)] - series.t[(row, 0)]).abs() < 1e-10);
                assert!((series.uz[(row, f)] - series.uz[(row, 0)]).abs() < 1e-10);
                assert!((series.ux[(row, f)]).abs() < 1e-10);
                assert!((series.p[(row, f)] - series.p[(row, 0)]).abs() < 1e-7);
            }
        }
    }

    #[test]
    fn identical_configs_give_identical_series() {
        let cfg = SimConfig {
            t_end: 0.1,
            store_dt: 0.025,
            geometry: Geometry {
                resolution: (8, 8, 8),
                ..Geometry::default()
            },
            ..SimConfig::default()
        };
        let a = run_simulation(&cfg).unwrap();
        let b = run_simulation(&cfg).unwrap();
        assert_eq!(a.t.data(), b.t.data());
        assert_eq!(a.uz.data(), b.uz.data());
        assert_eq!(a.p.data(), b.p.data());
    }

    #[test]
    fn frame_count_matches_config() {
        let cfg = equilibrium_config();
        let series = run_simulation(&cfg).unwrap();
        assert_eq!(series.frame_count(), cfg.frame_count());
        assert!((series.times[0] - 0.025).abs() < 1e-9);
        assert!((series.times[9] - 0.25).abs() < 1e-9);
    }
}
