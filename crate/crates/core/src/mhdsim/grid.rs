use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use super::types::{Geometry, SimError};

/// Cell classification.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CellKind {
    Fluid,
    PipeSolid,
}

/// Uniform Cartesian staggered grid over the channel.
///
/// Cells are centered at `(x0 + (i+1/2) hx, y0 + (j+1/2) hy, (k+1/2) hz)`
/// with the cross-section centered on the pipe axis. The z axis is
/// periodic. Cells whose centers lie strictly within `r_pipe` of the axis
/// are masked as pipe solid.
#[derive(Debug, Clone)]
pub struct Grid {
    pub nx: usize,
    pub ny: usize,
    pub nz: usize,
    pub hx: f64,
    pub hy: f64,
    pub hz: f64,
    pub x0: f64,
    pub y0: f64,
    pub z0: f64,
    mask: Vec<CellKind>,
    fluid_count: usize,
}

impl Grid {
    #[inline]
    pub fn idx(&self, i: usize, j: usize, k: usize) -> usize {
        (k * self.ny + j) * self.nx + i
    }

    #[inline]
    pub fn cell_count(&self) -> usize {
        self.nx * self.ny * self.nz
    }

    #[inline]
    pub fn is_fluid(&self, i: usize, j: usize, k: usize) -> bool {
        self.mask[self.idx(i, j, k)] == CellKind::Fluid
    }

    #[inline]
    pub fn is_fluid_idx(&self, c: usize) -> bool {
        self.mask[c] == CellKind::Fluid
    }

    pub fn mask(&self) -> &[CellKind] {
        &self.mask
    }

    pub fn fluid_count(&self) -> usize {
        self.fluid_count
    }

    pub fn cell_center(&self, i: usize, j: usize, k: usize) -> [f64; 3] {
        [
            self.x0 + (i as f64 + 0.5) * self.hx,
            self.y0 + (j as f64 + 0.5) * self.hy,
            self.z0 + (k as f64 + 0.5) * self.hz,
        ]
    }

    /// Periodic wrap along z.
    #[inline]
    pub fn kp(&self, k: usize) -> usize {
        if k + 1 == self.nz {
            0
        } else {
            k + 1
        }
    }

    #[inline]
    pub fn km(&self, k: usize) -> usize {
        if k == 0 {
            self.nz - 1
        } else {
            k - 1
        }
    }

    /// Linear ids of fluid cells in storage order, defining the snapshot
    /// row layout.
    pub fn fluid_cell_ids(&self) -> Vec<usize> {
        (0..self.cell_count())
            .filter(|&c| self.is_fluid_idx(c))
            .collect()
    }

    /// (i, j, k) triple of a linear cell id.
    pub fn decompose(&self, c: usize) -> (usize, usize, usize) {
        let i = c % self.nx;
        let j = (c / self.nx) % self.ny;
        let k = c / (self.nx * self.ny);
        (i, j, k)
    }
}

/// Builds the staggered grid and the pipe mask, reporting the fluid-cell
/// count through [`Grid::fluid_count`].
pub fn build_grid(geometry: &Geometry) -> Result<Grid, SimError> {
    let (nx, ny, nz) = geometry.resolution;
    if nx < 8 || ny < 8 {
        return Err(SimError::Config(format!(
            "cross-section resolution {nx}x{ny} too coarse; need at least 8x8"
        )));
    }
    if nz != 1 && nz < 8 {
        return Err(SimError::Config(format!(
            "axial resolution {nz} must be 1 (2-D mode) or at least 8"
        )));
    }
    if !(geometry.side > 0.0) || !(geometry.length > 0.0) || geometry.r_pipe < 0.0 {
        return Err(SimError::Config(String::from(
            "geometry dimensions must be positive",
        )));
    }
    if geometry.r_pipe >= geometry.side / 2.0 {
        return Err(SimError::Config(format!(
            "pipe radius {} must be smaller than half the section side {}",
            geometry.r_pipe,
            geometry.side / 2.0
        )));
    }
    let hx = geometry.side / nx as f64;
    let hy = geometry.side / ny as f64;
    let hz = geometry.length / nz as f64;
    if geometry.r_pipe > 0.0 {
        let across = 2.0 * geometry.r_pipe / hx.max(hy);
        if across < 4.0 {
            return Err(SimError::Config(format!(
                "pipe resolved by only {across:.1} cells across its diameter; need at least 4"
            )));
        }
    }

    let x0 = -geometry.side / 2.0;
    let y0 = -geometry.side / 2.0;
    let z0 = 0.0;
    let r2 = geometry.r_pipe * geometry.r_pipe;
    let r_out2 = geometry.annulus_outer_radius.map(|r| r * r);
    let mut mask = vec![CellKind::Fluid; nx * ny * nz];
    let mut fluid_count = 0usize;
    for k in 0..nz {
        for j in 0..ny {
            for i in 0..nx {
                let xc = x0 + (i as f64 + 0.5) * hx;
                let yc = y0 + (j as f64 + 0.5) * hy;
                let c = (k * ny + j) * nx + i;
                let d2 = xc * xc + yc * yc;
                let solid = d2 < r2 || r_out2.is_some_and(|r| d2 > r);
                if solid {
                    mask[c] = CellKind::PipeSolid;
                } else {
                    fluid_count += 1;
                }
            }
        }
    }

    Ok(Grid {
        nx,
        ny,
        nz,
        hx,
        hy,
        hz,
        x0,
        y0,
        z0,
        mask,
        fluid_count,
    })
}
