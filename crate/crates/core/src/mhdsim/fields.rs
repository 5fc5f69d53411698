use alloc::vec;
use alloc::vec::Vec;

use super::grid::Grid;

/// Cell-centered vector field on the full grid.
#[derive(Debug, Clone, PartialEq)]
pub struct VectorField {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub z: Vec<f64>,
}

impl VectorField {
    pub fn zeros(cells: usize) -> Self {
        Self {
            x: vec![0.0; cells],
            y: vec![0.0; cells],
            z: vec![0.0; cells],
        }
    }

    pub fn uniform(cells: usize, value: [f64; 3]) -> Self {
        Self {
            x: vec![value[0]; cells],
            y: vec![value[1]; cells],
            z: vec![value[2]; cells],
        }
    }

    #[inline]
    pub fn get(&self, c: usize) -> [f64; 3] {
        [self.x[c], self.y[c], self.z[c]]
    }

    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    pub fn max_abs(&self) -> f64 {
        let m = |v: &[f64]| v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        m(&self.x).max(m(&self.y)).max(m(&self.z))
    }
}

/// Staggered (MAC) velocity: `u` on x-normal faces, `v` on y-normal faces,
/// `w` on z-normal faces. The z direction is periodic, so there are
/// exactly `nz` z-faces per column; face `k` sits at the bottom of cell
/// `k`.
#[derive(Debug, Clone, PartialEq)]
pub struct MacVelocity {
    pub u: Vec<f64>,
    pub v: Vec<f64>,
    pub w: Vec<f64>,
    nx: usize,
    ny: usize,
    nz: usize,
}

impl MacVelocity {
    pub fn zeros(grid: &Grid) -> Self {
        Self {
            u: vec![0.0; (grid.nx + 1) * grid.ny * grid.nz],
            v: vec![0.0; grid.nx * (grid.ny + 1) * grid.nz],
            w: vec![0.0; grid.nx * grid.ny * grid.nz],
            nx: grid.nx,
            ny: grid.ny,
            nz: grid.nz,
        }
    }

    #[inline]
    pub fn iu(&self, i: usize, j: usize, k: usize) -> usize {
        (k * self.ny + j) * (self.nx + 1) + i
    }

    #[inline]
    pub fn iv(&self, i: usize, j: usize, k: usize) -> usize {
        (k * (self.ny + 1) + j) * self.nx + i
    }

    #[inline]
    pub fn iw(&self, i: usize, j: usize, k: usize) -> usize {
        (k * self.ny + j) * self.nx + i
    }

    /// Cell-centered velocity by face averaging.
    pub fn cell_centered(&self, grid: &Grid) -> VectorField {
        let mut out = VectorField::zeros(grid.cell_count());
        for k in 0..self.nz {
            for j in 0..self.ny {
                for i in 0..self.nx {
                    let c = grid.idx(i, j, k);
                    out.x[c] = 0.5 * (self.u[self.iu(i, j, k)] + self.u[self.iu(i + 1, j, k)]);
                    out.y[c] = 0.5 * (self.v[self.iv(i, j, k)] + self.v[self.iv(i, j + 1, k)]);
                    out.z[c] =
                        0.5 * (self.w[self.iw(i, j, k)] + self.w[self.iw(i, j, grid.kp(k))]);
                }
            }
        }
        out
    }

    pub fn max_abs(&self) -> [f64; 3] {
        let m = |v: &[f64]| v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        [m(&self.u), m(&self.v), m(&self.w)]
    }
}
