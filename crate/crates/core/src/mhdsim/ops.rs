//! Cell-centered magnetic stencils: curl, Lorentz force, Joule heating.

use super::fields::VectorField;
use super::grid::Grid;

/// Ghost-cell policy for the lateral (x/y) boundaries of cell-centered
/// stencils. The axial direction is always periodic.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GhostMode {
    /// Linear extrapolation, exact for affine fields.
    Extrapolate,
    /// Periodic wrap (validation boxes and full-induction stepping).
    Periodic,
}

/// Value of a scalar cell array at (i, j, k) with one-cell excursions
/// outside the lateral boundaries resolved per `mode`.
#[inline]
pub(super) fn cell_value(
    grid: &Grid,
    f: &[f64],
    i: isize,
    j: isize,
    k: isize,
    mode: GhostMode,
) -> f64 {
    let nx = grid.nx as isize;
    let ny = grid.ny as isize;
    let nz = grid.nz as isize;
    let k = ((k % nz) + nz) % nz;
    let fetch = |i: usize, j: usize| f[grid.idx(i, j, k as usize)];
    match mode {
        GhostMode::Periodic => {
            let i = ((i % nx) + nx) % nx;
            let j = ((j % ny) + ny) % ny;
            fetch(i as usize, j as usize)
        }
        GhostMode::Extrapolate => {
            // One layer only; extrapolate from the two nearest cells.
            if i < 0 {
                let j = j.clamp(0, ny - 1) as usize;
                return 2.0 * fetch(0, j) - fetch(1, j);
            }
            if i >= nx {
                let j = j.clamp(0, ny - 1) as usize;
                return 2.0 * fetch(nx as usize - 1, j) - fetch(nx as usize - 2, j);
            }
            if j < 0 {
                return 2.0 * fetch(i as usize, 0) - fetch(i as usize, 1);
            }
            if j >= ny {
                return 2.0 * fetch(i as usize, ny as usize - 1)
                    - fetch(i as usize, ny as usize - 2);
            }
            fetch(i as usize, j as usize)
        }
    }
}

/// Central-difference curl of a cell-centered vector field.
pub fn curl(grid: &Grid, b: &VectorField, mode: GhostMode) -> VectorField {
    let mut out = VectorField::zeros(grid.cell_count());
    let (tx, ty, tz) = (0.5 / grid.hx, 0.5 / grid.hy, 0.5 / grid.hz);
    for k in 0..grid.nz {
        for j in 0..grid.ny {
            for i in 0..grid.nx {
                let c = grid.idx(i, j, k);
                let (i, j, k) = (i as isize, j as isize, k as isize);
                let dzdy = (cell_value(grid, &b.z, i, j + 1, k, mode)
                    - cell_value(grid, &b.z, i, j - 1, k, mode))
                    * ty;
                let dydz = (cell_value(grid, &b.y, i, j, k + 1, mode)
                    - cell_value(grid, &b.y, i, j, k - 1, mode))
                    * tz;
                let dxdz = (cell_value(grid, &b.x, i, j, k + 1, mode)
                    - cell_value(grid, &b.x, i, j, k - 1, mode))
                    * tz;
                let dzdx = (cell_value(grid, &b.z, i + 1, j, k, mode)
                    - cell_value(grid, &b.z, i - 1, j, k, mode))
                    * tx;
                let dydx = (cell_value(grid, &b.y, i + 1, j, k, mode)
                    - cell_value(grid, &b.y, i - 1, j, k, mode))
                    * tx;
                let dxdy = (cell_value(grid, &b.x, i, j + 1, k, mode)
                    - cell_value(grid, &b.x, i, j - 1, k, mode))
                    * ty;
                out.x[c] = dzdy - dydz;
                out.y[c] = dxdz - dzdx;
                out.z[c] = dydx - dxdy;
            }
        }
    }
    out
}

/// Lorentz body force (1/mu_B curl B) x B [N/m^3].
pub fn lorentz_force(grid: &Grid, b: &VectorField, mu_b: f64, mode: GhostMode) -> VectorField {
    let mut j_field = curl(grid, b, mode);
    let inv_mu = 1.0 / mu_b;
    for c in 0..grid.cell_count() {
        let jx = j_field.x[c] * inv_mu;
        let jy = j_field.y[c] * inv_mu;
        let jz = j_field.z[c] * inv_mu;
        let [bx, by, bz] = b.get(c);
        j_field.x[c] = jy * bz - jz * by;
        j_field.y[c] = jz * bx - jx * bz;
        j_field.z[c] = jx * by - jy * bx;
    }
    j_field
}

/// Joule heating |curl B|^2 / (sigma mu_B^2) [W/m^3].
pub fn joule_heating(
    grid: &Grid,
    b: &VectorField,
    sigma_el: f64,
    mu_b: f64,
    mode: GhostMode,
) -> alloc::vec::Vec<f64> {
    let j_field = curl(grid, b, mode);
    let scale = 1.0 / (sigma_el * mu_b * mu_b);
    (0..grid.cell_count())
        .map(|c| {
            let [jx, jy, jz] = j_field.get(c);
            (jx * jx + jy * jy + jz * jz) * scale
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mhdsim::grid::build_grid;
    use crate::mhdsim::types::Geometry;

    fn test_grid() -> Grid {
        build_grid(&Geometry {
            length: 0.08,
            side: 0.02,
            r_pipe: 0.0,
            resolution: (8, 8, 8),
            ..Geometry::default()
        })
        .unwrap()
    }

    #[test]
    fn uniform_field_has_zero_force_and_heating() {
        let grid = test_grid();
        let b = VectorField::uniform(grid.cell_count(), [1.3, -0.4, 0.2]);
        let f = lorentz_force(&grid, &b, 1.26e-6, GhostMode::Extrapolate);
        assert_eq!(f.max_abs(), 0.0);
        let q = joule_heating(&grid, &b, 7.82e5, 1.26e-6, GhostMode::Extrapolate);
        assert!(q.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn zero_field_has_zero_force() {
        let grid = test_grid();
        let b = VectorField::zeros(grid.cell_count());
        let f = lorentz_force(&grid, &b, 1.26e-6, GhostMode::Extrapolate);
        assert_eq!(f.max_abs(), 0.0);
    }

    #[test]
    fn linear_shear_matches_hand_evaluation() {
        // B = (0, 0, k y): curl = (k, 0, 0), force = (0, -k^2 y / mu, 0),
        // heating = k^2/(sigma mu^2) everywhere.
        let grid = test_grid();
        let kshear = 3.0;
        let mu = 1.26e-6;
        let sigma = 7.82e5;
        let mut b = VectorField::zeros(grid.cell_count());
        for k in 0..grid.nz {
            for j in 0..grid.ny {
                for i in 0..grid.nx {
                    let c = grid.idx(i, j, k);
                    b.z[c] = kshear * grid.cell_center(i, j, k)[1];
                }
            }
        }
        let f = lorentz_force(&grid, &b, mu, GhostMode::Extrapolate);
        for k in 0..grid.nz {
            for j in 0..grid.ny {
                for i in 0..grid.nx {
                    let c = grid.idx(i, j, k);
                    let y = grid.cell_center(i, j, k)[1];
                    let expect = -kshear * kshear * y / mu;
                    assert!(f.x[c].abs() < 1e-6, "fx at {c}");
                    assert!(
                        (f.y[c] - expect).abs() <= 1e-9 * expect.abs().max(1.0),
                        "fy {} vs {expect}",
                        f.y[c]
                    );
                    assert!(f.z[c].abs() < 1e-6, "fz at {c}");
                }
            }
        }
        let q = joule_heating(&grid, &b, sigma, mu, GhostMode::Extrapolate);
        let expect = kshear * kshear / (sigma * mu * mu);
        for &v in &q {
            assert!((v - expect).abs() <= 1e-9 * expect);
        }
    }

    #[test]
    fn heating_is_quadratic_in_field() {
        let grid = test_grid();
        let mut b = VectorField::zeros(grid.cell_count());
        for k in 0..grid.nz {
            for j in 0..grid.ny {
                for i in 0..grid.nx {
                    let c = grid.idx(i, j, k);
                    b.z[c] = 2.0 * grid.cell_center(i, j, k)[1];
                }
            }
        }
        let q1 = joule_heating(&grid, &b, 7.82e5, 1.26e-6, GhostMode::Extrapolate);
        let mut b2 = b.clone();
        for v in b2.z.iter_mut() {
            *v *= 2.0;
        }
        let q2 = joule_heating(&grid, &b2, 7.82e5, 1.26e-6, GhostMode::Extrapolate);
        for (a, b) in q1.iter().zip(&q2) {
            assert!((4.0 * a - b).abs() <= 1e-9 * b.abs().max(1e-300));
        }
    }
}
