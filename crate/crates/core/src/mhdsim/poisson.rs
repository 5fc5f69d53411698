//! Conjugate-gradient solves for the pressure projection and the
//! divergence cleaning projector.

use alloc::vec;
use alloc::vec::Vec;

use super::fields::VectorField;
use super::grid::Grid;
use super::types::{SimError, WallMode};

/// Outcome of an iterative solve.
#[derive(Debug, Clone, Copy)]
pub struct SolveStats {
    pub residual: f64,
    pub iterations: usize,
}

/// Plain conjugate gradient with a fixed summation order, so results are
/// deterministic. `apply` must implement a symmetric positive
/// (semi-)definite operator; for semi-definite systems the right-hand side
/// must lie in the range.
fn conjugate_gradient(
    mut apply: impl FnMut(&[f64], &mut [f64]),
    b: &[f64],
    x: &mut [f64],
    tol_rel: f64,
    max_iter: usize,
) -> SolveStats {
    let n = b.len();
    let bnorm = norm(b);
    if bnorm == 0.0 {
        x.fill(0.0);
        return SolveStats {
            residual: 0.0,
            iterations: 0,
        };
    }
    let tol = tol_rel * bnorm;

    let mut ax = vec![0.0; n];
    apply(x, &mut ax);
    let mut r: Vec<f64> = b.iter().zip(&ax).map(|(b, a)| b - a).collect();
    let mut p = r.clone();
    let mut rs = dot(&r, &r);
    let mut res = crate::math::sqrt(rs);
    let mut iters = 0usize;

    while res > tol && iters < max_iter {
        apply(&p, &mut ax);
        let p_ap = dot(&p, &ax);
        if p_ap <= 0.0 {
            break; // operator defect; return best effort
        }
        let alpha = rs / p_ap;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ax[i];
        }
        let rs_new = dot(&r, &r);
        let beta = rs_new / rs;
        for i in 0..n {
            p[i] = r[i] + beta * p[i];
        }
        rs = rs_new;
        res = crate::math::sqrt(rs);
        iters += 1;
    }
    SolveStats {
        residual: res,
        iterations: iters,
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    crate::math::sqrt(dot(a, a))
}

/// Seven-point negative Laplacian over fluid cells with mixed boundaries:
/// open walls anchor the solution (Dirichlet zero at the wall face),
/// no-slip walls and the pipe surface are Neumann, z is periodic.
pub(super) struct PressurePoisson<'g> {
    grid: &'g Grid,
    wall_x: WallMode,
    wall_y: WallMode,
}

impl<'g> PressurePoisson<'g> {
    pub fn new(grid: &'g Grid, wall_x: WallMode, wall_y: WallMode) -> Self {
        Self {
            grid,
            wall_x,
            wall_y,
        }
    }

    fn is_singular(&self) -> bool {
        self.wall_x != WallMode::Open && self.wall_y != WallMode::Open
    }

    fn apply(&self, q: &[f64], out: &mut [f64]) {
        let g = self.grid;
        let ihx2 = 1.0 / (g.hx * g.hx);
        let ihy2 = 1.0 / (g.hy * g.hy);
        let ihz2 = 1.0 / (g.hz * g.hz);
        for k in 0..g.nz {
            for j in 0..g.ny {
                for i in 0..g.nx {
                    let c = g.idx(i, j, k);
                    if !g.is_fluid_idx(c) {
                        out[c] = 0.0;
                        continue;
                    }
                    let qc = q[c];
                    let mut acc = 0.0;

                    // x neighbours
                    if i > 0 {
                        if g.is_fluid(i - 1, j, k) {
                            acc += (q[g.idx(i - 1, j, k)] - qc) * ihx2;
                        }
                    } else if self.wall_x == WallMode::Open {
                        acc += -2.0 * qc * ihx2;
                    }
                    if i + 1 < g.nx {
                        if g.is_fluid(i + 1, j, k) {
                            acc += (q[g.idx(i + 1, j, k)] - qc) * ihx2;
                        }
                    } else if self.wall_x == WallMode::Open {
                        acc += -2.0 * qc * ihx2;
                    }

                    // y neighbours
                    if j > 0 {
                        if g.is_fluid(i, j - 1, k) {
                            acc += (q[g.idx(i, j - 1, k)] - qc) * ihy2;
                        }
                    } else if self.wall_y == WallMode::Open {
                        acc += -2.0 * qc * ihy2;
                    }
                    if j + 1 < g.ny {
                        if g.is_fluid(i, j + 1, k) {
                            acc += (q[g.idx(i, j + 1, k)] - qc) * ihy2;
                        }
                    } else if self.wall_y == WallMode::Open {
                        acc += -2.0 * qc * ihy2;
                    }

                    // z neighbours, periodic
                    if g.nz > 1 {
                        let km = g.idx(i, j, g.km(k));
                        let kp = g.idx(i, j, g.kp(k));
                        if g.is_fluid_idx(km) {
                            acc += (q[km] - qc) * ihz2;
                        }
                        if g.is_fluid_idx(kp) {
                            acc += (q[kp] - qc) * ihz2;
                        }
                    }

                    out[c] = -acc;
                }
            }
        }
    }

    /// Solves -lap q = b with a warm start, returning solver stats.
    pub fn solve(
        &self,
        b: &mut [f64],
        q: &mut [f64],
        tol_rel: f64,
        max_iter: usize,
    ) -> Result<SolveStats, SimError> {
        if self.is_singular() {
            subtract_mean_masked(b, self.grid);
        }
        let stats = conjugate_gradient(|x, y| self.apply(x, y), b, q, tol_rel, max_iter);
        if self.is_singular() {
            subtract_mean_masked(q, self.grid);
        }
        let bnorm = norm(b);
        if stats.residual > tol_rel * bnorm * 100.0 + 1e-30 {
            return Err(SimError::Solver {
                residual: stats.residual,
                iterations: stats.iterations,
            });
        }
        Ok(stats)
    }
}

fn subtract_mean_masked(v: &mut [f64], grid: &Grid) {
    let n = grid.fluid_count();
    if n == 0 {
        return;
    }
    let mut sum = 0.0;
    for (c, val) in v.iter().enumerate() {
        if grid.is_fluid_idx(c) {
            sum += *val;
        }
    }
    let mean = sum / n as f64;
    for (c, val) in v.iter_mut().enumerate() {
        if grid.is_fluid_idx(c) {
            *val -= mean;
        } else {
            *val = 0.0;
        }
    }
}

// ── Divergence cleaning (periodic, central differences) ──────────────

/// Central-difference divergence on a fully periodic box.
pub(super) fn central_divergence(grid: &Grid, b: &VectorField) -> Vec<f64> {
    let g = grid;
    let (tx, ty, tz) = (0.5 / g.hx, 0.5 / g.hy, 0.5 / g.hz);
    let mut out = vec![0.0; g.cell_count()];
    for k in 0..g.nz {
        for j in 0..g.ny {
            for i in 0..g.nx {
                let c = g.idx(i, j, k);
                let ip = g.idx((i + 1) % g.nx, j, k);
                let im = g.idx((i + g.nx - 1) % g.nx, j, k);
                let jp = g.idx(i, (j + 1) % g.ny, k);
                let jm = g.idx(i, (j + g.ny - 1) % g.ny, k);
                let kp = g.idx(i, j, g.kp(k));
                let km = g.idx(i, j, g.km(k));
                out[c] = (b.x[ip] - b.x[im]) * tx
                    + (b.y[jp] - b.y[jm]) * ty
                    + (b.z[kp] - b.z[km]) * tz;
            }
        }
    }
    out
}

fn central_gradient(grid: &Grid, psi: &[f64]) -> VectorField {
    let g = grid;
    let (tx, ty, tz) = (0.5 / g.hx, 0.5 / g.hy, 0.5 / g.hz);
    let mut out = VectorField::zeros(g.cell_count());
    for k in 0..g.nz {
        for j in 0..g.ny {
            for i in 0..g.nx {
                let c = g.idx(i, j, k);
                let ip = g.idx((i + 1) % g.nx, j, k);
                let im = g.idx((i + g.nx - 1) % g.nx, j, k);
                let jp = g.idx(i, (j + 1) % g.ny, k);
                let jm = g.idx(i, (j + g.ny - 1) % g.ny, k);
                let kp = g.idx(i, j, g.kp(k));
                let km = g.idx(i, j, g.km(k));
                out.x[c] = (psi[ip] - psi[im]) * tx;
                out.y[c] = (psi[jp] - psi[jm]) * ty;
                out.z[c] = (psi[kp] - psi[km]) * tz;
            }
        }
    }
    out
}

/// Projects `b` onto the (discretely) divergence-free subspace of the
/// central-difference operators on a periodic box: solve div grad psi =
/// div b, then subtract grad psi. Returns the max-cell divergence after
/// cleaning, normalized by max|B|/h.
pub fn clean_divergence(grid: &Grid, b: &mut VectorField) -> Result<f64, SimError> {
    let div = central_divergence(grid, b);
    // A = -div grad is symmetric positive semidefinite with the right-hand
    // side automatically in its range on a periodic box.
    let mut rhs: Vec<f64> = div.iter().map(|v| -v).collect();
    let mean = rhs.iter().sum::<f64>() / rhs.len() as f64;
    for v in rhs.iter_mut() {
        *v -= mean;
    }
    let mut psi = vec![0.0; grid.cell_count()];
    let stats = conjugate_gradient(
        |x, y| {
            let gx = central_gradient(grid, x);
            let d = central_divergence(grid, &gx);
            for (o, v) in y.iter_mut().zip(&d) {
                *o = -v;
            }
        },
        &rhs,
        &mut psi,
        1e-13,
        20 * grid.cell_count(),
    );
    let grad = central_gradient(grid, &psi);
    for c in 0..grid.cell_count() {
        b.x[c] -= grad.x[c];
        b.y[c] -= grad.y[c];
        b.z[c] -= grad.z[c];
    }
    let post = central_divergence(grid, b);
    let max_div = post.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let scale = b.max_abs().max(1e-300) / grid.hx.min(grid.hy).min(grid.hz);
    let normalized = max_div / scale;
    if !normalized.is_finite() {
        return Err(SimError::Solver {
            residual: stats.residual,
            iterations: stats.iterations,
        });
    }
    Ok(normalized)
}

#[cfg(test)]
mod tests {
    use super::*;

    use crate::mhdsim::grid::build_grid;
    use crate::mhdsim::types::Geometry;

    fn periodic_grid(n: usize) -> Grid {
        build_grid(&Geometry {
            length: 1.0,
            side: 1.0,
            r_pipe: 0.0,
            resolution: (n, n, n),
            ..Geometry::default()
        })
        .unwrap()
    }

    #[test]
    fn cleaning_keeps_solenoidal_field() {
        let grid = periodic_grid(12);
        // Divergence-free by construction: B = (sin(2 pi y), 0, 0).
        let mut b = VectorField::zeros(grid.cell_count());
        for k in 0..grid.nz {
            for j in 0..grid.ny {
                for i in 0..grid.nx {
                    let c = grid.idx(i, j, k);
                    let y = grid.cell_center(i, j, k)[1];
                    b.x[c] = (2.0 * core::f64::consts::PI * y).sin();
                }
            }
        }
        let before = b.clone();
        let post = clean_divergence(&grid, &mut b).unwrap();
        assert!(post <= 1e-10);
        for c in 0..grid.cell_count() {
            assert!((b.x[c] - before.x[c]).abs() < 1e-12);
            assert!(b.y[c].abs() < 1e-12);
            assert!(b.z[c].abs() < 1e-12);
        }
    }

    #[test]
    fn pure_gradient_field_cleans_to_mean() {
        let grid = periodic_grid(12);
        // B = grad(phi) for periodic phi = cos(2 pi x) sin(2 pi z); the
        // cleaned field must be the (zero) mean.
        let two_pi = 2.0 * core::f64::consts::PI;
        let mut b = VectorField::zeros(grid.cell_count());
        for k in 0..grid.nz {
            for j in 0..grid.ny {
                for i in 0..grid.nx {
                    let c = grid.idx(i, j, k);
                    let [x, _, z] = grid.cell_center(i, j, k);
                    // Use the discrete central gradient of phi so the
                    // decomposition is exact for the discrete operators.
                    let _ = (x, z);
                    let _ = c;
                }
            }
        }
        // Build phi on cells, then its central gradient.
        let mut phi = alloc::vec![0.0; grid.cell_count()];
        for k in 0..grid.nz {
            for j in 0..grid.ny {
                for i in 0..grid.nx {
                    let c = grid.idx(i, j, k);
                    let [x, _, z] = grid.cell_center(i, j, k);
                    phi[c] = (two_pi * x).cos() * (two_pi * z).sin();
                }
            }
        }
        let grad = central_gradient(&grid, &phi);
        b.x.copy_from_slice(&grad.x);
        b.y.copy_from_slice(&grad.y);
        b.z.copy_from_slice(&grad.z);
        clean_divergence(&grid, &mut b).unwrap();
        assert!(
            b.max_abs() < 1e-10,
            "gradient field should clean to zero, got {}",
            b.max_abs()
        );
    }

    #[test]
    fn random_smooth_field_cleans_below_tolerance() {
        let grid = periodic_grid(10);
        let two_pi = 2.0 * core::f64::consts::PI;
        let mut b = VectorField::zeros(grid.cell_count());
        for k in 0..grid.nz {
            for j in 0..grid.ny {
                for i in 0..grid.nx {
                    let c = grid.idx(i, j, k);
                    let [x, y, z] = grid.cell_center(i, j, k);
                    b.x[c] = (two_pi * y).sin() + 0.3 * (two_pi * z).cos();
                    b.y[c] = (two_pi * x).cos() * (two_pi * z).sin();
                    b.z[c] = 0.5 * (two_pi * x).sin() + (two_pi * y).cos();
                }
            }
        }
        let post = clean_divergence(&grid, &mut b).unwrap();
        assert!(post <= 1e-10, "post-clean divergence {post}");
    }
}
