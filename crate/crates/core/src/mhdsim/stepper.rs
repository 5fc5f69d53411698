//! Time stepping: upwind advection, explicit diffusion, Boussinesq
//! buoyancy, the low-Rm Lorentz closure, pressure projection, and the
//! explicit induction update.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use super::fields::{MacVelocity, VectorField};
use super::grid::Grid;
use super::ops::{self, GhostMode};
use super::poisson::{self, PressurePoisson, SolveStats};
use super::types::{FluidState, InductionMode, SimConfig, SimError, WallMode};

/// Magnetic state: uniform drive value in quasi-static mode, a full
/// cell-centered field otherwise.
#[derive(Debug, Clone)]
pub enum BState {
    Uniform([f64; 3]),
    Field(VectorField),
}

/// Per-step projection and cleaning diagnostics.
#[derive(Debug, Clone, Copy, Default)]
pub struct StepDiagnostics {
    /// max |div u| * h_min / max|u| after projection.
    pub velocity_divergence: f64,
    /// max-cell central divergence of B after cleaning, normalized by
    /// max|B|/h (full induction mode only).
    pub b_divergence: f64,
    pub pressure_residual: f64,
    pub pressure_iterations: usize,
}

/// Point-wise linear density closure rho = rho0 (1 - beta (T - T0)).
pub fn update_density(
    t_field: &[f64],
    props: &super::types::MaterialProps,
    t0: f64,
) -> Result<Vec<f64>, SimError> {
    let mut rho = Vec::with_capacity(t_field.len());
    for &t in t_field {
        let r = props.rho0 * (1.0 - props.beta * (t - t0));
        if !(r > 0.0) {
            return Err(SimError::Physics(String::from(
                "density closure produced non-positive density",
            )));
        }
        rho.push(r);
    }
    Ok(rho)
}

pub struct Simulation {
    grid: Grid,
    config: SimConfig,
    pub(super) mac: MacVelocity,
    /// Reduced pressure: p - p_ext - hydrostatic [Pa].
    q: Vec<f64>,
    t_field: Vec<f64>,
    rho: Vec<f64>,
    b: BState,
    time: f64,
    step_count: usize,
    u_pinned: Vec<bool>,
    v_pinned: Vec<bool>,
    w_pinned: Vec<bool>,
    diag: StepDiagnostics,
}

#[inline]
fn iu(g: &Grid, i: usize, j: usize, k: usize) -> usize {
    (k * g.ny + j) * (g.nx + 1) + i
}

#[inline]
fn iv(g: &Grid, i: usize, j: usize, k: usize) -> usize {
    (k * (g.ny + 1) + j) * g.nx + i
}

#[inline]
fn iw(g: &Grid, i: usize, j: usize, k: usize) -> usize {
    (k * g.ny + j) * g.nx + i
}

#[inline]
fn wrap(k: isize, n: usize) -> usize {
    let n = n as isize;
    (((k % n) + n) % n) as usize
}

/// u-face value with ghost handling: x clamps (normal direction), y
/// mirrors with a sign per wall mode (tangential), z wraps.
#[inline]
fn face_u(g: &Grid, u: &[f64], wy: WallMode, i: isize, j: isize, k: isize) -> f64 {
    let kk = wrap(k, g.nz);
    let (jj, sign) = ghost_cell(j, g.ny, wy);
    let ii = i.clamp(0, g.nx as isize) as usize;
    sign * u[iu(g, ii, jj, kk)]
}

#[inline]
fn face_v(g: &Grid, v: &[f64], wx: WallMode, i: isize, j: isize, k: isize) -> f64 {
    let kk = wrap(k, g.nz);
    let (ii, sign) = ghost_cell(i, g.nx, wx);
    let jj = j.clamp(0, g.ny as isize) as usize;
    sign * v[iv(g, ii, jj, kk)]
}

#[inline]
fn face_w(g: &Grid, w: &[f64], wx: WallMode, wy: WallMode, i: isize, j: isize, k: isize) -> f64 {
    let kk = wrap(k, g.nz);
    let (ii, sx) = ghost_cell(i, g.nx, wx);
    let (jj, sy) = ghost_cell(j, g.ny, wy);
    sx * sy * w[iw(g, ii, jj, kk)]
}

/// Tangential ghost for a cell-indexed direction: reflect with negation
/// at no-slip walls, constant extension at open walls.
#[inline]
fn ghost_cell(idx: isize, n: usize, mode: WallMode) -> (usize, f64) {
    if idx < 0 {
        (0, if mode == WallMode::NoSlip { -1.0 } else { 1.0 })
    } else if idx >= n as isize {
        (n - 1, if mode == WallMode::NoSlip { -1.0 } else { 1.0 })
    } else {
        (idx as usize, 1.0)
    }
}

impl Simulation {
    pub fn new(config: &SimConfig) -> Result<Self, SimError> {
        config.validate()?;
        let grid = super::grid::build_grid(&config.geometry)?;
        let cells = grid.cell_count();

        let mut mac = MacVelocity::zeros(&grid);
        let mut u_pinned = vec![false; mac.u.len()];
        let mut v_pinned = vec![false; mac.v.len()];
        let mut w_pinned = vec![false; mac.w.len()];
        for k in 0..grid.nz {
            for j in 0..grid.ny {
                for i in 0..=grid.nx {
                    let f = iu(&grid, i, j, k);
                    u_pinned[f] = if i == 0 || i == grid.nx {
                        config.wall_x == WallMode::NoSlip
                    } else {
                        !grid.is_fluid(i - 1, j, k) || !grid.is_fluid(i, j, k)
                    };
                }
            }
            for j in 0..=grid.ny {
                for i in 0..grid.nx {
                    let f = iv(&grid, i, j, k);
                    v_pinned[f] = if j == 0 || j == grid.ny {
                        config.wall_y == WallMode::NoSlip
                    } else {
                        !grid.is_fluid(i, j - 1, k) || !grid.is_fluid(i, j, k)
                    };
                }
            }
            for j in 0..grid.ny {
                for i in 0..grid.nx {
                    let f = iw(&grid, i, j, k);
                    w_pinned[f] =
                        !grid.is_fluid(i, j, grid.km(k)) || !grid.is_fluid(i, j, k);
                }
            }
        }

        // Initial condition: uniform axial velocity on unpinned z-faces.
        for (f, w) in mac.w.iter_mut().enumerate() {
            if !w_pinned[f] {
                *w = config.u0;
            }
        }

        let mut t_field = vec![config.t0; cells];
        for (c, t) in t_field.iter_mut().enumerate() {
            if !grid.is_fluid_idx(c) {
                *t = config.t_pipe;
            }
        }
        let rho = update_density(&t_field, &config.material, config.t0)?;

        let b0 = config.drive.value_at(0.0);
        let b = match config.induction_mode {
            InductionMode::QuasiStatic => BState::Uniform(b0),
            InductionMode::Full => BState::Field(VectorField::uniform(cells, b0)),
        };

        Ok(Self {
            grid,
            config: config.clone(),
            mac,
            q: vec![0.0; cells],
            t_field,
            rho,
            b,
            time: 0.0,
            step_count: 0,
            u_pinned,
            v_pinned,
            w_pinned,
            diag: StepDiagnostics::default(),
        })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    pub fn step_count(&self) -> usize {
        self.step_count
    }

    pub fn diagnostics(&self) -> StepDiagnostics {
        self.diag
    }

    pub fn temperature(&self) -> &[f64] {
        &self.t_field
    }

    /// Initializes the axial velocity from a profile over face positions
    /// (validation setups start near an analytic steady state). Pinned
    /// faces stay zero.
    pub fn init_axial_profile(&mut self, f: &dyn Fn(f64, f64, f64) -> f64) {
        let g = self.grid.clone();
        for k in 0..g.nz {
            for j in 0..g.ny {
                for i in 0..g.nx {
                    let face = iw(&g, i, j, k);
                    if self.w_pinned[face] {
                        continue;
                    }
                    let [x, y, _] = g.cell_center(i, j, k);
                    let z = g.z0 + k as f64 * g.hz;
                    self.mac.w[face] = f(x, y, z);
                }
            }
        }
    }

    /// Overwrites the temperature field (validation setups paint solid
    /// regions with non-default boundary temperatures).
    pub fn set_temperature(&mut self, t_field: Vec<f64>) -> Result<(), SimError> {
        if t_field.len() != self.grid.cell_count() {
            return Err(SimError::Config(String::from(
                "temperature field size does not match grid",
            )));
        }
        if !t_field.iter().all(|v| v.is_finite()) {
            return Err(SimError::Config(String::from(
                "temperature field must be finite",
            )));
        }
        self.t_field = t_field;
        self.update_density()
    }

    /// Replaces the magnetic field (full induction mode only); used by
    /// validation setups that start from a perturbed field.
    pub fn set_b_field(&mut self, b: VectorField) -> Result<(), SimError> {
        match self.b {
            BState::Field(_) => {
                if b.len() != self.grid.cell_count() {
                    return Err(SimError::Config(String::from(
                        "field size does not match grid",
                    )));
                }
                self.b = BState::Field(b);
                Ok(())
            }
            BState::Uniform(_) => Err(SimError::Config(String::from(
                "set_b_field requires full induction mode",
            ))),
        }
    }

    pub fn b_state(&self) -> &BState {
        &self.b
    }

    /// Largest step satisfying every active stability constraint, with a
    /// 0.9 safety factor.
    pub fn stable_dt(&self) -> f64 {
        let g = &self.grid;
        let m = &self.config.material;
        let [umax, vmax, wmax] = self.mac.max_abs();
        let inv_h2 = 1.0 / (g.hx * g.hx) + 1.0 / (g.hy * g.hy) + 1.0 / (g.hz * g.hz);
        let adv_rate = umax / g.hx + vmax / g.hy + wmax / g.hz;

        let mut dt = f64::INFINITY;
        // Donor-cell + explicit conduction positivity.
        let therm_rate = adv_rate + 2.0 * m.alpha() * inv_h2;
        if therm_rate > 0.0 {
            dt = dt.min(1.0 / therm_rate);
        }
        // Explicit viscosity.
        let visc_rate = adv_rate + 2.0 * m.nu() * inv_h2;
        if visc_rate > 0.0 {
            dt = dt.min(1.0 / visc_rate);
        }
        // Advective CFL bound from the configuration.
        let cfl_rate = (umax / g.hx).max(vmax / g.hy).max(wmax / g.hz);
        if cfl_rate > 0.0 {
            dt = dt.min(self.config.cfl / cfl_rate);
        }
        // Spec-level diffusive bounds.
        let hmin = g.hx.min(g.hy).min(g.hz);
        let hmin2 = hmin * hmin;
        dt = dt.min(0.25 * hmin2 / m.alpha());
        if self.config.induction_mode == InductionMode::Full {
            dt = dt.min(0.25 * m.sigma_el * m.mu_b * hmin2);
            dt = dt.min(1.0 / (2.0 * m.eta() * inv_h2));
        }
        0.9 * dt
    }

    /// One full substep: induction, momentum, energy, density closure.
    pub fn advance(&mut self, dt: f64) -> Result<(), SimError> {
        self.step_induction(dt)?;
        self.step_momentum(dt)?;
        self.step_energy(dt)?;
        self.update_density()?;
        self.time += dt;
        self.step_count += 1;
        Ok(())
    }

    // ── induction ────────────────────────────────────────────────────

    pub fn step_induction(&mut self, dt: f64) -> Result<(), SimError> {
        let t_new = self.time + dt;
        match &mut self.b {
            BState::Uniform(b) => {
                *b = self.config.drive.value_at(t_new);
                Ok(())
            }
            BState::Field(_) => self.step_induction_full(dt),
        }
    }

    fn step_induction_full(&mut self, dt: f64) -> Result<(), SimError> {
        let g = &self.grid;
        let m = &self.config.material;
        let hmin = g.hx.min(g.hy).min(g.hz);
        let hmin2 = hmin * hmin;
        let bound = 0.25 * m.sigma_el * m.mu_b * hmin2;
        if dt > bound * (1.0 + 1e-12) {
            return Err(SimError::TimeStep {
                dt,
                suggested: bound,
                constraint: "resistive diffusion",
            });
        }

        let b = match &self.b {
            BState::Field(f) => f.clone(),
            BState::Uniform(_) => unreachable!(),
        };
        let uc = self.mac.cell_centered(g);
        let cells = g.cell_count();
        let mut e = VectorField::zeros(cells);
        for c in 0..cells {
            let [ux, uy, uz] = uc.get(c);
            let [bx, by, bz] = b.get(c);
            e.x[c] = uy * bz - uz * by;
            e.y[c] = uz * bx - ux * bz;
            e.z[c] = ux * by - uy * bx;
        }
        let curl_e = ops::curl(g, &e, GhostMode::Periodic);
        let eta = m.eta();
        let mut b_new = b.clone();
        let mode = GhostMode::Periodic;
        for k in 0..g.nz {
            for j in 0..g.ny {
                for i in 0..g.nx {
                    let c = g.idx(i, j, k);
                    let (ii, jj, kk) = (i as isize, j as isize, k as isize);
                    for (comp_new, comp, curl_c) in [
                        (&mut b_new.x, &b.x, curl_e.x[c]),
                        (&mut b_new.y, &b.y, curl_e.y[c]),
                        (&mut b_new.z, &b.z, curl_e.z[c]),
                    ] {
                        let v = comp[c];
                        let lap = (ops::cell_value(g, comp, ii + 1, jj, kk, mode)
                            - 2.0 * v
                            + ops::cell_value(g, comp, ii - 1, jj, kk, mode))
                            / (g.hx * g.hx)
                            + (ops::cell_value(g, comp, ii, jj + 1, kk, mode) - 2.0 * v
                                + ops::cell_value(g, comp, ii, jj - 1, kk, mode))
                                / (g.hy * g.hy)
                            + (ops::cell_value(g, comp, ii, jj, kk + 1, mode) - 2.0 * v
                                + ops::cell_value(g, comp, ii, jj, kk - 1, mode))
                                / (g.hz * g.hz);
                        comp_new[c] = v + dt * (curl_c + eta * lap);
                    }
                }
            }
        }

        let post = poisson::clean_divergence(g, &mut b_new)?;
        self.diag.b_divergence = post;
        if !b_new.x.iter().all(|v| v.is_finite())
            || !b_new.y.iter().all(|v| v.is_finite())
            || !b_new.z.iter().all(|v| v.is_finite())
        {
            return Err(SimError::NonFinite {
                what: "magnetic field",
                step: self.step_count,
            });
        }
        self.b = BState::Field(b_new);
        Ok(())
    }

    // ── momentum ─────────────────────────────────────────────────────

    pub fn step_momentum(&mut self, dt: f64) -> Result<(), SimError> {
        let g = self.grid.clone();
        let m = self.config.material.clone();
        let (wx, wy) = (self.config.wall_x, self.config.wall_y);
        let nu = m.nu();

        // Advective CFL precondition.
        let [umax, vmax, wmax] = self.mac.max_abs();
        let cfl_rate = (umax / g.hx).max(vmax / g.hy).max(wmax / g.hz);
        if cfl_rate * dt > self.config.cfl * (1.0 + 1e-12) {
            return Err(SimError::TimeStep {
                dt,
                suggested: self.config.cfl / cfl_rate,
                constraint: "advective CFL",
            });
        }

        let u = &self.mac.u;
        let v = &self.mac.v;
        let w = &self.mac.w;
        let mut un = u.clone();
        let mut vn = v.clone();
        let mut wn = w.clone();

        // Full-mode Lorentz force from the curl of B.
        let lorentz = match &self.b {
            BState::Field(bf) => Some(ops::lorentz_force(
                &g,
                bf,
                m.mu_b,
                GhostMode::Periodic,
            )),
            BState::Uniform(_) => None,
        };

        // u faces.
        for k in 0..g.nz {
            let ks = k as isize;
            for j in 0..g.ny {
                let js = j as isize;
                for i in 0..=g.nx {
                    let f = iu(&g, i, j, k);
                    if self.u_pinned[f] {
                        continue;
                    }
                    let is = i as isize;
                    let uc = u[f];
                    let icl = (is - 1).clamp(0, g.nx as isize - 1) as usize;
                    let icr = is.clamp(0, g.nx as isize - 1) as usize;
                    let kp = g.kp(k);
                    let ay = 0.25
                        * (v[iv(&g, icl, j, k)]
                            + v[iv(&g, icl, j + 1, k)]
                            + v[iv(&g, icr, j, k)]
                            + v[iv(&g, icr, j + 1, k)]);
                    let az = 0.25
                        * (w[iw(&g, icl, j, k)]
                            + w[iw(&g, icl, j, kp)]
                            + w[iw(&g, icr, j, k)]
                            + w[iw(&g, icr, j, kp)]);

                    let um = face_u(&g, u, wy, is - 1, js, ks);
                    let up = face_u(&g, u, wy, is + 1, js, ks);
                    let ujm = face_u(&g, u, wy, is, js - 1, ks);
                    let ujp = face_u(&g, u, wy, is, js + 1, ks);
                    let ukm = face_u(&g, u, wy, is, js, ks - 1);
                    let ukp = face_u(&g, u, wy, is, js, ks + 1);

                    let dudx = if uc >= 0.0 { (uc - um) / g.hx } else { (up - uc) / g.hx };
                    let dudy = if ay >= 0.0 { (uc - ujm) / g.hy } else { (ujp - uc) / g.hy };
                    let dudz = if az >= 0.0 { (uc - ukm) / g.hz } else { (ukp - uc) / g.hz };
                    let adv = uc * dudx + ay * dudy + az * dudz;
                    let lap = (up - 2.0 * uc + um) / (g.hx * g.hx)
                        + (ujp - 2.0 * uc + ujm) / (g.hy * g.hy)
                        + (ukp - 2.0 * uc + ukm) / (g.hz * g.hz);
                    let mut rhs = -adv + nu * lap;
                    if let Some(fz) = &lorentz {
                        rhs += 0.5 * (fz.x[g.idx(icl, j, k)] + fz.x[g.idx(icr, j, k)]) / m.rho0;
                    }
                    un[f] = uc + dt * rhs;
                }
            }
        }

        // v faces.
        let beta = m.beta;
        let gy = self.config.gravity_y;
        let t0 = self.config.t0;
        for k in 0..g.nz {
            let ks = k as isize;
            for j in 0..=g.ny {
                let js = j as isize;
                for i in 0..g.nx {
                    let f = iv(&g, i, j, k);
                    if self.v_pinned[f] {
                        continue;
                    }
                    let is = i as isize;
                    let vc = v[f];
                    let jcl = (js - 1).clamp(0, g.ny as isize - 1) as usize;
                    let jcr = js.clamp(0, g.ny as isize - 1) as usize;
                    let kp = g.kp(k);
                    let ax = 0.25
                        * (u[iu(&g, i, jcl, k)]
                            + u[iu(&g, i + 1, jcl, k)]
                            + u[iu(&g, i, jcr, k)]
                            + u[iu(&g, i + 1, jcr, k)]);
                    let az = 0.25
                        * (w[iw(&g, i, jcl, k)]
                            + w[iw(&g, i, jcl, kp)]
                            + w[iw(&g, i, jcr, k)]
                            + w[iw(&g, i, jcr, kp)]);

                    let vm = face_v(&g, v, wx, is - 1, js, ks);
                    let vp = face_v(&g, v, wx, is + 1, js, ks);
                    let vjm = face_v(&g, v, wx, is, js - 1, ks);
                    let vjp = face_v(&g, v, wx, is, js + 1, ks);
                    let vkm = face_v(&g, v, wx, is, js, ks - 1);
                    let vkp = face_v(&g, v, wx, is, js, ks + 1);

                    let dvdx = if ax >= 0.0 { (vc - vm) / g.hx } else { (vp - vc) / g.hx };
                    let dvdy = if vc >= 0.0 { (vc - vjm) / g.hy } else { (vjp - vc) / g.hy };
                    let dvdz = if az >= 0.0 { (vc - vkm) / g.hz } else { (vkp - vc) / g.hz };
                    let adv = ax * dvdx + vc * dvdy + az * dvdz;
                    let lap = (vp - 2.0 * vc + vm) / (g.hx * g.hx)
                        + (vjp - 2.0 * vc + vjm) / (g.hy * g.hy)
                        + (vkp - 2.0 * vc + vkm) / (g.hz * g.hz);

                    let t_face = 0.5
                        * (self.t_field[g.idx(i, jcl, k)] + self.t_field[g.idx(i, jcr, k)]);
                    let buoy = gy * (-beta * (t_face - t0));
                    let mut rhs = -adv + nu * lap + buoy;
                    if let Some(fz) = &lorentz {
                        rhs += 0.5 * (fz.y[g.idx(i, jcl, k)] + fz.y[g.idx(i, jcr, k)]) / m.rho0;
                    }
                    vn[f] = vc + dt * rhs;
                }
            }
        }

        // w faces.
        let body = self.config.body_force_z / m.rho0;
        for k in 0..g.nz {
            let ks = k as isize;
            let kcl = g.km(k);
            for j in 0..g.ny {
                let js = j as isize;
                for i in 0..g.nx {
                    let f = iw(&g, i, j, k);
                    if self.w_pinned[f] {
                        continue;
                    }
                    let is = i as isize;
                    let wc = w[f];
                    let ax = 0.25
                        * (u[iu(&g, i, j, kcl)]
                            + u[iu(&g, i + 1, j, kcl)]
                            + u[iu(&g, i, j, k)]
                            + u[iu(&g, i + 1, j, k)]);
                    let ay = 0.25
                        * (v[iv(&g, i, j, kcl)]
                            + v[iv(&g, i, j + 1, kcl)]
                            + v[iv(&g, i, j, k)]
                            + v[iv(&g, i, j + 1, k)]);

                    let wm = face_w(&g, w, wx, wy, is - 1, js, ks);
                    let wp = face_w(&g, w, wx, wy, is + 1, js, ks);
                    let wjm = face_w(&g, w, wx, wy, is, js - 1, ks);
                    let wjp = face_w(&g, w, wx, wy, is, js + 1, ks);
                    let wkm = face_w(&g, w, wx, wy, is, js, ks - 1);
                    let wkp = face_w(&g, w, wx, wy, is, js, ks + 1);

                    let dwdx = if ax >= 0.0 { (wc - wm) / g.hx } else { (wp - wc) / g.hx };
                    let dwdy = if ay >= 0.0 { (wc - wjm) / g.hy } else { (wjp - wc) / g.hy };
                    let dwdz = if wc >= 0.0 { (wc - wkm) / g.hz } else { (wkp - wc) / g.hz };
                    let adv = ax * dwdx + ay * dwdy + wc * dwdz;
                    let lap = (wp - 2.0 * wc + wm) / (g.hx * g.hx)
                        + (wjp - 2.0 * wc + wjm) / (g.hy * g.hy)
                        + (wkp - 2.0 * wc + wkm) / (g.hz * g.hz);
                    let mut rhs = -adv + nu * lap + body;
                    if let Some(fz) = &lorentz {
                        rhs += 0.5 * (fz.z[g.idx(i, j, kcl)] + fz.z[g.idx(i, j, k)]) / m.rho0;
                    }
                    wn[f] = wc + dt * rhs;
                }
            }
        }

        // Quasi-static Lorentz damping, backward Euler at cell centers.
        if let BState::Uniform(bvec) = self.b {
            self.apply_lorentz_damping(&mut un, &mut vn, &mut wn, dt, bvec);
        }

        self.project(&mut un, &mut vn, &mut wn, dt)?;

        if !un.iter().all(|x| x.is_finite())
            || !vn.iter().all(|x| x.is_finite())
            || !wn.iter().all(|x| x.is_finite())
        {
            return Err(SimError::NonFinite {
                what: "velocity",
                step: self.step_count,
            });
        }

        self.mac.u = un;
        self.mac.v = vn;
        self.mac.w = wn;
        Ok(())
    }

    /// Backward-Euler integration of du/dt = (sigma/rho) [(u.B)B - |B|^2 u]:
    /// the component along B is untouched, the perpendicular part is
    /// divided by (1 + sigma |B|^2 dt / rho). Computed at cell centers and
    /// redistributed to faces.
    fn apply_lorentz_damping(
        &self,
        un: &mut [f64],
        vn: &mut [f64],
        wn: &mut [f64],
        dt: f64,
        bvec: [f64; 3],
    ) {
        let b2 = bvec[0] * bvec[0] + bvec[1] * bvec[1] + bvec[2] * bvec[2];
        if b2 == 0.0 {
            return;
        }
        let g = &self.grid;
        let m = &self.config.material;
        let lam = m.sigma_el * b2 * dt / m.rho0;
        let fac = lam / (1.0 + lam);

        let cells = g.cell_count();
        let mut dx = vec![0.0; cells];
        let mut dy = vec![0.0; cells];
        let mut dz = vec![0.0; cells];
        for k in 0..g.nz {
            for j in 0..g.ny {
                for i in 0..g.nx {
                    let c = g.idx(i, j, k);
                    if !g.is_fluid_idx(c) {
                        continue;
                    }
                    let ux = 0.5 * (un[iu(g, i, j, k)] + un[iu(g, i + 1, j, k)]);
                    let uy = 0.5 * (vn[iv(g, i, j, k)] + vn[iv(g, i, j + 1, k)]);
                    let uz = 0.5 * (wn[iw(g, i, j, k)] + wn[iw(g, i, j, g.kp(k))]);
                    let upar = (ux * bvec[0] + uy * bvec[1] + uz * bvec[2]) / b2;
                    dx[c] = -fac * (ux - upar * bvec[0]);
                    dy[c] = -fac * (uy - upar * bvec[1]);
                    dz[c] = -fac * (uz - upar * bvec[2]);
                }
            }
        }

        for k in 0..g.nz {
            for j in 0..g.ny {
                for i in 0..=g.nx {
                    let f = iu(g, i, j, k);
                    if self.u_pinned[f] {
                        continue;
                    }
                    let mut acc = 0.0;
                    let mut cnt = 0.0;
                    if i > 0 {
                        acc += dx[g.idx(i - 1, j, k)];
                        cnt += 1.0;
                    }
                    if i < g.nx {
                        acc += dx[g.idx(i, j, k)];
                        cnt += 1.0;
                    }
                    un[f] += acc / cnt;
                }
            }
            for j in 0..=g.ny {
                for i in 0..g.nx {
                    let f = iv(g, i, j, k);
                    if self.v_pinned[f] {
                        continue;
                    }
                    let mut acc = 0.0;
                    let mut cnt = 0.0;
                    if j > 0 {
                        acc += dy[g.idx(i, j - 1, k)];
                        cnt += 1.0;
                    }
                    if j < g.ny {
                        acc += dy[g.idx(i, j, k)];
                        cnt += 1.0;
                    }
                    vn[f] += acc / cnt;
                }
            }
            for j in 0..g.ny {
                for i in 0..g.nx {
                    let f = iw(g, i, j, k);
                    if self.w_pinned[f] {
                        continue;
                    }
                    let acc = 0.5 * (dz[g.idx(i, j, g.km(k))] + dz[g.idx(i, j, k)]);
                    wn[f] += acc;
                }
            }
        }
    }

    /// Chorin projection: solve for the reduced pressure and make the face
    /// velocity discretely divergence-free.
    fn project(&mut self, un: &mut [f64], vn: &mut [f64], wn: &mut [f64], dt: f64) -> Result<(), SimError> {
        let g = self.grid.clone();
        let m = &self.config.material;
        let scale = m.rho0 / dt;

        let mut rhs = vec![0.0; g.cell_count()];
        for k in 0..g.nz {
            for j in 0..g.ny {
                for i in 0..g.nx {
                    let c = g.idx(i, j, k);
                    if !g.is_fluid_idx(c) {
                        continue;
                    }
                    let div = (un[iu(&g, i + 1, j, k)] - un[iu(&g, i, j, k)]) / g.hx
                        + (vn[iv(&g, i, j + 1, k)] - vn[iv(&g, i, j, k)]) / g.hy
                        + (wn[iw(&g, i, j, g.kp(k))] - wn[iw(&g, i, j, k)]) / g.hz;
                    rhs[c] = -scale * div;
                }
            }
        }

        let solver = PressurePoisson::new(&g, self.config.wall_x, self.config.wall_y);
        let stats: SolveStats =
            solver.solve(&mut rhs, &mut self.q, 1e-12, 40_000)?;
        self.diag.pressure_residual = stats.residual;
        self.diag.pressure_iterations = stats.iterations;

        let cf = dt / m.rho0;
        for k in 0..g.nz {
            for j in 0..g.ny {
                for i in 0..=g.nx {
                    let f = iu(&g, i, j, k);
                    if self.u_pinned[f] {
                        continue;
                    }
                    let grad = if i == 0 {
                        2.0 * self.q[g.idx(0, j, k)] / g.hx
                    } else if i == g.nx {
                        -2.0 * self.q[g.idx(g.nx - 1, j, k)] / g.hx
                    } else {
                        (self.q[g.idx(i, j, k)] - self.q[g.idx(i - 1, j, k)]) / g.hx
                    };
                    un[f] -= cf * grad;
                }
            }
            for j in 0..=g.ny {
                for i in 0..g.nx {
                    let f = iv(&g, i, j, k);
                    if self.v_pinned[f] {
                        continue;
                    }
                    let grad = if j == 0 {
                        2.0 * self.q[g.idx(i, 0, k)] / g.hy
                    } else if j == g.ny {
                        -2.0 * self.q[g.idx(i, g.ny - 1, k)] / g.hy
                    } else {
                        (self.q[g.idx(i, j, k)] - self.q[g.idx(i, j - 1, k)]) / g.hy
                    };
                    vn[f] -= cf * grad;
                }
            }
            for j in 0..g.ny {
                for i in 0..g.nx {
                    let f = iw(&g, i, j, k);
                    if self.w_pinned[f] {
                        continue;
                    }
                    let grad =
                        (self.q[g.idx(i, j, k)] - self.q[g.idx(i, j, g.km(k))]) / g.hz;
                    wn[f] -= cf * grad;
                }
            }
        }

        // Post-projection divergence diagnostic, normalized by max|u|/h.
        let mut max_div = 0.0f64;
        let mut max_vel = 0.0f64;
        for k in 0..g.nz {
            for j in 0..g.ny {
                for i in 0..g.nx {
                    let c = g.idx(i, j, k);
                    if !g.is_fluid_idx(c) {
                        continue;
                    }
                    let div = (un[iu(&g, i + 1, j, k)] - un[iu(&g, i, j, k)]) / g.hx
                        + (vn[iv(&g, i, j + 1, k)] - vn[iv(&g, i, j, k)]) / g.hy
                        + (wn[iw(&g, i, j, g.kp(k))] - wn[iw(&g, i, j, k)]) / g.hz;
                    max_div = max_div.max(div.abs());
                }
            }
        }
        for arr in [&*un, &*vn, &*wn] {
            for x in arr {
                max_vel = max_vel.max(x.abs());
            }
        }
        let h_min = g.hx.min(g.hy).min(g.hz);
        self.diag.velocity_divergence = if max_vel > 0.0 {
            max_div * h_min / max_vel
        } else {
            0.0
        };
        Ok(())
    }

    // ── energy ───────────────────────────────────────────────────────

    pub fn step_energy(&mut self, dt: f64) -> Result<(), SimError> {
        let g = self.grid.clone();
        let m = &self.config.material;
        let hmin = g.hx.min(g.hy).min(g.hz);
        let hmin2 = hmin * hmin;
        let bound = 0.25 * m.rho0 * m.c_p / m.kappa * hmin2;
        if dt > bound * (1.0 + 1e-12) {
            return Err(SimError::TimeStep {
                dt,
                suggested: bound,
                constraint: "thermal diffusion",
            });
        }
        let alpha = m.alpha();
        let inv_rc = 1.0 / (m.rho0 * m.c_p);

        // Joule source: zero under a uniform quasi-static drive, computed
        // from the field otherwise.
        let q_joule: Option<Vec<f64>> = match &self.b {
            BState::Uniform(_) => None,
            BState::Field(bf) => Some(ops::joule_heating(
                &g,
                bf,
                m.sigma_el,
                m.mu_b,
                GhostMode::Periodic,
            )),
        };

        let t_old = &self.t_field;
        let u = &self.mac.u;
        let v = &self.mac.v;
        let w = &self.mac.w;
        let mut t_new = vec![0.0; g.cell_count()];

        for k in 0..g.nz {
            let kp = g.kp(k);
            let km = g.km(k);
            for j in 0..g.ny {
                for i in 0..g.nx {
                    let c = g.idx(i, j, k);
                    if !g.is_fluid_idx(c) {
                        // Solid cells keep their imposed temperature.
                        t_new[c] = t_old[c];
                        continue;
                    }
                    let tc = t_old[c];

                    // Neighbor values; walls mirror (Neumann), the pipe
                    // holds its fixed temperature, z wraps.
                    let tw_x = if i > 0 { t_old[g.idx(i - 1, j, k)] } else { tc };
                    let te_x = if i + 1 < g.nx { t_old[g.idx(i + 1, j, k)] } else { tc };
                    let tw_y = if j > 0 { t_old[g.idx(i, j - 1, k)] } else { tc };
                    let te_y = if j + 1 < g.ny { t_old[g.idx(i, j + 1, k)] } else { tc };
                    let t_km = t_old[g.idx(i, j, km)];
                    let t_kp = t_old[g.idx(i, j, kp)];

                    // Donor-cell fluxes.
                    let uw = u[iu(&g, i, j, k)];
                    let ue = u[iu(&g, i + 1, j, k)];
                    let vs = v[iv(&g, i, j, k)];
                    let vn_f = v[iv(&g, i, j + 1, k)];
                    let wb = w[iw(&g, i, j, k)];
                    let wt = w[iw(&g, i, j, kp)];
                    let flux_w = uw * if uw >= 0.0 { tw_x } else { tc };
                    let flux_e = ue * if ue >= 0.0 { tc } else { te_x };
                    let flux_s = vs * if vs >= 0.0 { tw_y } else { tc };
                    let flux_n = vn_f * if vn_f >= 0.0 { tc } else { te_y };
                    let flux_b = wb * if wb >= 0.0 { t_km } else { tc };
                    let flux_t = wt * if wt >= 0.0 { tc } else { t_kp };
                    let adv = (flux_e - flux_w) / g.hx
                        + (flux_n - flux_s) / g.hy
                        + (flux_t - flux_b) / g.hz;

                    let lap = (te_x - 2.0 * tc + tw_x) / (g.hx * g.hx)
                        + (te_y - 2.0 * tc + tw_y) / (g.hy * g.hy)
                        + (t_kp - 2.0 * tc + t_km) / (g.hz * g.hz);

                    let src = q_joule.as_ref().map_or(0.0, |q| q[c] * inv_rc);
                    t_new[c] = tc + dt * (-adv + alpha * lap + src);
                }
            }
        }

        if !t_new.iter().all(|x| x.is_finite()) {
            return Err(SimError::NonFinite {
                what: "temperature",
                step: self.step_count,
            });
        }
        self.t_field = t_new;
        Ok(())
    }

    pub fn update_density(&mut self) -> Result<(), SimError> {
        self.rho = update_density(&self.t_field, &self.config.material, self.config.t0)?;
        Ok(())
    }

    /// Cell-centered snapshot of the current state, pressure with the
    /// hydrostatic component included.
    pub fn fluid_state(&self) -> FluidState {
        let g = &self.grid;
        let uc = self.mac.cell_centered(g);
        let cells = g.cell_count();
        let mut p = vec![0.0; cells];
        let gy = self.config.gravity_y;
        for k in 0..g.nz {
            for j in 0..g.ny {
                for i in 0..g.nx {
                    let c = g.idx(i, j, k);
                    let y = g.cell_center(i, j, k)[1];
                    p[c] = self.config.p_ext + self.q[c] + self.config.material.rho0 * gy * y;
                }
            }
        }
        let b = match &self.b {
            BState::Uniform(bv) => {
                VectorField::uniform(cells, *bv)
            }
            BState::Field(f) => f.clone(),
        };
        FluidState {
            time: self.time,
            rho: self.rho.clone(),
            u: [uc.x, uc.y, uc.z],
            p,
            t: self.t_field.clone(),
            b: [b.x, b.y, b.z],
        }
    }
}
