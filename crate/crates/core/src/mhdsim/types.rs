use alloc::string::String;
use alloc::vec::Vec;

use crate::math;

/// Lead–lithium material constants.
///
/// `mu_b` is the magnetic permeability (the same constant appears as mu_0
/// in the induction equation). Defaults follow the reference operating
/// point of the solver.
#[derive(Debug, Clone, PartialEq)]
pub struct MaterialProps {
    /// Reference density [kg/m^3].
    pub rho0: f64,
    /// Dynamic viscosity [Pa s].
    pub mu_visc: f64,
    /// Magnetic permeability [H/m].
    pub mu_b: f64,
    /// Electrical conductivity [1/(Ohm m)].
    pub sigma_el: f64,
    /// Thermal expansion coefficient [1/K].
    pub beta: f64,
    /// Thermal conductivity [W/(m K)].
    pub kappa: f64,
    /// Specific heat [J/(kg K)].
    pub c_p: f64,
}

impl Default for MaterialProps {
    fn default() -> Self {
        Self {
            rho0: 9806.0,
            mu_visc: 1.93e-3,
            mu_b: 1.26e-6,
            sigma_el: 7.82e5,
            beta: 1.3e-4,
            kappa: 20.93,
            c_p: 189.5,
        }
    }
}

impl MaterialProps {
    pub fn validate(&self) -> Result<(), SimError> {
        let vals = [
            self.rho0,
            self.mu_visc,
            self.mu_b,
            self.sigma_el,
            self.beta,
            self.kappa,
            self.c_p,
        ];
        if vals.iter().any(|v| !(*v > 0.0)) {
            return Err(SimError::Config(String::from(
                "material properties must be strictly positive",
            )));
        }
        Ok(())
    }

    /// Kinematic viscosity [m^2/s].
    pub fn nu(&self) -> f64 {
        self.mu_visc / self.rho0
    }

    /// Thermal diffusivity [m^2/s].
    pub fn alpha(&self) -> f64 {
        self.kappa / (self.rho0 * self.c_p)
    }

    /// Magnetic diffusivity 1/(sigma mu_B) [m^2/s].
    pub fn eta(&self) -> f64 {
        1.0 / (self.sigma_el * self.mu_b)
    }
}

/// Channel geometry: axial length `length`, square cross-section of side
/// `side`, and a cylindrical pipe cavity of radius `r_pipe` along the axis.
#[derive(Debug, Clone, PartialEq)]
pub struct Geometry {
    /// Axial extent (z) [m].
    pub length: f64,
    /// Cross-section side (x and y) [m].
    pub side: f64,
    /// Pipe cavity radius [m]; zero disables the pipe.
    pub r_pipe: f64,
    /// When set, cells beyond this radius are masked solid too, turning
    /// the cross-section into an annulus (conduction validation).
    pub annulus_outer_radius: Option<f64>,
    /// Cells per axis (nx, ny, nz). `nz == 1` selects the 2-D
    /// cross-section mode; all code paths are shared.
    pub resolution: (usize, usize, usize),
}

impl Default for Geometry {
    fn default() -> Self {
        Self {
            length: 0.07,
            side: 0.02,
            r_pipe: 0.005,
            annulus_outer_radius: None,
            resolution: (16, 16, 32),
        }
    }
}

/// Imposed magnetic field program.
///
/// The sinusoidal profile is B(t) = amplitude * sin(omega t + phase) +
/// offset along the toroidal (x) axis.
#[derive(Debug, Clone, PartialEq)]
pub enum MagneticDrive {
    /// Constant field along the toroidal (x) axis.
    ConstantToroidal { bx: f64 },
    /// Constant field with toroidal (x) and poloidal (y) components.
    ConstantCombined { bx: f64, by: f64 },
    /// Time-varying toroidal field.
    SinusoidalToroidal {
        amplitude: f64,
        omega: f64,
        phase: f64,
        offset: f64,
    },
}

impl MagneticDrive {
    pub fn validate(&self) -> Result<(), SimError> {
        match self {
            MagneticDrive::SinusoidalToroidal {
                amplitude, offset, ..
            } => {
                if offset - amplitude.abs() <= 0.0 {
                    return Err(SimError::Config(String::from(
                        "sinusoidal drive must keep offset - |amplitude| > 0",
                    )));
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }

    /// Field vector at time `t` [T].
    pub fn value_at(&self, t: f64) -> [f64; 3] {
        match *self {
            MagneticDrive::ConstantToroidal { bx } => [bx, 0.0, 0.0],
            MagneticDrive::ConstantCombined { bx, by } => [bx, by, 0.0],
            MagneticDrive::SinusoidalToroidal {
                amplitude,
                omega,
                phase,
                offset,
            } => [amplitude * math::sin(omega * t + phase) + offset, 0.0, 0.0],
        }
    }

    /// Scalar drive value used as the parameter-estimation target: the
    /// toroidal component.
    pub fn scalar_at(&self, t: f64) -> f64 {
        self.value_at(t)[0]
    }
}

/// Induction treatment.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InductionMode {
    /// Evolve B explicitly (advection + resistive diffusion) and clean its
    /// divergence each step. Wall ghosts are periodic in this mode; it
    /// exists for the diffusion-decay and divergence-cleaning checks.
    Full,
    /// Low magnetic Reynolds number closure: B stays at the drive value
    /// and only the Lorentz damping and Joule terms see it.
    QuasiStatic,
}

/// Velocity condition on the lateral (x/y) walls.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WallMode {
    /// Artificial open boundary: zero normal derivative for all velocity
    /// components, pressure anchored to the exterior value.
    Open,
    /// Solid no-slip wall (validation configurations).
    NoSlip,
}

/// Full simulation configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub material: MaterialProps,
    pub geometry: Geometry,
    pub drive: MagneticDrive,
    /// Initial fluid temperature [K].
    pub t0: f64,
    /// Pipe surface temperature [K].
    pub t_pipe: f64,
    /// Initial axial velocity [m/s].
    pub u0: f64,
    /// Exterior pressure anchor [Pa].
    pub p_ext: f64,
    /// Simulated time [s].
    pub t_end: f64,
    /// Frame storage interval [s].
    pub store_dt: f64,
    /// Advective CFL bound.
    pub cfl: f64,
    pub induction_mode: InductionMode,
    /// Gravity along y [m/s^2]; zero disables buoyancy.
    pub gravity_y: f64,
    /// Constant axial body force [N/m^3] (validation driving).
    pub body_force_z: f64,
    pub wall_x: WallMode,
    pub wall_y: WallMode,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            material: MaterialProps::default(),
            geometry: Geometry::default(),
            drive: MagneticDrive::ConstantToroidal { bx: 1.0 },
            t0: 600.0,
            t_pipe: 560.0,
            u0: 0.01,
            p_ext: 1.0e5,
            t_end: 3.0,
            store_dt: 0.025,
            cfl: 0.5,
            induction_mode: InductionMode::QuasiStatic,
            gravity_y: -9.81,
            body_force_z: 0.0,
            wall_x: WallMode::Open,
            wall_y: WallMode::Open,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<(), SimError> {
        self.material.validate()?;
        self.drive.validate()?;
        if !(self.t_end > 0.0) || !(self.store_dt > 0.0) {
            return Err(SimError::Config(String::from(
                "t_end and store_dt must be positive",
            )));
        }
        let frames = self.t_end / self.store_dt;
        if (frames - crate::math::round(frames)).abs() > 1e-9 * frames.max(1.0) {
            return Err(SimError::Config(String::from(
                "t_end must be an integer multiple of store_dt",
            )));
        }
        if !(self.cfl > 0.0 && self.cfl <= 1.0) {
            return Err(SimError::Config(String::from("cfl must lie in (0, 1]")));
        }
        Ok(())
    }

    pub fn frame_count(&self) -> usize {
        crate::math::round(self.t_end / self.store_dt) as usize
    }
}

/// Grid fields at one time instant, cell-centered on the full grid.
/// Pipe-masked cells carry the pinned pipe values.
#[derive(Debug, Clone)]
pub struct FluidState {
    pub time: f64,
    /// Density [kg/m^3].
    pub rho: Vec<f64>,
    /// Velocity components [m/s].
    pub u: [Vec<f64>; 3],
    /// Pressure including the hydrostatic component [Pa].
    pub p: Vec<f64>,
    /// Temperature [K].
    pub t: Vec<f64>,
    /// Magnetic field components [T].
    pub b: [Vec<f64>; 3],
}

/// Simulator errors.
#[derive(Debug, Clone, PartialEq)]
pub enum SimError {
    Config(String),
    /// Requested step exceeds a stability bound; `suggested` satisfies it.
    TimeStep {
        dt: f64,
        suggested: f64,
        constraint: &'static str,
    },
    /// Iterative solve did not reach the requested residual.
    Solver { residual: f64, iterations: usize },
    /// A physical invariant was violated (for example non-positive density).
    Physics(String),
    /// A non-finite value appeared during stepping.
    NonFinite { what: &'static str, step: usize },
}

impl core::fmt::Display for SimError {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            SimError::Config(msg) => write!(f, "configuration error: {msg}"),
            SimError::TimeStep {
                dt,
                suggested,
                constraint,
            } => write!(
                f,
                "time step {dt} violates {constraint} stability; use dt <= {suggested}"
            ),
            SimError::Solver {
                residual,
                iterations,
            } => write!(
                f,
                "iterative solver stalled at residual {residual} after {iterations} iterations"
            ),
            SimError::Physics(msg) => write!(f, "physics error: {msg}"),
            SimError::NonFinite { what, step } => {
                write!(f, "non-finite {what} at step {step}")
            }
        }
    }
}

impl core::error::Error for SimError {}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_material_matches_reference_values() {
        let m = MaterialProps::default();
        assert_eq!(m.rho0, 9806.0);
        assert_eq!(m.kappa, 20.93);
        assert_eq!(m.c_p, 189.5);
    }

    #[test]
    fn sinusoidal_drive_must_not_reverse() {
        let bad = MagneticDrive::SinusoidalToroidal {
            amplitude: 1.5,
            omega: 1.0,
            phase: 0.0,
            offset: 1.0,
        };
        assert!(bad.validate().is_err());
        let good = MagneticDrive::SinusoidalToroidal {
            amplitude: 0.5,
            omega: 2.0 * core::f64::consts::PI / 0.8,
            phase: core::f64::consts::FRAC_PI_2,
            offset: 1.2,
        };
        assert!(good.validate().is_ok());
        // Drive value at t = 0 for the first oscillating test case.
        assert!((good.scalar_at(0.0) - 1.7).abs() < 1e-12);
    }

    #[test]
    fn frame_count_from_default_config() {
        let cfg = SimConfig::default();
        assert!(cfg.validate().is_ok());
        assert_eq!(cfg.frame_count(), 120);
    }

    #[test]
    fn non_integer_frame_count_rejected() {
        let cfg = SimConfig {
            t_end: 1.0,
            store_dt: 0.3,
            ..SimConfig::default()
        };
        assert!(cfg.validate().is_err());
    }
}
