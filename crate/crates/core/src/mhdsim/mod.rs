//! Desk-scale finite-volume solver for buoyant lead–lithium flow around a
//! cooled pipe in an imposed magnetic field.
//!
//! The solver treats the flow as incompressible Boussinesq: density is
//! constant in the inertia terms, the linear density closure feeds only
//! the buoyancy force, and incompressibility is enforced by pressure
//! projection on a staggered grid. The magnetic field is handled either
//! quasi-statically (low magnetic Reynolds number: B stays at the imposed
//! drive value and enters through the induced-current Lorentz damping
//! sigma (u x B) x B) or through the full explicit induction equation with
//! divergence cleaning, which exists for validation runs.

mod fields;
mod grid;
mod ops;
mod poisson;
mod run;
mod stepper;
mod types;

pub use fields::{MacVelocity, VectorField};
pub use grid::{build_grid, CellKind, Grid};
pub use ops::{curl, joule_heating, lorentz_force, GhostMode};
pub use poisson::clean_divergence;
pub use run::{run_simulation, SnapshotSeries};
pub use stepper::{update_density, BState, Simulation, StepDiagnostics};
pub use types::{
    FluidState, Geometry, InductionMode, MagneticDrive, MaterialProps, SimConfig, SimError,
    WallMode,
};
