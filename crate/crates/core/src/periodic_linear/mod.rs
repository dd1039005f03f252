//! Periodic Galerkin system for the linear problem and its solution.

pub mod forcing;
pub mod norms;
pub mod pipeline;
pub mod pressure;
pub mod profile;
pub mod shooting;
pub mod solution;
pub mod system;

pub use forcing::{DataNorms, Forcing, ForcingShape};
pub use norms::{energy_norms, EnergyNorms, FieldPart, FieldSampler};
pub use pipeline::{
    eigen_system, prepare, solve_linear_end_to_end, LinearReport, LinearRun, LinearSetup,
    Resolution,
};
pub use pressure::{recover_pressure, MomentumBalance, PressureField, PressureSpace};
pub use profile::KinematicProfile;
pub use shooting::{solve_periodic, CoefficientTrajectory, Integrator, PeriodicOde};
pub use solution::{FlowSolution, SolutionMetadata};
pub use system::{assemble, GalerkinSystem};
