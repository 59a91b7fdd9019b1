//! Taylor–Hood finite elements for the transformed instationary Stokes
//! problem: mixed spaces with periodic/Dirichlet constraints, operator
//! assembly, saddle-point solves, implicit Euler time stepping, and
//! Poincaré/Korn constant estimation.

mod assemble;
mod eigen;
mod solve;
mod space;

pub use assemble::{
    assemble_boundary_pressure, assemble_force, assemble_operators, assemble_vector_laplacian,
    assemble_vector_mass, p2_shape, pressure_at, velocity_at, TransformedOperators,
};
pub use eigen::{estimate_korn_constant, estimate_poincare_constant};
pub use solve::{
    boundary_flux, epsilon_jacobians, field_norms, solve_direct_epsilon, solve_saddle,
    solve_saddle_cached, step_instationary, DirectEpsilonSolution, SaddleConfig,
};
pub use space::{MixedSpace, MixedStokesState, Resolved};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum FemError {
    #[error("invalid constraint: {0}")]
    InvalidConstraint(String),
    #[error("non-finite value produced during assembly")]
    AssemblyOverflow,
    #[error("solver breakdown: relative residual {residual:.3e} exceeds {tolerance:.3e}")]
    SolverBreakdown { residual: f64, tolerance: f64 },
    #[error("system size {dofs} exceeds the configured cap {cap}")]
    ResourceGuard { dofs: usize, cap: usize },
    #[error(transparent)]
    Sparse(#[from] crate::sparse::SparseError),
    #[error(transparent)]
    Kinematics(#[from] crate::kinematics::KinematicsError),
}
