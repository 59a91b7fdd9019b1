//! Homogenised Darcy flow with memory for porous media whose microstructure
//! evolves in time along a prescribed deformation.
//!
//! The crate solves instationary Stokes cell problems on a fixed periodic
//! reference cell (the moving geometry is carried by transformation
//! coefficients), assembles the resulting memory permeability kernel,
//! time-steps the macroscopic Darcy law with memory, and cross-checks the
//! upscaling against direct solves on epsilon-scaled perforated domains.

pub mod cell_problems;
pub mod geometry;
pub mod kinematics;
pub mod macro_darcy;
pub mod quadrature;
pub mod scenario;
pub mod sparse;
pub mod stokes_fem;
pub mod verify;
pub mod vtk;
