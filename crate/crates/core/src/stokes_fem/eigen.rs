//! Poincaré and Korn-type constant estimation by inverse iteration on the
//! Dirichlet-constrained velocity space.

use super::assemble::{assemble_operators, assemble_vector_laplacian, assemble_vector_mass};
use super::space::{MixedSpace, Resolved};
use super::FemError;
use crate::kinematics::TransformJacobians;
use crate::sparse::{smallest_generalized_eigenvalue, SparseMatrix};
use nalgebra::Point2;

/// Large sentinel eigenvalue parked on the (unused) pressure/gauge DOFs so
/// the velocity-block eigenproblem can be solved on the reduced system.
const SENTINEL: f64 = 1e12;

fn reduced_eigs(
    space: &MixedSpace,
    k: &[(usize, usize, f64)],
    m: &[(usize, usize, f64)],
) -> Result<f64, FemError> {
    let zero = vec![0.0; space.n_full];
    let (mut kr, _) = space.reduce_system(k, &zero);
    let (mut mr, _) = space.reduce_system(m, &zero);
    let mut velocity_dof = vec![false; space.n_reduced];
    for d in 0..space.n_vel_dofs {
        if let Resolved::Reduced(r) = space.resolve(d) {
            velocity_dof[r] = true;
        }
    }
    for (r, is_vel) in velocity_dof.iter().enumerate() {
        if !is_vel {
            kr.push((r, r, SENTINEL));
            mr.push((r, r, 1.0));
        }
    }
    let km = SparseMatrix::from_triplets(space.n_reduced, space.n_reduced, &kr)?;
    let mm = SparseMatrix::from_triplets(space.n_reduced, space.n_reduced, &mr)?;
    // Loose tolerance with a generous cap: the smallest symmetric-gradient
    // eigenvalues cluster on symmetric cells, which slows inverse iteration.
    Ok(smallest_generalized_eigenvalue(&km, &mm, 1e-8, 20_000)?)
}

/// Poincaré constant of the Dirichlet-constrained space, scaled by 1/ε:
/// √(1/λ_min) of ∫∇v:∇φ vs ∫v·φ, divided by ε. Dirichlet data must be
/// active on the space (e.g. on Γ_ε).
pub fn estimate_poincare_constant(space: &MixedSpace, epsilon: f64) -> Result<f64, FemError> {
    let k = assemble_vector_laplacian(space);
    let m = assemble_vector_mass(space);
    let lambda = reduced_eigs(space, &k, &m)?;
    Ok((1.0 / lambda).sqrt() / epsilon)
}

/// Minimal Rayleigh quotient of the transformed symmetric-gradient form
/// ∫ J |∇̂ˢv|² against the L² norm on the Dirichlet-constrained space.
pub fn estimate_korn_constant(
    space: &MixedSpace,
    coeff: &dyn Fn(usize, &Point2<f64>) -> TransformJacobians,
    t: f64,
) -> Result<f64, FemError> {
    // μ = ½, scale = 1 turns the viscous form into ∫ J ∇̂ˢv : ∇̂ˢv.
    let ops = assemble_operators(space, coeff, 0.5, 1.0, t)?;
    let m = assemble_vector_mass(space);
    reduced_eigs(space, &ops.a1, &m)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{boundary_edges, uniform_square_mesh};

    #[test]
    fn unperforated_square_matches_known_laplace_eigenvalue() {
        // Smallest Dirichlet Laplace eigenvalue on the unit square is 2π²,
        // so the Poincaré constant at ε = 1 is 1/(π√2).
        let (v, t) = uniform_square_mesh(8);
        let dirichlet = boundary_edges(&t);
        let space = MixedSpace::new(&v, &t, &[], &[], &dirichlet, false).unwrap();
        let c = estimate_poincare_constant(&space, 1.0).unwrap();
        let exact = 1.0 / (std::f64::consts::PI * 2.0f64.sqrt());
        println!("poincare estimate {c:.6} vs exact {exact:.6}");
        assert!((c - exact).abs() < 0.02 * exact);
    }

    #[test]
    fn korn_identity_map_positive_and_deterministic() {
        let (v, t) = uniform_square_mesh(6);
        let dirichlet = boundary_edges(&t);
        let space = MixedSpace::new(&v, &t, &[], &[], &dirichlet, false).unwrap();
        let coeff = |_: usize, y: &Point2<f64>| TransformJacobians::identity(*y);
        let a = estimate_korn_constant(&space, &coeff, 0.0).unwrap();
        let b = estimate_korn_constant(&space, &coeff, 0.0).unwrap();
        println!("korn constant {a:.6}");
        assert!(a > 0.0);
        assert!((a - b).abs() < 1e-10);
        // First Korn inequality on H¹₀: ∫|∇ˢv|² ≥ ½∫|∇v|² ≥ π²∫|v|².
        assert!(a > 9.8);
    }
}
