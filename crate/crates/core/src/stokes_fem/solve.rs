//! Saddle-point solves and implicit Euler time stepping for the transformed
//! Stokes system, including the direct ε-domain solver.

use super::assemble::{
    assemble_boundary_pressure, assemble_force, assemble_operators, pressure_at, velocity_at,
};
use super::space::{MixedSpace, MixedStokesState};
use super::{FemError, TransformedOperators};
use crate::geometry::{boundary_edges, EpsilonDomainMesh};
use crate::kinematics::{MicrostructureEvolution, TransformJacobians};
use crate::quadrature::{segment_gauss3, triangle_degree5};
use crate::sparse::{relative_residual, SparseLu, SparseMatrix};
use nalgebra::{Point2, Vector2};

/// Solver settings for the block systems.
#[derive(Debug, Clone)]
pub struct SaddleConfig {
    pub residual_tol: f64,
}

impl Default for SaddleConfig {
    fn default() -> Self {
        SaddleConfig { residual_tol: 1e-10 }
    }
}

/// Full block system [[K, −Bᵀ], [B, 0]] plus the gauge row/column if active.
fn block_triplets(
    space: &MixedSpace,
    k: &[(usize, usize, f64)],
    b: &[(usize, usize, f64)],
) -> Vec<(usize, usize, f64)> {
    let mut full = k.to_vec();
    full.reserve(2 * b.len() + 2 * space.n_pressure);
    for &(p, u, v) in b {
        full.push((p, u, v));
        full.push((u, p, -v));
    }
    if space.gauge {
        let g = space.n_vel_dofs + space.n_pressure;
        for (i, &w) in space.pressure_integral.iter().enumerate() {
            if w != 0.0 {
                full.push((space.n_vel_dofs + i, g, w));
                full.push((g, space.n_vel_dofs + i, w));
            }
        }
    }
    full
}

fn solve_full(
    space: &MixedSpace,
    full: &[(usize, usize, f64)],
    rhs_full: &[f64],
    time: f64,
    cfg: &SaddleConfig,
    cache: &mut Option<(SparseMatrix, SparseLu)>,
) -> Result<MixedStokesState, FemError> {
    let (reduced, rhs) = space.reduce_system(full, rhs_full);
    if cache.is_none() {
        let mat = SparseMatrix::from_triplets(space.n_reduced, space.n_reduced, &reduced)?;
        let lu = mat.lu()?;
        *cache = Some((mat, lu));
    }
    let (mat, lu) = cache.as_ref().unwrap();
    let x = lu.solve(&rhs);
    let residual = relative_residual(mat, &x, &rhs);
    if !(residual < cfg.residual_tol) {
        return Err(FemError::SolverBreakdown { residual, tolerance: cfg.residual_tol });
    }
    let fullsol = space.expand(&x);
    Ok(MixedStokesState {
        velocity: fullsol[..space.n_vel_dofs].to_vec(),
        pressure: fullsol[space.n_vel_dofs..space.n_vel_dofs + space.n_pressure].to_vec(),
        time,
    })
}

/// Solve the constrained saddle system K v − Bᵀ p = F, B v = G. `rhs_full`
/// carries F in the velocity rows and G in the pressure rows.
pub fn solve_saddle(
    space: &MixedSpace,
    k: &[(usize, usize, f64)],
    b: &[(usize, usize, f64)],
    rhs_full: &[f64],
    time: f64,
    cfg: &SaddleConfig,
) -> Result<MixedStokesState, FemError> {
    let full = block_triplets(space, k, b);
    solve_full(space, &full, rhs_full, time, cfg, &mut None)
}

/// [`solve_saddle`] with an externally owned factorisation cache: the first
/// call factors the reduced matrix, later calls with the same operators and
/// different right-hand sides reuse it.
pub fn solve_saddle_cached(
    space: &MixedSpace,
    k: &[(usize, usize, f64)],
    b: &[(usize, usize, f64)],
    rhs_full: &[f64],
    time: f64,
    cfg: &SaddleConfig,
    cache: &mut Option<(SparseMatrix, SparseLu)>,
) -> Result<MixedStokesState, FemError> {
    let full = block_triplets(space, k, b);
    solve_full(space, &full, rhs_full, time, cfg, cache)
}

/// One implicit Euler step on the product form:
/// (M(t_n)v_n − M(t_{n−1})v_{n−1})/dt + (A1+A2)(t_n)v_n − Bᵀp_n = F(t_n).
pub fn step_instationary(
    space: &MixedSpace,
    ops: &TransformedOperators,
    m_prev: &[(usize, usize, f64)],
    prev: &MixedStokesState,
    dt: f64,
    rhs_full: &[f64],
    cfg: &SaddleConfig,
) -> Result<MixedStokesState, FemError> {
    assert!(dt > 0.0);
    let mut k = Vec::with_capacity(ops.m.len() + ops.a1.len() + ops.a2.len());
    k.extend(ops.m.iter().map(|&(i, j, v)| (i, j, v / dt)));
    k.extend_from_slice(&ops.a1);
    k.extend_from_slice(&ops.a2);
    let mut rhs = rhs_full.to_vec();
    for &(i, j, v) in m_prev {
        rhs[i] += v * prev.velocity[j] / dt;
    }
    solve_saddle(space, &k, &ops.b, &rhs, ops.time, cfg)
}

/// Direct transformed Stokes solve on an ε-scaled perforated domain.
#[derive(Debug)]
pub struct DirectEpsilonSolution {
    pub space: MixedSpace,
    /// States at t_0 = 0, …, t_N = T.
    pub states: Vec<MixedStokesState>,
    pub dt: f64,
    /// Outer boundary edges Λ_ε, CCW-oriented.
    pub lambda_edges: Vec<[usize; 2]>,
    /// ‖ŵ‖_{L²((0,T)×Ω_ε)} of the homogenised-boundary part of the velocity.
    pub w_l2: f64,
    /// ε·‖∇ŵ‖_{L²((0,T)×Ω_ε)}.
    pub w_grad_scaled: f64,
    /// ‖q̂‖_{L²((0,T)×Ω_ε)}.
    pub q_l2: f64,
}

/// Physical-coordinate transformation Jacobians for a point inside ε-cell
/// with corner `corner`, from the reference-cell evolution.
pub fn epsilon_jacobians(
    ev: &MicrostructureEvolution,
    t: f64,
    x_macro: &Point2<f64>,
    corner: &Point2<f64>,
    eps: f64,
    x: &Point2<f64>,
) -> Result<TransformJacobians, FemError> {
    let y = Point2::new(
        ((x.x - corner.x) / eps).clamp(0.0, 1.0),
        ((x.y - corner.y) / eps).clamp(0.0, 1.0),
    );
    let mut jac = ev.jacobians(t, x_macro, &y)?;
    jac.psi = Point2::new(corner.x + eps * jac.psi.x, corner.y + eps * jac.psi.y);
    jac.dt_psi *= eps;
    jac.dy_psi_grad[0] /= eps;
    jac.dy_psi_grad[1] /= eps;
    jac.dy_det /= eps;
    Ok(jac)
}

fn cell_corner_of(x: &Point2<f64>, eps: f64, n: usize) -> (Point2<f64>, Point2<f64>) {
    let i = ((x.x / eps).floor() as usize).min(n - 1);
    let j = ((x.y / eps).floor() as usize).min(n - 1);
    let corner = Point2::new(eps * i as f64, eps * j as f64);
    let center = Point2::new(eps * (i as f64 + 0.5), eps * (j as f64 + 0.5));
    (corner, center)
}

/// Solve the transformed instationary Stokes problem on Ω_ε with viscosity
/// scaling με², no-slip data A_ε∂_tψ_ε on Γ_ε and normal-stress data p_b
/// on the outer boundary Λ_ε.
#[allow(clippy::too_many_arguments)]
pub fn solve_direct_epsilon(
    mesh: &EpsilonDomainMesh,
    ev: &MicrostructureEvolution,
    mu: f64,
    p_b: &dyn Fn(&Point2<f64>) -> f64,
    force: &dyn Fn(&Point2<f64>) -> Vector2<f64>,
    t_final: f64,
    n_steps: usize,
    max_dofs: Option<usize>,
    cfg: &SaddleConfig,
) -> Result<DirectEpsilonSolution, FemError> {
    let eps = mesh.epsilon;
    let n_cells = mesh.cells_per_side;
    let mut space = MixedSpace::new(
        &mesh.vertices,
        &mesh.triangles,
        &[],
        &[],
        &mesh.interface_edges,
        false,
    )?;
    if let Some(cap) = max_dofs {
        if space.n_full > cap {
            return Err(FemError::ResourceGuard { dofs: space.n_full, cap });
        }
    }
    let lambda_edges: Vec<[usize; 2]> = boundary_edges(&mesh.triangles)
        .into_iter()
        .filter(|e| mesh.outer_sides[e[0]] & mesh.outer_sides[e[1]] != 0)
        .collect();

    let dt = t_final / n_steps as f64;
    let static_domain = ev.law.is_identity();
    let dirichlet_at = |space: &mut MixedSpace, t: f64| {
        space.set_dirichlet(|x| {
            let (corner, center) = cell_corner_of(x, eps, n_cells);
            let jac = epsilon_jacobians(ev, t, &center, &corner, eps, x)
                .expect("interface point outside the validated map domain");
            jac.adj * jac.dt_psi
        });
    };

    dirichlet_at(&mut space, 0.0);
    let zero = vec![0.0; space.n_reduced];
    let full0 = space.expand(&zero);
    let mut states = vec![MixedStokesState {
        velocity: full0[..space.n_vel_dofs].to_vec(),
        pressure: vec![0.0; space.n_pressure],
        time: 0.0,
    }];

    let coeff_at = |t: f64| {
        move |ti: usize, x: &Point2<f64>| {
            let k = mesh.cell_of_triangle[ti];
            let center = mesh.cell_center(k);
            let corner = Point2::new(center.x - 0.5 * eps, center.y - 0.5 * eps);
            epsilon_jacobians(ev, t, &center, &corner, eps, x)
                .expect("quadrature point outside the validated map domain")
        }
    };

    let mut cache: Option<(SparseMatrix, SparseLu)> = None;
    let mut ops = assemble_operators(&space, &coeff_at(0.0), mu, eps, 0.0)?;
    let mut m_prev = ops.m.clone();
    let (mut w2, mut g2, mut q2) = (0.0, 0.0, 0.0);
    for n in 1..=n_steps {
        let t = dt * n as f64;
        dirichlet_at(&mut space, t);
        if !static_domain {
            ops = assemble_operators(&space, &coeff_at(t), mu, eps, t)?;
            cache = None;
        }

        // Right-hand side: volume force plus outer-boundary pressure data.
        let mut rhs = assemble_force(&space, &coeff_at(t), force);
        let bdry = assemble_boundary_pressure(&space, &lambda_edges, p_b)?;
        for (r, v) in rhs.iter_mut().zip(&bdry) {
            *r += v;
        }
        let prev = states.last().unwrap();
        let mut k = Vec::with_capacity(ops.m.len() + ops.a1.len() + ops.a2.len());
        k.extend(ops.m.iter().map(|&(i, j, v)| (i, j, v / dt)));
        k.extend_from_slice(&ops.a1);
        k.extend_from_slice(&ops.a2);
        for &(i, j, v) in &m_prev {
            rhs[i] += v * prev.velocity[j] / dt;
        }
        let full = block_triplets(&space, &k, &ops.b);
        let state = solve_full(&space, &full, &rhs, t, cfg, &mut cache)?;
        if !static_domain {
            m_prev = ops.m.clone();
        }

        // Accumulate a-priori norms of ŵ = v̂ minus the nodal interface lift.
        let mut w = state.velocity.clone();
        for &node in &space.dirichlet_nodes {
            w[2 * node] = 0.0;
            w[2 * node + 1] = 0.0;
        }
        let (l2, h1, q) = field_norms(&space, &w, &state.pressure);
        w2 += dt * l2;
        g2 += dt * h1;
        q2 += dt * q;
        states.push(state);
    }

    Ok(DirectEpsilonSolution {
        space,
        states,
        dt,
        lambda_edges,
        w_l2: w2.sqrt(),
        w_grad_scaled: eps * g2.sqrt(),
        q_l2: q2.sqrt(),
    })
}

/// (∫|v|², ∫|∇v|², ∫q²) over the mesh by degree-5 quadrature.
pub fn field_norms(space: &MixedSpace, velocity: &[f64], pressure: &[f64]) -> (f64, f64, f64) {
    let (mut l2, mut h1, mut q2) = (0.0, 0.0, 0.0);
    for ti in 0..space.triangles.len() {
        let t = space.triangles[ti];
        let (a, b, c) =
            (space.vertices[t[0]], space.vertices[t[1]], space.vertices[t[2]]);
        let area = 0.5 * crate::geometry::orient(&a, &b, &c);
        for node in triangle_degree5() {
            let w = node.weight * area;
            let (v, g) = velocity_at(space, velocity, ti, node.bary);
            let p = pressure_at(space, pressure, ti, node.bary);
            l2 += w * v.norm_squared();
            h1 += w * (g[(0, 0)] * g[(0, 0)] + g[(0, 1)] * g[(0, 1)]
                + g[(1, 0)] * g[(1, 0)] + g[(1, 1)] * g[(1, 1)]);
            q2 += w * p * p;
        }
    }
    (l2, h1, q2)
}

/// ∫ v·ν ds over CCW-oriented boundary edges (outward normal).
pub fn boundary_flux(space: &MixedSpace, velocity: &[f64], edges: &[[usize; 2]]) -> f64 {
    let nv = space.vertices.len();
    let mut edge_lookup = std::collections::HashMap::new();
    for (id, e) in space.edges.iter().enumerate() {
        edge_lookup.insert((e[0], e[1]), id);
    }
    let mut flux = 0.0;
    for e in edges {
        let (a, b) = (space.vertices[e[0]], space.vertices[e[1]]);
        let d = b - a;
        let nu = Vector2::new(d.y, -d.x); // length-weighted outward normal
        let id = edge_lookup[&(e[0].min(e[1]), e[0].max(e[1]))];
        let nodes = [e[0], e[1], nv + id];
        for (tau, w) in segment_gauss3() {
            let shape = [
                (1.0 - tau) * (1.0 - 2.0 * tau),
                tau * (2.0 * tau - 1.0),
                4.0 * tau * (1.0 - tau),
            ];
            let mut v = Vector2::zeros();
            for k in 0..3 {
                v.x += shape[k] * velocity[2 * nodes[k]];
                v.y += shape[k] * velocity[2 * nodes[k] + 1];
            }
            flux += w * v.dot(&nu);
        }
    }
    flux
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{boundary_edges, uniform_square_mesh};
    use crate::kinematics::TransformJacobians;
    use std::f64::consts::PI;

    fn identity_coeff(_: usize, y: &Point2<f64>) -> TransformJacobians {
        TransformJacobians::identity(*y)
    }

    fn mms_velocity(x: &Point2<f64>) -> Vector2<f64> {
        Vector2::new(
            (PI * x.x).sin().powi(2) * (2.0 * PI * x.y).sin(),
            -(2.0 * PI * x.x).sin() * (PI * x.y).sin().powi(2),
        )
    }

    fn mms_pressure(x: &Point2<f64>) -> f64 {
        (PI * x.x).cos() * (PI * x.y).cos()
    }

    fn mms_force(x: &Point2<f64>) -> Vector2<f64> {
        let (sx, cx) = ((PI * x.x).sin(), (PI * x.x).cos());
        let (sy, cy) = ((PI * x.y).sin(), (PI * x.y).cos());
        let (s2x, c2x) = ((2.0 * PI * x.x).sin(), (2.0 * PI * x.x).cos());
        let (s2y, c2y) = ((2.0 * PI * x.y).sin(), (2.0 * PI * x.y).cos());
        let pp = PI * PI;
        Vector2::new(
            -2.0 * pp * (c2x - 2.0 * sx * sx) * s2y - PI * sx * cy,
            2.0 * pp * s2x * (c2y - 2.0 * sy * sy) - PI * cx * sy,
        )
    }

    fn stationary_errors(n: usize) -> (f64, f64) {
        let (v, t) = uniform_square_mesh(n);
        let dirichlet = boundary_edges(&t);
        let space = MixedSpace::new(&v, &t, &[], &[], &dirichlet, true).unwrap();
        let ops = assemble_operators(&space, &identity_coeff, 1.0, 1.0, 0.0).unwrap();
        let rhs = assemble_force(&space, &identity_coeff, &mms_force);
        let state =
            solve_saddle(&space, &ops.a1, &ops.b, &rhs, 0.0, &SaddleConfig::default()).unwrap();
        let (mut ev2, mut ep2) = (0.0, 0.0);
        for ti in 0..space.triangles.len() {
            let tr = space.triangles[ti];
            let (a, b, c) =
                (space.vertices[tr[0]], space.vertices[tr[1]], space.vertices[tr[2]]);
            let area = 0.5 * crate::geometry::orient(&a, &b, &c);
            for node in triangle_degree5() {
                let x = Point2::new(
                    node.bary[0] * a.x + node.bary[1] * b.x + node.bary[2] * c.x,
                    node.bary[0] * a.y + node.bary[1] * b.y + node.bary[2] * c.y,
                );
                let w = node.weight * area;
                let (vh, _) = velocity_at(&space, &state.velocity, ti, node.bary);
                let ph = pressure_at(&space, &state.pressure, ti, node.bary);
                ev2 += w * (vh - mms_velocity(&x)).norm_squared();
                ep2 += w * (ph - mms_pressure(&x)).powi(2);
            }
        }
        (ev2.sqrt(), ep2.sqrt())
    }

    #[test]
    fn zero_data_gives_zero_solution() {
        let (v, t) = uniform_square_mesh(4);
        let dirichlet = boundary_edges(&t);
        let space = MixedSpace::new(&v, &t, &[], &[], &dirichlet, true).unwrap();
        let ops = assemble_operators(&space, &identity_coeff, 1.0, 1.0, 0.0).unwrap();
        let rhs = vec![0.0; space.n_full];
        let s = solve_saddle(&space, &ops.a1, &ops.b, &rhs, 0.0, &SaddleConfig::default())
            .unwrap();
        assert!(s.velocity.iter().chain(&s.pressure).all(|v| v.abs() < 1e-14));
    }

    #[test]
    fn lid_driven_cavity_is_discretely_divergence_free() {
        let (v, t) = uniform_square_mesh(8);
        let dirichlet = boundary_edges(&t);
        let mut space = MixedSpace::new(&v, &t, &[], &[], &dirichlet, true).unwrap();
        space.set_dirichlet(|x| {
            if x.y > 1.0 - 1e-9 {
                Vector2::new(1.0, 0.0)
            } else {
                Vector2::zeros()
            }
        });
        let ops = assemble_operators(&space, &identity_coeff, 1.0, 1.0, 0.0).unwrap();
        let rhs = vec![0.0; space.n_full];
        let s = solve_saddle(&space, &ops.a1, &ops.b, &rhs, 0.0, &SaddleConfig::default())
            .unwrap();
        let speed = s
            .velocity
            .chunks(2)
            .map(|v| (v[0] * v[0] + v[1] * v[1]).sqrt())
            .fold(0.0, f64::max);
        assert!(speed > 0.5 && speed < 1.001, "max speed {speed}");
        // Discrete divergence rows: B v + c λ = 0 with the gauge weights c.
        let mut bv = vec![0.0; space.n_pressure];
        for &(p, u, w) in &ops.b {
            bv[p - space.n_vel_dofs] += w * s.velocity[u];
        }
        let c = &space.pressure_integral;
        let lambda = -bv.iter().zip(c).map(|(a, b)| a * b).sum::<f64>()
            / c.iter().map(|b| b * b).sum::<f64>();
        let div_res = bv
            .iter()
            .zip(c)
            .map(|(a, b)| (a + lambda * b).abs())
            .fold(0.0, f64::max);
        println!("max divergence row residual {div_res:.3e}");
        assert!(div_res < 1e-10);
        // Zero-mean pressure gauge.
        let pmean: f64 = s.pressure.iter().zip(c).map(|(p, w)| p * w).sum();
        assert!(pmean.abs() < 1e-10);
    }

    #[test]
    fn manufactured_solution_converges_at_taylor_hood_rates() {
        let mut prev: Option<(f64, f64)> = None;
        let mut rates = Vec::new();
        for n in [8usize, 16, 32] {
            let (ev, ep) = stationary_errors(n);
            println!("n = {n}: velocity L2 {ev:.3e}, pressure L2 {ep:.3e}");
            if let Some((pv, pp)) = prev {
                rates.push(((pv / ev).log2(), (pp / ep).log2()));
            }
            prev = Some((ev, ep));
        }
        let (rv, rp) = *rates.last().unwrap();
        println!("finest rates: velocity {rv:.2}, pressure {rp:.2}");
        assert!(rv >= 2.7, "velocity order {rv}");
        assert!(rp >= 1.7, "pressure order {rp}");
    }

    #[test]
    fn implicit_euler_dissipates_energy_on_static_domain() {
        let (v, t) = uniform_square_mesh(8);
        let dirichlet = boundary_edges(&t);
        let space = MixedSpace::new(&v, &t, &[], &[], &dirichlet, true).unwrap();
        let ops = assemble_operators(&space, &identity_coeff, 1.0, 1.0, 0.0).unwrap();
        let mut velocity = vec![0.0; space.n_vel_dofs];
        for node in 0..space.n_vel_nodes {
            let x = space.velocity_node_position(node);
            let u = mms_velocity(&x);
            velocity[2 * node] = u.x;
            velocity[2 * node + 1] = u.y;
        }
        let energy = |vel: &[f64]| {
            ops.m.iter().map(|&(i, j, w)| w * vel[i] * vel[j]).sum::<f64>()
        };
        let mut state = MixedStokesState { velocity, pressure: vec![0.0; space.n_pressure], time: 0.0 };
        let rhs = vec![0.0; space.n_full];
        let mut prev_energy = f64::INFINITY;
        for n in 1..=5 {
            state = step_instationary(
                &space,
                &ops,
                &ops.m,
                &state,
                0.05,
                &rhs,
                &SaddleConfig::default(),
            )
            .unwrap();
            let e = energy(&state.velocity);
            println!("step {n}: energy {e:.6e}");
            assert!(e <= prev_energy * (1.0 + 1e-12));
            prev_energy = e;
        }
        assert!(prev_energy < 1e-3);
    }
}
