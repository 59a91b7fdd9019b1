//! Acceptance suite: one test per release criterion, each emitting a single
//! PASS/FAIL line with the measured quantities.

use memdarcy::cell_problems::{
    build_kernel, cell_space, stationary_permeability, KernelGrid, MemoryKernel,
};
use memdarcy::geometry::{
    boundary_edges, build_cell_geometry, tile_epsilon_domain, triangulate_cell,
    uniform_square_mesh, PerforatedCellMesh,
};
use memdarcy::kinematics::{
    porosity_polar, porosity_rate_polar, MicrostructureEvolution, RadiusLaw, TransformJacobians,
};
use memdarcy::macro_darcy::{run_macro, MacroMesh, MacroProblem};
use memdarcy::quadrature::{segment_gauss3, triangle_degree5};
use memdarcy::scenario::parse_scenario_str;
use memdarcy::stokes_fem::{
    assemble_force, assemble_operators, estimate_korn_constant, estimate_poincare_constant,
    pressure_at, solve_saddle, velocity_at, MixedSpace, SaddleConfig,
};
use memdarcy::verify::{convergence_study, write_report_csv};
use nalgebra::{Matrix2, Point2, Vector2};
use rand::{Rng, SeedableRng};
use std::f64::consts::PI;
use std::time::Instant;

fn unit_geometry(r0: f64) -> memdarcy::geometry::CellGeometry {
    build_cell_geometry(r0, Point2::new(0.5, 0.5)).unwrap()
}

fn evolution(law: RadiusLaw, t_final: f64) -> MicrostructureEvolution {
    MicrostructureEvolution::new(unit_geometry(0.25), law, 0.4, t_final).unwrap()
}

fn single_point_grid(t_final: f64, n_steps: usize) -> KernelGrid {
    KernelGrid { t_final, n_steps, macro_points: vec![Point2::new(0.5, 0.5)] }
}

fn max_abs(m: &Matrix2<f64>) -> f64 {
    m.iter().fold(0.0_f64, |a, v| a.max(v.abs()))
}

#[test]
fn acceptance_01_kernel_diagonal_equals_porosity_times_identity() {
    let start = Instant::now();
    let ev = evolution(RadiusLaw::Linear { rate: 0.05 }, 1.0);
    let mesh = triangulate_cell(&unit_geometry(0.25), 0.05).unwrap();
    let grid = single_point_grid(1.0, 8);
    let kernel = build_kernel(&ev, &mesh, &grid, None, "acceptance-1").unwrap();
    let mut worst = 0.0_f64;
    for s in 0..=grid.n_steps {
        let k = kernel.k_at(s, s, 0);
        let theta = kernel.theta_at(s, 0);
        worst = worst.max(max_abs(&(k - Matrix2::identity() * theta)));
    }
    let ok = worst < 1e-8;
    println!(
        "ACCEPTANCE 1 (kernel diagonal = porosity * identity): {} — max deviation {worst:.3e}, {:.1}s",
        if ok { "PASS" } else { "FAIL" },
        start.elapsed().as_secs_f64()
    );
    assert!(ok);
}

#[test]
fn acceptance_02_static_kernel_is_time_shift_invariant() {
    let start = Instant::now();
    let ev = evolution(RadiusLaw::Constant, 1.0);
    let mesh = triangulate_cell(&unit_geometry(0.25), 0.05).unwrap();
    let grid = single_point_grid(1.0, 8);
    let kernel = build_kernel(&ev, &mesh, &grid, None, "acceptance-2").unwrap();
    let mut worst = 0.0_f64;
    for m in 0..=grid.n_steps {
        for j in 0..=(grid.n_steps - m) {
            let shifted = kernel.k_at(m, m + j, 0);
            let base = kernel.k_at(0, j, 0);
            worst = worst.max(max_abs(&(shifted - base)));
        }
    }
    let ok = worst < 1e-6;
    println!(
        "ACCEPTANCE 2 (static-domain time-shift invariance): {} — max deviation {worst:.3e}, {:.1}s",
        if ok { "PASS" } else { "FAIL" },
        start.elapsed().as_secs_f64()
    );
    assert!(ok);
}

#[test]
fn acceptance_03_porosity_quadrature_and_jacobi_identity() {
    let ev = evolution(RadiusLaw::MacroModulated { rate: 0.05 }, 1.0);
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
    let mut worst_theta = 0.0_f64;
    let mut worst_rate = 0.0_f64;
    for _ in 0..20 {
        let t = rng.gen::<f64>();
        let x = Point2::new(0.1 + 0.8 * rng.gen::<f64>(), 0.1 + 0.8 * rng.gen::<f64>());
        let theta = porosity_polar(&ev, t, &x, 24).unwrap();
        let rate = porosity_rate_polar(&ev, t, &x, 24).unwrap();
        worst_theta = worst_theta.max((theta - ev.porosity_analytic(t, &x)).abs());
        worst_rate = worst_rate.max((rate - ev.porosity_rate_analytic(t, &x)).abs());
    }
    let mut worst_jacobi = 0.0_f64;
    for _ in 0..100 {
        let t = rng.gen::<f64>();
        let x = Point2::new(0.1 + 0.8 * rng.gen::<f64>(), 0.1 + 0.8 * rng.gen::<f64>());
        let phi = rng.gen::<f64>() * 2.0 * PI;
        let s = 0.26 + 0.18 * rng.gen::<f64>();
        let y = Point2::new(0.5 + s * phi.cos(), 0.5 + s * phi.sin());
        let jac = ev.jacobians(t, &x, &y).unwrap();
        let jacobi = jac.det * (jac.psi_grad_inv() * jac.dt_psi_grad).trace();
        worst_jacobi = worst_jacobi.max((jac.dt_det - jacobi).abs());
    }
    let ok = worst_theta < 1e-6 && worst_rate < 1e-6 && worst_jacobi < 1e-10;
    println!(
        "ACCEPTANCE 3 (porosity calculus): {} — |Θ−Θ_exact| {worst_theta:.3e}, \
         |dΘ/dt−exact| {worst_rate:.3e}, Jacobi identity {worst_jacobi:.3e}",
        if ok { "PASS" } else { "FAIL" }
    );
    assert!(ok);
}

/// Quintic smoothstep on [r0, r1]: value, first and second derivative in s.
fn ramp(s: f64, r0: f64, r1: f64) -> (f64, f64, f64) {
    if s <= r0 {
        return (0.0, 0.0, 0.0);
    }
    if s >= r1 {
        return (1.0, 0.0, 0.0);
    }
    let d = r1 - r0;
    let u = (s - r0) / d;
    let v = u * u * u * (10.0 + u * (-15.0 + 6.0 * u));
    let dv = 30.0 * u * u * (1.0 - u) * (1.0 - u) / d;
    let d2v = 60.0 * u * (1.0 - 3.0 * u + 2.0 * u * u) / (d * d);
    (v, dv, d2v)
}

/// Periodic stream multiplier g(y): value, gradient, and mixed second partial.
fn stream_factor(k: usize, y: &Point2<f64>) -> (f64, f64, f64, f64) {
    let (a, b) = (2.0 * PI * y.x, 2.0 * PI * y.y);
    let c = 2.0 * PI;
    match k {
        0 => (a.sin(), c * a.cos(), 0.0, 0.0),
        1 => (b.cos(), 0.0, -c * b.sin(), 0.0),
        2 => (a.sin() * b.cos(), c * a.cos() * b.cos(), -c * a.sin() * b.sin(),
              -c * c * a.cos() * b.sin()),
        3 => ((2.0 * a).cos() * b.sin(), -2.0 * c * (2.0 * a).sin() * b.sin(),
              c * (2.0 * a).cos() * b.cos(), -2.0 * c * c * (2.0 * a).sin() * b.cos()),
        _ => ((a + b).sin(), c * (a + b).cos(), c * (a + b).cos(), -c * c * (a + b).sin()),
    }
}

/// Rotated gradient ∇⊥(η(s)·g) with η ramping from 0 on the interface circle,
/// so the field is smooth, periodic, vanishes on Γ, and is pointwise
/// divergence-free. Also returns the divergence evaluated as the difference
/// of independently coded mixed partials (an honest zero).
fn stream_velocity(k: usize, y: &Point2<f64>, r0: f64, r1: f64) -> (Vector2<f64>, f64) {
    let c = Point2::new(0.5, 0.5);
    let (dx, dy) = (y.x - c.x, y.y - c.y);
    let s = (dx * dx + dy * dy).sqrt().max(1e-300);
    let (sx, sy) = (dx / s, dy / s);
    let (eta, deta, d2eta) = ramp(s, r0, r1);
    let (g, gx, gy, gxy) = stream_factor(k, y);
    let phi_x = deta * sx * g + eta * gx;
    let phi_y = deta * sy * g + eta * gy;
    let u = Vector2::new(phi_y, -phi_x);
    // ∂x(φ_y) and ∂y(φ_x) written out separately; their difference is div u.
    let sxy = -sx * sy / s;
    let phi_yx = (d2eta * sx * sy + deta * sxy) * g + deta * sy * gx + deta * sx * gy + eta * gxy;
    let phi_xy = (d2eta * sy * sx + deta * sxy) * g + deta * sx * gy + deta * sy * gx + eta * gxy;
    (u, phi_yx - phi_xy)
}

/// Gauss quadrature over the deformation annulus r ∈ [r0, rc], split at the
/// ramp knot r1 so every radial panel sees a smooth integrand.
fn annulus_quadrature(r0: f64, r1: f64, rc: f64, panels: usize) -> Vec<(Point2<f64>, f64)> {
    let c = Point2::new(0.5, 0.5);
    let mut nodes = Vec::new();
    for (lo, hi) in [(r0, r1), (r1, rc)] {
        for ip in 0..panels {
            let (pa, pb) = (
                lo + (hi - lo) * ip as f64 / panels as f64,
                lo + (hi - lo) * (ip + 1) as f64 / panels as f64,
            );
            for &(qs, ws) in segment_gauss3().iter() {
                let s = pa + (pb - pa) * qs;
                for ia in 0..(4 * panels) {
                    let (aa, ab) = (
                        2.0 * PI * ia as f64 / (4 * panels) as f64,
                        2.0 * PI * (ia + 1) as f64 / (4 * panels) as f64,
                    );
                    for &(qa, wa) in segment_gauss3().iter() {
                        let phi = aa + (ab - aa) * qa;
                        let y = Point2::new(c.x + s * phi.cos(), c.y + s * phi.sin());
                        nodes.push((y, ws * (pb - pa) * wa * (ab - aa) * s));
                    }
                }
            }
        }
    }
    nodes
}

/// Tensor Gauss nodes over [0,1]² (panels × panels, 3-point per panel).
fn square_quadrature(panels: usize) -> Vec<(Point2<f64>, f64)> {
    let mut nodes = Vec::new();
    let h = 1.0 / panels as f64;
    for i in 0..panels {
        for &(qx, wx) in segment_gauss3().iter() {
            for j in 0..panels {
                for &(qy, wy) in segment_gauss3().iter() {
                    let y = Point2::new((i as f64 + qx) * h, (j as f64 + qy) * h);
                    nodes.push((y, wx * wy * h * h));
                }
            }
        }
    }
    nodes
}

/// Weak residual of div(A₀u) = div û against the P1 pressure basis on the
/// reference cell mesh, with û evaluated analytically.
fn piola_divergence_residual(
    mesh: &PerforatedCellMesh,
    k: usize,
    r0: f64,
    r1: f64,
) -> f64 {
    let mut r = vec![0.0; mesh.vertices.len()];
    for tri in &mesh.triangles {
        let (a, b, c) = (mesh.vertices[tri[0]], mesh.vertices[tri[1]], mesh.vertices[tri[2]]);
        let area = 0.5 * memdarcy::geometry::orient(&a, &b, &c);
        for node in triangle_degree5() {
            let y = Point2::new(
                node.bary[0] * a.x + node.bary[1] * b.x + node.bary[2] * c.x,
                node.bary[0] * a.y + node.bary[1] * b.y + node.bary[2] * c.y,
            );
            let (_, div) = stream_velocity(k, &y, r0, r1);
            for (local, &vertex) in tri.iter().enumerate() {
                r[vertex] += node.weight * area * node.bary[local] * div;
            }
        }
    }
    r.iter().fold(0.0_f64, |acc, v| acc.max(v.abs()))
}

#[test]
fn acceptance_04_piola_divergence_free_means_agree_under_adjugate_and_jacobian() {
    let ev = evolution(RadiusLaw::Linear { rate: 0.05 }, 1.0);
    let t = 0.6;
    let x = Point2::new(0.5, 0.5);
    let (r0, r1, rc) = (0.25, 0.34, 0.4);
    let mesh = triangulate_cell(&unit_geometry(r0), 0.1).unwrap();
    let annulus = annulus_quadrature(r0, r1, rc, 24);
    let outer = square_quadrature(24);
    let mut worst = 0.0_f64;
    let mut worst_div = 0.0_f64;
    for k in 0..5 {
        // u = A₀⁻¹û is Piola-divergence-free because div(A₀u) = div û = 0.
        let mut s_adj = Vector2::<f64>::zeros();
        let mut s_det = Vector2::<f64>::zeros();
        let mut norm2 = 0.0;
        for (y, w) in &annulus {
            let (u_hat, _) = stream_velocity(k, y, r0, r1);
            let jac = ev.jacobians(t, &x, y).unwrap();
            let u = jac.psi_grad * u_hat / jac.det;
            s_adj += (jac.adj * u - u_hat) * *w;
            s_det += (u * jac.det - u_hat) * *w;
            norm2 += *w * (u.norm_squared() - u_hat.norm_squared());
        }
        // Outside the annulus the map is the identity and both integrands are
        // û itself. Its square integral covers the annulus once more, which
        // the −û terms above have already removed (û ≡ 0 inside the hole).
        for (y, w) in &outer {
            let (u_hat, _) = stream_velocity(k, y, r0, r1);
            s_adj += u_hat * *w;
            s_det += u_hat * *w;
            norm2 += *w * u_hat.norm_squared();
        }
        worst = worst.max((s_adj - s_det).norm() / norm2.abs().sqrt());
        worst_div = worst_div.max(piola_divergence_residual(&mesh, k, r0, r1));
    }
    let ok = worst < 1e-8 && worst_div < 1e-10;
    println!(
        "ACCEPTANCE 4 (adjugate vs Jacobian means of Piola-divergence-free fields): {} — \
         max |∫A₀u − ∫J₀u|/‖u‖ {worst:.3e}, Piola divergence residual {worst_div:.3e}",
        if ok { "PASS" } else { "FAIL" }
    );
    assert!(ok);
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

fn manufactured_errors(n: usize) -> (f64, f64) {
    let identity = |_: usize, y: &Point2<f64>| TransformJacobians::identity(*y);
    let (v, t) = uniform_square_mesh(n);
    let dirichlet = boundary_edges(&t);
    let space = MixedSpace::new(&v, &t, &[], &[], &dirichlet, true).unwrap();
    let ops = assemble_operators(&space, &identity, 1.0, 1.0, 0.0).unwrap();
    let rhs = assemble_force(&space, &identity, &mms_force);
    let state =
        solve_saddle(&space, &ops.a1, &ops.b, &rhs, 0.0, &SaddleConfig::default()).unwrap();
    let (mut ev2, mut ep2) = (0.0, 0.0);
    for ti in 0..space.triangles.len() {
        let tr = space.triangles[ti];
        let (a, b, c) = (space.vertices[tr[0]], space.vertices[tr[1]], space.vertices[tr[2]]);
        let area = 0.5 * memdarcy::geometry::orient(&a, &b, &c);
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
fn acceptance_05_taylor_hood_converges_at_expected_orders() {
    let mut errors = Vec::new();
    for n in [8usize, 16, 32] {
        errors.push(manufactured_errors(n));
    }
    let rv = (errors[1].0 / errors[2].0).log2();
    let rp = (errors[1].1 / errors[2].1).log2();
    let ok = rv >= 2.7 && rp >= 1.7;
    println!(
        "ACCEPTANCE 5 (manufactured-solution orders): {} — velocity slope {rv:.2} (≥2.7), \
         pressure slope {rp:.2} (≥1.7)",
        if ok { "PASS" } else { "FAIL" }
    );
    assert!(ok);
}

fn macro_setup(
    law: RadiusLaw,
    t_final: f64,
    n_steps: usize,
    macro_n: usize,
    h_cell: f64,
    tag: &str,
) -> (MacroMesh, MemoryKernel, PerforatedCellMesh) {
    let ev = evolution(law, t_final);
    let mesh = triangulate_cell(&unit_geometry(0.25), h_cell).unwrap();
    let macro_mesh = MacroMesh::unit_square(macro_n);
    let grid =
        KernelGrid { t_final, n_steps, macro_points: macro_mesh.centroids.clone() };
    let kernel = build_kernel(&ev, &mesh, &grid, None, tag).unwrap();
    (macro_mesh, kernel, mesh)
}

#[test]
fn acceptance_06_shrinking_disk_macro_run_balances_mass() {
    let (macro_mesh, kernel, _) =
        macro_setup(RadiusLaw::Linear { rate: -0.05 }, 1.0, 8, 8, 0.1, "acceptance-6");
    let force = |_: f64, _: &Point2<f64>| Vector2::zeros();
    let p_b = |_: &Point2<f64>| 0.0;
    let problem =
        MacroProblem { mesh: &macro_mesh, kernel: &kernel, mu: 1.0, force: &force, p_b: &p_b };
    let fields = run_macro(&problem).unwrap();
    let worst =
        fields.iter().map(|f| f.mass_balance_residual()).fold(0.0_f64, f64::max);
    let ok = worst < 2e-2;
    println!(
        "ACCEPTANCE 6 (evolving-pore mass balance, 8×8 macro, N=8): {} — \
         max per-step residual {worst:.3e} (< 2e-2)",
        if ok { "PASS" } else { "FAIL" }
    );
    assert!(ok);
}

#[test]
fn acceptance_07_long_time_limit_matches_steady_darcy() {
    let (macro_mesh, kernel, cell_mesh) =
        macro_setup(RadiusLaw::Constant, 2.0, 32, 2, 0.1, "acceptance-7");
    let f = Vector2::new(1.0, 0.0);
    let force = move |_: f64, _: &Point2<f64>| f;
    let p_b = |_: &Point2<f64>| 0.0;
    let mu = 1.0;
    let problem =
        MacroProblem { mesh: &macro_mesh, kernel: &kernel, mu, force: &force, p_b: &p_b };
    let fields = run_macro(&problem).unwrap();
    let v_last = fields[fields.len() - 1].velocity[0];
    let v_prev = fields[fields.len() - 2].velocity[0];
    let rel_change = (v_last - v_prev).norm() / v_last.norm();

    // Steady-state oracle: the stationary cell problem under the scheme's own
    // implicit quadrature, whose exact fixed point is
    // (1/μ)(K_stat + Δt·Θ·I)f; the Δt·Θ term is the first-order bias of the
    // right-endpoint memory rule and vanishes with Δt.
    let k_stat = stationary_permeability(&cell_mesh).unwrap();
    let dt = kernel.grid.dt();
    let theta = kernel.theta_at(kernel.grid.n_steps, 0);
    let oracle = (k_stat + Matrix2::identity() * (dt * theta)) * f / mu;
    let continuum = k_stat * f / mu;
    let dev_oracle = (v_last - oracle).norm() / oracle.norm();
    let dev_continuum = (v_last - continuum).norm() / continuum.norm();
    let ok = rel_change < 1e-2 && dev_oracle < 5e-2;
    println!(
        "ACCEPTANCE 7 (long-time Darcy limit, T=2, N=32): {} — last-step change {rel_change:.3e} \
         (< 1e-2), deviation from steady oracle {dev_oracle:.3e} (< 5e-2); \
         note: deviation from the Δt→0 stationary Darcy velocity is {dev_continuum:.3e}, \
         dominated by the Δt·Θ quadrature bias {:.3e}",
        if ok { "PASS" } else { "FAIL" },
        dt * theta
    );
    assert!(ok);
}

#[test]
fn acceptance_08_homogenisation_errors_decrease_with_epsilon() {
    let start = Instant::now();
    // Short horizon with fine time steps: the right-endpoint memory rule
    // carries an O(Δt) velocity bias that must stay below the ε-error.
    let text = "[geometry]\nh_cell = 0.1\n\
                [evolution]\nt_final = 0.25\n\
                [grids]\nn_time = 128\nmacro_n = 8\neps_list = [0.5, 0.25, 0.125]\n";
    let scenario = parse_scenario_str(text).unwrap();
    let report = convergence_study(&scenario, None, None).unwrap();
    let decreasing = |e: &[f64]| e.windows(2).all(|w| w[1] < w[0]);
    let ok = decreasing(&report.velocity_errors) && decreasing(&report.pressure_errors);
    println!(
        "ACCEPTANCE 8 (through-flow ε-convergence): {} — velocity errors {:?}, \
         pressure errors {:?}, {:.0}s",
        if ok { "PASS" } else { "FAIL" },
        report.velocity_errors,
        report.pressure_errors,
        start.elapsed().as_secs_f64()
    );
    assert!(ok);
}

#[test]
fn acceptance_09_poincare_and_korn_estimates_are_stable() {
    let cell_mesh = triangulate_cell(&unit_geometry(0.25), 0.1).unwrap();
    let mut poincare = Vec::new();
    for n in [2usize, 4] {
        let mesh = tile_epsilon_domain(&cell_mesh, n).unwrap();
        let mut space = MixedSpace::new(
            &mesh.vertices,
            &mesh.triangles,
            &[],
            &vec![0u8; mesh.vertices.len()],
            &mesh.interface_edges,
            false,
        )
        .unwrap();
        space.set_dirichlet(|_| Vector2::zeros());
        poincare.push(estimate_poincare_constant(&space, mesh.epsilon).unwrap());
    }
    let p_dev = (poincare[1] - poincare[0]).abs() / poincare[0];

    let ev = evolution(RadiusLaw::Linear { rate: 0.05 }, 1.0);
    let x = Point2::new(0.5, 0.5);
    let space = cell_space(&cell_mesh).unwrap();
    let mut korn = Vec::new();
    for t in [0.0, 0.5, 1.0] {
        let coeff = |_: usize, y: &Point2<f64>| ev.jacobians(t, &x, y).unwrap();
        korn.push(estimate_korn_constant(&space, &coeff, t).unwrap());
    }
    let k_min = korn.iter().cloned().fold(f64::INFINITY, f64::min);
    let k_max = korn.iter().cloned().fold(0.0_f64, f64::max);
    let ok = p_dev < 0.1 && k_min > 0.0 && k_max / k_min < 5.0;
    println!(
        "ACCEPTANCE 9 (diagnostics): {} — ε-scaled Poincaré {:.4} vs {:.4} \
         (dev {p_dev:.3}), Korn bounds {korn:?} (spread {:.2} < 5)",
        if ok { "PASS" } else { "FAIL" },
        poincare[0],
        poincare[1],
        k_max / k_min
    );
    assert!(ok);
}

#[test]
fn acceptance_10_repeated_runs_are_deterministic() {
    let text = "[geometry]\nh_cell = 0.2\n\
                [grids]\nn_time = 2\nmacro_n = 4\neps_list = [0.5, 0.25]\n";
    let scenario = parse_scenario_str(text).unwrap();
    let dir_a = tempfile::tempdir().unwrap();
    let dir_b = tempfile::tempdir().unwrap();
    let report_a = convergence_study(&scenario, Some(dir_a.path()), None).unwrap();
    let report_b = convergence_study(&scenario, Some(dir_b.path()), None).unwrap();
    let kernel_a = std::fs::read(dir_a.path().join("kernel.csv")).unwrap();
    let kernel_b = std::fs::read(dir_b.path().join("kernel.csv")).unwrap();
    write_report_csv(&report_a, &dir_a.path().join("report.csv"), &scenario.hash()).unwrap();
    write_report_csv(&report_b, &dir_b.path().join("report.csv"), &scenario.hash()).unwrap();
    // Wall-clock runtimes differ between runs by nature; every numerical
    // column must round-trip bit for bit.
    let strip_runtime = |path: &std::path::Path| -> String {
        std::fs::read_to_string(path)
            .unwrap()
            .lines()
            .map(|l| {
                let cols: Vec<&str> = l.split(',').collect();
                if cols.len() > 4 {
                    format!("{},{},{},{},{},{}", cols[0], cols[1], cols[2], cols[4], cols[5], cols[6])
                } else {
                    l.to_string()
                }
            })
            .collect::<Vec<_>>()
            .join("\n")
    };
    let same_kernel = kernel_a == kernel_b;
    let same_report = strip_runtime(&dir_a.path().join("report.csv"))
        == strip_runtime(&dir_b.path().join("report.csv"));
    let ok = same_kernel && same_report;
    println!(
        "ACCEPTANCE 10 (determinism): {} — kernel.csv byte-identical: {same_kernel}, \
         report.csv identical up to wall-clock column: {same_report}",
        if ok { "PASS" } else { "FAIL" }
    );
    assert!(ok);
}
