//! Empirical homogenisation check: direct solves on ε-scaled perforated
//! domains, cell-wise pressure extension and velocity averaging, and the
//! ε-convergence study against the macroscopic solution.

use crate::cell_problems::{build_kernel, CellError, KernelGrid};
use crate::geometry::{tile_epsilon_domain, EpsilonDomainMesh, GeometryError};
use crate::macro_darcy::{run_macro, MacroError, MacroField, MacroMesh, MacroProblem};
use crate::quadrature::triangle_degree5;
use crate::scenario::Scenario;
use crate::stokes_fem::{
    solve_direct_epsilon, velocity_at, DirectEpsilonSolution, FemError, MixedSpace, SaddleConfig,
};
use nalgebra::{Point2, Vector2};
use std::io::Write as _;
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum VerifyError {
    #[error(transparent)]
    Fem(#[from] FemError),
    #[error(transparent)]
    Cell(#[from] CellError),
    #[error(transparent)]
    Macro(#[from] MacroError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Scenario(#[from] crate::scenario::ScenarioError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// A priori energy quantities of one direct solve.
#[derive(Debug, Clone, Copy)]
pub struct AprioriNorms {
    pub w_l2: f64,
    pub w_grad_scaled: f64,
    pub q_l2: f64,
}

/// Outcome of the ε-convergence study. `pass` means both error sequences
/// decrease strictly over at least three ε values (or the scenario is
/// degenerate with all errors at machine zero); otherwise the study is
/// flagged inconclusive rather than failed.
#[derive(Debug, Clone)]
pub struct ComparisonReport {
    /// Descending ε values.
    pub epsilons: Vec<f64>,
    /// Time-integrated L²(Ω) distance of cell-averaged micro velocity to v.
    pub velocity_errors: Vec<f64>,
    /// Same for the cell-wise extended micro pressure against p.
    pub pressure_errors: Vec<f64>,
    pub apriori: Vec<AprioriNorms>,
    pub runtimes_s: Vec<f64>,
    pub pass: bool,
    pub inconclusive: bool,
}

/// Cell-wise constant extension data for a micro pressure field.
#[derive(Debug, Clone)]
pub struct ExtendedPressure {
    /// Fluid mean per ε-cell (flattened cell index).
    pub cell_mean: Vec<f64>,
    /// Fluid area per ε-cell.
    pub cell_fluid_area: Vec<f64>,
}

/// Extend a nodal P1 pressure on the fluid part by its fluid-cell mean into
/// the solid inclusions.
pub fn extend_pressure_cellwise(mesh: &EpsilonDomainMesh, pressure: &[f64]) -> ExtendedPressure {
    let n_cells = mesh.cells_per_side * mesh.cells_per_side;
    let mut sum = vec![0.0; n_cells];
    let mut area = vec![0.0; n_cells];
    for (ti, tri) in mesh.triangles.iter().enumerate() {
        let (a, b, c) = (mesh.vertices[tri[0]], mesh.vertices[tri[1]], mesh.vertices[tri[2]]);
        let t_area = 0.5 * crate::geometry::orient(&a, &b, &c);
        let mean = (pressure[tri[0]] + pressure[tri[1]] + pressure[tri[2]]) / 3.0;
        let cell = mesh.cell_of_triangle[ti];
        sum[cell] += t_area * mean;
        area[cell] += t_area;
    }
    let cell_mean = sum.iter().zip(&area).map(|(s, a)| s / a).collect();
    ExtendedPressure { cell_mean, cell_fluid_area: area }
}

/// Per-ε-cell averages ε⁻²∫ v dy of a P2 velocity extended by zero into the
/// solid part.
pub fn cell_average_velocity(
    mesh: &EpsilonDomainMesh,
    space: &MixedSpace,
    velocity: &[f64],
) -> Vec<Vector2<f64>> {
    let n_cells = mesh.cells_per_side * mesh.cells_per_side;
    let mut avg = vec![Vector2::zeros(); n_cells];
    let rule = triangle_degree5();
    for ti in 0..space.triangles.len() {
        let tri = space.triangles[ti];
        let (a, b, c) =
            (space.vertices[tri[0]], space.vertices[tri[1]], space.vertices[tri[2]]);
        let t_area = 0.5 * crate::geometry::orient(&a, &b, &c);
        let cell = mesh.cell_of_triangle[ti];
        for node in &rule {
            let (v, _) = velocity_at(space, velocity, ti, node.bary);
            avg[cell] += v * (t_area * node.weight);
        }
    }
    let scale = mesh.epsilon * mesh.epsilon;
    for v in &mut avg {
        *v /= scale;
    }
    avg
}

/// Point evaluation on the uniform macro mesh.
pub struct MacroSampler<'a> {
    pub mesh: &'a MacroMesh,
    n: usize,
}

impl<'a> MacroSampler<'a> {
    pub fn new(mesh: &'a MacroMesh) -> Self {
        let n_sq = mesh.triangles.len() / 2;
        let n = (n_sq as f64).sqrt().round() as usize;
        assert_eq!(2 * n * n, mesh.triangles.len());
        MacroSampler { mesh, n }
    }

    fn square_of(&self, x: &Point2<f64>) -> (usize, usize) {
        let clamp = |v: f64| ((v * self.n as f64).floor() as usize).min(self.n - 1);
        (clamp(x.x), clamp(x.y))
    }

    /// P1 pressure at x.
    pub fn pressure(&self, field: &MacroField, x: &Point2<f64>) -> f64 {
        let (i, j) = self.square_of(x);
        // Local coordinates in the square; the diagonal splits it into the
        // lower-right and upper-left triangles.
        let n = self.n as f64;
        let (u, v) = (x.x * n - i as f64, x.y * n - j as f64);
        let ti = 2 * (j * self.n + i) + usize::from(v > u);
        let tri = self.mesh.triangles[ti];
        let g = &self.mesh.grads[ti];
        let p0 = self.mesh.vertices[tri[0]];
        (0..3)
            .map(|k| {
                // Linear reconstruction from vertex 0 along the basis grads.
                field.pressure[tri[k]]
                    * match k {
                        0 => 1.0 + g[0].dot(&(x - p0)),
                        _ => g[k].dot(&(x - p0)),
                    }
            })
            .sum()
    }

    /// Piecewise-constant velocity, averaged over the two triangles of the
    /// containing square (robust for points on the diagonal).
    pub fn velocity(&self, field: &MacroField, x: &Point2<f64>) -> Vector2<f64> {
        let (i, j) = self.square_of(x);
        let t0 = 2 * (j * self.n + i);
        (field.velocity[t0] + field.velocity[t0 + 1]) / 2.0
    }
}

/// Spatial L²(Ω) errors of one direct state against one macro field.
fn spatial_errors(
    mesh: &EpsilonDomainMesh,
    space: &MixedSpace,
    velocity: &[f64],
    pressure: &[f64],
    sampler: &MacroSampler,
    field: &MacroField,
) -> (f64, f64) {
    let eps2 = mesh.epsilon * mesh.epsilon;
    let averages = cell_average_velocity(mesh, space, velocity);
    let extension = extend_pressure_cellwise(mesh, pressure);
    let mut v_err2 = 0.0;
    let mut p_err2 = 0.0;
    for (cell, avg) in averages.iter().enumerate() {
        let center = mesh.cell_center(cell);
        v_err2 += eps2 * (avg - sampler.velocity(field, &center)).norm_squared();
        let solid_area = eps2 - extension.cell_fluid_area[cell];
        let dp = extension.cell_mean[cell] - sampler.pressure(field, &center);
        p_err2 += solid_area * dp * dp;
    }
    let rule = triangle_degree5();
    for tri in &mesh.triangles {
        let (a, b, c) = (mesh.vertices[tri[0]], mesh.vertices[tri[1]], mesh.vertices[tri[2]]);
        let t_area = 0.5 * crate::geometry::orient(&a, &b, &c);
        for node in &rule {
            let x = Point2::new(
                node.bary[0] * a.x + node.bary[1] * b.x + node.bary[2] * c.x,
                node.bary[0] * a.y + node.bary[1] * b.y + node.bary[2] * c.y,
            );
            let q: f64 = (0..3).map(|k| pressure[tri[k]] * node.bary[k]).sum();
            let dp = q - sampler.pressure(field, &x);
            p_err2 += t_area * node.weight * dp * dp;
        }
    }
    (v_err2, p_err2)
}

/// Trapezoidal rule over the shared grid t_1..t_N.
fn trapezoid(dt: f64, values2: &[f64]) -> f64 {
    if values2.len() < 2 {
        return values2.iter().sum::<f64>() * dt;
    }
    let inner: f64 = values2[1..values2.len() - 1].iter().sum();
    dt * (0.5 * values2[0] + inner + 0.5 * values2[values2.len() - 1])
}

/// Time-integrated L² errors of one direct solve against the macro
/// trajectory.
pub fn trajectory_errors(
    mesh: &EpsilonDomainMesh,
    direct: &DirectEpsilonSolution,
    macro_mesh: &MacroMesh,
    macro_fields: &[MacroField],
) -> (f64, f64) {
    let sampler = MacroSampler::new(macro_mesh);
    let mut v2 = Vec::with_capacity(macro_fields.len());
    let mut p2 = Vec::with_capacity(macro_fields.len());
    for field in macro_fields {
        let state = &direct.states[field.step];
        let (ve, pe) =
            spatial_errors(mesh, &direct.space, &state.velocity, &state.pressure, &sampler, field);
        v2.push(ve);
        p2.push(pe);
    }
    let dt = direct.dt;
    (trapezoid(dt, &v2).sqrt(), trapezoid(dt, &p2).sqrt())
}

/// Run the full ε-study for a scenario: kernel → macro trajectory → direct
/// solves for each ε → time-integrated comparison errors.
pub fn convergence_study(
    scenario: &Scenario,
    cache_dir: Option<&Path>,
    max_dofs: Option<usize>,
) -> Result<ComparisonReport, VerifyError> {
    let ev = scenario.evolution()?;
    let geom = scenario.cell_geometry()?;
    let cell_mesh = crate::geometry::triangulate_cell(&geom, scenario.geometry.h_cell)?;
    let macro_mesh = MacroMesh::unit_square(scenario.grids.macro_n);
    let grid = KernelGrid {
        t_final: scenario.evolution.t_final,
        n_steps: scenario.grids.n_time,
        macro_points: macro_mesh.centroids.clone(),
    };
    let hash = scenario.hash();
    let kernel = build_kernel(&ev, &cell_mesh, &grid, cache_dir, &hash)?;
    let f_const = scenario.force();
    let force_macro = move |_: f64, _: &Point2<f64>| f_const;
    let p_b = scenario.boundary_pressure();
    let problem = MacroProblem {
        mesh: &macro_mesh,
        kernel: &kernel,
        mu: scenario.physics.mu,
        force: &force_macro,
        p_b: &p_b,
    };
    let macro_fields = run_macro(&problem)?;

    let mut epsilons: Vec<f64> = scenario.grids.eps_list.clone();
    epsilons.sort_by(|a, b| b.partial_cmp(a).unwrap());
    let cfg = SaddleConfig { residual_tol: scenario.tolerances.linear };
    let force_micro = move |_: &Point2<f64>| f_const;
    let mut velocity_errors = Vec::new();
    let mut pressure_errors = Vec::new();
    let mut apriori = Vec::new();
    let mut runtimes_s = Vec::new();
    for &eps in &epsilons {
        let n = (1.0 / eps).round() as usize;
        let mesh = tile_epsilon_domain(&cell_mesh, n)?;
        let start = std::time::Instant::now();
        let direct = solve_direct_epsilon(
            &mesh,
            &ev,
            scenario.physics.mu,
            &p_b,
            &force_micro,
            scenario.evolution.t_final,
            scenario.grids.n_time,
            max_dofs,
            &cfg,
        )?;
        let (ve, pe) = trajectory_errors(&mesh, &direct, &macro_mesh, &macro_fields);
        runtimes_s.push(start.elapsed().as_secs_f64());
        velocity_errors.push(ve);
        pressure_errors.push(pe);
        apriori.push(AprioriNorms {
            w_l2: direct.w_l2,
            w_grad_scaled: direct.w_grad_scaled,
            q_l2: direct.q_l2,
        });
    }
    let decreasing = |e: &[f64]| e.windows(2).all(|w| w[1] < w[0]);
    let degenerate = velocity_errors.iter().chain(&pressure_errors).all(|&e| e < 1e-10);
    let monotone =
        epsilons.len() >= 3 && decreasing(&velocity_errors) && decreasing(&pressure_errors);
    let pass = degenerate || monotone;
    Ok(ComparisonReport {
        epsilons,
        velocity_errors,
        pressure_errors,
        apriori,
        runtimes_s,
        pass,
        inconclusive: !pass,
    })
}

/// Write report.csv with the scenario hash in the header.
pub fn write_report_csv(
    report: &ComparisonReport,
    path: &Path,
    scenario_hash: &str,
) -> Result<(), VerifyError> {
    let mut file = std::fs::File::create(path)?;
    writeln!(file, "# scenario={scenario_hash}")?;
    writeln!(
        file,
        "epsilon,velocity_error,pressure_error,runtime_s,w_l2,w_grad_scaled,q_l2"
    )?;
    for i in 0..report.epsilons.len() {
        let a = &report.apriori[i];
        writeln!(
            file,
            "{},{},{},{},{},{},{}",
            report.epsilons[i],
            report.velocity_errors[i],
            report.pressure_errors[i],
            report.runtimes_s[i],
            a.w_l2,
            a.w_grad_scaled,
            a.q_l2
        )?;
    }
    Ok(())
}

/// Human-readable study summary.
pub fn report_summary(report: &ComparisonReport) -> String {
    let mut out = String::from("epsilon   velocity_error   pressure_error\n");
    for i in 0..report.epsilons.len() {
        out.push_str(&format!(
            "{:<9.4} {:<16.6e} {:<16.6e}\n",
            report.epsilons[i], report.velocity_errors[i], report.pressure_errors[i]
        ));
    }
    out.push_str(if report.pass {
        "PASS: error sequences decrease monotonically\n"
    } else {
        "INCONCLUSIVE: error sequences are not strictly decreasing\n"
    });
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{build_cell_geometry, triangulate_cell};
    use crate::scenario::parse_scenario_str;
    use std::f64::consts::PI;

    fn eps_mesh(n: usize) -> EpsilonDomainMesh {
        let geom = build_cell_geometry(0.25, Point2::new(0.5, 0.5)).unwrap();
        let cell = triangulate_cell(&geom, 0.2).unwrap();
        tile_epsilon_domain(&cell, n).unwrap()
    }

    fn vel_space(mesh: &EpsilonDomainMesh) -> MixedSpace {
        MixedSpace::new(&mesh.vertices, &mesh.triangles, &[], &vec![0u8; mesh.vertices.len()], &[], false)
            .unwrap()
    }

    #[test]
    fn constant_pressure_extends_to_the_same_constant() {
        let mesh = eps_mesh(2);
        let q = vec![3.25; mesh.vertices.len()];
        let ext = extend_pressure_cellwise(&mesh, &q);
        for m in &ext.cell_mean {
            assert!((m - 3.25).abs() < 1e-12);
        }
        // Adding a global constant shifts every cell mean by that constant.
        let q2: Vec<f64> = q.iter().map(|v| v + 1.5).collect();
        let ext2 = extend_pressure_cellwise(&mesh, &q2);
        for (a, b) in ext.cell_mean.iter().zip(&ext2.cell_mean) {
            assert!((b - a - 1.5).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_and_constant_velocity_averages() {
        let mesh = eps_mesh(2);
        let space = vel_space(&mesh);
        let zero = vec![0.0; space.n_vel_dofs + space.n_pressure];
        for v in cell_average_velocity(&mesh, &space, &zero) {
            assert!(v.norm() < 1e-14);
        }
        // v = (c, 0) on the fluid, zero-extended: average is c·|Y*| per cell.
        let mut field = vec![0.0; space.n_vel_dofs + space.n_pressure];
        for node in 0..space.n_vel_nodes {
            field[2 * node] = 2.0;
        }
        let porosity = mesh.cell_mesh.fluid_area();
        for v in cell_average_velocity(&mesh, &space, &field) {
            assert!((v.x - 2.0 * porosity).abs() < 1e-12, "{} vs {}", v.x, 2.0 * porosity);
            assert!(v.y.abs() < 1e-14);
        }
    }

    #[test]
    fn tiled_periodic_field_has_identical_cell_averages() {
        let mesh = eps_mesh(4);
        let space = vel_space(&mesh);
        let mut field = vec![0.0; space.n_vel_dofs + space.n_pressure];
        let eps = mesh.epsilon;
        for node in 0..space.n_vel_nodes {
            let y = space.velocity_node_position(node);
            // ε-periodic smooth field: identical on every cell by symmetry.
            let (u, v) = ((2.0 * PI * y.x / eps).sin(), (2.0 * PI * y.y / eps).cos());
            field[2 * node] = u * v;
            field[2 * node + 1] = u + v;
        }
        let averages = cell_average_velocity(&mesh, &space, &field);
        for v in &averages {
            assert!((v - averages[0]).norm() < 1e-10, "{v:?} vs {:?}", averages[0]);
        }
    }

    #[test]
    fn macro_sampler_reproduces_linear_pressure() {
        let mesh = MacroMesh::unit_square(4);
        let sampler = MacroSampler::new(&mesh);
        let field = MacroField {
            step: 1,
            time: 0.1,
            pressure: mesh.vertices.iter().map(|v| 1.0 - v.x + 0.5 * v.y).collect(),
            velocity: vec![Vector2::zeros(); mesh.triangles.len()],
            grad_p: vec![Vector2::zeros(); mesh.triangles.len()],
            flux_balance: 0.0,
            theta_rate_integral: 0.0,
        };
        for &(x, y) in &[(0.1, 0.2), (0.53, 0.49), (0.97, 0.03), (0.5, 0.5)] {
            let p = sampler.pressure(&field, &Point2::new(x, y));
            assert!((p - (1.0 - x + 0.5 * y)).abs() < 1e-12, "at ({x},{y}): {p}");
        }
    }

    #[test]
    fn static_zero_data_study_reports_zero_errors() {
        let text = "[geometry]\nh_cell = 0.2\n[physics]\np_b = \"zero\"\n\
                    [grids]\nn_time = 2\nmacro_n = 4\neps_list = [0.5, 0.25]\n";
        let scenario = parse_scenario_str(text).unwrap();
        let report = convergence_study(&scenario, None, None).unwrap();
        println!("{}", report_summary(&report));
        assert!(report.velocity_errors.iter().all(|&e| e < 1e-10));
        assert!(report.pressure_errors.iter().all(|&e| e < 1e-10));
        assert!(report.pass);
    }

    #[test]
    fn through_flow_error_shrinks_with_epsilon() {
        let text = "[geometry]\nh_cell = 0.2\n\
                    [grids]\nn_time = 2\nmacro_n = 4\neps_list = [0.5, 0.25]\n";
        let scenario = parse_scenario_str(text).unwrap();
        let report = convergence_study(&scenario, None, None).unwrap();
        println!("{}", report_summary(&report));
        assert!(report.pressure_errors[1] < report.pressure_errors[0]);
        assert!(report.velocity_errors.iter().all(|e| e.is_finite()));
        assert!(report.apriori.iter().all(|a| a.w_l2.is_finite() && a.q_l2 > 0.0));
    }
}
