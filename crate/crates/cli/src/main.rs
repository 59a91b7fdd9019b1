//! Scenario-driven entry point: parses a TOML scenario, orchestrates the
//! geometry → kinematics → kernel → macro → verify pipelines, manages the
//! kernel cache, and writes all artifacts. Exit codes: 0 success, 2 solver
//! failure, 3 validation failure.

use clap::Parser;
use memdarcy::cell_problems::{build_kernel, KernelGrid, MemoryKernel};
use memdarcy::geometry::{tile_epsilon_domain, triangulate_cell};
use memdarcy::macro_darcy::{run_macro, write_macro_csv, MacroMesh, MacroProblem};
use memdarcy::scenario::{parse_scenario, Mode, Scenario, ScenarioError};
use memdarcy::stokes_fem::{
    estimate_korn_constant, estimate_poincare_constant, MixedSpace,
};
use memdarcy::verify::{convergence_study, report_summary, write_report_csv};
use memdarcy::vtk::{write_mesh_csv, write_vtk};
use nalgebra::Vector2;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "memdarcy", about = "Homogenised Darcy flow with memory")]
struct Args {
    /// Scenario TOML file.
    #[arg(long)]
    scenario: PathBuf,
    /// Override the mode from the scenario file.
    #[arg(long)]
    mode: Option<Mode>,
    /// Kernel cache directory (falls back to MEMDARCY_CACHE_DIR).
    #[arg(long)]
    cache_dir: Option<PathBuf>,
    /// Resource guard: refuse direct solves above this many unknowns.
    #[arg(long)]
    max_dofs: Option<usize>,
    /// Write VTK snapshots of the macro fields.
    #[arg(long, default_value_t = false)]
    emit_vtk: bool,
    /// Output directory for artifacts and run.log.
    #[arg(long, default_value = ".")]
    out_dir: PathBuf,
}

struct Logger {
    file: std::fs::File,
}

impl Logger {
    fn new(out_dir: &Path) -> std::io::Result<Self> {
        std::fs::create_dir_all(out_dir)?;
        Ok(Logger { file: std::fs::File::create(out_dir.join("run.log"))? })
    }

    fn line(&mut self, msg: &str) {
        println!("{msg}");
        let _ = writeln!(self.file, "{msg}");
    }
}

enum RunError {
    /// Exit code 3.
    Validation(String),
    /// Exit code 2.
    Solver(String),
}

impl From<ScenarioError> for RunError {
    fn from(e: ScenarioError) -> Self {
        RunError::Validation(e.to_string())
    }
}

macro_rules! solver_errors {
    ($($ty:ty),*) => {$(
        impl From<$ty> for RunError {
            fn from(e: $ty) -> Self {
                RunError::Solver(e.to_string())
            }
        }
    )*};
}
solver_errors!(
    memdarcy::geometry::GeometryError,
    memdarcy::kinematics::KinematicsError,
    memdarcy::stokes_fem::FemError,
    memdarcy::cell_problems::CellError,
    memdarcy::macro_darcy::MacroError,
    std::io::Error
);

impl From<memdarcy::verify::VerifyError> for RunError {
    fn from(e: memdarcy::verify::VerifyError) -> Self {
        match e {
            memdarcy::verify::VerifyError::Scenario(inner) => inner.into(),
            other => RunError::Solver(other.to_string()),
        }
    }
}

fn main() -> ExitCode {
    let args = Args::parse();
    let mut log = match Logger::new(&args.out_dir) {
        Ok(l) => l,
        Err(e) => {
            eprintln!("cannot open run.log: {e}");
            return ExitCode::from(2);
        }
    };
    match run(&args, &mut log) {
        Ok(()) => {
            log.line("status: ok");
            ExitCode::SUCCESS
        }
        Err(RunError::Validation(msg)) => {
            log.line(&format!("validation failure: {msg}"));
            ExitCode::from(3)
        }
        Err(RunError::Solver(msg)) => {
            log.line(&format!("solver failure: {msg}"));
            ExitCode::from(2)
        }
    }
}

fn kernel_for(
    scenario: &Scenario,
    macro_mesh: &MacroMesh,
    cache_dir: Option<&Path>,
    log: &mut Logger,
) -> Result<MemoryKernel, RunError> {
    let ev = scenario.evolution()?;
    let geom = scenario.cell_geometry()?;
    let cell_mesh = triangulate_cell(&geom, scenario.geometry.h_cell)?;
    let grid = KernelGrid {
        t_final: scenario.evolution.t_final,
        n_steps: scenario.grids.n_time,
        macro_points: macro_mesh.centroids.clone(),
    };
    let kernel = build_kernel(&ev, &cell_mesh, &grid, cache_dir, &scenario.hash())?;
    log.line(&format!(
        "kernel: {} time steps, {} macro points, {} evolution classes",
        kernel.grid.n_steps,
        kernel.grid.macro_points.len(),
        kernel.n_classes
    ));
    Ok(kernel)
}

fn run(args: &Args, log: &mut Logger) -> Result<(), RunError> {
    let scenario = parse_scenario(&args.scenario)?;
    let mode = args.mode.unwrap_or(scenario.mode);
    let hash = scenario.hash();
    log.line(&format!("scenario {} (hash {hash}), mode {mode}", args.scenario.display()));
    let cache_from_env = std::env::var_os("MEMDARCY_CACHE_DIR").map(PathBuf::from);
    let cache_dir = args.cache_dir.clone().or(cache_from_env);
    if let Some(dir) = &cache_dir {
        std::fs::create_dir_all(dir).map_err(|e| RunError::Solver(e.to_string()))?;
    }

    match mode {
        Mode::Kernel => {
            // Without an explicit cache the kernel files land in the output
            // directory so the run always produces artifacts.
            let target = cache_dir.unwrap_or_else(|| args.out_dir.join("kernel"));
            std::fs::create_dir_all(&target)?;
            let macro_mesh = MacroMesh::unit_square(scenario.grids.macro_n);
            kernel_for(&scenario, &macro_mesh, Some(&target), log)?;
            log.line(&format!("kernel artifacts in {}", target.display()));
        }
        Mode::Macro => {
            let macro_mesh = MacroMesh::unit_square(scenario.grids.macro_n);
            let kernel = kernel_for(&scenario, &macro_mesh, cache_dir.as_deref(), log)?;
            let f_const = scenario.force();
            let force = move |_t: f64, _x: &nalgebra::Point2<f64>| f_const;
            let p_b = scenario.boundary_pressure();
            let problem = MacroProblem {
                mesh: &macro_mesh,
                kernel: &kernel,
                mu: scenario.physics.mu,
                force: &force,
                p_b: &p_b,
            };
            let fields = run_macro(&problem)?;
            for f in &fields {
                log.line(&format!(
                    "step {}: t = {:.4}, boundary flux {:.6e}, mass balance residual {:.3e}",
                    f.step,
                    f.time,
                    f.flux_balance,
                    f.mass_balance_residual()
                ));
            }
            write_macro_csv(&fields, &args.out_dir, &hash)?;
            write_mesh_csv(&args.out_dir, "macro", &macro_mesh.vertices, &macro_mesh.triangles, &hash)?;
            if args.emit_vtk {
                for f in &fields {
                    let vel = vertex_velocity(&macro_mesh, &f.velocity);
                    let path = args.out_dir.join(format!("macro_{:04}.vtk", f.step));
                    write_vtk(
                        &path,
                        &macro_mesh.vertices,
                        &macro_mesh.triangles,
                        &[("pressure", &f.pressure)],
                        &[("velocity", &vel)],
                    )?;
                }
            }
            log.line(&format!("macro artifacts in {}", args.out_dir.display()));
        }
        Mode::Verify => {
            let report = convergence_study(&scenario, cache_dir.as_deref(), args.max_dofs)?;
            for line in report_summary(&report).lines() {
                log.line(line);
            }
            write_report_csv(&report, &args.out_dir.join("report.csv"), &hash)?;
        }
        Mode::Diagnostics => {
            let ev = scenario.evolution()?;
            let geom = scenario.cell_geometry()?;
            let cell_mesh = triangulate_cell(&geom, scenario.geometry.h_cell)?;
            let mut out = String::from("quantity,parameter,value\n");
            for &eps in &scenario.grids.eps_list {
                let n = (1.0 / eps).round() as usize;
                let mesh = tile_epsilon_domain(&cell_mesh, n)?;
                let mut space = MixedSpace::new(
                    &mesh.vertices,
                    &mesh.triangles,
                    &[],
                    &vec![0u8; mesh.vertices.len()],
                    &mesh.interface_edges,
                    false,
                )?;
                space.set_dirichlet(|_| Vector2::zeros());
                let c_p = estimate_poincare_constant(&space, eps)?;
                log.line(&format!("poincare constant (epsilon = {eps}): {c_p:.6}"));
                out.push_str(&format!("poincare,{eps},{c_p}\n"));
            }
            let cell_space = memdarcy::cell_problems::cell_space(&cell_mesh)?;
            let t_final = scenario.evolution.t_final;
            let x = nalgebra::Point2::new(0.5, 0.5);
            for t in [0.0, 0.5 * t_final, t_final] {
                let coeff = |_: usize, y: &nalgebra::Point2<f64>| {
                    ev.jacobians(t, &x, y).expect("validated evolution")
                };
                let korn = estimate_korn_constant(&cell_space, &coeff, t)?;
                log.line(&format!("korn rayleigh bound (t = {t}): {korn:.6}"));
                out.push_str(&format!("korn,{t},{korn}\n"));
            }
            let path = args.out_dir.join("diagnostics.csv");
            std::fs::write(&path, format!("# scenario={hash}\n{out}"))?;
        }
    }
    Ok(())
}

/// Area-weighted average of per-element velocities at the mesh vertices.
fn vertex_velocity(mesh: &MacroMesh, velocity: &[Vector2<f64>]) -> Vec<Vector2<f64>> {
    let mut acc = vec![Vector2::zeros(); mesh.vertices.len()];
    let mut weight = vec![0.0; mesh.vertices.len()];
    for (e, tri) in mesh.triangles.iter().enumerate() {
        for &v in tri {
            acc[v] += velocity[e] * mesh.areas[e];
            weight[v] += mesh.areas[e];
        }
    }
    for (a, w) in acc.iter_mut().zip(&weight) {
        *a /= *w;
    }
    acc
}
