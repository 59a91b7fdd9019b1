//! Transformed instationary Stokes cell problems on the periodic reference
//! cell, memory-kernel assembly K(s,t,x), initial-velocity columns aⁱⁿ, and
//! kernel persistence with checksummed CSV caching.

use crate::geometry::PerforatedCellMesh;
use crate::kinematics::{porosity, porosity_rate, MicrostructureEvolution};
use crate::quadrature::triangle_degree5;
use crate::sparse::{SparseLu, SparseMatrix};
use crate::stokes_fem::{
    assemble_operators, solve_saddle, velocity_at, FemError, MixedSpace, MixedStokesState,
    SaddleConfig, TransformedOperators,
};
use nalgebra::{Matrix2, Point2, Vector2};
use sha2::{Digest, Sha256};
use std::fmt::Write as _;
use std::io::Write as _;
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CellError {
    #[error(transparent)]
    Fem(#[from] FemError),
    #[error("incompatible initial cell data: {0}")]
    IncompatibleInitialData(String),
    #[error("kernel cache corrupted: {0}")]
    CacheCorruption(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Shared time grid and macro sampling points for a kernel build. Start
/// times coincide with the time grid, so the macro memory quadrature needs
/// no kernel interpolation.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelGrid {
    pub t_final: f64,
    /// Number of time steps N; times are t_n = n·T/N for n = 0..=N.
    pub n_steps: usize,
    /// One sampling point per macro element (centroids).
    pub macro_points: Vec<Point2<f64>>,
}

impl KernelGrid {
    pub fn dt(&self) -> f64 {
        self.t_final / self.n_steps as f64
    }

    pub fn time(&self, n: usize) -> f64 {
        self.t_final * n as f64 / self.n_steps as f64
    }
}

/// The assembled memory permeability kernel together with porosity data and
/// the initial-velocity columns, deduplicated over macro points that share
/// identical evolution parameters.
#[derive(Debug, Clone)]
pub struct MemoryKernel {
    pub grid: KernelGrid,
    /// Deduplication class of each macro point.
    pub class_of: Vec<usize>,
    pub n_classes: usize,
    /// K(s_m, t_n, ·) for m ≤ n, flattened lower-triangular by class.
    k: Vec<Matrix2<f64>>,
    /// aⁱⁿ(t_n, ·) by class.
    a_in: Vec<Vector2<f64>>,
    /// Θ(t_n, ·) by class.
    theta: Vec<f64>,
    /// dΘ/dt(t_n, ·) by class.
    theta_rate: Vec<f64>,
}

impl MemoryKernel {
    fn tri_index(&self, m: usize, n: usize, q: usize) -> usize {
        assert!(m <= n && n <= self.grid.n_steps && q < self.n_classes);
        (n * (n + 1) / 2 + m) * self.n_classes + q
    }

    /// K(s_m, t_n, x_p) for macro point index p.
    pub fn k_at(&self, m: usize, n: usize, point: usize) -> Matrix2<f64> {
        self.k[self.tri_index(m, n, self.class_of[point])]
    }

    pub fn a_in_at(&self, n: usize, point: usize) -> Vector2<f64> {
        self.a_in[n * self.n_classes + self.class_of[point]]
    }

    pub fn theta_at(&self, n: usize, point: usize) -> f64 {
        self.theta[n * self.n_classes + self.class_of[point]]
    }

    pub fn theta_rate_at(&self, n: usize, point: usize) -> f64 {
        self.theta_rate[n * self.n_classes + self.class_of[point]]
    }
}

/// Deduplication classes of the macro points: the cell evolution depends on
/// x only through the local radius trajectory, so points with identical
/// radius parameters share one cell computation.
fn dedup_classes(ev: &MicrostructureEvolution, points: &[Point2<f64>]) -> (Vec<usize>, Vec<usize>) {
    let mut class_of = Vec::with_capacity(points.len());
    let mut representatives = Vec::new();
    if !ev.law.is_macro_dependent() {
        class_of.resize(points.len(), 0);
        representatives.push(0);
        return (class_of, representatives);
    }
    let mut seen: std::collections::HashMap<u64, usize> = std::collections::HashMap::new();
    for (p, x) in points.iter().enumerate() {
        // The radius rate at t=1 determines the whole trajectory for the
        // macro-modulated family.
        let (_, rate) = ev.radius(1.0, x);
        let key = rate.to_bits();
        let q = *seen.entry(key).or_insert_with(|| {
            representatives.push(p);
            representatives.len() - 1
        });
        class_of.push(q);
    }
    (class_of, representatives)
}

/// Mixed space for the periodic reference cell with no-slip interface.
pub fn cell_space(mesh: &PerforatedCellMesh) -> Result<MixedSpace, FemError> {
    MixedSpace::new(
        &mesh.vertices,
        &mesh.triangles,
        &mesh.periodic_pairs,
        &mesh.vertex_sides,
        &mesh.interface_edges,
        true,
    )
}

/// ∫_{Y*} Ψ₀ ζ̂ dy — the kernel column in back-transformed form, since
/// J₀ A₀⁻¹ = Ψ₀ in two dimensions.
pub fn kernel_column(
    space: &MixedSpace,
    ev: &MicrostructureEvolution,
    t: f64,
    x: &Point2<f64>,
    velocity: &[f64],
) -> Result<Vector2<f64>, FemError> {
    integrate_velocity(space, velocity, |jac, v| jac.psi_grad * v, ev, t, x)
}

/// ∫_{Y*} ζ̂ dy — the same column without back-transformation; agrees with
/// [`kernel_column`] for discretely Piola-divergence-free fields.
pub fn kernel_column_plain(
    space: &MixedSpace,
    ev: &MicrostructureEvolution,
    t: f64,
    x: &Point2<f64>,
    velocity: &[f64],
) -> Result<Vector2<f64>, FemError> {
    integrate_velocity(space, velocity, |_, v| v, ev, t, x)
}

fn integrate_velocity(
    space: &MixedSpace,
    velocity: &[f64],
    map: impl Fn(&crate::kinematics::TransformJacobians, Vector2<f64>) -> Vector2<f64>,
    ev: &MicrostructureEvolution,
    t: f64,
    x: &Point2<f64>,
) -> Result<Vector2<f64>, FemError> {
    let mut out = Vector2::zeros();
    for ti in 0..space.triangles.len() {
        let tr = space.triangles[ti];
        let (a, b, c) = (space.vertices[tr[0]], space.vertices[tr[1]], space.vertices[tr[2]]);
        let area = 0.5 * crate::geometry::orient(&a, &b, &c);
        for node in triangle_degree5() {
            let y = Point2::new(
                node.bary[0] * a.x + node.bary[1] * b.x + node.bary[2] * c.x,
                node.bary[0] * a.y + node.bary[1] * b.y + node.bary[2] * c.y,
            );
            let jac = ev.jacobians(t, x, &y)?;
            let (v, _) = velocity_at(space, velocity, ti, node.bary);
            out += map(&jac, v) * (node.weight * area);
        }
    }
    Ok(out)
}

/// Nodal interpolation of the initial value ζ̂_i(s) = A₀(s)·e_i.
fn initial_zeta(
    space: &MixedSpace,
    ev: &MicrostructureEvolution,
    s: f64,
    x: &Point2<f64>,
    dir: usize,
) -> Result<Vec<f64>, FemError> {
    let mut v = vec![0.0; space.n_vel_dofs];
    for node in 0..space.n_vel_nodes {
        let y = space.velocity_node_position(node);
        let jac = ev.jacobians(s, x, &y)?;
        v[2 * node] = jac.adj[(0, dir)];
        v[2 * node + 1] = jac.adj[(1, dir)];
    }
    Ok(v)
}

/// Stepping context at one macro point: operators per time level with a
/// lazily factored implicit matrix shared across all concurrent start times.
struct CellStepper<'a> {
    space: &'a MixedSpace,
    ops: TransformedOperators,
    dt: f64,
    cache: Option<(SparseMatrix, SparseLu)>,
}

impl<'a> CellStepper<'a> {
    fn new(
        space: &'a MixedSpace,
        ev: &MicrostructureEvolution,
        x: &Point2<f64>,
        t: f64,
        dt: f64,
        mu: f64,
    ) -> Result<Self, FemError> {
        let coeff = |_: usize, y: &Point2<f64>| {
            ev.jacobians(t, x, y).expect("cell quadrature point outside validated domain")
        };
        let ops = assemble_operators(space, &coeff, mu, 1.0, t)?;
        Ok(CellStepper { space, ops, dt, cache: None })
    }

    /// Advance one trajectory from t−dt to t with homogeneous data, reusing
    /// the factored implicit matrix.
    fn advance(
        &mut self,
        m_prev: &[(usize, usize, f64)],
        prev: &MixedStokesState,
        cfg: &SaddleConfig,
    ) -> Result<MixedStokesState, FemError> {
        let mut k =
            Vec::with_capacity(self.ops.m.len() + self.ops.a1.len() + self.ops.a2.len());
        k.extend(self.ops.m.iter().map(|&(i, j, v)| (i, j, v / self.dt)));
        k.extend_from_slice(&self.ops.a1);
        k.extend_from_slice(&self.ops.a2);
        let mut rhs = vec![0.0; self.space.n_full];
        for &(i, j, v) in m_prev {
            rhs[i] += v * prev.velocity[j] / self.dt;
        }
        crate::stokes_fem::solve_saddle_cached(
            self.space,
            &k,
            &self.ops.b,
            &rhs,
            self.ops.time,
            cfg,
            &mut self.cache,
        )
    }
}

/// Trajectory of one directional cell problem from start time s_m.
#[derive(Debug)]
pub struct ZetaTrajectory {
    /// States at t_m, …, t_N.
    pub states: Vec<MixedStokesState>,
    /// Kernel column (K_{1i}, K_{2i})(s_m, t_n, x) for n = m..=N.
    pub kernel: Vec<Vector2<f64>>,
}

/// Solve the directional cell problem for ζ̂_i started at s_m and report the
/// kernel column along the trajectory.
pub fn solve_zeta_direction(
    ev: &MicrostructureEvolution,
    x: &Point2<f64>,
    mesh: &PerforatedCellMesh,
    grid: &KernelGrid,
    m: usize,
    dir: usize,
) -> Result<ZetaTrajectory, CellError> {
    assert!(dir < 2 && m <= grid.n_steps);
    let space = cell_space(mesh)?;
    let cfg = SaddleConfig::default();
    let dt = grid.dt();
    let s = grid.time(m);
    let velocity = initial_zeta(&space, ev, s, x, dir)?;
    let mut states = vec![MixedStokesState {
        velocity,
        pressure: vec![0.0; space.n_pressure],
        time: s,
    }];
    // The diagonal entry comes from the exact initial value A₀(s)e_i, for
    // which Ψ₀A₀⁻¹-cancellation gives ∫J₀ dy·e_i at quadrature accuracy.
    let theta = porosity(ev, mesh, s, x).map_err(FemError::from)?;
    let mut kernel = vec![Vector2::new(
        if dir == 0 { theta } else { 0.0 },
        if dir == 1 { theta } else { 0.0 },
    )];
    let mut m_prev = assemble_operators(
        &space,
        &|_, y: &Point2<f64>| ev.jacobians(s, x, y).expect("validated domain"),
        1.0,
        1.0,
        s,
    )?
    .m;
    for n in m + 1..=grid.n_steps {
        let t = grid.time(n);
        let mut stepper = CellStepper::new(&space, ev, x, t, dt, 1.0)?;
        let state = stepper.advance(&m_prev, states.last().unwrap(), &cfg)?;
        kernel.push(kernel_column(&space, ev, t, x, &state.velocity)?);
        m_prev = stepper.ops.m;
        states.push(state);
    }
    Ok(ZetaTrajectory { states, kernel })
}

/// Solve the initial-value cell problem for ζ̂⁰ from a given cell velocity
/// field and report the aⁱⁿ column ∫ ζ̂⁰ back-transformed over the grid.
pub fn solve_zeta_init(
    ev: &MicrostructureEvolution,
    x: &Point2<f64>,
    mesh: &PerforatedCellMesh,
    grid: &KernelGrid,
    mu: f64,
    v0_init: &[f64],
) -> Result<Vec<Vector2<f64>>, CellError> {
    let space = cell_space(mesh)?;
    if v0_init.len() != space.n_vel_dofs {
        return Err(CellError::IncompatibleInitialData(format!(
            "initial field has {} DOFs, space has {}",
            v0_init.len(),
            space.n_vel_dofs
        )));
    }
    let worst = space
        .dirichlet_nodes
        .iter()
        .map(|&n| v0_init[2 * n].hypot(v0_init[2 * n + 1]))
        .fold(0.0, f64::max);
    if worst > 1e-10 {
        return Err(CellError::IncompatibleInitialData(format!(
            "initial field does not vanish on the interface (max |v| = {worst:.3e})"
        )));
    }
    let cfg = SaddleConfig::default();
    let dt = grid.dt();
    let mut state = MixedStokesState {
        velocity: v0_init.to_vec(),
        pressure: vec![0.0; space.n_pressure],
        time: 0.0,
    };
    let mut a_in = vec![kernel_column(&space, ev, 0.0, x, &state.velocity)?];
    let mut m_prev = assemble_operators(
        &space,
        &|_, y: &Point2<f64>| ev.jacobians(0.0, x, y).expect("validated domain"),
        mu,
        1.0,
        0.0,
    )?
    .m;
    for n in 1..=grid.n_steps {
        let t = grid.time(n);
        let mut stepper = CellStepper::new(&space, ev, x, t, dt, mu)?;
        state = stepper.advance(&m_prev, &state, &cfg)?;
        a_in.push(kernel_column(&space, ev, t, x, &state.velocity)?);
        m_prev = stepper.ops.m;
    }
    Ok(a_in)
}

/// Build the complete lower-triangular memory kernel over the grid, with one
/// cell computation per evolution-parameter class. A cache directory may be
/// supplied; a stored kernel with matching scenario hash is returned
/// verbatim, and a fresh build is persisted.
pub fn build_kernel(
    ev: &MicrostructureEvolution,
    mesh: &PerforatedCellMesh,
    grid: &KernelGrid,
    cache_dir: Option<&Path>,
    scenario_hash: &str,
) -> Result<MemoryKernel, CellError> {
    if let Some(dir) = cache_dir {
        if dir.join("kernel.csv").exists() {
            return read_kernel(dir, grid, scenario_hash);
        }
    }
    let (class_of, representatives) = dedup_classes(ev, &grid.macro_points);
    let n_classes = representatives.len();
    let n = grid.n_steps;
    let dt = grid.dt();
    let space = cell_space(mesh)?;
    let cfg = SaddleConfig::default();
    let mut kernel = MemoryKernel {
        grid: grid.clone(),
        class_of,
        n_classes,
        k: vec![Matrix2::zeros(); (n + 1) * (n + 2) / 2 * n_classes],
        a_in: vec![Vector2::zeros(); (n + 1) * n_classes],
        theta: vec![0.0; (n + 1) * n_classes],
        theta_rate: vec![0.0; (n + 1) * n_classes],
    };
    let static_domain = ev.law.is_identity();
    for (q, &rep) in representatives.iter().enumerate() {
        let x = grid.macro_points[rep];
        // Active trajectories by start index: [m][dir] → state.
        let mut live: Vec<[MixedStokesState; 2]> = Vec::with_capacity(n + 1);
        let mut m_prev: Option<Vec<(usize, usize, f64)>> = None;
        let mut stepper: Option<CellStepper> = None;
        for step in 0..=n {
            let t = grid.time(step);
            let theta = porosity(ev, mesh, t, &x).map_err(FemError::from)?;
            kernel.theta[step * n_classes + q] = theta;
            kernel.theta_rate[step * n_classes + q] =
                porosity_rate(ev, mesh, t, &x).map_err(FemError::from)?;
            if step > 0 {
                let rebuild = stepper.is_none() || !static_domain;
                if rebuild {
                    stepper = Some(CellStepper::new(&space, ev, &x, t, dt, 1.0)?);
                } else if let Some(st) = stepper.as_mut() {
                    st.ops.time = t;
                }
                let st = stepper.as_mut().unwrap();
                let mp = m_prev.as_ref().unwrap();
                for (m, pair) in live.iter_mut().enumerate() {
                    for (dir, state) in pair.iter_mut().enumerate() {
                        *state = st.advance(mp, state, &cfg)?;
                        let col = kernel_column(&space, ev, t, &x, &state.velocity)?;
                        let idx = kernel.tri_index(m, step, q);
                        kernel.k[idx].set_column(dir, &col);
                    }
                }
                if !static_domain || m_prev.is_none() {
                    m_prev = Some(st.ops.m.clone());
                }
            }
            // Start the trajectories with s_m = t_step.
            let diag = kernel.tri_index(step, step, q);
            kernel.k[diag] = Matrix2::identity() * theta;
            let mk_state = |dir: usize| -> Result<MixedStokesState, CellError> {
                Ok(MixedStokesState {
                    velocity: initial_zeta(&space, ev, t, &x, dir)?,
                    pressure: vec![0.0; space.n_pressure],
                    time: t,
                })
            };
            live.push([mk_state(0)?, mk_state(1)?]);
            if m_prev.is_none() {
                let coeff = |_: usize, y: &Point2<f64>| {
                    ev.jacobians(t, &x, y).expect("validated domain")
                };
                m_prev = Some(assemble_operators(&space, &coeff, 1.0, 1.0, t)?.m);
            }
        }
    }
    if let Some(dir) = cache_dir {
        write_kernel(&kernel, dir, scenario_hash)?;
    }
    Ok(kernel)
}

fn fmt_f64(v: f64) -> String {
    // Shortest round-trip decimal form keeps files byte-stable and lossless.
    format!("{v}")
}

fn data_checksum(lines: &[String]) -> String {
    let mut hasher = Sha256::new();
    for line in lines {
        hasher.update(line.as_bytes());
        hasher.update(b"\n");
    }
    format!("{:x}", hasher.finalize())
}

/// Persist the kernel as checksummed CSV files (kernel.csv, a_in.csv,
/// theta.csv) carrying the scenario hash and grid in their header lines.
pub fn write_kernel(
    kernel: &MemoryKernel,
    dir: &Path,
    scenario_hash: &str,
) -> Result<(), CellError> {
    std::fs::create_dir_all(dir)?;
    let classes: Vec<String> = kernel.class_of.iter().map(|c| c.to_string()).collect();
    let meta = format!(
        "scenario={} t_final={} n_steps={} n_classes={} classes={}",
        scenario_hash,
        fmt_f64(kernel.grid.t_final),
        kernel.grid.n_steps,
        kernel.n_classes,
        classes.join(";")
    );

    let mut rows = Vec::new();
    for n in 0..=kernel.grid.n_steps {
        for m in 0..=n {
            for q in 0..kernel.n_classes {
                let k = kernel.k[kernel.tri_index(m, n, q)];
                rows.push(format!(
                    "{m},{n},{q},{},{},{},{}",
                    fmt_f64(k[(0, 0)]),
                    fmt_f64(k[(0, 1)]),
                    fmt_f64(k[(1, 0)]),
                    fmt_f64(k[(1, 1)])
                ));
            }
        }
    }
    write_csv(&dir.join("kernel.csv"), &meta, "s_index,t_index,q_index,K11,K12,K21,K22", &rows)?;

    let mut rows = Vec::new();
    for n in 0..=kernel.grid.n_steps {
        for q in 0..kernel.n_classes {
            let a = kernel.a_in[n * kernel.n_classes + q];
            rows.push(format!("{n},{q},{},{}", fmt_f64(a.x), fmt_f64(a.y)));
        }
    }
    write_csv(&dir.join("a_in.csv"), &meta, "t_index,q_index,a1,a2", &rows)?;

    let mut rows = Vec::new();
    for n in 0..=kernel.grid.n_steps {
        for q in 0..kernel.n_classes {
            let i = n * kernel.n_classes + q;
            rows.push(format!(
                "{n},{q},{},{}",
                fmt_f64(kernel.theta[i]),
                fmt_f64(kernel.theta_rate[i])
            ));
        }
    }
    write_csv(&dir.join("theta.csv"), &meta, "t_index,q_index,theta,theta_rate", &rows)?;
    Ok(())
}

fn write_csv(path: &Path, meta: &str, header: &str, rows: &[String]) -> Result<(), CellError> {
    let mut out = String::new();
    writeln!(out, "# {meta} checksum={}", data_checksum(rows)).unwrap();
    writeln!(out, "{header}").unwrap();
    for row in rows {
        writeln!(out, "{row}").unwrap();
    }
    let mut file = std::fs::File::create(path)?;
    file.write_all(out.as_bytes())?;
    Ok(())
}

fn parse_header<'a>(
    line: &'a str,
    path: &Path,
) -> Result<std::collections::HashMap<&'a str, &'a str>, CellError> {
    let body = line.strip_prefix("# ").ok_or_else(|| {
        CellError::CacheCorruption(format!("{}: missing header line", path.display()))
    })?;
    Ok(body
        .split_whitespace()
        .filter_map(|kv| kv.split_once('='))
        .collect())
}

fn read_csv(
    path: &Path,
    scenario_hash: &str,
) -> Result<(std::collections::HashMap<String, String>, Vec<String>), CellError> {
    let text = std::fs::read_to_string(path)?;
    let mut lines = text.lines();
    let header = lines.next().unwrap_or_default().to_string();
    let fields: std::collections::HashMap<String, String> = parse_header(&header, path)?
        .into_iter()
        .map(|(k, v)| (k.to_string(), v.to_string()))
        .collect();
    if fields.get("scenario").map(String::as_str) != Some(scenario_hash) {
        return Err(CellError::CacheCorruption(format!(
            "{}: scenario hash mismatch",
            path.display()
        )));
    }
    let _column_header = lines.next();
    let rows: Vec<String> = lines.map(str::to_string).collect();
    if fields.get("checksum").map(String::as_str) != Some(data_checksum(&rows).as_str()) {
        return Err(CellError::CacheCorruption(format!(
            "{}: checksum mismatch",
            path.display()
        )));
    }
    Ok((fields, rows))
}

fn parse_row(row: &str, path: &Path) -> Result<Vec<f64>, CellError> {
    row.split(',')
        .map(|f| {
            f.parse::<f64>().map_err(|e| {
                CellError::CacheCorruption(format!("{}: bad field {f:?}: {e}", path.display()))
            })
        })
        .collect()
}

/// Read a kernel previously written by [`write_kernel`]; the scenario hash
/// and the grid must match.
pub fn read_kernel(
    dir: &Path,
    grid: &KernelGrid,
    scenario_hash: &str,
) -> Result<MemoryKernel, CellError> {
    let kpath = dir.join("kernel.csv");
    let (fields, krows) = read_csv(&kpath, scenario_hash)?;
    let n_steps: usize = fields
        .get("n_steps")
        .and_then(|v| v.parse().ok())
        .ok_or_else(|| CellError::CacheCorruption("kernel.csv: bad n_steps".into()))?;
    let t_final: f64 = fields
        .get("t_final")
        .and_then(|v| v.parse().ok())
        .ok_or_else(|| CellError::CacheCorruption("kernel.csv: bad t_final".into()))?;
    let n_classes: usize = fields
        .get("n_classes")
        .and_then(|v| v.parse().ok())
        .ok_or_else(|| CellError::CacheCorruption("kernel.csv: bad n_classes".into()))?;
    let class_of: Vec<usize> = fields
        .get("classes")
        .map(|s| s.split(';').filter_map(|c| c.parse().ok()).collect())
        .unwrap_or_default();
    if n_steps != grid.n_steps
        || (t_final - grid.t_final).abs() > 1e-14
        || class_of.len() != grid.macro_points.len()
    {
        return Err(CellError::CacheCorruption(
            "kernel.csv: grid does not match the requested scenario".into(),
        ));
    }
    let mut kernel = MemoryKernel {
        grid: grid.clone(),
        class_of,
        n_classes,
        k: vec![Matrix2::zeros(); (n_steps + 1) * (n_steps + 2) / 2 * n_classes],
        a_in: vec![Vector2::zeros(); (n_steps + 1) * n_classes],
        theta: vec![0.0; (n_steps + 1) * n_classes],
        theta_rate: vec![0.0; (n_steps + 1) * n_classes],
    };
    for row in &krows {
        let f = parse_row(row, &kpath)?;
        if f.len() != 7 {
            return Err(CellError::CacheCorruption("kernel.csv: short row".into()));
        }
        let (m, n, q) = (f[0] as usize, f[1] as usize, f[2] as usize);
        let idx = kernel.tri_index(m, n, q);
        kernel.k[idx] = Matrix2::new(f[3], f[4], f[5], f[6]);
    }
    let apath = dir.join("a_in.csv");
    let (_, arows) = read_csv(&apath, scenario_hash)?;
    for row in &arows {
        let f = parse_row(row, &apath)?;
        let (n, q) = (f[0] as usize, f[1] as usize);
        kernel.a_in[n * n_classes + q] = Vector2::new(f[2], f[3]);
    }
    let tpath = dir.join("theta.csv");
    let (_, trows) = read_csv(&tpath, scenario_hash)?;
    for row in &trows {
        let f = parse_row(row, &tpath)?;
        let (n, q) = (f[0] as usize, f[1] as usize);
        kernel.theta[n * n_classes + q] = f[2];
        kernel.theta_rate[n * n_classes + q] = f[3];
    }
    Ok(kernel)
}

/// Stationary Stokes cell solve with unit force e_dir on the static cell:
/// returns the space and the velocity coefficients (zero on Γ, periodic).
pub fn stationary_cell_solution(
    mesh: &PerforatedCellMesh,
    dir: usize,
) -> Result<(MixedSpace, Vec<f64>), CellError> {
    let space = cell_space(mesh)?;
    let coeff =
        |_: usize, y: &Point2<f64>| crate::kinematics::TransformJacobians::identity(*y);
    let ops = assemble_operators(&space, &coeff, 1.0, 1.0, 0.0)?;
    // ∫ e_dir · φ against the P2 basis: mass matrix times the constant field.
    let mut rhs = vec![0.0; space.n_full];
    let ones: Vec<f64> = (0..space.n_full)
        .map(|d| if d < space.n_vel_dofs && d % 2 == dir { 1.0 } else { 0.0 })
        .collect();
    for &(i, j, v) in &ops.m {
        rhs[i] += v * ones[j];
    }
    let state = solve_saddle(&space, &ops.a1, &ops.b, &rhs, 0.0, &SaddleConfig::default())?;
    Ok((space, state.velocity))
}

/// Stationary cell permeability: the long-time limit of the accumulated
/// kernel, obtained from the stationary Stokes cell problem with unit force
/// e_i. Used as the steady-state Darcy oracle.
pub fn stationary_permeability(mesh: &PerforatedCellMesh) -> Result<Matrix2<f64>, CellError> {
    let ev = MicrostructureEvolution::new(
        mesh.geometry,
        crate::kinematics::RadiusLaw::Constant,
        0.5 * (0.5 + mesh.geometry.inclusion_radius_ref),
        1.0,
    )
    .map_err(FemError::from)?;
    let mut k = Matrix2::zeros();
    for dir in 0..2 {
        let (space, velocity) = stationary_cell_solution(mesh, dir)?;
        let col = kernel_column(&space, &ev, 0.0, &Point2::new(0.5, 0.5), &velocity)?;
        k.set_column(dir, &col);
    }
    Ok(k)
}
