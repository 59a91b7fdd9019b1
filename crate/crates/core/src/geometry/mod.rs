//! Periodic reference cell Y = (0,1)², its perforation Y*, boundary-fitted
//! triangulations with periodic vertex identification, and ε-tiled perforated
//! macroscopic domains.

mod delaunay;

pub use delaunay::{orient, Triangulation};

use nalgebra::Point2;
use std::f64::consts::PI;
use thiserror::Error;

/// Minimum distance between the inclusion and ∂Y.
pub const GEO_MARGIN: f64 = 0.05;
/// Minimum interior angle (degrees) accepted for any mesh triangle.
pub const MIN_ANGLE_DEG: f64 = 20.0;

pub const SIDE_LEFT: u8 = 1;
pub const SIDE_RIGHT: u8 = 2;
pub const SIDE_BOTTOM: u8 = 4;
pub const SIDE_TOP: u8 = 8;

#[derive(Debug, Error)]
pub enum GeometryError {
    #[error("inclusion radius {0} is not strictly positive")]
    DegenerateInclusion(f64),
    #[error("inclusion of radius {radius} at {center:?} leaves margin {margin} < {GEO_MARGIN} to the cell boundary")]
    MarginViolation { radius: f64, center: (f64, f64), margin: f64 },
    #[error("mesh size {0} outside (0, 0.25]")]
    InvalidMeshSize(f64),
    #[error("mesh quality failure: minimum angle {min_angle_deg:.2}° < {MIN_ANGLE_DEG}°")]
    MeshQualityFailure { min_angle_deg: f64 },
    #[error("constrained edge recovery failed on the inclusion boundary")]
    EdgeRecoveryFailure,
    #[error("periodic seam mismatch: pair ({slave}, {master}) disagrees by {mismatch:e}")]
    SeamMismatch { slave: usize, master: usize, mismatch: f64 },
    #[error("cells per side {0} outside 2..=32")]
    InvalidTiling(usize),
}

/// The unperforated/perforated unit cell: a disk inclusion strictly inside Y.
#[derive(Debug, Clone, Copy)]
pub struct CellGeometry {
    pub dim: usize,
    pub inclusion_center: Point2<f64>,
    pub inclusion_radius_ref: f64,
}

impl CellGeometry {
    /// |Y*| = 1 − π r₀² of the reference configuration.
    pub fn porosity_ref(&self) -> f64 {
        1.0 - PI * self.inclusion_radius_ref * self.inclusion_radius_ref
    }
}

pub fn build_cell_geometry(r0: f64, center: Point2<f64>) -> Result<CellGeometry, GeometryError> {
    if r0 <= 0.0 {
        return Err(GeometryError::DegenerateInclusion(r0));
    }
    let margin = [center.x, 1.0 - center.x, center.y, 1.0 - center.y]
        .into_iter()
        .fold(f64::INFINITY, f64::min)
        - r0;
    if r0 >= 0.5 || margin < GEO_MARGIN {
        return Err(GeometryError::MarginViolation {
            radius: r0,
            center: (center.x, center.y),
            margin,
        });
    }
    Ok(CellGeometry { dim: 2, inclusion_center: center, inclusion_radius_ref: r0 })
}

/// Triangulated fluid region Y* of the unit cell.
#[derive(Debug, Clone)]
pub struct PerforatedCellMesh {
    pub geometry: CellGeometry,
    pub vertices: Vec<Point2<f64>>,
    pub triangles: Vec<[usize; 3]>,
    /// Consecutive edges of the inclusion polygon Γ, each [tail, head].
    pub interface_edges: Vec<[usize; 2]>,
    /// (slave, master): right→left and top→bottom identifications of ∂Y vertices.
    pub periodic_pairs: Vec<(usize, usize)>,
    /// Per-vertex bitmask of SIDE_* flags (0 for interior and Γ vertices).
    pub vertex_sides: Vec<u8>,
    /// Per-vertex flag: lies on the inclusion polygon.
    pub on_interface: Vec<bool>,
    pub mesh_size: f64,
}

impl PerforatedCellMesh {
    pub fn fluid_area(&self) -> f64 {
        self.triangles
            .iter()
            .map(|t| {
                0.5 * orient(&self.vertices[t[0]], &self.vertices[t[1]], &self.vertices[t[2]])
            })
            .sum()
    }

    pub fn min_angle_deg(&self) -> f64 {
        min_angle_deg(&self.vertices, &self.triangles)
    }
}

fn min_angle_deg(vertices: &[Point2<f64>], triangles: &[[usize; 3]]) -> f64 {
    let mut min = f64::INFINITY;
    for t in triangles {
        for k in 0..3 {
            let a = vertices[t[k]];
            let b = vertices[t[(k + 1) % 3]];
            let c = vertices[t[(k + 2) % 3]];
            let u = b - a;
            let v = c - a;
            let cosang = u.dot(&v) / (u.norm() * v.norm());
            min = min.min(cosang.clamp(-1.0, 1.0).acos().to_degrees());
        }
    }
    min
}

/// Deterministic jitter in [-1, 1]² from a splitmix64-style hash.
fn jitter(i: u64, j: u64) -> (f64, f64) {
    let mix = |seed: u64| -> f64 {
        let mut z = seed.wrapping_add(0x9e3779b97f4a7c15);
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
        z ^= z >> 31;
        (z as f64 / u64::MAX as f64) * 2.0 - 1.0
    };
    (mix(i.wrapping_mul(2654435761).wrapping_add(j)), mix(j.wrapping_mul(40503).wrapping_add(i) ^ 0x5bf0_3635))
}

/// Polygon radius of the regular n-gon inscribed in the circle of radius r at
/// polar angle `theta` (vertex at angle 0).
fn polygon_radius(r: f64, n: usize, theta: f64) -> f64 {
    let sector = 2.0 * PI / n as f64;
    let local = theta.rem_euclid(sector) - 0.5 * sector;
    r * (0.5 * sector).cos() / local.cos()
}

/// Boundary-fitted constrained-Delaunay triangulation of Y* with one round of
/// guarded Laplacian smoothing on interior vertices.
pub fn triangulate_cell(geom: &CellGeometry, h: f64) -> Result<PerforatedCellMesh, GeometryError> {
    let mesh = triangulate_cell_unchecked(geom, h)?;
    let min_angle = mesh.min_angle_deg();
    if min_angle < MIN_ANGLE_DEG {
        return Err(GeometryError::MeshQualityFailure { min_angle_deg: min_angle });
    }
    Ok(mesh)
}

fn triangulate_cell_unchecked(
    geom: &CellGeometry,
    h: f64,
) -> Result<PerforatedCellMesh, GeometryError> {
    if !(h > 0.0 && h <= 0.25) {
        return Err(GeometryError::InvalidMeshSize(h));
    }
    let n_side = ((1.0 / h).round() as usize).max(4);
    let hb = 1.0 / n_side as f64;
    let r0 = geom.inclusion_radius_ref;
    let c = geom.inclusion_center;
    let n_gamma = 16usize.max((2.0 * PI * r0 / h).ceil() as usize);

    let mut points: Vec<Point2<f64>> = Vec::new();
    let mut vertex_sides: Vec<u8> = Vec::new();
    let mut on_interface: Vec<bool> = Vec::new();
    // Square boundary vertices, indexed by grid coordinate for pairing.
    let mut grid_index = vec![usize::MAX; (n_side + 1) * (n_side + 1)];
    for j in 0..=n_side {
        for i in 0..=n_side {
            let on_x = i == 0 || i == n_side;
            let on_y = j == 0 || j == n_side;
            if !(on_x || on_y) {
                continue;
            }
            let mut sides = 0u8;
            if i == 0 {
                sides |= SIDE_LEFT;
            }
            if i == n_side {
                sides |= SIDE_RIGHT;
            }
            if j == 0 {
                sides |= SIDE_BOTTOM;
            }
            if j == n_side {
                sides |= SIDE_TOP;
            }
            grid_index[j * (n_side + 1) + i] = points.len();
            points.push(Point2::new(i as f64 * hb, j as f64 * hb));
            vertex_sides.push(sides);
            on_interface.push(false);
        }
    }
    // Inclusion polygon vertices at equal arc length.
    let gamma_start = points.len();
    for k in 0..n_gamma {
        let th = 2.0 * PI * k as f64 / n_gamma as f64;
        points.push(Point2::new(c.x + r0 * th.cos(), c.y + r0 * th.sin()));
        vertex_sides.push(0);
        on_interface.push(true);
    }
    // Interior grid points, jittered, keeping clear of the inclusion.
    let keep_out = r0 + 0.55 * hb;
    for j in 1..n_side {
        for i in 1..n_side {
            let p = Point2::new(i as f64 * hb, j as f64 * hb);
            if (p - c).norm() < keep_out {
                continue;
            }
            let (jx, jy) = jitter(i as u64, j as u64);
            let q = Point2::new(p.x + 0.07 * hb * jx, p.y + 0.07 * hb * jy);
            if (q - c).norm() < r0 + 0.45 * hb {
                continue;
            }
            points.push(q);
            vertex_sides.push(0);
            on_interface.push(false);
        }
    }

    let mut tri = delaunay::triangulate(&points);
    for k in 0..n_gamma {
        let (a, b) = (gamma_start + k, gamma_start + (k + 1) % n_gamma);
        if !delaunay::recover_edge(&mut tri, a, b) {
            return Err(GeometryError::EdgeRecoveryFailure);
        }
    }
    // Drop triangles inside the inclusion polygon.
    tri.triangles.retain(|t| {
        let g = Point2::new(
            (tri.points[t[0]].x + tri.points[t[1]].x + tri.points[t[2]].x) / 3.0,
            (tri.points[t[0]].y + tri.points[t[1]].y + tri.points[t[2]].y) / 3.0,
        );
        let d = g - c;
        d.norm() >= polygon_radius(r0, n_gamma, d.y.atan2(d.x))
    });

    // One round of guarded Laplacian smoothing on interior vertices.
    let mut neighbors: Vec<Vec<usize>> = vec![Vec::new(); points.len()];
    for t in &tri.triangles {
        for k in 0..3 {
            let (u, v) = (t[k], t[(k + 1) % 3]);
            if !neighbors[u].contains(&v) {
                neighbors[u].push(v);
            }
            if !neighbors[v].contains(&u) {
                neighbors[v].push(u);
            }
        }
    }
    let mut incident: Vec<Vec<usize>> = vec![Vec::new(); points.len()];
    for (ti, t) in tri.triangles.iter().enumerate() {
        for &v in t {
            incident[v].push(ti);
        }
    }
    for v in 0..points.len() {
        if vertex_sides[v] != 0 || on_interface[v] || neighbors[v].is_empty() {
            continue;
        }
        let mut avg = Point2::new(0.0, 0.0);
        for &u in &neighbors[v] {
            avg.x += tri.points[u].x;
            avg.y += tri.points[u].y;
        }
        avg.x /= neighbors[v].len() as f64;
        avg.y /= neighbors[v].len() as f64;
        let old = tri.points[v];
        tri.points[v] = avg;
        let ok = incident[v].iter().all(|&ti| {
            let t = tri.triangles[ti];
            orient(&tri.points[t[0]], &tri.points[t[1]], &tri.points[t[2]]) > 1e-14
        });
        if !ok {
            tri.points[v] = old;
        }
    }

    let interface_edges: Vec<[usize; 2]> =
        (0..n_gamma).map(|k| [gamma_start + k, gamma_start + (k + 1) % n_gamma]).collect();

    let mut periodic_pairs: Vec<(usize, usize)> = Vec::new();
    for j in 0..=n_side {
        let slave = grid_index[j * (n_side + 1) + n_side];
        let master = grid_index[j * (n_side + 1)];
        periodic_pairs.push((slave, master));
    }
    for i in 0..=n_side {
        let slave = grid_index[n_side * (n_side + 1) + i];
        let master = grid_index[i];
        periodic_pairs.push((slave, master));
    }

    Ok(PerforatedCellMesh {
        geometry: *geom,
        vertices: tri.points,
        triangles: tri.triangles,
        interface_edges,
        periodic_pairs,
        vertex_sides,
        on_interface,
        mesh_size: h,
    })
}

/// ε-tiled perforated macroscopic domain Ω_ε ⊂ Ω = (0,1)².
#[derive(Debug, Clone)]
pub struct EpsilonDomainMesh {
    pub epsilon: f64,
    pub cells_per_side: usize,
    pub cell_mesh: PerforatedCellMesh,
    pub vertices: Vec<Point2<f64>>,
    pub triangles: Vec<[usize; 3]>,
    /// Interior fluid–solid interfaces Γ_ε.
    pub interface_edges: Vec<[usize; 2]>,
    /// Per-vertex bitmask of SIDE_* flags on the outer boundary Λ_ε = ∂Ω.
    pub outer_sides: Vec<u8>,
    /// Flattened ε-cell index (j * n + i) per triangle.
    pub cell_of_triangle: Vec<usize>,
}

impl EpsilonDomainMesh {
    pub fn fluid_area(&self) -> f64 {
        self.triangles
            .iter()
            .map(|t| {
                0.5 * orient(&self.vertices[t[0]], &self.vertices[t[1]], &self.vertices[t[2]])
            })
            .sum()
    }

    /// Macro coordinate of the centre of ε-cell `k` (flattened index).
    pub fn cell_center(&self, k: usize) -> Point2<f64> {
        let n = self.cells_per_side;
        let (i, j) = (k % n, k / n);
        Point2::new(self.epsilon * (i as f64 + 0.5), self.epsilon * (j as f64 + 0.5))
    }

    /// Number of disjoint closed interface curves in Γ_ε.
    pub fn interface_loop_count(&self) -> usize {
        let mut parent: Vec<usize> = (0..self.vertices.len()).collect();
        fn find(parent: &mut Vec<usize>, x: usize) -> usize {
            let mut r = x;
            while parent[r] != r {
                r = parent[r];
            }
            let mut c = x;
            while parent[c] != c {
                let next = parent[c];
                parent[c] = r;
                c = next;
            }
            r
        }
        let mut touched: Vec<usize> = Vec::new();
        for e in &self.interface_edges {
            let (ra, rb) = (find(&mut parent, e[0]), find(&mut parent, e[1]));
            parent[ra] = rb;
            touched.push(e[0]);
            touched.push(e[1]);
        }
        touched.sort_unstable();
        touched.dedup();
        let mut roots: Vec<usize> = touched.iter().map(|&v| find(&mut parent, v)).collect();
        roots.sort_unstable();
        roots.dedup();
        roots.len()
    }
}

/// Uniform right-triangle mesh of the unit square with n×n quads, each split
/// along the diagonal of positive slope. Used for unperforated reference
/// solves and the macroscopic pressure mesh.
pub fn uniform_square_mesh(n: usize) -> (Vec<Point2<f64>>, Vec<[usize; 3]>) {
    assert!(n >= 1);
    let mut vertices = Vec::with_capacity((n + 1) * (n + 1));
    for j in 0..=n {
        for i in 0..=n {
            vertices.push(Point2::new(i as f64 / n as f64, j as f64 / n as f64));
        }
    }
    let idx = |i: usize, j: usize| j * (n + 1) + i;
    let mut triangles = Vec::with_capacity(2 * n * n);
    for j in 0..n {
        for i in 0..n {
            triangles.push([idx(i, j), idx(i + 1, j), idx(i + 1, j + 1)]);
            triangles.push([idx(i, j), idx(i + 1, j + 1), idx(i, j + 1)]);
        }
    }
    (vertices, triangles)
}

/// Boundary edges (pairs of vertex indices) of an arbitrary triangle mesh:
/// edges that belong to exactly one triangle.
pub fn boundary_edges(triangles: &[[usize; 3]]) -> Vec<[usize; 2]> {
    let mut once: Vec<[usize; 2]> = Vec::new();
    let mut seen: std::collections::HashMap<(usize, usize), usize> = std::collections::HashMap::new();
    for t in triangles {
        for k in 0..3 {
            let (a, b) = (t[k], t[(k + 1) % 3]);
            let key = (a.min(b), a.max(b));
            *seen.entry(key).or_insert(0) += 1;
        }
    }
    for t in triangles {
        for k in 0..3 {
            let (a, b) = (t[k], t[(k + 1) % 3]);
            if seen[&(a.min(b), a.max(b))] == 1 {
                once.push([a, b]);
            }
        }
    }
    once
}

/// Validate that `periodic_pairs` identify vertices with matching tangential
/// coordinates to 1e-12.
pub fn verify_periodic_pairs(mesh: &PerforatedCellMesh) -> Result<(), GeometryError> {
    for &(slave, master) in &mesh.periodic_pairs {
        let s = mesh.vertices[slave];
        let m = mesh.vertices[master];
        // Tangential coordinate: y for left/right pairs, x for bottom/top.
        let mismatch = if mesh.vertex_sides[slave] & SIDE_RIGHT != 0
            && mesh.vertex_sides[master] & SIDE_LEFT != 0
        {
            (s.y - m.y).abs().max((s.x - 1.0).abs()).max(m.x.abs())
        } else if mesh.vertex_sides[slave] & SIDE_TOP != 0
            && mesh.vertex_sides[master] & SIDE_BOTTOM != 0
        {
            (s.x - m.x).abs().max((s.y - 1.0).abs()).max(m.y.abs())
        } else {
            f64::INFINITY
        };
        if mismatch > 1e-12 {
            return Err(GeometryError::SeamMismatch { slave, master, mismatch });
        }
    }
    Ok(())
}

/// Tile the unit-cell mesh n×n at scale ε = 1/n, merging seam vertices exactly
/// once through the periodic identification.
pub fn tile_epsilon_domain(
    mesh: &PerforatedCellMesh,
    n: usize,
) -> Result<EpsilonDomainMesh, GeometryError> {
    if !(2..=32).contains(&n) {
        return Err(GeometryError::InvalidTiling(n));
    }
    verify_periodic_pairs(mesh)?;
    let eps = 1.0 / n as f64;
    let nv = mesh.vertices.len();
    // Inverse pair maps: left master → right slave, bottom master → top slave.
    let mut l2r = vec![usize::MAX; nv];
    let mut b2t = vec![usize::MAX; nv];
    for &(slave, master) in &mesh.periodic_pairs {
        if mesh.vertex_sides[slave] & SIDE_RIGHT != 0 && mesh.vertex_sides[master] & SIDE_LEFT != 0
        {
            l2r[master] = slave;
        } else {
            b2t[master] = slave;
        }
    }

    let mut vertices: Vec<Point2<f64>> = Vec::new();
    let mut outer_sides: Vec<u8> = Vec::new();
    let mut triangles: Vec<[usize; 3]> = Vec::new();
    let mut interface_edges: Vec<[usize; 2]> = Vec::new();
    let mut cell_of_triangle: Vec<usize> = Vec::new();
    let mut global: Vec<Vec<usize>> = vec![Vec::new(); n * n];

    for j in 0..n {
        for i in 0..n {
            let tile = j * n + i;
            let mut map = vec![usize::MAX; nv];
            for v in 0..nv {
                let sides = mesh.vertex_sides[v];
                if i > 0 && sides & SIDE_LEFT != 0 {
                    map[v] = global[j * n + i - 1][l2r[v]];
                } else if j > 0 && sides & SIDE_BOTTOM != 0 {
                    map[v] = global[(j - 1) * n + i][b2t[v]];
                } else {
                    map[v] = vertices.len();
                    let p = mesh.vertices[v];
                    vertices.push(Point2::new(eps * (i as f64 + p.x), eps * (j as f64 + p.y)));
                    let mut out = 0u8;
                    if i == 0 && sides & SIDE_LEFT != 0 {
                        out |= SIDE_LEFT;
                    }
                    if i == n - 1 && sides & SIDE_RIGHT != 0 {
                        out |= SIDE_RIGHT;
                    }
                    if j == 0 && sides & SIDE_BOTTOM != 0 {
                        out |= SIDE_BOTTOM;
                    }
                    if j == n - 1 && sides & SIDE_TOP != 0 {
                        out |= SIDE_TOP;
                    }
                    outer_sides.push(out);
                }
            }
            // Seam vertices adopted from a neighbour may still lie on ∂Ω.
            for v in 0..nv {
                let sides = mesh.vertex_sides[v];
                let g = map[v];
                if j == 0 && sides & SIDE_BOTTOM != 0 {
                    outer_sides[g] |= SIDE_BOTTOM;
                }
                if j == n - 1 && sides & SIDE_TOP != 0 {
                    outer_sides[g] |= SIDE_TOP;
                }
                if i == 0 && sides & SIDE_LEFT != 0 {
                    outer_sides[g] |= SIDE_LEFT;
                }
                if i == n - 1 && sides & SIDE_RIGHT != 0 {
                    outer_sides[g] |= SIDE_RIGHT;
                }
            }
            for t in &mesh.triangles {
                triangles.push([map[t[0]], map[t[1]], map[t[2]]]);
                cell_of_triangle.push(tile);
            }
            for e in &mesh.interface_edges {
                interface_edges.push([map[e[0]], map[e[1]]]);
            }
            global[tile] = map;
        }
    }

    Ok(EpsilonDomainMesh {
        epsilon: eps,
        cells_per_side: n,
        cell_mesh: mesh.clone(),
        vertices,
        triangles,
        interface_edges,
        outer_sides,
        cell_of_triangle,
    })
}
