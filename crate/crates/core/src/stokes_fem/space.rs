//! Taylor–Hood P2/P1 mixed spaces on triangle meshes, with Dirichlet data,
//! periodic identifications and an optional zero-mean pressure gauge.
//!
//! Global DOF layout: velocity DOFs first (2 per node; nodes are mesh vertices
//! followed by edge midpoints), then pressure DOFs (one per vertex), then the
//! gauge multiplier if present. Constraints are handled by row/column
//! reduction: slave DOFs redirect to their master, fixed DOFs move to the
//! right-hand side.

use super::FemError;
use crate::geometry::{SIDE_RIGHT, SIDE_TOP};
use crate::sparse::SparseMatrix;
use nalgebra::{Point2, Vector2};
use std::collections::HashMap;

#[derive(Debug, Clone, Copy, PartialEq)]
enum Status {
    Free(usize),
    Slave(usize),
    Fixed,
}

/// Resolution of a full DOF against the constraint set.
pub enum Resolved {
    Reduced(usize),
    Fixed(f64),
}

#[derive(Debug, Clone)]
pub struct MixedSpace {
    pub vertices: Vec<Point2<f64>>,
    pub triangles: Vec<[usize; 3]>,
    pub edges: Vec<[usize; 2]>,
    /// Edge index opposite each local vertex, per triangle.
    pub tri_edges: Vec<[usize; 3]>,
    pub edge_midpoints: Vec<Point2<f64>>,
    pub n_vel_nodes: usize,
    pub n_vel_dofs: usize,
    pub n_pressure: usize,
    /// Full system size including the gauge multiplier if any.
    pub n_full: usize,
    pub n_reduced: usize,
    pub gauge: bool,
    /// Velocity node ids (vertex index, or n_vertices + edge index) carrying
    /// Dirichlet data.
    pub dirichlet_nodes: Vec<usize>,
    status: Vec<Status>,
    fixed_values: Vec<f64>,
    /// ∫ of each P1 pressure basis function (gauge weights).
    pub pressure_integral: Vec<f64>,
}

impl MixedSpace {
    /// Build a mixed space. `vertex_pairs` are periodic (slave, master)
    /// vertex identifications; `vertex_sides` carries SIDE_* bits used to
    /// match periodic boundary edges (pass `&[]` when there are no pairs).
    /// `dirichlet_edges` lists the boundary edges whose vertices and midpoints
    /// carry velocity Dirichlet data (initially zero; see [`set_dirichlet`]).
    pub fn new(
        vertices: &[Point2<f64>],
        triangles: &[[usize; 3]],
        vertex_pairs: &[(usize, usize)],
        vertex_sides: &[u8],
        dirichlet_edges: &[[usize; 2]],
        pressure_gauge: bool,
    ) -> Result<Self, FemError> {
        let nv = vertices.len();
        // Edge table in deterministic first-seen order.
        let mut edge_id: HashMap<(usize, usize), usize> = HashMap::new();
        let mut edges: Vec<[usize; 2]> = Vec::new();
        let mut tri_edges: Vec<[usize; 3]> = Vec::with_capacity(triangles.len());
        for t in triangles {
            let mut te = [0usize; 3];
            for k in 0..3 {
                let (a, b) = (t[(k + 1) % 3], t[(k + 2) % 3]);
                let key = (a.min(b), a.max(b));
                let id = *edge_id.entry(key).or_insert_with(|| {
                    edges.push([key.0, key.1]);
                    edges.len() - 1
                });
                te[k] = id;
            }
            tri_edges.push(te);
        }
        let ne = edges.len();
        let edge_midpoints: Vec<Point2<f64>> = edges
            .iter()
            .map(|e| {
                let (a, b) = (vertices[e[0]], vertices[e[1]]);
                Point2::new(0.5 * (a.x + b.x), 0.5 * (a.y + b.y))
            })
            .collect();

        let n_vel_nodes = nv + ne;
        let n_vel_dofs = 2 * n_vel_nodes;
        let n_pressure = nv;
        let n_full = n_vel_dofs + n_pressure + pressure_gauge as usize;
        let mut status = vec![Status::Free(0); n_full];

        // Dirichlet velocity nodes: endpoints and midpoints of the given edges.
        let mut dirichlet_nodes: Vec<usize> = Vec::new();
        for e in dirichlet_edges {
            let key = (e[0].min(e[1]), e[0].max(e[1]));
            let id = *edge_id
                .get(&key)
                .ok_or_else(|| FemError::InvalidConstraint(format!("no mesh edge {key:?}")))?;
            dirichlet_nodes.push(e[0]);
            dirichlet_nodes.push(e[1]);
            dirichlet_nodes.push(nv + id);
        }
        dirichlet_nodes.sort_unstable();
        dirichlet_nodes.dedup();
        for &node in &dirichlet_nodes {
            status[2 * node] = Status::Fixed;
            status[2 * node + 1] = Status::Fixed;
        }

        // Periodic vertex identifications (velocity components and pressure).
        for &(slave, master) in vertex_pairs {
            for c in 0..2 {
                let d = 2 * slave + c;
                if status[d] == Status::Fixed {
                    return Err(FemError::InvalidConstraint(format!(
                        "vertex {slave} is both Dirichlet and periodic slave"
                    )));
                }
                if !matches!(status[d], Status::Slave(_)) {
                    status[d] = Status::Slave(2 * master + c);
                }
            }
            let dp = n_vel_dofs + slave;
            if !matches!(status[dp], Status::Slave(_)) {
                status[dp] = Status::Slave(n_vel_dofs + master);
            }
        }
        // Periodic edge identifications, restricted to boundary edges lying on
        // a single slave side, matched through the side-specific vertex image.
        if !vertex_pairs.is_empty() {
            let mut images: Vec<Vec<usize>> = vec![Vec::new(); nv];
            for &(slave, master) in vertex_pairs {
                images[slave].push(master);
            }
            for (id, e) in edges.iter().enumerate() {
                let (a, b) = (e[0], e[1]);
                if a >= vertex_sides.len() || b >= vertex_sides.len() {
                    continue;
                }
                let common = vertex_sides[a] & vertex_sides[b] & (SIDE_RIGHT | SIDE_TOP);
                if common == 0 || images[a].is_empty() || images[b].is_empty() {
                    continue;
                }
                let mut master_edge = None;
                'outer: for &ma in &images[a] {
                    for &mb in &images[b] {
                        let key = (ma.min(mb), ma.max(mb));
                        if let Some(&mid) = edge_id.get(&key) {
                            master_edge = Some(mid);
                            break 'outer;
                        }
                    }
                }
                let mid = master_edge.ok_or_else(|| {
                    FemError::InvalidConstraint(format!("periodic image of edge {e:?} not found"))
                })?;
                for c in 0..2 {
                    status[2 * (nv + id) + c] = Status::Slave(2 * (nv + mid) + c);
                }
            }
        }

        // Reduced numbering over free DOFs (gauge multiplier is always free).
        let mut n_reduced = 0;
        for s in status.iter_mut() {
            if matches!(s, Status::Free(_)) {
                *s = Status::Free(n_reduced);
                n_reduced += 1;
            }
        }

        // Gauge weights ∫ q_i dy (P1: area/3 per incident triangle).
        let mut pressure_integral = vec![0.0; n_pressure];
        for t in triangles {
            let area = 0.5
                * crate::geometry::orient(&vertices[t[0]], &vertices[t[1]], &vertices[t[2]]);
            for &v in t {
                pressure_integral[v] += area / 3.0;
            }
        }

        Ok(MixedSpace {
            vertices: vertices.to_vec(),
            triangles: triangles.to_vec(),
            edges,
            tri_edges,
            edge_midpoints,
            n_vel_nodes,
            n_vel_dofs,
            n_pressure,
            n_full,
            n_reduced,
            gauge: pressure_gauge,
            dirichlet_nodes,
            status,
            fixed_values: vec![0.0; n_full],
            pressure_integral,
        })
    }

    pub fn velocity_node_position(&self, node: usize) -> Point2<f64> {
        if node < self.vertices.len() {
            self.vertices[node]
        } else {
            self.edge_midpoints[node - self.vertices.len()]
        }
    }

    /// Set the Dirichlet velocity data by evaluating `f` at each constrained
    /// node position.
    pub fn set_dirichlet(&mut self, f: impl Fn(&Point2<f64>) -> Vector2<f64>) {
        for &node in &self.dirichlet_nodes {
            let v = f(&self.velocity_node_position(node));
            self.fixed_values[2 * node] = v.x;
            self.fixed_values[2 * node + 1] = v.y;
        }
    }

    pub fn resolve(&self, mut dof: usize) -> Resolved {
        loop {
            match self.status[dof] {
                Status::Free(r) => return Resolved::Reduced(r),
                Status::Slave(m) => dof = m,
                Status::Fixed => return Resolved::Fixed(self.fixed_values[dof]),
            }
        }
    }

    /// Reduce a full-size triplet system and right-hand side to the free DOFs.
    pub fn reduce_system(
        &self,
        triplets: &[(usize, usize, f64)],
        rhs_full: &[f64],
    ) -> (Vec<(usize, usize, f64)>, Vec<f64>) {
        assert_eq!(rhs_full.len(), self.n_full);
        let mut reduced = Vec::with_capacity(triplets.len());
        let mut rhs = vec![0.0; self.n_reduced];
        for (i, &b) in rhs_full.iter().enumerate() {
            if let Resolved::Reduced(r) = self.resolve(i) {
                rhs[r] += b;
            }
        }
        for &(i, j, v) in triplets {
            let Resolved::Reduced(ri) = self.resolve(i) else { continue };
            match self.resolve(j) {
                Resolved::Reduced(rj) => reduced.push((ri, rj, v)),
                Resolved::Fixed(val) => rhs[ri] -= v * val,
            }
        }
        (reduced, rhs)
    }

    /// Expand a reduced solution to the full DOF vector (slaves copy masters,
    /// fixed DOFs carry their data).
    pub fn expand(&self, reduced: &[f64]) -> Vec<f64> {
        (0..self.n_full)
            .map(|dof| match self.resolve(dof) {
                Resolved::Reduced(r) => reduced[r],
                Resolved::Fixed(v) => v,
            })
            .collect()
    }

    /// Build and solve helper: reduced sparse matrix from full triplets.
    pub fn reduced_matrix(
        &self,
        triplets: &[(usize, usize, f64)],
    ) -> Result<SparseMatrix, crate::sparse::SparseError> {
        let (red, _) = self.reduce_system(triplets, &vec![0.0; self.n_full]);
        SparseMatrix::from_triplets(self.n_reduced, self.n_reduced, &red)
    }
}

/// Discrete velocity/pressure pair with its time stamp.
#[derive(Debug, Clone)]
pub struct MixedStokesState {
    /// Full velocity coefficient vector (2 per node, vertices then midpoints).
    pub velocity: Vec<f64>,
    /// Full pressure coefficient vector (one per vertex).
    pub pressure: Vec<f64>,
    pub time: f64,
}
