//! Element-level and global assembly of the transformed Stokes forms.
//!
//! All matrices are returned as triplet lists in full-system DOF coordinates
//! (velocity block first, then pressure, then the optional gauge column);
//! constraint reduction happens at solve time.

use super::space::MixedSpace;
use super::FemError;
use crate::kinematics::TransformJacobians;
use crate::quadrature::triangle_degree5;
use nalgebra::{Matrix2, Point2, Vector2};

/// P2 shape values and reference gradients at a barycentric point.
/// Node order: the three vertices, then midpoints opposite each vertex.
pub fn p2_shape(bary: [f64; 3]) -> ([f64; 6], [Vector2<f64>; 6]) {
    let [l0, l1, l2] = bary;
    let n = [
        l0 * (2.0 * l0 - 1.0),
        l1 * (2.0 * l1 - 1.0),
        l2 * (2.0 * l2 - 1.0),
        4.0 * l1 * l2,
        4.0 * l2 * l0,
        4.0 * l0 * l1,
    ];
    let g0 = Vector2::new(-1.0, -1.0);
    let g1 = Vector2::new(1.0, 0.0);
    let g2 = Vector2::new(0.0, 1.0);
    let dn = [
        g0 * (4.0 * l0 - 1.0),
        g1 * (4.0 * l1 - 1.0),
        g2 * (4.0 * l2 - 1.0),
        (g1 * l2 + g2 * l1) * 4.0,
        (g2 * l0 + g0 * l2) * 4.0,
        (g0 * l1 + g1 * l0) * 4.0,
    ];
    (n, dn)
}

/// Geometry of one affine triangle: physical quadrature points, mapped P2
/// gradients, and the area-weighted quadrature weights.
struct ElementGeometry {
    nodes: [usize; 6],
    // per quadrature point: (physical point, weight·area, P2 values, P2 physical gradients)
    qp: Vec<(Point2<f64>, f64, [f64; 6], [Vector2<f64>; 6])>,
    p1: Vec<[f64; 3]>,
}

fn element_geometry(space: &MixedSpace, ti: usize) -> ElementGeometry {
    let t = space.triangles[ti];
    let te = space.tri_edges[ti];
    let nv = space.vertices.len();
    let nodes = [t[0], t[1], t[2], nv + te[0], nv + te[1], nv + te[2]];
    let (a, b, c) = (space.vertices[t[0]], space.vertices[t[1]], space.vertices[t[2]]);
    let jm = Matrix2::new(b.x - a.x, c.x - a.x, b.y - a.y, c.y - a.y);
    let det = jm.determinant();
    let area = 0.5 * det;
    let inv_t = jm.try_inverse().expect("degenerate triangle").transpose();
    let mut qp = Vec::with_capacity(7);
    let mut p1 = Vec::with_capacity(7);
    for node in triangle_degree5() {
        let y = Point2::new(
            node.bary[0] * a.x + node.bary[1] * b.x + node.bary[2] * c.x,
            node.bary[0] * a.y + node.bary[1] * b.y + node.bary[2] * c.y,
        );
        let (nval, dn) = p2_shape(node.bary);
        let mut grad = [Vector2::zeros(); 6];
        for k in 0..6 {
            grad[k] = inv_t * dn[k];
        }
        qp.push((y, node.weight * area, nval, grad));
        p1.push(node.bary);
    }
    ElementGeometry { nodes, qp, p1 }
}

/// The transformed operator matrices at one time level.
#[derive(Debug, Clone)]
pub struct TransformedOperators {
    /// Mass-like form ∫ ΨᵀA⁻¹u · φ (SPD).
    pub m: Vec<(usize, usize, f64)>,
    /// Viscous form ∫ 2 μ scale² J ∇̂ˢu : ∇̂ˢφ (symmetric PSD).
    pub a1: Vec<(usize, usize, f64)>,
    /// Transport-like terms plus ½Ṁ (non-symmetric).
    pub a2: Vec<(usize, usize, f64)>,
    /// Divergence form ∫ q div u; rows are pressure DOFs, columns velocity.
    pub b: Vec<(usize, usize, f64)>,
    pub time: f64,
}

/// Assemble all transformed operators. `coeff` evaluates the transformation
/// Jacobians at a quadrature point of the given triangle; `scale` is ε for
/// ε-domain solves and 1 on the reference cell.
pub fn assemble_operators(
    space: &MixedSpace,
    coeff: &dyn Fn(usize, &Point2<f64>) -> TransformJacobians,
    mu: f64,
    scale: f64,
    time: f64,
) -> Result<TransformedOperators, FemError> {
    let n_el = space.triangles.len();
    let mut m = Vec::with_capacity(144 * n_el);
    let mut a1 = Vec::with_capacity(144 * n_el);
    let mut a2 = Vec::with_capacity(144 * n_el);
    let mut b = Vec::with_capacity(36 * n_el);
    let visc = 2.0 * mu * scale * scale;

    for ti in 0..n_el {
        let geo = element_geometry(space, ti);
        let mut me = [[0.0f64; 12]; 12];
        let mut a1e = [[0.0f64; 12]; 12];
        let mut a2e = [[0.0f64; 12]; 12];
        let mut be = [[0.0f64; 12]; 3];
        for (iq, &(y, w, nval, grad)) in geo.qp.iter().enumerate() {
            let jac = coeff(ti, &y);
            let a_inv = jac.a_inv();
            let psi_inv = jac.psi_grad_inv();
            let psi_t = jac.psi_grad.transpose();
            let c_mass = psi_t * a_inv; // ΨᵀΨ/J, symmetric
            let c_mass_dot = jac.dt_psi_grad.transpose() * a_inv + psi_t * jac.dt_a_inv();
            let w0 = psi_inv * jac.dt_psi; // Ψ⁻¹ ∂_tψ
            let dy_ainv = [jac.dy_a_inv(0), jac.dy_a_inv(1)];
            let psi_inv_t = psi_inv.transpose();

            // Per local velocity DOF: value N e_c, gradient matrix of A⁻¹(N e_c),
            // and the transformed symmetric gradient.
            let mut sym = [Matrix2::zeros(); 12];
            let mut gw = [Matrix2::zeros(); 12];
            for ld in 0..12 {
                let (k, c) = (ld / 2, ld % 2);
                let mut g = Matrix2::zeros();
                for i in 0..2 {
                    for j in 0..2 {
                        g[(i, j)] = dy_ainv[j][(i, c)] * nval[k] + a_inv[(i, c)] * grad[k][j];
                    }
                }
                gw[ld] = g;
                let t = psi_inv_t * g;
                sym[ld] = (t + t.transpose()) * 0.5;
            }

            for lb in 0..12 {
                let (kb, cb) = (lb / 2, lb % 2);
                let val_b = Vector2::new(
                    if cb == 0 { nval[kb] } else { 0.0 },
                    if cb == 1 { nval[kb] } else { 0.0 },
                );
                // A2 trial vector: −∂_tΨᵀ(A⁻¹u) + Ψᵀ Gwᵀ(Ψ⁻¹∂_tψ) + ½ d/dt(ΨᵀA⁻¹) u
                let t_b = -jac.dt_psi_grad.transpose() * (a_inv * val_b)
                    + psi_t * (gw[lb].transpose() * w0)
                    + c_mass_dot * val_b * 0.5;
                let cm_b = c_mass * val_b;
                for la in 0..12 {
                    let (ka, ca) = (la / 2, la % 2);
                    let na = nval[ka];
                    me[la][lb] += w * na * cm_b[ca];
                    a1e[la][lb] += w * visc * jac.det * sym_dot(&sym[la], &sym[lb]);
                    a2e[la][lb] += w * na * t_b[ca];
                }
            }
            let p1 = geo.p1[iq];
            for lp in 0..3 {
                for lb in 0..12 {
                    let (kb, cb) = (lb / 2, lb % 2);
                    be[lp][lb] += w * p1[lp] * grad[kb][cb];
                }
            }
        }
        // Scatter.
        let t = space.triangles[ti];
        for la in 0..12 {
            let ga = 2 * geo.nodes[la / 2] + la % 2;
            for lb in 0..12 {
                let gb = 2 * geo.nodes[lb / 2] + lb % 2;
                m.push((ga, gb, me[la][lb]));
                a1.push((ga, gb, a1e[la][lb]));
                a2.push((ga, gb, a2e[la][lb]));
            }
        }
        for lp in 0..3 {
            let gp = space.n_vel_dofs + t[lp];
            for lb in 0..12 {
                let gb = 2 * geo.nodes[lb / 2] + lb % 2;
                b.push((gp, gb, be[lp][lb]));
            }
        }
    }
    for list in [&m, &a1, &a2, &b] {
        if list.iter().any(|e| !e.2.is_finite()) {
            return Err(FemError::AssemblyOverflow);
        }
    }
    Ok(TransformedOperators { m, a1, a2, b, time })
}

fn sym_dot(a: &Matrix2<f64>, b: &Matrix2<f64>) -> f64 {
    a[(0, 0)] * b[(0, 0)] + a[(0, 1)] * b[(0, 1)] + a[(1, 0)] * b[(1, 0)] + a[(1, 1)] * b[(1, 1)]
}

/// Force functional F(φ) = ∫ J (f∘ψ)·(A⁻¹φ) dy, as a full-size vector.
pub fn assemble_force(
    space: &MixedSpace,
    coeff: &dyn Fn(usize, &Point2<f64>) -> TransformJacobians,
    f: &dyn Fn(&Point2<f64>) -> Vector2<f64>,
) -> Vec<f64> {
    let mut rhs = vec![0.0; space.n_full];
    for ti in 0..space.triangles.len() {
        let geo = element_geometry(space, ti);
        for &(y, w, nval, _) in &geo.qp {
            let jac = coeff(ti, &y);
            let fv = f(&jac.psi);
            let coef = jac.a_inv().transpose() * fv * jac.det; // J A⁻ᵀ f
            for ld in 0..12 {
                let (k, c) = (ld / 2, ld % 2);
                rhs[2 * geo.nodes[k] + c] += w * nval[k] * coef[c];
            }
        }
    }
    rhs
}

/// Natural boundary contribution −∫ p_b φ·ν ds over the given boundary edges
/// (oriented CCW so that ν is the outward normal).
pub fn assemble_boundary_pressure(
    space: &MixedSpace,
    boundary: &[[usize; 2]],
    p_b: &dyn Fn(&Point2<f64>) -> f64,
) -> Result<Vec<f64>, FemError> {
    use crate::quadrature::segment_gauss3;
    let nv = space.vertices.len();
    let mut edge_lookup = std::collections::HashMap::new();
    for (id, e) in space.edges.iter().enumerate() {
        edge_lookup.insert((e[0], e[1]), id);
    }
    let mut rhs = vec![0.0; space.n_full];
    for e in boundary {
        let (a, b) = (space.vertices[e[0]], space.vertices[e[1]]);
        let d = b - a;
        let len = d.norm();
        let nu = Vector2::new(d.y, -d.x) / len;
        let id = *edge_lookup
            .get(&(e[0].min(e[1]), e[0].max(e[1])))
            .ok_or_else(|| FemError::InvalidConstraint(format!("no mesh edge {e:?}")))?;
        let nodes = [e[0], e[1], nv + id];
        for (tau, w) in segment_gauss3() {
            let x = Point2::new(a.x + tau * d.x, a.y + tau * d.y);
            let shape = [
                (1.0 - tau) * (1.0 - 2.0 * tau),
                tau * (2.0 * tau - 1.0),
                4.0 * tau * (1.0 - tau),
            ];
            let pb = p_b(&x);
            for k in 0..3 {
                for c in 0..2 {
                    rhs[2 * nodes[k] + c] -= w * len * pb * shape[k] * nu[c];
                }
            }
        }
    }
    Ok(rhs)
}

/// Plain vector L² mass matrix (identity coefficients).
pub fn assemble_vector_mass(space: &MixedSpace) -> Vec<(usize, usize, f64)> {
    let mut m = Vec::with_capacity(144 * space.triangles.len());
    for ti in 0..space.triangles.len() {
        let geo = element_geometry(space, ti);
        for &(_, w, nval, _) in &geo.qp {
            for la in 0..12 {
                let (ka, ca) = (la / 2, la % 2);
                for lb in 0..12 {
                    let (kb, cb) = (lb / 2, lb % 2);
                    if ca != cb {
                        continue;
                    }
                    m.push((
                        2 * geo.nodes[ka] + ca,
                        2 * geo.nodes[kb] + cb,
                        w * nval[ka] * nval[kb],
                    ));
                }
            }
        }
    }
    m
}

/// Plain componentwise vector Laplacian ∫ ∇u : ∇φ.
pub fn assemble_vector_laplacian(space: &MixedSpace) -> Vec<(usize, usize, f64)> {
    let mut k = Vec::with_capacity(144 * space.triangles.len());
    for ti in 0..space.triangles.len() {
        let geo = element_geometry(space, ti);
        for &(_, w, _, grad) in &geo.qp {
            for la in 0..12 {
                let (ka, ca) = (la / 2, la % 2);
                for lb in 0..12 {
                    let (kb, cb) = (lb / 2, lb % 2);
                    if ca != cb {
                        continue;
                    }
                    k.push((
                        2 * geo.nodes[ka] + ca,
                        2 * geo.nodes[kb] + cb,
                        w * grad[ka].dot(&grad[kb]),
                    ));
                }
            }
        }
    }
    k
}

/// Evaluate the discrete P2 velocity and its gradient at a barycentric point
/// of a triangle.
pub fn velocity_at(
    space: &MixedSpace,
    velocity: &[f64],
    ti: usize,
    bary: [f64; 3],
) -> (Vector2<f64>, Matrix2<f64>) {
    let t = space.triangles[ti];
    let te = space.tri_edges[ti];
    let nv = space.vertices.len();
    let nodes = [t[0], t[1], t[2], nv + te[0], nv + te[1], nv + te[2]];
    let (a, b, c) = (space.vertices[t[0]], space.vertices[t[1]], space.vertices[t[2]]);
    let jm = Matrix2::new(b.x - a.x, c.x - a.x, b.y - a.y, c.y - a.y);
    let inv_t = jm.try_inverse().expect("degenerate triangle").transpose();
    let (nval, dn) = p2_shape(bary);
    let mut v = Vector2::zeros();
    let mut g = Matrix2::zeros();
    for k in 0..6 {
        let grad = inv_t * dn[k];
        for cmp in 0..2 {
            let coef = velocity[2 * nodes[k] + cmp];
            v[cmp] += coef * nval[k];
            for j in 0..2 {
                g[(cmp, j)] += coef * grad[j];
            }
        }
    }
    (v, g)
}

/// Evaluate the discrete P1 pressure at a barycentric point of a triangle.
pub fn pressure_at(space: &MixedSpace, pressure: &[f64], ti: usize, bary: [f64; 3]) -> f64 {
    let t = space.triangles[ti];
    (0..3).map(|k| pressure[t[k]] * bary[k]).sum()
}
