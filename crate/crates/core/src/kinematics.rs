//! Microstructure evolution maps on the reference cell and the transformation
//! coefficients they induce.
//!
//! The map family is a radial blend: a monotone cubic Hermite profile ρ moves
//! the inclusion boundary from its reference radius r₀ to the prescribed
//! radius r(t,x), becomes the identity at the cutoff radius R_c, and leaves a
//! neighbourhood of ∂Y untouched (so displacements extend periodically). All
//! Jacobian quantities — Ψ = ∂_yψ, J = det Ψ, A = Adj(Ψ), their time
//! derivatives and the spatial derivatives of Ψ — are hand-differentiated
//! closed forms; finite differences appear only in test oracles.

use crate::geometry::{CellGeometry, PerforatedCellMesh, GEO_MARGIN};
use crate::quadrature::triangle_degree5;
use nalgebra::{Matrix2, Point2, Vector2};
use std::f64::consts::PI;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum KinematicsError {
    #[error("point outside the admissible domain: {0}")]
    OutOfDomain(String),
    #[error("singular evolution map: J = {0:.3e} <= 0")]
    SingularMap(f64),
    #[error("radius law leaves (0, 1/2 - margin): r({t:.3}) = {r:.4}")]
    RadiusOutOfRange { t: f64, r: f64 },
    #[error("cutoff radius {0} must lie in (max radius, 1/2)")]
    InvalidCutoff(f64),
    #[error("radial profile loses monotonicity at t = {t:.3} (min slope {slope:.3e})")]
    MonotonicityViolation { t: f64, slope: f64 },
}

/// Parametric radius laws r(t, x).
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RadiusLaw {
    /// r = r₀ (identity evolution).
    Constant,
    /// r = r₀ + a·t.
    Linear { rate: f64 },
    /// r = r₀ + a·sin(ω t).
    Sinusoidal { amplitude: f64, omega: f64 },
    /// r = r₀ + a·t·g(x), g(x) = sin(πx₁)sin(πx₂).
    MacroModulated { rate: f64 },
}

impl RadiusLaw {
    pub fn is_identity(&self) -> bool {
        matches!(self, RadiusLaw::Constant)
            || matches!(self, RadiusLaw::Linear { rate } if *rate == 0.0)
            || matches!(self, RadiusLaw::Sinusoidal { amplitude, .. } if *amplitude == 0.0)
            || matches!(self, RadiusLaw::MacroModulated { rate } if *rate == 0.0)
    }

    /// Whether r(t, ·) actually varies with the macro point.
    pub fn is_macro_dependent(&self) -> bool {
        matches!(self, RadiusLaw::MacroModulated { rate } if *rate != 0.0)
    }
}

fn macro_modulation(x: &Point2<f64>) -> f64 {
    (PI * x.x).sin() * (PI * x.y).sin()
}

/// The map family ψ₀(t, x, ·) with its admissibility data.
#[derive(Debug, Clone)]
pub struct MicrostructureEvolution {
    pub geometry: CellGeometry,
    pub law: RadiusLaw,
    /// Radius beyond which ψ₀(t, x, ·) is the identity.
    pub cutoff_outer: f64,
    pub t_final: f64,
    /// Lower bound on J observed on the admissibility sampling grid.
    pub c_j: f64,
}

impl MicrostructureEvolution {
    /// Validate the law on a (t, x, s) sampling grid: radius range, cutoff,
    /// and monotonicity of the (possibly clamped) Hermite profile.
    pub fn new(
        geometry: CellGeometry,
        law: RadiusLaw,
        cutoff_outer: f64,
        t_final: f64,
    ) -> Result<Self, KinematicsError> {
        let mut ev =
            MicrostructureEvolution { geometry, law, cutoff_outer, t_final, c_j: f64::INFINITY };
        let mut r_max: f64 = 0.0;
        let xs: Vec<Point2<f64>> = (0..5)
            .flat_map(|i| (0..5).map(move |j| Point2::new(0.125 + 0.1875 * i as f64, 0.125 + 0.1875 * j as f64)))
            .collect();
        for k in 0..=40 {
            let t = t_final * k as f64 / 40.0;
            for x in &xs {
                let (r, _) = ev.radius(t, x);
                if !(r > 0.0 && r < 0.5 - GEO_MARGIN) {
                    return Err(KinematicsError::RadiusOutOfRange { t, r });
                }
                r_max = r_max.max(r);
                let profile = ev.profile(t, x);
                let r0 = geometry.inclusion_radius_ref;
                for m in 0..=50 {
                    let s = r0 + (cutoff_outer - r0) * m as f64 / 50.0;
                    let (_, dr, _, _, _) = profile.eval(s);
                    if dr <= 0.0 {
                        return Err(KinematicsError::MonotonicityViolation { t, slope: dr });
                    }
                    let (rho, drho, ..) = profile.eval(s);
                    ev.c_j = ev.c_j.min(drho * rho / s);
                }
            }
        }
        if !(cutoff_outer > r_max && cutoff_outer < 0.5) {
            return Err(KinematicsError::InvalidCutoff(cutoff_outer));
        }
        Ok(ev)
    }

    /// r(t, x) and its time derivative.
    pub fn radius(&self, t: f64, x: &Point2<f64>) -> (f64, f64) {
        let r0 = self.geometry.inclusion_radius_ref;
        match self.law {
            RadiusLaw::Constant => (r0, 0.0),
            RadiusLaw::Linear { rate } => (r0 + rate * t, rate),
            RadiusLaw::Sinusoidal { amplitude, omega } => {
                (r0 + amplitude * (omega * t).sin(), amplitude * omega * (omega * t).cos())
            }
            RadiusLaw::MacroModulated { rate } => {
                let g = macro_modulation(x);
                (r0 + rate * t * g, rate * g)
            }
        }
    }

    fn profile(&self, t: f64, x: &Point2<f64>) -> RadialProfile {
        let (r, rdot) = self.radius(t, x);
        RadialProfile::new(self.geometry.inclusion_radius_ref, self.cutoff_outer, r, rdot)
    }

    fn check_domain(&self, t: f64, y: &Point2<f64>) -> Result<(), KinematicsError> {
        if !(0.0..=self.t_final + 1e-12).contains(&t) {
            return Err(KinematicsError::OutOfDomain(format!("t = {t}")));
        }
        let tol = 1e-9;
        if !(-tol..=1.0 + tol).contains(&y.x) || !(-tol..=1.0 + tol).contains(&y.y) {
            return Err(KinematicsError::OutOfDomain(format!("y = ({}, {})", y.x, y.y)));
        }
        Ok(())
    }

    /// ψ₀(t, x, y).
    pub fn evaluate_map(
        &self,
        t: f64,
        x: &Point2<f64>,
        y: &Point2<f64>,
    ) -> Result<Point2<f64>, KinematicsError> {
        self.check_domain(t, y)?;
        let c = self.geometry.inclusion_center;
        let d = y - c;
        let s = d.norm();
        if s < 1e-14 {
            return Ok(c);
        }
        if s >= self.cutoff_outer {
            return Ok(*y);
        }
        let (rho, ..) = self.profile(t, x).eval(s);
        Ok(c + d * (rho / s))
    }

    /// All transformation coefficients at (t, x, y).
    pub fn jacobians(
        &self,
        t: f64,
        x: &Point2<f64>,
        y: &Point2<f64>,
    ) -> Result<TransformJacobians, KinematicsError> {
        self.check_domain(t, y)?;
        let c = self.geometry.inclusion_center;
        let d = y - c;
        let s = d.norm();
        if s >= self.cutoff_outer || s < 1e-14 {
            // Identity region (the exact centre is a fixed point as well).
            return Ok(TransformJacobians::identity(*y));
        }
        let (rho, drho, d2rho, dt_rho, dt_drho) = self.profile(t, x).eval(s);
        let e = d / s;
        let g = rho / s;
        let dgds = (drho - g) / s;
        let dt_g = dt_rho / s;
        let det = drho * g;
        if det <= 0.0 {
            return Err(KinematicsError::SingularMap(det));
        }
        let ee = e * e.transpose();
        let id = Matrix2::identity();
        let tang = id - ee;
        let psi_grad = ee * drho + tang * g;
        let adj = ee * g + tang * drho;
        let dt_psi_grad = ee * dt_drho + tang * dt_g;
        let dt_adj = ee * dt_g + tang * dt_drho;
        let dt_det = dt_drho * g + drho * dt_g;
        // ∂Ψ_ij/∂y_k = dg·e_k·δ_ij + (ρ″−dg)·e_i e_j e_k
        //             + (ρ′−g)·[(δ_ik−e_i e_k)e_j + e_i(δ_jk−e_j e_k)]/s
        let mut dy_psi_grad = [Matrix2::zeros(), Matrix2::zeros()];
        for k in 0..2 {
            let mut m = Matrix2::zeros();
            for i in 0..2 {
                for j in 0..2 {
                    let dik = if i == k { 1.0 } else { 0.0 };
                    let djk = if j == k { 1.0 } else { 0.0 };
                    m[(i, j)] = dgds * e[k] * if i == j { 1.0 } else { 0.0 }
                        + (d2rho - dgds) * e[i] * e[j] * e[k]
                        + (drho - g) * ((dik - e[i] * e[k]) * e[j] + e[i] * (djk - e[j] * e[k]))
                            / s;
                }
            }
            dy_psi_grad[k] = m;
        }
        // ∂J/∂y = d/ds(ρ′·ρ/s)·e
        let djds = d2rho * g + drho * dgds;
        let dy_det = e * djds;
        Ok(TransformJacobians {
            psi: c + d * g,
            dt_psi: e * dt_rho,
            psi_grad,
            det,
            adj,
            dt_psi_grad,
            dt_det,
            dt_adj,
            dy_psi_grad,
            dy_det,
        })
    }

    /// Analytic porosity Θ(t, x) = 1 − π r(t,x)² of the deformed cell.
    pub fn porosity_analytic(&self, t: f64, x: &Point2<f64>) -> f64 {
        let (r, _) = self.radius(t, x);
        1.0 - PI * r * r
    }

    /// Analytic porosity rate dΘ/dt = −2π r ṙ.
    pub fn porosity_rate_analytic(&self, t: f64, x: &Point2<f64>) -> f64 {
        let (r, rdot) = self.radius(t, x);
        -2.0 * PI * r * rdot
    }
}

/// Adjugate of a 2×2 matrix (a linear map on the entries).
pub fn adjugate(m: &Matrix2<f64>) -> Matrix2<f64> {
    Matrix2::new(m[(1, 1)], -m[(0, 1)], -m[(1, 0)], m[(0, 0)])
}

/// All transformation coefficients of ψ₀(t, x, ·) at one point.
#[derive(Debug, Clone, Copy)]
pub struct TransformJacobians {
    /// ψ(y).
    pub psi: Point2<f64>,
    /// ∂_tψ(y).
    pub dt_psi: Vector2<f64>,
    /// Ψ = ∂_yψ.
    pub psi_grad: Matrix2<f64>,
    /// J = det Ψ.
    pub det: f64,
    /// A = Adj(Ψ).
    pub adj: Matrix2<f64>,
    pub dt_psi_grad: Matrix2<f64>,
    pub dt_det: f64,
    pub dt_adj: Matrix2<f64>,
    /// ∂Ψ/∂y_k.
    pub dy_psi_grad: [Matrix2<f64>; 2],
    /// ∂J/∂y.
    pub dy_det: Vector2<f64>,
}

impl TransformJacobians {
    pub fn identity(y: Point2<f64>) -> Self {
        TransformJacobians {
            psi: y,
            dt_psi: Vector2::zeros(),
            psi_grad: Matrix2::identity(),
            det: 1.0,
            adj: Matrix2::identity(),
            dt_psi_grad: Matrix2::zeros(),
            dt_det: 0.0,
            dt_adj: Matrix2::zeros(),
            dy_psi_grad: [Matrix2::zeros(), Matrix2::zeros()],
            dy_det: Vector2::zeros(),
        }
    }

    /// A⁻¹ = Ψ / J (in 2D, Adj(Adj(M)) = M).
    pub fn a_inv(&self) -> Matrix2<f64> {
        self.psi_grad / self.det
    }

    /// Ψ⁻¹ = A / J.
    pub fn psi_grad_inv(&self) -> Matrix2<f64> {
        self.adj / self.det
    }

    /// ∂A/∂y_k via the linearity of the adjugate.
    pub fn dy_adj(&self, k: usize) -> Matrix2<f64> {
        adjugate(&self.dy_psi_grad[k])
    }

    /// ∂(A⁻¹)/∂y_k = ∂Ψ/∂y_k / J − Ψ ∂J/∂y_k / J².
    pub fn dy_a_inv(&self, k: usize) -> Matrix2<f64> {
        self.dy_psi_grad[k] / self.det - self.psi_grad * (self.dy_det[k] / (self.det * self.det))
    }

    /// ∂_t(A⁻¹) = ∂_tΨ / J − Ψ ∂_tJ / J².
    pub fn dt_a_inv(&self) -> Matrix2<f64> {
        self.dt_psi_grad / self.det - self.psi_grad * (self.dt_det / (self.det * self.det))
    }

    /// div_y A, i.e. (Σ_k ∂A_ik/∂y_k)_i — vanishes identically (Piola).
    pub fn piola_divergence(&self) -> Vector2<f64> {
        let d0 = self.dy_adj(0);
        let d1 = self.dy_adj(1);
        Vector2::new(d0[(0, 0)] + d1[(0, 1)], d0[(1, 0)] + d1[(1, 1)])
    }
}

/// Monotone cubic Hermite radial profile for one (t, x).
struct RadialProfile {
    r0: f64,
    rc: f64,
    r: f64,
    rdot: f64,
    m0: f64,
    m0dot: f64,
}

impl RadialProfile {
    fn new(r0: f64, rc: f64, r: f64, rdot: f64) -> Self {
        let secant = (rc - r) / (rc - r0);
        let (m0, m0dot) = if r / r0 <= 3.0 * secant {
            (r / r0, rdot / r0)
        } else {
            // Fritsch–Carlson clamp keeps the interpolant monotone.
            (3.0 * secant, -3.0 * rdot / (rc - r0))
        };
        RadialProfile { r0, rc, r, rdot, m0, m0dot }
    }

    /// (ρ, ρ′, ρ″, ∂_tρ, ∂_tρ′) at arc-length parameter s.
    fn eval(&self, s: f64) -> (f64, f64, f64, f64, f64) {
        if s >= self.rc {
            return (s, 1.0, 0.0, 0.0, 0.0);
        }
        if s < 0.5 * self.r0 {
            // Linear core; only ever sampled inside the solid inclusion.
            let k = self.r / self.r0;
            return (s * k, k, 0.0, s * self.rdot / self.r0, self.rdot / self.r0);
        }
        let l = self.rc - self.r0;
        let tau = (s - self.r0) / l;
        let (t2, t3) = (tau * tau, tau * tau * tau);
        let h00 = 2.0 * t3 - 3.0 * t2 + 1.0;
        let h10 = t3 - 2.0 * t2 + tau;
        let h01 = -2.0 * t3 + 3.0 * t2;
        let h11 = t3 - t2;
        let d00 = 6.0 * t2 - 6.0 * tau;
        let d10 = 3.0 * t2 - 4.0 * tau + 1.0;
        let d01 = -6.0 * t2 + 6.0 * tau;
        let d11 = 3.0 * t2 - 2.0 * tau;
        let s00 = 12.0 * tau - 6.0;
        let s10 = 6.0 * tau - 4.0;
        let s01 = -12.0 * tau + 6.0;
        let s11 = 6.0 * tau - 2.0;
        let rho = h00 * self.r + h10 * l * self.m0 + h01 * self.rc + h11 * l;
        let drho = (d00 * self.r + d10 * l * self.m0 + d01 * self.rc + d11 * l) / l;
        let d2rho = (s00 * self.r + s10 * l * self.m0 + s01 * self.rc + s11 * l) / (l * l);
        let dt_rho = h00 * self.rdot + h10 * l * self.m0dot;
        let dt_drho = (d00 * self.rdot + d10 * l * self.m0dot) / l;
        (rho, drho, d2rho, dt_rho, dt_drho)
    }
}

/// Piola push-forward û(y) = A(y)·u(ψ(y)) of a field on the deformed cell.
pub fn piola_push(
    ev: &MicrostructureEvolution,
    t: f64,
    x: &Point2<f64>,
    y: &Point2<f64>,
    u: impl Fn(&Point2<f64>) -> Vector2<f64>,
) -> Result<Vector2<f64>, KinematicsError> {
    let jac = ev.jacobians(t, x, y)?;
    Ok(jac.adj * u(&jac.psi))
}

/// Porosity by quadrature: Θ(t, x) = ∫_{Y*} J₀ dy over the reference mesh.
pub fn porosity(
    ev: &MicrostructureEvolution,
    mesh: &PerforatedCellMesh,
    t: f64,
    x: &Point2<f64>,
) -> Result<f64, KinematicsError> {
    integrate_jacobian(ev, mesh, t, x, |jac| jac.det)
}

/// Porosity by a polar-grid Gauss quadrature exact to machine precision for
/// smooth profiles: the map is the identity outside the cut-off circle, so
/// Θ = 1 − π R_c² + ∫₀^{2π}∫_{r₀}^{R_c} J₀(s, φ) s ds dφ. The mesh-free rule
/// resolves the deformation annulus independently of any triangulation.
pub fn porosity_polar(
    ev: &MicrostructureEvolution,
    t: f64,
    x: &Point2<f64>,
    panels: usize,
) -> Result<f64, KinematicsError> {
    integrate_annulus(ev, t, x, panels, |jac| jac.det)
        .map(|v| 1.0 - PI * ev.cutoff_outer * ev.cutoff_outer + v)
}

/// Porosity rate by the same polar-grid quadrature: dΘ/dt = ∫ ∂_tJ₀ dy.
pub fn porosity_rate_polar(
    ev: &MicrostructureEvolution,
    t: f64,
    x: &Point2<f64>,
    panels: usize,
) -> Result<f64, KinematicsError> {
    integrate_annulus(ev, t, x, panels, |jac| jac.dt_det)
}

fn integrate_annulus(
    ev: &MicrostructureEvolution,
    t: f64,
    x: &Point2<f64>,
    panels: usize,
    f: impl Fn(&TransformJacobians) -> f64,
) -> Result<f64, KinematicsError> {
    let c = ev.geometry.inclusion_center;
    let r0 = ev.geometry.inclusion_radius_ref;
    let rc = ev.cutoff_outer;
    let rule = crate::quadrature::segment_gauss3();
    let (ds, dphi) = ((rc - r0) / panels as f64, 2.0 * PI / panels as f64);
    let mut total = 0.0;
    for i in 0..panels {
        for j in 0..panels {
            for (ts, ws) in rule {
                let s = r0 + (i as f64 + ts) * ds;
                for (tp, wp) in rule {
                    let phi = (j as f64 + tp) * dphi;
                    let y = Point2::new(c.x + s * phi.cos(), c.y + s * phi.sin());
                    let jac = ev.jacobians(t, x, &y)?;
                    total += ws * wp * ds * dphi * s * f(&jac);
                }
            }
        }
    }
    Ok(total)
}

/// Porosity rate by quadrature: dΘ/dt = ∫_{Y*} ∂_tJ₀ dy.
pub fn porosity_rate(
    ev: &MicrostructureEvolution,
    mesh: &PerforatedCellMesh,
    t: f64,
    x: &Point2<f64>,
) -> Result<f64, KinematicsError> {
    integrate_jacobian(ev, mesh, t, x, |jac| jac.dt_det)
}

fn integrate_jacobian(
    ev: &MicrostructureEvolution,
    mesh: &PerforatedCellMesh,
    t: f64,
    x: &Point2<f64>,
    f: impl Fn(&TransformJacobians) -> f64,
) -> Result<f64, KinematicsError> {
    let rule = triangle_degree5();
    let mut total = 0.0;
    for tri in &mesh.triangles {
        let [a, b, c] = [mesh.vertices[tri[0]], mesh.vertices[tri[1]], mesh.vertices[tri[2]]];
        let area = 0.5 * crate::geometry::orient(&a, &b, &c);
        for node in &rule {
            let y = Point2::new(
                node.bary[0] * a.x + node.bary[1] * b.x + node.bary[2] * c.x,
                node.bary[0] * a.y + node.bary[1] * b.y + node.bary[2] * c.y,
            );
            total += area * node.weight * f(&ev.jacobians(t, x, &y)?);
        }
    }
    Ok(total)
}

/// Pressure-corrector shift q̂₁ ↦ q̂₁ − (ψ₀ − y)·∇_x q̂ on cell-mesh vertices.
pub fn pressure_corrector_shift(
    q1: &[f64],
    grad_p: &Vector2<f64>,
    ev: &MicrostructureEvolution,
    mesh: &PerforatedCellMesh,
    t: f64,
    x: &Point2<f64>,
) -> Result<Vec<f64>, KinematicsError> {
    shift_impl(q1, grad_p, ev, mesh, t, x, -1.0)
}

/// Inverse of [`pressure_corrector_shift`].
pub fn pressure_corrector_unshift(
    q1: &[f64],
    grad_p: &Vector2<f64>,
    ev: &MicrostructureEvolution,
    mesh: &PerforatedCellMesh,
    t: f64,
    x: &Point2<f64>,
) -> Result<Vec<f64>, KinematicsError> {
    shift_impl(q1, grad_p, ev, mesh, t, x, 1.0)
}

fn shift_impl(
    q1: &[f64],
    grad_p: &Vector2<f64>,
    ev: &MicrostructureEvolution,
    mesh: &PerforatedCellMesh,
    t: f64,
    x: &Point2<f64>,
    sign: f64,
) -> Result<Vec<f64>, KinematicsError> {
    assert_eq!(q1.len(), mesh.vertices.len());
    let mut out = Vec::with_capacity(q1.len());
    for (v, &q) in mesh.vertices.iter().zip(q1) {
        let psi = ev.evaluate_map(t, x, v)?;
        out.push(q + sign * (psi - v).dot(grad_p));
    }
    Ok(out)
}
