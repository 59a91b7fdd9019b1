//! Quadrature rules shared by all assembly routines.
//!
//! Everything volumetric uses the 7-point degree-5 triangle rule; curves use
//! 3-point Gauss–Legendre. Weights are normalised so that the integral over a
//! physical element is `measure * Σ w_i f(x_i)`.

/// A quadrature node on the reference triangle, in barycentric coordinates.
#[derive(Debug, Clone, Copy)]
pub struct TriNode {
    pub bary: [f64; 3],
    pub weight: f64,
}

/// 7-point rule, exact for polynomials of total degree 5. Weights sum to 1.
pub fn triangle_degree5() -> [TriNode; 7] {
    let s = 15.0_f64.sqrt();
    let a1 = (6.0 + s) / 21.0;
    let a2 = (6.0 - s) / 21.0;
    let w1 = (155.0 + s) / 1200.0;
    let w2 = (155.0 - s) / 1200.0;
    let third = 1.0 / 3.0;
    [
        TriNode { bary: [third, third, third], weight: 9.0 / 40.0 },
        TriNode { bary: [1.0 - 2.0 * a1, a1, a1], weight: w1 },
        TriNode { bary: [a1, 1.0 - 2.0 * a1, a1], weight: w1 },
        TriNode { bary: [a1, a1, 1.0 - 2.0 * a1], weight: w1 },
        TriNode { bary: [1.0 - 2.0 * a2, a2, a2], weight: w2 },
        TriNode { bary: [a2, 1.0 - 2.0 * a2, a2], weight: w2 },
        TriNode { bary: [a2, a2, 1.0 - 2.0 * a2], weight: w2 },
    ]
}

/// 3-point Gauss–Legendre rule on [0,1]; `(point, weight)`, weights sum to 1.
pub fn segment_gauss3() -> [(f64, f64); 3] {
    let d = (3.0_f64 / 5.0).sqrt() / 2.0;
    [
        (0.5 - d, 5.0 / 18.0),
        (0.5, 8.0 / 18.0),
        (0.5 + d, 5.0 / 18.0),
    ]
}
