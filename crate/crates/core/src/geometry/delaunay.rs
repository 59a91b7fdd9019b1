//! Minimal deterministic Bowyer–Watson triangulation with constrained-edge
//! recovery by flipping. Geared towards the meshes this crate builds: a few
//! thousand well-separated points; everything is O(n) scans per insertion.

use nalgebra::Point2;

/// Twice the signed area of triangle (a, b, c); positive when CCW.
pub fn orient(a: &Point2<f64>, b: &Point2<f64>, c: &Point2<f64>) -> f64 {
    (b.x - a.x) * (c.y - a.y) - (b.y - a.y) * (c.x - a.x)
}

/// Positive when `d` lies strictly inside the circumcircle of CCW (a, b, c).
fn incircle(a: &Point2<f64>, b: &Point2<f64>, c: &Point2<f64>, d: &Point2<f64>) -> f64 {
    let (adx, ady) = (a.x - d.x, a.y - d.y);
    let (bdx, bdy) = (b.x - d.x, b.y - d.y);
    let (cdx, cdy) = (c.x - d.x, c.y - d.y);
    let ad = adx * adx + ady * ady;
    let bd = bdx * bdx + bdy * bdy;
    let cd = cdx * cdx + cdy * cdy;
    adx * (bdy * cd - bd * cdy) - ady * (bdx * cd - bd * cdx) + ad * (bdx * cdy - bdy * cdx)
}

pub struct Triangulation {
    pub points: Vec<Point2<f64>>,
    pub triangles: Vec<[usize; 3]>,
}

impl Triangulation {
    pub fn has_edge(&self, a: usize, b: usize) -> bool {
        self.triangles.iter().any(|t| {
            (0..3).any(|k| {
                let (u, v) = (t[k], t[(k + 1) % 3]);
                (u == a && v == b) || (u == b && v == a)
            })
        })
    }
}

/// Delaunay triangulation of `points` in insertion order. Points exactly on an
/// existing edge are supported (the degenerate fan triangle is skipped, which
/// splits the edge).
pub fn triangulate(points: &[Point2<f64>]) -> Triangulation {
    let n = points.len();
    assert!(n >= 3, "need at least three points");
    let mut pts: Vec<Point2<f64>> = points.to_vec();
    // Enclosing super-triangle, comfortably outside the data.
    let (mut lo, mut hi) = (pts[0], pts[0]);
    for p in &pts {
        lo = Point2::new(lo.x.min(p.x), lo.y.min(p.y));
        hi = Point2::new(hi.x.max(p.x), hi.y.max(p.y));
    }
    let span = (hi.x - lo.x).max(hi.y - lo.y).max(1.0);
    let mid = Point2::new(0.5 * (lo.x + hi.x), 0.5 * (lo.y + hi.y));
    pts.push(Point2::new(mid.x - 20.0 * span, mid.y - 10.0 * span));
    pts.push(Point2::new(mid.x + 20.0 * span, mid.y - 10.0 * span));
    pts.push(Point2::new(mid.x, mid.y + 20.0 * span));

    let mut tris: Vec<[usize; 3]> = vec![[n, n + 1, n + 2]];
    let area_eps = 1e-14 * span * span;

    for p in 0..n {
        let bad: Vec<usize> = (0..tris.len())
            .filter(|&ti| {
                let [a, b, c] = tris[ti];
                // Exact cocircular quadruples (circle inclusions, symmetric
                // boundary layouts) give rounding noise around zero; a scaled
                // tolerance keeps tie triangles out of the cavity consistently.
                let s = [
                    pts[a].x - pts[p].x,
                    pts[a].y - pts[p].y,
                    pts[b].x - pts[p].x,
                    pts[b].y - pts[p].y,
                    pts[c].x - pts[p].x,
                    pts[c].y - pts[p].y,
                ]
                .into_iter()
                .fold(0.0f64, |m, v| m.max(v.abs()));
                incircle(&pts[a], &pts[b], &pts[c], &pts[p]) > 1e-11 * s * s * s * s
            })
            .collect();
        assert!(!bad.is_empty(), "insertion point outside all circumcircles");
        // Cavity boundary: edges of bad triangles that appear exactly once.
        let mut boundary: Vec<[usize; 2]> = Vec::new();
        for &ti in &bad {
            let t = tris[ti];
            for k in 0..3 {
                let e = [t[k], t[(k + 1) % 3]];
                if let Some(pos) = boundary.iter().position(|f| f[0] == e[1] && f[1] == e[0]) {
                    boundary.swap_remove(pos);
                } else {
                    boundary.push(e);
                }
            }
        }
        let mut keep: Vec<[usize; 3]> = (0..tris.len())
            .filter(|ti| !bad.contains(ti))
            .map(|ti| tris[ti])
            .collect();
        for e in boundary {
            if orient(&pts[e[0]], &pts[e[1]], &pts[p]).abs() > area_eps {
                keep.push([e[0], e[1], p]);
            }
        }
        tris = keep;
    }

    tris.retain(|t| t.iter().all(|&v| v < n));
    pts.truncate(n);
    for t in &mut tris {
        if orient(&pts[t[0]], &pts[t[1]], &pts[t[2]]) < 0.0 {
            t.swap(1, 2);
        }
    }
    Triangulation { points: pts, triangles: tris }
}

fn proper_cross(a: &Point2<f64>, b: &Point2<f64>, c: &Point2<f64>, d: &Point2<f64>) -> bool {
    let o1 = orient(a, b, c);
    let o2 = orient(a, b, d);
    let o3 = orient(c, d, a);
    let o4 = orient(c, d, b);
    o1 * o2 < 0.0 && o3 * o4 < 0.0
}

/// Force the segment (a, b) to appear as a triangulation edge by flipping the
/// edges that cross it. Returns false if recovery stalls.
pub fn recover_edge(tri: &mut Triangulation, a: usize, b: usize) -> bool {
    for _ in 0..10_000 {
        if tri.has_edge(a, b) {
            return true;
        }
        let mut flipped = false;
        // Collect candidate crossing edges (c, d), c and d distinct from a, b.
        let mut crossing: Vec<[usize; 2]> = Vec::new();
        for t in &tri.triangles {
            for k in 0..3 {
                let (c, d) = (t[k], t[(k + 1) % 3]);
                if c < d
                    && c != a
                    && c != b
                    && d != a
                    && d != b
                    && proper_cross(&tri.points[a], &tri.points[b], &tri.points[c], &tri.points[d])
                {
                    if !crossing.contains(&[c, d]) {
                        crossing.push([c, d]);
                    }
                }
            }
        }
        for [c, d] in crossing {
            if try_flip(tri, c, d) {
                flipped = true;
                break;
            }
        }
        if !flipped {
            return false;
        }
    }
    false
}

/// Flip the diagonal (c, d) of the quad formed by its two adjacent triangles,
/// if the quad is strictly convex. Returns whether a flip happened.
fn try_flip(tri: &mut Triangulation, c: usize, d: usize) -> bool {
    let mut adj: Vec<(usize, usize)> = Vec::new(); // (triangle index, opposite vertex)
    for (ti, t) in tri.triangles.iter().enumerate() {
        for k in 0..3 {
            let (u, v) = (t[k], t[(k + 1) % 3]);
            if (u == c && v == d) || (u == d && v == c) {
                adj.push((ti, t[(k + 2) % 3]));
            }
        }
    }
    if adj.len() != 2 {
        return false;
    }
    let (t1, u) = adj[0];
    let (t2, v) = adj[1];
    // Convexity: c and d strictly on opposite sides of the new diagonal (u, v).
    let s1 = orient(&tri.points[u], &tri.points[v], &tri.points[c]);
    let s2 = orient(&tri.points[u], &tri.points[v], &tri.points[d]);
    if s1 * s2 >= 0.0 {
        return false;
    }
    let mk = |x: usize, y: usize, z: usize, tri: &Triangulation| -> [usize; 3] {
        if orient(&tri.points[x], &tri.points[y], &tri.points[z]) > 0.0 {
            [x, y, z]
        } else {
            [x, z, y]
        }
    };
    let n1 = mk(u, v, c, tri);
    let n2 = mk(u, v, d, tri);
    tri.triangles[t1] = n1;
    tri.triangles[t2] = n2;
    true
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn triangulates_square_grid() {
        let mut pts = Vec::new();
        for j in 0..4 {
            for i in 0..4 {
                // slight shear breaks cocircularity
                pts.push(Point2::new(i as f64 + 0.01 * j as f64, j as f64));
            }
        }
        let tri = triangulate(&pts);
        // A triangulation of a convex 16-point set with 12 hull points: 2*16 - 2 - 12 = 18
        assert_eq!(tri.triangles.len(), 18);
        let area: f64 = tri
            .triangles
            .iter()
            .map(|t| 0.5 * orient(&tri.points[t[0]], &tri.points[t[1]], &tri.points[t[2]]))
            .sum();
        assert!((area - 9.0).abs() < 1e-10, "area {area}");
    }

    #[test]
    fn recovers_forced_edge() {
        let pts = vec![
            Point2::new(0.0, 0.0),
            Point2::new(2.1, 0.1),
            Point2::new(4.0, 0.0),
            Point2::new(2.0, -1.5),
            Point2::new(2.0, 1.7),
        ];
        let mut tri = triangulate(&pts);
        assert!(recover_edge(&mut tri, 3, 4));
        assert!(tri.has_edge(3, 4));
    }

    #[test]
    fn on_edge_insertion_splits() {
        let pts = vec![
            Point2::new(0.0, 0.0),
            Point2::new(2.0, 0.0),
            Point2::new(1.0, 2.0),
            Point2::new(1.0, 0.0), // exactly on the bottom edge
        ];
        let tri = triangulate(&pts);
        assert_eq!(tri.triangles.len(), 2);
        let area: f64 = tri
            .triangles
            .iter()
            .map(|t| 0.5 * orient(&tri.points[t[0]], &tri.points[t[1]], &tri.points[t[2]]))
            .sum();
        assert!((area - 2.0).abs() < 1e-12);
    }
}
