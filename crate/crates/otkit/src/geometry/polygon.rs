//! Planar primitives: vectors, convex polygons, half-plane clipping and
//! exact low-degree quadrature over polygons.

use serde::{Deserialize, Serialize};

/// Point / vector in the plane.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "[f64; 2]", into = "[f64; 2]")]
pub struct Vec2 {
    pub x: f64,
    pub y: f64,
}

impl Vec2 {
    pub fn new(x: f64, y: f64) -> Self {
        Vec2 { x, y }
    }

    pub fn dot(self, other: Vec2) -> f64 {
        self.x * other.x + self.y * other.y
    }

    /// z-component of the cross product; positive when `other` is
    /// counterclockwise from `self`.
    pub fn cross(self, other: Vec2) -> f64 {
        self.x * other.y - self.y * other.x
    }

    pub fn norm_sq(self) -> f64 {
        self.dot(self)
    }

    pub fn norm(self) -> f64 {
        self.norm_sq().sqrt()
    }
}

impl From<[f64; 2]> for Vec2 {
    fn from(p: [f64; 2]) -> Self {
        Vec2::new(p[0], p[1])
    }
}

impl From<Vec2> for [f64; 2] {
    fn from(v: Vec2) -> Self {
        [v.x, v.y]
    }
}

impl std::ops::Add for Vec2 {
    type Output = Vec2;
    fn add(self, o: Vec2) -> Vec2 {
        Vec2::new(self.x + o.x, self.y + o.y)
    }
}

impl std::ops::Sub for Vec2 {
    type Output = Vec2;
    fn sub(self, o: Vec2) -> Vec2 {
        Vec2::new(self.x - o.x, self.y - o.y)
    }
}

impl std::ops::Mul<f64> for Vec2 {
    type Output = Vec2;
    fn mul(self, s: f64) -> Vec2 {
        Vec2::new(self.x * s, self.y * s)
    }
}

/// Closed half-plane { x : normal . x <= offset }.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HalfPlane {
    pub normal: Vec2,
    pub offset: f64,
}

impl HalfPlane {
    pub fn contains(&self, p: Vec2, tol: f64) -> bool {
        self.normal.dot(p) - self.offset <= tol
    }
}

/// Provenance of a cell edge: a piece of the domain boundary, or a piece of
/// the bisector against another site.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EdgeLabel {
    Boundary,
    Bisector(usize),
}

/// Convex polygon whose edge starting at vertex `k` carries `labels[k]`.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledPolygon {
    pub vertices: Vec<Vec2>,
    pub labels: Vec<EdgeLabel>,
}

impl LabeledPolygon {
    pub fn from_boundary(vertices: Vec<Vec2>) -> Self {
        let labels = vec![EdgeLabel::Boundary; vertices.len()];
        LabeledPolygon { vertices, labels }
    }

    pub fn is_empty(&self) -> bool {
        self.vertices.len() < 3
    }

    pub fn area(&self) -> f64 {
        signed_area(&self.vertices)
    }

    /// Clip by a half-plane. Newly created edge segments along the clip line
    /// carry `label`.
    pub fn clip(&self, hp: &HalfPlane, label: EdgeLabel) -> LabeledPolygon {
        let n = self.vertices.len();
        if n == 0 {
            return self.clone();
        }
        let side: Vec<f64> = self.vertices.iter().map(|v| hp.normal.dot(*v) - hp.offset).collect();
        let mut vertices = Vec::with_capacity(n + 1);
        let mut labels = Vec::with_capacity(n + 1);
        for i in 0..n {
            let j = (i + 1) % n;
            let (si, sj) = (side[i], side[j]);
            let inside_i = si <= 0.0;
            let inside_j = sj <= 0.0;
            if inside_i {
                vertices.push(self.vertices[i]);
                if inside_j {
                    labels.push(self.labels[i]);
                } else {
                    // Leaving: the edge is cut, then the boundary runs along
                    // the clip line.
                    labels.push(self.labels[i]);
                    vertices.push(intersect(self.vertices[i], self.vertices[j], si, sj));
                    labels.push(label);
                }
            } else if inside_j {
                // Entering: resume on the original edge.
                vertices.push(intersect(self.vertices[i], self.vertices[j], si, sj));
                labels.push(self.labels[i]);
            }
        }
        dedup_consecutive(LabeledPolygon { vertices, labels })
    }
}

fn intersect(a: Vec2, b: Vec2, sa: f64, sb: f64) -> Vec2 {
    let t = sa / (sa - sb);
    a + (b - a) * t
}

/// Remove near-duplicate consecutive vertices. The later vertex of a
/// coincident pair is dropped and its outgoing-edge label moves to the
/// survivor, so edge directions stay labeled correctly.
fn dedup_consecutive(poly: LabeledPolygon) -> LabeledPolygon {
    let n = poly.vertices.len();
    if n == 0 {
        return poly;
    }
    let scale = poly
        .vertices
        .iter()
        .map(|v| v.x.abs().max(v.y.abs()))
        .fold(1.0, f64::max);
    let tol_sq = (1e-14 * scale) * (1e-14 * scale);
    let mut vertices: Vec<Vec2> = Vec::with_capacity(n);
    let mut labels: Vec<EdgeLabel> = Vec::with_capacity(n);
    for (v, l) in poly.vertices.into_iter().zip(poly.labels) {
        if let Some(last) = vertices.last() {
            if (*last - v).norm_sq() <= tol_sq {
                *labels.last_mut().unwrap() = l;
                continue;
            }
        }
        vertices.push(v);
        labels.push(l);
    }
    // Wrap-around duplicate: its outgoing edge is the zero-length closing
    // edge, so the label goes with it.
    while vertices.len() >= 2 {
        let first = vertices[0];
        let last = *vertices.last().unwrap();
        if (first - last).norm_sq() <= tol_sq {
            vertices.pop();
            labels.pop();
        } else {
            break;
        }
    }
    if vertices.len() < 3 {
        return LabeledPolygon { vertices: Vec::new(), labels: Vec::new() };
    }
    LabeledPolygon { vertices, labels }
}

/// Signed area (positive for counterclockwise orientation).
pub fn signed_area(vertices: &[Vec2]) -> f64 {
    if vertices.len() < 3 {
        return 0.0;
    }
    let mut twice = 0.0;
    for i in 0..vertices.len() {
        let a = vertices[i];
        let b = vertices[(i + 1) % vertices.len()];
        twice += a.cross(b);
    }
    0.5 * twice
}

pub fn is_convex_ccw(vertices: &[Vec2]) -> bool {
    let n = vertices.len();
    if n < 3 {
        return false;
    }
    let scale_sq = vertices.iter().map(|v| v.norm_sq()).fold(1.0, f64::max);
    for i in 0..n {
        let a = vertices[i];
        let b = vertices[(i + 1) % n];
        let c = vertices[(i + 2) % n];
        if (b - a).cross(c - b) < -1e-12 * scale_sq {
            return false;
        }
    }
    signed_area(vertices) > 0.0
}

/// Clip a plain convex polygon against a half-plane.
pub fn clip_halfplane(vertices: &[Vec2], hp: &HalfPlane) -> Vec<Vec2> {
    let n = vertices.len();
    let mut out = Vec::with_capacity(n + 1);
    for i in 0..n {
        let j = (i + 1) % n;
        let si = hp.normal.dot(vertices[i]) - hp.offset;
        let sj = hp.normal.dot(vertices[j]) - hp.offset;
        if si <= 0.0 {
            out.push(vertices[i]);
            if sj > 0.0 {
                out.push(intersect(vertices[i], vertices[j], si, sj));
            }
        } else if sj <= 0.0 {
            out.push(intersect(vertices[i], vertices[j], si, sj));
        }
    }
    out
}

/// Intersection of a convex polygon with a triangle (given counterclockwise).
pub fn clip_to_triangle(vertices: &[Vec2], tri: &[Vec2; 3]) -> Vec<Vec2> {
    let mut poly = vertices.to_vec();
    for k in 0..3 {
        if poly.len() < 3 {
            return Vec::new();
        }
        let a = tri[k];
        let b = tri[(k + 1) % 3];
        // Interior of a CCW triangle is to the left of each directed edge.
        let edge = b - a;
        let normal = Vec2::new(edge.y, -edge.x);
        poly = clip_halfplane(&poly, &HalfPlane { normal, offset: normal.dot(a) });
    }
    poly
}

/// Parameter interval of segment p + t (q - p), t in [0, 1], inside a CCW
/// triangle. None when the overlap is empty.
pub fn segment_in_triangle(p: Vec2, q: Vec2, tri: &[Vec2; 3]) -> Option<(f64, f64)> {
    let d = q - p;
    let (mut t0, mut t1) = (0.0f64, 1.0f64);
    for k in 0..3 {
        let a = tri[k];
        let b = tri[(k + 1) % 3];
        let edge = b - a;
        let normal = Vec2::new(edge.y, -edge.x); // points outward
        let denom = normal.dot(d);
        let value = normal.dot(p - a);
        if denom.abs() < 1e-300 {
            if value > 0.0 {
                return None;
            }
            continue;
        }
        let t = -value / denom;
        if denom > 0.0 {
            t1 = t1.min(t);
        } else {
            t0 = t0.max(t);
        }
        if t0 >= t1 {
            return None;
        }
    }
    Some((t0, t1))
}

/// Point-in-triangle test with an absolute cross-product tolerance.
pub fn triangle_contains(tri: &[Vec2; 3], p: Vec2, tol: f64) -> bool {
    (0..3).all(|k| {
        let a = tri[k];
        let b = tri[(k + 1) % 3];
        (b - a).cross(p - a) >= -tol
    })
}

/// Exact integral of a polynomial of degree <= 2 over a convex polygon,
/// using the edge-midpoint rule on a fan triangulation.
pub fn integrate_quadratic(vertices: &[Vec2], f: impl Fn(Vec2) -> f64) -> f64 {
    if vertices.len() < 3 {
        return 0.0;
    }
    let mut total = 0.0;
    let a = vertices[0];
    for i in 1..vertices.len() - 1 {
        let b = vertices[i];
        let c = vertices[i + 1];
        let area = 0.5 * (b - a).cross(c - a);
        let m_ab = (a + b) * 0.5;
        let m_bc = (b + c) * 0.5;
        let m_ca = (c + a) * 0.5;
        total += area / 3.0 * (f(m_ab) + f(m_bc) + f(m_ca));
    }
    total
}
