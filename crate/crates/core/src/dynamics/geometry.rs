//! Planar proximity queries for capsules and rounded rectangles.

use crate::scalar::{v2, Real};

/// Closest points between segments `p1q1` and `p2q2`.
///
/// Returns `(c1, c2, distance)`. For parallel overlapping segments the pair is
/// taken at the middle of the overlap so mirrored inputs give mirrored outputs.
pub fn closest_points_segments<T: Real>(
    p1: [T; 2],
    q1: [T; 2],
    p2: [T; 2],
    q2: [T; 2],
) -> ([T; 2], [T; 2], T) {
    let eps = T::epsilon();
    let zero = T::zero();
    let one = T::one();
    let clamp01 = |x: T| x.max(zero).min(one);

    let d1 = v2::sub(q1, p1);
    let d2 = v2::sub(q2, p2);
    let r = v2::sub(p1, p2);
    let a = v2::dot(d1, d1);
    let e = v2::dot(d2, d2);
    let f = v2::dot(d2, r);

    let (s, t);
    if a <= eps && e <= eps {
        s = zero;
        t = zero;
    } else if a <= eps {
        s = zero;
        t = clamp01(f / e);
    } else {
        let c = v2::dot(d1, r);
        if e <= eps {
            t = zero;
            s = clamp01(-c / a);
        } else {
            let b = v2::dot(d1, d2);
            let denom = a * e - b * b;
            let s0 = if denom > T::lit(1e-12) * a * e {
                clamp01((b * f - c * e) / denom)
            } else {
                // parallel: middle of the projected overlap, or the nearer end
                let u0 = v2::dot(v2::sub(p2, p1), d1) / a;
                let u1 = v2::dot(v2::sub(q2, p1), d1) / a;
                let lo = u0.min(u1).max(zero);
                let hi = u0.max(u1).min(one);
                if lo <= hi {
                    (lo + hi) * T::lit(0.5)
                } else if u0.max(u1) < zero {
                    zero
                } else {
                    one
                }
            };
            let t0 = (b * s0 + f) / e;
            if t0 < zero {
                t = zero;
                s = clamp01(-c / a);
            } else if t0 > one {
                t = one;
                s = clamp01((b - c) / a);
            } else {
                t = t0;
                s = s0;
            }
        }
    }
    let c1 = v2::lerp(p1, q1, s);
    let c2 = v2::lerp(p2, q2, t);
    (c1, c2, v2::norm(v2::sub(c1, c2)))
}

/// Axis-aligned rectangle given by its lower-left and upper-right corners.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Rect<T> {
    pub min: [T; 2],
    pub max: [T; 2],
}

impl<T: Real> Rect<T> {
    pub fn contains(&self, p: [T; 2]) -> bool {
        p[0] >= self.min[0] && p[0] <= self.max[0] && p[1] >= self.min[1] && p[1] <= self.max[1]
    }

    pub fn center(&self) -> [T; 2] {
        v2::scale(v2::add(self.min, self.max), T::lit(0.5))
    }

    /// Corners in counter-clockwise order starting at the lower-left one.
    pub fn corners(&self) -> [[T; 2]; 4] {
        [
            self.min,
            [self.max[0], self.min[1]],
            self.max,
            [self.min[0], self.max[1]],
        ]
    }

    /// Liang-Barsky clip test: does the closed segment touch the closed rectangle?
    pub fn intersects_segment(&self, a: [T; 2], b: [T; 2]) -> bool {
        let d = v2::sub(b, a);
        let mut t0 = T::zero();
        let mut t1 = T::one();
        for axis in 0..2 {
            let p = [-d[axis], d[axis]];
            let q = [a[axis] - self.min[axis], self.max[axis] - a[axis]];
            for k in 0..2 {
                if p[k] == T::zero() {
                    if q[k] < T::zero() {
                        return false;
                    }
                } else {
                    let r = q[k] / p[k];
                    if p[k] < T::zero() {
                        if r > t1 {
                            return false;
                        }
                        t0 = t0.max(r);
                    } else {
                        if r < t0 {
                            return false;
                        }
                        t1 = t1.min(r);
                    }
                }
            }
        }
        t0 <= t1
    }

    /// Closest points between segment `ab` and the solid rectangle.
    ///
    /// When the segment enters the rectangle both points coincide at the
    /// segment point nearest the rectangle center and the distance is zero.
    pub fn closest_points_segment(&self, a: [T; 2], b: [T; 2]) -> ([T; 2], [T; 2], T) {
        if self.intersects_segment(a, b) {
            let (p, _, _) = closest_points_segments(a, b, self.center(), self.center());
            return (p, p, T::zero());
        }
        let c = self.corners();
        let mut best: Option<([T; 2], [T; 2], T)> = None;
        for i in 0..4 {
            let cand = closest_points_segments(a, b, c[i], c[(i + 1) % 4]);
            if best.map_or(true, |bst| cand.2 < bst.2) {
                best = Some(cand);
            }
        }
        best.expect("rectangle has edges")
    }
}

/// Minkowski sum of a convex polygon (vertices counter-clockwise) and a disk.
///
/// A capsule is the two-vertex case. The boundary is parameterized by arc
/// length, starting at the outward offset of vertex 0 and walking edge 0.
#[derive(Clone, Debug, PartialEq)]
pub struct RoundedPolygon<T> {
    vertices: Vec<[T; 2]>,
    radius: T,
    normals: Vec<[T; 2]>,
    edge_lengths: Vec<T>,
    sweeps: Vec<T>,
}

impl<T: Real> RoundedPolygon<T> {
    pub fn new(vertices: Vec<[T; 2]>, radius: T) -> Self {
        let n = vertices.len();
        assert!(n >= 2, "rounded polygon needs at least two vertices");
        let mut normals = Vec::with_capacity(n);
        let mut edge_lengths = Vec::with_capacity(n);
        for i in 0..n {
            let e = v2::sub(vertices[(i + 1) % n], vertices[i]);
            let len = v2::norm(e);
            edge_lengths.push(len);
            normals.push(if len > T::zero() {
                [e[1] / len, -e[0] / len]
            } else {
                [T::zero(), T::one()]
            });
        }
        let two_pi = T::lit(std::f64::consts::TAU);
        let sweeps = (0..n)
            .map(|i| {
                let a = normals[i];
                let b = normals[(i + 1) % n];
                let s = v2::cross(a, b).atan2(v2::dot(a, b));
                if s <= T::zero() {
                    s + two_pi
                } else {
                    s
                }
            })
            .collect();
        Self {
            vertices,
            radius,
            normals,
            edge_lengths,
            sweeps,
        }
    }

    pub fn capsule(a: [T; 2], b: [T; 2], radius: T) -> Self {
        Self::new(vec![a, b], radius)
    }

    pub fn radius(&self) -> T {
        self.radius
    }

    pub fn perimeter(&self) -> T {
        self.edge_lengths.iter().copied().sum::<T>()
            + self.sweeps.iter().copied().sum::<T>() * self.radius
    }

    /// Boundary point at arc length `s` (taken modulo the perimeter).
    pub fn point_at(&self, s: T) -> [T; 2] {
        let n = self.vertices.len();
        let per = self.perimeter();
        let mut s = s % per;
        if s < T::zero() {
            s += per;
        }
        for i in 0..n {
            let len = self.edge_lengths[i];
            if s <= len {
                let t = if len > T::zero() { s / len } else { T::zero() };
                let base = v2::lerp(self.vertices[i], self.vertices[(i + 1) % n], t);
                return v2::add(base, v2::scale(self.normals[i], self.radius));
            }
            s -= len;
            let arc = self.sweeps[i] * self.radius;
            if s <= arc {
                let phi = if self.radius > T::zero() { s / self.radius } else { T::zero() };
                let n0 = self.normals[i];
                let ang = n0[1].atan2(n0[0]) + phi;
                return v2::add(self.vertices[(i + 1) % n], v2::scale(v2::unit(ang), self.radius));
            }
            s -= arc;
        }
        v2::add(self.vertices[0], v2::scale(self.normals[0], self.radius))
    }

    /// Arc-length coordinate of the boundary point nearest to `p`.
    pub fn project(&self, p: [T; 2]) -> T {
        let n = self.vertices.len();
        let tie = T::lit(1e-12);
        let mut best_edge = 0usize;
        let mut best_t = T::zero();
        let mut best_d = T::infinity();
        let mut best_side = T::neg_infinity();
        for i in 0..n {
            let a = self.vertices[i];
            let b = self.vertices[(i + 1) % n];
            let e = v2::sub(b, a);
            let len2 = v2::dot(e, e);
            let t = if len2 > T::zero() {
                (v2::dot(v2::sub(p, a), e) / len2).max(T::zero()).min(T::one())
            } else {
                T::zero()
            };
            let c = v2::lerp(a, b, t);
            let d = v2::norm(v2::sub(p, c));
            let side = v2::dot(v2::sub(p, a), self.normals[i]);
            if d < best_d - tie || ((d - best_d).abs() <= tie && side > best_side) {
                best_edge = i;
                best_t = t;
                best_d = d;
                best_side = side;
            }
        }
        // offsets of each edge start along the boundary
        let mut offset = T::zero();
        let mut starts = Vec::with_capacity(n);
        for i in 0..n {
            starts.push(offset);
            offset += self.edge_lengths[i] + self.sweeps[i] * self.radius;
        }
        let i = best_edge;
        let vertex = if best_t <= T::zero() {
            Some((i + n - 1) % n)
        } else if best_t >= T::one() {
            Some(i)
        } else {
            None
        };
        match vertex {
            None => starts[i] + best_t * self.edge_lengths[i],
            // arc `v` wraps the corner at vertex v+1, between normals v and v+1
            Some(v) => {
                let corner = self.vertices[(v + 1) % n];
                let dir = v2::sub(p, corner);
                let n0 = self.normals[v];
                let mut phi = if v2::norm(dir) > T::zero() {
                    v2::cross(n0, dir).atan2(v2::dot(n0, dir))
                } else {
                    T::zero()
                };
                if phi < T::zero() {
                    phi += T::lit(std::f64::consts::TAU);
                }
                let sweep = self.sweeps[v];
                if phi > sweep {
                    // beyond the arc: snap to the nearer arc end
                    let over = phi - sweep;
                    let under = T::lit(std::f64::consts::TAU) - phi;
                    phi = if over < under { sweep } else { T::zero() };
                }
                starts[v] + self.edge_lengths[v] + phi * self.radius
            }
        }
    }

    /// Shortest distance between two arc coordinates along the closed boundary.
    pub fn arc_distance(&self, s0: T, s1: T) -> T {
        let per = self.perimeter();
        let d = ((s0 - s1) % per).abs();
        d.min(per - d)
    }
}
