//! Point/triangle kernels shared by the distance and intersection code.

use nalgebra::{Point3, Vector3};
use robust::{orient2d, orient3d, Coord, Coord3D};

/// Which part of a triangle a closest point lies on. Indices are local (0..3).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Feature {
    Vertex(u8),
    Edge(u8, u8),
    Face,
}

/// Closest point on triangle `abc` to `p`, with the feature it lies on.
pub fn closest_point_on_triangle(p: &Point3<f64>, a: &Point3<f64>, b: &Point3<f64>, c: &Point3<f64>) -> (Point3<f64>, Feature) {
    let ab = b - a;
    let ac = c - a;
    let ap = p - a;
    let d1 = ab.dot(&ap);
    let d2 = ac.dot(&ap);
    if d1 <= 0.0 && d2 <= 0.0 {
        return (*a, Feature::Vertex(0));
    }
    let bp = p - b;
    let d3 = ab.dot(&bp);
    let d4 = ac.dot(&bp);
    if d3 >= 0.0 && d4 <= d3 {
        return (*b, Feature::Vertex(1));
    }
    let vc = d1 * d4 - d3 * d2;
    if vc <= 0.0 && d1 >= 0.0 && d3 <= 0.0 {
        let v = d1 / (d1 - d3);
        return (a + ab * v, Feature::Edge(0, 1));
    }
    let cp = p - c;
    let d5 = ab.dot(&cp);
    let d6 = ac.dot(&cp);
    if d6 >= 0.0 && d5 <= d6 {
        return (*c, Feature::Vertex(2));
    }
    let vb = d5 * d2 - d1 * d6;
    if vb <= 0.0 && d2 >= 0.0 && d6 <= 0.0 {
        let w = d2 / (d2 - d6);
        return (a + ac * w, Feature::Edge(0, 2));
    }
    let va = d3 * d6 - d5 * d4;
    if va <= 0.0 && (d4 - d3) >= 0.0 && (d5 - d6) >= 0.0 {
        let w = (d4 - d3) / ((d4 - d3) + (d5 - d6));
        return (b + (c - b) * w, Feature::Edge(1, 2));
    }
    let denom = 1.0 / (va + vb + vc);
    let v = vb * denom;
    let w = vc * denom;
    (a + ab * v + ac * w, Feature::Face)
}

pub fn point_triangle_distance(p: &Point3<f64>, a: &Point3<f64>, b: &Point3<f64>, c: &Point3<f64>) -> f64 {
    (closest_point_on_triangle(p, a, b, c).0 - p).norm()
}

/// Axis-aligned bounding box.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Aabb {
    pub lo: Point3<f64>,
    pub hi: Point3<f64>,
}

impl Aabb {
    pub fn empty() -> Self {
        Aabb { lo: Point3::from([f64::INFINITY; 3]), hi: Point3::from([f64::NEG_INFINITY; 3]) }
    }

    pub fn of_points<'a>(pts: impl IntoIterator<Item = &'a Point3<f64>>) -> Self {
        let mut b = Aabb::empty();
        for p in pts {
            b.include(p);
        }
        b
    }

    pub fn include(&mut self, p: &Point3<f64>) {
        for a in 0..3 {
            self.lo[a] = self.lo[a].min(p[a]);
            self.hi[a] = self.hi[a].max(p[a]);
        }
    }

    pub fn overlaps(&self, o: &Aabb) -> bool {
        (0..3).all(|a| self.lo[a] <= o.hi[a] && o.lo[a] <= self.hi[a])
    }

    /// Euclidean distance from `p` to the box (0 inside).
    pub fn distance(&self, p: &Point3<f64>) -> f64 {
        let mut s = 0.0;
        for a in 0..3 {
            let d = (self.lo[a] - p[a]).max(0.0).max(p[a] - self.hi[a]);
            s += d * d;
        }
        s.sqrt()
    }

    pub fn expanded(&self, r: f64) -> Aabb {
        let d = Vector3::from([r; 3]);
        Aabb { lo: self.lo - d, hi: self.hi + d }
    }
}

#[inline]
fn c3(p: &Point3<f64>) -> Coord3D<f64> {
    Coord3D { x: p.x, y: p.y, z: p.z }
}

#[inline]
fn sgn(v: f64) -> i8 {
    if v > 0.0 {
        1
    } else if v < 0.0 {
        -1
    } else {
        0
    }
}

/// Exact sign of the orientation of `d` relative to the plane through `a, b, c`.
#[inline]
pub fn orient(a: &Point3<f64>, b: &Point3<f64>, c: &Point3<f64>, d: &Point3<f64>) -> i8 {
    sgn(orient3d(c3(a), c3(b), c3(c), c3(d)))
}

/// Projection onto the coordinate plane that best preserves triangle `t`.
fn drop_axis(t: &[Point3<f64>; 3]) -> usize {
    let n = (t[1] - t[0]).cross(&(t[2] - t[0]));
    let (ax, ay, az) = (n.x.abs(), n.y.abs(), n.z.abs());
    if ax >= ay && ax >= az {
        0
    } else if ay >= az {
        1
    } else {
        2
    }
}

#[inline]
fn proj(p: &Point3<f64>, drop: usize) -> Coord<f64> {
    match drop {
        0 => Coord { x: p.y, y: p.z },
        1 => Coord { x: p.z, y: p.x },
        _ => Coord { x: p.x, y: p.y },
    }
}

#[inline]
fn o2(a: Coord<f64>, b: Coord<f64>, c: Coord<f64>) -> i8 {
    sgn(orient2d(a, b, c))
}

fn on_segment_2d(a: Coord<f64>, b: Coord<f64>, p: Coord<f64>) -> bool {
    p.x >= a.x.min(b.x) && p.x <= a.x.max(b.x) && p.y >= a.y.min(b.y) && p.y <= a.y.max(b.y)
}

fn segments_intersect_2d(p1: Coord<f64>, p2: Coord<f64>, q1: Coord<f64>, q2: Coord<f64>) -> bool {
    let d1 = o2(q1, q2, p1);
    let d2 = o2(q1, q2, p2);
    let d3 = o2(p1, p2, q1);
    let d4 = o2(p1, p2, q2);
    if d1 * d2 < 0 && d3 * d4 < 0 {
        return true;
    }
    (d1 == 0 && on_segment_2d(q1, q2, p1))
        || (d2 == 0 && on_segment_2d(q1, q2, p2))
        || (d3 == 0 && on_segment_2d(p1, p2, q1))
        || (d4 == 0 && on_segment_2d(p1, p2, q2))
}

fn point_in_triangle_2d(p: Coord<f64>, t: [Coord<f64>; 3]) -> bool {
    let s = [o2(t[0], t[1], p), o2(t[1], t[2], p), o2(t[2], t[0], p)];
    !(s.contains(&1) && s.contains(&-1))
}

fn segment_triangle_2d(p: &Point3<f64>, q: &Point3<f64>, t: &[Point3<f64>; 3], drop: usize) -> bool {
    let (pp, qq) = (proj(p, drop), proj(q, drop));
    let tt = [proj(&t[0], drop), proj(&t[1], drop), proj(&t[2], drop)];
    point_in_triangle_2d(pp, tt)
        || point_in_triangle_2d(qq, tt)
        || (0..3).any(|k| segments_intersect_2d(pp, qq, tt[k], tt[(k + 1) % 3]))
}

/// Closed segment/triangle intersection with exact predicates.
fn segment_hits_triangle(p: &Point3<f64>, q: &Point3<f64>, t: &[Point3<f64>; 3]) -> bool {
    let sp = orient(&t[0], &t[1], &t[2], p);
    let sq = orient(&t[0], &t[1], &t[2], q);
    if sp == sq && sp != 0 {
        return false;
    }
    if sp == 0 && sq == 0 {
        return segment_triangle_2d(p, q, t, drop_axis(t));
    }
    let s = [orient(p, q, &t[0], &t[1]), orient(p, q, &t[1], &t[2]), orient(p, q, &t[2], &t[0])];
    !(s.contains(&1) && s.contains(&-1))
}

/// Exact test whether two closed triangles share at least one point.
pub fn triangles_intersect(t1: &[Point3<f64>; 3], t2: &[Point3<f64>; 3]) -> bool {
    let s2 = [orient(&t1[0], &t1[1], &t1[2], &t2[0]), orient(&t1[0], &t1[1], &t1[2], &t2[1]), orient(&t1[0], &t1[1], &t1[2], &t2[2])];
    if s2[0] == s2[1] && s2[1] == s2[2] && s2[0] != 0 {
        return false;
    }
    if s2 == [0, 0, 0] {
        let drop = drop_axis(t1);
        let a = [proj(&t1[0], drop), proj(&t1[1], drop), proj(&t1[2], drop)];
        let b = [proj(&t2[0], drop), proj(&t2[1], drop), proj(&t2[2], drop)];
        return (0..3).any(|i| (0..3).any(|j| segments_intersect_2d(a[i], a[(i + 1) % 3], b[j], b[(j + 1) % 3])))
            || point_in_triangle_2d(a[0], b)
            || point_in_triangle_2d(b[0], a);
    }
    let s1 = [orient(&t2[0], &t2[1], &t2[2], &t1[0]), orient(&t2[0], &t2[1], &t2[2], &t1[1]), orient(&t2[0], &t2[1], &t2[2], &t1[2])];
    if s1[0] == s1[1] && s1[1] == s1[2] && s1[0] != 0 {
        return false;
    }
    (0..3).any(|k| segment_hits_triangle(&t1[k], &t1[(k + 1) % 3], t2))
        || (0..3).any(|k| segment_hits_triangle(&t2[k], &t2[(k + 1) % 3], t1))
}
