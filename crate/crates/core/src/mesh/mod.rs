//! Triangle meshes, iso-surface extraction, SDF-driven refinement and
//! topology handling.

mod correct;
pub mod geom;
mod intersect;
pub mod io;
mod marching;
mod refine;
pub mod shapes;
mod topology;

use nalgebra::{Matrix4, Point3, Vector3};

use crate::error::{Error, Result};

pub use correct::{topology_correct, topology_correct_report, CorrectionReport};
pub use intersect::{self_intersections, self_intersections_bruteforce, triangles_intersect, SelfIntersections};
pub use marching::marching_cubes;
pub use refine::{expand_pial, refine_to_sdf, refine_to_sdf_traced, RefineParams, RefineTrace};
pub use topology::{connected_components, topology_report, TopologyReport};

/// Indexed triangle surface in world millimetres.
///
/// Triangles are counter-clockwise when viewed from outside, so face normals
/// `(b - a) x (c - a)` point outwards.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct TriangleMesh {
    pub vertices: Vec<Point3<f64>>,
    pub triangles: Vec<[usize; 3]>,
}

/// Undirected edge with the triangles that use it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EdgeUse {
    pub a: usize,
    pub b: usize,
    /// Number of triangles traversing a->b (a < b).
    pub forward: u32,
    /// Number traversing b->a.
    pub backward: u32,
}

impl EdgeUse {
    pub fn count(&self) -> u32 {
        self.forward + self.backward
    }
}

impl TriangleMesh {
    pub fn new(vertices: Vec<Point3<f64>>, triangles: Vec<[usize; 3]>) -> Result<Self> {
        let n = vertices.len();
        for (t, tri) in triangles.iter().enumerate() {
            if tri.iter().any(|&i| i >= n) {
                return Err(Error::arg(format!("triangle {t} references a vertex out of range ({tri:?}, {n} vertices)")));
            }
            if tri[0] == tri[1] || tri[1] == tri[2] || tri[0] == tri[2] {
                return Err(Error::Geometry(format!("triangle {t} repeats a vertex: {tri:?}")));
            }
        }
        if vertices.iter().any(|p| !p.coords.iter().all(|c| c.is_finite())) {
            return Err(Error::Geometry("non-finite vertex coordinate".into()));
        }
        Ok(TriangleMesh { vertices, triangles })
    }

    pub fn vertex_count(&self) -> usize {
        self.vertices.len()
    }

    pub fn triangle_count(&self) -> usize {
        self.triangles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.triangles.is_empty()
    }

    #[inline]
    pub fn corners(&self, t: usize) -> [Point3<f64>; 3] {
        let [a, b, c] = self.triangles[t];
        [self.vertices[a], self.vertices[b], self.vertices[c]]
    }

    /// Unnormalised face normal (twice the area vector).
    #[inline]
    pub fn face_normal(&self, t: usize) -> Vector3<f64> {
        let [a, b, c] = self.corners(t);
        (b - a).cross(&(c - a))
    }

    pub fn triangle_area(&self, t: usize) -> f64 {
        0.5 * self.face_normal(t).norm()
    }

    /// Undirected edges sorted by (a, b) with a < b.
    pub fn edges(&self) -> Vec<EdgeUse> {
        let mut directed: Vec<(usize, usize)> = Vec::with_capacity(self.triangles.len() * 3);
        for tri in &self.triangles {
            for k in 0..3 {
                directed.push((tri[k], tri[(k + 1) % 3]));
            }
        }
        directed.sort_unstable_by_key(|&(a, b)| (a.min(b), a.max(b), a > b));
        let mut out: Vec<EdgeUse> = Vec::new();
        for (u, v) in directed {
            let (a, b) = (u.min(v), u.max(v));
            match out.last_mut() {
                Some(e) if e.a == a && e.b == b => {
                    if u < v {
                        e.forward += 1
                    } else {
                        e.backward += 1
                    }
                }
                _ => out.push(EdgeUse { a, b, forward: (u < v) as u32, backward: (u > v) as u32 }),
            }
        }
        out
    }

    /// Ok when every edge has exactly two incident triangles with opposite directions.
    pub fn check_closed_manifold(&self) -> Result<()> {
        if self.triangles.is_empty() {
            return Err(Error::Topology("mesh has no triangles".into()));
        }
        let mut boundary = 0usize;
        let mut nonmanifold = 0usize;
        let mut misoriented = 0usize;
        for e in self.edges() {
            match e.count() {
                1 => boundary += 1,
                2 if e.forward == 1 => {}
                2 => misoriented += 1,
                _ => nonmanifold += 1,
            }
        }
        if boundary + nonmanifold + misoriented > 0 {
            return Err(Error::Topology(format!(
                "not a closed oriented manifold: {boundary} boundary, {nonmanifold} non-manifold, {misoriented} inconsistently oriented edges"
            )));
        }
        Ok(())
    }

    /// Errors on triangles with area below `min_area` (mm^2).
    pub fn check_nondegenerate(&self, min_area: f64) -> Result<()> {
        for t in 0..self.triangles.len() {
            let area = self.triangle_area(t);
            if !(area >= min_area) {
                return Err(Error::Geometry(format!("triangle {t} is degenerate (area {area:e} mm^2)")));
            }
        }
        Ok(())
    }

    /// Sorted one-ring vertex neighbours.
    pub fn vertex_neighbors(&self) -> Vec<Vec<usize>> {
        let mut nb = vec![Vec::new(); self.vertices.len()];
        for tri in &self.triangles {
            for k in 0..3 {
                let (a, b) = (tri[k], tri[(k + 1) % 3]);
                nb[a].push(b);
                nb[b].push(a);
            }
        }
        for list in nb.iter_mut() {
            list.sort_unstable();
            list.dedup();
        }
        nb
    }

    /// Triangles incident to each vertex.
    pub fn vertex_triangles(&self) -> Vec<Vec<usize>> {
        let mut vt = vec![Vec::new(); self.vertices.len()];
        for (t, tri) in self.triangles.iter().enumerate() {
            for &v in tri {
                vt[v].push(t);
            }
        }
        vt
    }

    /// One third of each incident triangle's area, per vertex.
    pub fn vertex_areas(&self) -> Vec<f64> {
        let mut area = vec![0.0; self.vertices.len()];
        for t in 0..self.triangles.len() {
            let a = self.triangle_area(t) / 3.0;
            for &v in &self.triangles[t] {
                area[v] += a;
            }
        }
        area
    }

    pub fn bounds(&self) -> (Point3<f64>, Point3<f64>) {
        let mut lo = Point3::from([f64::INFINITY; 3]);
        let mut hi = Point3::from([f64::NEG_INFINITY; 3]);
        for p in &self.vertices {
            for a in 0..3 {
                lo[a] = lo[a].min(p[a]);
                hi[a] = hi[a].max(p[a]);
            }
        }
        (lo, hi)
    }

    pub fn edge_lengths(&self) -> Vec<f64> {
        self.edges().iter().map(|e| (self.vertices[e.a] - self.vertices[e.b]).norm()).collect()
    }

    pub fn median_edge_length(&self) -> f64 {
        let mut l = self.edge_lengths();
        if l.is_empty() {
            return 0.0;
        }
        l.sort_by(f64::total_cmp);
        l[l.len() / 2]
    }

    /// Applies a 4x4 homogeneous transform to every vertex.
    pub fn transformed(&self, m: &Matrix4<f64>) -> TriangleMesh {
        let vertices = self.vertices.iter().map(|p| m.transform_point(p)).collect();
        let mut out = TriangleMesh { vertices, triangles: self.triangles.clone() };
        if m.fixed_view::<3, 3>(0, 0).determinant() < 0.0 {
            out = out.flipped();
        }
        out
    }

    pub fn translated(&self, d: Vector3<f64>) -> TriangleMesh {
        TriangleMesh { vertices: self.vertices.iter().map(|p| p + d).collect(), triangles: self.triangles.clone() }
    }

    /// Reverses the orientation of every triangle.
    pub fn flipped(&self) -> TriangleMesh {
        TriangleMesh {
            vertices: self.vertices.clone(),
            triangles: self.triangles.iter().map(|&[a, b, c]| [a, c, b]).collect(),
        }
    }

    /// Disjoint union.
    pub fn merged(&self, other: &TriangleMesh) -> TriangleMesh {
        let off = self.vertices.len();
        let mut vertices = self.vertices.clone();
        vertices.extend_from_slice(&other.vertices);
        let mut triangles = self.triangles.clone();
        triangles.extend(other.triangles.iter().map(|t| [t[0] + off, t[1] + off, t[2] + off]));
        TriangleMesh { vertices, triangles }
    }

    pub fn with_vertices(&self, vertices: Vec<Point3<f64>>) -> TriangleMesh {
        debug_assert_eq!(vertices.len(), self.vertices.len());
        TriangleMesh { vertices, triangles: self.triangles.clone() }
    }
}
