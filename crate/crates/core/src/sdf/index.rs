use nalgebra::{Point3, Vector3};

use crate::mesh::geom::{closest_point_on_triangle, Aabb, Feature};
use crate::mesh::TriangleMesh;
use crate::spatial::UniformGrid;

/// Grid cell edge in units of the median mesh edge.
const CELL_EDGES: f64 = 4.0;

/// Result of a closest-point query.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Closest {
    pub distance: f64,
    pub point: Point3<f64>,
    pub triangle: usize,
    pub feature: Feature,
}

/// Nearest-triangle queries against a fixed mesh, plus angle-weighted
/// pseudo-normals for inside/outside classification.
#[derive(Debug, Clone)]
pub struct SurfaceIndex {
    mesh: TriangleMesh,
    grid: UniformGrid,
    face_normals: Vec<Vector3<f64>>,
    vertex_normals: Vec<Vector3<f64>>,
    /// Per triangle, the summed unit normals of the two faces across each local edge (01, 12, 20).
    edge_normals: Vec<[Vector3<f64>; 3]>,
}

impl SurfaceIndex {
    pub fn new(mesh: &TriangleMesh) -> Self {
        let boxes: Vec<Aabb> = (0..mesh.triangle_count()).map(|t| Aabb::of_points(&mesh.corners(t))).collect();
        let cell = CELL_EDGES * mesh.median_edge_length();
        let grid = UniformGrid::build(&boxes, cell);

        let face_normals: Vec<Vector3<f64>> = (0..mesh.triangle_count())
            .map(|t| mesh.face_normal(t).try_normalize(0.0).unwrap_or_else(Vector3::zeros))
            .collect();

        let mut vertex_normals = vec![Vector3::zeros(); mesh.vertex_count()];
        for (t, tri) in mesh.triangles.iter().enumerate() {
            for k in 0..3 {
                let p = mesh.vertices[tri[k]];
                let u = mesh.vertices[tri[(k + 1) % 3]] - p;
                let v = mesh.vertices[tri[(k + 2) % 3]] - p;
                let angle = u.angle(&v);
                if angle.is_finite() {
                    vertex_normals[tri[k]] += face_normals[t] * angle;
                }
            }
        }

        // edge -> adjacent faces
        let mut directed: Vec<((usize, usize), usize)> = Vec::with_capacity(mesh.triangle_count() * 3);
        for (t, tri) in mesh.triangles.iter().enumerate() {
            for k in 0..3 {
                let (a, b) = (tri[k], tri[(k + 1) % 3]);
                directed.push(((a.min(b), a.max(b)), t));
            }
        }
        directed.sort_unstable();
        let mut edge_normals = vec![[Vector3::zeros(); 3]; mesh.triangle_count()];
        let mut i = 0;
        while i < directed.len() {
            let mut j = i;
            let mut sum = Vector3::zeros();
            while j < directed.len() && directed[j].0 == directed[i].0 {
                sum += face_normals[directed[j].1];
                j += 1;
            }
            for &(key, t) in &directed[i..j] {
                let tri = mesh.triangles[t];
                for k in 0..3 {
                    let (a, b) = (tri[k], tri[(k + 1) % 3]);
                    if (a.min(b), a.max(b)) == key {
                        edge_normals[t][k] = sum;
                    }
                }
            }
            i = j;
        }
        SurfaceIndex { mesh: mesh.clone(), grid, face_normals, vertex_normals, edge_normals }
    }

    pub fn mesh(&self) -> &TriangleMesh {
        &self.mesh
    }

    /// Closest surface point, exact.
    pub fn closest(&self, p: &Point3<f64>) -> Option<Closest> {
        self.closest_within(p, f64::INFINITY)
    }

    /// Closest surface point if it is nearer than `max_dist`.
    pub fn closest_within(&self, p: &Point3<f64>, max_dist: f64) -> Option<Closest> {
        let mut hit: Option<(usize, Point3<f64>, Feature)> = None;
        let mut hit_d = f64::INFINITY;
        let found = self.grid.nearest(p, max_dist, |t| {
            let [a, b, c] = self.mesh.corners(t as usize);
            let (q, f) = closest_point_on_triangle(p, &a, &b, &c);
            let d = (q - p).norm();
            // mirror the grid's tie-break (smaller index wins) so the feature matches the winner
            if d < hit_d || (d == hit_d && hit.is_some_and(|h| (t as usize) < h.0)) {
                hit_d = d;
                hit = Some((t as usize, q, f));
            }
            d
        })?;
        let (t, point, feature) = hit?;
        debug_assert_eq!(found.0 as usize, t);
        Some(Closest { distance: found.1, point, triangle: t, feature })
    }

    /// Unsigned distance to the surface.
    pub fn distance(&self, p: &Point3<f64>) -> f64 {
        self.closest(p).map_or(f64::INFINITY, |c| c.distance)
    }

    /// Angle-weighted pseudo-normal at the closest feature.
    pub fn pseudo_normal(&self, c: &Closest) -> Vector3<f64> {
        let tri = self.mesh.triangles[c.triangle];
        match c.feature {
            Feature::Face => self.face_normals[c.triangle],
            Feature::Vertex(k) => self.vertex_normals[tri[k as usize]],
            Feature::Edge(0, 1) | Feature::Edge(1, 0) => self.edge_normals[c.triangle][0],
            Feature::Edge(1, 2) | Feature::Edge(2, 1) => self.edge_normals[c.triangle][1],
            Feature::Edge(_, _) => self.edge_normals[c.triangle][2],
        }
    }

    /// +1 outside, -1 inside, 0 on the surface.
    pub fn side(&self, p: &Point3<f64>, c: &Closest) -> f64 {
        if c.distance == 0.0 {
            return 0.0;
        }
        let s = (p - c.point).dot(&self.pseudo_normal(c));
        if s > 0.0 {
            1.0
        } else if s < 0.0 {
            -1.0
        } else {
            // degenerate: fall back to the face normal
            if (p - c.point).dot(&self.face_normals[c.triangle]) >= 0.0 {
                1.0
            } else {
                -1.0
            }
        }
    }

    /// Signed distance, negative inside (requires a closed, outward-oriented mesh).
    pub fn signed_distance(&self, p: &Point3<f64>) -> Option<(f64, Closest)> {
        let c = self.closest(p)?;
        Some((self.side(p, &c) * c.distance, c))
    }
}

/// Exhaustive minimum point-to-triangle distance, the reference for [`SurfaceIndex`].
pub fn point_mesh_distance_bruteforce(points: &[Point3<f64>], mesh: &TriangleMesh) -> Vec<f64> {
    use rayon::prelude::*;
    points
        .par_iter()
        .map(|p| {
            (0..mesh.triangle_count())
                .map(|t| {
                    let [a, b, c] = mesh.corners(t);
                    crate::mesh::geom::point_triangle_distance(p, &a, &b, &c)
                })
                .fold(f64::INFINITY, f64::min)
        })
        .collect()
}
