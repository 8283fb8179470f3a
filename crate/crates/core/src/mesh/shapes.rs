//! Closed reference surfaces used as phantoms and test fixtures.

use std::collections::HashMap;

use nalgebra::{Point3, Vector3};

use super::TriangleMesh;

/// Regular icosahedron inscribed in a sphere of `radius` centred at the origin.
pub fn icosahedron(radius: f64) -> TriangleMesh {
    let phi = (1.0 + 5f64.sqrt()) / 2.0;
    let raw = [
        [-1.0, phi, 0.0],
        [1.0, phi, 0.0],
        [-1.0, -phi, 0.0],
        [1.0, -phi, 0.0],
        [0.0, -1.0, phi],
        [0.0, 1.0, phi],
        [0.0, -1.0, -phi],
        [0.0, 1.0, -phi],
        [phi, 0.0, -1.0],
        [phi, 0.0, 1.0],
        [-phi, 0.0, -1.0],
        [-phi, 0.0, 1.0],
    ];
    let vertices = raw
        .iter()
        .map(|v| Point3::from(Vector3::from(*v).normalize() * radius))
        .collect();
    let triangles = vec![
        [0, 11, 5],
        [0, 5, 1],
        [0, 1, 7],
        [0, 7, 10],
        [0, 10, 11],
        [1, 5, 9],
        [5, 11, 4],
        [11, 10, 2],
        [10, 7, 6],
        [7, 1, 8],
        [3, 9, 4],
        [3, 4, 2],
        [3, 2, 6],
        [3, 6, 8],
        [3, 8, 9],
        [4, 9, 5],
        [2, 4, 11],
        [6, 2, 10],
        [8, 6, 7],
        [9, 8, 1],
    ];
    TriangleMesh { vertices, triangles }
}

/// Icosahedron subdivided `level` times (each level splits every triangle in
/// four) with vertices projected onto the sphere of `radius` about the origin.
pub fn icosphere(radius: f64, level: u32) -> TriangleMesh {
    let mut mesh = icosahedron(1.0);
    for _ in 0..level {
        let mut mid: HashMap<(usize, usize), usize> = HashMap::new();
        let mut tris = Vec::with_capacity(mesh.triangles.len() * 4);
        let mut verts = mesh.vertices.clone();
        let mut midpoint = |a: usize, b: usize, verts: &mut Vec<Point3<f64>>| -> usize {
            let key = (a.min(b), a.max(b));
            *mid.entry(key).or_insert_with(|| {
                let m = Point3::from(((verts[a].coords + verts[b].coords) * 0.5).normalize());
                verts.push(m);
                verts.len() - 1
            })
        };
        for &[a, b, c] in &mesh.triangles {
            let ab = midpoint(a, b, &mut verts);
            let bc = midpoint(b, c, &mut verts);
            let ca = midpoint(c, a, &mut verts);
            tris.extend_from_slice(&[[a, ab, ca], [b, bc, ab], [c, ca, bc], [ab, bc, ca]]);
        }
        mesh = TriangleMesh { vertices: verts, triangles: tris };
    }
    for v in mesh.vertices.iter_mut() {
        *v = Point3::from(v.coords * radius);
    }
    mesh
}

/// Icosphere centred at `center`.
pub fn sphere(center: Point3<f64>, radius: f64, level: u32) -> TriangleMesh {
    icosphere(radius, level).translated(center.coords)
}

/// Torus around the z axis with tube centre radius `major` and tube radius `minor`.
pub fn torus(major: f64, minor: f64, segments: usize, sides: usize) -> TriangleMesh {
    let mut vertices = Vec::with_capacity(segments * sides);
    for i in 0..segments {
        let u = 2.0 * std::f64::consts::PI * i as f64 / segments as f64;
        for j in 0..sides {
            let v = 2.0 * std::f64::consts::PI * j as f64 / sides as f64;
            let r = major + minor * v.cos();
            vertices.push(Point3::new(r * u.cos(), r * u.sin(), minor * v.sin()));
        }
    }
    let idx = |i: usize, j: usize| (i % segments) * sides + (j % sides);
    let mut triangles = Vec::with_capacity(2 * segments * sides);
    for i in 0..segments {
        for j in 0..sides {
            let (a, b, c, d) = (idx(i, j), idx(i + 1, j), idx(i + 1, j + 1), idx(i, j + 1));
            triangles.push([a, b, c]);
            triangles.push([a, c, d]);
        }
    }
    TriangleMesh { vertices, triangles }
}

/// Axis-aligned box with 12 outward-facing triangles.
pub fn cuboid(lo: Point3<f64>, hi: Point3<f64>) -> TriangleMesh {
    let c = |x: bool, y: bool, z: bool| {
        Point3::new(if x { hi.x } else { lo.x }, if y { hi.y } else { lo.y }, if z { hi.z } else { lo.z })
    };
    let vertices = vec![
        c(false, false, false),
        c(true, false, false),
        c(true, true, false),
        c(false, true, false),
        c(false, false, true),
        c(true, false, true),
        c(true, true, true),
        c(false, true, true),
    ];
    let triangles = vec![
        [0, 2, 1],
        [0, 3, 2],
        [4, 5, 6],
        [4, 6, 7],
        [0, 1, 5],
        [0, 5, 4],
        [1, 2, 6],
        [1, 6, 5],
        [2, 3, 7],
        [2, 7, 6],
        [3, 0, 4],
        [3, 4, 7],
    ];
    TriangleMesh { vertices, triangles }
}

pub fn unit_cube() -> TriangleMesh {
    cuboid(Point3::origin(), Point3::new(1.0, 1.0, 1.0))
}

/// Moves each vertex of a star-shaped mesh radially about `center` so that its
/// radius becomes `radius(direction)`.
pub fn radial_warp(mesh: &TriangleMesh, center: Point3<f64>, mut radius: impl FnMut(&Vector3<f64>) -> f64) -> TriangleMesh {
    let vertices = mesh
        .vertices
        .iter()
        .map(|p| {
            let d = (p - center).normalize();
            center + d * radius(&d)
        })
        .collect();
    mesh.with_vertices(vertices)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shapes_are_closed_manifolds() {
        for m in [icosahedron(1.0), icosphere(2.0, 2), torus(3.0, 1.0, 24, 12), unit_cube()] {
            m.check_closed_manifold().unwrap();
        }
    }

    #[test]
    fn icosphere_counts() {
        let m = icosphere(1.0, 3);
        assert_eq!(m.triangle_count(), 20 * 64);
        assert_eq!(m.vertex_count(), 10 * 64 + 2);
    }

    #[test]
    fn outward_orientation() {
        for m in [icosphere(5.0, 1), unit_cube().translated(Vector3::new(-0.5, -0.5, -0.5))] {
            for t in 0..m.triangle_count() {
                let [a, b, c] = m.corners(t);
                let centroid = (a.coords + b.coords + c.coords) / 3.0;
                assert!(m.face_normal(t).dot(&centroid) > 0.0);
            }
        }
    }
}
