use std::fmt;

use serde::{Deserialize, Serialize};

use super::TriangleMesh;

/// Counts and invariants of a triangle surface.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TopologyReport {
    pub vertices: usize,
    pub edges: usize,
    pub faces: usize,
    pub euler: i64,
    /// Total genus, `(2 * components - euler) / 2`.
    pub genus: i64,
    pub components: usize,
    pub self_intersections: usize,
}

impl TopologyReport {
    /// One closed component, genus 0, no self-intersections.
    pub fn is_sphere_like(&self) -> bool {
        self.components == 1 && self.genus == 0 && self.self_intersections == 0
    }
}

impl fmt::Display for TopologyReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "V={} E={} F={} euler={} genus={} components={} self-intersections={}",
            self.vertices, self.edges, self.faces, self.euler, self.genus, self.components, self.self_intersections
        )
    }
}

pub fn topology_report(mesh: &TriangleMesh) -> TopologyReport {
    let v = mesh.vertex_count();
    let e = mesh.edges().len();
    let f = mesh.triangle_count();
    let euler = v as i64 - e as i64 + f as i64;
    let components = component_labels(mesh).1;
    TopologyReport {
        vertices: v,
        edges: e,
        faces: f,
        euler,
        genus: (2 * components as i64 - euler).div_euclid(2),
        components,
        self_intersections: super::self_intersections(mesh).count(),
    }
}

/// Per-triangle component label, plus the number of components.
/// Labels are numbered in order of each component's first triangle.
pub(crate) fn component_labels(mesh: &TriangleMesh) -> (Vec<usize>, usize) {
    let mut parent: Vec<usize> = (0..mesh.vertex_count()).collect();
    fn find(p: &mut [usize], mut x: usize) -> usize {
        while p[x] != x {
            p[x] = p[p[x]];
            x = p[x];
        }
        x
    }
    for t in &mesh.triangles {
        for k in 1..3 {
            let (a, b) = (find(&mut parent, t[0]), find(&mut parent, t[k]));
            if a != b {
                parent[a.max(b)] = a.min(b);
            }
        }
    }
    let mut label_of_root = vec![usize::MAX; mesh.vertex_count()];
    let mut count = 0;
    let labels = mesh
        .triangles
        .iter()
        .map(|t| {
            let r = find(&mut parent, t[0]);
            if label_of_root[r] == usize::MAX {
                label_of_root[r] = count;
                count += 1;
            }
            label_of_root[r]
        })
        .collect();
    (labels, count)
}

/// Splits a mesh into its connected components, each with compacted vertex indices.
pub fn connected_components(mesh: &TriangleMesh) -> Vec<TriangleMesh> {
    let (labels, count) = component_labels(mesh);
    let mut out = vec![TriangleMesh::default(); count];
    let mut remap = vec![usize::MAX; mesh.vertex_count()];
    for (t, tri) in mesh.triangles.iter().enumerate() {
        let m = &mut out[labels[t]];
        let mut new = [0; 3];
        for k in 0..3 {
            let v = tri[k];
            if remap[v] == usize::MAX {
                remap[v] = m.vertices.len();
                m.vertices.push(mesh.vertices[v]);
            }
            new[k] = remap[v];
        }
        m.triangles.push(new);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::shapes;
    use nalgebra::Vector3;

    #[test]
    fn icosahedron_counts() {
        let r = topology_report(&shapes::icosahedron(1.0));
        assert_eq!((r.vertices, r.edges, r.faces, r.euler, r.genus, r.components), (12, 30, 20, 2, 0, 1));
        assert!(r.is_sphere_like());
    }

    #[test]
    fn torus_has_genus_one() {
        let r = topology_report(&shapes::torus(5.0, 2.0, 24, 12));
        assert_eq!(r.euler, 0);
        assert_eq!(r.genus, 1);
    }

    #[test]
    fn disjoint_spheres_add() {
        let a = shapes::icosphere(2.0, 1);
        let m = a.merged(&a.translated(Vector3::new(10.0, 0.0, 0.0)));
        let r = topology_report(&m);
        assert_eq!(r.components, 2);
        assert_eq!(r.euler, 4);
        assert_eq!(r.genus, 0);
        let parts = connected_components(&m);
        assert_eq!(parts.len(), 2);
        assert_eq!((parts[0].vertex_count(), parts[0].triangle_count()), (a.vertex_count(), a.triangle_count()));
        assert_eq!(topology_report(&parts[1]).euler, 2);
    }
}
