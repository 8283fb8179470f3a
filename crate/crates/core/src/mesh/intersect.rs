use rayon::prelude::*;

use super::geom::Aabb;
pub use super::geom::triangles_intersect;
use super::TriangleMesh;
use crate::spatial::UniformGrid;

/// Intersecting triangle pairs `(i, j)` with `i < j`, sorted.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct SelfIntersections {
    pub pairs: Vec<(usize, usize)>,
}

impl SelfIntersections {
    pub fn count(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }
}

fn share_vertex(a: &[usize; 3], b: &[usize; 3]) -> bool {
    a.iter().any(|v| b.contains(v))
}

fn pair_intersects(mesh: &TriangleMesh, i: usize, j: usize) -> bool {
    !share_vertex(&mesh.triangles[i], &mesh.triangles[j]) && triangles_intersect(&mesh.corners(i), &mesh.corners(j))
}

pub(crate) fn triangle_boxes(mesh: &TriangleMesh) -> Vec<Aabb> {
    (0..mesh.triangle_count()).map(|t| Aabb::of_points(&mesh.corners(t))).collect()
}

/// Exact self-intersection test over all triangle pairs that do not share a vertex.
pub fn self_intersections(mesh: &TriangleMesh) -> SelfIntersections {
    if mesh.triangle_count() < 2 {
        return SelfIntersections::default();
    }
    let boxes = triangle_boxes(mesh);
    let grid = UniformGrid::build(&boxes, 2.0 * mesh.median_edge_length());
    let pairs: Vec<(usize, usize)> = grid
        .filtered_pairs(|i, j| {
            let (i, j) = (i as usize, j as usize);
            boxes[i].overlaps(&boxes[j]) && pair_intersects(mesh, i, j)
        })
        .into_iter()
        .map(|(i, j)| (i as usize, j as usize))
        .collect();
    SelfIntersections { pairs }
}

/// All-pairs reference for [`self_intersections`].
pub fn self_intersections_bruteforce(mesh: &TriangleMesh) -> SelfIntersections {
    let n = mesh.triangle_count();
    let pairs = (0..n)
        .into_par_iter()
        .flat_map_iter(|i| (i + 1..n).filter(move |&j| pair_intersects(mesh, i, j)).map(move |j| (i, j)))
        .collect();
    SelfIntersections { pairs }
}
