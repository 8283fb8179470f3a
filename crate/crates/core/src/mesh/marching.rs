use std::collections::HashMap;

use nalgebra::Point3;
use rayon::prelude::*;

use super::TriangleMesh;
use crate::error::{Error, Result};
use crate::sdf::SdfVolume;
use crate::volio::VoxelGrid;

/// Corner offsets of the six Kuhn tetrahedra, as cube-corner bit masks (x=1, y=2, z=4).
/// Every tetrahedron runs 0 -> e_a -> e_a + e_b -> (1,1,1); all share the main diagonal,
/// and every face diagonal goes from the face's lowest to highest corner, so neighbouring
/// cells meet in matching triangles.
const TETS: [[usize; 4]; 6] = {
    let perms = [[0, 1, 2], [0, 2, 1], [1, 0, 2], [1, 2, 0], [2, 0, 1], [2, 1, 0]];
    let mut out = [[0usize; 4]; 6];
    let mut i = 0;
    while i < 6 {
        let a = 1 << perms[i][0];
        let b = 1 << perms[i][1];
        out[i] = [0, a, a | b, 7];
        i += 1;
    }
    out
};

/// Vertices never land closer than this fraction of an edge to a lattice node.
const MIN_EDGE_T: f64 = 1e-5;

/// Extracts the `iso` level set of an SDF as a closed, outward-oriented triangle mesh.
///
/// Cells are split into six tetrahedra. The lattice is padded by one layer of
/// outside values so the surface closes at the volume border. Vertices sit on the
/// roots of the trilinear interpolant along each tetrahedron edge, which is plain
/// linear interpolation on lattice-aligned edges.
pub fn marching_cubes(sdf: &SdfVolume, iso: f64) -> Result<TriangleMesh> {
    let clip = sdf.clip_mm();
    if !(iso > -clip && iso < clip) {
        return Err(Error::arg(format!("iso level {iso} outside (-{clip}, {clip})")));
    }
    extract(sdf.grid(), iso, clip)
}

/// Level-set extraction on a raw field; voxels outside the lattice take `outside`.
pub(crate) fn extract(grid: &VoxelGrid<f32>, iso: f64, outside: f64) -> Result<TriangleMesh> {
    let data = grid.data();
    let iso = perturbed_iso(data, iso, outside);
    let any_in = data.iter().any(|&v| (v as f64) < iso);
    let any_out = data.iter().any(|&v| (v as f64) > iso);
    if !any_in || !any_out {
        return Err(Error::EmptySurface);
    }
    let field = Padded { data, dims: grid.dims(), outside };
    let [nx, ny, nz] = field.pdims();

    // cells are indexed by their lowest padded node; collect per-slab triangles as edge keys
    let slabs: Vec<Vec<[(u64, u64); 3]>> = (0..nz - 1)
        .into_par_iter()
        .map(|z| {
            let mut tris = Vec::new();
            for y in 0..ny - 1 {
                for x in 0..nx - 1 {
                    cell_triangles(&field, iso, [x, y, z], &mut tris);
                }
            }
            tris
        })
        .collect();

    let mut ids: HashMap<(u64, u64), usize> = HashMap::new();
    let mut keys: Vec<(u64, u64)> = Vec::new();
    let mut triangles = Vec::with_capacity(slabs.iter().map(Vec::len).sum());
    for tri in slabs.iter().flatten() {
        let mut t = [0usize; 3];
        for k in 0..3 {
            t[k] = *ids.entry(tri[k]).or_insert_with(|| {
                keys.push(tri[k]);
                keys.len() - 1
            });
        }
        triangles.push(t);
    }

    let geometry = grid.geometry();
    let vertices: Vec<Point3<f64>> = keys
        .par_iter()
        .map(|&(a, b)| {
            let p = edge_root(&field, iso, field.node(a), field.node(b));
            geometry.voxel_to_world([p[0] - 1.0, p[1] - 1.0, p[2] - 1.0])
        })
        .collect();

    let mut mesh = TriangleMesh { vertices, triangles };
    if geometry.linear().determinant() < 0.0 {
        mesh = mesh.flipped();
    }
    Ok(mesh)
}

/// Moves the iso level off any stored value so no lattice node lies exactly on it.
fn perturbed_iso(data: &[f32], iso: f64, outside: f64) -> f64 {
    let hits = |level: f64| data.iter().any(|&v| v as f64 == level);
    if !hits(iso) {
        return iso;
    }
    let mut delta = (1e-5 * outside.abs().max(1e-3)).min((outside - iso).abs() / 2.0);
    loop {
        let level = iso + delta;
        if !hits(level) {
            return level;
        }
        delta *= 1.37;
    }
}

/// Field over the lattice padded by one node on every side.
struct Padded<'a> {
    data: &'a [f32],
    dims: [usize; 3],
    outside: f64,
}

impl Padded<'_> {
    fn pdims(&self) -> [usize; 3] {
        self.dims.map(|d| d + 2)
    }

    #[inline]
    fn key(&self, p: [usize; 3]) -> u64 {
        let [nx, ny, _] = self.pdims();
        (p[0] + nx * (p[1] + ny * p[2])) as u64
    }

    fn node(&self, k: u64) -> [usize; 3] {
        let [nx, ny, _] = self.pdims();
        let k = k as usize;
        [k % nx, (k / nx) % ny, k / (nx * ny)]
    }

    #[inline]
    fn value(&self, p: [usize; 3]) -> f64 {
        let [dx, dy, dz] = self.dims;
        if p[0] == 0 || p[1] == 0 || p[2] == 0 || p[0] > dx || p[1] > dy || p[2] > dz {
            return self.outside;
        }
        self.data[(p[0] - 1) + dx * ((p[1] - 1) + dy * (p[2] - 1))] as f64
    }
}

fn corner(base: [usize; 3], bits: usize) -> [usize; 3] {
    [base[0] + (bits & 1), base[1] + ((bits >> 1) & 1), base[2] + ((bits >> 2) & 1)]
}

fn offset(bits: usize) -> [i64; 3] {
    [(bits & 1) as i64, ((bits >> 1) & 1) as i64, ((bits >> 2) & 1) as i64]
}

fn det(a: [i64; 3], b: [i64; 3], c: [i64; 3]) -> i64 {
    a[0] * (b[1] * c[2] - b[2] * c[1]) - a[1] * (b[0] * c[2] - b[2] * c[0]) + a[2] * (b[0] * c[1] - b[1] * c[0])
}

fn sub(a: [i64; 3], b: [i64; 3]) -> [i64; 3] {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

fn cell_triangles(f: &Padded, iso: f64, base: [usize; 3], out: &mut Vec<[(u64, u64); 3]>) {
    let mut vals = [0f64; 8];
    let mut n_in = 0;
    for (bits, v) in vals.iter_mut().enumerate() {
        *v = f.value(corner(base, bits));
        n_in += (*v < iso) as usize;
    }
    if n_in == 0 || n_in == 8 {
        return;
    }
    let key = |bits: usize| f.key(corner(base, bits));
    let edge = |a: usize, b: usize| {
        let (ka, kb) = (key(a), key(b));
        (ka.min(kb), ka.max(kb))
    };
    for tet in &TETS {
        let inside: Vec<usize> = tet.iter().copied().filter(|&c| vals[c] < iso).collect();
        let outside: Vec<usize> = tet.iter().copied().filter(|&c| vals[c] >= iso).collect();
        match inside.len() {
            1 => {
                let i = inside[0];
                let (mut o1, mut o2, o3) = (outside[0], outside[1], outside[2]);
                let oi = offset(i);
                if det(sub(offset(o1), oi), sub(offset(o2), oi), sub(offset(o3), oi)) < 0 {
                    std::mem::swap(&mut o1, &mut o2);
                }
                out.push([edge(i, o1), edge(i, o2), edge(i, o3)]);
            }
            3 => {
                let o = outside[0];
                let (mut i1, mut i2, i3) = (inside[0], inside[1], inside[2]);
                let oo = offset(o);
                if det(sub(offset(i1), oo), sub(offset(i2), oo), sub(offset(i3), oo)) > 0 {
                    std::mem::swap(&mut i1, &mut i2);
                }
                out.push([edge(o, i1), edge(o, i2), edge(o, i3)]);
            }
            2 => {
                let (i1, i2) = (inside[0], inside[1]);
                let (mut o1, mut o2) = (outside[0], outside[1]);
                let b = offset(i1);
                if det(sub(offset(i2), b), sub(offset(o1), b), sub(offset(o2), b)) < 0 {
                    std::mem::swap(&mut o1, &mut o2);
                }
                let q = [edge(i1, o1), edge(i1, o2), edge(i2, o2), edge(i2, o1)];
                // split on the diagonal joining opposite tetrahedron edges; the choice only
                // depends on lattice indices so it is reproducible
                out.push([q[0], q[1], q[2]]);
                out.push([q[0], q[2], q[3]]);
            }
            _ => {}
        }
    }
}

/// Point on the segment between two padded nodes where the trilinear field crosses `iso`.
fn edge_root(f: &Padded, iso: f64, a: [usize; 3], b: [usize; 3]) -> [f64; 3] {
    let base = [a[0].min(b[0]), a[1].min(b[1]), a[2].min(b[2])];
    let mut c = [0f64; 8];
    for (bits, v) in c.iter_mut().enumerate() {
        *v = f.value(corner(base, bits));
    }
    let pa = [(a[0] - base[0]) as f64, (a[1] - base[1]) as f64, (a[2] - base[2]) as f64];
    let pb = [(b[0] - base[0]) as f64, (b[1] - base[1]) as f64, (b[2] - base[2]) as f64];
    let at = |t: f64| [pa[0] + t * (pb[0] - pa[0]), pa[1] + t * (pb[1] - pa[1]), pa[2] + t * (pb[2] - pa[2])];
    let g = |t: f64| {
        let [x, y, z] = at(t);
        let c00 = c[0] * (1.0 - x) + c[1] * x;
        let c10 = c[2] * (1.0 - x) + c[3] * x;
        let c01 = c[4] * (1.0 - x) + c[5] * x;
        let c11 = c[6] * (1.0 - x) + c[7] * x;
        (c00 * (1.0 - y) + c10 * y) * (1.0 - z) + (c01 * (1.0 - y) + c11 * y) * z - iso
    };
    let axis_edge = (0..3).filter(|&k| a[k] != b[k]).count() == 1;
    let (g0, g1) = (g(0.0), g(1.0));
    let mut t = g0 / (g0 - g1);
    if !axis_edge {
        // Illinois regula falsi on the bracketing interval
        let (mut lo, mut hi, mut glo, mut ghi) = (0.0, 1.0, g0, g1);
        let mut side = 0i8;
        for _ in 0..100 {
            t = (lo * ghi - hi * glo) / (ghi - glo);
            let gt = g(t);
            if gt == 0.0 || (hi - lo) < 1e-13 {
                break;
            }
            if (gt < 0.0) == (glo < 0.0) {
                lo = t;
                glo = gt;
                if side == -1 {
                    ghi /= 2.0;
                }
                side = -1;
            } else {
                hi = t;
                ghi = gt;
                if side == 1 {
                    glo /= 2.0;
                }
                side = 1;
            }
        }
    }
    let t = t.clamp(MIN_EDGE_T, 1.0 - MIN_EDGE_T);
    let p = at(t);
    [base[0] as f64 + p[0], base[1] as f64 + p[1], base[2] as f64 + p[2]]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{connected_components, topology_report};
    use crate::sdf::sample_sdf;
    use crate::volio::Geometry;

    fn sphere_sdf(center: [f64; 3], r: f64, n: usize, origin: f64) -> SdfVolume {
        let g = Geometry::axis_aligned([n; 3], [1.0; 3], [origin; 3]).unwrap();
        let grid = VoxelGrid::from_fn(g, |p| {
            (((p.x - center[0]).powi(2) + (p.y - center[1]).powi(2) + (p.z - center[2]).powi(2)).sqrt() - r) as f32
        });
        SdfVolume::from_grid(grid, 5.0).unwrap()
    }

    #[test]
    fn tets_have_unit_volume_and_cover_cube() {
        let mut total = 0;
        for t in &TETS {
            let o = offset(t[0]);
            total += det(sub(offset(t[1]), o), sub(offset(t[2]), o), sub(offset(t[3]), o)).abs();
        }
        assert_eq!(total, 6);
    }

    #[test]
    fn sphere_is_closed_and_accurate() {
        let sdf = sphere_sdf([0.3, -0.2, 0.1], 20.0, 51, -25.0);
        let mesh = marching_cubes(&sdf, 0.0).unwrap();
        mesh.check_closed_manifold().unwrap();
        let r = topology_report(&mesh);
        assert_eq!((r.euler, r.components, r.self_intersections), (2, 1, 0));
        let c = Point3::new(0.3, -0.2, 0.1);
        let worst = mesh.vertices.iter().map(|p| ((p - c).norm() - 20.0).abs()).fold(0.0, f64::max);
        assert!(worst < 0.3, "{worst}");
        for p in &mesh.vertices {
            assert!(sample_sdf(&sdf, p).unwrap().value.abs() < 1e-4 * 5.0);
        }
        // outward orientation: positive enclosed volume
        let vol: f64 = (0..mesh.triangle_count())
            .map(|t| {
                let [a, b, cc] = mesh.corners(t);
                a.coords.dot(&b.coords.cross(&cc.coords)) / 6.0
            })
            .sum();
        assert!(vol > 0.0);
    }

    #[test]
    fn two_spheres_two_components() {
        let g = Geometry::axis_aligned([40, 20, 20], [1.0; 3], [0.0; 3]).unwrap();
        let grid = VoxelGrid::from_fn(g, |p| {
            let a = ((p.x - 10.0).powi(2) + (p.y - 10.0).powi(2) + (p.z - 10.0).powi(2)).sqrt() - 6.0;
            let b = ((p.x - 29.0).powi(2) + (p.y - 10.0).powi(2) + (p.z - 10.0).powi(2)).sqrt() - 6.0;
            a.min(b) as f32
        });
        let mesh = marching_cubes(&SdfVolume::from_grid(grid, 5.0).unwrap(), 0.0).unwrap();
        let parts = connected_components(&mesh);
        assert_eq!(parts.len(), 2);
        for p in parts {
            assert_eq!(topology_report(&p).euler, 2);
        }
    }

    #[test]
    fn exact_iso_values_and_errors() {
        let g = Geometry::axis_aligned([6; 3], [1.0; 3], [0.0; 3]).unwrap();
        let grid = VoxelGrid::from_fn(g.clone(), |p| (p.x - 2.0) as f32);
        let mesh = marching_cubes(&SdfVolume::from_grid(grid, 5.0).unwrap(), 0.0).unwrap();
        mesh.check_closed_manifold().unwrap();
        let flat = SdfVolume::from_grid(VoxelGrid::filled(g, 5.0), 5.0).unwrap();
        assert!(matches!(marching_cubes(&flat, 0.0), Err(Error::EmptySurface)));
        assert!(matches!(marching_cubes(&flat, 5.0), Err(Error::Argument(_))));
    }

    #[test]
    fn mirrored_affine_keeps_outward_orientation() {
        let mut a = nalgebra::Matrix4::identity();
        a[(0, 0)] = -1.0;
        let g = Geometry::new([20; 3], a).unwrap();
        let grid = VoxelGrid::from_fn(g, |p| ((p.coords - nalgebra::Vector3::new(-9.5, 9.5, 9.5)).norm() - 6.0) as f32);
        let mesh = marching_cubes(&SdfVolume::from_grid(grid, 5.0).unwrap(), 0.0).unwrap();
        let c = nalgebra::Vector3::new(-9.5, 9.5, 9.5);
        let vol: f64 = (0..mesh.triangle_count())
            .map(|t| {
                let [p, q, r] = mesh.corners(t);
                (p.coords - c).dot(&(q.coords - c).cross(&(r.coords - c))) / 6.0
            })
            .sum();
        assert!(vol > 0.0);
    }
}
