//! Signed distance fields between triangle meshes and voxel lattices.
//!
//! Sign convention: negative inside the surface, positive outside.

mod index;

use std::collections::VecDeque;

use nalgebra::{Point3, Vector3};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::mesh::TriangleMesh;
use crate::volio::{Boundary, Geometry, VoxelGrid};

pub use index::{point_mesh_distance_bruteforce, Closest, SurfaceIndex};

pub const DEFAULT_CLIP_MM: f64 = 5.0;
/// Triangles smaller than this (mm^2) are rejected as degenerate.
pub const MIN_TRIANGLE_AREA: f64 = 1e-12;

/// Clipped signed distance volume in millimetres.
#[derive(Debug, Clone, PartialEq)]
pub struct SdfVolume {
    grid: VoxelGrid<f32>,
    clip_mm: f64,
}

impl SdfVolume {
    /// Wraps a grid, clamping its values into `[-clip_mm, clip_mm]`.
    pub fn from_grid(grid: VoxelGrid<f32>, clip_mm: f64) -> Result<Self> {
        if !(clip_mm > 0.0) {
            return Err(Error::arg(format!("clip must be positive, got {clip_mm}")));
        }
        if grid.data().iter().any(|v| v.is_nan()) {
            return Err(Error::arg("SDF contains NaN"));
        }
        let c = clip_mm as f32;
        let grid = grid.map(|v| v.clamp(-c, c));
        Ok(SdfVolume { grid, clip_mm })
    }

    pub fn grid(&self) -> &VoxelGrid<f32> {
        &self.grid
    }

    pub fn geometry(&self) -> &Geometry {
        self.grid.geometry()
    }

    pub fn clip_mm(&self) -> f64 {
        self.clip_mm
    }

    pub fn into_grid(self) -> VoxelGrid<f32> {
        self.grid
    }

    /// Trilinear value with edge clamping; never fails.
    pub(crate) fn value_clamped(&self, p: &Point3<f64>) -> f64 {
        self.grid.sample_world(p, Boundary::Clamp).unwrap_or(self.clip_mm)
    }

    pub(crate) fn gradient_clamped(&self, p: &Point3<f64>) -> Vector3<f64> {
        let h = 0.5 * self.geometry().min_spacing();
        let mut g = Vector3::zeros();
        for a in 0..3 {
            let mut d = Vector3::zeros();
            d[a] = h;
            g[a] = (self.value_clamped(&(p + d)) - self.value_clamped(&(p - d))) / (2.0 * h);
        }
        g
    }
}

/// SDF value and gradient at an arbitrary world point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SdfSample {
    pub value: f64,
    pub gradient: Vector3<f64>,
}

/// Trilinear value and central-difference gradient (step half the smallest spacing).
///
/// Points more than one voxel outside the lattice are a range error.
pub fn sample_sdf(sdf: &SdfVolume, p: &Point3<f64>) -> Result<SdfSample> {
    let g = sdf.geometry();
    let v = g.world_to_voxel(p);
    let dims = g.dims();
    for a in 0..3 {
        if !(v[a] >= -1.0 && v[a] <= dims[a] as f64) {
            return Err(Error::Range(format!("point {:?} lies outside the SDF lattice", p.coords.as_slice())));
        }
    }
    Ok(SdfSample { value: sdf.value_clamped(p), gradient: sdf.gradient_clamped(p) })
}

/// Sum and mean of squared voxelwise differences.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SdfL2 {
    pub sum: f64,
    pub mean: f64,
}

pub fn sdf_l2(pred: &SdfVolume, gt: &SdfVolume) -> Result<SdfL2> {
    if !pred.geometry().same_lattice(gt.geometry()) {
        return Err(Error::arg("SDF lattices differ"));
    }
    let sum = pred
        .grid
        .data()
        .iter()
        .zip(gt.grid.data())
        .map(|(&a, &b)| {
            let d = a as f64 - b as f64;
            d * d
        })
        .sum::<f64>();
    Ok(SdfL2 { sum, mean: sum / pred.grid.data().len() as f64 })
}

/// Clipped signed distance from every voxel centre of `geometry` to a closed mesh.
///
/// Distances are exact point-to-triangle distances. The sign comes from the
/// angle-weighted pseudo-normal at the closest feature, cross-checked by a
/// flood fill over voxels that lie clear of the surface; where the two
/// disagree the flood fill wins.
pub fn mesh_to_sdf(mesh: &TriangleMesh, geometry: &Geometry, clip_mm: f64) -> Result<SdfVolume> {
    if !(clip_mm > 0.0) {
        return Err(Error::arg(format!("clip must be positive, got {clip_mm}")));
    }
    mesh.check_closed_manifold()?;
    mesh.check_nondegenerate(MIN_TRIANGLE_AREA)?;
    let index = SurfaceIndex::new(mesh);
    let n = geometry.len();

    // voxels whose centre may lie within clip of some triangle
    let band = band_voxels(mesh, geometry, clip_mm);

    // exact distance and pseudo-normal side for band voxels
    let near: Vec<(usize, f64, f64)> = band
        .par_iter()
        .filter_map(|&i| {
            let p = geometry.center_of_voxel(i);
            index.closest_within(&p, clip_mm).map(|c| (i, c.distance, index.side(&p, &c)))
        })
        .collect();

    let mut dist = vec![f64::INFINITY; n];
    let mut side = vec![0f64; n];
    for &(i, d, s) in &near {
        dist[i] = d;
        side[i] = s;
    }

    // Voxels farther than half a voxel from the surface cannot be joined to a
    // voxel on the other side by a 6-connected step without crossing a voxel
    // that is within half a voxel, so these form a watertight barrier.
    let barrier_d = 0.5 * geometry.max_spacing() * (1.0 + 1e-9);
    let free: Vec<bool> = dist.iter().map(|&d| d > barrier_d).collect();
    let (component, n_components) = label_components_6(geometry.dims(), &free);

    // majority pseudo-normal vote per component
    let mut votes = vec![0i64; n_components];
    let mut seen = vec![false; n_components];
    for &(i, _, s) in &near {
        if free[i] {
            let c = component[i] as usize;
            votes[c] += s as i64;
            seen[c] = true;
        }
    }
    let mut comp_sign = vec![1f64; n_components];
    let mut representative = vec![usize::MAX; n_components];
    for i in 0..n {
        if free[i] && representative[component[i] as usize] == usize::MAX {
            representative[component[i] as usize] = i;
        }
    }
    for c in 0..n_components {
        comp_sign[c] = if seen[c] && votes[c] != 0 {
            votes[c].signum() as f64
        } else {
            // no band voxels carry a vote: classify one voxel with an unbounded query
            let p = geometry.center_of_voxel(representative[c]);
            match index.closest(&p) {
                Some(cl) => {
                    let s = index.side(&p, &cl);
                    if s == 0.0 {
                        1.0
                    } else {
                        s
                    }
                }
                None => 1.0,
            }
        };
    }

    let clip = clip_mm;
    let data: Vec<f32> = (0..n)
        .map(|i| {
            let d = dist[i].min(clip);
            let s = if free[i] { comp_sign[component[i] as usize] } else { side[i] };
            (s * d) as f32
        })
        .collect();
    SdfVolume::from_grid(VoxelGrid::new(geometry.clone(), data)?, clip_mm)
}

/// Sorted indices of voxels inside some triangle's bounding box grown by `r`.
fn band_voxels(mesh: &TriangleMesh, geometry: &Geometry, r: f64) -> Vec<usize> {
    let dims = geometry.dims();
    let ranges: Vec<[[usize; 2]; 3]> = (0..mesh.triangle_count())
        .filter_map(|t| {
            let b = crate::mesh::geom::Aabb::of_points(&mesh.corners(t)).expanded(r);
            let mut lo = [f64::INFINITY; 3];
            let mut hi = [f64::NEG_INFINITY; 3];
            for corner in 0..8 {
                let p = Point3::new(
                    if corner & 1 == 0 { b.lo.x } else { b.hi.x },
                    if corner & 2 == 0 { b.lo.y } else { b.hi.y },
                    if corner & 4 == 0 { b.lo.z } else { b.hi.z },
                );
                let v = geometry.world_to_voxel(&p);
                for a in 0..3 {
                    lo[a] = lo[a].min(v[a]);
                    hi[a] = hi[a].max(v[a]);
                }
            }
            let mut out = [[0usize; 2]; 3];
            for a in 0..3 {
                let l = lo[a].ceil().max(0.0);
                let h = hi[a].floor().min((dims[a] - 1) as f64);
                if l > h {
                    return None;
                }
                out[a] = [l as usize, h as usize];
            }
            Some(out)
        })
        .collect();
    let mut mark = vec![false; geometry.len()];
    for r in &ranges {
        for z in r[2][0]..=r[2][1] {
            for y in r[1][0]..=r[1][1] {
                let row = geometry.index(0, y, z);
                mark[row + r[0][0]..=row + r[0][1]].fill(true);
            }
        }
    }
    mark.iter().enumerate().filter(|(_, &m)| m).map(|(i, _)| i).collect()
}

/// 6-connected component labels of the `true` voxels (others get u32::MAX).
fn label_components_6(dims: [usize; 3], mask: &[bool]) -> (Vec<u32>, usize) {
    let (nx, ny, nz) = (dims[0], dims[1], dims[2]);
    let mut label = vec![u32::MAX; mask.len()];
    let mut count = 0usize;
    let mut queue = VecDeque::new();
    for seed in 0..mask.len() {
        if !mask[seed] || label[seed] != u32::MAX {
            continue;
        }
        label[seed] = count as u32;
        queue.push_back(seed);
        while let Some(i) = queue.pop_front() {
            let x = i % nx;
            let y = (i / nx) % ny;
            let z = i / (nx * ny);
            let mut visit = |j: usize| {
                if mask[j] && label[j] == u32::MAX {
                    label[j] = count as u32;
                    queue.push_back(j);
                }
            };
            if x > 0 {
                visit(i - 1);
            }
            if x + 1 < nx {
                visit(i + 1);
            }
            if y > 0 {
                visit(i - nx);
            }
            if y + 1 < ny {
                visit(i + nx);
            }
            if z > 0 {
                visit(i - nx * ny);
            }
            if z + 1 < nz {
                visit(i + nx * ny);
            }
        }
        count += 1;
    }
    (label, count)
}
