use std::collections::VecDeque;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::marching::extract;
use super::{topology_report, TopologyReport, TriangleMesh};
use crate::error::{Error, Result};
use crate::sdf::{mesh_to_sdf, SdfVolume};
use crate::volio::VoxelGrid;

/// Lattice neighbours joined by an edge of the six-tetrahedron cell split used for
/// extraction. Using the same adjacency for foreground and background makes voxel
/// connectivity agree exactly with the extracted surface.
const KUHN_OFFSETS: [[i64; 3]; 14] = [
    [1, 0, 0],
    [-1, 0, 0],
    [0, 1, 0],
    [0, -1, 0],
    [0, 0, 1],
    [0, 0, -1],
    [1, 1, 0],
    [-1, -1, 0],
    [1, 0, 1],
    [-1, 0, -1],
    [0, 1, 1],
    [0, -1, -1],
    [1, 1, 1],
    [-1, -1, -1],
];

const MAX_RADIUS: usize = 3;

/// What topology correction changed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrectionReport {
    pub before: TopologyReport,
    pub after: TopologyReport,
    /// Structuring-element radius (voxels) of the opening/closing, if one was needed.
    pub radius: Option<usize>,
    pub components_removed: usize,
    pub cavities_filled: usize,
    pub handles_removed: i64,
    pub voxels_changed: usize,
}

/// Repairs the interior of an SDF so its zero level is one genus-0 surface.
pub fn topology_correct(sdf: &SdfVolume) -> Result<SdfVolume> {
    topology_correct_report(sdf).map(|r| r.0)
}

pub fn topology_correct_report(sdf: &SdfVolume) -> Result<(SdfVolume, CorrectionReport)> {
    let dims = sdf.geometry().dims();
    let original: Vec<bool> = sdf.grid().data().iter().map(|&v| v < 0.0).collect();
    let before = topology_report(&extract_mask(sdf, &original)?);

    let (mask, components_removed, cavities_filled) = clean(dims, original.clone());
    let mut mesh = extract_mask(sdf, &mask)?;
    let mut after = topology_report(&mesh);
    let mut radius = None;
    let mut final_mask = mask;
    if !after.is_sphere_like() {
        for r in 1..=MAX_RADIUS {
            let ball = ball_offsets(r);
            let m = dilate(dims, &erode(dims, &original, &ball), &ball);
            let m = erode(dims, &dilate(dims, &m, &ball), &ball);
            let (m, _, _) = clean(dims, m);
            if !m.iter().any(|&b| b) {
                continue;
            }
            mesh = extract_mask(sdf, &m)?;
            after = topology_report(&mesh);
            final_mask = m;
            if after.is_sphere_like() {
                radius = Some(r);
                break;
            }
        }
        if !after.is_sphere_like() {
            return Err(Error::CorrectionFailed { report: after });
        }
    }
    let voxels_changed = original.iter().zip(&final_mask).filter(|(a, b)| a != b).count();
    let corrected = mesh_to_sdf(&mesh, sdf.geometry(), sdf.clip_mm())?;
    let report = CorrectionReport {
        before,
        after,
        radius,
        components_removed,
        cavities_filled,
        handles_removed: before.genus - after.genus,
        voxels_changed,
    };
    Ok((corrected, report))
}

/// Zero level of the SDF with voxel insideness forced to `mask`.
fn extract_mask(sdf: &SdfVolume, mask: &[bool]) -> Result<TriangleMesh> {
    let half = (0.5 * sdf.geometry().min_spacing()) as f32;
    let tiny = 1e-6 * sdf.clip_mm() as f32;
    let data: Vec<f32> = sdf
        .grid()
        .data()
        .iter()
        .zip(mask)
        .map(|(&v, &inside)| match (v < 0.0, inside) {
            (true, true) => v,
            (false, false) => v.max(tiny),
            (false, true) => -half,
            (true, false) => half,
        })
        .collect();
    let field = VoxelGrid::new(sdf.geometry().clone(), data)?;
    extract(&field, 0.0, sdf.clip_mm())
}

/// Keeps the largest foreground component and fills enclosed background.
fn clean(dims: [usize; 3], mut mask: Vec<bool>) -> (Vec<bool>, usize, usize) {
    let (labels, sizes) = components(dims, &mask);
    let mut removed = 0;
    if let Some(keep) = (0..sizes.len()).max_by_key(|&c| (sizes[c], std::cmp::Reverse(c))) {
        removed = sizes.len() - 1;
        for (m, &l) in mask.iter_mut().zip(&labels) {
            *m = *m && l == keep as u32;
        }
    }
    let background: Vec<bool> = mask.iter().map(|&b| !b).collect();
    let (labels, sizes) = components(dims, &background);
    let mut open = vec![false; sizes.len()];
    for (i, &l) in labels.iter().enumerate() {
        if l != u32::MAX && on_border(dims, i) {
            open[l as usize] = true;
        }
    }
    let cavities = open.iter().filter(|&&o| !o).count();
    for (m, &l) in mask.iter_mut().zip(&labels) {
        if l != u32::MAX && !open[l as usize] {
            *m = true;
        }
    }
    (mask, removed, cavities)
}

fn on_border(dims: [usize; 3], i: usize) -> bool {
    let x = i % dims[0];
    let y = (i / dims[0]) % dims[1];
    let z = i / (dims[0] * dims[1]);
    x == 0 || y == 0 || z == 0 || x + 1 == dims[0] || y + 1 == dims[1] || z + 1 == dims[2]
}

/// Component labels and sizes of `mask` under the extraction adjacency.
fn components(dims: [usize; 3], mask: &[bool]) -> (Vec<u32>, Vec<usize>) {
    let mut labels = vec![u32::MAX; mask.len()];
    let mut sizes = Vec::new();
    let mut queue = VecDeque::new();
    for seed in 0..mask.len() {
        if !mask[seed] || labels[seed] != u32::MAX {
            continue;
        }
        let id = sizes.len() as u32;
        labels[seed] = id;
        queue.push_back(seed);
        let mut size = 0;
        while let Some(i) = queue.pop_front() {
            size += 1;
            let p = [(i % dims[0]) as i64, ((i / dims[0]) % dims[1]) as i64, (i / (dims[0] * dims[1])) as i64];
            for o in &KUHN_OFFSETS {
                if let Some(j) = shifted(dims, p, *o) {
                    if mask[j] && labels[j] == u32::MAX {
                        labels[j] = id;
                        queue.push_back(j);
                    }
                }
            }
        }
        sizes.push(size);
    }
    (labels, sizes)
}

#[inline]
fn shifted(dims: [usize; 3], p: [i64; 3], o: [i64; 3]) -> Option<usize> {
    let q = [p[0] + o[0], p[1] + o[1], p[2] + o[2]];
    for a in 0..3 {
        if q[a] < 0 || q[a] >= dims[a] as i64 {
            return None;
        }
    }
    Some(q[0] as usize + dims[0] * (q[1] as usize + dims[1] * q[2] as usize))
}

fn ball_offsets(r: usize) -> Vec<[i64; 3]> {
    let r = r as i64;
    let mut out = Vec::new();
    for z in -r..=r {
        for y in -r..=r {
            for x in -r..=r {
                if x * x + y * y + z * z <= r * r {
                    out.push([x, y, z]);
                }
            }
        }
    }
    out
}

/// Voxels outside the lattice count as background.
fn erode(dims: [usize; 3], mask: &[bool], ball: &[[i64; 3]]) -> Vec<bool> {
    morph(dims, mask, ball, true)
}

fn dilate(dims: [usize; 3], mask: &[bool], ball: &[[i64; 3]]) -> Vec<bool> {
    morph(dims, mask, ball, false)
}

fn morph(dims: [usize; 3], mask: &[bool], ball: &[[i64; 3]], erode: bool) -> Vec<bool> {
    (0..mask.len())
        .into_par_iter()
        .map(|i| {
            let p = [(i % dims[0]) as i64, ((i / dims[0]) % dims[1]) as i64, (i / (dims[0] * dims[1])) as i64];
            if erode {
                mask[i] && ball.iter().all(|o| shifted(dims, p, *o).is_some_and(|j| mask[j]))
            } else {
                mask[i] || ball.iter().any(|o| shifted(dims, p, *o).is_some_and(|j| mask[j]))
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::marching_cubes;
    use crate::volio::Geometry;

    fn field(n: usize, f: impl Fn(f64, f64, f64) -> f64 + Sync) -> SdfVolume {
        let g = Geometry::axis_aligned([n; 3], [1.0; 3], [0.0; 3]).unwrap();
        SdfVolume::from_grid(VoxelGrid::from_fn(g, |p| f(p.x, p.y, p.z) as f32), 5.0).unwrap()
    }

    #[test]
    fn ball_sizes() {
        assert_eq!(ball_offsets(1).len(), 7);
        assert_eq!(ball_offsets(2).len(), 33);
    }

    #[test]
    fn clean_sphere_is_nearly_unchanged() {
        let c = 15.5;
        let sdf = field(32, |x, y, z| ((x - c).powi(2) + (y - c).powi(2) + (z - c).powi(2)).sqrt() - 10.0);
        let (out, report) = topology_correct_report(&sdf).unwrap();
        assert_eq!(report.radius, None);
        assert_eq!(report.voxels_changed, 0);
        let mesh = marching_cubes(&out, 0.0).unwrap();
        for p in &mesh.vertices {
            let r = ((p.x - c).powi(2) + (p.y - c).powi(2) + (p.z - c).powi(2)).sqrt();
            assert!((r - 10.0).abs() < 0.2, "{r}");
        }
    }

    #[test]
    fn drilled_tunnel_is_closed() {
        let c = 15.5;
        let sdf = field(32, |x, y, z| {
            let sphere = ((x - c).powi(2) + (y - c).powi(2) + (z - c).powi(2)).sqrt() - 10.0;
            // square tunnel two voxels wide along z
            let tunnel = 1.0 - (x - c).abs().max((y - c).abs());
            sphere.max(tunnel)
        });
        let before = topology_report(&marching_cubes(&sdf, 0.0).unwrap());
        assert_eq!(before.genus, 1);
        let (out, report) = topology_correct_report(&sdf).unwrap();
        assert_eq!(report.after.genus, 0);
        assert_eq!(topology_report(&marching_cubes(&out, 0.0).unwrap()).genus, 0);
    }

    #[test]
    fn bubble_is_filled_and_stray_blob_dropped() {
        let c = 15.5;
        let sdf = field(40, |x, y, z| {
            let outer = ((x - c).powi(2) + (y - c).powi(2) + (z - c).powi(2)).sqrt() - 10.0;
            let bubble = 3.0 - ((x - c).powi(2) + (y - c).powi(2) + (z - c).powi(2)).sqrt();
            let blob = ((x - 34.0).powi(2) + (y - 34.0).powi(2) + (z - 34.0).powi(2)).sqrt() - 2.0;
            outer.max(bubble).min(blob)
        });
        let (_, report) = topology_correct_report(&sdf).unwrap();
        assert_eq!(report.cavities_filled, 1);
        assert_eq!(report.components_removed, 1);
        assert!(report.after.is_sphere_like());
    }
}
