use std::collections::HashSet;

use nalgebra::{Point3, Vector3};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{self_intersections, TriangleMesh};
use crate::error::{Error, Result};
use crate::sdf::{SdfVolume, SurfaceIndex};

/// Gradient-descent settings for surface refinement.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RefineParams {
    /// Initial step size multiplying the energy gradient.
    pub step_mm: f64,
    pub iters: usize,
    pub lambda_smooth: f64,
}

impl Default for RefineParams {
    fn default() -> Self {
        RefineParams { step_mm: 0.1, iters: 100, lambda_smooth: 0.1 }
    }
}

/// Energy after each accepted iteration (the first entry is the starting energy).
#[derive(Debug, Clone, PartialEq, Default)]
pub struct RefineTrace {
    pub energies: Vec<f64>,
    pub accepted: usize,
    pub rejected: usize,
    /// Vertex moves undone because they created a self-intersection.
    pub reverted_vertices: usize,
    pub final_step: f64,
}

/// Maximum per-iteration displacement as a fraction of the mean incident edge length.
const MAX_MOVE_FRACTION: f64 = 0.4;
const GUARD_ROUNDS: usize = 10;
/// Offset used when projecting a pial vertex back onto the white surface.
const PROJECTION_OFFSET_MM: f64 = 1e-3;

/// Moves vertices to the SDF zero level while keeping the surface smooth and free of
/// self-intersections.
pub fn refine_to_sdf(mesh: &TriangleMesh, sdf: &SdfVolume, params: &RefineParams) -> Result<TriangleMesh> {
    refine_to_sdf_traced(mesh, sdf, params).map(|r| r.0)
}

pub fn refine_to_sdf_traced(mesh: &TriangleMesh, sdf: &SdfVolume, params: &RefineParams) -> Result<(TriangleMesh, RefineTrace)> {
    descend(mesh, sdf, params, None)
}

/// Grows the pial surface outward from the white surface.
///
/// The output shares the white mesh's connectivity, so vertex `i` of both surfaces
/// correspond. No vertex ends up inside the white surface.
pub fn expand_pial(white: &TriangleMesh, pial_sdf: &SdfVolume, params: &RefineParams) -> Result<TriangleMesh> {
    white.check_closed_manifold()?;
    let index = SurfaceIndex::new(white);
    descend(white, pial_sdf, params, Some(&index)).map(|r| r.0)
}

struct Problem<'a> {
    sdf: &'a SdfVolume,
    lambda: f64,
    start: Vec<usize>,
    nbrs: Vec<usize>,
}

impl Problem<'_> {
    fn neighbours(&self, v: usize) -> &[usize] {
        &self.nbrs[self.start[v]..self.start[v + 1]]
    }

    fn laplacian(&self, x: &[Point3<f64>]) -> Vec<Vector3<f64>> {
        (0..x.len())
            .into_par_iter()
            .map(|v| {
                let nb = self.neighbours(v);
                if nb.is_empty() {
                    return Vector3::zeros();
                }
                let mean = nb.iter().fold(Vector3::zeros(), |acc, &u| acc + x[u].coords) / nb.len() as f64;
                x[v].coords - mean
            })
            .collect()
    }

    fn energy(&self, x: &[Point3<f64>]) -> f64 {
        let lap = self.laplacian(x);
        let terms: Vec<f64> = x
            .par_iter()
            .zip(lap.par_iter())
            .map(|(p, l)| {
                let s = self.sdf.value_clamped(p);
                s * s + self.lambda * l.norm_squared()
            })
            .collect();
        terms.iter().sum()
    }

    fn gradient(&self, x: &[Point3<f64>]) -> Vec<Vector3<f64>> {
        let lap = self.laplacian(x);
        // L_u / |N(u)|, pushed back to every neighbour of u
        let scaled: Vec<Vector3<f64>> = (0..x.len()).map(|u| lap[u] / self.neighbours(u).len().max(1) as f64).collect();
        (0..x.len())
            .into_par_iter()
            .map(|v| {
                let s = self.sdf.value_clamped(&x[v]);
                let data = 2.0 * s * self.sdf.gradient_clamped(&x[v]);
                let back = self.neighbours(v).iter().fold(Vector3::zeros(), |acc, &u| acc + scaled[u]);
                data + 2.0 * self.lambda * (lap[v] - back)
            })
            .collect()
    }
}

fn descend(mesh: &TriangleMesh, sdf: &SdfVolume, params: &RefineParams, white: Option<&SurfaceIndex>) -> Result<(TriangleMesh, RefineTrace)> {
    mesh.check_closed_manifold()?;
    if !(params.step_mm > 0.0) || !(params.lambda_smooth >= 0.0) {
        return Err(Error::arg("refinement needs step_mm > 0 and lambda_smooth >= 0"));
    }
    let nb = mesh.vertex_neighbors();
    let mut start = Vec::with_capacity(nb.len() + 1);
    start.push(0);
    for l in &nb {
        start.push(start.last().unwrap() + l.len());
    }
    let problem = Problem { sdf, lambda: params.lambda_smooth, start, nbrs: nb.into_iter().flatten().collect() };

    let mut x = mesh.vertices.clone();
    let mut e = problem.energy(&x);
    let baseline: HashSet<(usize, usize)> = self_intersections(mesh).pairs.into_iter().collect();
    let mut trace = RefineTrace { energies: vec![e], ..Default::default() };
    let mut alpha = params.step_mm;
    let min_alpha = params.step_mm * 1e-6;
    let mut clearance = white.map(|_| Clearance::new(&x));

    for _ in 0..params.iters {
        if alpha < min_alpha {
            break;
        }
        let g = problem.gradient(&x);
        let current = mesh.with_vertices(x.clone());
        let caps: Vec<f64> = (0..x.len())
            .map(|v| {
                let nb = problem.neighbours(v);
                let mean = nb.iter().map(|&u| (x[u] - x[v]).norm()).sum::<f64>() / nb.len().max(1) as f64;
                MAX_MOVE_FRACTION * mean
            })
            .collect();
        let mut trial: Vec<Point3<f64>> = x
            .par_iter()
            .zip(g.par_iter())
            .zip(caps.par_iter())
            .map(|((p, gv), &cap)| {
                let mut d = -alpha * gv;
                let len = d.norm();
                if len > cap {
                    d *= cap / len;
                }
                p + d
            })
            .collect();
        if let (Some(index), Some(c)) = (white, clearance.as_mut()) {
            project_outside(index, &mut trial, c);
        }
        let reverted = guard_intersections(&current, &mut trial, &x, &baseline);
        let Some(reverted) = reverted else {
            trace.rejected += 1;
            alpha *= 0.5;
            continue;
        };
        let e_new = problem.energy(&trial);
        if e_new <= e {
            x = trial;
            e = e_new;
            trace.energies.push(e);
            trace.accepted += 1;
            trace.reverted_vertices += reverted;
        } else {
            trace.rejected += 1;
            alpha *= 0.5;
        }
    }
    trace.final_step = alpha;
    Ok((mesh.with_vertices(x), trace))
}

/// Last checked position of each vertex and its distance to the white surface there.
/// A vertex that has since moved less than that distance is still outside.
struct Clearance {
    anchor: Vec<Point3<f64>>,
    distance: Vec<f64>,
}

impl Clearance {
    fn new(x: &[Point3<f64>]) -> Self {
        Clearance { anchor: x.to_vec(), distance: vec![0.0; x.len()] }
    }
}

/// Projects vertices that fell inside the white surface back just outside it.
fn project_outside(index: &SurfaceIndex, x: &mut [Point3<f64>], clearance: &mut Clearance) {
    x.par_iter_mut()
        .zip(clearance.anchor.par_iter_mut())
        .zip(clearance.distance.par_iter_mut())
        .for_each(|((p, anchor), dist)| {
            if (*p - *anchor).norm() < *dist {
                return;
            }
            *dist = 0.0;
            if let Some(c) = index.closest(p) {
                if index.side(p, &c) < 0.0 {
                    let n = index.pseudo_normal(&c).try_normalize(0.0).unwrap_or_else(Vector3::zeros);
                    *p = c.point + n * PROJECTION_OFFSET_MM;
                } else {
                    *dist = c.distance;
                }
            }
            *anchor = *p;
        });
}

/// Reverts vertices of triangles that newly intersect after the move.
/// Returns the number of reverted vertices, or `None` if the guard gave up.
fn guard_intersections(
    mesh: &TriangleMesh,
    trial: &mut [Point3<f64>],
    previous: &[Point3<f64>],
    baseline: &HashSet<(usize, usize)>,
) -> Option<usize> {
    let mut reverted = HashSet::new();
    for _ in 0..GUARD_ROUNDS {
        let m = mesh.with_vertices(trial.to_vec());
        let fresh: Vec<(usize, usize)> = self_intersections(&m).pairs.into_iter().filter(|p| !baseline.contains(p)).collect();
        if fresh.is_empty() {
            return Some(reverted.len());
        }
        for (a, b) in fresh {
            for &v in mesh.triangles[a].iter().chain(mesh.triangles[b].iter()) {
                trial[v] = previous[v];
                reverted.insert(v);
            }
        }
    }
    None
}
