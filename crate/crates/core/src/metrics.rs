//! Surface distances, overlap and correlation statistics.

use std::collections::BTreeMap;

use nalgebra::Point3;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mesh::geom::Aabb;
use crate::mesh::TriangleMesh;
use crate::sdf::SurfaceIndex;
use crate::spatial::UniformGrid;

/// How "nearest point on the other surface" is measured.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DistanceMode {
    /// Exact distance to the closest point on any triangle.
    #[default]
    PointToSurface,
    /// Distance to the closest vertex.
    VertexToVertex,
}

/// Distance from each vertex of `from` to the surface (or vertex set) of `to`.
pub fn directed_distances(from: &TriangleMesh, to: &TriangleMesh, mode: DistanceMode) -> Result<Vec<f64>> {
    if from.vertices.is_empty() || to.vertices.is_empty() || to.triangles.is_empty() && mode == DistanceMode::PointToSurface {
        return Err(Error::arg("distance between empty meshes"));
    }
    Ok(match mode {
        DistanceMode::PointToSurface => {
            let index = SurfaceIndex::new(to);
            from.vertices.par_iter().map(|p| index.distance(p)).collect()
        }
        DistanceMode::VertexToVertex => nearest_points(&to.vertices, &from.vertices, to.median_edge_length())
            .into_iter()
            .map(|(_, d)| d)
            .collect(),
    })
}

/// Index and distance of the nearest `sources` point for every query (ties to the lower index).
pub(crate) fn nearest_points(sources: &[Point3<f64>], queries: &[Point3<f64>], cell: f64) -> Vec<(usize, f64)> {
    let boxes: Vec<Aabb> = sources.iter().map(|p| Aabb { lo: *p, hi: *p }).collect();
    let grid = UniformGrid::build(&boxes, cell);
    queries
        .par_iter()
        .map(|q| {
            let (i, d) = grid.nearest(q, f64::INFINITY, |i| (sources[i as usize] - q).norm()).expect("nonempty source");
            (i as usize, d)
        })
        .collect()
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Average symmetric surface distance.
pub fn asd(a: &TriangleMesh, b: &TriangleMesh, mode: DistanceMode) -> Result<f64> {
    Ok(surface_distances(a, b, mode)?.asd_mm)
}

/// 90th percentile of the pooled directed distances.
pub fn hd90(a: &TriangleMesh, b: &TriangleMesh) -> Result<f64> {
    Ok(surface_distances(a, b, DistanceMode::PointToSurface)?.hd90_mm)
}

/// ASD with the robust and classical Hausdorff distances.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SurfaceDistances {
    pub asd_mm: f64,
    pub hd90_mm: f64,
    pub hd100_mm: f64,
}

pub fn surface_distances(a: &TriangleMesh, b: &TriangleMesh, mode: DistanceMode) -> Result<SurfaceDistances> {
    let ab = directed_distances(a, b, mode)?;
    let ba = directed_distances(b, a, mode)?;
    // pool in a fixed order so the result does not depend on argument order
    let mut pooled: Vec<f64> = ab.iter().chain(&ba).copied().collect();
    pooled.sort_by(f64::total_cmp);
    Ok(SurfaceDistances {
        asd_mm: 0.5 * (mean(&ab) + mean(&ba)),
        hd90_mm: percentile_sorted(&pooled, 90.0),
        hd100_mm: *pooled.last().unwrap(),
    })
}

/// Percentile `q` in [0, 100], linearly interpolated between closest ranks.
pub fn percentile(values: &[f64], q: f64) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::arg("percentile of an empty sample"));
    }
    if !(0.0..=100.0).contains(&q) {
        return Err(Error::arg(format!("percentile {q} outside [0, 100]")));
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    Ok(percentile_sorted(&v, q))
}

fn percentile_sorted(v: &[f64], q: f64) -> f64 {
    let rank = q / 100.0 * (v.len() - 1) as f64;
    let lo = rank.floor() as usize;
    let hi = (lo + 1).min(v.len() - 1);
    let t = rank - lo as f64;
    if t == 0.0 {
        v[lo]
    } else {
        v[lo] + t * (v[hi] - v[lo])
    }
}

/// Dice overlap of `label` between two label arrays, `None` when neither contains it.
pub fn dice(a: &[i32], b: &[i32], label: i32) -> Result<Option<f64>> {
    if a.len() != b.len() {
        return Err(Error::arg(format!("label arrays differ in length ({} vs {})", a.len(), b.len())));
    }
    let (mut na, mut nb, mut both) = (0usize, 0usize, 0usize);
    for (&x, &y) in a.iter().zip(b) {
        na += (x == label) as usize;
        nb += (y == label) as usize;
        both += (x == label && y == label) as usize;
    }
    if na + nb == 0 {
        return Ok(None);
    }
    Ok(Some(2.0 * both as f64 / (na + nb) as f64))
}

/// Dice for every label present in either array.
pub fn dice_all(a: &[i32], b: &[i32]) -> Result<BTreeMap<i32, f64>> {
    let mut labels: Vec<i32> = a.iter().chain(b).copied().collect();
    labels.sort_unstable();
    labels.dedup();
    let mut out = BTreeMap::new();
    for l in labels {
        if let Some(d) = dice(a, b, l)? {
            out.insert(l, d);
        }
    }
    Ok(out)
}

/// Unweighted mean of per-label Dice; `None` for an empty set.
pub fn macro_dice(per_label: &BTreeMap<i32, f64>) -> Option<f64> {
    if per_label.is_empty() {
        None
    } else {
        Some(per_label.values().sum::<f64>() / per_label.len() as f64)
    }
}

/// Pearson correlation with a Fisher-z 95% confidence interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pearson {
    pub r: f64,
    pub n: usize,
    /// Present when n > 3.
    pub ci95: Option<(f64, f64)>,
    /// The interval excludes zero.
    pub significant: bool,
}

const Z_975: f64 = 1.96;

pub fn pearson(x: &[f64], y: &[f64]) -> Result<Pearson> {
    if x.len() != y.len() {
        return Err(Error::arg(format!("series differ in length ({} vs {})", x.len(), y.len())));
    }
    let n = x.len();
    if n < 2 {
        return Err(Error::arg("correlation needs at least 2 pairs"));
    }
    if x.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(Error::arg("series contain non-finite values"));
    }
    let (mx, my) = (mean(x), mean(y));
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (&a, &b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::Undefined("correlation of a constant series".into()));
    }
    let r = (sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0);
    let ci95 = fisher_ci(r, n);
    let significant = ci95.is_some_and(|(lo, hi)| lo > 0.0 || hi < 0.0);
    Ok(Pearson { r, n, ci95, significant })
}

/// 95% interval for a correlation `r` from `n` pairs via the Fisher z-transform.
pub fn fisher_ci(r: f64, n: usize) -> Option<(f64, f64)> {
    if n <= 3 {
        return None;
    }
    let z = r.atanh();
    let half = Z_975 / ((n - 3) as f64).sqrt();
    Some(((z - half).tanh(), (z + half).tanh()))
}

/// `100 * |estimate - reference| / |reference|`.
pub fn abs_pct_error(reference: f64, estimate: f64) -> Result<f64> {
    if reference == 0.0 {
        return Err(Error::Undefined("percentage error against a zero reference".into()));
    }
    Ok(100.0 * (estimate - reference).abs() / reference.abs())
}

/// Correlation entry of a [`MetricReport`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PearsonSummary {
    pub r: f64,
    pub ci_lo: Option<f64>,
    pub ci_hi: Option<f64>,
    pub significant: bool,
}

impl From<Pearson> for PearsonSummary {
    fn from(p: Pearson) -> Self {
        PearsonSummary { r: p.r, ci_lo: p.ci95.map(|c| c.0), ci_hi: p.ci95.map(|c| c.1), significant: p.significant }
    }
}

/// JSON evaluation report.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct MetricReport {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub white: Option<SurfaceDistances>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pial: Option<SurfaceDistances>,
    pub dice: BTreeMap<String, f64>,
    pub pearson: BTreeMap<String, PearsonSummary>,
}
