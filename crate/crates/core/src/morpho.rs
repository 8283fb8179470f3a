//! Area, enclosed volume, cortical thickness and per-region summaries.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use nalgebra::{Point3, Vector3};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mesh::TriangleMesh;
use crate::sdf::SurfaceIndex;

/// Name of the row covering the whole surface.
pub const WHOLE_HEMISPHERE: &str = "whole-hemisphere";

/// Relative tolerance below which a negative gray-matter volume is treated as zero.
const VOLUME_EPS: f64 = 1e-9;

/// Summed triangle areas in mm^2.
pub fn surface_area(mesh: &TriangleMesh) -> f64 {
    (0..mesh.triangle_count()).map(|t| mesh.triangle_area(t)).sum()
}

/// Signed volume enclosed by a closed mesh; positive for outward orientation.
pub fn enclosed_volume(mesh: &TriangleMesh) -> Result<f64> {
    mesh.check_closed_manifold()?;
    let n = mesh.vertex_count() as f64;
    let c = mesh.vertices.iter().fold(Vector3::zeros(), |acc, p| acc + p.coords) / n;
    Ok((0..mesh.triangle_count())
        .map(|t| {
            let [a, b, d] = mesh.corners(t);
            tet_volume(&(a - c), &(b - c), &(d - c))
        })
        .sum())
}

#[inline]
fn tet_volume(a: &Point3<f64>, b: &Point3<f64>, c: &Point3<f64>) -> f64 {
    a.coords.dot(&b.coords.cross(&c.coords)) / 6.0
}

/// Volume between the pial and white surfaces.
pub fn gray_matter_volume(white: &TriangleMesh, pial: &TriangleMesh) -> Result<f64> {
    let vw = enclosed_volume(white)?;
    let vp = enclosed_volume(pial)?;
    let v = vp - vw;
    if v < 0.0 {
        if -v <= VOLUME_EPS * vp.abs().max(vw.abs()) {
            return Ok(0.0);
        }
        return Err(Error::Geometry(format!("pial volume {vp:.3} mm^3 is smaller than white volume {vw:.3} mm^3")));
    }
    Ok(v)
}

/// Per-vertex thickness: mean of the white-vertex-to-pial and pial-vertex-to-white
/// surface distances at corresponding vertices.
pub fn cortical_thickness(white: &TriangleMesh, pial: &TriangleMesh) -> Result<Vec<f64>> {
    if white.vertex_count() != pial.vertex_count() || white.vertex_count() == 0 {
        return Err(Error::arg(format!(
            "white and pial meshes lack a vertex correspondence ({} vs {} vertices)",
            white.vertex_count(),
            pial.vertex_count()
        )));
    }
    let to_pial = SurfaceIndex::new(pial);
    let to_white = SurfaceIndex::new(white);
    Ok(white
        .vertices
        .par_iter()
        .zip(pial.vertices.par_iter())
        .map(|(w, p)| 0.5 * (to_pial.distance(w) + to_white.distance(p)))
        .collect())
}

/// Summary of one region.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MorphometryRecord {
    pub region: String,
    pub surface_area_mm2: f64,
    pub gm_volume_mm3: f64,
    /// Area-weighted mean; `None` for a region without vertices.
    pub mean_thickness_mm: Option<f64>,
    pub vertex_count: usize,
}

/// Signed volume of the prism between corresponding white and pial triangles.
///
/// Side quads are split on the diagonal from the lower-indexed white vertex to the
/// higher-indexed pial vertex, so neighbouring prisms share side faces exactly and
/// the prisms sum to the pial volume minus the white volume.
fn prism_volume(white: &TriangleMesh, pial: &TriangleMesh, t: usize) -> f64 {
    let tri = white.triangles[t];
    let r = white.vertices[tri[0]].coords;
    let w = |i: usize| Point3::from(white.vertices[i].coords - r);
    let p = |i: usize| Point3::from(pial.vertices[i].coords - r);
    let mut v = tet_volume(&p(tri[0]), &p(tri[1]), &p(tri[2])) - tet_volume(&w(tri[0]), &w(tri[1]), &w(tri[2]));
    for k in 0..3 {
        let (i, j) = (tri[k], tri[(k + 1) % 3]);
        if i < j {
            v += tet_volume(&w(i), &w(j), &p(j)) + tet_volume(&w(i), &p(j), &p(i));
        } else {
            v += tet_volume(&w(i), &w(j), &p(i)) + tet_volume(&w(j), &p(j), &p(i));
        }
    }
    v
}

/// Most frequent label among a triangle's corners; ties go to the lowest label.
fn majority(labels: [i32; 3]) -> i32 {
    let [a, b, c] = labels;
    if a == b || a == c {
        a
    } else if b == c {
        b
    } else {
        a.min(b).min(c)
    }
}

/// Region records for a white/pial pair.
///
/// `regions` maps every vertex label to a region name; several labels may share a
/// region. The first record always covers the whole surface; the rest follow in
/// region-name order, including regions without vertices.
pub fn aggregate_by_parcel(
    white: &TriangleMesh,
    pial: &TriangleMesh,
    thickness: &[f64],
    labels: &[i32],
    regions: &BTreeMap<i32, String>,
) -> Result<Vec<MorphometryRecord>> {
    let n = white.vertex_count();
    if pial.vertex_count() != n || pial.triangles != white.triangles {
        return Err(Error::arg("white and pial meshes must share connectivity"));
    }
    if thickness.len() != n || labels.len() != n {
        return Err(Error::arg(format!("expected {n} thickness values and labels, got {} and {}", thickness.len(), labels.len())));
    }
    let mut names: Vec<&str> = regions.values().map(String::as_str).collect();
    names.sort_unstable();
    names.dedup();
    let slot: BTreeMap<&str, usize> = names.iter().enumerate().map(|(i, n)| (*n, i)).collect();
    let mut vertex_region = Vec::with_capacity(n);
    for (v, l) in labels.iter().enumerate() {
        let name = regions
            .get(l)
            .ok_or_else(|| Error::Mapping(format!("vertex {v} has label {l}, which is not in the region table")))?;
        vertex_region.push(slot[name.as_str()]);
    }

    let areas = white.vertex_areas();
    let mut area = vec![0.0; names.len()];
    let mut weighted = vec![0.0; names.len()];
    let mut count = vec![0usize; names.len()];
    for v in 0..n {
        let r = vertex_region[v];
        area[r] += areas[v];
        weighted[r] += areas[v] * thickness[v];
        count[r] += 1;
    }
    let prisms: Vec<f64> = (0..white.triangle_count()).into_par_iter().map(|t| prism_volume(white, pial, t)).collect();
    let mut volume = vec![0.0; names.len()];
    for (t, tri) in white.triangles.iter().enumerate() {
        let l = majority([labels[tri[0]], labels[tri[1]], labels[tri[2]]]);
        volume[slot[regions[&l].as_str()]] += prisms[t];
    }

    let total_area: f64 = areas.iter().sum();
    let total_weighted: f64 = areas.iter().zip(thickness).map(|(a, t)| a * t).sum();
    let mut out = vec![MorphometryRecord {
        region: WHOLE_HEMISPHERE.to_string(),
        surface_area_mm2: surface_area(white),
        gm_volume_mm3: gray_matter_volume(white, pial)?,
        mean_thickness_mm: (total_area > 0.0).then(|| total_weighted / total_area),
        vertex_count: n,
    }];
    for (i, name) in names.iter().enumerate() {
        out.push(MorphometryRecord {
            region: name.to_string(),
            surface_area_mm2: area[i],
            gm_volume_mm3: volume[i],
            mean_thickness_mm: (count[i] > 0 && area[i] > 0.0).then(|| weighted[i] / area[i]),
            vertex_count: count[i],
        });
    }
    Ok(out)
}

/// Whole-surface record only.
pub fn whole_hemisphere(white: &TriangleMesh, pial: &TriangleMesh) -> Result<MorphometryRecord> {
    let thickness = cortical_thickness(white, pial)?;
    let labels = vec![0; white.vertex_count()];
    let regions = BTreeMap::from([(0, WHOLE_HEMISPHERE.to_string())]);
    Ok(aggregate_by_parcel(white, pial, &thickness, &labels, &regions)?.remove(0))
}

/// Writes records as CSV with columns region, area_mm2, volume_mm3, thickness_mm, nvertices.
pub fn write_morphometry_csv(records: &[MorphometryRecord], path: impl AsRef<Path>) -> Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    f.write_all(morphometry_csv(records).as_bytes())?;
    f.flush()?;
    Ok(())
}

pub fn morphometry_csv(records: &[MorphometryRecord]) -> String {
    let mut s = String::from("region,area_mm2,volume_mm3,thickness_mm,nvertices\n");
    for r in records {
        let t = r.mean_thickness_mm.map_or("NA".to_string(), |t| format!("{t}"));
        s.push_str(&format!("{},{},{},{},{}\n", r.region, r.surface_area_mm2, r.gm_volume_mm3, t, r.vertex_count));
    }
    s
}
