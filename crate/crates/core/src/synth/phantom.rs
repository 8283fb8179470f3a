//! Nested deformed-sphere cortex phantom with a matching label volume.

use std::collections::BTreeMap;

use nalgebra::{Point3, Vector3};

use super::ablate::{LabelClass, LabelInfo, LabelSchema};
use crate::error::Result;
use crate::mesh::{shapes, TriangleMesh};
use crate::volio::{Geometry, LabelGrid, VoxelGrid};

pub const BACKGROUND: i16 = 0;
pub const EXTRACEREBRAL: i16 = 1;
pub const LEFT_CORTEX: i16 = 2;
pub const LEFT_WHITE: i16 = 3;
pub const RIGHT_CORTEX: i16 = 4;
pub const RIGHT_WHITE: i16 = 5;
pub const CEREBELLUM_BRAINSTEM: i16 = 6;
pub const MIDLINE: i16 = 7;

/// White and pial surfaces are `r = radius + amplitude * f(direction)` with a
/// shared smooth angular pattern `f` bounded by 1 in magnitude.
#[derive(Debug, Clone, PartialEq)]
pub struct Phantom {
    pub center: Point3<f64>,
    pub white_radius: f64,
    pub pial_radius: f64,
    pub amplitude: f64,
    /// Thickness of the extracerebral shell outside the pial surface.
    pub csf_mm: f64,
    pub cerebellum_center: Point3<f64>,
    pub cerebellum_radius: f64,
    /// Half-width of the midline slab (mm).
    pub midline_mm: f64,
}

impl Default for Phantom {
    fn default() -> Self {
        Phantom {
            center: Point3::origin(),
            white_radius: 20.0,
            pial_radius: 22.5,
            amplitude: 1.5,
            csf_mm: 3.0,
            cerebellum_center: Point3::new(0.0, -6.0, -20.0),
            cerebellum_radius: 6.0,
            midline_mm: 1.0,
        }
    }
}

impl Phantom {
    /// Undeformed concentric spheres.
    pub fn spheres() -> Self {
        Phantom { amplitude: 0.0, ..Phantom::default() }
    }

    /// Angular pattern for a unit direction: a mix of a sectoral and a zonal
    /// degree-3 harmonic, within [-1, 1].
    pub fn pattern(d: &Vector3<f64>) -> f64 {
        let sectoral = 3.0 * d.x * d.x * d.y - d.y.powi(3);
        let zonal = 0.5 * (5.0 * d.z.powi(3) - 3.0 * d.z);
        0.7 * sectoral + 0.3 * zonal
    }

    pub fn white_radius_at(&self, d: &Vector3<f64>) -> f64 {
        self.white_radius + self.amplitude * Self::pattern(d)
    }

    pub fn pial_radius_at(&self, d: &Vector3<f64>) -> f64 {
        self.pial_radius + self.amplitude * Self::pattern(d)
    }

    pub fn white_mesh(&self, level: u32) -> TriangleMesh {
        shapes::radial_warp(&shapes::icosphere(1.0, level), Point3::origin(), |d| self.white_radius_at(d)).translated(self.center.coords)
    }

    pub fn pial_mesh(&self, level: u32) -> TriangleMesh {
        shapes::radial_warp(&shapes::icosphere(1.0, level), Point3::origin(), |d| self.pial_radius_at(d)).translated(self.center.coords)
    }

    /// Dense meshes standing in for the analytic surfaces in distance checks.
    pub fn reference_surfaces(&self) -> (TriangleMesh, TriangleMesh) {
        (self.white_mesh(6), self.pial_mesh(6))
    }

    /// Axis-aligned lattice centred on the phantom, covering the labelled
    /// region plus `margin_mm`.
    pub fn geometry(&self, voxel_mm: f64, margin_mm: f64) -> Result<Geometry> {
        let half = self.pial_radius + self.amplitude.abs() + self.csf_mm + margin_mm;
        let n = (2.0 * half / voxel_mm).ceil() as usize + 1;
        self.centered_geometry(n, voxel_mm)
    }

    /// Cubic lattice of `n` voxels per side centred on the phantom.
    pub fn centered_geometry(&self, n: usize, voxel_mm: f64) -> Result<Geometry> {
        let o = -(n as f64 - 1.0) / 2.0 * voxel_mm;
        Geometry::axis_aligned([n; 3], [voxel_mm; 3], [self.center.x + o, self.center.y + o, self.center.z + o])
    }

    pub fn label_at(&self, p: &Point3<f64>) -> i16 {
        let v = p - self.center;
        let r = v.norm();
        let d = if r > 0.0 { v / r } else { Vector3::z() };
        let pial = self.pial_radius_at(&d);
        let left = v.x < 0.0;
        if r < pial && v.x.abs() < self.midline_mm {
            MIDLINE
        } else if r < self.white_radius_at(&d) {
            if left { LEFT_WHITE } else { RIGHT_WHITE }
        } else if r < pial {
            if left { LEFT_CORTEX } else { RIGHT_CORTEX }
        } else if (p - self.cerebellum_center).norm() < self.cerebellum_radius {
            CEREBELLUM_BRAINSTEM
        } else if r < pial + self.csf_mm {
            EXTRACEREBRAL
        } else {
            BACKGROUND
        }
    }

    pub fn labels(&self, geometry: &Geometry) -> LabelGrid {
        VoxelGrid::from_fn(geometry.clone(), |p| self.label_at(&p))
    }
}

impl LabelSchema {
    /// Classes of the phantom labels.
    pub fn phantom() -> Self {
        let entries = [
            (BACKGROUND, "background", LabelClass::Background),
            (EXTRACEREBRAL, "extracerebral", LabelClass::Extracerebral),
            (LEFT_CORTEX, "left-cortex", LabelClass::Left),
            (LEFT_WHITE, "left-white-matter", LabelClass::Left),
            (RIGHT_CORTEX, "right-cortex", LabelClass::Right),
            (RIGHT_WHITE, "right-white-matter", LabelClass::Right),
            (CEREBELLUM_BRAINSTEM, "cerebellum-brainstem", LabelClass::CerebellumBrainstem),
            (MIDLINE, "midline", LabelClass::Midline),
        ];
        LabelSchema::new(entries.into_iter().map(|(l, name, class)| (l, LabelInfo { name: name.to_string(), class })).collect::<BTreeMap<_, _>>())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pattern_is_bounded() {
        let s = shapes::icosphere(1.0, 4);
        let m = s.vertices.iter().map(|p| Phantom::pattern(&p.coords).abs()).fold(0.0, f64::max);
        assert!(m <= 1.0 && m > 0.6);
    }

    #[test]
    fn meshes_follow_the_radius_functions() {
        let ph = Phantom { center: Point3::new(1.0, -2.0, 3.0), ..Phantom::default() };
        let w = ph.white_mesh(3);
        for p in &w.vertices {
            let v = p - ph.center;
            assert!((v.norm() - ph.white_radius_at(&v.normalize())).abs() < 1e-9);
        }
        let pial = ph.pial_mesh(3);
        assert_eq!(pial.triangles, w.triangles);
        w.check_closed_manifold().unwrap();
    }

    #[test]
    fn all_classes_present() {
        let ph = Phantom::default();
        let l = ph.labels(&ph.geometry(1.0, 2.0).unwrap());
        for lab in 0..=7 {
            assert!(l.data().contains(&lab), "label {lab} missing");
        }
    }
}
