use nalgebra::{Matrix3, Matrix4, Point3, Rotation3, Vector3};
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{GeneratorConfig, VelocityUpsampling};
use super::lines::{bspline_at, lerp_at, upsample};
use crate::error::{Error, Result};
use crate::mesh::TriangleMesh;
use crate::volio::{trilinear, Boundary, Geometry, LabelGrid, VoxelGrid};

/// Sampled parameters of a random similarity-plus-scaling transform.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AffineParams {
    pub rotation_deg: [f64; 3],
    pub translation_mm: [f64; 3],
    pub scale: [f64; 3],
}

impl AffineParams {
    pub fn identity() -> Self {
        AffineParams { rotation_deg: [0.0; 3], translation_mm: [0.0; 3], scale: [1.0; 3] }
    }

    /// `T * Rz * Ry * Rx * S`, acting about the world origin.
    pub fn matrix(&self) -> Matrix4<f64> {
        let [rx, ry, rz] = self.rotation_deg.map(f64::to_radians);
        let r = Rotation3::from_axis_angle(&Vector3::z_axis(), rz)
            * Rotation3::from_axis_angle(&Vector3::y_axis(), ry)
            * Rotation3::from_axis_angle(&Vector3::x_axis(), rx);
        let lin = r.matrix() * Matrix3::from_diagonal(&Vector3::from(self.scale));
        let mut m = Matrix4::identity();
        m.fixed_view_mut::<3, 3>(0, 0).copy_from(&lin);
        for a in 0..3 {
            m[(a, 3)] = self.translation_mm[a];
        }
        m
    }
}

pub fn sample_affine_params<R: Rng>(config: &GeneratorConfig, rng: &mut R) -> AffineParams {
    let sym = |rng: &mut R, max: f64| if max > 0.0 { rng.gen_range(-max..=max) } else { 0.0 };
    let rotation_deg = [0; 3].map(|_| sym(rng, config.rotation_max_deg));
    let translation_mm = [0; 3].map(|_| sym(rng, config.translation_max_mm));
    let [lo, hi] = config.scale_range;
    let scale = [0; 3].map(|_| if hi > lo { rng.gen_range(lo..=hi) } else { lo });
    AffineParams { rotation_deg, translation_mm, scale }
}

pub fn sample_affine<R: Rng>(config: &GeneratorConfig, rng: &mut R) -> Matrix4<f64> {
    sample_affine_params(config, rng).matrix()
}

/// `m` conjugated so that it acts about `center` instead of the origin.
pub fn about_point(m: &Matrix4<f64>, center: &Point3<f64>) -> Matrix4<f64> {
    let c = center.coords;
    Matrix4::new_translation(&c) * m * Matrix4::new_translation(&-c)
}

/// Velocity (mm) on a coarse control lattice whose corners coincide with the
/// corners of the target lattice.
#[derive(Debug, Clone, PartialEq)]
pub struct ControlField {
    dims: [usize; 3],
    channels: [Vec<f64>; 3],
    upsampling: VelocityUpsampling,
}

impl ControlField {
    pub fn new(dims: [usize; 3], values: &[Vector3<f64>]) -> Result<Self> {
        let n = dims[0] * dims[1] * dims[2];
        if n == 0 || values.len() != n {
            return Err(Error::arg(format!("{} control values for dims {dims:?}", values.len())));
        }
        let channels = [0, 1, 2].map(|a| values.iter().map(|v| v[a]).collect());
        Ok(ControlField { dims, channels, upsampling: VelocityUpsampling::default() })
    }

    pub fn constant(dims: [usize; 3], c: Vector3<f64>) -> Self {
        let n = dims[0] * dims[1] * dims[2];
        ControlField { dims, channels: [0, 1, 2].map(|a| vec![c[a]; n]), upsampling: VelocityUpsampling::default() }
    }

    pub fn with_upsampling(mut self, upsampling: VelocityUpsampling) -> Self {
        self.upsampling = upsampling;
        self
    }

    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    /// Dense velocity on a lattice of `dims`.
    pub fn upsampled(&self, dims: [usize; 3]) -> [Vec<f64>; 3] {
        [0, 1, 2].map(|a| match self.upsampling {
            VelocityUpsampling::CubicBspline => upsample(&self.channels[a], self.dims, dims, bspline_at),
            VelocityUpsampling::Trilinear => upsample(&self.channels[a], self.dims, dims, lerp_at),
        })
    }

    pub fn value(&self, idx: usize) -> Vector3<f64> {
        Vector3::new(self.channels[0][idx], self.channels[1][idx], self.channels[2][idx])
    }

    pub fn negated(&self) -> Self {
        ControlField { dims: self.dims, channels: self.channels.clone().map(|c| c.into_iter().map(|v| -v).collect()), upsampling: self.upsampling }
    }

    pub fn is_zero(&self) -> bool {
        self.channels.iter().all(|c| c.iter().all(|&v| v == 0.0))
    }
}

/// Random velocity with per-sample standard deviation drawn from `U(0, svf_sigma_mm)`.
pub fn sample_velocity<R: Rng>(config: &GeneratorConfig, rng: &mut R) -> (ControlField, f64) {
    let n = config.svf_grid;
    let sigma = if config.svf_sigma_mm > 0.0 { rng.gen_range(0.0..=config.svf_sigma_mm) } else { 0.0 };
    let values: Vec<Vector3<f64>> = (0..n * n * n)
        .map(|_| Vector3::from([0; 3].map(|_| sigma * rng.sample::<f64, _>(StandardNormal))))
        .collect();
    (ControlField::new([n; 3], &values).expect("consistent dims").with_upsampling(config.svf_upsample), sigma)
}

/// Trilinear, corner-aligned upsampling of a control lattice to `dims`.
pub(crate) fn upsample_control(values: &[f64], cdims: [usize; 3], dims: [usize; 3]) -> Vec<f64> {
    upsample(values, cdims, dims, lerp_at)
}

/// Dense displacement (world mm) on a lattice.
#[derive(Debug, Clone, PartialEq)]
pub struct DeformationField {
    geometry: Geometry,
    channels: [Vec<f64>; 3],
}

impl DeformationField {
    pub fn zeros(geometry: &Geometry) -> Self {
        let n = geometry.len();
        DeformationField { geometry: geometry.clone(), channels: [vec![0.0; n], vec![0.0; n], vec![0.0; n]] }
    }

    pub fn new(geometry: &Geometry, channels: [Vec<f64>; 3]) -> Result<Self> {
        if channels.iter().any(|c| c.len() != geometry.len()) {
            return Err(Error::arg("displacement channel length does not match the lattice"));
        }
        if channels.iter().any(|c| c.iter().any(|v| !v.is_finite())) {
            return Err(Error::arg("displacement is not finite"));
        }
        Ok(DeformationField { geometry: geometry.clone(), channels })
    }

    pub fn geometry(&self) -> &Geometry {
        &self.geometry
    }

    pub fn channel(&self, axis: usize) -> &[f64] {
        &self.channels[axis]
    }

    pub fn displacement(&self, idx: usize) -> Vector3<f64> {
        Vector3::new(self.channels[0][idx], self.channels[1][idx], self.channels[2][idx])
    }

    /// Displacement at a continuous voxel index, clamped to the lattice.
    pub fn sample_voxel(&self, v: [f64; 3]) -> Vector3<f64> {
        let dims = self.geometry.dims();
        Vector3::from([0, 1, 2].map(|a| trilinear(&self.channels[a], dims, v, Boundary::Clamp).expect("clamped")))
    }

    pub fn sample(&self, p: &Point3<f64>) -> Vector3<f64> {
        self.sample_voxel(self.geometry.world_to_voxel(p))
    }

    pub fn max_norm(&self) -> f64 {
        (0..self.geometry.len()).map(|i| self.displacement(i).norm()).fold(0.0, f64::max)
    }

    /// Jacobian determinant of `x + u(x)` at interior voxels (central differences), x-fastest.
    pub fn jacobian_determinants(&self) -> Vec<f64> {
        let g = &self.geometry;
        let [nx, ny, nz] = g.dims();
        if nx < 3 || ny < 3 || nz < 3 {
            return Vec::new();
        }
        let inv = g.inverse_affine().fixed_view::<3, 3>(0, 0).into_owned();
        let stride = [1, nx, nx * ny];
        let mut out = Vec::with_capacity((nx - 2) * (ny - 2) * (nz - 2));
        for z in 1..nz - 1 {
            for y in 1..ny - 1 {
                for x in 1..nx - 1 {
                    let i = g.index(x, y, z);
                    let mut dv = Matrix3::zeros();
                    for (a, &s) in stride.iter().enumerate() {
                        let d = (self.displacement(i + s) - self.displacement(i - s)) * 0.5;
                        dv.set_column(a, &d);
                    }
                    out.push((Matrix3::identity() + dv * inv).determinant());
                }
            }
        }
        out
    }
}

/// Exponentiates a stationary velocity field by scaling and squaring.
pub fn integrate_svf(velocity: &ControlField, geometry: &Geometry, steps: u32) -> Result<DeformationField> {
    if steps < 1 {
        return Err(Error::arg("integration needs at least one squaring step"));
    }
    if velocity.channels.iter().any(|c| c.iter().any(|v| !v.is_finite())) {
        return Err(Error::arg("velocity field is not finite"));
    }
    let dims = geometry.dims();
    let scale = 0.5f64.powi(steps as i32);
    let mut u = velocity.upsampled(dims);
    u.iter_mut().for_each(|c| c.iter_mut().for_each(|v| *v *= scale));
    let inv = geometry.inverse_affine().fixed_view::<3, 3>(0, 0).into_owned();
    for _ in 0..steps {
        // u <- u + u o (id + u)
        let next: Vec<[f64; 3]> = (0..geometry.len())
            .into_par_iter()
            .map(|i| {
                let d = Vector3::new(u[0][i], u[1][i], u[2][i]);
                let [x, y, z] = geometry.coords(i);
                let dv = inv * d;
                let v = [x as f64 + dv[0], y as f64 + dv[1], z as f64 + dv[2]];
                [0, 1, 2].map(|a| d[a] + trilinear(&u[a], dims, v, Boundary::Clamp).expect("clamped"))
            })
            .collect();
        for a in 0..3 {
            u[a] = next.iter().map(|v| v[a]).collect();
        }
    }
    DeformationField::new(geometry, u)
}

/// World-space transform `x -> A (x + u(x))` with an approximate inverse field.
#[derive(Debug, Clone, PartialEq)]
pub struct SpatialTransform {
    pub affine: Matrix4<f64>,
    pub forward: Option<DeformationField>,
    /// Displacement of the inverse nonlinear part, defined on the same lattice.
    pub inverse: Option<DeformationField>,
}

impl SpatialTransform {
    pub fn identity() -> Self {
        SpatialTransform { affine: Matrix4::identity(), forward: None, inverse: None }
    }

    pub fn from_affine(affine: Matrix4<f64>) -> Self {
        SpatialTransform { affine, forward: None, inverse: None }
    }

    /// Builds both directions by integrating `velocity` and its negation.
    pub fn with_velocity(affine: Matrix4<f64>, velocity: &ControlField, geometry: &Geometry, steps: u32) -> Result<Self> {
        if velocity.is_zero() {
            return Ok(Self::from_affine(affine));
        }
        Ok(SpatialTransform {
            affine,
            forward: Some(integrate_svf(velocity, geometry, steps)?),
            inverse: Some(integrate_svf(&velocity.negated(), geometry, steps)?),
        })
    }

    pub fn is_identity(&self) -> bool {
        self.affine == Matrix4::identity() && self.forward.is_none() && self.inverse.is_none()
    }

    pub fn apply(&self, x: &Point3<f64>) -> Point3<f64> {
        let y = match &self.forward {
            Some(f) => x + f.sample(x),
            None => *x,
        };
        self.affine.transform_point(&y)
    }

    pub fn apply_inverse(&self, y: &Point3<f64>) -> Point3<f64> {
        let inv = self.affine.try_inverse().expect("sampled affines are invertible");
        let z = inv.transform_point(y);
        match &self.inverse {
            Some(f) => z + f.sample(&z),
            None => z,
        }
    }
}

/// Nearest-neighbour pullback of a label volume; voxels mapping outside become 0.
pub fn deform_labels(labels: &LabelGrid, transform: &SpatialTransform) -> LabelGrid {
    if transform.is_identity() {
        return labels.clone();
    }
    let g = labels.geometry();
    let data: Vec<i16> = (0..g.len())
        .into_par_iter()
        .map(|i| {
            let src = transform.apply_inverse(&g.center_of_voxel(i));
            labels.nearest_voxel(g.world_to_voxel(&src)).unwrap_or(0)
        })
        .collect();
    VoxelGrid::new(g.clone(), data).expect("same lattice")
}

/// Moves every vertex forward through the transform.
pub fn deform_mesh(mesh: &TriangleMesh, transform: &SpatialTransform) -> TriangleMesh {
    if transform.is_identity() {
        return mesh.clone();
    }
    mesh.with_vertices(mesh.vertices.par_iter().map(|p| transform.apply(p)).collect())
}
