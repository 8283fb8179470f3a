use nalgebra::{Matrix3, Matrix4, Point3, Vector3};

use crate::error::{Error, Result};

/// Lattice shape plus the voxel-index to world-millimetre affine.
///
/// Voxel `(i, j, k)` has its centre at `affine * (i, j, k, 1)`. Data arrays
/// attached to a geometry are laid out x-fastest.
#[derive(Debug, Clone, PartialEq)]
pub struct Geometry {
    dims: [usize; 3],
    affine: Matrix4<f64>,
    inverse: Matrix4<f64>,
}

impl Geometry {
    pub fn new(dims: [usize; 3], affine: Matrix4<f64>) -> Result<Self> {
        if dims.iter().any(|&d| d == 0) {
            return Err(Error::arg(format!("grid dims must be positive, got {dims:?}")));
        }
        let inverse = affine
            .try_inverse()
            .ok_or_else(|| Error::arg("voxel-to-world affine is singular"))?;
        if !inverse.iter().all(|v| v.is_finite()) {
            return Err(Error::arg("voxel-to-world affine is not finite"));
        }
        Ok(Geometry { dims, affine, inverse })
    }

    /// Axis-aligned lattice with the given spacing and the world position of voxel (0,0,0).
    pub fn axis_aligned(dims: [usize; 3], spacing: [f64; 3], origin: [f64; 3]) -> Result<Self> {
        if spacing.iter().any(|&s| !(s > 0.0) || !s.is_finite()) {
            return Err(Error::arg(format!("spacing must be positive, got {spacing:?}")));
        }
        let mut affine = Matrix4::identity();
        for a in 0..3 {
            affine[(a, a)] = spacing[a];
            affine[(a, 3)] = origin[a];
        }
        Geometry::new(dims, affine)
    }

    /// Axis-aligned lattice covering `[lo, hi]` (world mm) at isotropic `voxel` spacing.
    pub fn covering(lo: Point3<f64>, hi: Point3<f64>, voxel: f64) -> Result<Self> {
        let mut dims = [0usize; 3];
        for a in 0..3 {
            let extent = (hi[a] - lo[a]).max(0.0);
            dims[a] = (extent / voxel).ceil() as usize + 1;
        }
        Geometry::axis_aligned(dims, [voxel; 3], [lo.x, lo.y, lo.z])
    }

    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    pub fn len(&self) -> usize {
        self.dims[0] * self.dims[1] * self.dims[2]
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn affine(&self) -> &Matrix4<f64> {
        &self.affine
    }

    pub fn inverse_affine(&self) -> &Matrix4<f64> {
        &self.inverse
    }

    /// Column norms of the linear block.
    pub fn spacing(&self) -> [f64; 3] {
        let lin = self.linear();
        [lin.column(0).norm(), lin.column(1).norm(), lin.column(2).norm()]
    }

    pub fn min_spacing(&self) -> f64 {
        let s = self.spacing();
        s[0].min(s[1]).min(s[2])
    }

    pub fn max_spacing(&self) -> f64 {
        let s = self.spacing();
        s[0].max(s[1]).max(s[2])
    }

    pub fn linear(&self) -> Matrix3<f64> {
        self.affine.fixed_view::<3, 3>(0, 0).into_owned()
    }

    #[inline]
    pub fn index(&self, x: usize, y: usize, z: usize) -> usize {
        x + self.dims[0] * (y + self.dims[1] * z)
    }

    #[inline]
    pub fn coords(&self, idx: usize) -> [usize; 3] {
        let x = idx % self.dims[0];
        let yz = idx / self.dims[0];
        [x, yz % self.dims[1], yz / self.dims[1]]
    }

    #[inline]
    pub fn voxel_to_world(&self, v: [f64; 3]) -> Point3<f64> {
        let a = &self.affine;
        Point3::new(
            a[(0, 0)] * v[0] + a[(0, 1)] * v[1] + a[(0, 2)] * v[2] + a[(0, 3)],
            a[(1, 0)] * v[0] + a[(1, 1)] * v[1] + a[(1, 2)] * v[2] + a[(1, 3)],
            a[(2, 0)] * v[0] + a[(2, 1)] * v[1] + a[(2, 2)] * v[2] + a[(2, 3)],
        )
    }

    #[inline]
    pub fn world_to_voxel(&self, p: &Point3<f64>) -> [f64; 3] {
        let a = &self.inverse;
        [
            a[(0, 0)] * p.x + a[(0, 1)] * p.y + a[(0, 2)] * p.z + a[(0, 3)],
            a[(1, 0)] * p.x + a[(1, 1)] * p.y + a[(1, 2)] * p.z + a[(1, 3)],
            a[(2, 0)] * p.x + a[(2, 1)] * p.y + a[(2, 2)] * p.z + a[(2, 3)],
        ]
    }

    pub fn center_of_voxel(&self, idx: usize) -> Point3<f64> {
        let [x, y, z] = self.coords(idx);
        self.voxel_to_world([x as f64, y as f64, z as f64])
    }

    /// World-space centre of the lattice.
    pub fn center(&self) -> Point3<f64> {
        let d = self.dims;
        self.voxel_to_world([
            (d[0] as f64 - 1.0) / 2.0,
            (d[1] as f64 - 1.0) / 2.0,
            (d[2] as f64 - 1.0) / 2.0,
        ])
    }

    /// True when both geometries describe the same lattice (affines within 1e-6).
    pub fn same_lattice(&self, other: &Geometry) -> bool {
        self.dims == other.dims
            && self
                .affine
                .iter()
                .zip(other.affine.iter())
                .all(|(a, b)| (a - b).abs() <= 1e-6 * (1.0 + a.abs()))
    }

    /// Gradient of a scalar field given in voxel units, mapped to world units.
    pub fn voxel_gradient_to_world(&self, g: Vector3<f64>) -> Vector3<f64> {
        // d/dworld = (d voxel / d world)^T d/dvoxel
        self.inverse.fixed_view::<3, 3>(0, 0).transpose() * g
    }
}

/// Scalar element types a [`VoxelGrid`] can hold.
pub trait Voxel: Copy + Send + Sync + PartialEq + std::fmt::Debug + 'static {
    fn to_f64(self) -> f64;
    /// Converts with rounding and saturation.
    fn from_f64(v: f64) -> Self;
}

impl Voxel for f32 {
    fn to_f64(self) -> f64 {
        self as f64
    }
    fn from_f64(v: f64) -> Self {
        v as f32
    }
}

impl Voxel for f64 {
    fn to_f64(self) -> f64 {
        self
    }
    fn from_f64(v: f64) -> Self {
        v
    }
}

impl Voxel for i16 {
    fn to_f64(self) -> f64 {
        self as f64
    }
    fn from_f64(v: f64) -> Self {
        v.round().clamp(i16::MIN as f64, i16::MAX as f64) as i16
    }
}

impl Voxel for u8 {
    fn to_f64(self) -> f64 {
        self as f64
    }
    fn from_f64(v: f64) -> Self {
        v.round().clamp(0.0, 255.0) as u8
    }
}

/// Typed 3-D array with physical geometry. Immutable after construction.
#[derive(Debug, Clone, PartialEq)]
pub struct VoxelGrid<T> {
    geometry: Geometry,
    data: Vec<T>,
}

/// Float image grid.
pub type ImageGrid = VoxelGrid<f32>;
/// Integer label grid.
pub type LabelGrid = VoxelGrid<i16>;

impl<T: Voxel> VoxelGrid<T> {
    pub fn new(geometry: Geometry, data: Vec<T>) -> Result<Self> {
        if data.len() != geometry.len() {
            return Err(Error::arg(format!(
                "data length {} does not match dims {:?}",
                data.len(),
                geometry.dims()
            )));
        }
        Ok(VoxelGrid { geometry, data })
    }

    pub fn filled(geometry: Geometry, value: T) -> Self {
        let n = geometry.len();
        VoxelGrid { geometry, data: vec![value; n] }
    }

    /// Builds a grid by evaluating `f` at every voxel centre (world mm).
    pub fn from_fn(geometry: Geometry, f: impl Fn(Point3<f64>) -> T + Sync) -> Self {
        use rayon::prelude::*;
        let data = (0..geometry.len())
            .into_par_iter()
            .map(|i| f(geometry.center_of_voxel(i)))
            .collect();
        VoxelGrid { geometry, data }
    }

    pub fn geometry(&self) -> &Geometry {
        &self.geometry
    }

    pub fn dims(&self) -> [usize; 3] {
        self.geometry.dims()
    }

    pub fn spacing(&self) -> [f64; 3] {
        self.geometry.spacing()
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize, z: usize) -> T {
        self.data[self.geometry.index(x, y, z)]
    }

    /// Same geometry, new data (length checked).
    pub fn with_data<U: Voxel>(&self, data: Vec<U>) -> Result<VoxelGrid<U>> {
        VoxelGrid::new(self.geometry.clone(), data)
    }

    pub fn map<U: Voxel>(&self, f: impl Fn(T) -> U) -> VoxelGrid<U> {
        VoxelGrid { geometry: self.geometry.clone(), data: self.data.iter().map(|&v| f(v)).collect() }
    }

    /// Trilinear sample at a continuous voxel index.
    pub fn sample_voxel(&self, v: [f64; 3], boundary: Boundary) -> Option<f64> {
        trilinear(&self.data, self.geometry.dims, v, boundary)
    }

    pub fn sample_world(&self, p: &Point3<f64>, boundary: Boundary) -> Option<f64> {
        self.sample_voxel(self.geometry.world_to_voxel(p), boundary)
    }

    /// Nearest-voxel value at a continuous voxel index; `None` outside the lattice.
    pub fn nearest_voxel(&self, v: [f64; 3]) -> Option<T> {
        let d = self.geometry.dims;
        let mut idx = [0usize; 3];
        for a in 0..3 {
            let r = v[a].round();
            if !(r >= 0.0 && r <= (d[a] - 1) as f64) {
                return None;
            }
            idx[a] = r as usize;
        }
        Some(self.get(idx[0], idx[1], idx[2]))
    }
}

/// Out-of-lattice behaviour for interpolation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Boundary {
    /// Points outside `[0, dim-1]` on any axis yield `None`.
    Strict,
    /// Indices clamp to the lattice edge.
    Clamp,
}

const EDGE_EPS: f64 = 1e-9;

/// Trilinear interpolation over an x-fastest array of voxel values.
#[inline]
pub fn trilinear<T: Voxel>(data: &[T], dims: [usize; 3], v: [f64; 3], boundary: Boundary) -> Option<f64> {
    let mut base = [0usize; 3];
    let mut frac = [0f64; 3];
    for a in 0..3 {
        let hi = (dims[a] - 1) as f64;
        let mut c = v[a];
        if !c.is_finite() {
            return None;
        }
        match boundary {
            Boundary::Strict => {
                if c < -EDGE_EPS || c > hi + EDGE_EPS {
                    return None;
                }
                c = c.clamp(0.0, hi);
            }
            Boundary::Clamp => c = c.clamp(0.0, hi),
        }
        if (c - c.round()).abs() < EDGE_EPS {
            c = c.round();
        }
        let f = c.floor();
        let mut b = f as usize;
        let mut t = c - f;
        if b + 1 >= dims[a] {
            // at the upper edge, or a single-voxel axis
            b = dims[a] - 1;
            t = 0.0;
        }
        base[a] = b;
        frac[a] = t;
    }
    let nx = dims[0];
    let nxy = dims[0] * dims[1];
    let step = |a: usize| -> usize {
        if frac[a] > 0.0 {
            [1, nx, nxy][a]
        } else {
            0
        }
    };
    let (sx, sy, sz) = (step(0), step(1), step(2));
    let i000 = base[0] + nx * base[1] + nxy * base[2];
    let v = |i: usize| data[i].to_f64();
    let (tx, ty, tz) = (frac[0], frac[1], frac[2]);
    // a + t (b - a) reproduces constant neighbourhoods exactly
    let lerp = |a: f64, b: f64, t: f64| if t == 0.0 { a } else { a + t * (b - a) };
    let c00 = lerp(v(i000), v(i000 + sx), tx);
    let c10 = lerp(v(i000 + sy), v(i000 + sy + sx), tx);
    let c01 = lerp(v(i000 + sz), v(i000 + sz + sx), tx);
    let c11 = lerp(v(i000 + sz + sy), v(i000 + sz + sy + sx), tx);
    let c0 = lerp(c00, c10, ty);
    let c1 = lerp(c01, c11, ty);
    Some(lerp(c0, c1, tz))
}
