use rayon::prelude::*;

use super::grid::{Boundary, Geometry, Voxel, VoxelGrid};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Interpolation {
    Trilinear,
    Nearest,
}

/// Resamples `grid` onto `target`. Target voxel centres outside the source
/// lattice become 0 (trilinear) or `background` (nearest).
pub fn resample<T: Voxel>(
    grid: &VoxelGrid<T>,
    target: &Geometry,
    mode: Interpolation,
    background: T,
) -> Result<VoxelGrid<T>> {
    if target.dims().iter().any(|&d| d == 0) {
        return Err(Error::arg("degenerate target dims"));
    }
    let src = grid.geometry();
    let data = (0..target.len())
        .into_par_iter()
        .map(|i| {
            let v = src.world_to_voxel(&target.center_of_voxel(i));
            match mode {
                Interpolation::Trilinear => {
                    T::from_f64(grid.sample_voxel(v, Boundary::Strict).unwrap_or(0.0))
                }
                Interpolation::Nearest => grid.nearest_voxel(v).unwrap_or(background),
            }
        })
        .collect();
    VoxelGrid::new(target.clone(), data)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeSet;

    #[test]
    fn constant_grid_stays_constant() {
        let src = VoxelGrid::filled(Geometry::axis_aligned([6, 6, 6], [1.0; 3], [0.0; 3]).unwrap(), 3.25f32);
        let tgt = Geometry::axis_aligned([9, 9, 9], [0.5; 3], [0.5; 3]).unwrap();
        let out = resample(&src, &tgt, Interpolation::Trilinear, 0.0).unwrap();
        assert!(out.data().iter().all(|&v| v == 3.25));
    }

    #[test]
    fn linear_ramp_reproduced() {
        let g = Geometry::axis_aligned([10, 4, 4], [1.0; 3], [0.0; 3]).unwrap();
        let src = VoxelGrid::from_fn(g, |p| p.x as f32);
        let tgt = Geometry::axis_aligned([19, 7, 7], [0.5; 3], [0.0; 3]).unwrap();
        let out = resample(&src, &tgt, Interpolation::Trilinear, 0.0).unwrap();
        for i in 0..tgt.len() {
            let p = tgt.center_of_voxel(i);
            assert!((out.data()[i] as f64 - p.x).abs() <= 1e-5, "at {p:?}");
        }
    }

    #[test]
    fn nearest_never_invents_labels() {
        let g = Geometry::axis_aligned([7, 7, 7], [1.0; 3], [0.0; 3]).unwrap();
        let src = VoxelGrid::from_fn(g, |p| ((p.x as i16) % 3 + 2 * ((p.z as i16) % 2)) as i16);
        let input: BTreeSet<i16> = src.data().iter().copied().collect();
        let a = nalgebra::Rotation3::from_euler_angles(0.2, 0.4, -0.3).to_homogeneous();
        let mut a = a * nalgebra::Matrix4::new_scaling(0.7);
        a[(3, 3)] = 1.0;
        let tgt = Geometry::new([12, 12, 12], a).unwrap();
        let out = resample(&src, &tgt, Interpolation::Nearest, 0).unwrap();
        let mut allowed = input.clone();
        allowed.insert(0);
        assert!(out.data().iter().all(|v| allowed.contains(v)));
    }
}
