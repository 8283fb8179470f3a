//! Volume data model and NIfTI-1 I/O.

mod grid;
pub mod nifti;
mod resample;

pub use grid::{trilinear, Boundary, Geometry, ImageGrid, LabelGrid, Voxel, VoxelGrid};
pub use nifti::{read_header, read_labels, read_volume, write_volume, Datatype, NiftiHeader};
pub use resample::{resample, Interpolation};
