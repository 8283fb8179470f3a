//! Geometric and synthetic-data core for SDF-based cortical surface
//! reconstruction from low-field MRI.
//!
//! The crate is organised by pipeline stage:
//!
//! * [`volio`]: voxel grids, voxel/world geometry and NIfTI-1 I/O.
//! * [`synth`]: domain-randomised synthesis of LF-MRI-like training images.
//! * [`sdf`]: mesh-to-SDF conversion, point/surface distance queries.
//! * [`mesh`]: triangle meshes, iso-surface extraction, refinement,
//!   pial expansion and topology correction.
//! * [`morpho`]: surface area, gray-matter volume and cortical thickness.
//! * [`metrics`]: ASD, HD90, Dice, Pearson and percentage errors.
//! * [`parcel`]: vertex labels, lobe grouping and label transfer.
//! * [`cli`]: the `cortexforge` command-line front end.

pub mod cli;
pub mod error;
pub mod mesh;
pub mod metrics;
pub mod morpho;
pub mod parcel;
pub mod sdf;
mod spatial;
pub mod synth;
pub mod volio;

pub use error::{Error, Result};
pub use mesh::{TopologyReport, TriangleMesh};
pub use sdf::SdfVolume;
pub use volio::{Geometry, VoxelGrid};
