//! Domain-randomized synthesis of low-field-like images with ground-truth SDF targets.

mod ablate;
mod config;
mod generate;
mod intensity;
mod lines;
pub mod phantom;
mod resolution;
mod rng;
mod transform;

pub use ablate::{ablate, ablate_named, sample_ablation_mode, LabelClass, LabelInfo, LabelSchema};
pub use config::{AblationMode, AblationProbs, Acquisition, GeneratorConfig, Preset, VelocityUpsampling};
pub use generate::{generate_sample, SampleRecord, SynthSample};
pub use intensity::{
    apply_bias, apply_bias_field, gmm_image_with_params, normalize_min_max, sample_bias_field, sample_gmm_image, sample_gmm_params, Tissue,
};
pub use phantom::Phantom;
pub use resolution::{degrade, sample_acquisition, sample_noise_std, simulate_resolution};
pub use rng::{RngState, Stream, SynthRng};
pub use transform::{
    about_point, deform_labels, deform_mesh, integrate_svf, sample_affine, sample_affine_params, sample_velocity, AffineParams, ControlField,
    DeformationField, SpatialTransform,
};
