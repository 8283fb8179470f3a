use nalgebra::Matrix4;
use serde::{Deserialize, Serialize};

use super::ablate::{ablate, check_schema, sample_ablation_mode, LabelSchema};
use super::config::{AblationMode, Acquisition, GeneratorConfig};
use super::intensity::{apply_bias, gmm_image_with_params, normalize_min_max, sample_bias_field, sample_gmm_params};
use super::resolution::{degrade, sample_acquisition, sample_noise_std};
use super::rng::{RngState, Stream};
use super::transform::{about_point, deform_labels, deform_mesh, sample_affine_params, sample_velocity, AffineParams, SpatialTransform};
use crate::error::Result;
use crate::mesh::TriangleMesh;
use crate::sdf::{mesh_to_sdf, SdfVolume, DEFAULT_CLIP_MM};
use crate::volio::{ImageGrid, LabelGrid};

/// Everything drawn while generating one sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleRecord {
    pub seed: u64,
    pub ablation: AblationMode,
    pub affine_params: AffineParams,
    /// World-space affine, applied about the lattice centre.
    pub affine: [[f64; 4]; 4],
    pub svf_sigma_mm: f64,
    pub max_displacement_mm: f64,
    pub bias_log_max: f64,
    pub acquisition: Acquisition,
    pub spacing_mm: [f64; 3],
    pub noise_std: f64,
}

#[derive(Debug, Clone)]
pub struct SynthSample {
    pub image: ImageGrid,
    pub labels: LabelGrid,
    pub white: TriangleMesh,
    pub pial: TriangleMesh,
    pub white_sdf: SdfVolume,
    pub pial_sdf: SdfVolume,
    pub record: SampleRecord,
}

fn rows(m: &Matrix4<f64>) -> [[f64; 4]; 4] {
    let mut out = [[0.0; 4]; 4];
    for (r, row) in out.iter_mut().enumerate() {
        for (c, v) in row.iter_mut().enumerate() {
            *v = m[(r, c)];
        }
    }
    out
}

/// One synthetic training pair: an image on the label lattice and the SDFs
/// of the transformed surfaces. A pure function of its inputs and `seed`.
pub fn generate_sample(
    labels: &LabelGrid,
    white: &TriangleMesh,
    pial: &TriangleMesh,
    schema: &LabelSchema,
    config: &GeneratorConfig,
    seed: u64,
) -> Result<SynthSample> {
    config.validate()?;
    check_schema(labels, schema)?;
    let state = RngState::new(seed);
    let geometry = labels.geometry();

    let mode = sample_ablation_mode(config, &mut state.stream(Stream::Ablation));
    let ablated = ablate(labels, mode, schema);

    let affine_params = sample_affine_params(config, &mut state.stream(Stream::Affine));
    let affine = about_point(&affine_params.matrix(), &geometry.center());
    let (velocity, svf_sigma_mm) = sample_velocity(config, &mut state.stream(Stream::Velocity));
    let transform = SpatialTransform::with_velocity(affine, &velocity, geometry, config.svf_steps)?;
    let max_displacement_mm = transform.forward.as_ref().map_or(0.0, |f| f.max_norm());
    let warped = deform_labels(&ablated, &transform);
    let white = deform_mesh(white, &transform);
    let pial = deform_mesh(pial, &transform);

    let mut gmm_rng = state.stream(Stream::Gmm);
    let params = sample_gmm_params(&warped, config, &mut gmm_rng);
    let image = normalize_min_max(&gmm_image_with_params(&warped, &params, &mut gmm_rng)?);

    let bias = sample_bias_field(geometry, config, &mut state.stream(Stream::Bias));
    let image = normalize_min_max(&apply_bias(&image, &bias)?);

    let mut res_rng = state.stream(Stream::Resolution);
    let acquisition = sample_acquisition(config, &mut res_rng);
    let noise_std = sample_noise_std(&image, config, &mut res_rng);
    let image = normalize_min_max(&degrade(&image, &acquisition, noise_std, &mut res_rng)?);

    let white_sdf = mesh_to_sdf(&white, geometry, DEFAULT_CLIP_MM)?;
    let pial_sdf = mesh_to_sdf(&pial, geometry, DEFAULT_CLIP_MM)?;

    let record = SampleRecord {
        seed,
        ablation: mode,
        affine_params,
        affine: rows(&affine),
        svf_sigma_mm,
        max_displacement_mm,
        bias_log_max: config.bias_log_max,
        acquisition,
        spacing_mm: acquisition.spacing(),
        noise_std,
    };
    Ok(SynthSample { image, labels: warped, white, pial, white_sdf, pial_sdf, record })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sdf::sample_sdf;
    use crate::synth::phantom::Phantom;
    use crate::volio::nifti::encode_volume;
    use crate::volio::Datatype;

    fn small() -> (Phantom, LabelGrid, TriangleMesh, TriangleMesh) {
        let ph = Phantom::default();
        let g = ph.centered_geometry(40, 1.5).unwrap();
        (ph.clone(), ph.labels(&g), ph.white_mesh(3), ph.pial_mesh(3))
    }

    #[test]
    fn same_seed_same_bytes() {
        let (_, labels, w, p) = small();
        let c = GeneratorConfig { svf_grid: 5, ..GeneratorConfig::default() };
        let a = generate_sample(&labels, &w, &p, &LabelSchema::phantom(), &c, 17).unwrap();
        let b = generate_sample(&labels, &w, &p, &LabelSchema::phantom(), &c, 17).unwrap();
        assert_eq!(encode_volume(&a.image, Datatype::F32).unwrap(), encode_volume(&b.image, Datatype::F32).unwrap());
        assert_eq!(a.white_sdf, b.white_sdf);
        assert_eq!(a.pial_sdf, b.pial_sdf);
        assert_eq!(a.record, b.record);
        let other = generate_sample(&labels, &w, &p, &LabelSchema::phantom(), &c, 18).unwrap();
        assert_ne!(other.image, a.image);
    }

    #[test]
    fn identity_config_on_spheres() {
        let ph = Phantom::spheres();
        let g = ph.centered_geometry(64, 1.0).unwrap();
        let labels = ph.labels(&g);
        let (w, p) = (ph.white_mesh(5), ph.pial_mesh(5));
        let s = generate_sample(&labels, &w, &p, &LabelSchema::phantom(), &GeneratorConfig::identity(), 3).unwrap();
        assert_eq!(s.labels, labels);
        let mut per = std::collections::BTreeMap::new();
        for (v, l) in s.image.data().iter().zip(labels.data()) {
            assert_eq!(*per.entry(*l).or_insert(*v), *v);
        }
        for (sdf, r) in [(&s.white_sdf, ph.white_radius), (&s.pial_sdf, ph.pial_radius)] {
            for q in crate::mesh::shapes::icosphere(r, 3).vertices {
                assert!(sample_sdf(sdf, &q).unwrap().value.abs() < 0.1);
            }
        }
    }
}
