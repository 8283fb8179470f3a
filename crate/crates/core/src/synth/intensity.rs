use std::collections::BTreeMap;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::config::GeneratorConfig;
use super::rng::for_each_slab;
use super::transform::upsample_control;
use crate::error::{Error, Result};
use crate::volio::{Geometry, ImageGrid, LabelGrid, VoxelGrid};

/// Mean and standard deviation of one tissue class.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Tissue {
    pub mean: f64,
    pub std: f64,
}

fn uniform<R: Rng>(rng: &mut R, r: [f64; 2]) -> f64 {
    if r[1] > r[0] {
        rng.gen_range(r[0]..=r[1])
    } else {
        r[0]
    }
}

fn present_labels(labels: &LabelGrid) -> Vec<i16> {
    let mut seen = [false; 1 << 16];
    for &l in labels.data() {
        seen[(l as i32 + 32768) as usize] = true;
    }
    (0..seen.len()).filter(|&i| seen[i]).map(|i| (i as i32 - 32768) as i16).collect()
}

/// Draws one mixture component per label present, in ascending label order.
pub fn sample_gmm_params<R: Rng>(labels: &LabelGrid, config: &GeneratorConfig, rng: &mut R) -> BTreeMap<i16, Tissue> {
    present_labels(labels)
        .into_iter()
        .map(|l| {
            let mean = uniform(rng, config.gmm_mean_range);
            let std = uniform(rng, config.gmm_std_range);
            (l, Tissue { mean, std })
        })
        .collect()
}

/// Unnormalized mixture image for fixed per-label parameters.
pub fn gmm_image_with_params<R: Rng>(labels: &LabelGrid, params: &BTreeMap<i16, Tissue>, rng: &mut R) -> Result<ImageGrid> {
    if labels.data().iter().all(|&l| l == 0) {
        return Err(Error::arg("label volume holds no tissue"));
    }
    if let Some(l) = labels.data().iter().find(|l| !params.contains_key(l)) {
        return Err(Error::arg(format!("no intensity parameters for label {l}")));
    }
    let [nx, ny, _] = labels.dims();
    let src = labels.data();
    let mut out = vec![0f32; src.len()];
    for_each_slab(&mut out, nx * ny, rng, |z, slab, r| {
        let base = z * nx * ny;
        for (k, v) in slab.iter_mut().enumerate() {
            let t = params[&src[base + k]];
            let n: f64 = if t.std > 0.0 { r.sample(StandardNormal) } else { 0.0 };
            *v = (t.mean + t.std * n) as f32;
        }
    });
    labels.with_data(out)
}

/// Mixture image min-max normalized to [0, 1].
pub fn sample_gmm_image<R: Rng>(labels: &LabelGrid, rng: &mut R, config: &GeneratorConfig) -> Result<ImageGrid> {
    let params = sample_gmm_params(labels, config, rng);
    Ok(normalize_min_max(&gmm_image_with_params(labels, &params, rng)?))
}

/// Affine rescale to [0, 1]; a constant image maps to 0.
pub fn normalize_min_max(image: &ImageGrid) -> ImageGrid {
    let (lo, hi) = image
        .data()
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v as f64), hi.max(v as f64)));
    let range = hi - lo;
    image.map(|v| if range > 0.0 { ((v as f64 - lo) / range) as f32 } else { 0.0 })
}

/// Multiplicative field `exp(b)` with log-bias drawn on a coarse lattice.
pub fn sample_bias_field<R: Rng>(geometry: &Geometry, config: &GeneratorConfig, rng: &mut R) -> VoxelGrid<f64> {
    let n = config.bias_grid;
    let b = config.bias_log_max;
    let ctrl: Vec<f64> = (0..n * n * n).map(|_| if b > 0.0 { rng.gen_range(-b..=b) } else { 0.0 }).collect();
    let log = upsample_control(&ctrl, [n; 3], geometry.dims());
    let (lo, hi) = ((-b).exp(), b.exp());
    VoxelGrid::new(geometry.clone(), log.into_iter().map(|v| v.exp().clamp(lo, hi)).collect()).expect("same lattice")
}

pub fn apply_bias(image: &ImageGrid, field: &VoxelGrid<f64>) -> Result<ImageGrid> {
    if !image.geometry().same_lattice(field.geometry()) {
        return Err(Error::arg("bias field lattice differs from the image"));
    }
    let data = image.data().iter().zip(field.data()).map(|(&v, &b)| (v as f64 * b) as f32).collect();
    image.with_data(data)
}

pub fn apply_bias_field<R: Rng>(image: &ImageGrid, rng: &mut R, config: &GeneratorConfig) -> Result<ImageGrid> {
    if image.data().iter().any(|v| !v.is_finite()) {
        return Err(Error::arg("image is not finite"));
    }
    apply_bias(image, &sample_bias_field(image.geometry(), config, rng))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::rng::{RngState, Stream};

    fn geom(n: usize) -> Geometry {
        Geometry::axis_aligned([n; 3], [1.0; 3], [0.0; 3]).unwrap()
    }

    #[test]
    fn forced_parameters_match_sample_moments() {
        let labels = VoxelGrid::filled(geom(64), 1i16);
        let params = BTreeMap::from([(1, Tissue { mean: 100.0, std: 5.0 })]);
        let img = gmm_image_with_params(&labels, &params, &mut RngState::new(1).stream(Stream::Gmm)).unwrap();
        let n = img.data().len() as f64;
        let mean = img.data().iter().map(|&v| v as f64).sum::<f64>() / n;
        let var = img.data().iter().map(|&v| (v as f64 - mean).powi(2)).sum::<f64>() / (n - 1.0);
        assert!((99.0..=101.0).contains(&mean), "mean {mean}");
        assert!((4.5..=5.5).contains(&var.sqrt()), "std {}", var.sqrt());
    }

    #[test]
    fn zero_std_is_piecewise_constant_and_thresholds() {
        let labels = VoxelGrid::from_fn(geom(16), |p| if p.x < 8.0 { 1i16 } else { 2 });
        let params = BTreeMap::from([(1, Tissue { mean: 50.0, std: 0.0 }), (2, Tissue { mean: 200.0, std: 0.0 })]);
        let img = gmm_image_with_params(&labels, &params, &mut RngState::new(2).stream(Stream::Gmm)).unwrap();
        for (v, l) in img.data().iter().zip(labels.data()) {
            assert_eq!((*v > 125.0) as i16 + 1, *l);
        }
        let mut c = GeneratorConfig::default();
        c.gmm_std_range = [0.0, 0.0];
        let img = sample_gmm_image(&labels, &mut RngState::new(3).stream(Stream::Gmm), &c).unwrap();
        let mut per: BTreeMap<i16, f32> = BTreeMap::new();
        for (v, l) in img.data().iter().zip(labels.data()) {
            assert_eq!(*per.entry(*l).or_insert(*v), *v);
        }
    }

    #[test]
    fn normalized_to_unit_range() {
        let labels = VoxelGrid::from_fn(geom(12), |p| (p.y / 4.0) as i16);
        let img = sample_gmm_image(&labels, &mut RngState::new(4).stream(Stream::Gmm), &GeneratorConfig::default()).unwrap();
        let lo = img.data().iter().cloned().fold(f32::INFINITY, f32::min);
        let hi = img.data().iter().cloned().fold(f32::NEG_INFINITY, f32::max);
        assert_eq!((lo, hi), (0.0, 1.0));
    }

    #[test]
    fn background_only_rejected() {
        let labels = VoxelGrid::filled(geom(4), 0i16);
        let r = sample_gmm_image(&labels, &mut RngState::new(0).stream(Stream::Gmm), &GeneratorConfig::default());
        assert!(matches!(r, Err(Error::Argument(_))));
    }

    #[test]
    fn bias_bounds_and_identity() {
        let img = VoxelGrid::from_fn(geom(20), |p| (1.0 + p.x * 0.1) as f32);
        let mut c = GeneratorConfig::default();
        c.bias_log_max = 0.0;
        assert_eq!(apply_bias_field(&img, &mut RngState::new(1).stream(Stream::Bias), &c).unwrap(), img);

        c.bias_log_max = 1.0;
        let out = apply_bias_field(&img, &mut RngState::new(1).stream(Stream::Bias), &c).unwrap();
        let tol = 1.0 + 2.0 * f32::EPSILON as f64;
        for (o, i) in out.data().iter().zip(img.data()) {
            let ratio = *o as f64 / *i as f64;
            assert!(ratio >= (-1f64).exp() / tol && ratio <= 1f64.exp() * tol, "ratio {ratio}");
        }

        let ones = VoxelGrid::filled(geom(20), 1f32);
        let field = sample_bias_field(ones.geometry(), &c, &mut RngState::new(6).stream(Stream::Bias));
        let out = apply_bias_field(&ones, &mut RngState::new(6).stream(Stream::Bias), &c).unwrap();
        for (o, b) in out.data().iter().zip(field.data()) {
            assert_eq!(*o, *b as f32);
        }
    }
}
