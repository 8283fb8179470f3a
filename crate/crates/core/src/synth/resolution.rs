use rand::Rng;
use rand_distr::StandardNormal;

use super::config::{Acquisition, GeneratorConfig};
use super::lines::{along_axis, lerp_at};
use super::rng::for_each_slab;
use crate::error::{Error, Result};
use crate::volio::ImageGrid;

/// FWHM to standard deviation for a Gaussian.
const FWHM_TO_SIGMA: f64 = 2.3548;

fn uniform<R: Rng>(rng: &mut R, r: [f64; 2]) -> f64 {
    if r[1] > r[0] {
        rng.gen_range(r[0]..=r[1])
    } else {
        r[0]
    }
}

/// The configured acquisition, or a random one drawn from the spacing ranges.
pub fn sample_acquisition<R: Rng>(config: &GeneratorConfig, rng: &mut R) -> Acquisition {
    if let Some(a) = config.acquisition {
        return a;
    }
    if rng.gen_bool(config.isotropic_prob) {
        Acquisition::Isotropic { mm: uniform(rng, config.iso_spacing_range_mm) }
    } else {
        let inplane_mm = uniform(rng, config.inplane_spacing_range_mm);
        let slice_mm = uniform(rng, config.slice_spacing_range_mm);
        Acquisition::Anisotropic { inplane_mm, slice_mm, slice_axis: rng.gen_range(0..3) }
    }
}

/// Noise standard deviation in image units: a percentage of the intensity range.
pub fn sample_noise_std<R: Rng>(image: &ImageGrid, config: &GeneratorConfig, rng: &mut R) -> f64 {
    let pct = uniform(rng, config.noise_std_range);
    let (lo, hi) = image
        .data()
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v as f64), hi.max(v as f64)));
    pct / 100.0 * (hi - lo)
}

/// Blur, subsample, add noise and upsample back onto the input lattice.
pub fn simulate_resolution<R: Rng>(image: &ImageGrid, acq: &Acquisition, rng: &mut R, config: &GeneratorConfig) -> Result<ImageGrid> {
    acq.validate()?;
    let std = sample_noise_std(image, config, rng);
    degrade(image, acq, std, rng)
}

/// [`simulate_resolution`] with a fixed noise standard deviation.
pub fn degrade<R: Rng>(image: &ImageGrid, acq: &Acquisition, noise_std: f64, rng: &mut R) -> Result<ImageGrid> {
    acq.validate()?;
    if !(noise_std >= 0.0) || !noise_std.is_finite() {
        return Err(Error::arg(format!("noise std {noise_std} is invalid")));
    }
    let spacing = image.spacing();
    let target = acq.spacing();
    let ratio: [f64; 3] = [0, 1, 2].map(|a| {
        let r = target[a] / spacing[a];
        if r > 1.0 + 1e-9 {
            r
        } else {
            1.0
        }
    });

    let full = image.dims();
    let mut dims = full;
    let mut data: Vec<f64> = image.data().iter().map(|&v| v as f64).collect();
    for a in 0..3 {
        if ratio[a] > 1.0 {
            let sigma = target[a] / FWHM_TO_SIGMA / spacing[a];
            data = blur_axis(&data, dims, a, sigma);
            let m = (((dims[a] as f64 - 0.5) / ratio[a] - 0.5).floor() as usize + 1).max(1);
            let r = ratio[a];
            (data, dims) = along_axis(&data, dims, a, m, |get, n, j| lerp_at(get, n, (j as f64 + 0.5) * r - 0.5));
        }
    }

    if noise_std > 0.0 {
        for_each_slab(&mut data, dims[0] * dims[1], rng, |_, slab, r| {
            for v in slab.iter_mut() {
                *v += noise_std * r.sample::<f64, _>(StandardNormal);
            }
        });
    }

    for a in 0..3 {
        if ratio[a] > 1.0 {
            let r = ratio[a];
            (data, dims) = along_axis(&data, dims, a, full[a], |get, n, i| lerp_at(get, n, (i as f64 + 0.5) / r - 0.5));
        }
    }
    debug_assert_eq!(dims, full);
    image.with_data(data.into_iter().map(|v| v as f32).collect())
}

/// Gaussian blur along one axis with replicated borders.
fn blur_axis(data: &[f64], dims: [usize; 3], axis: usize, sigma: f64) -> Vec<f64> {
    let radius = (3.0 * sigma).ceil().max(1.0) as isize;
    let mut w: Vec<f64> = (-radius..=radius).map(|k| (-((k * k) as f64) / (2.0 * sigma * sigma)).exp()).collect();
    let total: f64 = w.iter().sum();
    w.iter_mut().for_each(|v| *v /= total);
    let n = dims[axis] as isize;
    along_axis(data, dims, axis, dims[axis], |get, _, j| {
        let centre = get(j);
        // centred form keeps constant lines exact
        let mut acc = 0.0;
        for (k, wk) in (-radius..=radius).zip(&w) {
            let idx = (j as isize + k).clamp(0, n - 1) as usize;
            acc += wk * (get(idx) - centre);
        }
        centre + acc
    })
    .0
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::rng::{RngState, Stream};
    use crate::volio::{Geometry, VoxelGrid};

    fn geom(n: usize) -> Geometry {
        Geometry::axis_aligned([n; 3], [1.0; 3], [0.0; 3]).unwrap()
    }

    fn quiet() -> GeneratorConfig {
        GeneratorConfig { noise_std_range: [0.0, 0.0], ..GeneratorConfig::default() }
    }

    #[test]
    fn one_millimetre_is_unchanged() {
        let img = VoxelGrid::from_fn(geom(12), |p| (p.x * 0.3 + (p.y * 1.7).sin()) as f32);
        let out = simulate_resolution(&img, &Acquisition::Isotropic { mm: 1.0 }, &mut RngState::new(1).stream(Stream::Resolution), &quiet()).unwrap();
        for (a, b) in out.data().iter().zip(img.data()) {
            assert!((a - b).abs() <= 1e-5);
        }
    }

    #[test]
    fn constants_preserved_exactly() {
        let img = VoxelGrid::filled(geom(17), 0.3710f32);
        for acq in [
            Acquisition::Isotropic { mm: 3.0 },
            Acquisition::Isotropic { mm: 4.0 },
            Acquisition::Anisotropic { inplane_mm: 1.6, slice_mm: 5.0, slice_axis: 2 },
            Acquisition::Anisotropic { inplane_mm: 2.3, slice_mm: 2.31, slice_axis: 0 },
        ] {
            let out = simulate_resolution(&img, &acq, &mut RngState::new(2).stream(Stream::Resolution), &quiet()).unwrap();
            assert_eq!(out.geometry(), img.geometry());
            assert!(out.data().iter().all(|&v| v == 0.3710f32), "{acq:?}");
        }
    }

    #[test]
    fn sub_millimetre_rejected() {
        let img = VoxelGrid::filled(geom(4), 1f32);
        let r = simulate_resolution(&img, &Acquisition::Isotropic { mm: 0.5 }, &mut RngState::new(0).stream(Stream::Resolution), &quiet());
        assert!(matches!(r, Err(Error::Argument(_))));
    }

    #[test]
    fn noise_scales_with_range() {
        let img = VoxelGrid::from_fn(geom(24), |p| if p.x < 12.0 { 0.0 } else { 1.0 });
        let cfg = GeneratorConfig { noise_std_range: [10.0, 10.0], ..GeneratorConfig::default() };
        let std = sample_noise_std(&img, &cfg, &mut RngState::new(0).stream(Stream::Resolution));
        assert!((std - 0.1).abs() < 1e-12);
        let out = degrade(&img, &Acquisition::Isotropic { mm: 1.0 }, std, &mut RngState::new(0).stream(Stream::Resolution)).unwrap();
        let resid: Vec<f64> = out.data().iter().zip(img.data()).map(|(a, b)| (a - b) as f64).collect();
        let s = (resid.iter().map(|r| r * r).sum::<f64>() / resid.len() as f64).sqrt();
        assert!((s - 0.1).abs() < 0.005, "{s}");
    }

    #[test]
    fn thick_slices_only_blur_the_slice_axis() {
        let img = VoxelGrid::from_fn(geom(20), |p| if p.x < 10.0 { 0.0 } else { 1.0 });
        let acq = Acquisition::Anisotropic { inplane_mm: 1.0, slice_mm: 5.0, slice_axis: 2 };
        let out = simulate_resolution(&img, &acq, &mut RngState::new(0).stream(Stream::Resolution), &quiet()).unwrap();
        for (a, b) in out.data().iter().zip(img.data()) {
            assert!((a - b).abs() < 1e-6);
        }
    }

    #[test]
    fn acquisition_draws_respect_ranges() {
        let cfg = GeneratorConfig::default();
        let mut rng = RngState::new(4).stream(Stream::Resolution);
        for _ in 0..200 {
            match sample_acquisition(&cfg, &mut rng) {
                Acquisition::Isotropic { mm } => assert!((1.0..=4.0).contains(&mm)),
                Acquisition::Anisotropic { inplane_mm, slice_mm, slice_axis } => {
                    assert!((1.0..=2.0).contains(&inplane_mm) && (1.0..=5.0).contains(&slice_mm) && slice_axis < 3)
                }
            }
        }
    }
}
