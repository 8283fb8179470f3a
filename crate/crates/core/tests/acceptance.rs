//! Acceptance suite. Prints one PASS/FAIL line per criterion, preceded by the
//! individual checks, and exits non-zero if any criterion fails.

mod common;

use std::f64::consts::{E, PI};
use std::panic::{self, AssertUnwindSafe};
use std::path::Path;
use std::time::{Duration, Instant};

use nalgebra::{Matrix4, Point3, Rotation3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use common::{cli_ok, read_tree, s};
use cortexforge::cli::reconstruct;
use cortexforge::mesh::io::read_off;
use cortexforge::mesh::{self, marching_cubes, refine_to_sdf_traced, shapes, topology_correct_report, topology_report, RefineParams};
use cortexforge::metrics::{asd, dice, dice_all, fisher_ci, pearson, surface_distances, DistanceMode};
use cortexforge::morpho::{cortical_thickness, gray_matter_volume, surface_area};
use cortexforge::sdf::{mesh_to_sdf, point_mesh_distance_bruteforce, SdfVolume, SurfaceIndex};
use cortexforge::synth::{
    degrade, generate_sample, sample_bias_field, simulate_resolution, Acquisition, GeneratorConfig, LabelSchema, Phantom, Preset, RngState,
    Stream,
};
use cortexforge::volio::nifti::encode_volume;
use cortexforge::volio::{Datatype, Geometry, VoxelGrid};
use cortexforge::TriangleMesh;

#[derive(Default)]
struct Checks {
    items: Vec<(bool, String)>,
}

impl Checks {
    fn check(&mut self, ok: bool, what: impl Into<String>) {
        self.items.push((ok, what.into()));
    }
}

/// Surfaces produced by the pipeline runs, re-checked by the topology criterion.
#[derive(Default)]
struct Extracted {
    meshes: Vec<(String, TriangleMesh)>,
}

fn secs(d: Duration) -> f64 {
    d.as_secs_f64()
}

fn c1_oracle_pipeline(c: &mut Checks, out: &mut Extracted) {
    let tmp = tempfile::tempdir().unwrap();
    let ph_dir = tmp.path().join("phantom");
    let rec_dir = tmp.path().join("recon");
    cli_ok(&["phantom", "--output-dir", s(&ph_dir), "--threads", "4"]);
    let t = Instant::now();
    cli_ok(&[
        "recon",
        "--threads",
        "4",
        "--white-mesh",
        s(&ph_dir.join("phantom.white.off")),
        "--pial-mesh",
        s(&ph_dir.join("phantom.pial.off")),
        "--grid-dims",
        "192",
        "--voxel-size",
        "1",
        "--side",
        "left",
        "--output-dir",
        s(&rec_dir),
    ]);
    let elapsed = t.elapsed();
    let white = read_off(rec_dir.join("subject.lh.white.off")).unwrap();
    let pial = read_off(rec_dir.join("subject.lh.pial.off")).unwrap();
    let (rw, rp) = Phantom::default().reference_surfaces();
    let dw = surface_distances(&white, &rw, DistanceMode::PointToSurface).unwrap();
    let dp = surface_distances(&pial, &rp, DistanceMode::PointToSurface).unwrap();
    c.check(dw.asd_mm < 0.2, format!("white ASD {:.4} mm < 0.2 (hd90 {:.4})", dw.asd_mm, dw.hd90_mm));
    c.check(dp.asd_mm < 0.2, format!("pial ASD {:.4} mm < 0.2 (hd90 {:.4})", dp.asd_mm, dp.hd90_mm));
    c.check(secs(elapsed) < 60.0, format!("192^3 oracle recon with 4 threads took {:.1} s < 60", secs(elapsed)));
    out.meshes.push(("oracle white".into(), white));
    out.meshes.push(("oracle pial".into(), pial));
}

fn c2_degraded_pipeline(c: &mut Checks, out: &mut Extracted) {
    let ph = Phantom::default();
    let (rw, rp) = ph.reference_surfaces();
    let g = ph.geometry(1.0, 8.0).unwrap();
    let gt_white = mesh_to_sdf(&rw, &g, 5.0).unwrap();
    let gt_pial = mesh_to_sdf(&rp, &g, 5.0).unwrap();
    let config = GeneratorConfig::default().with_preset(Preset::Iso3);
    let acq = config.acquisition.unwrap();
    let t = Instant::now();
    let degrade_sdf = |sdf: &SdfVolume, seed: u64| {
        let img = simulate_resolution(sdf.grid(), &acq, &mut RngState::new(seed).stream(Stream::Resolution), &config).unwrap();
        SdfVolume::from_grid(img, sdf.clip_mm()).unwrap()
    };
    let white_sdf = degrade_sdf(&gt_white, 11);
    let pial_sdf = degrade_sdf(&gt_pial, 12);
    let noise: f64 = gt_white
        .grid()
        .data()
        .iter()
        .zip(white_sdf.grid().data())
        .map(|(a, b)| ((a - b) as f64).powi(2))
        .sum::<f64>()
        / g.len() as f64;
    let r = reconstruct(&white_sdf, &pial_sdf, &RefineParams::default()).unwrap();
    let elapsed = t.elapsed();
    let dw = surface_distances(&r.white, &rw, DistanceMode::PointToSurface).unwrap();
    let dp = surface_distances(&r.pial, &rp, DistanceMode::PointToSurface).unwrap();
    c.check(
        r.white_topology.is_sphere_like(),
        format!("iso3 + noise (rms SDF change {:.3} mm), corrected white: {}", noise.sqrt(), r.white_topology),
    );
    c.check(dw.asd_mm < 1.5, format!("white ASD {:.3} mm < 1.5", dw.asd_mm));
    c.check(dp.asd_mm < 1.5, format!("pial ASD {:.3} mm < 1.5", dp.asd_mm));
    c.check(secs(elapsed) < 120.0, format!("degraded pipeline took {:.1} s < 120", secs(elapsed)));
    out.meshes.push(("degraded white".into(), r.white));
    out.meshes.push(("degraded pial".into(), r.pial));
}

fn segment_distance(p: &Point3<f64>, a: &Point3<f64>, b: &Point3<f64>) -> f64 {
    let ab = b - a;
    let t = ((p - a).dot(&ab) / ab.norm_squared()).clamp(0.0, 1.0);
    (p - (a + ab * t)).norm()
}

/// Plane projection when it lands inside the triangle, else the nearest edge.
fn triangle_distance(p: &Point3<f64>, [a, b, c]: [Point3<f64>; 3]) -> f64 {
    let n = (b - a).cross(&(c - a));
    let q = p - n * ((p - a).dot(&n) / n.norm_squared());
    let inside = [(a, b), (b, c), (c, a)].iter().all(|(u, v)| (v - u).cross(&(q - u)).dot(&n) >= 0.0);
    if inside {
        (p - q).norm()
    } else {
        segment_distance(p, &a, &b).min(segment_distance(p, &b, &c)).min(segment_distance(p, &c, &a))
    }
}

fn c3_sdf_oracle(c: &mut Checks) {
    let mesh = shapes::torus(10.0, 3.0, 25, 10).transformed(&Matrix4::new_rotation(Vector3::new(0.3, -0.2, 0.5)));
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let points: Vec<Point3<f64>> =
        (0..1000).map(|_| Point3::new(rng.gen_range(-16.0..16.0), rng.gen_range(-16.0..16.0), rng.gen_range(-16.0..16.0))).collect();
    let index = SurfaceIndex::new(&mesh);
    let oracle: Vec<f64> =
        points.iter().map(|p| (0..mesh.triangle_count()).map(|t| triangle_distance(p, mesh.corners(t))).fold(f64::INFINITY, f64::min)).collect();
    let max = points.iter().zip(&oracle).map(|(p, o)| (index.distance(p) - o).abs()).fold(0.0, f64::max);
    let brute = point_mesh_distance_bruteforce(&points, &mesh);
    let max_brute = brute.iter().zip(&oracle).map(|(b, o)| (b - o).abs()).fold(0.0, f64::max);
    c.check(mesh.triangle_count() == 500, format!("mesh has {} triangles", mesh.triangle_count()));
    c.check(max < 1e-6, format!("1000 points: max |accelerated - independent oracle| = {max:.2e} mm < 1e-6"));
    c.check(max_brute < 1e-6, format!("library brute force vs independent oracle: {max_brute:.2e} mm"));
}

fn c4_morphometry(c: &mut Checks) {
    let white = shapes::icosphere(20.0, 4);
    let pial = shapes::icosphere(22.5, 4);
    let th = cortical_thickness(&white, &pial).unwrap();
    let worst = th.iter().map(|t| (t - 2.5).abs()).fold(0.0, f64::max);
    c.check(worst <= 0.05, format!("shell thickness 2.5 +- {worst:.4} mm at every vertex (<= 0.05)"));

    let analytic_gm = 4.0 / 3.0 * PI * (22.5f64.powi(3) - 20.0f64.powi(3));
    let gm = gray_matter_volume(&shapes::icosphere(20.0, 5), &shapes::icosphere(22.5, 5)).unwrap();
    let gm_err = (gm - analytic_gm).abs() / analytic_gm;
    c.check(gm_err < 0.01, format!("GM volume {gm:.1} vs {analytic_gm:.1} mm^3: {:.3}% < 1%", 100.0 * gm_err));

    let area_err = |level| {
        let a = surface_area(&shapes::icosphere(20.0, level));
        (a - 4.0 * PI * 400.0).abs() / (4.0 * PI * 400.0)
    };
    c.check(area_err(4) < 0.005, format!("sphere area error at level 4: {:.3}% < 0.5%", 100.0 * area_err(4)));

    let levels = [2u32, 3, 4];
    let area: Vec<f64> = levels.iter().map(|&l| area_err(l)).collect();
    let vol: Vec<f64> = levels
        .iter()
        .map(|&l| {
            let v = gray_matter_volume(&shapes::icosphere(20.0, l), &shapes::icosphere(22.5, l)).unwrap();
            (v - analytic_gm).abs() / analytic_gm
        })
        .collect();
    let thick: Vec<f64> = levels
        .iter()
        .map(|&l| {
            let t = cortical_thickness(&shapes::icosphere(20.0, l), &shapes::icosphere(22.5, l)).unwrap();
            t.iter().map(|t| (t - 2.5).abs()).fold(0.0, f64::max)
        })
        .collect();
    let decreasing = |v: &[f64]| v.windows(2).all(|w| w[1] < w[0]);
    c.check(
        decreasing(&area) && decreasing(&vol) && decreasing(&thick),
        format!("errors over levels 2,3,4 decrease: area {}, volume {}, thickness {}", sci(&area), sci(&vol), sci(&thick)),
    );
}

fn sci(v: &[f64]) -> String {
    v.iter().map(|x| format!("{x:.2e}")).collect::<Vec<_>>().join(" > ")
}

fn cube_field(n: usize, f: impl Fn(f64, f64, f64) -> f64 + Sync) -> SdfVolume {
    let g = Geometry::axis_aligned([n; 3], [1.0; 3], [0.0; 3]).unwrap();
    SdfVolume::from_grid(VoxelGrid::from_fn(g, |p| f(p.x, p.y, p.z) as f32), 5.0).unwrap()
}

fn c5_topology(c: &mut Checks, extracted: &Extracted) {
    let ctr = 15.5;
    let r = move |x: f64, y: f64, z: f64| ((x - ctr).powi(2) + (y - ctr).powi(2) + (z - ctr).powi(2)).sqrt();
    let handle = cube_field(32, |x, y, z| (r(x, y, z) - 10.0).max(1.0 - (x - ctr).abs().max((y - ctr).abs())));
    let cavity = cube_field(32, |x, y, z| (r(x, y, z) - 10.0).max(3.0 - r(x, y, z)));
    let mut meshes: Vec<(String, TriangleMesh)> = Vec::new();
    for (name, sdf) in [("drilled handle", &handle), ("cavity", &cavity)] {
        let before = topology_report(&marching_cubes(sdf, 0.0).unwrap());
        let (fixed, report) = topology_correct_report(sdf).unwrap();
        let m = marching_cubes(&fixed, 0.0).unwrap();
        let after = topology_report(&m);
        c.check(
            after.genus == 0 && after.components == 1,
            format!("{name}: genus {} / {} components -> genus {} / {} component", before.genus, before.components, after.genus, after.components),
        );
        if name == "drilled handle" {
            c.check(report.handles_removed == 1, format!("{name}: report lists {} handle removed", report.handles_removed));
        } else {
            c.check(report.cavities_filled == 1, format!("{name}: report lists {} cavity filled", report.cavities_filled));
        }
        meshes.push((format!("corrected {name}"), m));
    }
    let ico = topology_report(&shapes::icosahedron(1.0));
    let torus = topology_report(&shapes::torus(5.0, 2.0, 24, 12));
    c.check(ico.euler == 2, format!("icosahedron Euler characteristic {}", ico.euler));
    c.check(torus.euler == 0, format!("torus Euler characteristic {}", torus.euler));
    for (name, m) in extracted.meshes.iter().chain(meshes.iter()) {
        let closed = m.check_closed_manifold().is_ok();
        let si = mesh::self_intersections(m).count();
        c.check(closed && si == 0, format!("{name}: closed 2-manifold {closed}, {si} self-intersections"));
    }
}

fn c6_metrics(c: &mut Checks) {
    let a = Phantom::default().white_mesh(4);
    let b = shapes::icosphere(20.0, 4);
    let m = DistanceMode::PointToSurface;
    c.check(asd(&a, &a, m).unwrap() == 0.0, "asd(a, a) = 0");
    let (ab, ba) = (asd(&a, &b, m).unwrap(), asd(&b, &a, m).unwrap());
    c.check((ab - ba).abs() < 1e-12, format!("asd symmetric: {ab:.6} vs {ba:.6}"));
    let rigid = Matrix4::new_translation(&Vector3::new(3.0, -7.0, 2.0)) * Rotation3::from_euler_angles(0.4, -0.9, 1.3).to_homogeneous();
    let moved = asd(&a.transformed(&rigid), &b.transformed(&rigid), m).unwrap();
    c.check((moved - ab).abs() < 1e-9, format!("asd rigid-invariant: {moved:.9} vs {ab:.9}"));

    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let la: Vec<i32> = (0..500).map(|_| rng.gen_range(0..4)).collect();
    let lb: Vec<i32> = la.iter().map(|&l| if rng.gen_bool(0.2) { rng.gen_range(0..4) } else { l }).collect();
    let self_dice = dice_all(&la, &la).unwrap();
    c.check(self_dice.values().all(|&d| d == 1.0), "dice(a, a) = 1 for every label");
    let sym = (0..4).all(|l| dice(&la, &lb, l).unwrap() == dice(&lb, &la, l).unwrap());
    c.check(sym, "dice symmetric for every label");

    let x: Vec<f64> = (0..40).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let y: Vec<f64> = x.iter().map(|v| v + rng.gen_range(-0.5..0.5)).collect();
    let r = pearson(&x, &y).unwrap().r;
    c.check((pearson(&x, &x).unwrap().r - 1.0).abs() < 1e-12, "pearson(x, x) = 1");
    c.check((pearson(&y, &x).unwrap().r - r).abs() < 1e-12, "pearson symmetric");
    let ax: Vec<f64> = x.iter().map(|v| 3.5 * v - 2.0).collect();
    let neg: Vec<f64> = x.iter().map(|v| -0.5 * v + 9.0).collect();
    let (ra, rn) = (pearson(&ax, &y).unwrap().r, pearson(&neg, &y).unwrap().r);
    c.check((ra - r).abs() < 1e-12 && (rn + r).abs() < 1e-12, format!("pearson affine: {ra:.12} and {rn:.12} vs {r:.12}"));
    let (lo, hi) = fisher_ci(0.70, 15).expect("defined for n > 3");
    c.check((lo - 0.29).abs() <= 0.01 && (hi - 0.89).abs() <= 0.01, format!("fisher_ci(0.70, 15) = [{lo:.3}, {hi:.3}] vs [.29, .89]"));
}

fn sample_bytes(s: &cortexforge::synth::SynthSample) -> Vec<u8> {
    let mut b = encode_volume(&s.image, Datatype::F32).unwrap();
    b.extend(encode_volume(&s.labels, Datatype::I16).unwrap());
    b.extend(encode_volume(s.white_sdf.grid(), Datatype::F32).unwrap());
    b.extend(encode_volume(s.pial_sdf.grid(), Datatype::F32).unwrap());
    b.extend(serde_json::to_vec(&s.record).unwrap());
    b
}

/// Spectral energy beyond `cutoff` cycles/voxel on any axis.
fn energy_above(data: &[f64], n: usize, cutoff: f64) -> f64 {
    let mut buf: Vec<Complex<f64>> = data.iter().map(|&v| Complex::new(v, 0.0)).collect();
    let fft = FftPlanner::new().plan_fft_forward(n);
    for axis in 0..3 {
        let stride = [1, n, n * n][axis];
        let mut line = vec![Complex::new(0.0, 0.0); n];
        for a in 0..n {
            for b in 0..n {
                let base = match axis {
                    0 => a * n + b * n * n,
                    1 => a + b * n * n,
                    _ => a + b * n,
                };
                for i in 0..n {
                    line[i] = buf[base + i * stride];
                }
                fft.process(&mut line);
                for i in 0..n {
                    buf[base + i * stride] = line[i];
                }
            }
        }
    }
    let freq = |k: usize| (k.min(n - k)) as f64 / n as f64;
    let mut high = 0.0;
    for z in 0..n {
        for y in 0..n {
            for x in 0..n {
                if freq(x) > cutoff || freq(y) > cutoff || freq(z) > cutoff {
                    high += buf[x + n * (y + n * z)].norm_sqr();
                }
            }
        }
    }
    high
}

fn c7_synthesis(c: &mut Checks) {
    let ph = Phantom::default();
    let g = ph.geometry(2.0, 2.0).unwrap();
    let labels = ph.labels(&g);
    let (w, p) = (ph.white_mesh(3), ph.pial_mesh(3));
    let schema = LabelSchema::phantom();
    let config = GeneratorConfig::default();
    let mut reproducible = 0;
    let mut max_sdf = 0f32;
    for seed in 0..100u64 {
        let a = generate_sample(&labels, &w, &p, &schema, &config, seed).unwrap();
        let b = generate_sample(&labels, &w, &p, &schema, &config, seed).unwrap();
        if sample_bytes(&a) == sample_bytes(&b) {
            reproducible += 1;
        }
        for v in a.white_sdf.grid().data().iter().chain(a.pial_sdf.grid().data()) {
            max_sdf = max_sdf.max(v.abs());
        }
    }
    c.check(reproducible == 100, format!("{reproducible}/100 seeds byte-reproducible"));
    c.check(max_sdf <= 5.0, format!("max |SDF| over 100 samples {max_sdf:.3} <= 5 mm"));

    let (mut lo, mut hi) = (f64::INFINITY, 0f64);
    for seed in 0..100u64 {
        let f = sample_bias_field(&g, &config, &mut RngState::new(seed).stream(Stream::Bias));
        for &v in f.data() {
            lo = lo.min(v);
            hi = hi.max(v);
        }
    }
    c.check(lo >= 1.0 / E && hi <= E, format!("bias field range [{lo:.4}, {hi:.4}] within [1/e, e]"));

    let flat = VoxelGrid::filled(Geometry::axis_aligned([33; 3], [1.0; 3], [0.0; 3]).unwrap(), 0.6180f32);
    let quiet = GeneratorConfig { noise_std_range: [0.0, 0.0], ..GeneratorConfig::default() };
    let exact = Preset::ALL.iter().all(|preset| {
        let out = simulate_resolution(&flat, &preset.acquisition(), &mut RngState::new(1).stream(Stream::Resolution), &quiet).unwrap();
        out.data().iter().all(|&v| v == 0.6180f32)
    });
    c.check(exact, "every preset maps a constant image to itself exactly");

    let n = 64;
    let mut impulse = VoxelGrid::filled(Geometry::axis_aligned([n; 3], [1.0; 3], [0.0; 3]).unwrap(), 0f32).into_data();
    impulse[32 + n * (32 + n * 32)] = 1.0;
    let impulse = VoxelGrid::new(Geometry::axis_aligned([n; 3], [1.0; 3], [0.0; 3]).unwrap(), impulse).unwrap();
    let out = degrade(&impulse, &Acquisition::Isotropic { mm: 4.0 }, 0.0, &mut RngState::new(0).stream(Stream::Resolution)).unwrap();
    let to64 = |g: &VoxelGrid<f32>| g.data().iter().map(|&v| v as f64).collect::<Vec<f64>>();
    let nyquist = 1.0 / (2.0 * 4.0);
    let before = energy_above(&to64(&impulse), n, nyquist);
    let after = energy_above(&to64(&out), n, nyquist);
    let reduction = 1.0 - after / before;
    c.check(reduction > 0.9, format!("4 mm impulse response: energy above Nyquist reduced {:.1}% > 90%", 100.0 * reduction));
}

fn c8_numerics(c: &mut Checks) {
    let ph = Phantom::default();
    let g = ph.geometry(1.0, 6.0).unwrap();
    let (rw, rp) = ph.reference_surfaces();
    let clip = 5.0;
    let mut total = 0usize;
    let mut outside = 0usize;
    let (mut gmin, mut gmax) = (f64::INFINITY, 0f64);
    for sdf in [mesh_to_sdf(&rw, &g, clip).unwrap(), mesh_to_sdf(&rp, &g, clip).unwrap()] {
        let d = g.dims();
        let v = |x: usize, y: usize, z: usize| sdf.grid().get(x, y, z) as f64;
        for z in 1..d[2] - 1 {
            for y in 1..d[1] - 1 {
                for x in 1..d[0] - 1 {
                    let stencil = [v(x, y, z), v(x - 1, y, z), v(x + 1, y, z), v(x, y - 1, z), v(x, y + 1, z), v(x, y, z - 1), v(x, y, z + 1)];
                    if stencil.iter().any(|s| s.abs() >= clip - 1e-3) {
                        continue;
                    }
                    let grad = Vector3::new(v(x + 1, y, z) - v(x - 1, y, z), v(x, y + 1, z) - v(x, y - 1, z), v(x, y, z + 1) - v(x, y, z - 1)) / 2.0;
                    let n = grad.norm();
                    total += 1;
                    gmin = gmin.min(n);
                    gmax = gmax.max(n);
                    if !(0.9..=1.1).contains(&n) {
                        outside += 1;
                    }
                }
            }
        }
    }
    c.check(
        outside == 0,
        format!("eikonal: |grad SDF| in [{gmin:.3}, {gmax:.3}] over {total} off-plateau voxels, {outside} outside [0.9, 1.1]"),
    );

    let sphere = SdfVolume::from_grid(
        VoxelGrid::from_fn(Geometry::axis_aligned([51; 3], [1.0; 3], [-25.0; 3]).unwrap(), |p| (p.coords.norm() - 20.0) as f32),
        5.0,
    )
    .unwrap();
    let mut monotone = 0;
    for trial in 0..20u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(100 + trial);
        let amp = rng.gen_range(0.2..1.5);
        let noisy = shapes::radial_warp(&shapes::icosphere(20.0, 3), Point3::origin(), |_| 20.0 + rng.gen_range(-amp..amp));
        let (_, trace) = refine_to_sdf_traced(&noisy, &sphere, &RefineParams::default()).unwrap();
        if trace.energies.windows(2).all(|w| w[1] <= w[0]) {
            monotone += 1;
        }
    }
    c.check(monotone == 20, format!("refinement energy non-increasing in {monotone}/20 perturbed-sphere trials"));

    let tmp = tempfile::tempdir().unwrap();
    let run_all = |threads: &str, root: &Path| {
        let ph_dir = root.join("phantom");
        let ph_s = |f: &str| ph_dir.join(f).to_str().unwrap().to_string();
        cli_ok(&["phantom", "--threads", threads, "--voxel-size", "1.5", "--level", "4", "--output-dir", s(&ph_dir)]);
        let syn = root.join("synth");
        cli_ok(&[
            "synth", "--threads", threads, "--input", &ph_s("phantom.labels.nii"), "--white", &ph_s("phantom.white.off"), "--pial",
            &ph_s("phantom.pial.off"), "--schema", &ph_s("phantom.schema.json"), "--seed", "5", "--preset", "iso3", "--output-dir", s(&syn),
        ]);
        let rec = root.join("recon");
        cli_ok(&["recon", "--threads", threads, "--input", &ph_s("phantom"), "--side", "left", "--output-dir", s(&rec)]);
        let (wo, po) = (rec.join("subject.lh.white.off"), rec.join("subject.lh.pial.off"));
        cli_ok(&["morph", "--threads", threads, "--white", s(&wo), "--pial", s(&po), "--output-dir", s(&root.join("morph"))]);
        cli_ok(&[
            "eval", "--threads", threads, "--white", s(&wo), "--ref-white", &ph_s("phantom.white.off"), "--pial", s(&po), "--ref-pial",
            &ph_s("phantom.pial.off"), "--csv", "--output-dir", s(&root.join("eval")),
        ]);
        cli_ok(&["pipeline", "-i", &ph_s("phantom"), "-subjid", "s1", "-side", "left", "-threads", threads, "-sd", s(&root.join("subjects"))]);
        read_tree(root)
    };
    let one = run_all("1", &tmp.path().join("t1"));
    let eight = run_all("8", &tmp.path().join("t8"));
    let differing: Vec<String> = one
        .keys()
        .chain(eight.keys())
        .filter(|k| one.get(*k) != eight.get(*k))
        .map(|k| k.display().to_string())
        .collect();
    // provenance files name their inputs, which live under different roots
    let differing: Vec<&String> = differing.iter().filter(|k| !k.ends_with("provenance.json")).collect();
    c.check(
        differing.is_empty() && one.len() == eight.len(),
        format!("phantom, synth, recon, morph, eval, pipeline: {} outputs, 1 vs 8 threads differ in {differing:?}", one.len()),
    );
}

fn main() {
    let mut extracted = Extracted::default();
    let mut failed = 0;
    let mut run = |id: u32, name: &str, f: &mut dyn FnMut(&mut Checks)| {
        let mut checks = Checks::default();
        let t = Instant::now();
        let res = panic::catch_unwind(AssertUnwindSafe(|| f(&mut checks)));
        for (ok, what) in &checks.items {
            println!("    [{}] {what}", if *ok { "ok" } else { "FAILED" });
        }
        let ok = res.is_ok() && !checks.items.is_empty() && checks.items.iter().all(|(ok, _)| *ok);
        if res.is_err() {
            println!("    [FAILED] panicked");
        }
        println!("{} criterion {id}: {name} ({:.1} s)", if ok { "PASS" } else { "FAIL" }, secs(t.elapsed()));
        if !ok {
            failed += 1;
        }
    };
    run(1, "oracle-mode pipeline on the 1 mm phantom", &mut |c| c1_oracle_pipeline(c, &mut extracted));
    run(2, "degraded-input pipeline (iso3, noise, topology-corrected)", &mut |c| c2_degraded_pipeline(c, &mut extracted));
    run(3, "SDF oracle equivalence", &mut c3_sdf_oracle);
    run(4, "morphometry phantoms", &mut c4_morphometry);
    run(5, "topology suite", &mut |c| c5_topology(c, &extracted));
    run(6, "metrics suite", &mut c6_metrics);
    run(7, "synthesis determinism and bounds", &mut c7_synthesis);
    run(8, "numerical checks", &mut c8_numerics);
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}
