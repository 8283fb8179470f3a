use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::{Point3, Vector3};
use rayon::prelude::*;
use serde::Serialize;
use serde_json::json;

use super::config::{PipelineConfig, Side};
use super::provenance::Provenance;
use super::{CliError, CliResult, Context, DistanceArg, EvalArgs, MorphArgs, PhantomArgs, PipelineArgs, ReconArgs, SynthArgs};
use crate::error::{Error, Result};
use crate::mesh::io::{parse_overlay, read_off, write_off, write_overlay};
use crate::mesh::{expand_pial, marching_cubes, refine_to_sdf_traced, topology_correct_report, topology_report, CorrectionReport, RefineParams};
use crate::mesh::{TopologyReport, TriangleMesh};
use crate::metrics::{dice_all, macro_dice, pearson, surface_distances, DistanceMode, MetricReport};
use crate::morpho::{aggregate_by_parcel, cortical_thickness, write_morphometry_csv, MorphometryRecord};
use crate::parcel::LabelTable;
use crate::sdf::{mesh_to_sdf, SdfVolume, SurfaceIndex};
use crate::synth::{generate_sample, LabelSchema, Phantom, Preset};
use crate::volio::{read_labels, read_volume, write_volume, Datatype, Geometry};

/// Pial vertices deeper than this inside the white surface count as a crossing.
const CROSSING_TOL_MM: f64 = 1e-6;
const MAX_PHANTOM_LEVEL: u32 = 7;

pub(crate) fn require_file(path: &Path, what: &str) -> CliResult<()> {
    if path.is_file() {
        Ok(())
    } else {
        Err(CliError::Usage(format!("{what} file not found: {}", path.display())))
    }
}

/// Output directory plus the names written into it, for provenance.
struct Outputs {
    dir: PathBuf,
    names: Vec<String>,
}

impl Outputs {
    fn create(dir: &Path) -> CliResult<Self> {
        fs::create_dir_all(dir).map_err(|e| CliError::Usage(format!("cannot create output directory {}: {e}", dir.display())))?;
        Ok(Outputs { dir: dir.to_path_buf(), names: Vec::new() })
    }

    fn path(&mut self, name: impl Into<String>) -> PathBuf {
        let name = name.into();
        let p = self.dir.join(&name);
        self.names.push(name);
        p
    }

    fn finish(self, mut prov: Provenance, name: &str) -> CliResult<()> {
        prov.outputs = self.names;
        prov.write(&self.dir.join(name)).context("provenance")
    }
}

fn stem(subject: &str, hemi: Option<&str>) -> String {
    match hemi {
        Some(h) => format!("{subject}.{h}"),
        None => subject.to_string(),
    }
}

/// A single hemisphere tag, or none when no side was requested.
fn single_hemi(side: Option<Side>, what: &str) -> CliResult<Option<&'static str>> {
    match side {
        None => Ok(None),
        Some(Side::Both) => Err(CliError::Usage(format!("{what} handles one hemisphere; use --side left or right"))),
        Some(s) => Ok(Some(s.hemis()[0])),
    }
}

fn write_sdf(sdf: &SdfVolume, path: &Path) -> Result<()> {
    write_volume(sdf.grid(), path, Datatype::F32)
}

fn read_sdf(path: &Path, clip_mm: f64, what: &str) -> CliResult<SdfVolume> {
    let grid = read_volume(path).context(what)?;
    SdfVolume::from_grid(grid, clip_mm).context(what)
}

fn read_mesh(path: &Path, what: &str) -> CliResult<TriangleMesh> {
    require_file(path, what)?;
    read_off(path).context(what)
}

pub fn synth(a: &SynthArgs, cfg: &PipelineConfig) -> CliResult<()> {
    for (p, what) in [(&a.input, "label volume"), (&a.white, "white surface"), (&a.pial, "pial surface"), (&a.schema, "label schema")] {
        require_file(p, what)?;
    }
    let mut generator = cfg.generator.clone();
    if let Some(name) = &a.preset {
        let preset: Preset = name.parse().map_err(|e: Error| CliError::Usage(e.to_string()))?;
        generator = generator.with_preset(preset);
    }
    let seed = a.seed.or(cfg.seed).unwrap_or(0);
    let effective = PipelineConfig { generator, seed: Some(seed), ..cfg.clone() };

    let labels = read_labels(&a.input).context("label volume")?;
    let white = read_off(&a.white).context("white surface")?;
    let pial = read_off(&a.pial).context("pial surface")?;
    let schema = LabelSchema::load(&a.schema).context("label schema")?;
    let sample = generate_sample(&labels, &white, &pial, &schema, &effective.generator, seed).context("synth")?;
    let (white_sdf, pial_sdf) = if (effective.clip_mm - sample.white_sdf.clip_mm()).abs() > 0.0 {
        let g = labels.geometry();
        (
            mesh_to_sdf(&sample.white, g, effective.clip_mm).context("white SDF")?,
            mesh_to_sdf(&sample.pial, g, effective.clip_mm).context("pial SDF")?,
        )
    } else {
        (sample.white_sdf.clone(), sample.pial_sdf.clone())
    };

    let mut out = Outputs::create(&a.output_dir)?;
    let s = &a.subject;
    write_volume(&sample.image, out.path(format!("{s}.image.nii")), Datatype::F32).context("image")?;
    write_volume(&sample.labels, out.path(format!("{s}.labels.nii")), Datatype::I16).context("labels")?;
    write_sdf(&white_sdf, &out.path(format!("{s}.white.sdf.nii"))).context("white SDF")?;
    write_sdf(&pial_sdf, &out.path(format!("{s}.pial.sdf.nii"))).context("pial SDF")?;
    write_off(&sample.white, out.path(format!("{s}.white.off"))).context("white surface")?;
    write_off(&sample.pial, out.path(format!("{s}.pial.off"))).context("pial surface")?;

    let mut prov = Provenance::new("synth", &effective.canonical_json());
    prov.seed = Some(seed);
    for p in [&a.input, &a.white, &a.pial, &a.schema] {
        prov.add_input(p).context("provenance")?;
    }
    prov.details = json!({
        "preset": a.preset,
        "spacing_mm": sample.record.spacing_mm,
        "transform": sample.record.affine,
        "record": sample.record,
    });
    out.finish(prov, &format!("{s}.synth.provenance.json"))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RefineSummary {
    pub initial_energy: f64,
    pub final_energy: f64,
    pub accepted: usize,
    pub rejected: usize,
    pub reverted_vertices: usize,
    pub final_step: f64,
}

/// Surfaces reconstructed from a white/pial SDF pair.
#[derive(Debug, Clone)]
pub struct Reconstruction {
    pub white: TriangleMesh,
    pub pial: TriangleMesh,
    pub correction: CorrectionReport,
    pub white_topology: TopologyReport,
    pub pial_topology: TopologyReport,
    pub refine: RefineSummary,
}

/// Topology correction, iso-surface extraction, white refinement and pial expansion.
pub fn reconstruct(white_sdf: &SdfVolume, pial_sdf: &SdfVolume, params: &RefineParams) -> Result<Reconstruction> {
    if !white_sdf.geometry().same_lattice(pial_sdf.geometry()) {
        return Err(Error::arg("white and pial SDFs are not on the same lattice"));
    }
    let (corrected, correction) = topology_correct_report(white_sdf)?;
    let initial = marching_cubes(&corrected, 0.0)?;
    let (white, trace) = refine_to_sdf_traced(&initial, &corrected, params)?;
    let pial = expand_pial(&white, pial_sdf, params)?;
    let white_topology = topology_report(&white);
    let pial_topology = topology_report(&pial);
    for (name, t) in [("white", &white_topology), ("pial", &pial_topology)] {
        if !t.is_sphere_like() {
            return Err(Error::Topology(format!("{name} surface is not a closed genus-0 surface: {t}")));
        }
    }
    let refine = RefineSummary {
        initial_energy: trace.energies.first().copied().unwrap_or(f64::NAN),
        final_energy: trace.energies.last().copied().unwrap_or(f64::NAN),
        accepted: trace.accepted,
        rejected: trace.rejected,
        reverted_vertices: trace.reverted_vertices,
        final_step: trace.final_step,
    };
    Ok(Reconstruction { white, pial, correction, white_topology, pial_topology, refine })
}

fn topology_json(r: &Reconstruction) -> serde_json::Value {
    json!({
        "correction": r.correction,
        "white": r.white_topology,
        "pial": r.pial_topology,
        "refine": r.refine,
    })
}

fn write_json(value: &serde_json::Value, path: &Path) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

/// Lattice for oracle mode: the surfaces' bounds padded by the clip distance plus 2 mm.
fn oracle_geometry(white: &TriangleMesh, pial: &TriangleMesh, voxel: f64, grid_dims: Option<usize>, clip_mm: f64) -> CliResult<Geometry> {
    if !(voxel > 0.0 && voxel.is_finite()) {
        return Err(CliError::Usage(format!("voxel size must be positive, got {voxel}")));
    }
    let (lw, hw) = white.bounds();
    let (lp, hp) = pial.bounds();
    let lo = Point3::from(lw.coords.inf(&lp.coords));
    let hi = Point3::from(hw.coords.sup(&hp.coords));
    match grid_dims {
        None => {
            let pad = Vector3::repeat(clip_mm + 2.0);
            Geometry::covering(lo - pad, hi + pad, voxel).context("oracle lattice")
        }
        Some(n) => {
            let half = (n as f64 - 1.0) / 2.0 * voxel;
            let c = nalgebra::center(&lo, &hi);
            if (0..3).any(|k| hi[k] - c[k] > half - voxel) {
                return Err(CliError::Usage(format!("a {n}^3 lattice at {voxel} mm does not cover the surfaces")));
            }
            Geometry::axis_aligned([n; 3], [voxel; 3], [c.x - half, c.y - half, c.z - half]).context("oracle lattice")
        }
    }
}

/// `<prefix>.<hemi>.{white,pial}.sdf.nii[.gz]`, or `<prefix>.{white,pial}.sdf.nii[.gz]`
/// when `allow_bare` is set.
fn sdf_inputs(prefix: &str, hemi: &str, allow_bare: bool) -> CliResult<(PathBuf, PathBuf)> {
    let mut stems = vec![format!("{prefix}.{hemi}")];
    if allow_bare {
        stems.push(prefix.to_string());
    }
    let mut tried = Vec::new();
    for s in &stems {
        for ext in ["nii", "nii.gz"] {
            let w = PathBuf::from(format!("{s}.white.sdf.{ext}"));
            if w.is_file() {
                let p = PathBuf::from(format!("{s}.pial.sdf.{ext}"));
                if !p.is_file() {
                    return Err(CliError::Usage(format!("missing pial SDF: expected {}", p.display())));
                }
                return Ok((w, p));
            }
            tried.push(w.display().to_string());
        }
    }
    Err(CliError::Usage(format!("no white SDF for {hemi}; tried {}", tried.join(", "))))
}

struct ReconJob {
    hemi: Option<&'static str>,
    white_sdf: SdfVolume,
    pial_sdf: SdfVolume,
    inputs: Vec<PathBuf>,
    oracle: bool,
}

fn recon_jobs(a: &ReconArgs, cfg: &PipelineConfig) -> CliResult<Vec<ReconJob>> {
    let side = a.side.or(cfg.side);
    let clip = cfg.clip_mm;
    if a.white_mesh.is_some() || a.pial_mesh.is_some() {
        let (Some(wm), Some(pm)) = (&a.white_mesh, &a.pial_mesh) else {
            return Err(CliError::Usage("oracle mode needs both --white-mesh and --pial-mesh".into()));
        };
        let hemi = single_hemi(side, "oracle mode")?;
        let white = read_mesh(wm, "white surface")?;
        let pial = read_mesh(pm, "pial surface")?;
        let g = oracle_geometry(&white, &pial, a.voxel_size, a.grid_dims, clip)?;
        let white_sdf = mesh_to_sdf(&white, &g, clip).context("white SDF")?;
        let pial_sdf = mesh_to_sdf(&pial, &g, clip).context("pial SDF")?;
        return Ok(vec![ReconJob { hemi, white_sdf, pial_sdf, inputs: vec![wm.clone(), pm.clone()], oracle: true }]);
    }
    if a.white_sdf.is_some() || a.pial_sdf.is_some() {
        let Some(w) = &a.white_sdf else {
            return Err(CliError::Usage("missing white SDF (--white-sdf)".into()));
        };
        let Some(p) = &a.pial_sdf else {
            return Err(CliError::Usage("missing pial SDF (--pial-sdf)".into()));
        };
        require_file(w, "white SDF")?;
        require_file(p, "pial SDF")?;
        let hemi = single_hemi(side, "recon with explicit SDF files")?;
        let white_sdf = read_sdf(w, clip, "white SDF")?;
        let pial_sdf = read_sdf(p, clip, "pial SDF")?;
        return Ok(vec![ReconJob { hemi, white_sdf, pial_sdf, inputs: vec![w.clone(), p.clone()], oracle: false }]);
    }
    let Some(prefix) = &a.input else {
        return Err(CliError::Usage("give --input, --white-sdf/--pial-sdf or --white-mesh/--pial-mesh".into()));
    };
    let side = side.unwrap_or(Side::Both);
    let mut jobs = Vec::new();
    for &hemi in side.hemis() {
        let (w, p) = sdf_inputs(prefix, hemi, side != Side::Both)?;
        let white_sdf = read_sdf(&w, clip, "white SDF")?;
        let pial_sdf = read_sdf(&p, clip, "pial SDF")?;
        jobs.push(ReconJob { hemi: Some(hemi), white_sdf, pial_sdf, inputs: vec![w, p], oracle: false });
    }
    Ok(jobs)
}

pub fn recon(a: &ReconArgs, cfg: &PipelineConfig) -> CliResult<()> {
    let jobs = recon_jobs(a, cfg)?;
    let mut out = Outputs::create(&a.output_dir)?;
    let mut prov = Provenance::new("recon", &cfg.canonical_json());
    prov.seed = cfg.seed;
    let mut details = BTreeMap::new();
    for job in &jobs {
        let label = job.hemi.unwrap_or("surface");
        let r = reconstruct(&job.white_sdf, &job.pial_sdf, &cfg.refine).context(&format!("recon {label}"))?;
        let s = stem(&a.subject, job.hemi);
        if job.oracle {
            write_sdf(&job.white_sdf, &out.path(format!("{s}.white.sdf.nii"))).context("white SDF")?;
            write_sdf(&job.pial_sdf, &out.path(format!("{s}.pial.sdf.nii"))).context("pial SDF")?;
        }
        write_off(&r.white, out.path(format!("{s}.white.off"))).context("white surface")?;
        write_off(&r.pial, out.path(format!("{s}.pial.off"))).context("pial surface")?;
        let topo = topology_json(&r);
        write_json(&topo, &out.path(format!("{s}.topology.json"))).context("topology report")?;
        details.insert(label.to_string(), topo);
        for p in &job.inputs {
            prov.add_input(p).context("provenance")?;
        }
    }
    prov.details = json!({ "oracle": jobs.iter().any(|j| j.oracle), "hemispheres": details });
    out.finish(prov, &format!("{}.recon.provenance.json", a.subject))
}

/// Fails with diagnostics when any pial vertex lies inside the white surface.
fn check_not_crossing(white: &TriangleMesh, pial: &TriangleMesh) -> Result<()> {
    if pial.vertex_count() != white.vertex_count() || pial.triangles != white.triangles {
        return Err(Error::arg("white and pial meshes must share connectivity"));
    }
    let index = SurfaceIndex::new(white);
    let depth: Vec<f64> = pial
        .vertices
        .par_iter()
        .map(|p| index.signed_distance(p).map_or(0.0, |(d, _)| d))
        .collect();
    let inside: Vec<usize> = (0..depth.len()).filter(|&i| depth[i] < -CROSSING_TOL_MM).collect();
    if let Some(&worst) = inside.iter().min_by(|&&a, &&b| depth[a].total_cmp(&depth[b]).then(a.cmp(&b))) {
        return Err(Error::Geometry(format!(
            "pial surface crosses the white surface: {} of {} pial vertices lie inside (deepest {:.3} mm at vertex {worst})",
            inside.len(),
            depth.len(),
            -depth[worst]
        )));
    }
    Ok(())
}

/// Whole-hemisphere record first, then one record per lobe when labels are given.
pub fn morphometry(white: &TriangleMesh, pial: &TriangleMesh, labels: Option<&[i32]>, table: &LabelTable) -> Result<Vec<MorphometryRecord>> {
    check_not_crossing(white, pial)?;
    let thickness = cortical_thickness(white, pial)?;
    let n = white.vertex_count();
    match labels {
        None => {
            let zeros = vec![0; n];
            let regions = BTreeMap::from([(0, crate::morpho::WHOLE_HEMISPHERE.to_string())]);
            Ok(aggregate_by_parcel(white, pial, &thickness, &zeros, &regions)?[..1].to_vec())
        }
        Some(l) => {
            let mut regions = table.lobe_regions();
            for &v in l {
                regions.entry(v).or_insert_with(|| table.lobe(v).name().to_string());
            }
            aggregate_by_parcel(white, pial, &thickness, l, &regions)
        }
    }
}

pub fn morph(a: &MorphArgs, cfg: &PipelineConfig) -> CliResult<()> {
    let hemi = single_hemi(a.side.or(cfg.side), "morph")?;
    let white = read_mesh(&a.white, "white surface")?;
    let pial = read_mesh(&a.pial, "pial surface")?;
    let labels = match &a.labels {
        Some(p) => {
            require_file(p, "labels")?;
            let text = fs::read_to_string(p).map_err(Error::from).context("labels")?;
            Some(parse_overlay::<i32>(&text, white.vertex_count()).context(&format!("labels {}", p.display()))?)
        }
        None => None,
    };
    let table = match &a.label_table {
        Some(p) => {
            require_file(p, "label table")?;
            LabelTable::load(p).context("label table")?
        }
        None => LabelTable::desikan_killiany(),
    };
    let records = morphometry(&white, &pial, labels.as_deref(), &table).context("morph")?;
    let thickness = cortical_thickness(&white, &pial).context("morph")?;

    let mut out = Outputs::create(&a.output_dir)?;
    let s = stem(&a.subject, hemi);
    write_morphometry_csv(&records, out.path(format!("{s}.morphometry.csv"))).context("morphometry")?;
    write_overlay(&thickness, out.path(format!("{s}.thickness.csv"))).context("thickness")?;
    let mut prov = Provenance::new("morph", &cfg.canonical_json());
    prov.seed = cfg.seed;
    for p in [Some(&a.white), Some(&a.pial), a.labels.as_ref(), a.label_table.as_ref()].into_iter().flatten() {
        prov.add_input(p).context("provenance")?;
    }
    prov.details = json!({ "regions": records.len() });
    out.finish(prov, &format!("{}.morph.provenance.json", stem(&a.subject, hemi)))
}

/// Vertex labels from a `vertex,label` CSV, or voxel labels from a NIfTI volume.
fn load_labels(path: &Path) -> CliResult<Vec<i32>> {
    require_file(path, "labels")?;
    let name = path.to_string_lossy();
    if name.ends_with(".nii") || name.ends_with(".nii.gz") {
        let grid = read_labels(path).context("labels")?;
        return Ok(grid.data().iter().map(|&v| v as i32).collect());
    }
    let text = fs::read_to_string(path).map_err(Error::from).context("labels")?;
    let n = text.lines().skip(1).filter(|l| !l.trim().is_empty()).count();
    parse_overlay::<i32>(&text, n).context(&format!("labels {}", path.display()))
}

/// Paired measurements keyed by measure name.
fn load_series(path: &Path) -> CliResult<BTreeMap<String, (Vec<f64>, Vec<f64>)>> {
    require_file(path, "series")?;
    let text = fs::read_to_string(path).map_err(Error::from).context("series")?;
    parse_series(&text).context(&format!("series {}", path.display()))
}

fn parse_series(text: &str) -> Result<BTreeMap<String, (Vec<f64>, Vec<f64>)>> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h.trim() == "measure,reference,estimate" => {}
        _ => return Err(Error::format("line 1: expected header \"measure,reference,estimate\"")),
    }
    let mut out: BTreeMap<String, (Vec<f64>, Vec<f64>)> = BTreeMap::new();
    for (i, line) in lines {
        let ln = i + 1;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split(',').map(str::trim).collect();
        if f.len() != 3 {
            return Err(Error::format(format!("line {ln}: expected 3 fields, got {}", f.len())));
        }
        let num = |s: &str| s.parse::<f64>().map_err(|_| Error::format(format!("line {ln}: bad number {s:?}")));
        let e = out.entry(f[0].to_string()).or_default();
        e.0.push(num(f[1])?);
        e.1.push(num(f[2])?);
    }
    Ok(out)
}

/// `metric,key,value` rows.
fn flatten_report(r: &MetricReport) -> String {
    let mut s = String::from("metric,key,value\n");
    for (name, d) in [("white", &r.white), ("pial", &r.pial)] {
        if let Some(d) = d {
            let _ = writeln!(s, "{name},asd_mm,{}", d.asd_mm);
            let _ = writeln!(s, "{name},hd90_mm,{}", d.hd90_mm);
            let _ = writeln!(s, "{name},hd100_mm,{}", d.hd100_mm);
        }
    }
    for (k, v) in &r.dice {
        let _ = writeln!(s, "dice,{k},{v}");
    }
    for (k, p) in &r.pearson {
        let _ = writeln!(s, "pearson,{k}.r,{}", p.r);
        if let (Some(lo), Some(hi)) = (p.ci_lo, p.ci_hi) {
            let _ = writeln!(s, "pearson,{k}.ci_lo,{lo}");
            let _ = writeln!(s, "pearson,{k}.ci_hi,{hi}");
        }
        let _ = writeln!(s, "pearson,{k}.significant,{}", p.significant);
    }
    s
}

pub fn eval(a: &EvalArgs, cfg: &PipelineConfig) -> CliResult<()> {
    if a.white.is_none() && a.pial.is_none() && a.labels.is_none() && a.series.is_none() {
        return Err(CliError::Usage("nothing to evaluate: give surfaces, labels or a series".into()));
    }
    let mode = match a.distance {
        DistanceArg::PointToSurface => DistanceMode::PointToSurface,
        DistanceArg::VertexToVertex => DistanceMode::VertexToVertex,
    };
    let mut report = MetricReport::default();
    let mut inputs: Vec<&PathBuf> = Vec::new();
    if let (Some(p), Some(r)) = (&a.white, &a.ref_white) {
        let d = surface_distances(&read_mesh(p, "white surface")?, &read_mesh(r, "reference white surface")?, mode).context("white distances")?;
        report.white = Some(d);
        inputs.extend([p, r]);
    }
    if let (Some(p), Some(r)) = (&a.pial, &a.ref_pial) {
        let d = surface_distances(&read_mesh(p, "pial surface")?, &read_mesh(r, "reference pial surface")?, mode).context("pial distances")?;
        report.pial = Some(d);
        inputs.extend([p, r]);
    }
    if let (Some(p), Some(r)) = (&a.labels, &a.ref_labels) {
        let per = dice_all(&load_labels(p)?, &load_labels(r)?).context("dice")?;
        if let Some(m) = macro_dice(&per) {
            report.dice.insert("macro".into(), m);
        }
        report.dice.extend(per.into_iter().map(|(k, v)| (k.to_string(), v)));
        inputs.extend([p, r]);
    }
    if let Some(p) = &a.series {
        for (name, (x, y)) in load_series(p)? {
            let r = pearson(&x, &y).context(&format!("series {name}"))?;
            report.pearson.insert(name, r.into());
        }
        inputs.push(p);
    }

    let mut out = Outputs::create(&a.output_dir)?;
    let value = serde_json::to_value(&report).map_err(Error::from).context("report")?;
    write_json(&value, &out.path(format!("{}.eval.json", a.subject))).context("report")?;
    if a.csv {
        fs::write(out.path(format!("{}.eval.csv", a.subject)), flatten_report(&report))
            .map_err(Error::from)
            .context("report")?;
    }
    let mut prov = Provenance::new("eval", &cfg.canonical_json());
    prov.seed = cfg.seed;
    for p in inputs {
        prov.add_input(p).context("provenance")?;
    }
    prov.details = json!({ "distance": mode });
    out.finish(prov, &format!("{}.eval.provenance.json", a.subject))
}

pub fn pipeline(a: &PipelineArgs, cfg: &PipelineConfig) -> CliResult<()> {
    let side = a.side.or(cfg.side).unwrap_or(Side::Both);
    let seed = a.seed.or(cfg.seed);
    let effective = PipelineConfig { side: Some(side), seed, ..cfg.clone() };
    let subject_dir = a.sd.join(&a.subjid);
    let mut jobs = Vec::new();
    for &hemi in side.hemis() {
        let (w, p) = sdf_inputs(&a.input, hemi, side != Side::Both)?;
        jobs.push((hemi, w, p));
    }
    let mut out = Outputs::create(&subject_dir)?;
    fs::create_dir_all(subject_dir.join("surf")).map_err(Error::from).context("subject directory")?;
    fs::create_dir_all(subject_dir.join("stats")).map_err(Error::from).context("subject directory")?;
    let mut prov = Provenance::new("pipeline", &effective.canonical_json());
    prov.seed = seed;
    let mut details = BTreeMap::new();
    for (hemi, w, p) in &jobs {
        let white_sdf = read_sdf(w, cfg.clip_mm, "white SDF")?;
        let pial_sdf = read_sdf(p, cfg.clip_mm, "pial SDF")?;
        let r = reconstruct(&white_sdf, &pial_sdf, &cfg.refine).context(&format!("recon {hemi}"))?;
        write_off(&r.white, out.path(format!("surf/{hemi}.white.off"))).context("white surface")?;
        write_off(&r.pial, out.path(format!("surf/{hemi}.pial.off"))).context("pial surface")?;
        let topo = topology_json(&r);
        write_json(&topo, &out.path(format!("surf/{hemi}.topology.json"))).context("topology report")?;
        let records = morphometry(&r.white, &r.pial, None, &LabelTable::desikan_killiany()).context(&format!("morph {hemi}"))?;
        write_morphometry_csv(&records, out.path(format!("stats/{hemi}.morphometry.csv"))).context("morphometry")?;
        let thickness = cortical_thickness(&r.white, &r.pial).context("thickness")?;
        write_overlay(&thickness, out.path(format!("surf/{hemi}.thickness.csv"))).context("thickness")?;
        details.insert(hemi.to_string(), topo);
        prov.add_input(w).context("provenance")?;
        prov.add_input(p).context("provenance")?;
    }
    prov.details = json!({ "subjid": a.subjid, "side": side, "hemispheres": details });
    out.finish(prov, "pipeline.provenance.json")
}

pub fn phantom(a: &PhantomArgs, cfg: &PipelineConfig) -> CliResult<()> {
    if !(a.voxel_size > 0.0 && a.voxel_size.is_finite()) {
        return Err(CliError::Usage(format!("voxel size must be positive, got {}", a.voxel_size)));
    }
    if a.level > MAX_PHANTOM_LEVEL {
        return Err(CliError::Usage(format!("level {} exceeds {MAX_PHANTOM_LEVEL}", a.level)));
    }
    if !(a.amplitude.abs() < 5.0) {
        return Err(CliError::Usage(format!("amplitude {} must be below 5 mm in magnitude", a.amplitude)));
    }
    let ph = Phantom { amplitude: a.amplitude, ..Phantom::default() };
    let g = match a.grid_dims {
        Some(n) => ph.centered_geometry(n, a.voxel_size),
        None => ph.geometry(a.voxel_size, cfg.clip_mm),
    }
    .context("phantom lattice")?;
    let white = ph.white_mesh(a.level);
    let pial = ph.pial_mesh(a.level);
    let labels = ph.labels(&g);
    let white_sdf = mesh_to_sdf(&white, &g, cfg.clip_mm).context("white SDF")?;
    let pial_sdf = mesh_to_sdf(&pial, &g, cfg.clip_mm).context("pial SDF")?;

    let mut out = Outputs::create(&a.output_dir)?;
    let s = &a.subject;
    write_volume(&labels, out.path(format!("{s}.labels.nii")), Datatype::I16).context("labels")?;
    let mut schema = LabelSchema::phantom().to_json();
    schema.push('\n');
    fs::write(out.path(format!("{s}.schema.json")), schema).map_err(Error::from).context("schema")?;
    write_off(&white, out.path(format!("{s}.white.off"))).context("white surface")?;
    write_off(&pial, out.path(format!("{s}.pial.off"))).context("pial surface")?;
    write_sdf(&white_sdf, &out.path(format!("{s}.white.sdf.nii"))).context("white SDF")?;
    write_sdf(&pial_sdf, &out.path(format!("{s}.pial.sdf.nii"))).context("pial SDF")?;
    let mut prov = Provenance::new("phantom", &cfg.canonical_json());
    prov.seed = cfg.seed;
    prov.details = json!({
        "voxel_mm": a.voxel_size,
        "dims": g.dims(),
        "amplitude_mm": a.amplitude,
        "level": a.level,
        "white_radius_mm": ph.white_radius,
        "pial_radius_mm": ph.pial_radius,
    });
    out.finish(prov, &format!("{s}.phantom.provenance.json"))
}
