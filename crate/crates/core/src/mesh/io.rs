//! ASCII OFF meshes and `vertex,value` CSV overlays.

use std::fmt::Display;
use std::fs;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use nalgebra::Point3;

use super::TriangleMesh;
use crate::error::{Error, Result};

pub fn write_off(mesh: &TriangleMesh, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, off_string(mesh))?;
    Ok(())
}

/// Encodes a mesh as OFF text. Coordinates use Rust's shortest round-trip formatting.
pub fn off_string(mesh: &TriangleMesh) -> String {
    let mut out = String::with_capacity(mesh.vertex_count() * 40 + mesh.triangle_count() * 20);
    out.push_str("OFF\n");
    out.push_str(&format!("{} {} 0\n", mesh.vertex_count(), mesh.triangle_count()));
    for p in &mesh.vertices {
        out.push_str(&format!("{} {} {}\n", p.x, p.y, p.z));
    }
    for t in &mesh.triangles {
        out.push_str(&format!("3 {} {} {}\n", t[0], t[1], t[2]));
    }
    out
}

pub fn read_off(path: impl AsRef<Path>) -> Result<TriangleMesh> {
    parse_off(&fs::read_to_string(path)?)
}

pub fn parse_off(text: &str) -> Result<TriangleMesh> {
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.split('#').next().unwrap_or("").trim()))
        .filter(|(_, l)| !l.is_empty());
    let (n, head) = lines.next().ok_or_else(|| Error::format("empty OFF file"))?;
    // the counts may share the header line ("OFF 8 12 0")
    let rest = head
        .strip_prefix("OFF")
        .ok_or_else(|| Error::format(format!("line {n}: expected \"OFF\" header")))?
        .trim();
    let counts_line = if rest.is_empty() {
        lines.next().ok_or_else(|| Error::format("OFF file missing counts line"))?
    } else {
        (n, rest)
    };
    let counts: Vec<usize> = parse_fields(counts_line.1, counts_line.0)?;
    if counts.len() < 2 {
        return Err(Error::format(format!("line {}: expected vertex and face counts", counts_line.0)));
    }
    let (nv, nf) = (counts[0], counts[1]);
    let mut vertices = Vec::with_capacity(nv);
    for _ in 0..nv {
        let (ln, l) = lines.next().ok_or_else(|| Error::format("OFF file ends inside vertex list"))?;
        let c: Vec<f64> = parse_fields(l, ln)?;
        if c.len() < 3 {
            return Err(Error::format(format!("line {ln}: vertex needs 3 coordinates")));
        }
        vertices.push(Point3::new(c[0], c[1], c[2]));
    }
    let mut triangles = Vec::with_capacity(nf);
    for _ in 0..nf {
        let (ln, l) = lines.next().ok_or_else(|| Error::format("OFF file ends inside face list"))?;
        let f: Vec<usize> = parse_fields(l, ln)?;
        if f.len() != 4 || f[0] != 3 {
            return Err(Error::format(format!("line {ln}: only triangular faces \"3 i j k\" are supported")));
        }
        if let Some(&bad) = f[1..].iter().find(|&&i| i >= nv) {
            return Err(Error::format(format!("line {ln}: vertex index {bad} out of range ({nv} vertices)")));
        }
        triangles.push([f[1], f[2], f[3]]);
    }
    TriangleMesh::new(vertices, triangles).map_err(|e| Error::format(e.to_string()))
}

fn parse_fields<T: FromStr>(line: &str, n: usize) -> Result<Vec<T>> {
    line.split_whitespace()
        .map(|tok| tok.parse::<T>().map_err(|_| Error::format(format!("line {n}: cannot parse {tok:?}"))))
        .collect()
}

/// Writes one value per vertex as `vertex,value` CSV.
pub fn write_overlay<T: Display>(values: &[T], path: impl AsRef<Path>) -> Result<()> {
    let mut f = std::io::BufWriter::new(fs::File::create(path)?);
    writeln!(f, "vertex,value")?;
    for (i, v) in values.iter().enumerate() {
        writeln!(f, "{i},{v}")?;
    }
    f.flush()?;
    Ok(())
}

/// Reads a `vertex,value` CSV. Every vertex in `0..n_vertices` must appear exactly once.
pub fn read_overlay<T: FromStr + Clone>(path: impl AsRef<Path>, n_vertices: usize) -> Result<Vec<T>> {
    parse_overlay(&fs::read_to_string(path)?, n_vertices)
}

pub fn parse_overlay<T: FromStr + Clone>(text: &str, n_vertices: usize) -> Result<Vec<T>> {
    let mut out: Vec<Option<T>> = vec![None; n_vertices];
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h.trim().starts_with("vertex,") => {}
        _ => return Err(Error::format("line 1: expected header \"vertex,<name>\"")),
    }
    for (i, line) in lines {
        let ln = i + 1;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let (v, val) = line
            .split_once(',')
            .ok_or_else(|| Error::format(format!("line {ln}: expected \"vertex,value\"")))?;
        let v: usize = v
            .trim()
            .parse()
            .map_err(|_| Error::format(format!("line {ln}: bad vertex index {v:?}")))?;
        if v >= n_vertices {
            return Err(Error::format(format!("line {ln}: vertex index {v} out of range (mesh has {n_vertices} vertices)")));
        }
        let val: T = val
            .trim()
            .parse()
            .map_err(|_| Error::format(format!("line {ln}: bad value {val:?}")))?;
        if out[v].is_some() {
            return Err(Error::format(format!("line {ln}: vertex {v} listed twice")));
        }
        out[v] = Some(val);
    }
    out.into_iter()
        .enumerate()
        .map(|(i, v)| v.ok_or_else(|| Error::format(format!("vertex {i} has no value"))))
        .collect()
}
