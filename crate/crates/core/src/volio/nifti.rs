//! NIfTI-1 single-file reader/writer.
//!
//! Only sform (`srow_*`) affines are accepted; files that rely on a qform
//! quaternion are rejected. Gzip input is detected from the magic bytes.

use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use byteorder::{BigEndian, ByteOrder, LittleEndian};
use flate2::read::GzDecoder;
use flate2::write::GzEncoder;
use flate2::Compression;
use nalgebra::Matrix4;

use super::grid::{Geometry, Voxel, VoxelGrid};
use crate::error::{Error, Result};

pub const HEADER_SIZE: usize = 348;
pub const VOX_OFFSET: usize = 352;
const MAGIC_SINGLE: &[u8; 4] = b"n+1\0";
const MAGIC_PAIR: &[u8; 4] = b"ni1\0";

mod offsets {
    pub const SIZEOF_HDR: usize = 0;
    pub const DIM: usize = 40;
    pub const DATATYPE: usize = 70;
    pub const BITPIX: usize = 72;
    pub const PIXDIM: usize = 76;
    pub const VOX_OFFSET: usize = 108;
    pub const SCL_SLOPE: usize = 112;
    pub const SCL_INTER: usize = 116;
    pub const XYZT_UNITS: usize = 123;
    pub const DESCRIP: usize = 148;
    pub const QFORM_CODE: usize = 252;
    pub const SFORM_CODE: usize = 254;
    pub const SROW_X: usize = 280;
    pub const MAGIC: usize = 344;
}

/// On-disk element type.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Datatype {
    U8,
    I16,
    F32,
    F64,
}

impl Datatype {
    pub fn code(self) -> i16 {
        match self {
            Datatype::U8 => 2,
            Datatype::I16 => 4,
            Datatype::F32 => 16,
            Datatype::F64 => 64,
        }
    }

    pub fn from_code(code: i16) -> Result<Self> {
        match code {
            2 => Ok(Datatype::U8),
            4 => Ok(Datatype::I16),
            16 => Ok(Datatype::F32),
            64 => Ok(Datatype::F64),
            other => Err(Error::Capability(format!("NIfTI datatype {other} is not supported"))),
        }
    }

    pub fn bytes(self) -> usize {
        match self {
            Datatype::U8 => 1,
            Datatype::I16 => 2,
            Datatype::F32 => 4,
            Datatype::F64 => 8,
        }
    }

    fn range(self) -> (f64, f64) {
        match self {
            Datatype::U8 => (0.0, 255.0),
            Datatype::I16 => (i16::MIN as f64, i16::MAX as f64),
            Datatype::F32 => (f32::MIN as f64, f32::MAX as f64),
            Datatype::F64 => (f64::MIN, f64::MAX),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Endian {
    Little,
    Big,
}

/// The subset of the NIfTI-1 header this crate reads and writes.
#[derive(Debug, Clone, PartialEq)]
pub struct NiftiHeader {
    pub sizeof_hdr: i32,
    pub dim: [i16; 8],
    pub datatype: i16,
    pub bitpix: i16,
    pub pixdim: [f32; 8],
    pub vox_offset: f32,
    pub scl_slope: f32,
    pub scl_inter: f32,
    pub xyzt_units: u8,
    pub descrip: [u8; 80],
    pub qform_code: i16,
    pub sform_code: i16,
    pub srow: [[f32; 4]; 3],
    pub magic: [u8; 4],
}

impl NiftiHeader {
    /// Header for a 3-D single-file volume with an sform affine.
    pub fn for_grid(geometry: &Geometry, datatype: Datatype) -> Self {
        let dims = geometry.dims();
        let spacing = geometry.spacing();
        let a = geometry.affine();
        let mut srow = [[0f32; 4]; 3];
        for (r, row) in srow.iter_mut().enumerate() {
            for (c, v) in row.iter_mut().enumerate() {
                *v = a[(r, c)] as f32;
            }
        }
        let mut descrip = [0u8; 80];
        let text = b"cortexforge";
        descrip[..text.len()].copy_from_slice(text);
        NiftiHeader {
            sizeof_hdr: HEADER_SIZE as i32,
            dim: [3, dims[0] as i16, dims[1] as i16, dims[2] as i16, 1, 1, 1, 1],
            datatype: datatype.code(),
            bitpix: (datatype.bytes() * 8) as i16,
            pixdim: [1.0, spacing[0] as f32, spacing[1] as f32, spacing[2] as f32, 0.0, 0.0, 0.0, 0.0],
            vox_offset: VOX_OFFSET as f32,
            scl_slope: 1.0,
            scl_inter: 0.0,
            xyzt_units: 2, // millimetres
            descrip,
            qform_code: 0,
            sform_code: 1,
            srow,
            magic: *MAGIC_SINGLE,
        }
    }

    fn parse(buf: &[u8]) -> Result<(Self, Endian)> {
        if buf.len() < HEADER_SIZE {
            return Err(Error::format(format!("header truncated at {} bytes", buf.len())));
        }
        let le_dim0 = LittleEndian::read_i16(&buf[offsets::DIM..]);
        let endian = if (1..=7).contains(&le_dim0) {
            Endian::Little
        } else {
            let be_dim0 = BigEndian::read_i16(&buf[offsets::DIM..]);
            if (1..=7).contains(&be_dim0) {
                Endian::Big
            } else {
                return Err(Error::format(format!("dim[0] = {le_dim0} is not in 1..=7")));
            }
        };
        match endian {
            Endian::Little => Self::parse_with::<LittleEndian>(buf).map(|h| (h, endian)),
            Endian::Big => Self::parse_with::<BigEndian>(buf).map(|h| (h, endian)),
        }
    }

    fn parse_with<B: ByteOrder>(buf: &[u8]) -> Result<Self> {
        let sizeof_hdr = B::read_i32(&buf[offsets::SIZEOF_HDR..]);
        if sizeof_hdr != HEADER_SIZE as i32 {
            return Err(Error::format(format!("sizeof_hdr is {sizeof_hdr}, expected 348")));
        }
        let mut magic = [0u8; 4];
        magic.copy_from_slice(&buf[offsets::MAGIC..offsets::MAGIC + 4]);
        if &magic == MAGIC_PAIR {
            return Err(Error::Capability("header/image pair (ni1) files are not supported".into()));
        }
        if &magic != MAGIC_SINGLE {
            return Err(Error::format(format!("bad magic {magic:?}")));
        }
        let mut dim = [0i16; 8];
        for (i, d) in dim.iter_mut().enumerate() {
            *d = B::read_i16(&buf[offsets::DIM + 2 * i..]);
        }
        let mut pixdim = [0f32; 8];
        for (i, p) in pixdim.iter_mut().enumerate() {
            *p = B::read_f32(&buf[offsets::PIXDIM + 4 * i..]);
        }
        let mut srow = [[0f32; 4]; 3];
        for (r, row) in srow.iter_mut().enumerate() {
            for (c, v) in row.iter_mut().enumerate() {
                *v = B::read_f32(&buf[offsets::SROW_X + 16 * r + 4 * c..]);
            }
        }
        let mut descrip = [0u8; 80];
        descrip.copy_from_slice(&buf[offsets::DESCRIP..offsets::DESCRIP + 80]);
        Ok(NiftiHeader {
            sizeof_hdr,
            dim,
            datatype: B::read_i16(&buf[offsets::DATATYPE..]),
            bitpix: B::read_i16(&buf[offsets::BITPIX..]),
            pixdim,
            vox_offset: B::read_f32(&buf[offsets::VOX_OFFSET..]),
            scl_slope: B::read_f32(&buf[offsets::SCL_SLOPE..]),
            scl_inter: B::read_f32(&buf[offsets::SCL_INTER..]),
            xyzt_units: buf[offsets::XYZT_UNITS],
            descrip,
            qform_code: B::read_i16(&buf[offsets::QFORM_CODE..]),
            sform_code: B::read_i16(&buf[offsets::SFORM_CODE..]),
            srow,
            magic,
        })
    }

    /// Little-endian 348-byte encoding.
    pub fn to_bytes(&self) -> [u8; HEADER_SIZE] {
        type B = LittleEndian;
        let mut buf = [0u8; HEADER_SIZE];
        B::write_i32(&mut buf[offsets::SIZEOF_HDR..], self.sizeof_hdr);
        for (i, d) in self.dim.iter().enumerate() {
            B::write_i16(&mut buf[offsets::DIM + 2 * i..], *d);
        }
        B::write_i16(&mut buf[offsets::DATATYPE..], self.datatype);
        B::write_i16(&mut buf[offsets::BITPIX..], self.bitpix);
        for (i, p) in self.pixdim.iter().enumerate() {
            B::write_f32(&mut buf[offsets::PIXDIM + 4 * i..], *p);
        }
        B::write_f32(&mut buf[offsets::VOX_OFFSET..], self.vox_offset);
        B::write_f32(&mut buf[offsets::SCL_SLOPE..], self.scl_slope);
        B::write_f32(&mut buf[offsets::SCL_INTER..], self.scl_inter);
        buf[offsets::XYZT_UNITS] = self.xyzt_units;
        buf[offsets::DESCRIP..offsets::DESCRIP + 80].copy_from_slice(&self.descrip);
        B::write_i16(&mut buf[offsets::QFORM_CODE..], self.qform_code);
        B::write_i16(&mut buf[offsets::SFORM_CODE..], self.sform_code);
        for (r, row) in self.srow.iter().enumerate() {
            for (c, v) in row.iter().enumerate() {
                B::write_f32(&mut buf[offsets::SROW_X + 16 * r + 4 * c..], *v);
            }
        }
        buf[offsets::MAGIC..offsets::MAGIC + 4].copy_from_slice(&self.magic);
        buf
    }

    pub fn dims(&self) -> Result<[usize; 3]> {
        let ndim = self.dim[0];
        let mut dims = [1usize; 3];
        for (a, d) in dims.iter_mut().enumerate() {
            if (a as i16) < ndim {
                let v = self.dim[a + 1];
                if v < 1 {
                    return Err(Error::format(format!("dim[{}] = {v} must be positive", a + 1)));
                }
                *d = v as usize;
            }
        }
        for a in 4..=(ndim as usize) {
            if self.dim[a] > 1 {
                return Err(Error::Capability(format!(
                    "{ndim}-D volumes with dim[{a}] = {} are not supported",
                    self.dim[a]
                )));
            }
        }
        Ok(dims)
    }

    /// Voxel-to-world affine: sform rows when present, otherwise diag(pixdim).
    pub fn affine(&self) -> Result<Matrix4<f64>> {
        if self.sform_code > 0 {
            let mut a = Matrix4::identity();
            for r in 0..3 {
                for c in 0..4 {
                    a[(r, c)] = self.srow[r][c] as f64;
                }
            }
            return Ok(a);
        }
        if self.qform_code > 0 {
            return Err(Error::Capability(
                "qform-only orientation is not supported; store an sform (srow_x/y/z)".into(),
            ));
        }
        let mut a = Matrix4::identity();
        for i in 0..3 {
            let p = self.pixdim[i + 1].abs() as f64;
            a[(i, i)] = if p > 0.0 { p } else { 1.0 };
        }
        Ok(a)
    }

    fn scaling(&self) -> Option<(f64, f64)> {
        let s = self.scl_slope as f64;
        let i = self.scl_inter as f64;
        if s != 0.0 && s.is_finite() && !(s == 1.0 && i == 0.0) {
            Some((s, i))
        } else {
            None
        }
    }
}

fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    let mut raw = Vec::new();
    File::open(path)?.read_to_end(&mut raw)?;
    if raw.len() >= 2 && raw[0] == 0x1F && raw[1] == 0x8B {
        let mut out = Vec::new();
        GzDecoder::new(&raw[..]).read_to_end(&mut out)?;
        Ok(out)
    } else {
        Ok(raw)
    }
}

struct Decoded {
    header: NiftiHeader,
    geometry: Geometry,
    values: Vec<f64>,
    datatype: Datatype,
}

fn decode(bytes: &[u8]) -> Result<Decoded> {
    let (header, endian) = NiftiHeader::parse(bytes)?;
    let datatype = Datatype::from_code(header.datatype)?;
    let dims = header.dims()?;
    let geometry = Geometry::new(dims, header.affine()?)
        .map_err(|e| Error::format(format!("invalid geometry: {e}")))?;
    let offset = header.vox_offset as usize;
    if offset < VOX_OFFSET {
        return Err(Error::format(format!("vox_offset {offset} < 352")));
    }
    let n = geometry.len();
    let need = offset + n * datatype.bytes();
    if bytes.len() < need {
        return Err(Error::Io(std::io::Error::new(
            std::io::ErrorKind::UnexpectedEof,
            format!("payload truncated: {} of {} bytes", bytes.len(), need),
        )));
    }
    let payload = &bytes[offset..need];
    let mut values = match endian {
        Endian::Little => decode_payload::<LittleEndian>(payload, datatype, n),
        Endian::Big => decode_payload::<BigEndian>(payload, datatype, n),
    };
    if let Some((s, i)) = header.scaling() {
        values.iter_mut().for_each(|v| *v = *v * s + i);
    }
    Ok(Decoded { header, geometry, values, datatype })
}

fn decode_payload<B: ByteOrder>(p: &[u8], dt: Datatype, n: usize) -> Vec<f64> {
    match dt {
        Datatype::U8 => p.iter().map(|&v| v as f64).collect(),
        Datatype::I16 => (0..n).map(|i| B::read_i16(&p[2 * i..]) as f64).collect(),
        Datatype::F32 => (0..n).map(|i| B::read_f32(&p[4 * i..]) as f64).collect(),
        Datatype::F64 => (0..n).map(|i| B::read_f64(&p[8 * i..])).collect(),
    }
}

/// Reads a NIfTI-1 volume (optionally gzipped) as float32.
pub fn read_volume(path: impl AsRef<Path>) -> Result<VoxelGrid<f32>> {
    let d = decode(&read_bytes(path.as_ref())?)?;
    VoxelGrid::new(d.geometry, d.values.into_iter().map(|v| v as f32).collect())
}

/// Reads a label volume as int16. Non-integral or out-of-range values are a format error.
pub fn read_labels(path: impl AsRef<Path>) -> Result<VoxelGrid<i16>> {
    let d = decode(&read_bytes(path.as_ref())?)?;
    let mut out = Vec::with_capacity(d.values.len());
    for (i, v) in d.values.iter().enumerate() {
        if v.fract() != 0.0 || *v < i16::MIN as f64 || *v > i16::MAX as f64 {
            return Err(Error::format(format!(
                "voxel {i} holds {v}, not an int16 label (datatype {:?})",
                d.datatype
            )));
        }
        out.push(*v as i16);
    }
    VoxelGrid::new(d.geometry, out)
}

/// Reads only the header.
pub fn read_header(path: impl AsRef<Path>) -> Result<NiftiHeader> {
    Ok(decode(&read_bytes(path.as_ref())?)?.header)
}

/// Encodes a grid as a single-file NIfTI-1 byte stream.
pub fn encode_volume<T: Voxel>(grid: &VoxelGrid<T>, datatype: Datatype) -> Result<Vec<u8>> {
    if datatype == Datatype::F64 {
        return Err(Error::Capability("writing float64 volumes is not supported".into()));
    }
    for d in grid.dims() {
        if d > i16::MAX as usize {
            return Err(Error::Range(format!("dimension {d} exceeds the NIfTI-1 limit")));
        }
    }
    let (lo, hi) = datatype.range();
    let header = NiftiHeader::for_grid(grid.geometry(), datatype);
    let mut out = Vec::with_capacity(VOX_OFFSET + grid.data().len() * datatype.bytes());
    out.extend_from_slice(&header.to_bytes());
    out.extend_from_slice(&[0u8; VOX_OFFSET - HEADER_SIZE]);
    for (i, v) in grid.data().iter().enumerate() {
        let x = v.to_f64();
        if !x.is_finite() && datatype != Datatype::F32 {
            return Err(Error::Range(format!("voxel {i} is not finite")));
        }
        match datatype {
            Datatype::F32 => out.extend_from_slice(&(x as f32).to_le_bytes()),
            _ => {
                if x.round() != x || x < lo || x > hi {
                    return Err(Error::Range(format!(
                        "voxel {i} value {x} not representable as {datatype:?}"
                    )));
                }
                match datatype {
                    Datatype::U8 => out.push(x as u8),
                    Datatype::I16 => out.extend_from_slice(&(x as i16).to_le_bytes()),
                    _ => unreachable!(),
                }
            }
        }
    }
    Ok(out)
}

/// Writes a single-file NIfTI-1 volume; a `.gz` extension gzips the stream.
pub fn write_volume<T: Voxel>(grid: &VoxelGrid<T>, path: impl AsRef<Path>, datatype: Datatype) -> Result<()> {
    let path = path.as_ref();
    let bytes = encode_volume(grid, datatype)?;
    let file = BufWriter::new(File::create(path)?);
    if path.extension().is_some_and(|e| e == "gz") {
        let mut gz = GzEncoder::new(file, Compression::default());
        gz.write_all(&bytes)?;
        gz.finish()?.flush()?;
    } else {
        let mut file = file;
        file.write_all(&bytes)?;
        file.flush()?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    fn geom(n: usize) -> Geometry {
        Geometry::axis_aligned([n, n, n], [1.0; 3], [0.0; 3]).unwrap()
    }

    fn minimal_file() -> Vec<u8> {
        let g = geom(4);
        let grid = VoxelGrid::new(g, (0..64).map(|i| i as f32 * 0.5).collect()).unwrap();
        encode_volume(&grid, Datatype::F32).unwrap()
    }

    #[test]
    fn minimal_float_file_decodes() {
        let bytes = minimal_file();
        assert_eq!(bytes.len(), 352 + 64 * 4);
        let d = decode(&bytes).unwrap();
        assert_eq!(d.geometry.dims(), [4, 4, 4]);
        assert_eq!(d.values[63], 31.5);
    }

    #[test]
    fn sizeof_hdr_347_is_format_error() {
        let mut bytes = minimal_file();
        LittleEndian::write_i32(&mut bytes[0..], 347);
        assert!(matches!(decode(&bytes), Err(Error::Format(_))));
    }

    #[test]
    fn bad_magic_is_format_error() {
        let mut bytes = minimal_file();
        bytes[344] = b'x';
        assert!(matches!(decode(&bytes), Err(Error::Format(_))));
    }

    #[test]
    fn unsupported_datatype_is_capability_error() {
        let mut bytes = minimal_file();
        LittleEndian::write_i16(&mut bytes[offsets::DATATYPE..], 8);
        assert!(matches!(decode(&bytes), Err(Error::Capability(_))));
    }

    #[test]
    fn truncated_payload_is_io_error() {
        let bytes = minimal_file();
        assert!(matches!(decode(&bytes[..bytes.len() - 1]), Err(Error::Io(_))));
    }

    #[test]
    fn qform_only_rejected() {
        let mut bytes = minimal_file();
        LittleEndian::write_i16(&mut bytes[offsets::SFORM_CODE..], 0);
        LittleEndian::write_i16(&mut bytes[offsets::QFORM_CODE..], 1);
        assert!(matches!(decode(&bytes), Err(Error::Capability(_))));
    }

    #[test]
    fn no_sform_falls_back_to_pixdim() {
        let mut bytes = minimal_file();
        LittleEndian::write_i16(&mut bytes[offsets::SFORM_CODE..], 0);
        LittleEndian::write_f32(&mut bytes[offsets::PIXDIM + 4..], 2.0);
        let d = decode(&bytes).unwrap();
        assert_eq!(d.geometry.spacing(), [2.0, 1.0, 1.0]);
        assert_eq!(d.geometry.affine()[(0, 3)], 0.0);
    }

    #[test]
    fn big_endian_input_is_swapped() {
        // re-encode the minimal file in big-endian by hand
        let le = minimal_file();
        let (h, _) = NiftiHeader::parse(&le).unwrap();
        let mut be = vec![0u8; le.len()];
        BigEndian::write_i32(&mut be[0..], h.sizeof_hdr);
        for i in 0..8 {
            BigEndian::write_i16(&mut be[offsets::DIM + 2 * i..], h.dim[i]);
            BigEndian::write_f32(&mut be[offsets::PIXDIM + 4 * i..], h.pixdim[i]);
        }
        BigEndian::write_i16(&mut be[offsets::DATATYPE..], h.datatype);
        BigEndian::write_i16(&mut be[offsets::BITPIX..], h.bitpix);
        BigEndian::write_f32(&mut be[offsets::VOX_OFFSET..], h.vox_offset);
        BigEndian::write_f32(&mut be[offsets::SCL_SLOPE..], 1.0);
        BigEndian::write_i16(&mut be[offsets::SFORM_CODE..], 1);
        for r in 0..3 {
            for c in 0..4 {
                BigEndian::write_f32(&mut be[offsets::SROW_X + 16 * r + 4 * c..], h.srow[r][c]);
            }
        }
        be[344..348].copy_from_slice(MAGIC_SINGLE);
        for i in 0..64 {
            let v = LittleEndian::read_f32(&le[352 + 4 * i..]);
            BigEndian::write_f32(&mut be[352 + 4 * i..], v);
        }
        let a = decode(&le).unwrap();
        let b = decode(&be).unwrap();
        assert_eq!(a.values, b.values);
        assert_eq!(a.geometry, b.geometry);
    }

    #[test]
    fn scl_slope_applied() {
        let g = geom(2);
        let grid = VoxelGrid::new(g, vec![1i16; 8]).unwrap();
        let mut bytes = encode_volume(&grid, Datatype::I16).unwrap();
        LittleEndian::write_f32(&mut bytes[offsets::SCL_SLOPE..], 2.0);
        LittleEndian::write_f32(&mut bytes[offsets::SCL_INTER..], 0.5);
        let d = decode(&bytes).unwrap();
        assert!(d.values.iter().all(|&v| v == 2.5));
    }

    #[test]
    fn int16_file_size_and_overflow() {
        let grid = VoxelGrid::filled(geom(8), 1.0f32);
        assert_eq!(encode_volume(&grid, Datatype::I16).unwrap().len(), 352 + 2 * 512);
        let big = VoxelGrid::filled(geom(2), 40000.0f32);
        assert!(matches!(encode_volume(&big, Datatype::I16), Err(Error::Range(_))));
    }

    #[test]
    fn float_round_trip_through_gzip_file() {
        let dir = tempfile::tempdir().unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let grid = VoxelGrid::new(geom(5), (0..125).map(|_| rng.gen::<f32>() * 100.0 - 50.0).collect()).unwrap();
        for name in ["a.nii", "a.nii.gz"] {
            let path = dir.path().join(name);
            write_volume(&grid, &path, Datatype::F32).unwrap();
            let back = read_volume(&path).unwrap();
            assert_eq!(back.data(), grid.data());
        }
        let raw = std::fs::read(dir.path().join("a.nii.gz")).unwrap();
        assert_eq!(&raw[..2], &[0x1F, 0x8B]);
    }

    #[test]
    fn labels_reject_fractional_values() {
        let grid = VoxelGrid::filled(geom(2), 1.5f32);
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("l.nii");
        write_volume(&grid, &p, Datatype::F32).unwrap();
        assert!(matches!(read_labels(&p), Err(Error::Format(_))));
    }
}
