//! NPY v1.0 reading and writing.
//!
//! Supports little-endian `<f4`, `<f8` and `<i8` in C order, which is all
//! the engine exchanges. Headers are padded so the payload starts on a
//! 64-byte boundary, matching what numpy writes.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use ndarray::Array2;

use crate::{OwlError, Result};

pub const MAGIC: &[u8; 6] = b"\x93NUMPY";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Dtype {
    F4,
    F8,
    I8,
}

impl Dtype {
    fn descr(self) -> &'static str {
        match self {
            Dtype::F4 => "<f4",
            Dtype::F8 => "<f8",
            Dtype::I8 => "<i8",
        }
    }

    fn size(self) -> usize {
        match self {
            Dtype::F4 => 4,
            Dtype::F8 | Dtype::I8 => 8,
        }
    }

    fn parse(descr: &str) -> Result<Self> {
        match descr {
            "<f4" => Ok(Dtype::F4),
            "<f8" => Ok(Dtype::F8),
            "<i8" => Ok(Dtype::I8),
            other => Err(OwlError::Format(format!("unsupported dtype descr '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum NpyData {
    F32(Vec<f32>),
    F64(Vec<f64>),
    I64(Vec<i64>),
}

impl NpyData {
    fn dtype(&self) -> Dtype {
        match self {
            NpyData::F32(_) => Dtype::F4,
            NpyData::F64(_) => Dtype::F8,
            NpyData::I64(_) => Dtype::I8,
        }
    }

    fn len(&self) -> usize {
        match self {
            NpyData::F32(v) => v.len(),
            NpyData::F64(v) => v.len(),
            NpyData::I64(v) => v.len(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NpyArray {
    pub shape: Vec<usize>,
    pub data: NpyData,
}

#[derive(Debug, PartialEq)]
struct Header {
    dtype: Dtype,
    fortran_order: bool,
    shape: Vec<usize>,
}

fn header_text(dtype: Dtype, shape: &[usize]) -> String {
    let shape_str = match shape.len() {
        1 => format!("({},)", shape[0]),
        _ => format!(
            "({})",
            shape.iter().map(|s| s.to_string()).collect::<Vec<_>>().join(", ")
        ),
    };
    let mut h = format!(
        "{{'descr': '{}', 'fortran_order': False, 'shape': {}, }}",
        dtype.descr(),
        shape_str
    );
    // magic(6) + version(2) + len(2) + header + '\n' must be a multiple of 64
    let total = 10 + h.len() + 1;
    let pad = (64 - total % 64) % 64;
    h.extend(std::iter::repeat_n(' ', pad));
    h.push('\n');
    h
}

/// Writes an array to any writer.
pub fn write_to<W: Write>(w: &mut W, array: &NpyArray) -> std::io::Result<()> {
    let header = header_text(array.data.dtype(), &array.shape);
    w.write_all(MAGIC)?;
    w.write_all(&[1, 0])?;
    w.write_all(&(header.len() as u16).to_le_bytes())?;
    w.write_all(header.as_bytes())?;
    match &array.data {
        NpyData::F32(v) => v.iter().try_for_each(|x| w.write_all(&x.to_le_bytes())),
        NpyData::F64(v) => v.iter().try_for_each(|x| w.write_all(&x.to_le_bytes())),
        NpyData::I64(v) => v.iter().try_for_each(|x| w.write_all(&x.to_le_bytes())),
    }
}

pub fn write(path: &Path, array: &NpyArray) -> Result<()> {
    let expected: usize = array.shape.iter().product();
    if expected != array.data.len() {
        return Err(OwlError::Shape(format!(
            "shape {:?} does not match {} values",
            array.shape,
            array.data.len()
        )));
    }
    let file = File::create(path).map_err(|e| OwlError::io(path, e))?;
    let mut w = BufWriter::new(file);
    write_to(&mut w, array).map_err(|e| OwlError::io(path, e))?;
    w.flush().map_err(|e| OwlError::io(path, e))
}

/// Parses an array from an in-memory byte buffer.
pub fn parse(bytes: &[u8]) -> Result<NpyArray> {
    if bytes.len() < 10 || &bytes[..6] != MAGIC {
        return Err(OwlError::Format("missing NPY magic".into()));
    }
    if bytes[6] != 1 || bytes[7] != 0 {
        return Err(OwlError::Format(format!(
            "unsupported NPY version {}.{}",
            bytes[6], bytes[7]
        )));
    }
    let hlen = u16::from_le_bytes([bytes[8], bytes[9]]) as usize;
    let body = bytes
        .get(10..10 + hlen)
        .ok_or_else(|| OwlError::Format("truncated NPY header".into()))?;
    let text = std::str::from_utf8(body)
        .map_err(|_| OwlError::Format("NPY header is not ASCII".into()))?;
    let header = parse_header(text)?;
    if header.fortran_order {
        return Err(OwlError::Format("Fortran-order arrays are not supported".into()));
    }
    let payload = &bytes[10 + hlen..];
    let count = header
        .shape
        .iter()
        .try_fold(1usize, |acc, &s| acc.checked_mul(s))
        .ok_or_else(|| OwlError::Format("shape product overflows".into()))?;
    let size = header.dtype.size();
    if count.checked_mul(size) != Some(payload.len()) {
        return Err(OwlError::Format(format!(
            "declared shape {:?} needs {} bytes of {:?} but payload has {}",
            header.shape,
            count.saturating_mul(size),
            header.dtype,
            payload.len()
        )));
    }
    let chunks = payload.chunks_exact(size);
    let data = match header.dtype {
        Dtype::F4 => NpyData::F32(chunks.map(|c| f32::from_le_bytes(c.try_into().unwrap())).collect()),
        Dtype::F8 => NpyData::F64(chunks.map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect()),
        Dtype::I8 => NpyData::I64(chunks.map(|c| i64::from_le_bytes(c.try_into().unwrap())).collect()),
    };
    Ok(NpyArray {
        shape: header.shape,
        data,
    })
}

pub fn read(path: &Path) -> Result<NpyArray> {
    let file = File::open(path).map_err(|e| OwlError::io(path, e))?;
    let mut bytes = Vec::new();
    BufReader::new(file)
        .read_to_end(&mut bytes)
        .map_err(|e| OwlError::io(path, e))?;
    parse(&bytes).map_err(|e| match e {
        OwlError::Format(m) => OwlError::Format(format!("{}: {m}", path.display())),
        other => other,
    })
}

// Minimal reader for the Python dict literal numpy emits.
fn parse_header(text: &str) -> Result<Header> {
    let bad = |what: &str| OwlError::Format(format!("malformed NPY header ({what}): {text:?}"));
    let t = text.trim_end_matches(['\n', ' ']).trim();
    let inner = t
        .strip_prefix('{')
        .and_then(|s| s.strip_suffix('}'))
        .ok_or_else(|| bad("not a dict"))?;

    let mut descr = None;
    let mut fortran = None;
    let mut shape = None;
    let mut rest = inner.trim();
    while !rest.is_empty() {
        let (key, after) = take_quoted(rest).ok_or_else(|| bad("key"))?;
        let after = after.trim_start().strip_prefix(':').ok_or_else(|| bad("colon"))?;
        let after = after.trim_start();
        let remaining = match key {
            "descr" => {
                let (v, r) = take_quoted(after).ok_or_else(|| bad("descr"))?;
                descr = Some(v.to_string());
                r
            }
            "fortran_order" => {
                if let Some(r) = after.strip_prefix("False") {
                    fortran = Some(false);
                    r
                } else if let Some(r) = after.strip_prefix("True") {
                    fortran = Some(true);
                    r
                } else {
                    return Err(bad("fortran_order"));
                }
            }
            "shape" => {
                let body = after.strip_prefix('(').ok_or_else(|| bad("shape"))?;
                let close = body.find(')').ok_or_else(|| bad("shape"))?;
                let dims = body[..close]
                    .split(',')
                    .map(str::trim)
                    .filter(|s| !s.is_empty())
                    .map(|s| s.trim_end_matches('L').parse::<usize>())
                    .collect::<std::result::Result<Vec<_>, _>>()
                    .map_err(|_| bad("shape entry"))?;
                shape = Some(dims);
                &body[close + 1..]
            }
            _ => return Err(bad("unknown key")),
        };
        rest = remaining.trim_start();
        rest = rest.strip_prefix(',').unwrap_or(rest).trim_start();
    }
    Ok(Header {
        dtype: Dtype::parse(&descr.ok_or_else(|| bad("missing descr"))?)?,
        fortran_order: fortran.ok_or_else(|| bad("missing fortran_order"))?,
        shape: shape.ok_or_else(|| bad("missing shape"))?,
    })
}

fn take_quoted(s: &str) -> Option<(&str, &str)> {
    let q = s.chars().next().filter(|c| *c == '\'' || *c == '"')?;
    let body = &s[1..];
    let end = body.find(q)?;
    Some((&body[..end], &body[end + 1..]))
}

pub fn write_f32_matrix(path: &Path, m: &Array2<f32>) -> Result<()> {
    let data: Vec<f32> = m.iter().copied().collect();
    write(
        path,
        &NpyArray {
            shape: vec![m.nrows(), m.ncols()],
            data: NpyData::F32(data),
        },
    )
}

pub fn read_f32_matrix(path: &Path) -> Result<Array2<f32>> {
    let arr = read(path)?;
    let (rows, cols) = match arr.shape.as_slice() {
        [r, c] => (*r, *c),
        s => {
            return Err(OwlError::Format(format!(
                "{}: expected a 2-D array, got shape {s:?}",
                path.display()
            )))
        }
    };
    match arr.data {
        NpyData::F32(v) => Ok(Array2::from_shape_vec((rows, cols), v).expect("shape checked")),
        _ => Err(OwlError::Format(format!("{}: expected dtype <f4", path.display()))),
    }
}

pub fn write_i64_vector(path: &Path, v: &[i64]) -> Result<()> {
    write(
        path,
        &NpyArray {
            shape: vec![v.len()],
            data: NpyData::I64(v.to_vec()),
        },
    )
}

pub fn read_i64_vector(path: &Path) -> Result<Vec<i64>> {
    let arr = read(path)?;
    if arr.shape.len() != 1 {
        return Err(OwlError::Format(format!(
            "{}: expected a 1-D array, got shape {:?}",
            path.display(),
            arr.shape
        )));
    }
    match arr.data {
        NpyData::I64(v) => Ok(v),
        _ => Err(OwlError::Format(format!("{}: expected dtype <i8", path.display()))),
    }
}

pub fn write_f64_vector(path: &Path, v: &[f64]) -> Result<()> {
    write(
        path,
        &NpyArray {
            shape: vec![v.len()],
            data: NpyData::F64(v.to_vec()),
        },
    )
}

pub fn read_f64_vector(path: &Path) -> Result<Vec<f64>> {
    let arr = read(path)?;
    if arr.shape.len() != 1 {
        return Err(OwlError::Format(format!(
            "{}: expected a 1-D array, got shape {:?}",
            path.display(),
            arr.shape
        )));
    }
    match arr.data {
        NpyData::F64(v) => Ok(v),
        _ => Err(OwlError::Format(format!("{}: expected dtype <f8", path.display()))),
    }
}
