//! Directory container: a UTF-8 `manifest` plus one little-endian
//! `tensors.bin` payload holding row-major tensors in manifest order.
//!
//! ```text
//! flowtrack-container 1
//! endian little
//! kind sample
//! meta name static-scene
//! tensor rgb u8 40x3x64x96 0 737280
//! tensor depth f32 40x64x96 737280 983040
//! ```
//!
//! Offsets are contiguous: each tensor starts where the previous one ended.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use ndarray::{ArrayD, IxDyn};

use crate::error::{Error, Result};

pub const MANIFEST_FILE: &str = "manifest";
pub const PAYLOAD_FILE: &str = "tensors.bin";
const MAGIC: &str = "flowtrack-container 1";

#[derive(Debug, Clone, PartialEq)]
pub enum TensorData {
    F32(ArrayD<f32>),
    F64(ArrayD<f64>),
    U8(ArrayD<u8>),
}

impl TensorData {
    pub fn dtype(&self) -> &'static str {
        match self {
            TensorData::F32(_) => "f32",
            TensorData::F64(_) => "f64",
            TensorData::U8(_) => "u8",
        }
    }

    pub fn shape(&self) -> &[usize] {
        match self {
            TensorData::F32(a) => a.shape(),
            TensorData::F64(a) => a.shape(),
            TensorData::U8(a) => a.shape(),
        }
    }

    fn elem_size(dtype: &str) -> Option<usize> {
        match dtype {
            "f32" => Some(4),
            "f64" => Some(8),
            "u8" => Some(1),
            _ => None,
        }
    }

    fn byte_len(&self) -> usize {
        self.shape().iter().product::<usize>() * Self::elem_size(self.dtype()).unwrap()
    }

    fn write_le(&self, out: &mut Vec<u8>) {
        // `iter()` walks logical row-major order regardless of memory layout.
        match self {
            TensorData::F32(a) => a.iter().for_each(|v| out.extend_from_slice(&v.to_le_bytes())),
            TensorData::F64(a) => a.iter().for_each(|v| out.extend_from_slice(&v.to_le_bytes())),
            TensorData::U8(a) => out.extend(a.iter().copied()),
        }
    }

    fn read_le(dtype: &str, shape: &[usize], bytes: &[u8]) -> Result<Self> {
        let dim = IxDyn(shape);
        let bad = |e: ndarray::ShapeError| Error::CorruptManifest(e.to_string());
        Ok(match dtype {
            "f32" => {
                let v = bytes
                    .chunks_exact(4)
                    .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
                    .collect();
                TensorData::F32(ArrayD::from_shape_vec(dim, v).map_err(bad)?)
            }
            "f64" => {
                let v = bytes
                    .chunks_exact(8)
                    .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
                    .collect();
                TensorData::F64(ArrayD::from_shape_vec(dim, v).map_err(bad)?)
            }
            "u8" => TensorData::U8(ArrayD::from_shape_vec(dim, bytes.to_vec()).map_err(bad)?),
            other => return Err(Error::CorruptManifest(format!("unknown dtype `{other}`"))),
        })
    }
}

/// An ordered set of named tensors plus string metadata.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Container {
    pub kind: String,
    pub meta: BTreeMap<String, String>,
    tensors: Vec<(String, TensorData)>,
}

impl Container {
    pub fn new(kind: impl Into<String>) -> Self {
        Self {
            kind: kind.into(),
            ..Default::default()
        }
    }

    pub fn push(&mut self, name: impl Into<String>, data: TensorData) {
        let name = name.into();
        assert!(
            !name.contains(char::is_whitespace),
            "tensor names cannot contain whitespace"
        );
        self.tensors.retain(|(n, _)| *n != name);
        self.tensors.push((name, data));
    }

    pub fn push_f32(&mut self, name: impl Into<String>, a: ArrayD<f32>) {
        self.push(name, TensorData::F32(a));
    }

    pub fn push_f64(&mut self, name: impl Into<String>, a: ArrayD<f64>) {
        self.push(name, TensorData::F64(a));
    }

    pub fn push_u8(&mut self, name: impl Into<String>, a: ArrayD<u8>) {
        self.push(name, TensorData::U8(a));
    }

    pub fn tensors(&self) -> impl Iterator<Item = (&str, &TensorData)> {
        self.tensors.iter().map(|(n, t)| (n.as_str(), t))
    }

    pub fn into_tensors(self) -> Vec<(String, TensorData)> {
        self.tensors
    }

    pub fn get(&self, name: &str) -> Option<&TensorData> {
        self.tensors.iter().find(|(n, _)| n == name).map(|(_, t)| t)
    }

    fn require(&self, name: &str) -> Result<&TensorData> {
        self.get(name)
            .ok_or_else(|| Error::CorruptManifest(format!("missing tensor `{name}`")))
    }

    pub fn f32(&self, name: &str) -> Result<&ArrayD<f32>> {
        match self.require(name)? {
            TensorData::F32(a) => Ok(a),
            t => Err(Error::CorruptManifest(format!("`{name}` is {}, expected f32", t.dtype()))),
        }
    }

    pub fn f64(&self, name: &str) -> Result<&ArrayD<f64>> {
        match self.require(name)? {
            TensorData::F64(a) => Ok(a),
            t => Err(Error::CorruptManifest(format!("`{name}` is {}, expected f64", t.dtype()))),
        }
    }

    pub fn u8(&self, name: &str) -> Result<&ArrayD<u8>> {
        match self.require(name)? {
            TensorData::U8(a) => Ok(a),
            t => Err(Error::CorruptManifest(format!("`{name}` is {}, expected u8", t.dtype()))),
        }
    }

    pub fn manifest_text(&self) -> String {
        let mut s = String::new();
        writeln!(s, "{MAGIC}").unwrap();
        writeln!(s, "endian little").unwrap();
        writeln!(s, "kind {}", self.kind).unwrap();
        for (k, v) in &self.meta {
            writeln!(s, "meta {k} {v}").unwrap();
        }
        let mut offset = 0usize;
        for (name, t) in &self.tensors {
            let shape = if t.shape().is_empty() {
                "scalar".to_string()
            } else {
                t.shape().iter().map(|d| d.to_string()).collect::<Vec<_>>().join("x")
            };
            let len = t.byte_len();
            writeln!(s, "tensor {name} {} {shape} {offset} {len}", t.dtype()).unwrap();
            offset += len;
        }
        s
    }

    pub fn payload(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.tensors.iter().map(|(_, t)| t.byte_len()).sum());
        for (_, t) in &self.tensors {
            t.write_le(&mut out);
        }
        out
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        fs::write(dir.join(PAYLOAD_FILE), self.payload())?;
        fs::write(dir.join(MANIFEST_FILE), self.manifest_text())?;
        Ok(())
    }

    pub fn read(dir: &Path) -> Result<Self> {
        let manifest = fs::read_to_string(dir.join(MANIFEST_FILE))?;
        let payload = fs::read(dir.join(PAYLOAD_FILE))?;
        Self::parse(&manifest, &payload)
    }

    pub fn parse(manifest: &str, payload: &[u8]) -> Result<Self> {
        let corrupt = |line: usize, msg: &str| Error::CorruptManifest(format!("line {line}: {msg}"));
        let mut lines = manifest.lines().enumerate().map(|(i, l)| (i + 1, l));
        match lines.next() {
            Some((_, l)) if l == MAGIC => {}
            _ => return Err(corrupt(1, "missing container header")),
        }
        match lines.next() {
            Some((_, "endian little")) => {}
            _ => return Err(corrupt(2, "expected `endian little`")),
        }
        let kind = match lines.next() {
            Some((_, l)) => l
                .strip_prefix("kind ")
                .ok_or_else(|| corrupt(3, "expected `kind <name>`"))?
                .to_string(),
            None => return Err(corrupt(3, "truncated manifest")),
        };
        let mut c = Container::new(kind);
        let mut expected_offset = 0usize;
        for (ln, line) in lines {
            if line.is_empty() {
                continue;
            }
            if let Some(rest) = line.strip_prefix("meta ") {
                let (k, v) = rest.split_once(' ').unwrap_or((rest, ""));
                c.meta.insert(k.to_string(), v.to_string());
                continue;
            }
            let fields: Vec<&str> = line.split(' ').collect();
            let ["tensor", name, dtype, shape, offset, len] = fields[..] else {
                return Err(corrupt(ln, "malformed entry"));
            };
            let elem = TensorData::elem_size(dtype).ok_or_else(|| corrupt(ln, "unknown dtype"))?;
            let shape: Vec<usize> = if shape == "scalar" {
                vec![]
            } else {
                shape
                    .split('x')
                    .map(|d| d.parse::<usize>())
                    .collect::<Result<_, _>>()
                    .map_err(|_| corrupt(ln, "bad shape"))?
            };
            let offset: usize = offset.parse().map_err(|_| corrupt(ln, "bad offset"))?;
            let len: usize = len.parse().map_err(|_| corrupt(ln, "bad length"))?;
            let count = shape
                .iter()
                .try_fold(1usize, |acc, d| acc.checked_mul(*d))
                .ok_or_else(|| corrupt(ln, "shape overflows"))?;
            if count.checked_mul(elem) != Some(len) {
                return Err(corrupt(ln, "shape disagrees with byte length"));
            }
            if offset != expected_offset {
                return Err(corrupt(ln, "non-contiguous offset"));
            }
            let end = offset
                .checked_add(len)
                .filter(|e| *e <= payload.len())
                .ok_or_else(|| corrupt(ln, "payload truncated"))?;
            let data = TensorData::read_le(dtype, &shape, &payload[offset..end])?;
            c.tensors.push((name.to_string(), data));
            expected_offset = end;
        }
        if expected_offset != payload.len() {
            return Err(Error::CorruptManifest(format!(
                "payload has {} trailing bytes",
                payload.len() - expected_offset
            )));
        }
        Ok(c)
    }
}
