use std::collections::HashSet;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use num_complex::{Complex32, Complex64};

use crate::error::{Error, FormatError, Result};

pub const MAGIC: &[u8] = b"TDDR1\n";

#[derive(Clone, Debug, PartialEq)]
pub enum ArrayData {
    F32(Vec<f32>),
    F64(Vec<f64>),
    C64(Vec<Complex32>),
    C128(Vec<Complex64>),
    U8(Vec<u8>),
}

impl ArrayData {
    pub fn dtype(&self) -> &'static str {
        match self {
            ArrayData::F32(_) => "f32",
            ArrayData::F64(_) => "f64",
            ArrayData::C64(_) => "c64",
            ArrayData::C128(_) => "c128",
            ArrayData::U8(_) => "u8",
        }
    }

    pub fn len(&self) -> usize {
        match self {
            ArrayData::F32(v) => v.len(),
            ArrayData::F64(v) => v.len(),
            ArrayData::C64(v) => v.len(),
            ArrayData::C128(v) => v.len(),
            ArrayData::U8(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn element_bytes(dtype: &str) -> Option<usize> {
        Some(match dtype {
            "f32" => 4,
            "f64" => 8,
            "c64" => 8,
            "c128" => 16,
            "u8" => 1,
            _ => return None,
        })
    }

    fn encode(&self, out: &mut Vec<u8>) {
        match self {
            ArrayData::F32(v) => v.iter().for_each(|x| out.extend_from_slice(&x.to_le_bytes())),
            ArrayData::F64(v) => v.iter().for_each(|x| out.extend_from_slice(&x.to_le_bytes())),
            ArrayData::C64(v) => v.iter().for_each(|x| {
                out.extend_from_slice(&x.re.to_le_bytes());
                out.extend_from_slice(&x.im.to_le_bytes());
            }),
            ArrayData::C128(v) => v.iter().for_each(|x| {
                out.extend_from_slice(&x.re.to_le_bytes());
                out.extend_from_slice(&x.im.to_le_bytes());
            }),
            ArrayData::U8(v) => out.extend_from_slice(v),
        }
    }

    fn decode(dtype: &str, bytes: &[u8]) -> Self {
        let f32s = |b: &[u8]| f32::from_le_bytes(b.try_into().expect("4 bytes"));
        let f64s = |b: &[u8]| f64::from_le_bytes(b.try_into().expect("8 bytes"));
        match dtype {
            "f32" => ArrayData::F32(bytes.chunks_exact(4).map(f32s).collect()),
            "f64" => ArrayData::F64(bytes.chunks_exact(8).map(f64s).collect()),
            "c64" => ArrayData::C64(
                bytes.chunks_exact(8).map(|b| Complex32::new(f32s(&b[..4]), f32s(&b[4..]))).collect(),
            ),
            "c128" => ArrayData::C128(
                bytes.chunks_exact(16).map(|b| Complex64::new(f64s(&b[..8]), f64s(&b[8..]))).collect(),
            ),
            _ => ArrayData::U8(bytes.to_vec()),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct NamedArray {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: ArrayData,
}

/// Named arrays plus ordered string metadata. Order is preserved through
/// a round trip.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Container {
    pub arrays: Vec<NamedArray>,
    pub meta: Vec<(String, String)>,
}

fn valid_token(s: &str) -> bool {
    !s.is_empty() && !s.contains(|c: char| c.is_whitespace() || c == ':' || c.is_control())
}

fn escape(value: &str) -> String {
    value.replace('\\', "\\\\").replace('\n', "\\n")
}

fn unescape(value: &str, line: usize) -> std::result::Result<String, FormatError> {
    let mut out = String::with_capacity(value.len());
    let mut chars = value.chars();
    while let Some(c) = chars.next() {
        if c != '\\' {
            out.push(c);
            continue;
        }
        match chars.next() {
            Some('\\') => out.push('\\'),
            Some('n') => out.push('\n'),
            other => {
                return Err(FormatError::BadHeader {
                    line,
                    reason: format!("bad escape `\\{}`", other.map(String::from).unwrap_or_default()),
                })
            }
        }
    }
    Ok(out)
}

impl Container {
    pub fn new() -> Self {
        Self::default()
    }

    /// Appends an array, rejecting duplicate names and shape/length mismatch.
    pub fn push(&mut self, name: &str, shape: &[usize], data: ArrayData) -> Result<&mut Self> {
        if !valid_token(name) {
            return Err(Error::invalid(format!("array name `{name}` must be a non-empty token")));
        }
        if self.arrays.iter().any(|a| a.name == name) {
            return Err(Error::invalid(format!("duplicate array name `{name}`")));
        }
        let expected: usize = shape.iter().product();
        if expected != data.len() {
            return Err(Error::shape(format!(
                "array `{name}`: shape {shape:?} implies {expected} elements, got {}",
                data.len()
            )));
        }
        self.arrays.push(NamedArray {
            name: name.to_string(),
            shape: shape.to_vec(),
            data,
        });
        Ok(self)
    }

    pub fn set_meta(&mut self, key: &str, value: impl ToString) -> Result<&mut Self> {
        if !valid_token(key) {
            return Err(Error::invalid(format!("metadata key `{key}` must be a non-empty token")));
        }
        let value = value.to_string();
        match self.meta.iter_mut().find(|(k, _)| k == key) {
            Some(slot) => slot.1 = value,
            None => self.meta.push((key.to_string(), value)),
        }
        Ok(self)
    }

    pub fn meta(&self, key: &str) -> std::result::Result<&str, FormatError> {
        self.meta
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
            .ok_or_else(|| FormatError::MissingMeta(key.to_string()))
    }

    pub fn meta_parse<T: FromStr>(&self, key: &str) -> std::result::Result<T, FormatError>
    where
        T::Err: std::fmt::Display,
    {
        self.meta(key)?.parse().map_err(|e: T::Err| FormatError::BadMeta {
            key: key.to_string(),
            reason: e.to_string(),
        })
    }

    pub fn get(&self, name: &str) -> std::result::Result<&NamedArray, FormatError> {
        self.arrays
            .iter()
            .find(|a| a.name == name)
            .ok_or_else(|| FormatError::MissingTensor(name.to_string()))
    }

    pub fn f64s(&self, name: &str) -> std::result::Result<(&[usize], &[f64]), FormatError> {
        let a = self.get(name)?;
        match &a.data {
            ArrayData::F64(v) => Ok((&a.shape, v)),
            other => Err(type_error(name, "f64", other)),
        }
    }

    pub fn c128s(&self, name: &str) -> std::result::Result<(&[usize], &[Complex64]), FormatError> {
        let a = self.get(name)?;
        match &a.data {
            ArrayData::C128(v) => Ok((&a.shape, v)),
            other => Err(type_error(name, "c128", other)),
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut header = String::from("endianness: little\n");
        for (k, v) in &self.meta {
            header.push_str(&format!("meta.{k}: {}\n", escape(v)));
        }
        for a in &self.arrays {
            let dims = if a.shape.is_empty() {
                "-".to_string()
            } else {
                a.shape.iter().map(|d| d.to_string()).collect::<Vec<_>>().join(",")
            };
            header.push_str(&format!("tensor: {} {} {dims}\n", a.name, a.data.dtype()));
        }
        header.push('\n');
        let mut out = MAGIC.to_vec();
        out.extend_from_slice(header.as_bytes());
        for a in &self.arrays {
            a.data.encode(&mut out);
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> std::result::Result<Self, FormatError> {
        let body = bytes.strip_prefix(MAGIC).ok_or(FormatError::BadMagic)?;
        let end = body
            .windows(2)
            .position(|w| w == b"\n\n")
            .map(|p| p + 2)
            .or_else(|| (body.first() == Some(&b'\n')).then_some(1))
            .ok_or(FormatError::BadHeader {
                line: 0,
                reason: "header is not terminated by a blank line".into(),
            })?;
        let header = std::str::from_utf8(&body[..end]).map_err(|e| FormatError::BadHeader {
            line: 0,
            reason: format!("header is not UTF-8: {e}"),
        })?;
        let payload = &body[end..];

        let mut container = Container::new();
        let mut specs: Vec<(String, &'static str, Vec<usize>)> = Vec::new();
        let mut names = HashSet::new();
        let mut endianness = false;
        for (i, line) in header.lines().enumerate().filter(|(_, l)| !l.is_empty()) {
            let line_no = i + 1;
            let bad = |reason: String| FormatError::BadHeader { line: line_no, reason };
            let (key, value) = line.split_once(": ").ok_or_else(|| bad("expected `key: value`".into()))?;
            if key == "endianness" {
                if value != "little" {
                    return Err(bad(format!("unsupported endianness `{value}`")));
                }
                endianness = true;
            } else if let Some(meta_key) = key.strip_prefix("meta.") {
                container.meta.push((meta_key.to_string(), unescape(value, line_no)?));
            } else if key == "tensor" {
                let parts: Vec<&str> = value.split(' ').collect();
                let [name, dtype, dims] = parts[..] else {
                    return Err(bad("expected `tensor: <name> <dtype> <dims>`".into()));
                };
                let dtype = ["f32", "f64", "c64", "c128", "u8"]
                    .into_iter()
                    .find(|d| *d == dtype)
                    .ok_or_else(|| bad(format!("unknown element type `{dtype}`")))?;
                let shape = if dims == "-" {
                    Vec::new()
                } else {
                    dims.split(',')
                        .map(|d| d.parse::<usize>())
                        .collect::<std::result::Result<Vec<_>, _>>()
                        .map_err(|e| bad(format!("bad dimensions `{dims}`: {e}")))?
                };
                if !names.insert(name.to_string()) {
                    return Err(FormatError::DuplicateName(name.to_string()));
                }
                specs.push((name.to_string(), dtype, shape));
            } else {
                return Err(bad(format!("unknown header key `{key}`")));
            }
        }
        if !endianness {
            return Err(FormatError::BadHeader {
                line: 0,
                reason: "missing endianness line".into(),
            });
        }
        let sizes: Vec<usize> = specs
            .iter()
            .map(|(_, dtype, shape)| shape.iter().product::<usize>() * ArrayData::element_bytes(dtype).expect("known"))
            .collect();
        let expected: usize = sizes.iter().sum();
        if expected != payload.len() {
            return Err(FormatError::PayloadLength {
                expected,
                found: payload.len(),
            });
        }
        let mut offset = 0;
        for ((name, dtype, shape), size) in specs.into_iter().zip(sizes) {
            let data = ArrayData::decode(dtype, &payload[offset..offset + size]);
            offset += size;
            container.arrays.push(NamedArray { name, shape, data });
        }
        Ok(container)
    }

    /// Writes to a temporary file beside `path`, then renames it into place.
    pub fn write(&self, path: &Path) -> Result<()> {
        write_atomic(path, &self.to_bytes())
    }

    pub fn read(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes).map_err(|kind| Error::format(path, kind))
    }
}

fn type_error(name: &str, expected: &'static str, found: &ArrayData) -> FormatError {
    FormatError::ElementType {
        name: name.to_string(),
        expected,
        found: found.dtype(),
    }
}

pub(crate) fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| Error::io(dir, e))?;
    tmp.write_all(bytes).map_err(|e| Error::io(tmp.path(), e))?;
    tmp.as_file().sync_all().map_err(|e| Error::io(tmp.path(), e))?;
    tmp.persist(path).map_err(|e| Error::io(path, e.error))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Container {
        let mut c = Container::new();
        c.push("frames", &[2, 2], ArrayData::C128(vec![
            Complex64::new(1.0, -2.0),
            Complex64::new(f64::MIN_POSITIVE, 3.5),
            Complex64::new(-0.0, 1e300),
            Complex64::new(0.1, 0.2),
        ]))
        .unwrap();
        c.push("loss", &[3], ArrayData::F64(vec![1.0, 0.5, 0.25])).unwrap();
        c.push("mask", &[2], ArrayData::U8(vec![0, 255])).unwrap();
        c.push("half", &[1], ArrayData::F32(vec![0.5])).unwrap();
        c.push("single", &[1], ArrayData::C64(vec![Complex32::new(1.5, -1.0)])).unwrap();
        c.push("scalar", &[], ArrayData::F64(vec![7.0])).unwrap();
        c.set_meta("config", "a = 1\n[b]\nc = \"x\\y\"").unwrap();
        c.set_meta("seed", 42).unwrap();
        c
    }

    #[test]
    fn round_trip() {
        let c = sample();
        let bytes = c.to_bytes();
        let back = Container::from_bytes(&bytes).unwrap();
        assert_eq!(back, c);
        assert_eq!(back.to_bytes(), bytes);
        assert_eq!(back.meta_parse::<u64>("seed").unwrap(), 42);
        let names: Vec<&str> = back.arrays.iter().map(|a| a.name.as_str()).collect();
        assert_eq!(names, ["frames", "loss", "mask", "half", "single", "scalar"]);
    }

    #[test]
    fn empty_container() {
        let bytes = Container::new().to_bytes();
        assert_eq!(bytes, b"TDDR1\nendianness: little\n\n");
        assert_eq!(Container::from_bytes(&bytes).unwrap(), Container::new());
    }

    #[test]
    fn layout_is_byte_exact() {
        let mut c = Container::new();
        c.push("x", &[1], ArrayData::F64(vec![1.0])).unwrap();
        let bytes = c.to_bytes();
        let head = b"TDDR1\nendianness: little\ntensor: x f64 1\n\n";
        assert_eq!(&bytes[..head.len()], head);
        assert_eq!(&bytes[head.len()..], &1.0f64.to_le_bytes());
    }

    #[test]
    fn distinct_diagnostics() {
        let bytes = sample().to_bytes();
        assert_eq!(Container::from_bytes(b"PNG\x00").unwrap_err(), FormatError::BadMagic);
        let cut = Container::from_bytes(&bytes[..bytes.len() - 3]).unwrap_err();
        assert!(matches!(cut, FormatError::PayloadLength { found, expected } if found + 3 == expected));
        let mut longer = bytes.clone();
        longer.push(0);
        assert!(matches!(Container::from_bytes(&longer).unwrap_err(), FormatError::PayloadLength { .. }));
        let dup = b"TDDR1\nendianness: little\ntensor: a u8 1\ntensor: a u8 1\n\n\x00\x00";
        assert_eq!(Container::from_bytes(dup).unwrap_err(), FormatError::DuplicateName("a".into()));
        let junk = b"TDDR1\nendianness: little\nwhat\n\n";
        assert!(matches!(Container::from_bytes(junk).unwrap_err(), FormatError::BadHeader { line: 2, .. }));
        let c = sample();
        assert!(matches!(c.c128s("loss").unwrap_err(), FormatError::ElementType { expected: "c128", found: "f64", .. }));
        assert_eq!(c.get("nope").unwrap_err(), FormatError::MissingTensor("nope".into()));
        assert!(matches!(c.meta_parse::<u64>("config").unwrap_err(), FormatError::BadMeta { .. }));
    }

    #[test]
    fn push_rules() {
        let mut c = Container::new();
        c.push("a", &[2], ArrayData::F64(vec![0.0; 2])).unwrap();
        assert!(c.push("a", &[2], ArrayData::F64(vec![0.0; 2])).is_err());
        assert!(c.push("b", &[3], ArrayData::F64(vec![0.0; 2])).is_err());
        assert!(c.push("has space", &[0], ArrayData::F64(vec![])).is_err());
    }

    #[test]
    fn files() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.tddr");
        let c = sample();
        c.write(&path).unwrap();
        assert_eq!(Container::read(&path).unwrap(), c);
        assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 1);
        let missing = dir.path().join("nope/run.tddr");
        assert!(matches!(c.write(&missing), Err(Error::Io { .. })));
        std::fs::write(&path, b"garbage").unwrap();
        assert!(matches!(Container::read(&path), Err(Error::Format { kind: FormatError::BadMagic, .. })));
    }
}
