//! NPY version 1.0 arrays: little-endian `f4`/`f8`, C order.
//!
//! Layout: the magic string `\x93NUMPY`, two version bytes, a little-endian
//! `u16` header length, an ASCII Python dict literal padded with spaces and
//! terminated by `\n` so the payload starts on a 64-byte boundary, then the
//! raw values.

use std::path::Path;

use crate::error::{Error, Result};
use crate::io::FormatError;
use crate::tensor::{DenseMatrix, FeatureTensor};

const MAGIC: &[u8; 6] = b"\x93NUMPY";
const PREAMBLE: usize = 10;
const ALIGN: usize = 64;

/// An array read from an NPY file, by dimensionality.
#[derive(Clone, Debug, PartialEq)]
pub enum ArrayValue {
    Vector(Vec<f64>),
    Matrix(DenseMatrix),
    Tensor(FeatureTensor),
}

impl ArrayValue {
    pub fn shape(&self) -> Vec<usize> {
        match self {
            ArrayValue::Vector(v) => vec![v.len()],
            ArrayValue::Matrix(m) => vec![m.rows(), m.cols()],
            ArrayValue::Tensor(t) => t.shape().to_vec(),
        }
    }

    fn values(&self) -> &[f64] {
        match self {
            ArrayValue::Vector(v) => v,
            ArrayValue::Matrix(m) => m.data(),
            ArrayValue::Tensor(t) => t.data(),
        }
    }
}

impl From<FeatureTensor> for ArrayValue {
    fn from(t: FeatureTensor) -> Self {
        ArrayValue::Tensor(t)
    }
}

impl From<DenseMatrix> for ArrayValue {
    fn from(m: DenseMatrix) -> Self {
        ArrayValue::Matrix(m)
    }
}

impl From<Vec<f64>> for ArrayValue {
    fn from(v: Vec<f64>) -> Self {
        ArrayValue::Vector(v)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
enum Dtype {
    F4,
    F8,
}

impl Dtype {
    fn size(self) -> usize {
        match self {
            Dtype::F4 => 4,
            Dtype::F8 => 8,
        }
    }
}

fn malformed(offset: usize, reason: impl Into<String>) -> FormatError {
    FormatError::MalformedHeader {
        offset,
        reason: reason.into(),
    }
}

/// Minimal parser for the header dict literal.
struct HeaderParser<'a> {
    text: &'a [u8],
    pos: usize,
}

enum HeaderValue {
    Str(String),
    Bool(bool),
    Tuple(Vec<usize>),
}

impl<'a> HeaderParser<'a> {
    fn offset(&self) -> usize {
        PREAMBLE + self.pos
    }

    fn skip_ws(&mut self) {
        while self.pos < self.text.len() && self.text[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn peek(&self) -> Option<u8> {
        self.text.get(self.pos).copied()
    }

    fn expect(&mut self, byte: u8) -> Result<(), FormatError> {
        self.skip_ws();
        if self.peek() == Some(byte) {
            self.pos += 1;
            Ok(())
        } else {
            Err(malformed(self.offset(), format!("expected '{}'", byte as char)))
        }
    }

    fn string(&mut self) -> Result<String, FormatError> {
        self.skip_ws();
        let quote = match self.peek() {
            Some(q @ (b'\'' | b'"')) => q,
            _ => return Err(malformed(self.offset(), "expected a quoted string")),
        };
        self.pos += 1;
        let start = self.pos;
        while self.pos < self.text.len() && self.text[self.pos] != quote {
            self.pos += 1;
        }
        if self.pos == self.text.len() {
            return Err(malformed(self.offset(), "unterminated string"));
        }
        let s = String::from_utf8_lossy(&self.text[start..self.pos]).into_owned();
        self.pos += 1;
        Ok(s)
    }

    fn value(&mut self) -> Result<HeaderValue, FormatError> {
        self.skip_ws();
        match self.peek() {
            Some(b'\'' | b'"') => Ok(HeaderValue::Str(self.string()?)),
            Some(b'T') if self.text[self.pos..].starts_with(b"True") => {
                self.pos += 4;
                Ok(HeaderValue::Bool(true))
            }
            Some(b'F') if self.text[self.pos..].starts_with(b"False") => {
                self.pos += 5;
                Ok(HeaderValue::Bool(false))
            }
            Some(b'(') => {
                self.pos += 1;
                let mut dims = Vec::new();
                loop {
                    self.skip_ws();
                    match self.peek() {
                        Some(b')') => {
                            self.pos += 1;
                            break;
                        }
                        Some(b',') if !dims.is_empty() => self.pos += 1,
                        Some(c) if c.is_ascii_digit() => {
                            let start = self.pos;
                            while self.peek().is_some_and(|c| c.is_ascii_digit()) {
                                self.pos += 1;
                            }
                            let text = std::str::from_utf8(&self.text[start..self.pos]).unwrap_or("");
                            let dim = text
                                .parse()
                                .map_err(|_| malformed(PREAMBLE + start, "dimension overflow"))?;
                            dims.push(dim);
                        }
                        _ => return Err(malformed(self.offset(), "bad shape tuple")),
                    }
                }
                Ok(HeaderValue::Tuple(dims))
            }
            _ => Err(malformed(self.offset(), "unexpected value")),
        }
    }
}

struct Header {
    dtype: Dtype,
    shape: Vec<usize>,
    data_offset: usize,
}

fn parse_header(bytes: &[u8]) -> Result<Header, FormatError> {
    if bytes.len() < MAGIC.len() || &bytes[..MAGIC.len()] != MAGIC {
        return Err(FormatError::BadMagic);
    }
    if bytes.len() < PREAMBLE {
        return Err(FormatError::Truncated {
            expected: PREAMBLE,
            actual: bytes.len(),
        });
    }
    let (major, minor) = (bytes[6], bytes[7]);
    if (major, minor) != (1, 0) {
        return Err(FormatError::UnsupportedVersion { major, minor });
    }
    let header_len = u16::from_le_bytes([bytes[8], bytes[9]]) as usize;
    let data_offset = PREAMBLE + header_len;
    if bytes.len() < data_offset {
        return Err(FormatError::Truncated {
            expected: data_offset,
            actual: bytes.len(),
        });
    }

    let mut p = HeaderParser {
        text: &bytes[PREAMBLE..data_offset],
        pos: 0,
    };
    p.expect(b'{')?;
    let (mut descr, mut fortran, mut shape) = (None, None, None);
    loop {
        p.skip_ws();
        if p.peek() == Some(b'}') {
            break;
        }
        let key_offset = p.offset();
        let key = p.string()?;
        p.expect(b':')?;
        let value = p.value()?;
        match (key.as_str(), value) {
            ("descr", HeaderValue::Str(s)) => descr = Some(s),
            ("fortran_order", HeaderValue::Bool(b)) => fortran = Some(b),
            ("shape", HeaderValue::Tuple(t)) => shape = Some(t),
            (k @ ("descr" | "fortran_order" | "shape"), _) => {
                return Err(malformed(key_offset, format!("wrong type for field {k:?}")))
            }
            (other, _) => return Err(malformed(key_offset, format!("unknown field {other:?}"))),
        }
        p.skip_ws();
        match p.peek() {
            Some(b',') => p.pos += 1,
            Some(b'}') => {}
            _ => return Err(malformed(p.offset(), "expected ',' or '}'")),
        }
    }

    let descr = descr.ok_or_else(|| malformed(PREAMBLE, "missing field \"descr\""))?;
    let fortran = fortran.ok_or_else(|| malformed(PREAMBLE, "missing field \"fortran_order\""))?;
    let shape = shape.ok_or_else(|| malformed(PREAMBLE, "missing field \"shape\""))?;
    let dtype = match descr.as_str() {
        "<f4" => Dtype::F4,
        "<f8" => Dtype::F8,
        _ => return Err(FormatError::UnsupportedDtype(descr)),
    };
    if fortran {
        return Err(FormatError::UnsupportedOrder);
    }
    if shape.is_empty() || shape.len() > 3 || shape.contains(&0) {
        return Err(FormatError::UnsupportedShape(shape));
    }
    Ok(Header {
        dtype,
        shape,
        data_offset,
    })
}

/// Decodes an in-memory NPY file.
pub fn decode_npy(bytes: &[u8]) -> Result<ArrayValue, FormatError> {
    let header = parse_header(bytes)?;
    let count = header
        .shape
        .iter()
        .try_fold(1usize, |acc, &d| acc.checked_mul(d))
        .ok_or_else(|| FormatError::UnsupportedShape(header.shape.clone()))?;
    let size = header.dtype.size();
    let expected = count
        .checked_mul(size)
        .and_then(|n| n.checked_add(header.data_offset))
        .ok_or_else(|| FormatError::UnsupportedShape(header.shape.clone()))?;
    if bytes.len() < expected {
        return Err(FormatError::Truncated {
            expected,
            actual: bytes.len(),
        });
    }
    let payload = &bytes[header.data_offset..expected];
    let values: Vec<f64> = match header.dtype {
        Dtype::F4 => payload
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
            .collect(),
        Dtype::F8 => payload
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
            .collect(),
    };
    if let Some(i) = values.iter().position(|v| !v.is_finite()) {
        return Err(FormatError::InvalidValue(format!(
            "non-finite value at element {i}"
        )));
    }
    let invalid = |e: Error| FormatError::InvalidValue(e.to_string());
    Ok(match header.shape.as_slice() {
        [_] => ArrayValue::Vector(values),
        &[r, c] => ArrayValue::Matrix(DenseMatrix::new(r, c, values).map_err(invalid)?),
        &[c, h, w] => ArrayValue::Tensor(FeatureTensor::new([c, h, w], values).map_err(invalid)?),
        _ => unreachable!("shape rank checked in parse_header"),
    })
}

/// Encodes an array as NPY 1.0, `<f8`, C order.
pub fn encode_npy(value: &ArrayValue) -> Result<Vec<u8>, FormatError> {
    let shape = value.shape();
    if shape.contains(&0) {
        return Err(FormatError::UnsupportedShape(shape));
    }
    let values = value.values();
    if let Some(i) = values.iter().position(|v| !v.is_finite()) {
        return Err(FormatError::InvalidValue(format!(
            "non-finite value at element {i}"
        )));
    }
    let shape_text = match shape.as_slice() {
        [n] => format!("({n},)"),
        dims => format!(
            "({})",
            dims.iter().map(|d| d.to_string()).collect::<Vec<_>>().join(", ")
        ),
    };
    let mut dict = format!("{{'descr': '<f8', 'fortran_order': False, 'shape': {shape_text}, }}");
    let unpadded = PREAMBLE + dict.len() + 1;
    let padding = (ALIGN - unpadded % ALIGN) % ALIGN;
    dict.extend(std::iter::repeat_n(' ', padding));
    dict.push('\n');

    let mut out = Vec::with_capacity(PREAMBLE + dict.len() + values.len() * 8);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&[1, 0]);
    out.extend_from_slice(&(dict.len() as u16).to_le_bytes());
    out.extend_from_slice(dict.as_bytes());
    for v in values {
        out.extend_from_slice(&v.to_le_bytes());
    }
    Ok(out)
}

pub fn read_array(path: impl AsRef<Path>) -> Result<ArrayValue> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|source| Error::Io {
        path: path.to_owned(),
        source,
    })?;
    decode_npy(&bytes).map_err(|source| Error::Format {
        path: path.to_owned(),
        source,
    })
}

pub fn write_array(value: &ArrayValue, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let bytes = encode_npy(value).map_err(|source| Error::Format {
        path: path.to_owned(),
        source,
    })?;
    std::fs::write(path, bytes).map_err(|source| Error::Io {
        path: path.to_owned(),
        source,
    })
}

fn wrong_rank(path: &Path, want: &str, got: &ArrayValue) -> Error {
    Error::Format {
        path: path.to_owned(),
        source: FormatError::InvalidValue(format!("expected a {want}, found shape {:?}", got.shape())),
    }
}

/// Reads a 3-D array.
pub fn read_tensor(path: impl AsRef<Path>) -> Result<FeatureTensor> {
    match read_array(path.as_ref())? {
        ArrayValue::Tensor(t) => Ok(t),
        other => Err(wrong_rank(path.as_ref(), "3-D tensor", &other)),
    }
}

/// Reads a 2-D array.
pub fn read_matrix(path: impl AsRef<Path>) -> Result<DenseMatrix> {
    match read_array(path.as_ref())? {
        ArrayValue::Matrix(m) => Ok(m),
        other => Err(wrong_rank(path.as_ref(), "2-D matrix", &other)),
    }
}

/// Reads a 1-D array; any other rank is flattened.
pub fn read_vector(path: impl AsRef<Path>) -> Result<Vec<f64>> {
    Ok(match read_array(path)? {
        ArrayValue::Vector(v) => v,
        ArrayValue::Matrix(m) => m.into_data(),
        ArrayValue::Tensor(t) => t.into_data(),
    })
}
