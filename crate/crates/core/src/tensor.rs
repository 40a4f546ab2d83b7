//! Dense row-major tensors and the `.pcten` binary format.
//!
//! File layout: 8-byte magic `PCTEN01\0`, a little-endian `u32` header length,
//! a UTF-8 JSON header `{"shape":[..],"format":"f32"|"bf16"}`, then the
//! row-major little-endian payload (4 bytes per element for f32, 2 for bf16).

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::bf16::{from_bf16_bits, is_bf16_exact, to_bf16_bits};
use crate::error::{Error, Result};

pub const TENSOR_MAGIC: &[u8; 8] = b"PCTEN01\0";
const MAX_HEADER_LEN: u32 = 1 << 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ElemFormat {
    F32,
    Bf16,
}

impl ElemFormat {
    pub fn byte_width(self) -> usize {
        match self {
            ElemFormat::F32 => 4,
            ElemFormat::Bf16 => 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f32>,
    format: ElemFormat,
}

#[derive(Serialize, Deserialize)]
struct Header {
    shape: Vec<usize>,
    format: ElemFormat,
}

pub(crate) fn element_count(shape: &[usize]) -> Result<usize> {
    if shape.is_empty() {
        return Err(Error::shape("tensor shape must have at least one extent"));
    }
    shape.iter().try_fold(1usize, |acc, &d| {
        if d == 0 {
            return Err(Error::shape(format!("zero extent in shape {shape:?}")));
        }
        acc.checked_mul(d)
            .ok_or_else(|| Error::shape(format!("extent overflow in shape {shape:?}")))
    })
}

impl Tensor {
    /// An f32 tensor.
    pub fn new(shape: Vec<usize>, data: Vec<f32>) -> Result<Self> {
        Self::with_format(shape, data, ElemFormat::F32)
    }

    pub fn with_format(shape: Vec<usize>, data: Vec<f32>, format: ElemFormat) -> Result<Self> {
        let n = element_count(&shape)?;
        if n != data.len() {
            return Err(Error::shape(format!(
                "shape {shape:?} holds {n} elements but data has {}",
                data.len()
            )));
        }
        if format == ElemFormat::Bf16 {
            if let Some(pos) = data.iter().position(|&v| !is_bf16_exact(v)) {
                return Err(Error::Format(format!(
                    "element {pos} ({}) is not representable in bf16",
                    data[pos]
                )));
            }
        }
        Ok(Tensor { shape, data, format })
    }

    pub fn zeros(shape: Vec<usize>) -> Result<Self> {
        let n = element_count(&shape)?;
        Self::new(shape, vec![0.0; n])
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn format(&self) -> ElemFormat {
        self.format
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    /// Same values rounded onto the bf16 grid.
    pub fn to_bf16(&self) -> Tensor {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&v| crate::bf16::bf16_round(v)).collect(),
            format: ElemFormat::Bf16,
        }
    }

    pub fn reshape(self, shape: Vec<usize>) -> Result<Tensor> {
        Tensor::with_format(shape, self.data, self.format)
    }

    pub fn write_to<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        let header = serde_json::to_vec(&Header { shape: self.shape.clone(), format: self.format })
            .expect("header serialization");
        w.write_all(TENSOR_MAGIC)?;
        w.write_all(&(header.len() as u32).to_le_bytes())?;
        w.write_all(&header)?;
        let mut payload = Vec::with_capacity(self.data.len() * self.format.byte_width());
        match self.format {
            ElemFormat::F32 => self.data.iter().for_each(|v| payload.extend_from_slice(&v.to_le_bytes())),
            ElemFormat::Bf16 => self
                .data
                .iter()
                .for_each(|&v| payload.extend_from_slice(&to_bf16_bits(v).to_le_bytes())),
        }
        w.write_all(&payload)?;
        w.flush()
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut buf = Vec::new();
        self.write_to(&mut buf).expect("write to Vec");
        buf
    }

    pub fn read_from<R: Read>(mut r: R) -> Result<Tensor> {
        let fmt = |m: &str| Error::Format(m.to_string());
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic).map_err(|_| fmt("truncated magic"))?;
        if &magic != TENSOR_MAGIC {
            return Err(fmt("bad magic"));
        }
        let mut len = [0u8; 4];
        r.read_exact(&mut len).map_err(|_| fmt("truncated header length"))?;
        let len = u32::from_le_bytes(len);
        if len > MAX_HEADER_LEN {
            return Err(Error::Format(format!("header length {len} exceeds limit")));
        }
        let mut header = vec![0u8; len as usize];
        r.read_exact(&mut header).map_err(|_| fmt("truncated header"))?;
        let header: Header = serde_json::from_slice(&header)
            .map_err(|e| Error::Format(format!("header: {e}")))?;
        let count = element_count(&header.shape).map_err(|e| Error::Format(e.to_string()))?;
        let width = header.format.byte_width();
        let nbytes = count
            .checked_mul(width)
            .ok_or_else(|| fmt("payload size overflow"))?;
        let mut payload = Vec::new();
        r.by_ref()
            .take(nbytes as u64 + 1)
            .read_to_end(&mut payload)
            .map_err(|e| Error::Format(format!("payload: {e}")))?;
        if payload.len() < nbytes {
            return Err(Error::Format(format!(
                "truncated payload: expected {nbytes} bytes, found {}",
                payload.len()
            )));
        }
        if payload.len() > nbytes {
            return Err(fmt("trailing bytes after payload"));
        }
        let data: Vec<f32> = match header.format {
            ElemFormat::F32 => payload
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
                .collect(),
            ElemFormat::Bf16 => payload
                .chunks_exact(2)
                .map(|c| from_bf16_bits(u16::from_le_bytes([c[0], c[1]])))
                .collect(),
        };
        Tensor::with_format(header.shape, data, header.format)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_to(BufWriter::new(file)).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Tensor> {
        let path = path.as_ref();
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        Tensor::read_from(BufReader::new(file)).map_err(|e| match e {
            Error::Format(m) => Error::Format(format!("{}: {m}", path.display())),
            other => other,
        })
    }
}

/// Row-major 2-D f32 matrix. Columns of the right-hand operand of a GEMM are
/// the input vectors streamed through the array.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f32>,
}

impl Matrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f32>) -> Result<Self> {
        if rows.checked_mul(cols) != Some(data.len()) {
            return Err(Error::shape(format!(
                "{rows}x{cols} matrix needs {} elements, got {}",
                rows.saturating_mul(cols),
                data.len()
            )));
        }
        Ok(Matrix { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn from_fn(rows: usize, cols: usize, f: impl Fn(usize, usize) -> f32) -> Self {
        let data = (0..rows * cols).map(|k| f(k / cols, k % cols)).collect();
        Matrix { rows, cols, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f32 {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: f32) {
        self.data[r * self.cols + c] = v;
    }

    pub fn row(&self, r: usize) -> &[f32] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn transpose(&self) -> Matrix {
        Matrix::from_fn(self.cols, self.rows, |r, c| self.get(c, r))
    }

    /// Plain f32 product, inner index accumulated in ascending order.
    pub fn matmul(&self, rhs: &Matrix) -> Result<Matrix> {
        if self.cols != rhs.rows {
            return Err(Error::shape(format!(
                "cannot multiply {}x{} by {}x{}",
                self.rows, self.cols, rhs.rows, rhs.cols
            )));
        }
        let mut out = Matrix::zeros(self.rows, rhs.cols);
        for i in 0..self.rows {
            let a = self.row(i);
            let o = &mut out.data[i * rhs.cols..(i + 1) * rhs.cols];
            for (k, &av) in a.iter().enumerate() {
                if av == 0.0 {
                    continue;
                }
                for (ov, &bv) in o.iter_mut().zip(rhs.row(k)) {
                    *ov += av * bv;
                }
            }
        }
        Ok(out)
    }
}
