//! Little-endian byte cursor helpers shared by every container format.

use crate::error::{Error, Result};
use crate::tensor::{DType, Role, Tensor};

pub(crate) struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    pub fn new(buf: &'a [u8]) -> Self {
        Reader { buf, pos: 0 }
    }

    pub fn remaining(&self) -> usize {
        self.buf.len() - self.pos
    }

    pub fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.remaining() < n {
            return Err(Error::TruncatedFile { offset: self.pos, needed: n });
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    pub fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    pub fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    pub fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    pub fn usize32(&mut self) -> Result<usize> {
        Ok(self.u32()? as usize)
    }

    /// Raw bytes of `count` f32 values, bounds-checked before any allocation.
    pub fn f32_bytes(&mut self, count: usize) -> Result<&'a [u8]> {
        let n = count.checked_mul(4).ok_or_else(|| Error::Malformed(format!("element count {count} overflows")))?;
        self.take(n)
    }

    pub fn str16(&mut self) -> Result<&'a [u8]> {
        let n = self.u16()? as usize;
        self.take(n)
    }

    pub fn magic(&mut self, expected: &[u8; 4]) -> Result<()> {
        let found: [u8; 4] = self.take(4)?.try_into().unwrap();
        if &found != expected {
            return Err(Error::BadMagic { expected: *expected, found });
        }
        Ok(())
    }

    pub fn version(&mut self, supported: u16) -> Result<()> {
        let v = self.u16()?;
        if v != supported {
            return Err(Error::UnsupportedVersion(v));
        }
        Ok(())
    }

    /// Reads the trailing CRC-32 and checks it against everything before it.
    /// Nothing may follow the checksum.
    pub fn finish(mut self) -> Result<()> {
        let body_end = self.pos;
        let stored = self.u32()?;
        if self.remaining() != 0 {
            return Err(Error::TrailingBytes(self.remaining()));
        }
        let computed = crc32fast::hash(&self.buf[..body_end]);
        if stored != computed {
            return Err(Error::ChecksumMismatch { stored, computed });
        }
        Ok(())
    }
}

#[derive(Default)]
pub(crate) struct Writer {
    buf: Vec<u8>,
}

impl Writer {
    pub fn u8(&mut self, v: u8) {
        self.buf.push(v);
    }

    pub fn u16(&mut self, v: u16) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    pub fn u32(&mut self, v: u32) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    pub fn usize32(&mut self, v: usize) -> Result<()> {
        let v = u32::try_from(v).map_err(|_| Error::InvalidArgument(format!("{v} does not fit in u32")))?;
        self.u32(v);
        Ok(())
    }

    pub fn bytes(&mut self, b: &[u8]) {
        self.buf.extend_from_slice(b);
    }

    pub fn f32s(&mut self, vals: &[f32]) {
        self.buf.reserve(vals.len() * 4);
        for v in vals {
            self.buf.extend_from_slice(&v.to_le_bytes());
        }
    }

    pub fn str16(&mut self, s: &str) -> Result<()> {
        let n = u16::try_from(s.len()).map_err(|_| Error::InvalidArgument(format!("name too long: {s:?}")))?;
        self.u16(n);
        self.bytes(s.as_bytes());
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.buf.len()
    }

    pub fn into_inner(self) -> Vec<u8> {
        self.buf
    }

    /// Appends the CRC-32 of everything written so far.
    pub fn finish(mut self) -> Vec<u8> {
        let crc = crc32fast::hash(&self.buf);
        self.u32(crc);
        self.buf
    }
}

pub(crate) fn decode_f32s(bytes: &[u8]) -> Vec<f32> {
    bytes.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap())).collect()
}

pub(crate) fn utf8(bytes: &[u8], what: &str) -> Result<String> {
    String::from_utf8(bytes.to_vec()).map_err(|_| Error::Malformed(format!("{what} is not valid utf-8")))
}

/// A tensor record as laid out on disk, before checksum verification.
pub(crate) struct RawTensor<'a> {
    name: &'a [u8],
    role: u8,
    dtype: u8,
    dims: Vec<usize>,
    payload: &'a [u8],
}

impl<'a> RawTensor<'a> {
    /// Header only; `payload` is left empty.
    pub fn read_header(r: &mut Reader<'a>) -> Result<Self> {
        let name = r.str16()?;
        let role = r.u8()?;
        let dtype = r.u8()?;
        let ndim = r.u8()? as usize;
        let mut dims = Vec::with_capacity(ndim);
        for _ in 0..ndim {
            dims.push(r.usize32()?);
        }
        Ok(RawTensor { name, role, dtype, dims, payload: &[] })
    }

    pub fn read(r: &mut Reader<'a>) -> Result<Self> {
        let mut t = Self::read_header(r)?;
        let count = t.element_count()?;
        t.payload = r.f32_bytes(count)?;
        Ok(t)
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn element_count(&self) -> Result<usize> {
        self.dims
            .iter()
            .try_fold(1usize, |acc, &d| acc.checked_mul(d))
            .ok_or_else(|| Error::Malformed(format!("dims {:?} overflow", self.dims)))
    }

    pub fn name(&self) -> Result<String> {
        utf8(self.name, "tensor name")
    }

    pub fn role(&self) -> Result<Role> {
        Role::from_u8(self.role).ok_or_else(|| Error::Malformed(format!("unknown role tag {}", self.role)))
    }

    /// Builds the tensor from the stored payload.
    pub fn decode(&self) -> Result<Tensor> {
        self.decode_with(decode_f32s(self.payload))
    }

    /// Builds the tensor with externally supplied values (used for clustered layers).
    pub fn decode_with(&self, data: Vec<f32>) -> Result<Tensor> {
        DType::from_u8(self.dtype).ok_or_else(|| Error::Malformed(format!("unknown dtype tag {}", self.dtype)))?;
        Tensor::new(self.name()?, self.role()?, self.dims.clone(), data)
    }
}

pub(crate) fn write_tensor_header(w: &mut Writer, t: &Tensor) -> Result<()> {
    w.str16(t.name())?;
    w.u8(t.role().to_u8());
    w.u8(t.dtype().to_u8());
    let ndim = u8::try_from(t.shape().len()).map_err(|_| Error::UnsupportedRank(t.shape().len()))?;
    w.u8(ndim);
    for &d in t.shape() {
        w.usize32(d)?;
    }
    Ok(())
}

pub(crate) fn write_tensor(w: &mut Writer, t: &Tensor) -> Result<()> {
    write_tensor_header(w, t)?;
    w.f32s(t.data());
    Ok(())
}
