//! Fixed-width index streams: LSB-first, little-endian, final byte zero-padded.

use crate::error::{Error, Result};

fn check_bits(bits: u32) -> Result<()> {
    if !(1..=32).contains(&bits) {
        return Err(Error::InvalidArgument(format!("bit width must be in 1..=32, got {bits}")));
    }
    Ok(())
}

pub fn packed_len(count: usize, bits: u32) -> usize {
    (count * bits as usize).div_ceil(8)
}

pub fn pack_indices(indices: &[u32], bits: u32) -> Result<Vec<u8>> {
    check_bits(bits)?;
    let limit = 1u64 << bits;
    let mut out = Vec::with_capacity(packed_len(indices.len(), bits));
    let mut acc = 0u64;
    let mut filled = 0u32;
    for &ix in indices {
        if ix as u64 >= limit {
            return Err(Error::IndexOverflow { index: ix as u64, bits });
        }
        acc |= (ix as u64) << filled;
        filled += bits;
        while filled >= 8 {
            out.push(acc as u8);
            acc >>= 8;
            filled -= 8;
        }
    }
    if filled > 0 {
        out.push(acc as u8);
    }
    Ok(out)
}

pub fn unpack_indices(stream: &[u8], count: usize, bits: u32) -> Result<Vec<u32>> {
    check_bits(bits)?;
    let expected = packed_len(count, bits);
    if stream.len() != expected {
        return Err(Error::LengthMismatch { expected, actual: stream.len() });
    }
    let mask = (1u64 << bits) - 1;
    let mut out = Vec::with_capacity(count);
    let mut bytes = stream.iter();
    let mut acc = 0u64;
    let mut avail = 0u32;
    for _ in 0..count {
        while avail < bits {
            acc |= (*bytes.next().expect("length checked") as u64) << avail;
            avail += 8;
        }
        out.push((acc & mask) as u32);
        acc >>= bits;
        avail -= bits;
    }
    Ok(out)
}
