//! `LGTD` evaluation-dataset container.

use std::path::Path;

use crate::container::wire::{decode_f32s, Reader, Writer};
use crate::error::{Error, Result};
use crate::model::DatasetBundle;
use crate::tensor::{Role, Tensor};

pub const MAGIC: &[u8; 4] = b"LGTD";
pub const VERSION: u16 = 1;

pub fn encode_dataset(ds: &DatasetBundle) -> Result<Vec<u8>> {
    let mut w = Writer::default();
    w.bytes(MAGIC);
    w.u16(VERSION);
    w.u32(ds.num_classes());
    w.usize32(ds.len())?;
    let dims = ds.sample_shape();
    w.u8(u8::try_from(dims.len()).map_err(|_| Error::UnsupportedRank(dims.len()))?);
    for &d in dims {
        w.usize32(d)?;
    }
    w.f32s(ds.inputs().data());
    for &l in ds.labels() {
        w.u32(l);
    }
    Ok(w.finish())
}

pub fn decode_dataset(bytes: &[u8]) -> Result<DatasetBundle> {
    let mut r = Reader::new(bytes);
    r.magic(MAGIC)?;
    r.version(VERSION)?;
    let num_classes = r.u32()?;
    let n = r.usize32()?;
    let ndim = r.u8()? as usize;
    let mut shape = vec![n];
    for _ in 0..ndim {
        shape.push(r.usize32()?);
    }
    let count = shape
        .iter()
        .try_fold(1usize, |a, &d| a.checked_mul(d))
        .ok_or_else(|| Error::Malformed("input dims overflow".into()))?;
    let inputs = r.f32_bytes(count)?;
    let labels = r.take(n.checked_mul(4).ok_or_else(|| Error::Malformed("label count overflows".into()))?)?;
    r.finish()?;

    let inputs = Tensor::new("inputs", Role::Other, shape, decode_f32s(inputs))?;
    let labels = labels.chunks_exact(4).map(|c| u32::from_le_bytes(c.try_into().unwrap())).collect();
    DatasetBundle::new(inputs, labels, num_classes).map_err(|e| Error::Malformed(e.to_string()))
}

pub fn write_dataset(ds: &DatasetBundle, path: impl AsRef<Path>) -> Result<()> {
    std::fs::write(path, encode_dataset(ds)?)?;
    Ok(())
}

pub fn read_dataset(path: impl AsRef<Path>) -> Result<DatasetBundle> {
    decode_dataset(&std::fs::read(path)?)
}
