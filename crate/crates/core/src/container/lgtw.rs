//! `LGTW` raw-weights container.

use std::path::Path;

use crate::container::manifest;
use crate::container::wire::{write_tensor, RawTensor, Reader, Writer};
use crate::error::{Error, Result};
use crate::model::ModelBundle;

pub const MAGIC: &[u8; 4] = b"LGTW";
pub const VERSION: u16 = 1;

pub fn encode_model(model: &ModelBundle) -> Result<Vec<u8>> {
    let mut w = Writer::default();
    w.bytes(MAGIC);
    w.u16(VERSION);
    w.usize32(model.layers().len())?;
    for t in model.layers() {
        write_tensor(&mut w, t)?;
    }
    let m = manifest::encode(model.manifest())?;
    w.usize32(m.len())?;
    w.bytes(&m);
    Ok(w.finish())
}

pub fn decode_model(bytes: &[u8]) -> Result<ModelBundle> {
    let mut r = Reader::new(bytes);
    r.magic(MAGIC)?;
    r.version(VERSION)?;
    let count = r.usize32()?;
    let mut raw = Vec::with_capacity(count.min(r.remaining()));
    for _ in 0..count {
        raw.push(RawTensor::read(&mut r)?);
    }
    let mlen = r.usize32()?;
    let mbytes = r.take(mlen)?;
    r.finish()?;

    let layers = raw.iter().map(RawTensor::decode).collect::<Result<Vec<_>>>()?;
    ModelBundle::new(layers, manifest::decode(mbytes)?).map_err(|e| Error::Malformed(e.to_string()))
}

pub fn write_model(model: &ModelBundle, path: impl AsRef<Path>) -> Result<()> {
    std::fs::write(path, encode_model(model)?)?;
    Ok(())
}

pub fn read_model(path: impl AsRef<Path>) -> Result<ModelBundle> {
    decode_model(&std::fs::read(path)?)
}
