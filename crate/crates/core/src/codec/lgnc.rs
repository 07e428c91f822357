//! `LGNC` compressed-model container and the in-memory [`CompressedModel`].

use std::path::Path;

use crate::blocking::{matrix_dims, BlockLayout, LayerGrid};
use crate::clustering::Codebook;
use crate::codec::bitpack::{packed_len, unpack_indices};
use crate::codec::ratio::{bits_per_index, compute_cr, CrBreakdown};
use crate::container::manifest;
use crate::container::wire::{decode_f32s, write_tensor, write_tensor_header, RawTensor, Reader, Writer};
use crate::error::{Error, Result};
use crate::model::ArchManifest;
use crate::tensor::{Role, Tensor};

pub const MAGIC: &[u8; 4] = b"LGNC";
pub const VERSION: u16 = 1;

/// One clustered layer: tensor metadata, block grid and packed lego indices.
#[derive(Debug, Clone, PartialEq)]
pub struct CompressedLayer {
    pub layer_index: usize,
    pub name: String,
    pub role: Role,
    pub shape: Vec<usize>,
    pub rows_in_blocks: usize,
    pub cols_in_blocks: usize,
    pub stream: Vec<u8>,
}

impl CompressedLayer {
    pub fn block_count(&self) -> usize {
        self.rows_in_blocks * self.cols_in_blocks
    }

    pub fn grid(&self) -> LayerGrid {
        LayerGrid {
            layer_index: self.layer_index,
            rows_in_blocks: self.rows_in_blocks,
            cols_in_blocks: self.cols_in_blocks,
        }
    }
}

/// A tensor stored verbatim, with its position in the original model.
#[derive(Debug, Clone, PartialEq)]
pub struct RawLayer {
    pub layer_index: usize,
    pub tensor: Tensor,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CompressedModel {
    codebook: Codebook,
    wordlength: u32,
    bits_per_index: u32,
    layers: Vec<CompressedLayer>,
    raw_layers: Vec<RawLayer>,
    manifest: ArchManifest,
}

impl CompressedModel {
    /// Validates stream lengths, grid/shape agreement, index ranges and that
    /// layer indices cover `0..n` exactly once.
    pub fn new(
        codebook: Codebook,
        wordlength: u32,
        layers: Vec<CompressedLayer>,
        raw_layers: Vec<RawLayer>,
        manifest: ArchManifest,
    ) -> Result<Self> {
        let bits = bits_per_index(codebook.k());
        let b = codebook.b();
        if b > u8::MAX as usize || !(1..=u8::MAX as u32).contains(&wordlength) {
            return Err(Error::Malformed(format!("b = {b} or wordlength = {wordlength} out of range")));
        }
        let total = layers.len() + raw_layers.len();
        let mut seen = vec![false; total];
        let positions = layers.iter().map(|l| l.layer_index).chain(raw_layers.iter().map(|r| r.layer_index));
        for ix in positions {
            match seen.get_mut(ix) {
                Some(s) if !*s => *s = true,
                _ => return Err(Error::Malformed(format!("layer index {ix} is out of range or repeated"))),
            }
        }
        for l in &layers {
            let (rows, cols) = matrix_dims(&l.shape)?;
            if rows != l.rows_in_blocks * b || cols != l.cols_in_blocks * b {
                return Err(Error::ShapeMismatch(format!(
                    "layer {:?} shape {:?} does not match a {}x{} grid of {b}x{b} blocks",
                    l.name, l.shape, l.rows_in_blocks, l.cols_in_blocks
                )));
            }
            let expected = packed_len(l.block_count(), bits);
            if l.stream.len() != expected {
                return Err(Error::LengthMismatch { expected, actual: l.stream.len() });
            }
            let k = codebook.k() as u64;
            if let Some(&bad) = unpack_indices(&l.stream, l.block_count(), bits)?.iter().find(|&&i| i as u64 >= k) {
                return Err(Error::IndexOverflow { index: bad as u64, bits });
            }
        }
        Ok(CompressedModel { codebook, wordlength, bits_per_index: bits, layers, raw_layers, manifest })
    }

    pub fn codebook(&self) -> &Codebook {
        &self.codebook
    }

    pub fn k(&self) -> usize {
        self.codebook.k()
    }

    pub fn b(&self) -> usize {
        self.codebook.b()
    }

    pub fn wordlength(&self) -> u32 {
        self.wordlength
    }

    pub fn bits_per_index(&self) -> u32 {
        self.bits_per_index
    }

    pub fn layers(&self) -> &[CompressedLayer] {
        &self.layers
    }

    pub fn raw_layers(&self) -> &[RawLayer] {
        &self.raw_layers
    }

    pub fn manifest(&self) -> &ArchManifest {
        &self.manifest
    }

    pub fn total_layers(&self) -> usize {
        self.layers.len() + self.raw_layers.len()
    }

    pub fn block_count(&self) -> usize {
        self.layers.iter().map(CompressedLayer::block_count).sum()
    }

    /// Weights represented by lego indices.
    pub fn compressed_params(&self) -> usize {
        self.block_count() * self.b() * self.b()
    }

    /// Weight-role parameters stored verbatim.
    pub fn raw_weight_params(&self) -> usize {
        self.raw_layers.iter().filter(|r| r.tensor.role() == Role::Weight).map(|r| r.tensor.len()).sum()
    }

    pub fn layer_indices(&self, layer: &CompressedLayer) -> Result<Vec<u32>> {
        unpack_indices(&layer.stream, layer.block_count(), self.bits_per_index)
    }

    /// All block indices in canonical order.
    pub fn all_indices(&self) -> Result<Vec<u32>> {
        let mut out = Vec::with_capacity(self.block_count());
        for l in self.sorted_layers() {
            out.extend(self.layer_indices(l)?);
        }
        Ok(out)
    }

    fn sorted_layers(&self) -> Vec<&CompressedLayer> {
        let mut v: Vec<_> = self.layers.iter().collect();
        v.sort_by_key(|l| l.layer_index);
        v
    }

    /// Block layout in canonical (model) order.
    pub fn layout(&self) -> BlockLayout {
        BlockLayout {
            b: self.b(),
            grids: self.sorted_layers().into_iter().map(|l| l.grid()).collect(),
            skipped: vec![],
        }
    }

    pub fn cr(&self) -> CrBreakdown {
        compute_cr(self.compressed_params(), self.raw_weight_params(), self.k(), self.b(), self.wordlength)
    }
}

pub fn encode_compressed(cm: &CompressedModel) -> Result<Vec<u8>> {
    let mut w = Writer::default();
    w.bytes(MAGIC);
    w.u16(VERSION);
    w.u8(cm.b() as u8);
    w.usize32(cm.k())?;
    w.u8(cm.bits_per_index as u8);
    w.u8(cm.wordlength as u8);
    w.f32s(cm.codebook.values());
    w.usize32(cm.layers.len())?;
    for l in &cm.layers {
        w.usize32(l.layer_index)?;
        w.usize32(l.rows_in_blocks)?;
        w.usize32(l.cols_in_blocks)?;
        w.usize32(l.stream.len())?;
        w.bytes(&l.stream);
        // metadata only; the values come from the codebook
        let header = Tensor::zeros(l.name.clone(), l.role, l.shape.clone())?;
        write_tensor_header(&mut w, &header)?;
    }
    w.usize32(cm.raw_layers.len())?;
    for r in &cm.raw_layers {
        w.usize32(r.layer_index)?;
        write_tensor(&mut w, &r.tensor)?;
    }
    let m = manifest::encode(&cm.manifest)?;
    w.usize32(m.len())?;
    w.bytes(&m);
    Ok(w.finish())
}

pub fn decode_compressed(bytes: &[u8]) -> Result<CompressedModel> {
    let mut r = Reader::new(bytes);
    r.magic(MAGIC)?;
    r.version(VERSION)?;
    let b = r.u8()? as usize;
    let k = r.usize32()?;
    let bits = r.u8()? as u32;
    let wordlength = r.u8()? as u32;
    let codebook_len = k.checked_mul(b * b).ok_or_else(|| Error::Malformed("codebook size overflows".into()))?;
    let codebook = r.f32_bytes(codebook_len)?;

    let n = r.usize32()?;
    let mut clustered = Vec::with_capacity(n.min(r.remaining()));
    for _ in 0..n {
        let layer_index = r.usize32()?;
        let rows = r.usize32()?;
        let cols = r.usize32()?;
        let len = r.usize32()?;
        let stream = r.take(len)?;
        let header = RawTensor::read_header(&mut r)?;
        clustered.push((layer_index, rows, cols, stream, header));
    }
    let n_raw = r.usize32()?;
    let mut raw = Vec::with_capacity(n_raw.min(r.remaining()));
    for _ in 0..n_raw {
        let layer_index = r.usize32()?;
        raw.push((layer_index, RawTensor::read(&mut r)?));
    }
    let mlen = r.usize32()?;
    let mbytes = r.take(mlen)?;
    r.finish()?;

    if bits != bits_per_index(k) {
        return Err(Error::Malformed(format!("bits_per_index {bits} does not match K = {k}")));
    }
    let codebook = Codebook::new(b, decode_f32s(codebook))?;
    let layers = clustered
        .into_iter()
        .map(|(layer_index, rows, cols, stream, header)| {
            Ok(CompressedLayer {
                layer_index,
                name: header.name()?,
                role: header.role()?,
                shape: header.dims().to_vec(),
                rows_in_blocks: rows,
                cols_in_blocks: cols,
                stream: stream.to_vec(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let raw_layers = raw
        .into_iter()
        .map(|(layer_index, t)| Ok(RawLayer { layer_index, tensor: t.decode()? }))
        .collect::<Result<Vec<_>>>()?;
    CompressedModel::new(codebook, wordlength, layers, raw_layers, manifest::decode(mbytes)?)
}

pub fn write_compressed(cm: &CompressedModel, path: impl AsRef<Path>) -> Result<()> {
    std::fs::write(path, encode_compressed(cm)?)?;
    Ok(())
}

pub fn read_compressed(path: impl AsRef<Path>) -> Result<CompressedModel> {
    decode_compressed(&std::fs::read(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codec::bitpack::pack_indices;

    fn sample() -> CompressedModel {
        let codebook = Codebook::new(2, (0..12).map(|i| i as f32).collect()).unwrap();
        let layer = CompressedLayer {
            layer_index: 1,
            name: "w".into(),
            role: Role::Weight,
            shape: vec![2, 1, 2, 2],
            rows_in_blocks: 1,
            cols_in_blocks: 2,
            stream: pack_indices(&[2, 0], 2).unwrap(),
        };
        let raw = RawLayer { layer_index: 0, tensor: Tensor::new("b", Role::Bias, vec![2], vec![0.5, -0.5]).unwrap() };
        CompressedModel::new(codebook, 32, vec![layer], vec![raw], ArchManifest::default()).unwrap()
    }

    #[test]
    fn round_trip() {
        let cm = sample();
        let bytes = encode_compressed(&cm).unwrap();
        assert_eq!(decode_compressed(&bytes).unwrap(), cm);
        assert_eq!(cm.all_indices().unwrap(), vec![2, 0]);
        assert_eq!(cm.bits_per_index(), 2);
    }

    #[test]
    fn rejects_out_of_range_indices() {
        let mut cm = sample();
        cm.layers[0].stream = pack_indices(&[3, 0], 2).unwrap();
        let err = CompressedModel::new(
            cm.codebook.clone(),
            32,
            cm.layers.clone(),
            cm.raw_layers.clone(),
            ArchManifest::default(),
        );
        assert!(matches!(err, Err(Error::IndexOverflow { index: 3, .. })));
    }

    #[test]
    fn corruption_is_detected() {
        let bytes = encode_compressed(&sample()).unwrap();
        // codebook payload starts after the 13-byte header
        for pos in [13, 20, 40] {
            let mut bad = bytes.clone();
            bad[pos] ^= 1;
            assert!(matches!(decode_compressed(&bad), Err(Error::ChecksumMismatch { .. })), "byte {pos}");
        }
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(matches!(decode_compressed(&bad), Err(Error::BadMagic { .. })));
        assert!(matches!(decode_compressed(&bytes[..30]), Err(Error::TruncatedFile { .. })));
    }

    #[test]
    fn rejects_repeated_layer_index() {
        let cm = sample();
        let mut raw = cm.raw_layers.clone();
        raw[0].layer_index = 1;
        assert!(CompressedModel::new(cm.codebook.clone(), 32, cm.layers.clone(), raw, ArchManifest::default()).is_err());
    }
}
