//! Index packing, the `LGNC` format and compression-ratio accounting.

pub mod bitpack;
pub mod lgnc;
pub mod ratio;

pub use bitpack::{pack_indices, packed_len, unpack_indices};
pub use lgnc::{
    decode_compressed, encode_compressed, read_compressed, write_compressed, CompressedLayer, CompressedModel, RawLayer,
};
pub use ratio::{bits_per_index, codebook_bits, codebook_bytes, compute_cr, theoretical_cr, CrBreakdown};
