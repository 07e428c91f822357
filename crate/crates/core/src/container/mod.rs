//! Tensors and models on disk: the `LGTW` weights format, the `LGTD`
//! dataset format, and the manifest encoding they share.

pub mod lgtd;
pub mod lgtw;
pub(crate) mod manifest;
pub(crate) mod wire;

pub use lgtd::{decode_dataset, encode_dataset, read_dataset, write_dataset};
pub use lgtw::{decode_model, encode_model, read_model, write_model};
