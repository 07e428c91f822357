//! Tag-length-value encoding of [`ArchManifest`].
//!
//! Each record is `tag u8 | body_len u32 | body`. Strings inside bodies are
//! `len u16 | utf-8`, and an empty bias name means "no bias".

use crate::container::wire::{utf8, Reader, Writer};
use crate::error::{Error, Result};
use crate::model::{ArchManifest, LayerSpec};

pub const TAG_INPUT: u8 = 0x01;
pub const TAG_DENSE: u8 = 0x10;
pub const TAG_CONV2D: u8 = 0x11;
pub const TAG_RELU: u8 = 0x12;
pub const TAG_MAXPOOL2D: u8 = 0x13;
pub const TAG_FLATTEN: u8 = 0x14;

pub(crate) fn encode(m: &ArchManifest) -> Result<Vec<u8>> {
    let mut out = Writer::default();
    if let Some(shape) = &m.input_shape {
        let mut body = Writer::default();
        body.u8(u8::try_from(shape.len()).map_err(|_| Error::UnsupportedRank(shape.len()))?);
        for &d in shape {
            body.usize32(d)?;
        }
        record(&mut out, TAG_INPUT, body)?;
    }
    for spec in &m.layers {
        let mut body = Writer::default();
        let tag = match spec {
            LayerSpec::Dense { in_features, out_features, weight, bias } => {
                body.usize32(*in_features)?;
                body.usize32(*out_features)?;
                body.str16(weight)?;
                body.str16(bias.as_deref().unwrap_or(""))?;
                TAG_DENSE
            }
            LayerSpec::Conv2d { in_channels, out_channels, kernel_h, kernel_w, stride, padding, weight, bias } => {
                for v in [in_channels, out_channels, kernel_h, kernel_w, stride, padding] {
                    body.usize32(*v)?;
                }
                body.str16(weight)?;
                body.str16(bias.as_deref().unwrap_or(""))?;
                TAG_CONV2D
            }
            LayerSpec::Relu => TAG_RELU,
            LayerSpec::MaxPool2d { kernel, stride } => {
                body.usize32(*kernel)?;
                body.usize32(*stride)?;
                TAG_MAXPOOL2D
            }
            LayerSpec::Flatten => TAG_FLATTEN,
        };
        record(&mut out, tag, body)?;
    }
    Ok(out.into_inner())
}

fn record(out: &mut Writer, tag: u8, body: Writer) -> Result<()> {
    out.u8(tag);
    out.usize32(body.len())?;
    out.bytes(&body.into_inner());
    Ok(())
}

pub(crate) fn decode(bytes: &[u8]) -> Result<ArchManifest> {
    let mut r = Reader::new(bytes);
    let mut m = ArchManifest::default();
    while r.remaining() > 0 {
        let tag = r.u8().map_err(malformed)?;
        let len = r.usize32().map_err(malformed)?;
        let body = r.take(len).map_err(malformed)?;
        let mut b = Reader::new(body);
        match tag {
            TAG_INPUT => {
                if m.input_shape.is_some() || !m.layers.is_empty() {
                    return Err(Error::Malformed("input record must come first and only once".into()));
                }
                let ndim = b.u8().map_err(malformed)? as usize;
                let dims = (0..ndim).map(|_| b.usize32()).collect::<Result<Vec<_>>>().map_err(malformed)?;
                m.input_shape = Some(dims);
            }
            TAG_DENSE => {
                let in_features = b.usize32().map_err(malformed)?;
                let out_features = b.usize32().map_err(malformed)?;
                let (weight, bias) = names(&mut b)?;
                m.layers.push(LayerSpec::Dense { in_features, out_features, weight, bias });
            }
            TAG_CONV2D => {
                let mut v = [0usize; 6];
                for x in v.iter_mut() {
                    *x = b.usize32().map_err(malformed)?;
                }
                let (weight, bias) = names(&mut b)?;
                m.layers.push(LayerSpec::Conv2d {
                    in_channels: v[0],
                    out_channels: v[1],
                    kernel_h: v[2],
                    kernel_w: v[3],
                    stride: v[4],
                    padding: v[5],
                    weight,
                    bias,
                });
            }
            TAG_RELU => m.layers.push(LayerSpec::Relu),
            TAG_MAXPOOL2D => {
                let kernel = b.usize32().map_err(malformed)?;
                let stride = b.usize32().map_err(malformed)?;
                m.layers.push(LayerSpec::MaxPool2d { kernel, stride });
            }
            TAG_FLATTEN => m.layers.push(LayerSpec::Flatten),
            other => return Err(Error::Malformed(format!("unknown manifest tag {other:#04x}"))),
        }
        if b.remaining() != 0 {
            return Err(Error::Malformed(format!("manifest record {tag:#04x} has {} extra bytes", b.remaining())));
        }
    }
    Ok(m)
}

fn names(b: &mut Reader<'_>) -> Result<(String, Option<String>)> {
    let weight = utf8(b.str16().map_err(malformed)?, "weight name")?;
    let bias = utf8(b.str16().map_err(malformed)?, "bias name")?;
    Ok((weight, (!bias.is_empty()).then_some(bias)))
}

fn malformed(e: Error) -> Error {
    Error::Malformed(format!("manifest: {e}"))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_kind_round_trips() {
        let m = ArchManifest {
            input_shape: Some(vec![1, 28, 28]),
            layers: vec![
                LayerSpec::Conv2d {
                    in_channels: 1,
                    out_channels: 4,
                    kernel_h: 3,
                    kernel_w: 3,
                    stride: 1,
                    padding: 1,
                    weight: "c.w".into(),
                    bias: None,
                },
                LayerSpec::Relu,
                LayerSpec::MaxPool2d { kernel: 2, stride: 2 },
                LayerSpec::Flatten,
                LayerSpec::Dense { in_features: 784, out_features: 10, weight: "d.w".into(), bias: Some("d.b".into()) },
            ],
        };
        assert_eq!(decode(&encode(&m).unwrap()).unwrap(), m);
    }

    #[test]
    fn rejects_unknown_tags_and_short_bodies() {
        assert!(matches!(decode(&[0x7f, 0, 0, 0, 0]), Err(Error::Malformed(_))));
        assert!(matches!(decode(&[TAG_MAXPOOL2D, 4, 0, 0, 0, 2, 0, 0, 0]), Err(Error::Malformed(_))));
    }
}
