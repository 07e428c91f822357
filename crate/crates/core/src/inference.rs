//! Small deterministic forward-pass evaluator.
//!
//! Per-sample activations are row-major; conv inputs are `[C, H, W]` and
//! dense inputs are `[n]`. Every output element is accumulated in a fixed
//! order, so results do not depend on how samples are spread over threads.

use rand::{Rng, SeedableRng};
use rayon::prelude::*;

use crate::clustering::SeedRng;
use crate::error::{Error, Result};
use crate::model::{DatasetBundle, LayerSpec, ModelBundle};
use crate::tensor::{Role, Tensor};

#[derive(Debug, Clone, PartialEq)]
struct Activation {
    shape: Vec<usize>,
    data: Vec<f32>,
}

fn weights<'a>(model: &'a ModelBundle, name: &str) -> Result<&'a [f32]> {
    model.tensor(name).map(Tensor::data).ok_or_else(|| Error::InvalidModel(format!("missing tensor {name:?}")))
}

fn dense(x: Activation, w: &[f32], bias: Option<&[f32]>, in_f: usize, out_f: usize) -> Result<Activation> {
    if x.shape != [in_f] {
        return Err(Error::ShapeMismatch(format!("dense expects [{in_f}], got {:?}", x.shape)));
    }
    let data = (0..out_f)
        .map(|o| {
            let row = &w[o * in_f..(o + 1) * in_f];
            let mut acc = 0.0f32;
            for (a, b) in row.iter().zip(&x.data) {
                acc += a * b;
            }
            acc + bias.map_or(0.0, |b| b[o])
        })
        .collect();
    Ok(Activation { shape: vec![out_f], data })
}

fn out_extent(size: usize, pad: usize, kernel: usize, stride: usize, what: &str) -> Result<usize> {
    if stride == 0 {
        return Err(Error::InvalidModel(format!("{what} stride must be >= 1")));
    }
    let padded = size + 2 * pad;
    if padded < kernel || kernel == 0 {
        return Err(Error::ShapeMismatch(format!(
            "{what}: kernel {kernel} does not fit input {size} (+2x{pad} padding)"
        )));
    }
    Ok((padded - kernel) / stride + 1)
}

#[allow(clippy::too_many_arguments)]
fn conv2d(
    x: Activation,
    w: &[f32],
    bias: Option<&[f32]>,
    in_c: usize,
    out_c: usize,
    kh: usize,
    kw: usize,
    stride: usize,
    pad: usize,
) -> Result<Activation> {
    let [c, h, wd] = x.shape[..] else {
        return Err(Error::ShapeMismatch(format!("conv2d expects [C, H, W], got {:?}", x.shape)));
    };
    if c != in_c {
        return Err(Error::ShapeMismatch(format!("conv2d expects {in_c} channels, got {c}")));
    }
    let oh = out_extent(h, pad, kh, stride, "conv2d")?;
    let ow = out_extent(wd, pad, kw, stride, "conv2d")?;
    let patch = in_c * kh * kw;
    let positions = oh * ow;

    // im2col: one column per output position, rows ordered like the weight's [in, kh, kw] tail
    let mut cols = vec![0.0f32; patch * positions];
    for ci in 0..in_c {
        for ky in 0..kh {
            for kx in 0..kw {
                let row = (ci * kh + ky) * kw + kx;
                let dst = &mut cols[row * positions..(row + 1) * positions];
                for oy in 0..oh {
                    let iy = (oy * stride + ky) as isize - pad as isize;
                    if iy < 0 || iy >= h as isize {
                        continue;
                    }
                    for ox in 0..ow {
                        let ix = (ox * stride + kx) as isize - pad as isize;
                        if ix >= 0 && ix < wd as isize {
                            dst[oy * ow + ox] = x.data[(ci * h + iy as usize) * wd + ix as usize];
                        }
                    }
                }
            }
        }
    }

    let mut out = vec![0.0f32; out_c * positions];
    for o in 0..out_c {
        let wrow = &w[o * patch..(o + 1) * patch];
        let dst = &mut out[o * positions..(o + 1) * positions];
        for (r, &wv) in wrow.iter().enumerate() {
            let src = &cols[r * positions..(r + 1) * positions];
            for (d, &s) in dst.iter_mut().zip(src) {
                *d += wv * s;
            }
        }
        if let Some(b) = bias {
            dst.iter_mut().for_each(|d| *d += b[o]);
        }
    }
    Ok(Activation { shape: vec![out_c, oh, ow], data: out })
}

fn maxpool(x: Activation, kernel: usize, stride: usize) -> Result<Activation> {
    let [c, h, w] = x.shape[..] else {
        return Err(Error::ShapeMismatch(format!("maxpool2d expects [C, H, W], got {:?}", x.shape)));
    };
    let oh = out_extent(h, 0, kernel, stride, "maxpool2d")?;
    let ow = out_extent(w, 0, kernel, stride, "maxpool2d")?;
    let mut out = Vec::with_capacity(c * oh * ow);
    for ci in 0..c {
        for oy in 0..oh {
            for ox in 0..ow {
                let mut m = f32::NEG_INFINITY;
                for ky in 0..kernel {
                    for kx in 0..kernel {
                        m = m.max(x.data[(ci * h + oy * stride + ky) * w + ox * stride + kx]);
                    }
                }
                out.push(m);
            }
        }
    }
    Ok(Activation { shape: vec![c, oh, ow], data: out })
}

fn run(model: &ModelBundle, shape: &[usize], data: &[f32]) -> Result<Vec<f32>> {
    let specs = &model.manifest().layers;
    if specs.is_empty() {
        return Err(Error::InvalidModel("model has no architecture manifest".into()));
    }
    let mut x = Activation { shape: shape.to_vec(), data: data.to_vec() };
    for spec in specs {
        x = match spec {
            LayerSpec::Dense { in_features, out_features, weight, bias } => {
                let b = bias.as_deref().map(|b| weights(model, b)).transpose()?;
                dense(x, weights(model, weight)?, b, *in_features, *out_features)?
            }
            LayerSpec::Conv2d { in_channels, out_channels, kernel_h, kernel_w, stride, padding, weight, bias } => {
                let b = bias.as_deref().map(|b| weights(model, b)).transpose()?;
                conv2d(
                    x,
                    weights(model, weight)?,
                    b,
                    *in_channels,
                    *out_channels,
                    *kernel_h,
                    *kernel_w,
                    *stride,
                    *padding,
                )?
            }
            LayerSpec::Relu => {
                let mut x = x;
                x.data.iter_mut().for_each(|v| *v = v.max(0.0));
                x
            }
            LayerSpec::MaxPool2d { kernel, stride } => maxpool(x, *kernel, *stride)?,
            LayerSpec::Flatten => Activation { shape: vec![x.data.len()], data: x.data },
        };
    }
    Ok(x.data)
}

/// Logits for one sample. `input` has the per-sample shape, e.g. `[1, 28, 28]`.
pub fn forward(model: &ModelBundle, input: &Tensor) -> Result<Tensor> {
    let logits = run(model, input.shape(), input.data())?;
    let n = logits.len();
    Tensor::new("logits", Role::Other, vec![n], logits)
}

/// Logits for every sample of a batch shaped `[N, ...]`, in sample order.
pub fn forward_batch(model: &ModelBundle, inputs: &Tensor) -> Result<Vec<Vec<f32>>> {
    let shape = &inputs.shape()[1..];
    let per: usize = shape.iter().product();
    inputs.data().par_chunks_exact(per).map(|x| run(model, shape, x)).collect()
}

/// Index of the largest logit; the lowest index wins ties.
pub fn argmax(logits: &[f32]) -> usize {
    let mut best = 0;
    for (i, &v) in logits.iter().enumerate() {
        if v > logits[best] {
            best = i;
        }
    }
    best
}

/// Percentage of samples whose argmax logit equals the label.
pub fn top1_accuracy(model: &ModelBundle, dataset: &DatasetBundle) -> Result<f64> {
    let logits = forward_batch(model, dataset.inputs())?;
    let hits = logits.iter().zip(dataset.labels()).filter(|(l, &y)| argmax(l) == y as usize).count();
    Ok(hits as f64 * 100.0 / dataset.len() as f64)
}

/// Mean Euclidean distance between the two models' logits over `probes` (`[N, ...]`).
pub fn output_deviation(m1: &ModelBundle, m2: &ModelBundle, probes: &Tensor) -> Result<f64> {
    if m1.manifest() != m2.manifest() {
        return Err(Error::ShapeMismatch("models have different architecture manifests".into()));
    }
    let a = forward_batch(m1, probes)?;
    let b = forward_batch(m2, probes)?;
    let total: f64 = a
        .iter()
        .zip(&b)
        .map(|(x, y)| {
            x.iter()
                .zip(y)
                .map(|(&p, &q)| {
                    let d = p as f64 - q as f64;
                    d * d
                })
                .sum::<f64>()
                .sqrt()
        })
        .sum();
    Ok(total / a.len() as f64)
}

/// Per-sample input shape: declared in the manifest, or implied by a leading dense layer.
pub fn input_shape(model: &ModelBundle) -> Result<Vec<usize>> {
    let m = model.manifest();
    if let Some(s) = &m.input_shape {
        return Ok(s.clone());
    }
    match m.layers.first() {
        Some(LayerSpec::Dense { in_features, .. }) => Ok(vec![*in_features]),
        _ => Err(Error::InvalidModel("cannot infer the input shape: manifest has no input record".into())),
    }
}

/// `count` seeded uniform `[0, 1)` inputs for data-free evaluation.
pub fn probe_inputs(model: &ModelBundle, count: usize, seed: u64) -> Result<Tensor> {
    let shape = input_shape(model)?;
    let per: usize = shape.iter().product();
    let mut rng = SeedRng::seed_from_u64(seed);
    let data = (0..count * per).map(|_| rng.random::<f32>()).collect();
    let mut full = vec![count];
    full.extend(shape);
    Tensor::new("probes", Role::Other, full, data)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ArchManifest;

    fn model(tensors: Vec<Tensor>, layers: Vec<LayerSpec>) -> ModelBundle {
        ModelBundle::new(tensors, ArchManifest { input_shape: None, layers }).unwrap()
    }

    #[test]
    fn identity_dense() {
        let mut eye = vec![0.0; 9];
        for i in 0..3 {
            eye[i * 4] = 1.0;
        }
        let m = model(
            vec![
                Tensor::new("w", Role::Weight, vec![3, 3], eye).unwrap(),
                Tensor::zeros("b", Role::Bias, vec![3]).unwrap(),
            ],
            vec![LayerSpec::Dense { in_features: 3, out_features: 3, weight: "w".into(), bias: Some("b".into()) }],
        );
        let x = Tensor::new("x", Role::Other, vec![3], vec![1.5, -2.0, 0.25]).unwrap();
        assert_eq!(forward(&m, &x).unwrap().data(), x.data());
    }

    #[test]
    fn scalar_conv() {
        let m = model(
            vec![Tensor::new("w", Role::Weight, vec![1, 1, 1, 1], vec![2.0]).unwrap()],
            vec![LayerSpec::Conv2d {
                in_channels: 1,
                out_channels: 1,
                kernel_h: 1,
                kernel_w: 1,
                stride: 1,
                padding: 0,
                weight: "w".into(),
                bias: None,
            }],
        );
        let x = Tensor::new("x", Role::Other, vec![1, 2, 3], vec![1.0, -2.0, 3.0, 0.5, 0.0, 7.0]).unwrap();
        let y = forward(&m, &x).unwrap();
        let doubled: Vec<f32> = x.data().iter().map(|v| 2.0 * v).collect();
        assert_eq!(y.data(), doubled.as_slice());
    }

    #[test]
    fn shape_errors() {
        let m = model(
            vec![Tensor::zeros("w", Role::Weight, vec![2, 3]).unwrap()],
            vec![LayerSpec::Dense { in_features: 3, out_features: 2, weight: "w".into(), bias: None }],
        );
        let x = Tensor::zeros("x", Role::Other, vec![4]).unwrap();
        assert!(matches!(forward(&m, &x), Err(Error::ShapeMismatch(_))));
    }

    #[test]
    fn maxpool_and_argmax() {
        let x = Activation { shape: vec![1, 2, 4], data: vec![1.0, 5.0, 2.0, 0.0, 3.0, 4.0, 9.0, -1.0] };
        let y = maxpool(x, 2, 2).unwrap();
        assert_eq!(y.shape, vec![1, 1, 2]);
        assert_eq!(y.data, vec![5.0, 9.0]);
        assert_eq!(argmax(&[1.0, 3.0, 3.0, 2.0]), 1);
    }
}
