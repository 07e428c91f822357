use std::collections::HashSet;

use crate::error::{Error, Result};
use crate::tensor::{Role, Tensor};

/// One step of the forward pass.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum LayerSpec {
    /// `y = W x + b` with `W` shaped `[out, in]`.
    Dense {
        in_features: usize,
        out_features: usize,
        weight: String,
        bias: Option<String>,
    },
    /// Cross-correlation with `W` shaped `[out, in, kh, kw]` and symmetric zero padding.
    Conv2d {
        in_channels: usize,
        out_channels: usize,
        kernel_h: usize,
        kernel_w: usize,
        stride: usize,
        padding: usize,
        weight: String,
        bias: Option<String>,
    },
    Relu,
    MaxPool2d {
        kernel: usize,
        stride: usize,
    },
    Flatten,
}

impl LayerSpec {
    pub fn kind(&self) -> &'static str {
        match self {
            LayerSpec::Dense { .. } => "dense",
            LayerSpec::Conv2d { .. } => "conv2d",
            LayerSpec::Relu => "relu",
            LayerSpec::MaxPool2d { .. } => "maxpool2d",
            LayerSpec::Flatten => "flatten",
        }
    }

    /// `(weight name, expected weight shape, bias name, expected bias shape)`.
    fn references(&self) -> Option<(&str, Vec<usize>, Option<&str>, usize)> {
        match self {
            LayerSpec::Dense { in_features, out_features, weight, bias } => {
                Some((weight.as_str(), vec![*out_features, *in_features], bias.as_deref(), *out_features))
            }
            LayerSpec::Conv2d { in_channels, out_channels, kernel_h, kernel_w, weight, bias, .. } => Some((
                weight.as_str(),
                vec![*out_channels, *in_channels, *kernel_h, *kernel_w],
                bias.as_deref(),
                *out_channels,
            )),
            _ => None,
        }
    }
}

/// Architecture description: the per-sample input shape (optional) and the
/// ordered layer list.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ArchManifest {
    pub input_shape: Option<Vec<usize>>,
    pub layers: Vec<LayerSpec>,
}

/// A trained model: ordered named tensors plus the manifest that drives inference.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelBundle {
    layers: Vec<Tensor>,
    manifest: ArchManifest,
}

impl ModelBundle {
    pub fn new(layers: Vec<Tensor>, manifest: ArchManifest) -> Result<Self> {
        let mut seen = HashSet::new();
        for t in &layers {
            if !seen.insert(t.name()) {
                return Err(Error::InvalidModel(format!("duplicate layer name {:?}", t.name())));
            }
        }
        let bundle = ModelBundle { layers, manifest };
        for spec in &bundle.manifest.layers {
            let Some((w, w_shape, b, b_len)) = spec.references() else { continue };
            let wt = bundle
                .tensor(w)
                .ok_or_else(|| Error::InvalidModel(format!("{} references missing tensor {w:?}", spec.kind())))?;
            if wt.shape() != w_shape.as_slice() {
                return Err(Error::InvalidModel(format!(
                    "tensor {w:?} has shape {:?}, {} layer expects {w_shape:?}",
                    wt.shape(),
                    spec.kind()
                )));
            }
            if let Some(b) = b {
                let bt = bundle
                    .tensor(b)
                    .ok_or_else(|| Error::InvalidModel(format!("{} references missing tensor {b:?}", spec.kind())))?;
                if bt.shape() != [b_len] {
                    return Err(Error::InvalidModel(format!(
                        "bias {b:?} has shape {:?}, expected [{b_len}]",
                        bt.shape()
                    )));
                }
            }
        }
        Ok(bundle)
    }

    /// A bundle with no manifest; useful for clustering-only workflows.
    pub fn from_tensors(layers: Vec<Tensor>) -> Result<Self> {
        Self::new(layers, ArchManifest::default())
    }

    pub fn layers(&self) -> &[Tensor] {
        &self.layers
    }

    pub fn manifest(&self) -> &ArchManifest {
        &self.manifest
    }

    pub fn tensor(&self, name: &str) -> Option<&Tensor> {
        self.layers.iter().find(|t| t.name() == name)
    }

    /// Parameter count P: elements of weight-role tensors only.
    pub fn param_count(&self) -> usize {
        self.layers.iter().filter(|t| t.role() == Role::Weight).map(Tensor::len).sum()
    }

    /// Replace the tensor list, keeping the manifest. Shapes are revalidated.
    pub fn with_layers(&self, layers: Vec<Tensor>) -> Result<Self> {
        Self::new(layers, self.manifest.clone())
    }
}

pub fn model_param_count(model: &ModelBundle) -> usize {
    model.param_count()
}

/// Evaluation inputs `[N, ...]` with one class label per sample.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetBundle {
    inputs: Tensor,
    labels: Vec<u32>,
    num_classes: u32,
}

impl DatasetBundle {
    pub fn new(inputs: Tensor, labels: Vec<u32>, num_classes: u32) -> Result<Self> {
        let n = inputs.shape()[0];
        if n == 0 || labels.is_empty() {
            return Err(Error::InvalidArgument("dataset must hold at least one sample".into()));
        }
        if labels.len() != n {
            return Err(Error::InvalidArgument(format!("{} labels for {n} inputs", labels.len())));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= num_classes) {
            return Err(Error::InvalidArgument(format!("label {bad} >= num_classes {num_classes}")));
        }
        Ok(DatasetBundle { inputs, labels, num_classes })
    }

    pub fn inputs(&self) -> &Tensor {
        &self.inputs
    }

    pub fn labels(&self) -> &[u32] {
        &self.labels
    }

    pub fn num_classes(&self) -> u32 {
        self.num_classes
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn sample_shape(&self) -> &[usize] {
        &self.inputs.shape()[1..]
    }

    pub fn sample(&self, i: usize) -> &[f32] {
        let per: usize = self.sample_shape().iter().product();
        &self.inputs.data()[i * per..(i + 1) * per]
    }
}
