#![allow(dead_code)]

use std::path::PathBuf;

use lego::{ArchManifest, DatasetBundle, LayerSpec, ModelBundle, Role, Tensor};
use rand::{Rng, SeedableRng};
use rand_xoshiro::Xoshiro256PlusPlus;

pub fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

pub fn mnist_model() -> ModelBundle {
    lego::container::read_model(fixture("mnist_cnn.lgtw")).expect("fixture model")
}

pub fn mnist_dataset() -> DatasetBundle {
    lego::container::read_dataset(fixture("mnist_1k.lgtd")).expect("fixture dataset")
}

pub fn rng(seed: u64) -> Xoshiro256PlusPlus {
    Xoshiro256PlusPlus::seed_from_u64(seed)
}

pub fn random_tensor(rng: &mut impl Rng, name: &str, role: Role, shape: Vec<usize>) -> Tensor {
    let n = shape.iter().product();
    let data = (0..n).map(|_| rng.random_range(-1.0f32..1.0)).collect();
    Tensor::new(name, role, shape, data).unwrap()
}

/// Single weight layer with no manifest.
pub fn random_matrix_model(seed: u64, rows: usize, cols: usize) -> ModelBundle {
    let mut r = rng(seed);
    ModelBundle::from_tensors(vec![random_tensor(&mut r, "w", Role::Weight, vec![rows, cols])]).unwrap()
}

/// Conv -> relu -> pool -> flatten -> dense, on 1x8x8 inputs.
pub fn small_cnn(seed: u64) -> ModelBundle {
    let mut r = rng(seed);
    let tensors = vec![
        random_tensor(&mut r, "conv.weight", Role::Weight, vec![4, 1, 2, 2]),
        random_tensor(&mut r, "conv.bias", Role::Bias, vec![4]),
        random_tensor(&mut r, "fc.weight", Role::Weight, vec![4, 36]),
        random_tensor(&mut r, "fc.bias", Role::Bias, vec![4]),
    ];
    let manifest = ArchManifest {
        input_shape: Some(vec![1, 8, 8]),
        layers: vec![
            LayerSpec::Conv2d {
                in_channels: 1,
                out_channels: 4,
                kernel_h: 2,
                kernel_w: 2,
                stride: 1,
                padding: 0,
                weight: "conv.weight".into(),
                bias: Some("conv.bias".into()),
            },
            LayerSpec::Relu,
            LayerSpec::MaxPool2d { kernel: 2, stride: 2 },
            LayerSpec::Flatten,
            LayerSpec::Dense {
                in_features: 36,
                out_features: 4,
                weight: "fc.weight".into(),
                bias: Some("fc.bias".into()),
            },
        ],
    };
    ModelBundle::new(tensors, manifest).unwrap()
}

/// 32x32 weight tiled from exactly `distinct` different 4x4 blocks (64 blocks total).
pub fn tiled_model(distinct: usize, seed: u64) -> ModelBundle {
    let mut r = rng(seed);
    let legos: Vec<Vec<f32>> = (0..distinct).map(|_| (0..16).map(|_| r.random_range(-1.0f32..1.0)).collect()).collect();
    let mut data = vec![0.0f32; 32 * 32];
    for block in 0..64 {
        // every lego is used at least once, the rest are random picks
        let pick = if block < distinct { block } else { r.random_range(0..distinct) };
        let (br, bc) = (block / 8, block % 8);
        for i in 0..4 {
            for j in 0..4 {
                data[(br * 4 + i) * 32 + bc * 4 + j] = legos[pick][i * 4 + j];
            }
        }
    }
    let w = Tensor::new("w", Role::Weight, vec![32, 32], data).unwrap();
    let bias = Tensor::new("bias", Role::Bias, vec![32], (0..32).map(|i| i as f32 * 0.1).collect()).unwrap();
    ModelBundle::new(
        vec![w, bias],
        ArchManifest {
            input_shape: None,
            layers: vec![LayerSpec::Dense {
                in_features: 32,
                out_features: 32,
                weight: "w".into(),
                bias: Some("bias".into()),
            }],
        },
    )
    .unwrap()
}

pub fn bits_equal(a: &ModelBundle, b: &ModelBundle) -> bool {
    a.layers().len() == b.layers().len()
        && a.layers().iter().zip(b.layers()).all(|(x, y)| {
            x.name() == y.name()
                && x.shape() == y.shape()
                && x.role() == y.role()
                && x.data().iter().zip(y.data()).all(|(p, q)| p.to_bits() == q.to_bits())
        })
        && a.manifest() == b.manifest()
}
