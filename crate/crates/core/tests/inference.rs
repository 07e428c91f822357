mod common;

use lego::inference::{forward, forward_batch, output_deviation, probe_inputs, top1_accuracy};
use lego::{ArchManifest, DatasetBundle, LayerSpec, ModelBundle, Role, Tensor};
use rand::Rng;

/// Direct cross-correlation, one output element at a time.
#[allow(clippy::too_many_arguments)]
fn conv_oracle(
    x: &[f32],
    c: usize,
    h: usize,
    w: usize,
    wt: &[f32],
    o: usize,
    k: usize,
    stride: usize,
    pad: usize,
) -> Vec<f32> {
    let oh = (h + 2 * pad - k) / stride + 1;
    let ow = (w + 2 * pad - k) / stride + 1;
    let mut out = vec![];
    for oc in 0..o {
        for oy in 0..oh {
            for ox in 0..ow {
                let mut acc = 0.0f32;
                for ic in 0..c {
                    for ky in 0..k {
                        for kx in 0..k {
                            let iy = (oy * stride + ky) as isize - pad as isize;
                            let ix = (ox * stride + kx) as isize - pad as isize;
                            if iy >= 0 && ix >= 0 && (iy as usize) < h && (ix as usize) < w {
                                acc +=
                                    wt[((oc * c + ic) * k + ky) * k + kx] * x[(ic * h + iy as usize) * w + ix as usize];
                            }
                        }
                    }
                }
                out.push(acc);
            }
        }
    }
    out
}

#[test]
fn conv_matches_direct_loops() {
    let mut r = common::rng(17);
    for case in 0..60 {
        let c = r.random_range(1..=3);
        let h = r.random_range(3..=8);
        let w = r.random_range(3..=8);
        let k = r.random_range(1..=3);
        let o = r.random_range(1..=4);
        let stride = r.random_range(1..=2);
        let pad = r.random_range(0..=1);
        let weight = common::random_tensor(&mut r, "w", Role::Weight, vec![o, c, k, k]);
        let x = common::random_tensor(&mut r, "x", Role::Other, vec![c, h, w]);
        let m = ModelBundle::new(
            vec![weight.clone()],
            ArchManifest {
                input_shape: None,
                layers: vec![LayerSpec::Conv2d {
                    in_channels: c,
                    out_channels: o,
                    kernel_h: k,
                    kernel_w: k,
                    stride,
                    padding: pad,
                    weight: "w".into(),
                    bias: None,
                }],
            },
        )
        .unwrap();
        let got = forward(&m, &x).unwrap();
        let want = conv_oracle(x.data(), c, h, w, weight.data(), o, k, stride, pad);
        assert_eq!(got.len(), want.len(), "case {case}");
        for (a, b) in got.data().iter().zip(&want) {
            assert!((a - b).abs() <= 1e-6, "case {case}: {a} vs {b}");
        }
    }
}

#[test]
fn dense_stack_is_linear() {
    let mut r = common::rng(3);
    let m = ModelBundle::new(
        vec![
            common::random_tensor(&mut r, "a", Role::Weight, vec![6, 8]),
            common::random_tensor(&mut r, "b", Role::Weight, vec![3, 6]),
        ],
        ArchManifest {
            input_shape: None,
            layers: vec![
                LayerSpec::Dense { in_features: 8, out_features: 6, weight: "a".into(), bias: None },
                LayerSpec::Dense { in_features: 6, out_features: 3, weight: "b".into(), bias: None },
            ],
        },
    )
    .unwrap();
    let x = common::random_tensor(&mut r, "x", Role::Other, vec![8]);
    for alpha in [0.5f32, 2.0, -3.0] {
        let scaled = x.with_data(x.data().iter().map(|v| v * alpha).collect()).unwrap();
        let fx = forward(&m, &x).unwrap();
        let fax = forward(&m, &scaled).unwrap();
        for (a, b) in fax.data().iter().zip(fx.data()) {
            assert!((a - alpha * b).abs() <= 1e-5 * (alpha * b).abs().max(1e-3));
        }
    }
}

#[test]
fn mnist_logits_match_reference() {
    let m = common::mnist_model();
    let ds = common::mnist_dataset();
    let reference: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(common::fixture("mnist_cnn_ref_logits.json")).unwrap()).unwrap();
    let rows = reference["logits"].as_array().unwrap();
    assert_eq!(rows.len(), 10);
    for (i, row) in rows.iter().enumerate() {
        let x = Tensor::new("x", Role::Other, ds.sample_shape().to_vec(), ds.sample(i).to_vec()).unwrap();
        let got = forward(&m, &x).unwrap();
        for (a, b) in got.data().iter().zip(row.as_array().unwrap()) {
            assert!((*a as f64 - b.as_f64().unwrap()).abs() <= 1e-4, "sample {i}");
        }
    }
}

#[test]
fn mnist_baseline_accuracy_is_pinned() {
    // committed baseline from the fixture's reference run
    let acc = top1_accuracy(&common::mnist_model(), &common::mnist_dataset()).unwrap();
    assert_eq!(acc, 97.2);
}

#[test]
fn accuracy_edges() {
    let m = ModelBundle::new(
        vec![
            Tensor::zeros("w", Role::Weight, vec![3, 2]).unwrap(),
            Tensor::new("b", Role::Bias, vec![3], vec![1.0, 0.0, 0.0]).unwrap(),
        ],
        ArchManifest {
            input_shape: None,
            layers: vec![LayerSpec::Dense {
                in_features: 2,
                out_features: 3,
                weight: "w".into(),
                bias: Some("b".into()),
            }],
        },
    )
    .unwrap();
    let x = Tensor::zeros("x", Role::Other, vec![4, 2]).unwrap();
    let right = DatasetBundle::new(x.clone(), vec![0; 4], 3).unwrap();
    let wrong = DatasetBundle::new(x, vec![1, 2, 1, 2], 3).unwrap();
    assert_eq!(top1_accuracy(&m, &right).unwrap(), 100.0);
    assert_eq!(top1_accuracy(&m, &wrong).unwrap(), 0.0);
}

#[test]
fn deviation_is_a_continuous_symmetric_distance() {
    let m1 = common::small_cnn(4);
    let probes = probe_inputs(&m1, 32, 1).unwrap();
    assert_eq!(output_deviation(&m1, &m1, &probes).unwrap(), 0.0);

    let nudge = |delta: f32| {
        let mut layers = m1.layers().to_vec();
        let mut data = layers[2].data().to_vec();
        data[5] += delta;
        layers[2] = layers[2].with_data(data).unwrap();
        m1.with_layers(layers).unwrap()
    };
    let big = output_deviation(&m1, &nudge(1e-2), &probes).unwrap();
    let small = output_deviation(&m1, &nudge(1e-4), &probes).unwrap();
    assert!(big > 0.0 && small > 0.0);
    assert!(small < big / 10.0);
    let m2 = nudge(1e-2);
    assert_eq!(output_deviation(&m1, &m2, &probes).unwrap(), output_deviation(&m2, &m1, &probes).unwrap());

    let other = common::tiled_model(4, 1);
    assert!(output_deviation(&m1, &other, &probes).is_err());
}

#[test]
fn batch_forward_ignores_thread_count() {
    let m = common::mnist_model();
    let ds = common::mnist_dataset();
    let run = |n| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .unwrap()
            .install(|| forward_batch(&m, ds.inputs()).unwrap())
    };
    let one = run(1);
    assert_eq!(run(3), one);
}
