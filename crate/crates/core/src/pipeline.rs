//! End-to-end compression: break the model into blocks, cluster them,
//! pack the indices, and the inverse reconstruction.

use std::time::Instant;

use serde::Serialize;

use crate::blocking::{breakup, reassemble_layout, BlockSet};
use crate::clustering::{kmeans, KmeansParams, KmeansResult, DEFAULT_MAX_ITERS, DEFAULT_REL_TOL};
use crate::codec::{
    bits_per_index, codebook_bytes, encode_compressed, pack_indices, CompressedLayer, CompressedModel, RawLayer,
};
use crate::container::encode_model;
use crate::error::{Error, Result};
use crate::eval::Evaluator;
use crate::model::ModelBundle;
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CompressParams {
    pub k: usize,
    pub b: usize,
    pub seed: u64,
    pub max_iters: usize,
    pub rel_tol: f64,
}

impl CompressParams {
    pub fn new(k: usize, b: usize) -> Self {
        CompressParams { k, b, seed: 0, max_iters: DEFAULT_MAX_ITERS, rel_tol: DEFAULT_REL_TOL }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_k(mut self, k: usize) -> Self {
        self.k = k;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(Error::InvalidArgument("K must be >= 1".into()));
        }
        if self.b == 0 || self.b > u8::MAX as usize {
            return Err(Error::InvalidArgument(format!("b must be in 1..=255, got {}", self.b)));
        }
        if self.max_iters == 0 {
            return Err(Error::InvalidArgument("max_iters must be >= 1".into()));
        }
        if !(self.rel_tol >= 0.0 && self.rel_tol.is_finite()) {
            return Err(Error::InvalidArgument(format!("tolerance must be finite and >= 0, got {}", self.rel_tol)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SkippedReport {
    pub layer: String,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricReport {
    /// `top1_accuracy` (percent) or `neg_output_deviation`.
    pub kind: String,
    pub baseline: f64,
    pub compressed: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct StageTimings {
    pub breakup_s: f64,
    pub kmeans_s: f64,
    pub encode_s: f64,
    pub evaluate_s: f64,
    pub total_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CompressionReport {
    pub k: usize,
    pub b: usize,
    pub bits_per_index: u32,
    pub wordlength: u32,
    pub theoretical_cr: f64,
    /// Original `LGTW` bytes over `LGNC` bytes.
    pub effective_cr: f64,
    pub compressed_bits: u64,
    pub codebook_bits: u64,
    pub codebook_bytes: u64,
    pub original_file_bytes: usize,
    pub compressed_file_bytes: usize,
    pub block_count: usize,
    pub compressed_params: usize,
    pub raw_weight_params: usize,
    pub inertia: f64,
    pub kmeans_iterations: usize,
    pub converged: bool,
    pub skipped_layers: Vec<SkippedReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub metric: Option<MetricReport>,
    pub timings: StageTimings,
}

impl CompressionReport {
    /// Zeroes wall-clock fields so the report is byte-reproducible.
    pub fn without_timings(mut self) -> Self {
        self.timings = StageTimings::default();
        self
    }
}

/// Assembles the compressed representation from blocks and a clustering result.
pub fn assemble(model: &ModelBundle, blocks: &BlockSet, clusters: &KmeansResult) -> Result<CompressedModel> {
    let bits = bits_per_index(clusters.codebook.k());
    let indices = &clusters.assignment.indices;
    let mut compressed = Vec::with_capacity(blocks.grids().len());
    let mut is_compressed = vec![false; model.layers().len()];
    let mut next = 0;
    for grid in blocks.grids() {
        let t = &model.layers()[grid.layer_index];
        let n = grid.block_count();
        compressed.push(CompressedLayer {
            layer_index: grid.layer_index,
            name: t.name().to_string(),
            role: t.role(),
            shape: t.shape().to_vec(),
            rows_in_blocks: grid.rows_in_blocks,
            cols_in_blocks: grid.cols_in_blocks,
            stream: pack_indices(&indices[next..next + n], bits)?,
        });
        is_compressed[grid.layer_index] = true;
        next += n;
    }
    let raw = model
        .layers()
        .iter()
        .enumerate()
        .filter(|(i, _)| !is_compressed[*i])
        .map(|(layer_index, t)| RawLayer { layer_index, tensor: t.clone() })
        .collect();
    CompressedModel::new(
        clusters.codebook.clone(),
        crate::tensor::DType::F32.wordlength(),
        compressed,
        raw,
        model.manifest().clone(),
    )
}

/// Clusters all blocks of `model` into `params.k` legos.
pub fn compress(model: &ModelBundle, params: &CompressParams) -> Result<(CompressedModel, CompressionReport)> {
    params.validate()?;
    let start = Instant::now();
    let blocks = breakup(model, params.b)?;
    let breakup_s = start.elapsed().as_secs_f64();

    let t = Instant::now();
    let clusters = kmeans(
        &blocks,
        &KmeansParams { k: params.k, seed: params.seed, max_iters: params.max_iters, rel_tol: params.rel_tol },
    )?;
    let kmeans_s = t.elapsed().as_secs_f64();

    let t = Instant::now();
    let cm = assemble(model, &blocks, &clusters)?;
    let compressed_file_bytes = encode_compressed(&cm)?.len();
    let original_file_bytes = encode_model(model)?.len();
    let encode_s = t.elapsed().as_secs_f64();

    let cr = cm.cr();
    let report = CompressionReport {
        k: cm.k(),
        b: cm.b(),
        bits_per_index: cm.bits_per_index(),
        wordlength: cm.wordlength(),
        theoretical_cr: cr.theoretical_cr,
        effective_cr: original_file_bytes as f64 / compressed_file_bytes as f64,
        compressed_bits: cr.compressed_bits,
        codebook_bits: cr.codebook_bits,
        codebook_bytes: codebook_bytes(cm.k(), cm.b(), cm.wordlength()),
        original_file_bytes,
        compressed_file_bytes,
        block_count: blocks.len(),
        compressed_params: cm.compressed_params(),
        raw_weight_params: cm.raw_weight_params(),
        inertia: clusters.assignment.inertia,
        kmeans_iterations: clusters.iterations,
        converged: clusters.converged,
        skipped_layers: blocks
            .skipped()
            .iter()
            .map(|s| SkippedReport {
                layer: model.layers()[s.layer_index].name().to_string(),
                reason: s.reason.clone(),
            })
            .collect(),
        metric: None,
        timings: StageTimings {
            breakup_s,
            kmeans_s,
            encode_s,
            evaluate_s: 0.0,
            total_s: start.elapsed().as_secs_f64(),
        },
    };
    Ok((cm, report))
}

/// Dense model with every block region replaced by its lego.
pub fn reconstruct(cm: &CompressedModel) -> Result<ModelBundle> {
    let mut slots: Vec<Option<Tensor>> = vec![None; cm.total_layers()];
    for r in cm.raw_layers() {
        slots[r.layer_index] = Some(r.tensor.clone());
    }
    for l in cm.layers() {
        slots[l.layer_index] = Some(Tensor::zeros(l.name.clone(), l.role, l.shape.clone())?);
    }
    let tensors = slots.into_iter().map(|t| t.expect("layer indices validated")).collect();
    let template = ModelBundle::new(tensors, cm.manifest().clone())?;
    let indices = cm.all_indices()?;
    let codebook = cm.codebook();
    reassemble_layout(&cm.layout(), |i| codebook.lego(indices[i] as usize), &template)
}

/// Compresses, reconstructs and scores one K. `baseline` is the evaluator's
/// score on the original model.
pub fn compress_and_evaluate(
    model: &ModelBundle,
    params: &CompressParams,
    evaluator: &dyn Evaluator,
    baseline: f64,
) -> Result<(CompressedModel, CompressionReport)> {
    let (cm, mut report) = compress(model, params)?;
    let t = Instant::now();
    let score = evaluator.score(&reconstruct(&cm)?)?;
    report.timings.evaluate_s = t.elapsed().as_secs_f64();
    report.timings.total_s += report.timings.evaluate_s;
    report.metric = Some(MetricReport { kind: evaluator.name().to_string(), baseline, compressed: score });
    Ok((cm, report))
}

/// One report per K, in the given order.
pub fn sweep(
    model: &ModelBundle,
    base: &CompressParams,
    ks: &[usize],
    evaluator: Option<&dyn Evaluator>,
) -> Result<Vec<CompressionReport>> {
    let baseline = evaluator.map(|e| e.score(model)).transpose()?;
    ks.iter()
        .map(|&k| {
            let p = base.with_k(k);
            match (evaluator, baseline) {
                (Some(e), Some(b)) => compress_and_evaluate(model, &p, e, b).map(|r| r.1),
                _ => compress(model, &p).map(|r| r.1),
            }
        })
        .collect()
}

pub const CSV_HEADER: [&str; 7] = ["k", "b", "bits", "theoretical_cr", "metric", "inertia", "seconds"];

/// Writes sweep reports as CSV with columns [`CSV_HEADER`].
pub fn write_sweep_csv<W: std::io::Write>(out: W, reports: &[CompressionReport]) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(CSV_HEADER)?;
    for r in reports {
        w.write_record([
            r.k.to_string(),
            r.b.to_string(),
            r.bits_per_index.to_string(),
            r.theoretical_cr.to_string(),
            r.metric.as_ref().map(|m| m.compressed.to_string()).unwrap_or_default(),
            r.inertia.to_string(),
            format!("{:.6}", r.timings.total_s),
        ])?;
    }
    w.flush()?;
    Ok(())
}
