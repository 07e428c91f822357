//! Tiling weight matrices into `b x b` blocks and stitching them back.
//!
//! Every weight tensor is viewed as a 2D row-major matrix (see
//! [`flatten_to_matrix`]) and cut into non-overlapping blocks. Blocks are
//! ordered by layer, then row-major over the block grid of that layer. Layers
//! whose matrix is not divisible by `b` in both directions are left raw.

use crate::error::{Error, Result};
use crate::model::ModelBundle;
use crate::tensor::{Role, Tensor};

/// Borrowed 2D view of a tensor.
#[derive(Debug, Clone, Copy)]
pub struct MatrixView<'a> {
    pub rows: usize,
    pub cols: usize,
    pub data: &'a [f32],
}

impl MatrixView<'_> {
    pub fn at(&self, r: usize, c: usize) -> f32 {
        self.data[r * self.cols + c]
    }
}

/// `[n] -> [1, n]`, `[r, c] -> [r, c]`, `[o, i, kh, kw] -> [o, i*kh*kw]`.
pub fn matrix_dims(shape: &[usize]) -> Result<(usize, usize)> {
    match *shape {
        [n] => Ok((1, n)),
        [r, c] => Ok((r, c)),
        [o, i, kh, kw] => Ok((o, i * kh * kw)),
        _ => Err(Error::UnsupportedRank(shape.len())),
    }
}

pub fn flatten_to_matrix(t: &Tensor) -> Result<MatrixView<'_>> {
    if t.role() != Role::Weight {
        return Err(Error::InvalidArgument(format!("{:?} is not a weight tensor", t.name())));
    }
    let (rows, cols) = matrix_dims(t.shape())?;
    Ok(MatrixView { rows, cols, data: t.data() })
}

/// Position of a block inside the model.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BlockOrigin {
    pub layer_index: usize,
    pub block_row: usize,
    pub block_col: usize,
}

/// Block grid of one clustered layer.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LayerGrid {
    pub layer_index: usize,
    pub rows_in_blocks: usize,
    pub cols_in_blocks: usize,
}

impl LayerGrid {
    pub fn block_count(&self) -> usize {
        self.rows_in_blocks * self.cols_in_blocks
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SkippedLayer {
    pub layer_index: usize,
    pub reason: String,
}

/// Where blocks live, without their values. Enough to rebuild a model.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BlockLayout {
    pub b: usize,
    pub grids: Vec<LayerGrid>,
    pub skipped: Vec<SkippedLayer>,
}

impl BlockLayout {
    pub fn block_count(&self) -> usize {
        self.grids.iter().map(LayerGrid::block_count).sum()
    }

    pub fn block_dim(&self) -> usize {
        self.b * self.b
    }
}

/// All blocks of a model in canonical order, stored contiguously.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockSet {
    layout: BlockLayout,
    values: Vec<f32>,
    origins: Vec<BlockOrigin>,
}

impl BlockSet {
    /// Blocks from raw vectors, with no model behind them.
    pub fn from_vectors(b: usize, values: Vec<f32>) -> Result<Self> {
        let dim = b * b;
        if dim == 0 || !values.len().is_multiple_of(dim) {
            return Err(Error::DimensionMismatch { expected: dim, actual: values.len() });
        }
        let n = values.len() / dim;
        let origins = (0..n).map(|i| BlockOrigin { layer_index: 0, block_row: 0, block_col: i }).collect();
        let layout = BlockLayout {
            b,
            grids: vec![LayerGrid { layer_index: 0, rows_in_blocks: 1, cols_in_blocks: n }],
            skipped: vec![],
        };
        Ok(BlockSet { layout, values, origins })
    }

    pub fn b(&self) -> usize {
        self.layout.b
    }

    pub fn dim(&self) -> usize {
        self.layout.block_dim()
    }

    pub fn len(&self) -> usize {
        self.origins.len()
    }

    pub fn is_empty(&self) -> bool {
        self.origins.is_empty()
    }

    pub fn block(&self, i: usize) -> &[f32] {
        let d = self.dim();
        &self.values[i * d..(i + 1) * d]
    }

    pub fn iter(&self) -> impl Iterator<Item = &[f32]> {
        self.values.chunks_exact(self.dim())
    }

    /// All block values, `len() * b*b` floats.
    pub fn values(&self) -> &[f32] {
        &self.values
    }

    pub fn origins(&self) -> &[BlockOrigin] {
        &self.origins
    }

    pub fn layout(&self) -> &BlockLayout {
        &self.layout
    }

    pub fn grids(&self) -> &[LayerGrid] {
        &self.layout.grids
    }

    pub fn skipped(&self) -> &[SkippedLayer] {
        &self.layout.skipped
    }

    /// Elements covered by blocks.
    pub fn covered_params(&self) -> usize {
        self.values.len()
    }
}

/// Tiles every divisible weight layer of `model` into `b x b` blocks.
pub fn breakup(model: &ModelBundle, b: usize) -> Result<BlockSet> {
    if b == 0 {
        return Err(Error::InvalidArgument("block size b must be >= 1".into()));
    }
    let mut layout = BlockLayout { b, grids: vec![], skipped: vec![] };
    let mut values = Vec::new();
    let mut origins = Vec::new();
    for (layer_index, t) in model.layers().iter().enumerate() {
        if t.role() != Role::Weight {
            continue;
        }
        let m = match flatten_to_matrix(t) {
            Ok(m) => m,
            Err(e) => {
                layout.skipped.push(SkippedLayer { layer_index, reason: e.to_string() });
                continue;
            }
        };
        if m.rows % b != 0 || m.cols % b != 0 {
            layout.skipped.push(SkippedLayer {
                layer_index,
                reason: format!("{}x{} matrix is not divisible by b = {b}", m.rows, m.cols),
            });
            continue;
        }
        let grid = LayerGrid { layer_index, rows_in_blocks: m.rows / b, cols_in_blocks: m.cols / b };
        values.reserve(m.rows * m.cols);
        for block_row in 0..grid.rows_in_blocks {
            for block_col in 0..grid.cols_in_blocks {
                for i in 0..b {
                    let start = (block_row * b + i) * m.cols + block_col * b;
                    values.extend_from_slice(&m.data[start..start + b]);
                }
                origins.push(BlockOrigin { layer_index, block_row, block_col });
            }
        }
        layout.grids.push(grid);
    }
    Ok(BlockSet { layout, values, origins })
}

/// Writes one layer's blocks (canonical order, `b*b` floats each) back into a
/// row-major matrix of `rows_in_blocks*b x cols_in_blocks*b`.
pub(crate) fn scatter_blocks<'a>(
    grid: &LayerGrid,
    b: usize,
    mut blocks: impl Iterator<Item = &'a [f32]>,
    out: &mut [f32],
) {
    let cols = grid.cols_in_blocks * b;
    for block_row in 0..grid.rows_in_blocks {
        for block_col in 0..grid.cols_in_blocks {
            let block = blocks.next().expect("block count checked by caller");
            for i in 0..b {
                let start = (block_row * b + i) * cols + block_col * b;
                out[start..start + b].copy_from_slice(&block[i * b..(i + 1) * b]);
            }
        }
    }
}

/// Rebuilds a model from per-block values laid out like `layout`. Layers not
/// in the layout are copied from `template`.
pub fn reassemble_layout<'a>(
    layout: &BlockLayout,
    block_values: impl Fn(usize) -> &'a [f32],
    template: &ModelBundle,
) -> Result<ModelBundle> {
    let b = layout.b;
    let mut layers = template.layers().to_vec();
    let mut next = 0usize;
    for grid in &layout.grids {
        let t = layers
            .get_mut(grid.layer_index)
            .ok_or_else(|| Error::InvalidModel(format!("layout references missing layer {}", grid.layer_index)))?;
        let (rows, cols) = matrix_dims(t.shape())?;
        if rows != grid.rows_in_blocks * b || cols != grid.cols_in_blocks * b {
            return Err(Error::ShapeMismatch(format!(
                "layer {:?} is {rows}x{cols}, grid says {}x{} blocks of {b}",
                t.name(),
                grid.rows_in_blocks,
                grid.cols_in_blocks
            )));
        }
        let start = next;
        next += grid.block_count();
        scatter_blocks(grid, b, (start..next).map(&block_values), t.data_mut());
    }
    template.with_layers(layers)
}

/// Inverse of [`breakup`]: `values` holds `blocks.len() * b*b` floats in
/// canonical block order.
pub fn reassemble(blocks: &BlockSet, values: &[f32], template: &ModelBundle) -> Result<ModelBundle> {
    let dim = blocks.dim();
    if values.len() != blocks.len() * dim {
        return Err(Error::CountMismatch { expected: blocks.len() * dim, actual: values.len() });
    }
    reassemble_layout(blocks.layout(), |i| &values[i * dim..(i + 1) * dim], template)
}

/// Greatest common divisor of all weight-matrix dimensions: the largest `b`
/// that tiles every layer. `None` for a model without weights.
pub fn gcd_block_size(model: &ModelBundle) -> Option<usize> {
    fn gcd(a: usize, b: usize) -> usize {
        if b == 0 {
            a
        } else {
            gcd(b, a % b)
        }
    }
    model
        .layers()
        .iter()
        .filter(|t| t.role() == Role::Weight)
        .filter_map(|t| matrix_dims(t.shape()).ok())
        .flat_map(|(r, c)| [r, c])
        .reduce(gcd)
}
