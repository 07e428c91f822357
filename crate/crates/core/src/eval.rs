//! Scoring functions used to compare a compressed model against the original.
//! Every evaluator is "higher is better".

use crate::error::Result;
use crate::inference::{output_deviation, probe_inputs, top1_accuracy};
use crate::model::{DatasetBundle, ModelBundle};
use crate::tensor::Tensor;

pub const DEFAULT_PROBES: usize = 128;

pub trait Evaluator: Send + Sync {
    fn name(&self) -> &'static str;
    fn score(&self, model: &ModelBundle) -> Result<f64>;
}

/// Top-1 accuracy in percent on a labelled dataset.
pub struct Top1Accuracy {
    dataset: DatasetBundle,
}

impl Top1Accuracy {
    pub fn new(dataset: DatasetBundle) -> Self {
        Top1Accuracy { dataset }
    }
}

impl Evaluator for Top1Accuracy {
    fn name(&self) -> &'static str {
        "top1_accuracy"
    }

    fn score(&self, model: &ModelBundle) -> Result<f64> {
        top1_accuracy(model, &self.dataset)
    }
}

/// Negated mean logit distance to a reference model on seeded random probes.
/// The reference scores exactly 0.
pub struct NegOutputDeviation {
    reference: ModelBundle,
    probes: Tensor,
}

impl NegOutputDeviation {
    pub fn new(reference: ModelBundle, probes: Tensor) -> Self {
        NegOutputDeviation { reference, probes }
    }

    pub fn seeded(reference: ModelBundle, count: usize, seed: u64) -> Result<Self> {
        let probes = probe_inputs(&reference, count, seed)?;
        Ok(Self::new(reference, probes))
    }
}

impl Evaluator for NegOutputDeviation {
    fn name(&self) -> &'static str {
        "neg_output_deviation"
    }

    fn score(&self, model: &ModelBundle) -> Result<f64> {
        Ok(-output_deviation(&self.reference, model, &self.probes)?)
    }
}

/// Accuracy when a dataset is available, otherwise the data-free deviation proxy.
pub fn default_evaluator(model: &ModelBundle, dataset: Option<DatasetBundle>, seed: u64) -> Result<Box<dyn Evaluator>> {
    Ok(match dataset {
        Some(ds) => Box::new(Top1Accuracy::new(ds)),
        None => Box::new(NegOutputDeviation::seeded(model.clone(), DEFAULT_PROBES, seed)?),
    })
}
