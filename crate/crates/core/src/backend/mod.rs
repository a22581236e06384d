//! Sources of class scores and intermediate activations.
//!
//! [`FixtureBackend`] replays tensors dumped by an exporter;
//! [`OnnxBackend`] executes an ONNX graph whose target convolution output is
//! declared as an extra graph output.

mod fixture;
mod onnx;

pub use fixture::{FixtureBackend, FixtureCorpus, FixtureRecord, Manifest, MANIFEST_FILE};
pub use onnx::OnnxBackend;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{ActivationTensor, ImageTensor};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BackendMetadata {
    pub num_classes: usize,
    /// `[channels, height, width]` expected by `predict`.
    pub input_shape: [usize; 3],
    pub activation_layer_name: String,
}

impl BackendMetadata {
    pub fn check_input(&self, image: &ImageTensor) -> Result<()> {
        if image.shape() != self.input_shape {
            return Err(Error::Input(format!(
                "image shape {:?} does not match backend input {:?}",
                image.shape(),
                self.input_shape
            )));
        }
        Ok(())
    }
}

/// A classifier that can also report the activations of one layer.
///
/// Implementations must be deterministic: the same image always yields the
/// same logits and activations, whether calls are concurrent or not.
pub trait InferenceBackend: Send + Sync {
    fn metadata(&self) -> &BackendMetadata;

    /// Raw class scores, length `num_classes`.
    fn predict(&self, image: &ImageTensor) -> Result<Vec<f64>>;

    /// C×H×W output of the configured layer.
    fn extract_activations(&self, image: &ImageTensor) -> Result<ActivationTensor>;
}

/// Exponent-shifted softmax.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&l| (l - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

/// Indices of the `k` largest logits, descending; ties go to the lower index.
pub fn topk(logits: &[f64], k: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..logits.len()).collect();
    idx.sort_by(|&a, &b| logits[b].total_cmp(&logits[a]).then(a.cmp(&b)));
    idx.truncate(k);
    idx
}
