//! Kernel-PCA class activation maps and their evaluation.

pub mod backend;
pub mod cam;
pub mod eigen;
pub mod error;
pub mod kernel;
pub mod localization;
pub mod npy;
pub mod road;
pub mod tensor;

pub use backend::{BackendMetadata, FixtureBackend, FixtureCorpus, InferenceBackend, OnnxBackend};
pub use cam::{compute_cam, CamConfig, CamMethod};
pub use error::{Error, Result};
pub use kernel::{KernelConfig, KernelFamily};
pub use localization::{GroundTruth, LocalizationAccuracy, LocalizationRecord};
pub use road::{morf_confidence_drop, MorfConfig, RoadResult};
pub use tensor::{ActivationTensor, BoundingBox, Heatmap, ImageTensor};
