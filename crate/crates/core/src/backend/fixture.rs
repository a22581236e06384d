use std::collections::HashSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{BackendMetadata, InferenceBackend, OnnxBackend};
use crate::error::{Error, Result};
use crate::localization::GroundTruth;
use crate::npy;
use crate::tensor::{ActivationTensor, ImageTensor};

pub const MANIFEST_FILE: &str = "manifest.json";

/// Top-level `manifest.json` of a fixture directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model_name: Option<String>,
    pub activation_layer_name: String,
    /// `[channels, height, width]` of every `image.npy`.
    pub input_shape: [usize; 3],
    pub num_classes: usize,
    /// Free-form description of the resize/mean/std applied before dumping.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub preprocessing: Option<serde_json::Value>,
    pub image_ids: Vec<String>,
    /// ONNX graph producing the dumps, relative to the manifest.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model_file: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub logits_output: Option<String>,
    /// Nominal `[lo, hi]` of image values; defaults to each image's min/max.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub value_range: Option<[f64; 2]>,
}

impl Manifest {
    pub fn validate(&self) -> Result<()> {
        if self.image_ids.is_empty() {
            return Err(Error::Config("manifest lists no images".into()));
        }
        let mut seen = HashSet::new();
        for id in &self.image_ids {
            if id.is_empty() || id.contains(['/', '\\']) || id == "." || id == ".." {
                return Err(Error::Config(format!("invalid image id '{id}'")));
            }
            if !seen.insert(id) {
                return Err(Error::Config(format!("duplicate image id '{id}'")));
            }
        }
        if self.num_classes == 0 {
            return Err(Error::Config("num_classes must be positive".into()));
        }
        let [c, h, w] = self.input_shape;
        if !(c == 1 || c == 3) || h == 0 || w == 0 {
            return Err(Error::Config(format!("bad input_shape {:?}", self.input_shape)));
        }
        if self.activation_layer_name.is_empty() {
            return Err(Error::Config("activation_layer_name is empty".into()));
        }
        Ok(())
    }
}

/// One image's dumps. Activations and logits are optional so that the same
/// layout can feed a live backend.
#[derive(Debug, Clone)]
pub struct FixtureRecord {
    pub image_id: String,
    pub image: ImageTensor,
    pub activations: Option<ActivationTensor>,
    pub logits: Option<Vec<f64>>,
    pub gt: Option<GroundTruth>,
}

/// A loaded fixture directory: `manifest.json` plus one
/// `<image_id>/{image.npy, activations.npy, logits.npy, gt.json}` per image.
#[derive(Debug, Clone)]
pub struct FixtureCorpus {
    root: PathBuf,
    manifest: Manifest,
    manifest_sha256: String,
    records: Vec<FixtureRecord>,
}

fn optional<T>(path: &Path, load: impl FnOnce(&Path) -> Result<T>) -> Result<Option<T>> {
    if path.exists() {
        load(path).map(Some)
    } else {
        Ok(None)
    }
}

impl FixtureCorpus {
    pub fn open(root: impl AsRef<Path>) -> Result<Self> {
        let root = root.as_ref().to_path_buf();
        let manifest_path = root.join(MANIFEST_FILE);
        let bytes = std::fs::read(&manifest_path).map_err(|e| Error::io(&manifest_path, e))?;
        let manifest: Manifest = serde_json::from_slice(&bytes)
            .map_err(|e| Error::Config(format!("{}: {e}", manifest_path.display())))?;
        manifest.validate()?;
        let manifest_sha256 = Sha256::digest(&bytes)
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect();

        let value_range = manifest.value_range.map(|[lo, hi]| (lo, hi));
        let mut activation_shape = None;
        let mut records = Vec::with_capacity(manifest.image_ids.len());
        for id in &manifest.image_ids {
            let dir = root.join(id);
            let image = npy::load_image(dir.join("image.npy"), value_range)?;
            if image.shape() != manifest.input_shape {
                return Err(Error::Config(format!(
                    "{id}: image shape {:?} does not match manifest input_shape {:?}",
                    image.shape(),
                    manifest.input_shape
                )));
            }
            let activations = optional(&dir.join("activations.npy"), |p| npy::load_activations(p))?;
            if let Some(a) = &activations {
                let shape = (a.channels(), a.height(), a.width());
                if *activation_shape.get_or_insert(shape) != shape {
                    return Err(Error::Config(format!("{id}: activation shape {shape:?} differs from other images")));
                }
            }
            let logits = optional(&dir.join("logits.npy"), |p| npy::load_vector(p))?;
            if let Some(l) = &logits {
                if l.len() != manifest.num_classes {
                    return Err(Error::Config(format!(
                        "{id}: {} logits for {} classes",
                        l.len(),
                        manifest.num_classes
                    )));
                }
            }
            let gt = optional(&dir.join("gt.json"), |p| GroundTruth::load(p))?;
            if let Some(g) = &gt {
                if g.image_id != *id {
                    return Err(Error::Config(format!("{id}: gt.json names image '{}'", g.image_id)));
                }
                if g.class_index >= manifest.num_classes {
                    return Err(Error::Config(format!("{id}: gt class {} out of range", g.class_index)));
                }
            }
            records.push(FixtureRecord {
                image_id: id.clone(),
                image,
                activations,
                logits,
                gt,
            });
        }

        Ok(Self {
            root,
            manifest,
            manifest_sha256,
            records,
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn manifest(&self) -> &Manifest {
        &self.manifest
    }

    /// Hex SHA-256 of the raw manifest bytes.
    pub fn manifest_sha256(&self) -> &str {
        &self.manifest_sha256
    }

    pub fn records(&self) -> &[FixtureRecord] {
        &self.records
    }

    pub fn record(&self, image_id: &str) -> Option<&FixtureRecord> {
        self.records.iter().find(|r| r.image_id == image_id)
    }

    pub fn model_path(&self) -> Option<PathBuf> {
        self.manifest.model_file.as_ref().map(|f| self.root.join(f))
    }

    pub fn load_model(&self) -> Result<Option<OnnxBackend>> {
        self.model_path()
            .map(|path| {
                OnnxBackend::load(
                    path,
                    self.manifest.input_shape,
                    &self.manifest.activation_layer_name,
                    self.manifest.logits_output.as_deref(),
                )
            })
            .transpose()
    }
}

/// Replays stored logits and activations for images of the corpus.
///
/// Lookup is by bitwise image equality. Images not in the corpus (e.g. ones
/// altered by occlusion) are forwarded to the live model when one is
/// attached, and rejected otherwise.
pub struct FixtureBackend {
    corpus: FixtureCorpus,
    meta: BackendMetadata,
    live: Option<OnnxBackend>,
}

impl FixtureBackend {
    pub fn new(corpus: FixtureCorpus, live: Option<OnnxBackend>) -> Result<Self> {
        let m = corpus.manifest();
        let meta = BackendMetadata {
            num_classes: m.num_classes,
            input_shape: m.input_shape,
            activation_layer_name: m.activation_layer_name.clone(),
        };
        for r in corpus.records() {
            if r.activations.is_none() || r.logits.is_none() {
                return Err(Error::Config(format!(
                    "{}: fixture backend needs activations.npy and logits.npy",
                    r.image_id
                )));
            }
        }
        if let Some(model) = &live {
            if *model.metadata() != meta {
                return Err(Error::Config(format!(
                    "live model metadata {:?} disagrees with manifest {:?}",
                    model.metadata(),
                    meta
                )));
            }
        }
        Ok(Self { corpus, meta, live })
    }

    /// Opens a fixture directory, attaching the manifest's model (if any)
    /// for images outside the corpus.
    pub fn open(root: impl AsRef<Path>) -> Result<Self> {
        let corpus = FixtureCorpus::open(root)?;
        let live = corpus.load_model()?;
        Self::new(corpus, live)
    }

    pub fn corpus(&self) -> &FixtureCorpus {
        &self.corpus
    }

    fn lookup(&self, image: &ImageTensor) -> Option<&FixtureRecord> {
        self.corpus.records().iter().find(|r| {
            r.image
                .view()
                .iter()
                .zip(image.view().iter())
                .all(|(a, b)| a.to_bits() == b.to_bits())
        })
    }

    fn live(&self) -> Result<&OnnxBackend> {
        self.live.as_ref().ok_or_else(|| {
            Error::Backend("image is not part of the fixture corpus and no live model is attached".into())
        })
    }
}

impl InferenceBackend for FixtureBackend {
    fn metadata(&self) -> &BackendMetadata {
        &self.meta
    }

    fn predict(&self, image: &ImageTensor) -> Result<Vec<f64>> {
        self.meta.check_input(image)?;
        match self.lookup(image) {
            Some(r) => Ok(r.logits.clone().expect("checked in new")),
            None => self.live()?.predict(image),
        }
    }

    fn extract_activations(&self, image: &ImageTensor) -> Result<ActivationTensor> {
        self.meta.check_input(image)?;
        match self.lookup(image) {
            Some(r) => Ok(r.activations.clone().expect("checked in new")),
            None => self.live()?.extract_activations(image),
        }
    }
}
