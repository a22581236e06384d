//! Bundled fixture corpus: synthetic blob scenes, a hand-weighted CNN, and
//! the writer that lays them out as a fixture directory.

pub mod model;
pub mod scenes;

use std::fs;
use std::path::Path;

use kpcacam::backend::Manifest;
use kpcacam::npy::save_npy;
use kpcacam::{BoundingBox, Error, GroundTruth, Result};
use ndarray::Array1;

use model::{ToyWeights, ACTIVATION_LAYER, INPUT_SHAPE, LOGITS_OUTPUT, NUM_CLASSES};

pub const MODEL_FILE: &str = "model.onnx";

fn write(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

pub fn manifest(image_ids: Vec<String>) -> Manifest {
    Manifest {
        model_name: Some("toy-blobs-cnn".into()),
        activation_layer_name: ACTIVATION_LAYER.into(),
        input_shape: INPUT_SHAPE,
        num_classes: NUM_CLASSES,
        preprocessing: Some(serde_json::json!({
            "resize": "none",
            "mean": [0.0, 0.0, 0.0],
            "std": [1.0, 1.0, 1.0],
            "note": "synthetic images rendered directly in [0, 1]",
        })),
        image_ids,
        model_file: Some(MODEL_FILE.into()),
        logits_output: Some(LOGITS_OUTPUT.into()),
        value_range: Some([0.0, 1.0]),
    }
}

/// Writes `manifest.json`, `model.onnx` and one directory per scene into
/// `out`. Logits and activations come from the f64 reference forward pass.
pub fn write_corpus(out: &Path) -> Result<()> {
    fs::create_dir_all(out).map_err(|e| Error::Io {
        path: out.to_path_buf(),
        source: e,
    })?;
    let weights = ToyWeights::default();
    write(&out.join(MODEL_FILE), &model::onnx_model(&weights))?;

    let scenes = scenes::scenes();
    for (i, scene) in scenes.iter().enumerate() {
        let dir = out.join(&scene.image_id);
        fs::create_dir_all(&dir).map_err(|e| Error::Io {
            path: dir.clone(),
            source: e,
        })?;
        let image = scene.render(i as u64);
        let (logits, act) = model::forward(&weights, &image);
        save_npy(&image.into_dyn(), dir.join("image.npy"))?;
        save_npy(&act.into_dyn(), dir.join("activations.npy"))?;
        save_npy(&Array1::from(logits).into_dyn(), dir.join("logits.npy"))?;
        let gt = GroundTruth {
            image_id: scene.image_id.clone(),
            class_index: scene.class_index,
            boxes: scene
                .gt_boxes()
                .into_iter()
                .map(|[x0, y0, x1, y1]| BoundingBox::new(x0, y0, x1, y1))
                .collect::<Result<_>>()?,
            original_size: None,
        };
        let json = serde_json::to_string_pretty(&gt).expect("serializable");
        write(&dir.join("gt.json"), format!("{json}\n").as_bytes())?;
    }

    let m = manifest(scenes.into_iter().map(|s| s.image_id).collect());
    let json = serde_json::to_string_pretty(&m).expect("serializable");
    write(&out.join(kpcacam::backend::MANIFEST_FILE), format!("{json}\n").as_bytes())
}
