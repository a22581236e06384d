use std::path::Path;
use std::sync::Arc;

use ndarray::Array3;
use tract_onnx::prelude::*;

use super::{BackendMetadata, InferenceBackend};
use crate::error::{Error, Result};
use crate::tensor::{ActivationTensor, ImageTensor};

type Plan = Arc<TypedRunnableModel>;

/// Live executor for an ONNX classifier with one extra output exposing the
/// activation layer. Inputs are fed as a `1×C×H×W` f32 batch.
pub struct OnnxBackend {
    meta: BackendMetadata,
    plan: Plan,
    activation_shape: [usize; 3],
}

impl std::fmt::Debug for OnnxBackend {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("OnnxBackend")
            .field("meta", &self.meta)
            .field("activation_shape", &self.activation_shape)
            .finish()
    }
}

fn backend_err(context: &str) -> impl Fn(TractError) -> Error + '_ {
    move |e| Error::Backend(format!("{context}: {e:#}"))
}

impl OnnxBackend {
    /// Loads `path`, binding the input to `input_shape` and selecting the
    /// logits output plus `activation_layer_name`. When `logits_output` is
    /// `None` the first declared graph output other than the activation
    /// layer is used.
    pub fn load(
        path: impl AsRef<Path>,
        input_shape: [usize; 3],
        activation_layer_name: &str,
        logits_output: Option<&str>,
    ) -> Result<Self> {
        let path = path.as_ref();
        if !path.is_file() {
            return Err(Error::Config(format!("model file {} not found", path.display())));
        }
        let [c, h, w] = input_shape;
        let mut model = tract_onnx::onnx()
            .model_for_path(path)
            .map_err(backend_err("loading model"))?
            .with_input_fact(0, f32::fact([1, c, h, w]).into())
            .map_err(backend_err("binding input shape"))?;

        let resolve = |model: &InferenceModel, name: &str| -> Option<OutletId> {
            model
                .find_outlet_label(name)
                .or_else(|| model.node_by_name(name).ok().map(|n| OutletId::new(n.id, 0)))
        };
        let activation = resolve(&model, activation_layer_name).ok_or_else(|| {
            Error::Config(format!("activation layer '{activation_layer_name}' not found in graph"))
        })?;
        let logits = match logits_output {
            Some(name) => resolve(&model, name)
                .ok_or_else(|| Error::Config(format!("logits output '{name}' not found in graph")))?,
            None => model
                .output_outlets()
                .map_err(backend_err("reading outputs"))?
                .iter()
                .copied()
                .find(|o| *o != activation)
                .ok_or_else(|| Error::Config("graph declares no logits output".into()))?,
        };
        model
            .select_output_outlets(&[logits, activation])
            .map_err(backend_err("selecting outputs"))?;

        let typed = model
            .into_optimized()
            .map_err(backend_err("optimizing model"))?;
        let concrete = |ix: usize| -> Result<Vec<usize>> {
            let outlet = typed.output_outlets().map_err(backend_err("reading outputs"))?[ix];
            let fact = typed.outlet_fact(outlet).map_err(backend_err("reading output fact"))?;
            fact.shape
                .as_concrete()
                .map(|s| s.to_vec())
                .ok_or_else(|| Error::Backend(format!("output {ix} has a symbolic shape")))
        };
        let logits_shape = concrete(0)?;
        let activation_shape = match concrete(1)?.as_slice() {
            [1, c, h, w] => [*c, *h, *w],
            other => {
                return Err(Error::Config(format!(
                    "activation layer '{activation_layer_name}' has shape {other:?}, expected [1, C, H, W]"
                )))
            }
        };
        let num_classes = match logits_shape.as_slice() {
            [1, n] | [n] => *n,
            other => return Err(Error::Config(format!("logits have shape {other:?}, expected [1, N]"))),
        };
        let plan = typed.into_runnable().map_err(backend_err("building plan"))?;

        Ok(Self {
            meta: BackendMetadata {
                num_classes,
                input_shape,
                activation_layer_name: activation_layer_name.to_string(),
            },
            plan,
            activation_shape,
        })
    }

    fn run(&self, image: &ImageTensor) -> Result<(Vec<f64>, ActivationTensor)> {
        self.meta.check_input(image)?;
        let [c, h, w] = self.meta.input_shape;
        let input: Tensor = tract_ndarray::Array4::from_shape_fn((1, c, h, w), |(_, ci, y, x)| {
            image.view()[[ci, y, x]] as f32
        })
        .into();
        let outputs = self
            .plan
            .run(tvec!(input.into()))
            .map_err(backend_err("running model"))?;

        let logits = outputs[0]
            .to_plain_array_view::<f32>()
            .map_err(backend_err("reading logits"))?
            .iter()
            .map(|&v| f64::from(v))
            .collect();
        let act = outputs[1]
            .to_plain_array_view::<f32>()
            .map_err(backend_err("reading activations"))?;
        let [ac, ah, aw] = self.activation_shape;
        let act = Array3::from_shape_vec((ac, ah, aw), act.iter().map(|&v| f64::from(v)).collect())
            .map_err(|e| Error::Backend(format!("activation shape: {e}")))?;
        Ok((logits, ActivationTensor::new(act)?))
    }
}

impl InferenceBackend for OnnxBackend {
    fn metadata(&self) -> &BackendMetadata {
        &self.meta
    }

    fn predict(&self, image: &ImageTensor) -> Result<Vec<f64>> {
        self.run(image).map(|(logits, _)| logits)
    }

    fn extract_activations(&self, image: &ImageTensor) -> Result<ActivationTensor> {
        self.run(image).map(|(_, act)| act)
    }
}
