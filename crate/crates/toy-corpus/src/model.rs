//! A hand-weighted color-blob classifier.
//!
//! ```text
//! input  3×32×32 in [0, 1]
//! conv1  3→6, 3×3, pad 1     one detector per blob color
//! relu
//! conv2  6→8, 3×3, stride 2, pad 1
//!        0..6  per-color pooling
//!        6     objectness (any color)
//!        7     background (no color nearby)
//! relu   -> "last_conv", 8×16×16
//! global average pool, flatten
//! gemm   8→7  six color classes plus background
//! ```

use ndarray::{Array1, Array2, Array3, Array4};
use prost::Message;
use tract_onnx::pb::{
    attribute_proto::AttributeType, tensor_proto::DataType, tensor_shape_proto::dimension,
    tensor_shape_proto::Dimension, type_proto, AttributeProto, GraphProto, ModelProto, NodeProto,
    OperatorSetIdProto, TensorProto, TensorShapeProto, TypeProto, ValueInfoProto,
};

pub const INPUT_SHAPE: [usize; 3] = [3, SIZE, SIZE];
pub const SIZE: usize = 32;
pub const FEATURE_SIZE: usize = 16;
pub const FEATURE_CHANNELS: usize = 8;
pub const NUM_CLASSES: usize = 7;
pub const BACKGROUND_CLASS: usize = 6;
pub const ACTIVATION_LAYER: &str = "last_conv";
pub const LOGITS_OUTPUT: &str = "logits";

/// Presence pattern `[r, g, b]` of each color class.
pub const COLORS: [[bool; 3]; 6] = [
    [true, false, false],
    [false, true, false],
    [false, false, true],
    [true, true, false],
    [true, false, true],
    [false, true, true],
];

pub const CLASS_NAMES: [&str; NUM_CLASSES] =
    ["red", "green", "blue", "yellow", "magenta", "cyan", "background"];

/// Network parameters. Stored as f32 so the ONNX graph and the f64
/// reference forward pass use identical weights.
#[derive(Debug, Clone)]
pub struct ToyWeights {
    pub conv1_w: Array4<f32>,
    pub conv1_b: Array1<f32>,
    pub conv2_w: Array4<f32>,
    pub conv2_b: Array1<f32>,
    pub fc_w: Array2<f32>,
    pub fc_b: Array1<f32>,
}

impl Default for ToyWeights {
    fn default() -> Self {
        let mut conv1_w = Array4::zeros((6, 3, 3, 3));
        let mut conv1_b = Array1::zeros(6);
        for (k, color) in COLORS.iter().enumerate() {
            let present = color.iter().filter(|&&p| p).count();
            // single-color detectors are scaled up to match the two-color ones
            let (gain, bias) = if present == 1 { (5.0 / 3.0, -2.0 / 3.0) } else { (1.0, -1.2) };
            for (ch, &p) in color.iter().enumerate() {
                let s = if p { 1.0 } else { -1.0 };
                conv1_w
                    .slice_mut(ndarray::s![k, ch, .., ..])
                    .fill((gain * s / 9.0) as f32);
            }
            conv1_b[k] = bias as f32;
        }

        let mut conv2_w = Array4::zeros((FEATURE_CHANNELS, 6, 3, 3));
        let mut conv2_b = Array1::zeros(FEATURE_CHANNELS);
        for k in 0..6 {
            conv2_w.slice_mut(ndarray::s![k, k, .., ..]).fill(1.0 / 9.0);
            conv2_w.slice_mut(ndarray::s![6, k, .., ..]).fill(1.0 / 9.0);
            conv2_w.slice_mut(ndarray::s![7, k, .., ..]).fill(-1.0 / 9.0);
        }
        conv2_b[7] = 0.1;

        let mut fc_w = Array2::zeros((NUM_CLASSES, FEATURE_CHANNELS));
        for k in 0..6 {
            fc_w[[k, k]] = 150.0;
        }
        fc_w[[BACKGROUND_CLASS, 7]] = 20.0;
        let fc_b = Array1::zeros(NUM_CLASSES);

        Self {
            conv1_w,
            conv1_b,
            conv2_w,
            conv2_b,
            fc_w,
            fc_b,
        }
    }
}

fn conv2d(input: &Array3<f64>, w: &Array4<f32>, b: &Array1<f32>, stride: usize) -> Array3<f64> {
    let (cin, h, wd) = input.dim();
    let (cout, _, kh, kw) = w.dim();
    let (oh, ow) = ((h + 2 - kh) / stride + 1, (wd + 2 - kw) / stride + 1);
    Array3::from_shape_fn((cout, oh, ow), |(o, y, x)| {
        let mut acc = f64::from(b[o]);
        for c in 0..cin {
            for dy in 0..kh {
                for dx in 0..kw {
                    let (iy, ix) = ((y * stride + dy) as i64 - 1, (x * stride + dx) as i64 - 1);
                    if iy < 0 || ix < 0 || iy >= h as i64 || ix >= wd as i64 {
                        continue;
                    }
                    acc += f64::from(w[[o, c, dy, dx]]) * input[[c, iy as usize, ix as usize]];
                }
            }
        }
        acc
    })
}

fn relu(mut a: Array3<f64>) -> Array3<f64> {
    a.mapv_inplace(|v| v.max(0.0));
    a
}

/// f64 reference forward pass: `(logits, last_conv activations)`.
pub fn forward(weights: &ToyWeights, image: &Array3<f64>) -> (Vec<f64>, Array3<f64>) {
    let h1 = relu(conv2d(image, &weights.conv1_w, &weights.conv1_b, 1));
    let act = relu(conv2d(&h1, &weights.conv2_w, &weights.conv2_b, 2));
    let pooled: Vec<f64> = act.outer_iter().map(|plane| plane.mean().expect("non-empty")).collect();
    let logits = (0..NUM_CLASSES)
        .map(|k| {
            f64::from(weights.fc_b[k])
                + pooled
                    .iter()
                    .enumerate()
                    .map(|(c, p)| f64::from(weights.fc_w[[k, c]]) * p)
                    .sum::<f64>()
        })
        .collect();
    (logits, act)
}

fn initializer(name: &str, dims: &[usize], values: impl IntoIterator<Item = f32>) -> TensorProto {
    TensorProto {
        name: name.into(),
        dims: dims.iter().map(|&d| d as i64).collect(),
        data_type: DataType::Float as i32,
        float_data: values.into_iter().collect(),
        ..Default::default()
    }
}

fn value_info(name: &str, dims: &[usize]) -> ValueInfoProto {
    let dim = dims
        .iter()
        .map(|&d| Dimension {
            value: Some(dimension::Value::DimValue(d as i64)),
            ..Default::default()
        })
        .collect();
    ValueInfoProto {
        name: name.into(),
        r#type: Some(TypeProto {
            value: Some(type_proto::Value::TensorType(type_proto::Tensor {
                elem_type: DataType::Float as i32,
                shape: Some(TensorShapeProto { dim }),
            })),
            ..Default::default()
        }),
        ..Default::default()
    }
}

fn ints(name: &str, values: &[i64]) -> AttributeProto {
    AttributeProto {
        name: name.into(),
        r#type: AttributeType::Ints as i32,
        ints: values.to_vec(),
        ..Default::default()
    }
}

fn int(name: &str, value: i64) -> AttributeProto {
    AttributeProto {
        name: name.into(),
        r#type: AttributeType::Int as i32,
        i: value,
        ..Default::default()
    }
}

fn node(name: &str, op: &str, inputs: &[&str], output: &str, attribute: Vec<AttributeProto>) -> NodeProto {
    NodeProto {
        name: name.into(),
        op_type: op.into(),
        input: inputs.iter().map(|s| s.to_string()).collect(),
        output: vec![output.into()],
        attribute,
        ..Default::default()
    }
}

/// Serialized ONNX model (opset 13) with `logits` and `last_conv` as graph
/// outputs.
pub fn onnx_model(weights: &ToyWeights) -> Vec<u8> {
    let conv = |strides: i64| {
        vec![
            ints("kernel_shape", &[3, 3]),
            ints("pads", &[1, 1, 1, 1]),
            ints("strides", &[strides, strides]),
        ]
    };
    let graph = GraphProto {
        name: "toy_blobs".into(),
        node: vec![
            node("conv1", "Conv", &["input", "conv1.w", "conv1.b"], "conv1_out", conv(1)),
            node("relu1", "Relu", &["conv1_out"], "relu1_out", vec![]),
            node("conv2", "Conv", &["relu1_out", "conv2.w", "conv2.b"], "conv2_out", conv(2)),
            node("relu2", "Relu", &["conv2_out"], ACTIVATION_LAYER, vec![]),
            node("gap", "GlobalAveragePool", &[ACTIVATION_LAYER], "gap_out", vec![]),
            node("flatten", "Flatten", &["gap_out"], "flat", vec![int("axis", 1)]),
            node("fc", "Gemm", &["flat", "fc.w", "fc.b"], LOGITS_OUTPUT, vec![int("transB", 1)]),
        ],
        initializer: vec![
            initializer("conv1.w", weights.conv1_w.shape(), weights.conv1_w.iter().copied()),
            initializer("conv1.b", weights.conv1_b.shape(), weights.conv1_b.iter().copied()),
            initializer("conv2.w", weights.conv2_w.shape(), weights.conv2_w.iter().copied()),
            initializer("conv2.b", weights.conv2_b.shape(), weights.conv2_b.iter().copied()),
            initializer("fc.w", weights.fc_w.shape(), weights.fc_w.iter().copied()),
            initializer("fc.b", weights.fc_b.shape(), weights.fc_b.iter().copied()),
        ],
        input: vec![value_info("input", &[1, 3, SIZE, SIZE])],
        output: vec![
            value_info(LOGITS_OUTPUT, &[1, NUM_CLASSES]),
            value_info(ACTIVATION_LAYER, &[1, FEATURE_CHANNELS, FEATURE_SIZE, FEATURE_SIZE]),
        ],
        ..Default::default()
    };
    ModelProto {
        ir_version: 8,
        opset_import: vec![OperatorSetIdProto {
            domain: String::new(),
            version: 13,
        }],
        producer_name: "make-toy-corpus".into(),
        graph: Some(graph),
        ..Default::default()
    }
    .encode_to_vec()
}
