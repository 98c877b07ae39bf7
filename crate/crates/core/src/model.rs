//! Model manifests, shape validation, and the deterministic forward pass.
//!
//! A model is described by a JSON manifest:
//!
//! ```json
//! {
//!   "name": "...",
//!   "input": [c, h, w],
//!   "layers": [
//!     {"id": "conv1", "kind": "conv",
//!      "params": {"d": 32, "c": 1, "k": 3, "stride": 1, "pad": 0},
//!      "weights": "conv1_w.ddpt", "bias": "conv1_b.ddpt"},
//!     {"id": "relu1", "kind": "relu"},
//!     ...
//!   ]
//! }
//! ```
//!
//! Weight and bias paths are resolved relative to the manifest file. All
//! layer shapes are propagated and checked at load time; `forward` then
//! cannot fail on shape grounds for a well-typed input.

use std::collections::BTreeMap;
use std::path::Path;

use crate::error::{DdpError, Result};
use crate::io::read_ddpt;
use crate::spectral::{layer_svd, LayerSvd};
use crate::tensor::{
    build_receptive_field_matrix, cross_correlate, matmul, zero_pad, DenseTensor,
    ReceptiveFieldMatrix, Shape,
};

#[derive(Debug, Clone)]
pub enum LayerOp {
    Conv {
        filters: usize,
        channels: usize,
        kernel: usize,
        stride: usize,
        pad: usize,
        weights: DenseTensor,
        bias: Vec<f64>,
    },
    Fc {
        outputs: usize,
        inputs: usize,
        weights: DenseTensor,
        bias: Vec<f64>,
    },
    Relu,
    MaxPool {
        kernel: usize,
        stride: usize,
    },
    Flatten,
    Softmax,
}

impl LayerOp {
    pub fn kind_name(&self) -> &'static str {
        match self {
            LayerOp::Conv { .. } => "conv",
            LayerOp::Fc { .. } => "fc",
            LayerOp::Relu => "relu",
            LayerOp::MaxPool { .. } => "maxpool",
            LayerOp::Flatten => "flatten",
            LayerOp::Softmax => "softmax",
        }
    }

    pub fn is_linear(&self) -> bool {
        matches!(self, LayerOp::Conv { .. } | LayerOp::Fc { .. })
    }
}

#[derive(Debug, Clone)]
pub struct Layer {
    pub id: String,
    pub op: LayerOp,
}

/// A validated model: ordered layers plus the propagated per-layer shapes.
#[derive(Debug, Clone)]
pub struct ModelSpec {
    pub name: String,
    pub input_shape: Shape,
    pub layers: Vec<Layer>,
    shapes: Vec<(Shape, Shape)>,
}

fn propagate(op: &LayerOp, id: &str, input: &Shape) -> Result<Shape> {
    let fail = |msg: String| Err(DdpError::ManifestInvalid(format!("layer '{id}': {msg}")));
    match op {
        LayerOp::Conv {
            filters,
            channels,
            kernel,
            stride,
            pad,
            ..
        } => {
            let (c, m1, m2) = match input.dims() {
                &[c, m1, m2] => (c, m1, m2),
                other => return fail(format!("conv input must be rank 3, got {other:?}")),
            };
            if c != *channels {
                return fail(format!("expects {channels} channels, input has {c}"));
            }
            let (p1, p2) = (m1 + 2 * pad, m2 + 2 * pad);
            if *kernel > p1 || *kernel > p2 {
                return fail(format!(
                    "kernel {kernel} exceeds padded input {p1}x{p2}"
                ));
            }
            Shape::new(vec![
                *filters,
                (p1 - kernel) / stride + 1,
                (p2 - kernel) / stride + 1,
            ])
        }
        LayerOp::Fc { outputs, inputs, .. } => {
            if input.element_count() != *inputs {
                return fail(format!(
                    "expects {inputs} inputs, previous layer provides {} ({:?})",
                    input.element_count(),
                    input.dims()
                ));
            }
            Shape::new(vec![*outputs])
        }
        LayerOp::Relu | LayerOp::Softmax => Ok(input.clone()),
        LayerOp::MaxPool { kernel, stride } => {
            let (c, m1, m2) = match input.dims() {
                &[c, m1, m2] => (c, m1, m2),
                other => return fail(format!("maxpool input must be rank 3, got {other:?}")),
            };
            if *kernel > m1 || *kernel > m2 {
                return fail(format!("pool window {kernel} exceeds input {m1}x{m2}"));
            }
            Shape::new(vec![
                c,
                (m1 - kernel) / stride + 1,
                (m2 - kernel) / stride + 1,
            ])
        }
        LayerOp::Flatten => Shape::new(vec![input.element_count()]),
    }
}

impl ModelSpec {
    /// Assemble and validate a model from already-loaded layers.
    pub fn assemble(name: String, input_shape: Shape, layers: Vec<Layer>) -> Result<ModelSpec> {
        if layers.is_empty() {
            return Err(DdpError::ManifestInvalid("empty layer list".into()));
        }
        let mut seen = std::collections::BTreeSet::new();
        for l in &layers {
            if !seen.insert(l.id.as_str()) {
                return Err(DdpError::ManifestInvalid(format!(
                    "duplicate layer id '{}'",
                    l.id
                )));
            }
        }
        let mut shapes = Vec::with_capacity(layers.len());
        let mut current = input_shape.clone();
        for l in &layers {
            let out = propagate(&l.op, &l.id, &current)?;
            shapes.push((current.clone(), out.clone()));
            current = out;
        }
        Ok(ModelSpec {
            name,
            input_shape,
            layers,
            shapes,
        })
    }

    pub fn layer(&self, id: &str) -> Option<(usize, &Layer)> {
        self.layers
            .iter()
            .enumerate()
            .find(|(_, l)| l.id == id)
    }

    pub fn layer_ids(&self) -> Vec<&str> {
        self.layers.iter().map(|l| l.id.as_str()).collect()
    }

    /// (input shape, output shape) of a layer.
    pub fn shapes_of(&self, id: &str) -> Option<(&Shape, &Shape)> {
        self.layer(id)
            .map(|(i, _)| (&self.shapes[i].0, &self.shapes[i].1))
    }

    pub fn output_shape(&self) -> &Shape {
        &self.shapes.last().expect("layers are nonempty").1
    }

    /// Linear (conv and fc) layer ids in model order.
    pub fn linear_layer_ids(&self) -> Vec<&str> {
        self.layers
            .iter()
            .filter(|l| l.op.is_linear())
            .map(|l| l.id.as_str())
            .collect()
    }

    /// The unfolded-matrix view of a linear layer.
    pub fn linear_view(&self, id: &str) -> Result<LinearLayerView<'_>> {
        let (idx, layer) = self.layer(id).ok_or_else(|| {
            DdpError::InvalidInput(format!(
                "unknown layer '{id}'; available: {}",
                self.layer_ids().join(", ")
            ))
        })?;
        let output = &self.shapes[idx].1;
        match &layer.op {
            LayerOp::Conv {
                filters,
                channels,
                kernel,
                stride,
                pad,
                weights,
                bias,
            } => {
                let out_dims = output.dims();
                Ok(LinearLayerView {
                    layer_id: &layer.id,
                    unfolded: weights.reshape(&[*filters, channels * kernel * kernel])?,
                    bias: bias.clone(),
                    filters: *filters,
                    geometry: LinearGeometry::Conv {
                        channels: *channels,
                        kernel: *kernel,
                        stride: *stride,
                        pad: *pad,
                        output: (out_dims[1], out_dims[2]),
                    },
                })
            }
            LayerOp::Fc {
                outputs,
                inputs,
                weights,
                bias,
            } => Ok(LinearLayerView {
                layer_id: &layer.id,
                unfolded: weights.clone(),
                bias: bias.clone(),
                filters: *outputs,
                geometry: LinearGeometry::Fc { inputs: *inputs },
            }),
            other => Err(DdpError::InvalidLayerKind(format!(
                "layer '{id}' is {}, expected a linear (conv or fc) layer",
                other.kind_name()
            ))),
        }
    }

    /// Views for every linear layer in model order.
    pub fn linear_views(&self) -> Result<Vec<LinearLayerView<'_>>> {
        self.linear_layer_ids()
            .iter()
            .map(|id| self.linear_view(id))
            .collect()
    }
}

/// How a linear layer windows its input.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LinearGeometry {
    Conv {
        channels: usize,
        kernel: usize,
        stride: usize,
        pad: usize,
        output: (usize, usize),
    },
    /// Treated as a conv with the window covering the whole input: the
    /// receptive-field matrix has a single column.
    Fc { inputs: usize },
}

/// A linear layer reduced to the data the spectral pipeline needs.
#[derive(Debug, Clone)]
pub struct LinearLayerView<'a> {
    pub layer_id: &'a str,
    /// (d, ck^2) for conv, (out, in) for fc.
    pub unfolded: DenseTensor,
    pub bias: Vec<f64>,
    pub filters: usize,
    pub geometry: LinearGeometry,
}

impl LinearLayerView<'_> {
    /// ck^2 / fc input width.
    pub fn window_len(&self) -> usize {
        self.unfolded.dims()[1]
    }

    /// Number of receptive-field positions (n^2 for conv, 1 for fc).
    pub fn position_count(&self) -> usize {
        match self.geometry {
            LinearGeometry::Conv { output, .. } => output.0 * output.1,
            LinearGeometry::Fc { .. } => 1,
        }
    }

    /// Spatial grid of the output positions.
    pub fn output_grid(&self) -> (usize, usize) {
        match self.geometry {
            LinearGeometry::Conv { output, .. } => output,
            LinearGeometry::Fc { .. } => (1, 1),
        }
    }

    /// Receptive-field matrix of this layer over its traced input tensor.
    /// Padding is materialized before windows are taken.
    pub fn receptive_fields(&self, x_latent: &DenseTensor) -> Result<ReceptiveFieldMatrix> {
        match self.geometry {
            LinearGeometry::Conv {
                kernel,
                stride,
                pad,
                ..
            } => {
                let padded = zero_pad(x_latent, pad)?;
                build_receptive_field_matrix(&padded, (kernel, kernel), stride)
            }
            LinearGeometry::Fc { inputs } => {
                if x_latent.shape().element_count() != inputs {
                    return Err(DdpError::ShapeMismatch(format!(
                        "fc layer '{}' expects {} inputs, got {}",
                        self.layer_id,
                        inputs,
                        x_latent.shape().element_count()
                    )));
                }
                let column = x_latent.reshape(&[inputs, 1, 1])?;
                build_receptive_field_matrix(&column, (1, 1), 1)
            }
        }
    }

    /// SVD of the unfolded weight matrix.
    pub fn svd(&self) -> Result<LayerSvd> {
        layer_svd(self.layer_id, &self.unfolded)
    }
}

fn usize_param(
    params: &serde_json::Map<String, serde_json::Value>,
    layer_id: &str,
    key: &str,
) -> Result<usize> {
    params
        .get(key)
        .and_then(|v| v.as_u64())
        .map(|v| v as usize)
        .ok_or_else(|| {
            DdpError::ManifestInvalid(format!(
                "layer '{layer_id}': missing or non-integer param '{key}'"
            ))
        })
}

fn usize_param_or(
    params: &serde_json::Map<String, serde_json::Value>,
    layer_id: &str,
    key: &str,
    default: usize,
) -> Result<usize> {
    match params.get(key) {
        None => Ok(default),
        Some(v) => v.as_u64().map(|v| v as usize).ok_or_else(|| {
            DdpError::ManifestInvalid(format!(
                "layer '{layer_id}': non-integer param '{key}'"
            ))
        }),
    }
}

fn load_declared(
    dir: &Path,
    layer_id: &str,
    role: &str,
    rel: Option<&String>,
    expected_dims: &[usize],
) -> Result<DenseTensor> {
    let rel = rel.ok_or_else(|| {
        DdpError::ManifestInvalid(format!("layer '{layer_id}': missing {role} path"))
    })?;
    let tensor = read_ddpt(&dir.join(rel))?;
    if tensor.dims() != expected_dims {
        return Err(DdpError::ManifestInvalid(format!(
            "layer '{layer_id}': {role} tensor has shape {:?}, declared {:?}",
            tensor.dims(),
            expected_dims
        )));
    }
    Ok(tensor)
}

#[derive(serde::Deserialize)]
struct ManifestDoc {
    name: String,
    input: Vec<usize>,
    layers: Vec<ManifestLayer>,
}

#[derive(serde::Deserialize)]
struct ManifestLayer {
    id: String,
    kind: String,
    #[serde(default)]
    params: serde_json::Map<String, serde_json::Value>,
    #[serde(default)]
    weights: Option<String>,
    #[serde(default)]
    bias: Option<String>,
}

/// Load and validate a model manifest, resolving all tensor references.
pub fn load_model(manifest_path: &Path) -> Result<ModelSpec> {
    let text = std::fs::read_to_string(manifest_path)?;
    let doc: ManifestDoc = serde_json::from_str(&text)
        .map_err(|e| DdpError::ManifestInvalid(format!("{}: {e}", manifest_path.display())))?;
    let dir = manifest_path
        .parent()
        .map(Path::to_path_buf)
        .unwrap_or_default();
    let input_shape = Shape::new(doc.input.clone())
        .map_err(|e| DdpError::ManifestInvalid(format!("input shape: {e}")))?;

    let mut layers = Vec::with_capacity(doc.layers.len());
    for ml in &doc.layers {
        let id = ml.id.clone();
        let op = match ml.kind.as_str() {
            "conv" => {
                let d = usize_param(&ml.params, &id, "d")?;
                let c = usize_param(&ml.params, &id, "c")?;
                let k = usize_param(&ml.params, &id, "k")?;
                let stride = usize_param_or(&ml.params, &id, "stride", 1)?;
                let pad = usize_param_or(&ml.params, &id, "pad", 0)?;
                if stride == 0 || d == 0 || c == 0 || k == 0 {
                    return Err(DdpError::ManifestInvalid(format!(
                        "layer '{id}': conv parameters must be >= 1"
                    )));
                }
                let weights =
                    load_declared(&dir, &id, "weights", ml.weights.as_ref(), &[d, c, k, k])?;
                let bias = load_declared(&dir, &id, "bias", ml.bias.as_ref(), &[d])?;
                LayerOp::Conv {
                    filters: d,
                    channels: c,
                    kernel: k,
                    stride,
                    pad,
                    weights,
                    bias: bias.into_data(),
                }
            }
            "fc" => {
                let outputs = usize_param(&ml.params, &id, "out")?;
                let inputs = usize_param(&ml.params, &id, "in")?;
                let weights =
                    load_declared(&dir, &id, "weights", ml.weights.as_ref(), &[outputs, inputs])?;
                let bias = load_declared(&dir, &id, "bias", ml.bias.as_ref(), &[outputs])?;
                LayerOp::Fc {
                    outputs,
                    inputs,
                    weights,
                    bias: bias.into_data(),
                }
            }
            "relu" => LayerOp::Relu,
            "maxpool" => {
                let k = usize_param(&ml.params, &id, "k")?;
                let stride = usize_param_or(&ml.params, &id, "stride", k)?;
                if k == 0 || stride == 0 {
                    return Err(DdpError::ManifestInvalid(format!(
                        "layer '{id}': maxpool parameters must be >= 1"
                    )));
                }
                LayerOp::MaxPool { kernel: k, stride }
            }
            "flatten" => LayerOp::Flatten,
            "softmax" => LayerOp::Softmax,
            other => {
                return Err(DdpError::ManifestInvalid(format!(
                    "layer '{id}': unknown kind '{other}'"
                )))
            }
        };
        layers.push(Layer { id, op });
    }
    ModelSpec::assemble(doc.name, input_shape, layers)
}

/// Input and output of one layer during a forward pass.
#[derive(Debug, Clone)]
pub struct LayerIo {
    pub layer_id: String,
    pub input: DenseTensor,
    pub output: DenseTensor,
}

/// Per-layer activations of one image.
#[derive(Debug, Clone)]
pub struct ActivationTrace {
    pub image_id: Option<String>,
    pub stages: Vec<LayerIo>,
}

impl ActivationTrace {
    /// Tensor entering the named layer.
    pub fn input_of(&self, layer_id: &str) -> Option<&DenseTensor> {
        self.stages
            .iter()
            .find(|s| s.layer_id == layer_id)
            .map(|s| &s.input)
    }

    pub fn output_of(&self, layer_id: &str) -> Option<&DenseTensor> {
        self.stages
            .iter()
            .find(|s| s.layer_id == layer_id)
            .map(|s| &s.output)
    }

    pub fn final_output(&self) -> &DenseTensor {
        &self.stages.last().expect("layers are nonempty").output
    }
}

fn apply_layer(op: &LayerOp, x: &DenseTensor) -> Result<DenseTensor> {
    match op {
        LayerOp::Conv {
            stride,
            pad,
            weights,
            bias,
            ..
        } => {
            let padded = zero_pad(x, *pad)?;
            let mut y = cross_correlate(weights, &padded, *stride)?;
            let dims = y.dims().to_vec();
            let plane = dims[1] * dims[2];
            let yd = y.data_mut();
            for (h, &b) in bias.iter().enumerate() {
                for v in &mut yd[h * plane..(h + 1) * plane] {
                    *v += b;
                }
            }
            Ok(y)
        }
        LayerOp::Fc {
            inputs,
            weights,
            bias,
            ..
        } => {
            let flat = x.reshape(&[*inputs, 1])?;
            let mut y = matmul(weights, &flat)?;
            for (v, &b) in y.data_mut().iter_mut().zip(bias) {
                *v += b;
            }
            y.reshape(&[bias.len()])
        }
        LayerOp::Relu => {
            let mut y = x.clone();
            for v in y.data_mut() {
                *v = v.max(0.0);
            }
            Ok(y)
        }
        LayerOp::MaxPool { kernel, stride } => {
            let (c, m1, m2) = match x.dims() {
                &[c, m1, m2] => (c, m1, m2),
                other => {
                    return Err(DdpError::ShapeMismatch(format!(
                        "maxpool input must be rank 3, got {other:?}"
                    )))
                }
            };
            let n1 = (m1 - kernel) / stride + 1;
            let n2 = (m2 - kernel) / stride + 1;
            let mut y = DenseTensor::zeros_from_dims(&[c, n1, n2])?;
            let xd = x.data();
            let yd = y.data_mut();
            for r in 0..c {
                for i in 0..n1 {
                    for j in 0..n2 {
                        let mut best = f64::NEG_INFINITY;
                        for s in 0..*kernel {
                            for t in 0..*kernel {
                                let v = xd[(r * m1 + (i * stride + s)) * m2 + (j * stride + t)];
                                if v > best {
                                    best = v;
                                }
                            }
                        }
                        yd[(r * n1 + i) * n2 + j] = best;
                    }
                }
            }
            Ok(y)
        }
        LayerOp::Flatten => x.reshape(&[x.shape().element_count()]),
        LayerOp::Softmax => {
            let max = x.data().iter().fold(f64::NEG_INFINITY, |m, &v| m.max(v));
            let mut y = x.clone();
            let mut sum = 0.0f64;
            for v in y.data_mut() {
                *v = (*v - max).exp();
                sum += *v;
            }
            for v in y.data_mut() {
                *v /= sum;
            }
            Ok(y)
        }
    }
}

/// Run the model on one input, recording every layer's input and output.
pub fn forward(model: &ModelSpec, x: &DenseTensor) -> Result<ActivationTrace> {
    if x.dims() != model.input_shape.dims() {
        return Err(DdpError::ShapeMismatch(format!(
            "input shape {:?} does not match model input {:?}",
            x.dims(),
            model.input_shape.dims()
        )));
    }
    let mut stages = Vec::with_capacity(model.layers.len());
    let mut current = x.clone();
    for layer in &model.layers {
        let output = apply_layer(&layer.op, &current)?;
        stages.push(LayerIo {
            layer_id: layer.id.clone(),
            input: current,
            output: output.clone(),
        });
        current = output;
    }
    Ok(ActivationTrace {
        image_id: None,
        stages,
    })
}

/// SVDs of every linear layer keyed by layer id, in model order.
pub fn linear_layer_svds(model: &ModelSpec) -> Result<BTreeMap<String, LayerSvd>> {
    let mut out = BTreeMap::new();
    for view in model.linear_views()? {
        out.insert(view.layer_id.to_string(), view.svd()?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::io::write_ddpt;
    use crate::tensor::max_abs_diff;
    use serde_json::json;
    use std::path::PathBuf;

    fn tensor(dims: &[usize], data: Vec<f64>) -> DenseTensor {
        DenseTensor::from_dims(dims, data).unwrap()
    }

    fn relu_only_model() -> ModelSpec {
        ModelSpec::assemble(
            "relu".into(),
            Shape::new(vec![2]).unwrap(),
            vec![Layer {
                id: "r".into(),
                op: LayerOp::Relu,
            }],
        )
        .unwrap()
    }

    #[test]
    fn relu_forward() {
        let model = relu_only_model();
        let trace = forward(&model, &tensor(&[2], vec![-1.0, 2.0])).unwrap();
        assert_eq!(trace.final_output().data(), &[0.0, 2.0]);
    }

    #[test]
    fn conv_forward_matches_oracle() {
        let w = tensor(&[1, 1, 2, 2], vec![1.0, 0.0, 0.0, 1.0]);
        let model = ModelSpec::assemble(
            "conv".into(),
            Shape::new(vec![1, 3, 3]).unwrap(),
            vec![Layer {
                id: "c1".into(),
                op: LayerOp::Conv {
                    filters: 1,
                    channels: 1,
                    kernel: 2,
                    stride: 1,
                    pad: 0,
                    weights: w.clone(),
                    bias: vec![0.0],
                },
            }],
        )
        .unwrap();
        let x = tensor(&[1, 3, 3], (1..=9).map(f64::from).collect());
        let trace = forward(&model, &x).unwrap();
        assert_eq!(trace.input_of("c1").unwrap(), &x);
        assert_eq!(trace.final_output().data(), &[6.0, 8.0, 12.0, 14.0]);

        // Exact agreement with the oracle, bias added afterwards.
        let direct = cross_correlate(&w, &x, 1).unwrap();
        assert_eq!(max_abs_diff(trace.final_output(), &direct).unwrap(), 0.0);
    }

    #[test]
    fn conv_forward_random_instance_is_bit_exact_with_oracle() {
        use rand::prelude::*;
        use rand_chacha::ChaCha8Rng;
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let wdata: Vec<f64> = (0..3 * 2 * 3 * 3).map(|_| rng.random_range(-1.0..1.0)).collect();
        let w = tensor(&[3, 2, 3, 3], wdata);
        let bias = vec![0.37, -0.95, 0.11];
        let model = ModelSpec::assemble(
            "randconv".into(),
            Shape::new(vec![2, 6, 6]).unwrap(),
            vec![Layer {
                id: "c".into(),
                op: LayerOp::Conv {
                    filters: 3,
                    channels: 2,
                    kernel: 3,
                    stride: 1,
                    pad: 1,
                    weights: w.clone(),
                    bias: bias.clone(),
                },
            }],
        )
        .unwrap();
        let x = tensor(
            &[2, 6, 6],
            (0..72).map(|_| rng.random_range(-1.0..1.0)).collect(),
        );
        let got = forward(&model, &x).unwrap().final_output().clone();

        // Same padding, same oracle, same bias-after accumulation order.
        let padded = zero_pad(&x, 1).unwrap();
        let mut expected = cross_correlate(&w, &padded, 1).unwrap();
        let dims = expected.dims().to_vec();
        let plane = dims[1] * dims[2];
        for (h, &b) in bias.iter().enumerate() {
            for v in &mut expected.data_mut()[h * plane..(h + 1) * plane] {
                *v += b;
            }
        }
        assert_eq!(got.data(), expected.data());
    }

    #[test]
    fn maxpool_forward() {
        let model = ModelSpec::assemble(
            "pool".into(),
            Shape::new(vec![1, 2, 2]).unwrap(),
            vec![Layer {
                id: "p".into(),
                op: LayerOp::MaxPool { kernel: 2, stride: 2 },
            }],
        )
        .unwrap();
        let trace = forward(&model, &tensor(&[1, 2, 2], vec![1.0, 2.0, 3.0, 4.0])).unwrap();
        assert_eq!(trace.final_output().data(), &[4.0]);
    }

    #[test]
    fn softmax_is_stable_and_normalized() {
        let model = ModelSpec::assemble(
            "soft".into(),
            Shape::new(vec![3]).unwrap(),
            vec![Layer {
                id: "s".into(),
                op: LayerOp::Softmax,
            }],
        )
        .unwrap();
        let trace = forward(&model, &tensor(&[3], vec![1000.0, 1001.0, 999.0])).unwrap();
        let y = trace.final_output().data();
        assert!(y.iter().all(|&v| v > 0.0));
        assert!((y.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    fn write_manifest(dir: &Path, doc: &serde_json::Value) -> PathBuf {
        let path = dir.join("model.json");
        std::fs::write(&path, serde_json::to_string_pretty(doc).unwrap()).unwrap();
        path
    }

    #[test]
    fn load_model_resolves_and_validates() {
        let dir = tempfile::tempdir().unwrap();
        write_ddpt(
            &dir.path().join("w.ddpt"),
            &tensor(&[2, 1, 2, 2], vec![1.0; 8]),
        )
        .unwrap();
        write_ddpt(&dir.path().join("b.ddpt"), &tensor(&[2], vec![0.0, 0.5])).unwrap();
        write_ddpt(
            &dir.path().join("fc_w.ddpt"),
            &tensor(&[3, 8], vec![0.1; 24]),
        )
        .unwrap();
        write_ddpt(&dir.path().join("fc_b.ddpt"), &tensor(&[3], vec![0.0; 3])).unwrap();

        let manifest = write_manifest(
            dir.path(),
            &json!({
                "name": "toy",
                "input": [1, 3, 3],
                "layers": [
                    {"id": "c1", "kind": "conv",
                     "params": {"d": 2, "c": 1, "k": 2},
                     "weights": "w.ddpt", "bias": "b.ddpt"},
                    {"id": "r1", "kind": "relu"},
                    {"id": "f1", "kind": "fc", "params": {"out": 3, "in": 8},
                     "weights": "fc_w.ddpt", "bias": "fc_b.ddpt"},
                    {"id": "sm", "kind": "softmax"}
                ]
            }),
        );
        let model = load_model(&manifest).unwrap();
        assert_eq!(model.layers.len(), 4);
        assert_eq!(model.output_shape().dims(), &[3]);
        assert_eq!(model.linear_layer_ids(), vec!["c1", "f1"]);
        let (input, output) = model.shapes_of("c1").unwrap();
        assert_eq!(input.dims(), &[1, 3, 3]);
        assert_eq!(output.dims(), &[2, 2, 2]);
    }

    #[test]
    fn load_model_rejects_bad_composition() {
        let dir = tempfile::tempdir().unwrap();
        write_ddpt(
            &dir.path().join("fc_w.ddpt"),
            &tensor(&[3, 9], vec![0.1; 27]),
        )
        .unwrap();
        write_ddpt(&dir.path().join("fc_b.ddpt"), &tensor(&[3], vec![0.0; 3])).unwrap();
        // fc expects 9 inputs but the flatten provides 12.
        let manifest = write_manifest(
            dir.path(),
            &json!({
                "name": "bad",
                "input": [3, 2, 2],
                "layers": [
                    {"id": "fl", "kind": "flatten"},
                    {"id": "f1", "kind": "fc", "params": {"out": 3, "in": 9},
                     "weights": "fc_w.ddpt", "bias": "fc_b.ddpt"}
                ]
            }),
        );
        assert!(matches!(
            load_model(&manifest),
            Err(DdpError::ManifestInvalid(_))
        ));
    }

    #[test]
    fn load_model_rejects_empty_and_missing_files() {
        let dir = tempfile::tempdir().unwrap();
        let manifest = write_manifest(
            dir.path(),
            &json!({"name": "empty", "input": [1, 2, 2], "layers": []}),
        );
        assert!(matches!(
            load_model(&manifest),
            Err(DdpError::ManifestInvalid(_))
        ));

        let manifest = write_manifest(
            dir.path(),
            &json!({
                "name": "missing",
                "input": [1, 3, 3],
                "layers": [
                    {"id": "c1", "kind": "conv",
                     "params": {"d": 1, "c": 1, "k": 2},
                     "weights": "nope.ddpt", "bias": "nope_b.ddpt"}
                ]
            }),
        );
        assert!(matches!(load_model(&manifest), Err(DdpError::Io(_))));
    }

    #[test]
    fn fc_flattens_rank3_inputs() {
        let model = ModelSpec::assemble(
            "implicit-flatten".into(),
            Shape::new(vec![1, 4, 4]).unwrap(),
            vec![
                Layer {
                    id: "c1".into(),
                    op: LayerOp::Conv {
                        filters: 2,
                        channels: 1,
                        kernel: 3,
                        stride: 1,
                        pad: 0,
                        weights: tensor(&[2, 1, 3, 3], vec![0.5; 18]),
                        bias: vec![0.0, 0.0],
                    },
                },
                Layer {
                    id: "f1".into(),
                    op: LayerOp::Fc {
                        outputs: 2,
                        inputs: 8,
                        weights: tensor(&[2, 8], vec![1.0; 16]),
                        bias: vec![0.0, 0.0],
                    },
                },
            ],
        )
        .unwrap();
        let x = tensor(&[1, 4, 4], (0..16).map(f64::from).collect());
        let trace = forward(&model, &x).unwrap();
        assert_eq!(trace.final_output().dims(), &[2]);
    }

    #[test]
    fn linear_view_window_geometry() {
        let model = ModelSpec::assemble(
            "geom".into(),
            Shape::new(vec![1, 4, 4]).unwrap(),
            vec![Layer {
                id: "c1".into(),
                op: LayerOp::Conv {
                    filters: 2,
                    channels: 1,
                    kernel: 3,
                    stride: 1,
                    pad: 1,
                    weights: tensor(&[2, 1, 3, 3], vec![0.5; 18]),
                    bias: vec![0.0, 0.0],
                },
            }],
        )
        .unwrap();
        let view = model.linear_view("c1").unwrap();
        assert_eq!(view.window_len(), 9);
        // pad 1 keeps the 4x4 grid.
        assert_eq!(view.output_grid(), (4, 4));
        let x = tensor(&[1, 4, 4], (0..16).map(f64::from).collect());
        let psi = view.receptive_fields(&x).unwrap();
        assert_eq!(psi.matrix().dims(), &[9, 16]);

        assert!(matches!(
            model.linear_view("nope"),
            Err(DdpError::InvalidInput(_))
        ));
    }
}
