//! Small convolutional classifiers with per-nonlinearity activation capture.

mod train;

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use num_traits::Float;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::scalar::Scalar;
use crate::tensor::kernels::{self, ConvDims};
use crate::tensor::{Tape, Tensor, TensorError, VarId};

pub use train::{evaluate_accuracy, train, AccuracyReport, EpochStats, TrainConfig, TrainError};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error("layer {layer}: {reason}")]
    ShapeCheck { layer: usize, reason: String },
    #[error("architecture contains no relu nonlinearity")]
    NoRelu,
    #[error("architecture produces {got:?} instead of the {expected} class logits")]
    WrongLogits { expected: usize, got: LayerShape },
    #[error("input shape {got:?} does not match the architecture input {expected:?}")]
    InputShape {
        expected: (usize, usize, usize),
        got: Vec<usize>,
    },
    #[error(transparent)]
    Tensor(#[from] TensorError),
}

/// One layer of an [`Architecture`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum LayerSpec {
    Conv {
        kh: usize,
        kw: usize,
        out_channels: usize,
        stride: usize,
        padding: usize,
    },
    Relu,
    MaxPool {
        window: usize,
        stride: usize,
    },
    Flatten,
    Dense {
        out_units: usize,
    },
}

/// Shape flowing between layers: a spatial map or a flat vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LayerShape {
    Map { h: usize, w: usize, c: usize },
    Flat { n: usize },
}

impl LayerShape {
    pub fn len(&self) -> usize {
        match *self {
            LayerShape::Map { h, w, c } => h * w * c,
            LayerShape::Flat { n } => n,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dims(&self) -> Vec<usize> {
        match *self {
            LayerShape::Map { h, w, c } => vec![h, w, c],
            LayerShape::Flat { n } => vec![n],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Architecture {
    pub layers: Vec<LayerSpec>,
    /// H x W x C of the input image.
    pub input_shape: (usize, usize, usize),
    pub num_classes: usize,
}

impl Architecture {
    /// Reference 28x28x1 digit classifier:
    /// Conv5x5x32/ReLU/Pool2 -> Conv5x5x64/ReLU/Pool2 -> Dense256/ReLU -> Dense10.
    pub fn mnist_cnn() -> Self {
        Architecture {
            layers: vec![
                LayerSpec::Conv {
                    kh: 5,
                    kw: 5,
                    out_channels: 32,
                    stride: 1,
                    padding: 0,
                },
                LayerSpec::Relu,
                LayerSpec::MaxPool { window: 2, stride: 2 },
                LayerSpec::Conv {
                    kh: 5,
                    kw: 5,
                    out_channels: 64,
                    stride: 1,
                    padding: 0,
                },
                LayerSpec::Relu,
                LayerSpec::MaxPool { window: 2, stride: 2 },
                LayerSpec::Flatten,
                LayerSpec::Dense { out_units: 256 },
                LayerSpec::Relu,
                LayerSpec::Dense { out_units: 10 },
            ],
            input_shape: (28, 28, 1),
            num_classes: 10,
        }
    }

    /// Reference 32x32x3 classifier: three conv blocks plus two dense layers.
    pub fn cifar_cnn() -> Self {
        let conv = |out_channels| LayerSpec::Conv {
            kh: 3,
            kw: 3,
            out_channels,
            stride: 1,
            padding: 1,
        };
        Architecture {
            layers: vec![
                conv(32),
                LayerSpec::Relu,
                LayerSpec::MaxPool { window: 2, stride: 2 },
                conv(64),
                LayerSpec::Relu,
                LayerSpec::MaxPool { window: 2, stride: 2 },
                conv(128),
                LayerSpec::Relu,
                LayerSpec::MaxPool { window: 2, stride: 2 },
                LayerSpec::Flatten,
                LayerSpec::Dense { out_units: 256 },
                LayerSpec::Relu,
                LayerSpec::Dense { out_units: 10 },
            ],
            input_shape: (32, 32, 3),
            num_classes: 10,
        }
    }

    /// Static shape check. Returns the output shape of every layer.
    pub fn validate(&self) -> Result<Vec<LayerShape>, ModelError> {
        let (h, w, c) = self.input_shape;
        let mut cur = LayerShape::Map { h, w, c };
        let mut shapes = Vec::with_capacity(self.layers.len());
        let mut relus = 0usize;
        for (i, layer) in self.layers.iter().enumerate() {
            let fail = |reason: String| ModelError::ShapeCheck { layer: i, reason };
            cur = match (layer, cur) {
                (
                    LayerSpec::Conv {
                        kh,
                        kw,
                        out_channels,
                        stride,
                        padding,
                    },
                    LayerShape::Map { h, w, c },
                ) => {
                    let d = ConvDims::new(h, w, c, *kh, *kw, *out_channels, *stride, *padding)
                        .map_err(|e| fail(format!("{e}")))?;
                    LayerShape::Map {
                        h: d.out_h,
                        w: d.out_w,
                        c: *out_channels,
                    }
                }
                (LayerSpec::Conv { .. }, other) => {
                    return Err(fail(format!("conv needs a spatial input, got {other:?}")))
                }
                (LayerSpec::Relu, shape) => {
                    relus += 1;
                    shape
                }
                (LayerSpec::MaxPool { window, stride }, LayerShape::Map { h, w, c }) => {
                    if *stride == 0 {
                        return Err(fail("pool stride must be >= 1".into()));
                    }
                    if *window > h || *window > w {
                        return Err(fail(format!("pool window {window} exceeds {h}x{w}")));
                    }
                    LayerShape::Map {
                        h: (h - window) / stride + 1,
                        w: (w - window) / stride + 1,
                        c,
                    }
                }
                (LayerSpec::MaxPool { .. }, other) => {
                    return Err(fail(format!("pool needs a spatial input, got {other:?}")))
                }
                (LayerSpec::Flatten, LayerShape::Map { h, w, c }) => {
                    LayerShape::Flat { n: h * w * c }
                }
                (LayerSpec::Flatten, other) => {
                    return Err(fail(format!("flatten needs a spatial input, got {other:?}")))
                }
                (LayerSpec::Dense { out_units }, LayerShape::Flat { .. }) => {
                    LayerShape::Flat { n: *out_units }
                }
                (LayerSpec::Dense { .. }, other) => {
                    return Err(fail(format!("dense needs a flat input, got {other:?}")))
                }
            };
            shapes.push(cur);
        }
        if relus == 0 {
            return Err(ModelError::NoRelu);
        }
        match shapes.last() {
            Some(LayerShape::Flat { n }) if *n == self.num_classes => {}
            Some(&other) => {
                return Err(ModelError::WrongLogits {
                    expected: self.num_classes,
                    got: other,
                })
            }
            None => return Err(ModelError::NoRelu),
        }
        Ok(shapes)
    }

    /// Name and shape of every trainable tensor, in declaration order
    /// (weight then bias per conv/dense layer).
    pub fn parameter_specs(&self) -> Result<Vec<(String, Vec<usize>)>, ModelError> {
        let shapes = self.validate()?;
        let (h0, w0, c0) = self.input_shape;
        let mut cur = LayerShape::Map {
            h: h0,
            w: w0,
            c: c0,
        };
        let mut specs = Vec::new();
        for (i, layer) in self.layers.iter().enumerate() {
            match (layer, cur) {
                (
                    LayerSpec::Conv {
                        kh,
                        kw,
                        out_channels,
                        ..
                    },
                    LayerShape::Map { c, .. },
                ) => {
                    specs.push((format!("layer{i}.weight"), vec![*kh, *kw, c, *out_channels]));
                    specs.push((format!("layer{i}.bias"), vec![*out_channels]));
                }
                (LayerSpec::Dense { out_units }, LayerShape::Flat { n }) => {
                    specs.push((format!("layer{i}.weight"), vec![n, *out_units]));
                    specs.push((format!("layer{i}.bias"), vec![*out_units]));
                }
                _ => {}
            }
            cur = shapes[i];
        }
        Ok(specs)
    }

    /// Layer indices of every relu, in depth order. These are the feature
    /// hook points.
    pub fn relu_layer_ids(&self) -> Vec<usize> {
        self.layers
            .iter()
            .enumerate()
            .filter_map(|(i, l)| matches!(l, LayerSpec::Relu).then_some(i))
            .collect()
    }
}

/// Named trainable tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct Param<T> {
    pub name: String,
    pub tensor: Tensor<T>,
}

/// Activations captured at every relu output during one forward pass, in
/// hook order.
#[derive(Debug, Clone, PartialEq)]
pub struct ActivationTrace<T> {
    pub entries: Vec<TraceEntry<T>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceEntry<T> {
    pub layer_id: usize,
    pub activation: Tensor<T>,
}

/// Trace of a tape-recorded forward pass: the activations stay differentiable.
pub struct TapedForward {
    pub logits: VarId,
    pub trace: Vec<(usize, VarId)>,
}

/// Labeled image set; images in [0, 1], one label per image.
#[derive(Debug, Clone)]
pub struct LabeledImages<T> {
    pub images: Vec<Tensor<T>>,
    pub labels: Vec<usize>,
}

impl<T: Scalar> LabeledImages<T> {
    pub fn new(images: Vec<Tensor<T>>, labels: Vec<usize>) -> Self {
        assert_eq!(images.len(), labels.len(), "one label per image");
        LabeledImages { images, labels }
    }

    pub fn len(&self) -> usize {
        self.images.len()
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }
}

#[derive(Debug, Clone)]
pub struct Model<T: Scalar> {
    arch: Architecture,
    shapes: Vec<LayerShape>,
    params: Vec<Param<T>>,
    hook_layer_ids: Vec<usize>,
}

/// He-uniform conv/dense weights (bound sqrt(6/fan_in)), zero biases,
/// deterministic in `init_seed`.
pub fn build_model<T: Scalar>(arch: Architecture, init_seed: u64) -> Result<Model<T>, ModelError> {
    let shapes = arch.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(init_seed);
    let mut params = Vec::new();
    let mut uniform = |shape: Vec<usize>, fan_in: usize| {
        let bound = Float::sqrt(6.0 / fan_in as f64);
        Tensor::from_fn(shape, |_| {
            T::from_f64(rng.random::<f64>() * 2.0 * bound - bound)
        })
    };
    let (h0, w0, c0) = arch.input_shape;
    let mut cur = LayerShape::Map {
        h: h0,
        w: w0,
        c: c0,
    };
    for (i, layer) in arch.layers.iter().enumerate() {
        match (layer, cur) {
            (
                LayerSpec::Conv {
                    kh,
                    kw,
                    out_channels,
                    ..
                },
                LayerShape::Map { c, .. },
            ) => {
                let weight = uniform(vec![*kh, *kw, c, *out_channels], kh * kw * c);
                params.push(Param {
                    name: format!("layer{i}.weight"),
                    tensor: weight,
                });
                params.push(Param {
                    name: format!("layer{i}.bias"),
                    tensor: Tensor::zeros(vec![*out_channels]),
                });
            }
            (LayerSpec::Dense { out_units }, LayerShape::Flat { n }) => {
                let weight = uniform(vec![n, *out_units], n);
                params.push(Param {
                    name: format!("layer{i}.weight"),
                    tensor: weight,
                });
                params.push(Param {
                    name: format!("layer{i}.bias"),
                    tensor: Tensor::zeros(vec![*out_units]),
                });
            }
            _ => {}
        }
        cur = shapes[i];
    }
    let hook_layer_ids = arch.relu_layer_ids();
    Ok(Model {
        arch,
        shapes,
        params,
        hook_layer_ids,
    })
}

impl<T: Scalar> Model<T> {
    /// Rebuild a model from an architecture plus externally stored parameter
    /// tensors (checkpoint loading); shapes are revalidated first.
    pub fn from_parts(arch: Architecture, params: Vec<Param<T>>) -> Result<Self, ModelError> {
        let shapes = arch.validate()?;
        let specs = arch.parameter_specs()?;
        if specs.len() != params.len() {
            return Err(ModelError::ShapeCheck {
                layer: 0,
                reason: format!(
                    "expected {} parameter tensors, got {}",
                    specs.len(),
                    params.len()
                ),
            });
        }
        for ((name, shape), got) in specs.iter().zip(&params) {
            if name != &got.name || shape.as_slice() != got.tensor.shape() {
                return Err(ModelError::ShapeCheck {
                    layer: 0,
                    reason: format!(
                        "parameter {} has shape {:?}, expected {} with shape {:?}",
                        got.name,
                        got.tensor.shape(),
                        name,
                        shape
                    ),
                });
            }
        }
        let hook_layer_ids = arch.relu_layer_ids();
        Ok(Model {
            arch,
            shapes,
            params,
            hook_layer_ids,
        })
    }

    pub fn arch(&self) -> &Architecture {
        &self.arch
    }

    pub fn params(&self) -> &[Param<T>] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [Param<T>] {
        &mut self.params
    }

    pub fn hook_layer_ids(&self) -> &[usize] {
        &self.hook_layer_ids
    }

    pub fn num_classes(&self) -> usize {
        self.arch.num_classes
    }

    pub fn input_shape(&self) -> (usize, usize, usize) {
        self.arch.input_shape
    }

    /// Shape of the activation at a hooked layer.
    pub fn layer_shape(&self, layer_id: usize) -> LayerShape {
        self.shapes[layer_id]
    }

    fn check_input(&self, shape: &[usize]) -> Result<(), ModelError> {
        let (h, w, c) = self.arch.input_shape;
        if shape != [h, w, c] {
            return Err(ModelError::InputShape {
                expected: self.arch.input_shape,
                got: shape.to_vec(),
            });
        }
        Ok(())
    }

    /// Plain (untaped) forward pass returning the logits and the activation
    /// trace. Shares its kernels with the tape ops, so traced and untraced
    /// values are bit-identical.
    pub fn forward(&self, image: &Tensor<T>) -> Result<(Tensor<T>, ActivationTrace<T>), ModelError> {
        self.check_input(image.shape())?;
        let mut cur = image.clone();
        let mut entries = Vec::with_capacity(self.hook_layer_ids.len());
        let mut param_ix = 0usize;
        for (i, layer) in self.arch.layers.iter().enumerate() {
            match layer {
                LayerSpec::Conv { stride, padding, .. } => {
                    let weight = &self.params[param_ix].tensor;
                    let bias = &self.params[param_ix + 1].tensor;
                    param_ix += 2;
                    let &[h, w, c] = cur.shape() else {
                        unreachable!("validated");
                    };
                    let &[kh, kw, _, cout] = weight.shape() else {
                        unreachable!("validated");
                    };
                    let dims = ConvDims::new(h, w, c, kh, kw, cout, *stride, *padding)?;
                    let (_, mut out) = kernels::conv2d_forward(cur.data(), weight.data(), &dims);
                    for (j, v) in out.iter_mut().enumerate() {
                        *v = *v + bias.data()[j % cout];
                    }
                    cur = Tensor::new(vec![dims.out_h, dims.out_w, cout], out)?;
                }
                LayerSpec::Relu => {
                    let data = cur.data().iter().map(|&v| v.max(T::zero())).collect();
                    cur = Tensor::new(cur.shape().to_vec(), data)?;
                    entries.push(TraceEntry {
                        layer_id: i,
                        activation: cur.clone(),
                    });
                }
                LayerSpec::MaxPool { window, stride } => {
                    let &[h, w, c] = cur.shape() else {
                        unreachable!("validated");
                    };
                    let (out, _, oh, ow) =
                        kernels::maxpool_forward(cur.data(), h, w, c, *window, *stride);
                    cur = Tensor::new(vec![oh, ow, c], out)?;
                }
                LayerSpec::Flatten => {
                    cur = cur.reshaped(vec![cur.len()])?;
                }
                LayerSpec::Dense { out_units } => {
                    let weight = &self.params[param_ix].tensor;
                    let bias = &self.params[param_ix + 1].tensor;
                    param_ix += 2;
                    let n = cur.len();
                    let mut out = kernels::matmul(cur.data(), weight.data(), 1, n, *out_units);
                    for (v, &b) in out.iter_mut().zip(bias.data()) {
                        *v = *v + b;
                    }
                    cur = Tensor::new(vec![*out_units], out)?;
                }
            }
        }
        Ok((cur, ActivationTrace { entries }))
    }

    /// Record the parameters on a tape as differentiable leaves (training).
    pub fn leaf_params(&self, tape: &mut Tape<T>) -> Vec<VarId> {
        self.params.iter().map(|p| tape.leaf(&p.tensor)).collect()
    }

    /// Tape-recorded forward pass with frozen parameters; gradients flow to
    /// the image only (attack mode).
    pub fn forward_on_tape(
        &self,
        tape: &mut Tape<T>,
        image: VarId,
    ) -> Result<TapedForward, ModelError> {
        let param_ids: Vec<VarId> = self
            .params
            .iter()
            .map(|p| tape.constant(&p.tensor))
            .collect();
        self.forward_on_tape_with_params(tape, image, &param_ids)
    }

    /// Tape-recorded forward pass against caller-provided parameter vars
    /// (differentiable leaves during training, constants during attacks).
    pub fn forward_on_tape_with_params(
        &self,
        tape: &mut Tape<T>,
        image: VarId,
        param_ids: &[VarId],
    ) -> Result<TapedForward, ModelError> {
        self.check_input(tape.value(image).shape())?;
        let mut cur = image;
        let mut trace = Vec::with_capacity(self.hook_layer_ids.len());
        let mut param_ix = 0usize;
        for (i, layer) in self.arch.layers.iter().enumerate() {
            match layer {
                LayerSpec::Conv { stride, padding, .. } => {
                    let weight = param_ids[param_ix];
                    let bias = param_ids[param_ix + 1];
                    param_ix += 2;
                    let conv = tape.conv2d(cur, weight, *stride, *padding)?;
                    cur = tape.bias_add(conv, bias)?;
                }
                LayerSpec::Relu => {
                    cur = tape.relu(cur)?;
                    trace.push((i, cur));
                }
                LayerSpec::MaxPool { window, stride } => {
                    cur = tape.maxpool2d(cur, *window, *stride)?;
                }
                LayerSpec::Flatten => {
                    let n = tape.value(cur).len();
                    cur = tape.reshape(cur, vec![n])?;
                }
                LayerSpec::Dense { out_units } => {
                    let weight = param_ids[param_ix];
                    let bias = param_ids[param_ix + 1];
                    param_ix += 2;
                    let n = tape.value(cur).len();
                    let row = tape.reshape(cur, vec![1, n])?;
                    let prod = tape.matmul(row, weight)?;
                    let flat = tape.reshape(prod, vec![*out_units])?;
                    cur = tape.bias_add(flat, bias)?;
                }
            }
        }
        Ok(TapedForward { logits: cur, trace })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mnist_arch_validates_and_has_three_hooks() {
        let arch = Architecture::mnist_cnn();
        let shapes = arch.validate().unwrap();
        assert_eq!(shapes.last(), Some(&LayerShape::Flat { n: 10 }));
        // Conv/ReLU/Pool, Conv/ReLU/Pool, Dense/ReLU, Dense: three relus.
        assert_eq!(arch.relu_layer_ids(), vec![1, 4, 8]);
        let model = build_model::<f32>(arch, 0).unwrap();
        assert_eq!(model.hook_layer_ids().len(), 3);
    }

    #[test]
    fn cifar_arch_validates() {
        let arch = Architecture::cifar_cnn();
        let shapes = arch.validate().unwrap();
        assert_eq!(shapes.last(), Some(&LayerShape::Flat { n: 10 }));
        assert_eq!(arch.relu_layer_ids().len(), 4);
    }

    #[test]
    fn arch_without_relu_is_rejected() {
        let arch = Architecture {
            layers: vec![LayerSpec::Flatten, LayerSpec::Dense { out_units: 10 }],
            input_shape: (4, 4, 1),
            num_classes: 10,
        };
        assert_eq!(arch.validate().unwrap_err(), ModelError::NoRelu);
    }

    #[test]
    fn arch_shape_error_names_offending_layer() {
        let arch = Architecture {
            layers: vec![
                LayerSpec::Flatten,
                LayerSpec::Relu,
                LayerSpec::Conv {
                    kh: 3,
                    kw: 3,
                    out_channels: 4,
                    stride: 1,
                    padding: 0,
                },
            ],
            input_shape: (4, 4, 1),
            num_classes: 10,
        };
        assert!(matches!(
            arch.validate().unwrap_err(),
            ModelError::ShapeCheck { layer: 2, .. }
        ));
    }

    #[test]
    fn wrong_logit_count_is_rejected() {
        let arch = Architecture {
            layers: vec![
                LayerSpec::Relu,
                LayerSpec::Flatten,
                LayerSpec::Dense { out_units: 7 },
            ],
            input_shape: (4, 4, 1),
            num_classes: 10,
        };
        assert!(matches!(
            arch.validate().unwrap_err(),
            ModelError::WrongLogits { expected: 10, .. }
        ));
    }

    #[test]
    fn same_seed_gives_bit_identical_parameters() {
        let a = build_model::<f32>(Architecture::mnist_cnn(), 7).unwrap();
        let b = build_model::<f32>(Architecture::mnist_cnn(), 7).unwrap();
        for (pa, pb) in a.params().iter().zip(b.params()) {
            assert_eq!(pa.tensor.data(), pb.tensor.data(), "{}", pa.name);
        }
        let c = build_model::<f32>(Architecture::mnist_cnn(), 8).unwrap();
        assert_ne!(
            a.params()[0].tensor.data(),
            c.params()[0].tensor.data(),
            "different seeds should differ"
        );
    }

    #[test]
    fn zero_image_through_zero_weights_gives_zero_trace() {
        let arch = Architecture {
            layers: vec![
                LayerSpec::Conv {
                    kh: 3,
                    kw: 3,
                    out_channels: 2,
                    stride: 1,
                    padding: 0,
                },
                LayerSpec::Relu,
                LayerSpec::Flatten,
                LayerSpec::Dense { out_units: 3 },
            ],
            input_shape: (5, 5, 1),
            num_classes: 3,
        };
        let mut model = build_model::<f32>(arch, 0).unwrap();
        for p in model.params_mut() {
            let zero = Tensor::zeros(p.tensor.shape().to_vec());
            p.tensor = zero;
        }
        let image = Tensor::zeros(vec![5, 5, 1]);
        let (_, trace) = model.forward(&image).unwrap();
        assert_eq!(trace.entries.len(), 1);
        assert!(trace.entries[0]
            .activation
            .data()
            .iter()
            .all(|&v| v == 0.0));
    }

    #[test]
    fn trace_entry_count_matches_hooks_and_is_nonnegative() {
        let model = build_model::<f32>(Architecture::mnist_cnn(), 3).unwrap();
        let image = Tensor::from_fn(vec![28, 28, 1], |i| ((i % 17) as f32) / 16.0);
        let (_, trace) = model.forward(&image).unwrap();
        assert_eq!(trace.entries.len(), model.hook_layer_ids().len());
        for e in &trace.entries {
            assert!(e.activation.data().iter().all(|&v| v >= 0.0));
        }
    }

    #[test]
    fn taped_and_plain_forward_are_bit_identical() {
        let model = build_model::<f32>(Architecture::mnist_cnn(), 11).unwrap();
        let image = Tensor::from_fn(vec![28, 28, 1], |i| ((i * 31 % 255) as f32) / 255.0);
        let (logits, trace) = model.forward(&image).unwrap();

        let mut tape = Tape::new();
        let x = tape.leaf(&image);
        let taped = model.forward_on_tape(&mut tape, x).unwrap();
        assert_eq!(tape.value(taped.logits).data(), logits.data());
        for ((layer_id, var), entry) in taped.trace.iter().zip(&trace.entries) {
            assert_eq!(*layer_id, entry.layer_id);
            assert_eq!(tape.value(*var).data(), entry.activation.data());
        }
    }

    #[test]
    fn forward_rejects_wrong_input_shape() {
        let model = build_model::<f32>(Architecture::mnist_cnn(), 0).unwrap();
        let image = Tensor::zeros(vec![27, 28, 1]);
        assert!(matches!(
            model.forward(&image),
            Err(ModelError::InputShape { .. })
        ));
    }
}
