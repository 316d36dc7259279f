//! Declarative backbone architectures: layer graphs, per-layer parameter and
//! MAC metadata, parameter storage and initialization.
//!
//! Metadata (`param_count`, `mac_count`, shapes) is a pure function of the
//! spec and its declared input shape; no weights are needed to compute plans
//! or costs.

use std::collections::BTreeMap;

use rand::Rng;
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};

use crate::error::ModelError;
use crate::tensor::{Scalar, Tensor};

/// One layer of the (mostly linear) layer graph. `ResidualAdd` closes an
/// inverted-residual block by adding the output of an earlier layer.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum LayerKind {
    Conv2d {
        in_ch: usize,
        out_ch: usize,
        kernel: usize,
        stride: usize,
    },
    DepthwiseConv2d {
        channels: usize,
        kernel: usize,
        stride: usize,
    },
    PointwiseConv2d {
        in_ch: usize,
        out_ch: usize,
    },
    Relu6,
    GlobalAvgPool,
    Linear {
        in_features: usize,
        out_features: usize,
    },
    ResidualAdd {
        from: usize,
    },
}

impl LayerKind {
    pub fn has_weights(&self) -> bool {
        matches!(
            self,
            LayerKind::Conv2d { .. }
                | LayerKind::DepthwiseConv2d { .. }
                | LayerKind::PointwiseConv2d { .. }
                | LayerKind::Linear { .. }
        )
    }

    pub fn is_conv(&self) -> bool {
        matches!(
            self,
            LayerKind::Conv2d { .. }
                | LayerKind::DepthwiseConv2d { .. }
                | LayerKind::PointwiseConv2d { .. }
        )
    }

    /// Output channels (or units) that channel selection operates on.
    pub fn out_channels(&self) -> Option<usize> {
        match *self {
            LayerKind::Conv2d { out_ch, .. } => Some(out_ch),
            LayerKind::DepthwiseConv2d { channels, .. } => Some(channels),
            LayerKind::PointwiseConv2d { out_ch, .. } => Some(out_ch),
            LayerKind::Linear { out_features, .. } => Some(out_features),
            _ => None,
        }
    }

    /// Weight tensor shape, if the layer has weights.
    pub fn weight_shape(&self) -> Option<Vec<usize>> {
        match *self {
            LayerKind::Conv2d {
                in_ch,
                out_ch,
                kernel,
                ..
            } => Some(vec![out_ch, in_ch, kernel, kernel]),
            LayerKind::DepthwiseConv2d {
                channels, kernel, ..
            } => Some(vec![channels, kernel, kernel]),
            LayerKind::PointwiseConv2d { in_ch, out_ch } => Some(vec![out_ch, in_ch]),
            LayerKind::Linear {
                in_features,
                out_features,
            } => Some(vec![out_features, in_features]),
            _ => None,
        }
    }

    /// Weights per output channel (bias excluded).
    pub fn weights_per_channel(&self) -> usize {
        match *self {
            LayerKind::Conv2d { in_ch, kernel, .. } => in_ch * kernel * kernel,
            LayerKind::DepthwiseConv2d { kernel, .. } => kernel * kernel,
            LayerKind::PointwiseConv2d { in_ch, .. } => in_ch,
            LayerKind::Linear { in_features, .. } => in_features,
            _ => 0,
        }
    }

    /// Total parameter count including bias.
    pub fn param_count(&self) -> u64 {
        match self.out_channels() {
            Some(out) if self.has_weights() => {
                (self.weights_per_channel() as u64 + 1) * out as u64
            }
            _ => 0,
        }
    }

    fn fan_in(&self) -> usize {
        match *self {
            LayerKind::Conv2d { in_ch, kernel, .. } => in_ch * kernel * kernel,
            LayerKind::DepthwiseConv2d { kernel, .. } => kernel * kernel,
            LayerKind::PointwiseConv2d { in_ch, .. } => in_ch,
            LayerKind::Linear { in_features, .. } => in_features,
            _ => 1,
        }
    }
}

/// Zero padding on each side: "same" geometry for stride 1, floor division
/// of the spatial size for larger strides.
pub fn conv_padding(kernel: usize) -> usize {
    (kernel - 1) / 2
}

pub fn conv_out_size(input: usize, kernel: usize, stride: usize) -> usize {
    (input + 2 * conv_padding(kernel) - kernel) / stride + 1
}

/// Multiply-accumulate count of one layer at the given input spatial size.
/// Activations, pooling and residual adds cost zero MACs.
pub fn count_macs(kind: &LayerKind, input_spatial: (usize, usize)) -> u64 {
    let (h, w) = input_spatial;
    match *kind {
        LayerKind::Conv2d {
            in_ch,
            out_ch,
            kernel,
            stride,
        } => {
            let (ho, wo) = (conv_out_size(h, kernel, stride), conv_out_size(w, kernel, stride));
            (out_ch * in_ch * kernel * kernel * ho * wo) as u64
        }
        LayerKind::DepthwiseConv2d {
            channels,
            kernel,
            stride,
        } => {
            let (ho, wo) = (conv_out_size(h, kernel, stride), conv_out_size(w, kernel, stride));
            (channels * kernel * kernel * ho * wo) as u64
        }
        LayerKind::PointwiseConv2d { in_ch, out_ch } => (out_ch * in_ch * h * w) as u64,
        LayerKind::Linear {
            in_features,
            out_features,
        } => (in_features * out_features) as u64,
        LayerKind::Relu6 | LayerKind::GlobalAvgPool | LayerKind::ResidualAdd { .. } => 0,
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Layer {
    pub name: String,
    pub kind: LayerKind,
}

/// Per-example activation shape flowing between layers.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ActShape {
    Chw(usize, usize, usize),
    Flat(usize),
}

impl ActShape {
    pub fn dims(&self) -> Vec<usize> {
        match *self {
            ActShape::Chw(c, h, w) => vec![c, h, w],
            ActShape::Flat(f) => vec![f],
        }
    }

    pub fn numel(&self) -> usize {
        match *self {
            ActShape::Chw(c, h, w) => c * h * w,
            ActShape::Flat(f) => f,
        }
    }
}

/// Derived, weight-free metadata for one layer.
#[derive(Debug, Clone)]
pub struct LayerMeta {
    pub in_shape: ActShape,
    pub out_shape: ActShape,
    pub param_count: u64,
    pub mac_count: u64,
}

/// Width multiplier with the standard channel rounding: scaled counts snap to
/// the nearest multiple of 8 (never below 8), stepping up one multiple when
/// plain rounding would lose more than 10% of the scaled value.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WidthMultiplier(f64);

impl WidthMultiplier {
    pub fn new(value: f64) -> Result<Self, ModelError> {
        if !(value > 0.0) || !value.is_finite() {
            return Err(ModelError::InvalidWidth(value));
        }
        Ok(Self(value))
    }

    pub fn value(self) -> f64 {
        self.0
    }

    pub fn scale(self, base_channels: usize) -> usize {
        let scaled = base_channels as f64 * self.0;
        let snapped = ((scaled + 4.0) as usize / 8) * 8;
        let snapped = snapped.max(8);
        if (snapped as f64) < 0.9 * scaled {
            snapped + 8
        } else {
            snapped
        }
    }
}

/// Backbone families. `MicroCnn` is a 2-4 block desk-scale variant of the
/// same inverted-residual structure.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "kebab-case")]
pub enum BackboneFamily {
    MobileNetV2Like,
    MicroCnn { blocks: usize, expansion: usize },
}

impl BackboneFamily {
    pub fn label(&self) -> String {
        match self {
            BackboneFamily::MobileNetV2Like => "mobilenet-v2-like".to_string(),
            BackboneFamily::MicroCnn { blocks, expansion } => {
                format!("micro-cnn-b{blocks}e{expansion}")
            }
        }
    }
}

/// Immutable architecture description with fully populated metadata.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(try_from = "SpecManifest", into = "SpecManifest")]
pub struct ModelSpec {
    name: String,
    input_shape: (usize, usize, usize),
    feature_dim: usize,
    layers: Vec<Layer>,
    #[serde(skip)]
    meta: Vec<LayerMeta>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct SpecManifest {
    name: String,
    input_shape: (usize, usize, usize),
    feature_dim: usize,
    layers: Vec<Layer>,
}

impl From<ModelSpec> for SpecManifest {
    fn from(spec: ModelSpec) -> Self {
        SpecManifest {
            name: spec.name,
            input_shape: spec.input_shape,
            feature_dim: spec.feature_dim,
            layers: spec.layers,
        }
    }
}

impl TryFrom<SpecManifest> for ModelSpec {
    type Error = ModelError;
    fn try_from(m: SpecManifest) -> Result<Self, ModelError> {
        let spec = ModelSpec::from_layers(m.name, m.input_shape, m.layers)?;
        if spec.feature_dim != m.feature_dim {
            return Err(ModelError::InputShapeMismatch {
                expected: vec![m.feature_dim],
                actual: vec![spec.feature_dim],
            });
        }
        Ok(spec)
    }
}

impl ModelSpec {
    /// Validates layer-to-layer shape compatibility and computes metadata.
    pub fn from_layers(
        name: String,
        input_shape: (usize, usize, usize),
        layers: Vec<Layer>,
    ) -> Result<Self, ModelError> {
        let (c, h, w) = input_shape;
        let mut shape = ActShape::Chw(c, h, w);
        let mut prev_name = "input".to_string();
        let mut outputs: Vec<ActShape> = Vec::with_capacity(layers.len());
        let mut meta = Vec::with_capacity(layers.len());

        for layer in &layers {
            let in_shape = shape.clone();
            let mismatch = |expected: Vec<usize>| ModelError::LayerShapeMismatch {
                producer: prev_name.clone(),
                consumer: layer.name.clone(),
                produced: in_shape.dims(),
                expected,
            };
            let out_shape = match (&layer.kind, &in_shape) {
                (
                    LayerKind::Conv2d {
                        in_ch,
                        out_ch,
                        kernel,
                        stride,
                    },
                    ActShape::Chw(ci, hi, wi),
                ) => {
                    if ci != in_ch {
                        return Err(mismatch(vec![*in_ch, *hi, *wi]));
                    }
                    ActShape::Chw(
                        *out_ch,
                        conv_out_size(*hi, *kernel, *stride),
                        conv_out_size(*wi, *kernel, *stride),
                    )
                }
                (
                    LayerKind::DepthwiseConv2d {
                        channels,
                        kernel,
                        stride,
                    },
                    ActShape::Chw(ci, hi, wi),
                ) => {
                    if ci != channels {
                        return Err(mismatch(vec![*channels, *hi, *wi]));
                    }
                    ActShape::Chw(
                        *channels,
                        conv_out_size(*hi, *kernel, *stride),
                        conv_out_size(*wi, *kernel, *stride),
                    )
                }
                (LayerKind::PointwiseConv2d { in_ch, out_ch }, ActShape::Chw(ci, hi, wi)) => {
                    if ci != in_ch {
                        return Err(mismatch(vec![*in_ch, *hi, *wi]));
                    }
                    ActShape::Chw(*out_ch, *hi, *wi)
                }
                (LayerKind::Relu6, s) => s.clone(),
                (LayerKind::GlobalAvgPool, ActShape::Chw(ci, _, _)) => ActShape::Flat(*ci),
                (
                    LayerKind::Linear {
                        in_features,
                        out_features,
                    },
                    ActShape::Flat(f),
                ) => {
                    if f != in_features {
                        return Err(mismatch(vec![*in_features]));
                    }
                    ActShape::Flat(*out_features)
                }
                (LayerKind::ResidualAdd { from }, s) => {
                    let source = outputs.get(*from).ok_or_else(|| mismatch(vec![]))?;
                    if source != s {
                        return Err(ModelError::LayerShapeMismatch {
                            producer: layers[*from].name.clone(),
                            consumer: layer.name.clone(),
                            produced: source.dims(),
                            expected: s.dims(),
                        });
                    }
                    s.clone()
                }
                (_, s) => {
                    return Err(ModelError::LayerShapeMismatch {
                        producer: prev_name.clone(),
                        consumer: layer.name.clone(),
                        produced: s.dims(),
                        expected: vec![],
                    })
                }
            };

            let spatial = match &in_shape {
                ActShape::Chw(_, hi, wi) => (*hi, *wi),
                ActShape::Flat(_) => (1, 1),
            };
            meta.push(LayerMeta {
                in_shape: in_shape.clone(),
                out_shape: out_shape.clone(),
                param_count: layer.kind.param_count(),
                mac_count: count_macs(&layer.kind, spatial),
            });
            outputs.push(out_shape.clone());
            shape = out_shape;
            prev_name = layer.name.clone();
        }

        let feature_dim = match shape {
            ActShape::Flat(f) => f,
            ActShape::Chw(..) => {
                return Err(ModelError::LayerShapeMismatch {
                    producer: prev_name,
                    consumer: "embedding".to_string(),
                    produced: shape.dims(),
                    expected: vec![],
                })
            }
        };

        Ok(Self {
            name,
            input_shape,
            feature_dim,
            layers,
            meta,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn input_shape(&self) -> (usize, usize, usize) {
        self.input_shape
    }

    pub fn feature_dim(&self) -> usize {
        self.feature_dim
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn layer(&self, index: usize) -> &Layer {
        &self.layers[index]
    }

    pub fn meta(&self, index: usize) -> &LayerMeta {
        &self.meta[index]
    }

    pub fn metas(&self) -> &[LayerMeta] {
        &self.meta
    }

    pub fn total_params(&self) -> u64 {
        self.meta.iter().map(|m| m.param_count).sum()
    }

    pub fn total_macs(&self) -> u64 {
        self.meta.iter().map(|m| m.mac_count).sum()
    }

    pub fn trainable_layers(&self) -> impl Iterator<Item = (usize, &Layer)> {
        self.layers
            .iter()
            .enumerate()
            .filter(|(_, l)| l.kind.has_weights())
    }

    pub fn conv_layers(&self) -> impl Iterator<Item = (usize, &Layer)> {
        self.layers
            .iter()
            .enumerate()
            .filter(|(_, l)| l.kind.is_conv())
    }

    pub fn last_trainable_layer(&self) -> Option<usize> {
        self.layers.iter().rposition(|l| l.kind.has_weights())
    }
}

/// Inverted-residual unit shared by both families.
struct BlockBuilder {
    layers: Vec<Layer>,
}

impl BlockBuilder {
    fn new(stem: Layer) -> Self {
        let mut layers = vec![stem];
        layers.push(Layer {
            name: "stem.relu".into(),
            kind: LayerKind::Relu6,
        });
        Self { layers }
    }

    fn unit(&mut self, tag: &str, in_ch: usize, out_ch: usize, expansion: usize, stride: usize) {
        let expanded = in_ch * expansion;
        let block_input = self.layers.len() - 1; // index of the layer producing this unit's input
        if expansion != 1 {
            self.layers.push(Layer {
                name: format!("{tag}.expand"),
                kind: LayerKind::PointwiseConv2d {
                    in_ch,
                    out_ch: expanded,
                },
            });
            self.layers.push(Layer {
                name: format!("{tag}.expand_relu"),
                kind: LayerKind::Relu6,
            });
        }
        self.layers.push(Layer {
            name: format!("{tag}.dw"),
            kind: LayerKind::DepthwiseConv2d {
                channels: expanded,
                kernel: 3,
                stride,
            },
        });
        self.layers.push(Layer {
            name: format!("{tag}.dw_relu"),
            kind: LayerKind::Relu6,
        });
        self.layers.push(Layer {
            name: format!("{tag}.project"),
            kind: LayerKind::PointwiseConv2d {
                in_ch: expanded,
                out_ch,
            },
        });
        if stride == 1 && in_ch == out_ch {
            self.layers.push(Layer {
                name: format!("{tag}.add"),
                kind: LayerKind::ResidualAdd { from: block_input },
            });
        }
    }

    fn head(mut self, in_ch: usize, out_ch: usize) -> Vec<Layer> {
        self.layers.push(Layer {
            name: "head".into(),
            kind: LayerKind::PointwiseConv2d { in_ch, out_ch },
        });
        self.layers.push(Layer {
            name: "head.relu".into(),
            kind: LayerKind::Relu6,
        });
        self.layers.push(Layer {
            name: "pool".into(),
            kind: LayerKind::GlobalAvgPool,
        });
        self.layers
    }
}

/// MobileNetV2 inverted-residual schedule: (expansion, channels, repeats, stride).
const MBV2_SCHEDULE: [(usize, usize, usize, usize); 7] = [
    (1, 16, 1, 1),
    (6, 24, 2, 2),
    (6, 32, 3, 2),
    (6, 64, 4, 2),
    (6, 96, 3, 1),
    (6, 160, 3, 2),
    (6, 320, 1, 1),
];

/// Micro-CNN block schedule: (base channels, stride) per block; expansion and
/// block count come from the family parameters.
const MICRO_SCHEDULE: [(usize, usize); 4] = [(16, 2), (16, 1), (24, 2), (24, 1)];

/// Builds a backbone spec with fully populated metadata.
pub fn build_backbone(
    family: BackboneFamily,
    width: WidthMultiplier,
    input_shape: (usize, usize, usize),
) -> Result<ModelSpec, ModelError> {
    let (_, h, w) = input_shape;
    let (layers, divisor) = match family {
        BackboneFamily::MobileNetV2Like => (mbv2_layers(width, input_shape), 1usize << 5),
        BackboneFamily::MicroCnn { blocks, expansion } => {
            let blocks = blocks.clamp(1, MICRO_SCHEDULE.len());
            let stride2 = 1 + MICRO_SCHEDULE[..blocks]
                .iter()
                .filter(|(_, s)| *s == 2)
                .count();
            (
                micro_layers(width, input_shape, blocks, expansion.max(1)),
                1usize << stride2,
            )
        }
    };
    for (dim, value) in [("height", h), ("width", w)] {
        if value % divisor != 0 {
            return Err(ModelError::IndivisibleInput {
                dim: if dim == "height" { "height" } else { "width" },
                value,
                required: divisor,
            });
        }
    }
    ModelSpec::from_layers(family.label(), input_shape, layers)
}

fn mbv2_layers(width: WidthMultiplier, input: (usize, usize, usize)) -> Vec<Layer> {
    let stem_ch = width.scale(32);
    let mut b = BlockBuilder::new(Layer {
        name: "stem".into(),
        kind: LayerKind::Conv2d {
            in_ch: input.0,
            out_ch: stem_ch,
            kernel: 3,
            stride: 2,
        },
    });
    let mut c_in = stem_ch;
    for (bi, (t, c, n, s)) in MBV2_SCHEDULE.iter().enumerate() {
        let c_out = width.scale(*c);
        for unit in 0..*n {
            let stride = if unit == 0 { *s } else { 1 };
            b.unit(&format!("b{bi}.{unit}"), c_in, c_out, *t, stride);
            c_in = c_out;
        }
    }
    b.head(c_in, width.scale(1280))
}

fn micro_layers(
    width: WidthMultiplier,
    input: (usize, usize, usize),
    blocks: usize,
    expansion: usize,
) -> Vec<Layer> {
    let stem_ch = width.scale(8);
    let mut b = BlockBuilder::new(Layer {
        name: "stem".into(),
        kind: LayerKind::Conv2d {
            in_ch: input.0,
            out_ch: stem_ch,
            kernel: 3,
            stride: 2,
        },
    });
    let mut c_in = stem_ch;
    for (bi, (c, s)) in MICRO_SCHEDULE[..blocks].iter().enumerate() {
        let c_out = width.scale(*c);
        b.unit(&format!("b{bi}"), c_in, c_out, expansion, *s);
        c_in = c_out;
    }
    b.head(c_in, width.scale(64))
}

/// Weight and bias tensors for one layer. Every weighted layer carries a bias
/// (folded scale/shift stands in for batch norm).
#[derive(Debug, Clone, PartialEq)]
pub struct LayerParams<T: Scalar> {
    pub weight: Tensor<T>,
    pub bias: Tensor<T>,
}

/// Weight values for a spec, keyed by layer index.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamStore<T: Scalar> {
    version: u64,
    entries: BTreeMap<usize, LayerParams<T>>,
}

impl<T: Scalar> ParamStore<T> {
    /// He-normal initialization of every weighted layer; biases start at zero.
    pub fn init(spec: &ModelSpec, rng: &mut ChaCha12Rng) -> Self {
        let mut entries = BTreeMap::new();
        for (idx, layer) in spec.trainable_layers() {
            let shape = layer.kind.weight_shape().expect("trainable layer");
            let std = (2.0 / layer.kind.fan_in() as f64).sqrt();
            let weight = Tensor::from_fn(&shape, |_| T::from_f64(std * normal(rng)));
            let bias = Tensor::zeros(&[layer.kind.out_channels().expect("trainable layer")]);
            entries.insert(idx, LayerParams { weight, bias });
        }
        Self {
            version: 0,
            entries,
        }
    }

    pub fn from_entries(
        spec: &ModelSpec,
        entries: BTreeMap<usize, LayerParams<T>>,
    ) -> Result<Self, ModelError> {
        let store = Self {
            version: 0,
            entries,
        };
        store.validate(spec)?;
        Ok(store)
    }

    /// Every trainable layer must have exactly one entry of the shape the
    /// spec dictates.
    pub fn validate(&self, spec: &ModelSpec) -> Result<(), ModelError> {
        for (idx, layer) in spec.trainable_layers() {
            let entry = self
                .entries
                .get(&idx)
                .ok_or_else(|| ModelError::MissingParams {
                    layer: layer.name.clone(),
                })?;
            let expected = layer.kind.weight_shape().expect("trainable layer");
            if entry.weight.shape() != expected.as_slice() {
                return Err(ModelError::ParamShapeMismatch {
                    layer: layer.name.clone(),
                    expected,
                    actual: entry.weight.shape().to_vec(),
                });
            }
            let out = layer.kind.out_channels().expect("trainable layer");
            if entry.bias.shape() != [out] {
                return Err(ModelError::ParamShapeMismatch {
                    layer: layer.name.clone(),
                    expected: vec![out],
                    actual: entry.bias.shape().to_vec(),
                });
            }
        }
        Ok(())
    }

    pub fn get(&self, layer: usize) -> Option<&LayerParams<T>> {
        self.entries.get(&layer)
    }

    pub fn get_mut(&mut self, layer: usize) -> Option<&mut LayerParams<T>> {
        self.version += 1;
        self.entries.get_mut(&layer)
    }

    pub fn entries(&self) -> impl Iterator<Item = (usize, &LayerParams<T>)> {
        self.entries.iter().map(|(k, v)| (*k, v))
    }

    pub fn version(&self) -> u64 {
        self.version
    }

    pub fn cast<U: Scalar>(&self) -> ParamStore<U> {
        ParamStore {
            version: self.version,
            entries: self
                .entries
                .iter()
                .map(|(k, v)| {
                    (
                        *k,
                        LayerParams {
                            weight: v.weight.cast(),
                            bias: v.bias.cast(),
                        },
                    )
                })
                .collect(),
        }
    }

    /// Concatenated little-endian bytes of all tensors, for bit-identity checks.
    pub fn byte_image(&self) -> Vec<u8> {
        let mut out = Vec::new();
        for params in self.entries.values() {
            out.extend_from_slice(&params.weight.to_le_bytes());
            out.extend_from_slice(&params.bias.to_le_bytes());
        }
        out
    }
}

/// Standard normal via Box-Muller; depends only on the RNG stream.
pub fn normal(rng: &mut ChaCha12Rng) -> f64 {
    let u1: f64 = rng.gen_range(f64::MIN_POSITIVE..1.0);
    let u2: f64 = rng.gen::<f64>();
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream, stream_rng};

    #[test]
    fn width_scaling_rounds_to_multiples_of_eight() {
        let w = WidthMultiplier::new(0.35).unwrap();
        assert_eq!(w.scale(32), 16); // 11.2 would lose >10% at 8
        assert_eq!(w.scale(16), 8);
        assert_eq!(w.scale(64), 24);
        assert_eq!(w.scale(320), 112);
        let one = WidthMultiplier::new(1.0).unwrap();
        assert_eq!(one.scale(32), 32);
        // floor at 8
        assert_eq!(WidthMultiplier::new(0.05).unwrap().scale(16), 8);
    }

    #[test]
    fn invalid_width_is_rejected() {
        assert!(WidthMultiplier::new(0.0).is_err());
        assert!(WidthMultiplier::new(-1.0).is_err());
        assert!(WidthMultiplier::new(f64::NAN).is_err());
    }

    #[test]
    fn halving_width_halves_scaled_channels_before_rounding() {
        let full = WidthMultiplier::new(1.0).unwrap();
        let half = WidthMultiplier::new(0.5).unwrap();
        for base in [16usize, 24, 32, 64, 96, 160, 320, 1280] {
            assert!((base as f64 * half.value() - base as f64 * full.value() / 2.0).abs() < 1e-12);
        }
    }

    #[test]
    fn mbv2_width_035_matches_published_totals() {
        let spec = build_backbone(
            BackboneFamily::MobileNetV2Like,
            WidthMultiplier::new(0.35).unwrap(),
            (3, 128, 128),
        )
        .unwrap();
        let macs = spec.total_macs() as f64;
        let params = spec.total_params() as f64;
        assert!((macs - 17.4e6).abs() / 17.4e6 < 0.05, "macs={macs}");
        assert!((params - 0.29e6).abs() / 0.29e6 < 0.05, "params={params}");
    }

    #[test]
    fn micro_cnn_one_block_hand_computed_totals() {
        // Width 0.1 floors every channel count to 8; expansion 1 keeps the
        // block at dw + project.
        let spec = build_backbone(
            BackboneFamily::MicroCnn {
                blocks: 1,
                expansion: 1,
            },
            WidthMultiplier::new(0.1).unwrap(),
            (3, 32, 32),
        )
        .unwrap();
        // stem conv 3->8 k3 s2 @32x32 -> 16x16: 8*3*9 + 8 params, 8*3*9*256 macs
        // b0.dw 8ch k3 s2 -> 8x8: 8*9 + 8 params, 8*9*64 macs
        // b0.project 8->8 @8x8: 64 + 8 params, 64*64 macs
        // head 8->8 @8x8: 64 + 8 params, 64*64 macs
        let expected_params = (8 * 3 * 9 + 8) + (8 * 9 + 8) + (64 + 8) + (64 + 8);
        let expected_macs = 8 * 3 * 9 * 256 + 8 * 9 * 64 + 64 * 64 + 64 * 64;
        assert_eq!(spec.total_params(), expected_params as u64);
        assert_eq!(spec.total_macs(), expected_macs as u64);
        assert_eq!(spec.feature_dim(), 8);
    }

    #[test]
    fn metadata_is_pure_and_monotone_in_width() {
        let input = (3, 64, 64);
        let mut prev_params = 0u64;
        let mut prev_macs = 0u64;
        for w in [0.35, 0.5, 0.75, 1.0, 1.4] {
            let spec = build_backbone(
                BackboneFamily::MobileNetV2Like,
                WidthMultiplier::new(w).unwrap(),
                input,
            )
            .unwrap();
            assert!(spec.total_params() >= prev_params);
            assert!(spec.total_macs() >= prev_macs);
            prev_params = spec.total_params();
            prev_macs = spec.total_macs();
        }
    }

    #[test]
    fn mac_ratios_stable_under_resolution_change() {
        let at = |hw: usize| {
            let spec = build_backbone(
                BackboneFamily::MobileNetV2Like,
                WidthMultiplier::new(0.35).unwrap(),
                (3, hw, hw),
            )
            .unwrap();
            spec.total_macs() as f64
        };
        // Per-layer MACs scale with spatial area except the final linear-free
        // head; the family ratio between two widths must be resolution-stable.
        let ratio_128 = at(128) / 17.45e6;
        let ratio_64 = at(64) / (at(128) / 4.0);
        assert!((ratio_128 - 1.0).abs() < 0.05);
        assert!((ratio_64 - 1.0).abs() < 0.05);
    }

    #[test]
    fn indivisible_input_is_rejected() {
        let err = build_backbone(
            BackboneFamily::MobileNetV2Like,
            WidthMultiplier::new(1.0).unwrap(),
            (3, 100, 100),
        )
        .unwrap_err();
        assert!(matches!(err, ModelError::IndivisibleInput { .. }));
    }

    #[test]
    fn count_macs_matches_worked_examples() {
        assert_eq!(
            count_macs(
                &LayerKind::Conv2d {
                    in_ch: 3,
                    out_ch: 8,
                    kernel: 3,
                    stride: 1
                },
                (16, 16)
            ),
            55_296
        );
        assert_eq!(count_macs(&LayerKind::Relu6, (16, 16)), 0);
        // depthwise with 8x8 output
        assert_eq!(
            count_macs(
                &LayerKind::DepthwiseConv2d {
                    channels: 8,
                    kernel: 3,
                    stride: 2
                },
                (16, 16)
            ),
            4_608
        );
    }

    #[test]
    fn param_store_validates_shapes() {
        let spec = build_backbone(
            BackboneFamily::MicroCnn {
                blocks: 1,
                expansion: 2,
            },
            WidthMultiplier::new(1.0).unwrap(),
            (3, 32, 32),
        )
        .unwrap();
        let mut rng = stream_rng(1, stream::INIT, &[]);
        let params = ParamStore::<f32>::init(&spec, &mut rng);
        assert!(params.validate(&spec).is_ok());

        let trainable: Vec<usize> = spec.trainable_layers().map(|(i, _)| i).collect();
        let mut broken: BTreeMap<usize, LayerParams<f32>> = BTreeMap::new();
        for (idx, p) in params.entries() {
            broken.insert(idx, p.clone());
        }
        broken
            .get_mut(&trainable[0])
            .map(|p| p.weight = Tensor::zeros(&[1, 2, 3]));
        let err = ParamStore::from_entries(&spec, broken).unwrap_err();
        assert!(matches!(err, ModelError::ParamShapeMismatch { .. }));
    }

    #[test]
    fn spec_serde_round_trip_preserves_metadata() {
        let spec = build_backbone(
            BackboneFamily::MicroCnn {
                blocks: 2,
                expansion: 2,
            },
            WidthMultiplier::new(1.0).unwrap(),
            (3, 32, 32),
        )
        .unwrap();
        let json = serde_json::to_string(&spec).unwrap();
        let back: ModelSpec = serde_json::from_str(&json).unwrap();
        assert_eq!(back.total_params(), spec.total_params());
        assert_eq!(back.total_macs(), spec.total_macs());
        assert_eq!(back.layers().len(), spec.layers().len());
    }
}
