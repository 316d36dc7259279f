//! Error types shared across the engine.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum TensorError {
    #[error("shape {shape:?} implies {} elements but data has {data_len}", shape.iter().product::<usize>())]
    ShapeDataMismatch { shape: Vec<usize>, data_len: usize },
    #[error("shape {shape:?} needs {expected} bytes but blob has {actual}")]
    ByteLengthMismatch {
        shape: Vec<usize>,
        expected: usize,
        actual: usize,
    },
}

/// Structural problems in a model description or a forward/backward call.
#[derive(Debug, Error)]
pub enum ModelError {
    #[error("layer '{producer}' outputs shape {produced:?} but layer '{consumer}' expects {expected:?}")]
    LayerShapeMismatch {
        producer: String,
        consumer: String,
        produced: Vec<usize>,
        expected: Vec<usize>,
    },
    #[error("input shape {actual:?} does not match the model's declared input {expected:?}")]
    InputShapeMismatch {
        expected: Vec<usize>,
        actual: Vec<usize>,
    },
    #[error("width multiplier must be positive, got {0}")]
    InvalidWidth(f64),
    #[error("input {dim} of {value} is not compatible with the stride schedule (needs divisibility by {required})")]
    IndivisibleInput {
        dim: &'static str,
        value: usize,
        required: usize,
    },
    #[error("activation cache has no entry for trainable layer '{layer}'")]
    MissingCacheEntry { layer: String },
    #[error("parameter store has no weights for layer '{layer}'")]
    MissingParams { layer: String },
    #[error("weights for layer '{layer}' have shape {actual:?}, spec requires {expected:?}")]
    ParamShapeMismatch {
        layer: String,
        expected: Vec<usize>,
        actual: Vec<usize>,
    },
    #[error(transparent)]
    Tensor(#[from] TensorError),
}

/// Numeric failures during a pass; these carry the layer they surfaced in.
#[derive(Debug, Error)]
pub enum NumericError {
    #[error("non-finite gradient in layer '{layer}'")]
    NonFiniteGradient { layer: String },
    #[error("non-finite activation in layer '{layer}'")]
    NonFiniteActivation { layer: String },
    #[error("zero-norm vector in {context} (cosine distance undefined)")]
    ZeroNorm { context: &'static str },
    #[error("training diverged: non-finite loss at epoch {epoch}, episode {episode}")]
    Divergence { epoch: usize, episode: usize },
}

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("not a checkpoint file: bad magic {0:?}")]
    BadMagic([u8; 4]),
    #[error("checkpoint format version {found} unsupported (expected {expected})")]
    VersionMismatch { expected: u32, found: u32 },
    #[error("checkpoint blob for layer '{layer}' is truncated: wanted {expected} bytes at offset {offset}, file holds {available}")]
    TruncatedBlob {
        layer: String,
        offset: u64,
        expected: usize,
        available: usize,
    },
    #[error("checkpoint tensor '{layer}' has shape {actual:?}, spec requires {expected:?}")]
    ShapeMismatch {
        layer: String,
        expected: Vec<usize>,
        actual: Vec<usize>,
    },
    #[error("checkpoint manifest is not valid JSON: {0}")]
    Manifest(#[from] serde_json::Error),
    #[error("checkpoint manifest layer count {manifest} does not match spec layer count {spec}")]
    LayerCountMismatch { manifest: usize, spec: usize },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("not a dataset file: bad magic {0:?}")]
    BadMagic([u8; 4]),
    #[error("dataset format version {found} unsupported (expected {expected})")]
    VersionMismatch { expected: u32, found: u32 },
    #[error("dataset blob holds {actual} bytes, header implies {expected}")]
    BlobSizeMismatch { expected: usize, actual: usize },
    #[error("sample {index} has label {label} >= class count {classes}")]
    LabelOutOfRange {
        index: usize,
        label: u32,
        classes: u32,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Episode sampling failures.
#[derive(Debug, Error)]
pub enum SampleError {
    #[error("dataset has {classes} usable classes, sampler needs at least {needed}")]
    TooFewClasses { classes: usize, needed: usize },
    #[error("class {class} has no examples")]
    EmptyClass { class: usize },
    #[error("episode support set is empty")]
    EmptySupport,
    #[error("class {class} of the support set is empty")]
    EmptySupportClass { class: usize },
}

#[derive(Debug, Error)]
#[error("{path}:{line}: {message}")]
pub struct ConfigError {
    pub path: String,
    pub line: usize,
    pub message: String,
}

#[derive(Debug, Error)]
pub enum PlanError {
    #[error("plan references layer {layer} but the spec has {layers} layers")]
    UnknownLayer { layer: usize, layers: usize },
    #[error("plan selects layer '{layer}' which has no trainable weights")]
    NotTrainable { layer: String },
    #[error("plan channel {channel} out of range for layer '{layer}' ({channels} channels)")]
    ChannelOutOfRange {
        layer: String,
        channel: usize,
        channels: usize,
    },
    #[error("plan selects no channels for layer '{layer}'")]
    EmptyChannelSet { layer: String },
}

/// Top-level error for library entry points and the CLI.
#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Numeric(#[from] NumericError),
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Sample(#[from] SampleError),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Plan(#[from] PlanError),
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
