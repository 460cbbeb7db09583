//! JaneEye-Net: convolutional backbone, gMLP, ConvJANET and pupil head.

pub mod config;
pub mod forward;
pub mod lstm;
pub mod ops;
pub mod weights;

pub use config::{ConfigError, Dims, LayerKind, LayerSpec, ModelConfig, OpKind, OpSpec, TensorFormats};
pub use forward::{
    forward_sequence, frame_to_fixed, frame_to_real, mean_pixel_error, real_to_fixed, to_pixels, CounterReport, FixedEngine, FixedStep, LayerCounters, Mode,
    ModelWeights, NetworkError, Prediction, ReferenceEngine, SequenceResult, Trace, TraceEntry,
};
pub use ops::{OpStats, ReferenceActivations};
pub use weights::{ConvParams, FixedWeights, FloatWeights, WeightError, WeightSet};
