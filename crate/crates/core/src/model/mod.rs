//! The hybrid decoder: configuration, construction, incremental decoding,
//! structural rewrites and persistence.

pub mod checkpoint;
mod config;
mod hybrid;
mod quant;

pub use config::{HybridConfig, LayerSpec, MixerKind, MlpKind, ParamCount};
pub use hybrid::{argmax, DecodeSession, ForwardOutput, HybridModel, Layer, Mixer, Mlp, ModelInput, PruneStatus};
pub use quant::{is_quantized_weight, QuantizedModel, QuantizedTensor};
