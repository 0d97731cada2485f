//! Dual-encoder focus regression network with hand-written backpropagation.
//!
//! All arithmetic is `f64`; activations are processed one sample at a time
//! and gradients are summed over a batch by the caller.

pub mod encoder;
pub mod ffc;
pub mod fft;
pub mod layers;
pub mod model;
pub mod params;
pub mod tensor;
pub mod weights;

pub use encoder::{Encoder, EncoderKind};
pub use model::{normalize, FocusModel, ForwardCache, ModelConfig, NormalizationStats, Variant, DEFAULT_BASE_CHANNELS, TILE_SIZE};
pub use params::{Grads, Param, ParamSet};
pub use tensor::FeatureMap;
pub use weights::{load_weights, save_weights};
