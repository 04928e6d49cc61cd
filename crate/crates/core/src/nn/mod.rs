//! Minimal layer toolkit on top of candle tensors.

mod conv;
mod layers;
mod norm;
mod params;

pub use conv::conv2d;
pub use norm::batch_normalize;
pub use layers::{log_softmax_last, softmax_last, BatchNorm2d, LayerNorm, Linear, Mode};
pub use params::{ParamStore, Scope};
