//! Asymmetric LiDAR-camera fusion for gait recognition: LiDAR-guided channel
//! attention, an interactive cross-modal temporal transformer, and a fused
//! metric-learning head, together with a synthetic data generator and a
//! training / evaluation harness.

pub mod acca;
pub mod backbone;
pub mod datagen;
pub mod error;
pub mod harness;
pub mod head;
pub mod ictm;
pub mod model;
pub mod nn;
pub mod strategy;

pub use error::{Error, Result};
pub use model::{ForwardOutput, Licaf, ModelConfig};
pub use strategy::Strategy;
