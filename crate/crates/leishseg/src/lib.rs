//! From-scratch semantic segmentation of Leishmania micrographs.
//!
//! The crate trains a small U-Net with the Generalized Dice Loss under a
//! two-stage patch sampling scheme, post-processes the argmax output with
//! connected components and a size filter, and reports pixel and region
//! metrics. Everything numeric (tensors, layers, Adam, the loss) is
//! implemented here directly so each gradient can be verified against
//! finite differences.
//!
//! Start with the runnable examples: `gradient_check`, `synthesize_dataset`,
//! `train_desk`, `predict_image`, `evaluate_predictions` and `full_pipeline`
//! walk through every stage on desk-scale synthetic data.

pub mod config;
pub mod data;
pub mod error;
pub mod loss;
pub mod metrics;
pub mod pipeline;
pub mod postprocess;
pub mod report;
pub mod rng;
pub mod tensor;
pub mod unet;
pub mod verify;

pub use error::{Error, Result};
pub use tensor::{AdamHyper, ParamTensor, Scalar, Tensor};
pub use unet::{build_unet, UNet, UNetConfig};
