//! Synthetic degradation, restoration and evaluation of endoscopy-style frames.
//!
//! The crate is organised bottom-up:
//!
//! * [`image`] holds the planar floating-point raster, file I/O, convolution
//!   with reflect-101 borders, Sobel gradients and patch sampling.
//! * [`color`] estimates white-balance gains and renders raw RGB to sRGB.
//! * [`degrade`] builds blur kernels and seeded noise, composed by recipes.
//! * [`metrics`] implements MSE, PSNR, windowed SSIM and the Sobel edge loss.
//! * [`classical`] contains the non-learned denoisers and deconvolvers.
//! * [`nn`] is a small CPU residual UNet with hand-written backward passes,
//!   its losses, Adam, the two-stage trainer and checkpoints.
//! * [`harness`] generates synthetic corpora and runs the benchmark matrix.

pub mod classical;
pub mod color;
pub mod degrade;
mod error;
pub mod harness;
pub mod image;
pub mod metrics;
pub mod nn;
pub mod rng;

pub use classical::RestoreConfig;
pub use color::ColorPipeline;
pub use degrade::{BlurSpec, DegradationRecipe, NoiseSpec, Step};
pub use error::{Error, Result};
pub use image::{Image, Kernel2D};
pub use metrics::MetricReport;
pub use nn::{ModelParams, Tensor, TrainConfig};
