//! CPU residual UNet with hand-written backward passes.
//!
//! Training runs in `f32`. Every layer is generic over [`Real`], so the same
//! code runs in `f64` for finite-difference gradient checks.

mod adam;
mod checkpoint;
pub mod layers;
mod loss;
mod real;
mod tensor;
mod train;
mod unet;


pub use adam::{adam_update, Adam, BETA1, BETA2, DEFAULT_LR, EPSILON};
pub use checkpoint::{checkpoint_bytes, load_checkpoint, parse_checkpoint, save_checkpoint, MAGIC};
pub use layers::{Mode, Param};
pub use loss::{loss_fine, loss_for_stage, loss_total, LossTerms, LossValue, MSE_FLOOR};
pub use real::Real;
pub use tensor::Tensor;
pub use train::{
    train_stage, train_stage_observed, write_history, HistoryEntry, Stage, TrainConfig,
};
pub use unet::{ModelParams, ResUNet, DEPTH, SPATIAL_MULTIPLE};

use crate::error::{Error, Result};
use crate::image::Image;

/// Eval-mode restoration of a 3-channel image. Dimensions that are not
/// multiples of 16 are reflect-padded on the right/bottom and cropped back.
pub fn restore<T: Real>(model: &mut ResUNet<T>, img: &Image) -> Result<Image> {
    if img.channels() != 3 {
        return Err(Error::Shape(format!(
            "the network restores 3-channel images, got {}",
            img.channels()
        )));
    }
    let (w, h) = (img.width(), img.height());
    let pad = |n: usize| n.div_ceil(SPATIAL_MULTIPLE) * SPATIAL_MULTIPLE - n;
    let padded;
    let input = if pad(w) == 0 && pad(h) == 0 {
        img
    } else {
        padded = img.pad_reflect(pad(w), pad(h))?;
        &padded
    };
    let out = model.forward(&Tensor::from_image(input), Mode::Eval)?;
    let restored = out.to_image(0)?;
    let restored = if restored.width() == w && restored.height() == h {
        restored
    } else {
        restored.crop(0, 0, w, h)?
    };
    Ok(restored.clamped())
}
