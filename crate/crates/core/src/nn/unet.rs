use crate::error::{Error, Result};
use crate::rng::derive_seed;

use super::layers::{
    concat_channels, split_channels, upsample2, upsample2_backward, Conv2d, MaxPool2, Mode,
    Param, ResidualBlock, Visitor, VisitorMut,
};
use super::real::Real;
use super::tensor::Tensor;

pub const DEPTH: usize = 4;
/// Spatial dims must be divisible by `2^DEPTH`.
pub const SPATIAL_MULTIPLE: usize = 1 << DEPTH;

/// Depth-4 residual UNet with batch normalization.
///
/// Encoder level `l` has `w * 2^l` channels and is followed by 2x2 max-pooling;
/// the bottleneck has `16 w`. Each decoder level upsamples, applies a 3x3
/// convolution halving the channels, concatenates the encoder skip and runs a
/// residual block. A final 1x1 convolution maps back to 3 channels and is
/// added to the input, so the network predicts a correction to the degraded
/// frame. That head starts at zero, making the untrained network the identity.
#[derive(Clone, Debug)]
pub struct ResUNet<T> {
    base_width: usize,
    enc: Vec<ResidualBlock<T>>,
    pools: Vec<MaxPool2>,
    bottleneck: ResidualBlock<T>,
    /// Indexed by decoder step; step `i` works at level `DEPTH - 1 - i`.
    up: Vec<Conv2d<T>>,
    dec: Vec<ResidualBlock<T>>,
    head: Conv2d<T>,
}

/// The trainable network in its default training precision.
pub type ModelParams = ResUNet<f32>;

impl<T: Real> ResUNet<T> {
    /// He-initialised network; identical seeds give bit-identical weights.
    pub fn new(base_width: usize, seed: u64) -> Result<Self> {
        if base_width < 4 {
            return Err(Error::InvalidArgument(format!(
                "base width must be at least 4, got {base_width}"
            )));
        }
        let w = base_width;
        let mut counter = 0u64;
        let mut seeds = move || {
            counter += 1;
            derive_seed(seed, counter)
        };
        let width = |l: usize| w << l;
        let enc = (0..DEPTH)
            .map(|l| {
                let cin = if l == 0 { 3 } else { width(l - 1) };
                ResidualBlock::new(cin, width(l), &mut seeds)
            })
            .collect();
        let bottleneck = ResidualBlock::new(width(DEPTH - 1), width(DEPTH), &mut seeds);
        let mut up = Vec::new();
        let mut dec = Vec::new();
        for l in (0..DEPTH).rev() {
            up.push(Conv2d::new(width(l + 1), width(l), 3, true, seeds()));
            dec.push(ResidualBlock::new(2 * width(l), width(l), &mut seeds));
        }
        let mut head = Conv2d::new(w, 3, 1, true, seeds());
        head.weight.value.fill(T::zero());
        Ok(ResUNet {
            base_width,
            enc,
            pools: vec![MaxPool2::default(); DEPTH],
            bottleneck,
            up,
            dec,
            head,
        })
    }

    pub fn base_width(&self) -> usize {
        self.base_width
    }

    pub fn forward(&mut self, x: &Tensor<T>, mode: Mode) -> Result<Tensor<T>> {
        let [_, c, h, w] = x.shape();
        if c != 3 {
            return Err(Error::Shape(format!("network expects 3 channels, got {c}")));
        }
        if h % SPATIAL_MULTIPLE != 0 || w % SPATIAL_MULTIPLE != 0 || h == 0 || w == 0 {
            return Err(Error::Shape(format!(
                "spatial dims {w}x{h} must be positive multiples of {SPATIAL_MULTIPLE}"
            )));
        }
        let mut skips = Vec::with_capacity(DEPTH);
        let mut h = x.clone();
        for l in 0..DEPTH {
            let e = self.enc[l].forward(&h, mode);
            h = self.pools[l].forward(&e, mode);
            skips.push(e);
        }
        h = self.bottleneck.forward(&h, mode);
        for i in 0..DEPTH {
            let skip = skips.pop().expect("one skip per level");
            let u = self.up[i].forward(&upsample2(&h), mode);
            h = self.dec[i].forward(&concat_channels(&u, &skip), mode);
        }
        let mut out = self.head.forward(&h, mode);
        out.add_assign(x);
        if !out.is_finite() {
            return Err(Error::Numeric("non-finite value in network output".into()));
        }
        Ok(out)
    }

    /// Backpropagates `dout` through the last train-mode forward, accumulating
    /// parameter gradients, and returns the input gradient.
    pub fn backward(&mut self, dout: &Tensor<T>) -> Tensor<T> {
        let mut d = self.head.backward(dout);
        let mut skip_grads = Vec::with_capacity(DEPTH);
        for i in (0..DEPTH).rev() {
            d = self.dec[i].backward(d);
            let (du, dskip) = split_channels(&d, self.base_width << (DEPTH - 1 - i));
            skip_grads.push(dskip);
            d = upsample2_backward(&self.up[i].backward(&du));
        }
        // skip_grads now runs from level 0 upwards.
        d = self.bottleneck.backward(d);
        for l in (0..DEPTH).rev() {
            let mut e = self.pools[l].backward(&d);
            e.add_assign(&skip_grads[l]);
            d = self.enc[l].backward(e);
        }
        d.add_assign(dout);
        d
    }

    pub fn zero_grad(&mut self) {
        self.visit_mut(&mut |_, p| p.zero_grad());
    }

    /// Visits every parameter and buffer in a fixed order with its name.
    pub fn visit(&self, f: &mut Visitor<'_, T>) {
        for (l, b) in self.enc.iter().enumerate() {
            b.visit(&format!("enc{l}"), f);
        }
        self.bottleneck.visit("bottleneck", f);
        for (i, (u, b)) in self.up.iter().zip(&self.dec).enumerate() {
            let l = DEPTH - 1 - i;
            u.visit(&format!("up{l}"), f);
            b.visit(&format!("dec{l}"), f);
        }
        self.head.visit("head", f);
    }

    pub fn visit_mut(&mut self, f: &mut VisitorMut<'_, T>) {
        for (l, b) in self.enc.iter_mut().enumerate() {
            b.visit_mut(&format!("enc{l}"), f);
        }
        self.bottleneck.visit_mut("bottleneck", f);
        for (i, (u, b)) in self.up.iter_mut().zip(&mut self.dec).enumerate() {
            let l = DEPTH - 1 - i;
            u.visit_mut(&format!("up{l}"), f);
            b.visit_mut(&format!("dec{l}"), f);
        }
        self.head.visit_mut("head", f);
    }

    pub fn named(&self) -> Vec<(String, Param<T>)> {
        let mut out = Vec::new();
        self.visit(&mut |name, p| out.push((name, p.clone())));
        out
    }

    /// Number of trainable scalars.
    pub fn parameter_count(&self) -> usize {
        let mut n = 0;
        self.visit(&mut |_, p| {
            if p.trainable {
                n += p.len();
            }
        });
        n
    }

    pub fn encoder_block(&self, level: usize) -> &ResidualBlock<T> {
        &self.enc[level]
    }

    /// Converts every parameter and buffer to another precision.
    pub fn cast<U: Real>(&self) -> ResUNet<U> {
        let mut out = ResUNet::<U>::new(self.base_width, 0).expect("width already validated");
        let src = self.named();
        let mut i = 0;
        out.visit_mut(&mut |_, p| {
            p.value = src[i].1.value.iter().map(|v| U::from_f64(v.as_f64())).collect();
            i += 1;
        });
        out
    }
}
