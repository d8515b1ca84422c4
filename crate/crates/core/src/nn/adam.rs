use crate::error::{Error, Result};

use super::real::Real;
use super::unet::ResUNet;

pub const BETA1: f64 = 0.9;
pub const BETA2: f64 = 0.999;
pub const EPSILON: f64 = 1e-8;
pub const DEFAULT_LR: f64 = 1e-4;

/// Bias-corrected Adam on one parameter vector; `t` is the 1-based step.
pub fn adam_update<T: Real>(
    params: &mut [T],
    grads: &[T],
    m: &mut [T],
    v: &mut [T],
    lr: f64,
    t: u64,
) -> Result<()> {
    if grads.len() != params.len() || m.len() != params.len() || v.len() != params.len() {
        return Err(Error::Shape(format!(
            "adam: {} params, {} grads, {}/{} moments",
            params.len(),
            grads.len(),
            m.len(),
            v.len()
        )));
    }
    if t == 0 {
        return Err(Error::InvalidArgument("adam step index starts at 1".into()));
    }
    let c1 = 1.0 - BETA1.powf(t as f64);
    let c2 = 1.0 - BETA2.powf(t as f64);
    for i in 0..params.len() {
        let g = grads[i].as_f64();
        let mi = BETA1 * m[i].as_f64() + (1.0 - BETA1) * g;
        let vi = BETA2 * v[i].as_f64() + (1.0 - BETA2) * g * g;
        m[i] = T::from_f64(mi);
        v[i] = T::from_f64(vi);
        let step = lr * (mi / c1) / ((vi / c2).sqrt() + EPSILON);
        params[i] = T::from_f64(params[i].as_f64() - step);
    }
    Ok(())
}

/// Optimizer state for every trainable tensor of a network, in visit order.
#[derive(Clone, Debug, PartialEq)]
pub struct Adam<T> {
    pub lr: f64,
    pub step: u64,
    pub m: Vec<Vec<T>>,
    pub v: Vec<Vec<T>>,
}

impl<T: Real> Adam<T> {
    pub fn new(lr: f64) -> Self {
        Adam {
            lr,
            step: 0,
            m: Vec::new(),
            v: Vec::new(),
        }
    }

    /// Applies one update from the accumulated gradients. BN running
    /// statistics are buffers and are never touched.
    pub fn step(&mut self, model: &mut ResUNet<T>) -> Result<()> {
        if self.m.is_empty() {
            model.visit(&mut |_, p| {
                if p.trainable {
                    self.m.push(vec![T::zero(); p.len()]);
                    self.v.push(vec![T::zero(); p.len()]);
                }
            });
        }
        self.step += 1;
        let (lr, t) = (self.lr, self.step);
        let mut i = 0;
        let mut result = Ok(());
        let (m, v) = (&mut self.m, &mut self.v);
        model.visit_mut(&mut |name, p| {
            if !p.trainable || result.is_err() {
                return;
            }
            result = match (m.get_mut(i), v.get_mut(i)) {
                (Some(mi), Some(vi)) => adam_update(&mut p.value, &p.grad, mi, vi, lr, t)
                    .map_err(|e| Error::Shape(format!("{name}: {e}"))),
                _ => Err(Error::Shape(format!("no optimizer state for {name}"))),
            };
            i += 1;
        });
        result?;
        if i != self.m.len() {
            return Err(Error::Shape(format!(
                "optimizer holds {} tensors, model has {i}",
                self.m.len()
            )));
        }
        Ok(())
    }
}
