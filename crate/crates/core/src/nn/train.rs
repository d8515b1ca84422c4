use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::Image;
use crate::rng::{derive_seed, CounterRng};

use super::adam::{Adam, DEFAULT_LR};
use super::layers::Mode;
use super::loss::loss_for_stage;
use super::real::Real;
use super::tensor::Tensor;
use super::unet::{ResUNet, SPATIAL_MULTIPLE};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    Coarse,
    Fine,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Stage::Coarse => "coarse",
            Stage::Fine => "fine",
        })
    }
}

impl FromStr for Stage {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "coarse" => Ok(Stage::Coarse),
            "fine" => Ok(Stage::Fine),
            other => Err(Error::InvalidArgument(format!(
                "unknown stage {other:?} (expected coarse or fine)"
            ))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub base_width: usize,
    pub lr: f64,
    pub batch: usize,
    pub steps: usize,
    pub stage: Stage,
    pub w_ssim: f64,
    pub w_psnr: f64,
    pub w_l2: f64,
    pub w_edge: f64,
    pub psnr_cap: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            base_width: 16,
            lr: DEFAULT_LR,
            batch: 4,
            steps: 1000,
            stage: Stage::Coarse,
            w_ssim: 1.0,
            w_psnr: 1.0,
            w_l2: 1.0,
            w_edge: 1.0,
            psnr_cap: 50.0,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |what: String| Err(Error::InvalidArgument(what));
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return bad(format!("learning rate must be positive, got {}", self.lr));
        }
        for (name, w) in [
            ("w_ssim", self.w_ssim),
            ("w_psnr", self.w_psnr),
            ("w_l2", self.w_l2),
            ("w_edge", self.w_edge),
        ] {
            if !(w >= 0.0 && w.is_finite()) {
                return bad(format!("{name} must be non-negative, got {w}"));
            }
        }
        if !(self.psnr_cap > 0.0 && self.psnr_cap.is_finite()) {
            return bad(format!("psnr cap must be positive, got {}", self.psnr_cap));
        }
        if self.batch == 0 {
            return bad("batch size must be at least 1".into());
        }
        if self.base_width < 4 {
            return bad(format!("base width must be at least 4, got {}", self.base_width));
        }
        Ok(())
    }
}

/// One optimizer step of the loss history.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HistoryEntry {
    pub step: u64,
    pub stage: Stage,
    pub loss: f64,
    pub ssim: f64,
    pub psnr: f64,
    pub mse: f64,
    pub edge: f64,
}

pub fn train_stage<T: Real>(
    model: &mut ResUNet<T>,
    adam: &mut Adam<T>,
    corpus: &[(Image, Image)],
    cfg: &TrainConfig,
) -> Result<Vec<HistoryEntry>> {
    train_stage_observed(model, adam, corpus, cfg, |_| {})
}

/// Runs `cfg.steps` optimizer steps on `(degraded, clean)` pairs, calling
/// `observe` after each. The sample order is a seeded shuffle per epoch, so
/// the run is deterministic given the seed and corpus order.
pub fn train_stage_observed<T: Real>(
    model: &mut ResUNet<T>,
    adam: &mut Adam<T>,
    corpus: &[(Image, Image)],
    cfg: &TrainConfig,
    mut observe: impl FnMut(&HistoryEntry),
) -> Result<Vec<HistoryEntry>> {
    cfg.validate()?;
    let pairs = prepare(corpus)?;
    adam.lr = cfg.lr;

    let mut order: Vec<usize> = Vec::new();
    let mut cursor = 0;
    let mut epoch = 0u64;
    let mut history = Vec::with_capacity(cfg.steps);
    for _ in 0..cfg.steps {
        let mut inputs = Vec::with_capacity(cfg.batch);
        let mut targets = Vec::with_capacity(cfg.batch);
        for _ in 0..cfg.batch {
            if cursor == order.len() {
                order = (0..pairs.len()).collect();
                CounterRng::new(derive_seed(cfg.seed, epoch)).shuffle(&mut order);
                epoch += 1;
                cursor = 0;
            }
            let (x, y) = &pairs[order[cursor]];
            inputs.push(x);
            targets.push(y);
            cursor += 1;
        }
        let x = Tensor::stack(&inputs)?;
        let y = Tensor::stack(&targets)?;

        let step = adam.step + 1;
        let pred = model
            .forward(&x, Mode::Train)
            .map_err(|e| Error::Numeric(format!("step {step} ({}): {e}", cfg.stage)))?;
        let loss = loss_for_stage(&pred, &y, cfg).map_err(|e| {
            Error::Numeric(format!("step {step} ({}): {e}", cfg.stage))
        })?;
        model.zero_grad();
        let _ = model.backward(&loss.grad);
        check_gradients(model, step)?;
        adam.step(model)?;

        let entry = HistoryEntry {
            step: adam.step,
            stage: cfg.stage,
            loss: loss.total,
            ssim: loss.terms.ssim,
            psnr: loss.terms.psnr,
            mse: loss.terms.mse,
            edge: loss.terms.edge,
        };
        observe(&entry);
        history.push(entry);
    }
    Ok(history)
}

fn prepare<T: Real>(corpus: &[(Image, Image)]) -> Result<Vec<(Tensor<T>, Tensor<T>)>> {
    let Some((first, _)) = corpus.first() else {
        return Err(Error::InvalidArgument("training corpus is empty".into()));
    };
    corpus
        .iter()
        .enumerate()
        .map(|(i, (x, y))| {
            if !x.same_shape(y) || !x.same_shape(first) {
                return Err(Error::Shape(format!(
                    "pair {i}: all images must share one shape ({}x{}x{})",
                    first.width(),
                    first.height(),
                    first.channels()
                )));
            }
            if x.width() % SPATIAL_MULTIPLE != 0 || x.height() % SPATIAL_MULTIPLE != 0 {
                return Err(Error::Shape(format!(
                    "training patches must be multiples of {SPATIAL_MULTIPLE}, got {}x{}",
                    x.width(),
                    x.height()
                )));
            }
            Ok((Tensor::from_image(x), Tensor::from_image(y)))
        })
        .collect()
}

fn check_gradients<T: Real>(model: &ResUNet<T>, step: u64) -> Result<()> {
    let mut bad = None;
    model.visit(&mut |name, p| {
        if bad.is_none() && p.grad.iter().any(|g| !g.is_finite()) {
            bad = Some(name);
        }
    });
    match bad {
        Some(name) => Err(Error::Numeric(format!(
            "step {step}: non-finite gradient in {name}"
        ))),
        None => Ok(()),
    }
}

pub fn write_history(path: impl AsRef<Path>, history: &[HistoryEntry]) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::io(path, e.into()))?;
    for entry in history {
        w.serialize(entry).map_err(|e| Error::io(path, e.into()))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}
