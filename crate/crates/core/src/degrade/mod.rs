//! Forward degradation model: blur followed by noise, each step seeded.
//!
//! A [`DegradationRecipe`] is an ordered list of [`Step`]s. Step `i` draws
//! its randomness from `derive_seed(master_seed, i)`, so inserting a step
//! never makes another step reuse a stream. Output is clamped after every
//! step.

mod kernel;
mod noise;

use serde::{Deserialize, Serialize};

pub use kernel::{disk_kernel, motion_kernel};
pub use noise::{add_awgn, add_poisson, add_salt_pepper, add_speckle};

use crate::error::{invalid, Result};
use crate::image::{convolve, Image, Kernel2D};
use crate::rng::derive_seed;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum NoiseSpec {
    /// Standard deviation in 8-bit units.
    Awgn { sigma: f64 },
    Speckle { sigma: f64 },
    SaltPepper { p: f64 },
    /// Expected event count at sample value 1.0.
    Poisson { peak: f64 },
}

impl NoiseSpec {
    pub fn apply(&self, img: &Image, seed: u64) -> Result<Image> {
        match *self {
            NoiseSpec::Awgn { sigma } => add_awgn(img, sigma, seed),
            NoiseSpec::Speckle { sigma } => add_speckle(img, sigma, seed),
            NoiseSpec::SaltPepper { p } => add_salt_pepper(img, p, seed),
            NoiseSpec::Poisson { peak } => add_poisson(img, peak, seed),
        }
    }

    /// Parses `awgn:SIGMA`, `speckle:SIGMA`, `sp:P` (or `salt_pepper:P`) and
    /// `poisson:PEAK`.
    pub fn parse(text: &str) -> Result<NoiseSpec> {
        let (kind, value) = text
            .split_once(':')
            .ok_or_else(|| invalid!("noise spec {text:?} is not KIND:VALUE"))?;
        let v: f64 = value
            .trim()
            .parse()
            .map_err(|_| invalid!("bad number {value:?} in noise spec {text:?}"))?;
        match kind.trim() {
            "awgn" => Ok(NoiseSpec::Awgn { sigma: v }),
            "speckle" => Ok(NoiseSpec::Speckle { sigma: v }),
            "sp" | "salt_pepper" => Ok(NoiseSpec::SaltPepper { p: v }),
            "poisson" => Ok(NoiseSpec::Poisson { peak: v }),
            other => Err(invalid!("unknown noise kind {other:?}")),
        }
    }

    pub fn label(&self) -> String {
        match *self {
            NoiseSpec::Awgn { sigma } => format!("awgn{sigma}"),
            NoiseSpec::Speckle { sigma } => format!("speckle{sigma}"),
            NoiseSpec::SaltPepper { p } => format!("sp{p}"),
            NoiseSpec::Poisson { peak } => format!("poisson{peak}"),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BlurSpec {
    Motion { length: u32, angle: f64 },
    Disk { radius: f64 },
}

impl BlurSpec {
    pub fn kernel(&self) -> Result<Kernel2D> {
        match *self {
            BlurSpec::Motion { length, angle } => motion_kernel(length, angle),
            BlurSpec::Disk { radius } => disk_kernel(radius),
        }
    }

    pub fn label(&self) -> String {
        match *self {
            BlurSpec::Motion { length, angle } => format!("motion{length}@{angle}"),
            BlurSpec::Disk { radius } => format!("disk{radius}"),
        }
    }

    /// Parses `motion:LEN:ANGLE` or `disk:RADIUS`.
    pub fn parse(text: &str) -> Result<BlurSpec> {
        let parts: Vec<&str> = text.split(':').collect();
        let num = |s: &str| {
            s.trim()
                .parse::<f64>()
                .map_err(|_| invalid!("bad number {s:?} in blur spec {text:?}"))
        };
        match parts.as_slice() {
            ["motion", len, angle] => Ok(BlurSpec::Motion {
                length: len
                    .trim()
                    .parse()
                    .map_err(|_| invalid!("bad motion length {len:?}"))?,
                angle: num(angle)?,
            }),
            ["disk", r] => Ok(BlurSpec::Disk { radius: num(r)? }),
            _ => Err(invalid!(
                "blur spec {text:?} is not motion:LEN:ANGLE or disk:RADIUS"
            )),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Step {
    Blur(BlurSpec),
    Noise(NoiseSpec),
}

impl Step {
    pub fn apply(&self, img: &Image, seed: u64) -> Result<Image> {
        let out = match self {
            Step::Blur(b) => convolve(img, &b.kernel()?)?,
            Step::Noise(n) => n.apply(img, seed)?,
        };
        Ok(out.clamped())
    }

    /// Parses a blur (`motion:..`, `disk:..`) or noise step.
    pub fn parse(text: &str) -> Result<Step> {
        let kind = text.split(':').next().unwrap_or("").trim();
        if kind == "motion" || kind == "disk" {
            BlurSpec::parse(text).map(Step::Blur)
        } else {
            NoiseSpec::parse(text).map(Step::Noise)
        }
    }

    pub fn label(&self) -> String {
        match self {
            Step::Blur(b) => b.label(),
            Step::Noise(n) => n.label(),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct DegradationRecipe {
    pub steps: Vec<Step>,
    pub master_seed: u64,
}

impl DegradationRecipe {
    pub fn new(steps: Vec<Step>, master_seed: u64) -> Self {
        DegradationRecipe { steps, master_seed }
    }

    /// Blur steps first, then noise steps, each group in the given order.
    pub fn blur_then_noise(blurs: &[BlurSpec], noises: &[NoiseSpec], master_seed: u64) -> Self {
        let steps = blurs
            .iter()
            .copied()
            .map(Step::Blur)
            .chain(noises.iter().copied().map(Step::Noise))
            .collect();
        DegradationRecipe { steps, master_seed }
    }

    pub fn step_seed(&self, index: usize) -> u64 {
        derive_seed(self.master_seed, index as u64)
    }

    /// The first blur step's kernel, if any. Non-blind deconvolvers use it.
    pub fn blur_kernel(&self) -> Result<Option<Kernel2D>> {
        self.steps
            .iter()
            .find_map(|s| match s {
                Step::Blur(b) => Some(b.kernel()),
                Step::Noise(_) => None,
            })
            .transpose()
    }

    pub fn label(&self) -> String {
        if self.steps.is_empty() {
            return "clean".to_string();
        }
        self.steps
            .iter()
            .map(Step::label)
            .collect::<Vec<_>>()
            .join("+")
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("recipes serialize")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| invalid!("bad recipe JSON: {e}"))
    }
}

pub fn apply_recipe(img: &Image, recipe: &DegradationRecipe) -> Result<Image> {
    let mut out = img.clone();
    for (i, step) in recipe.steps.iter().enumerate() {
        out = step.apply(&out, recipe.step_seed(i))?;
    }
    Ok(out)
}
