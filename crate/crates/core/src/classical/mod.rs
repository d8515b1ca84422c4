//! Non-learned restoration baselines: Gaussian, bilateral, non-local means,
//! Perona-Malik diffusion and total-variation denoisers, plus
//! Richardson-Lucy and Wiener deconvolution.
//!
//! [`RestoreConfig`] names a method with its parameters and is what the
//! CLI and the benchmark harness pass around.

mod deconv;
mod denoise;

use serde::{Deserialize, Serialize};

pub use deconv::{kernel_transfer, richardson_lucy, wiener_deconvolve, wiener_response};
pub use denoise::{
    anisotropic_diffuse, bilateral_denoise, estimate_noise_sigma, gaussian_denoise,
    gaussian_kernel, nlm_denoise, tv_denoise,
};

use crate::degrade::BlurSpec;
use crate::error::{invalid, Result};
use crate::image::{Image, Kernel2D};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "snake_case")]
pub enum RestoreConfig {
    Gaussian {
        sigma: f64,
    },
    Bilateral {
        sigma_s: f64,
        sigma_r: f64,
    },
    Nlm {
        patch_radius: usize,
        search_radius: usize,
        h: f64,
        /// Noise level for the distance offset; estimated when absent.
        noise_sigma: Option<f64>,
    },
    Anisotropic {
        iterations: usize,
        k: f64,
        dt: f64,
    },
    Tv {
        lambda: f64,
        iterations: usize,
    },
    RichardsonLucy {
        iterations: usize,
        /// Blur to invert; the caller's known kernel is used when absent.
        kernel: Option<BlurSpec>,
    },
    Wiener {
        nsr: f64,
        kernel: Option<BlurSpec>,
    },
}

pub const METHOD_NAMES: [&str; 7] = [
    "gaussian",
    "bilateral",
    "nlm",
    "anisotropic",
    "tv",
    "richardson_lucy",
    "wiener",
];

impl RestoreConfig {
    /// Defaults tuned for AWGN around sigma 25 (8-bit) on 128x128 frames.
    pub fn default_for(name: &str) -> Result<RestoreConfig> {
        Ok(match name {
            "gaussian" => RestoreConfig::Gaussian { sigma: 1.0 },
            "bilateral" => RestoreConfig::Bilateral {
                sigma_s: 1.5,
                sigma_r: 0.2,
            },
            "nlm" => RestoreConfig::Nlm {
                patch_radius: 2,
                search_radius: 5,
                h: 0.08,
                noise_sigma: None,
            },
            "anisotropic" => RestoreConfig::Anisotropic {
                iterations: 15,
                k: 0.15,
                dt: 0.2,
            },
            "tv" => RestoreConfig::Tv {
                lambda: 10.0,
                iterations: 100,
            },
            "richardson_lucy" | "rl" => RestoreConfig::RichardsonLucy {
                iterations: 30,
                kernel: None,
            },
            "wiener" => RestoreConfig::Wiener {
                nsr: 1e-3,
                kernel: None,
            },
            other => {
                return Err(invalid!(
                    "unknown method {other:?}; expected one of {}",
                    METHOD_NAMES.join(", ")
                ))
            }
        })
    }

    /// Defaults for `name` overridden by `key=value` pairs.
    pub fn from_params<K: AsRef<str>, V: AsRef<str>>(
        name: &str,
        params: &[(K, V)],
    ) -> Result<RestoreConfig> {
        let mut cfg = RestoreConfig::default_for(name)?;
        for (key, value) in params {
            cfg.set(key.as_ref(), value.as_ref())?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    fn set(&mut self, key: &str, value: &str) -> Result<()> {
        fn num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
            value
                .trim()
                .parse()
                .map_err(|_| invalid!("bad value {value:?} for parameter {key}"))
        }
        let method = self.name();
        match (self, key) {
            (RestoreConfig::Gaussian { sigma }, "sigma") => *sigma = num(key, value)?,
            (RestoreConfig::Bilateral { sigma_s, .. }, "sigma_s") => *sigma_s = num(key, value)?,
            (RestoreConfig::Bilateral { sigma_r, .. }, "sigma_r") => *sigma_r = num(key, value)?,
            (RestoreConfig::Nlm { patch_radius, .. }, "patch_radius") => {
                *patch_radius = num(key, value)?
            }
            (RestoreConfig::Nlm { search_radius, .. }, "search_radius") => {
                *search_radius = num(key, value)?
            }
            (RestoreConfig::Nlm { h, .. }, "h") => *h = num(key, value)?,
            (RestoreConfig::Nlm { noise_sigma, .. }, "noise_sigma") => {
                *noise_sigma = Some(num(key, value)?)
            }
            (RestoreConfig::Anisotropic { iterations, .. }, "iterations")
            | (RestoreConfig::Tv { iterations, .. }, "iterations")
            | (RestoreConfig::RichardsonLucy { iterations, .. }, "iterations") => {
                *iterations = num(key, value)?
            }
            (RestoreConfig::Anisotropic { k, .. }, "k") => *k = num(key, value)?,
            (RestoreConfig::Anisotropic { dt, .. }, "dt") => *dt = num(key, value)?,
            (RestoreConfig::Tv { lambda, .. }, "lambda") => *lambda = num(key, value)?,
            (RestoreConfig::Wiener { nsr, .. }, "nsr") => *nsr = num(key, value)?,
            (RestoreConfig::RichardsonLucy { kernel, .. }, "kernel")
            | (RestoreConfig::Wiener { kernel, .. }, "kernel") => {
                *kernel = Some(BlurSpec::parse(value)?)
            }
            _ => return Err(invalid!("method {method} has no parameter {key:?}")),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |name: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(invalid!("{name} must be positive, got {v}"))
            }
        };
        let at_least_one = |name: &str, v: usize| {
            if v >= 1 {
                Ok(())
            } else {
                Err(invalid!("{name} must be at least 1"))
            }
        };
        match *self {
            RestoreConfig::Gaussian { sigma } => positive("sigma", sigma),
            RestoreConfig::Bilateral { sigma_s, sigma_r } => {
                positive("sigma_s", sigma_s)?;
                positive("sigma_r", sigma_r)
            }
            RestoreConfig::Nlm {
                patch_radius,
                search_radius,
                h,
                ..
            } => {
                at_least_one("patch_radius", patch_radius)?;
                at_least_one("search_radius", search_radius)?;
                positive("h", h)
            }
            RestoreConfig::Anisotropic { iterations, k, dt } => {
                at_least_one("iterations", iterations)?;
                positive("k", k)?;
                positive("dt", dt)
            }
            RestoreConfig::Tv { lambda, iterations } => {
                positive("lambda", lambda)?;
                at_least_one("iterations", iterations)
            }
            RestoreConfig::RichardsonLucy { iterations, .. } => {
                at_least_one("iterations", iterations)
            }
            RestoreConfig::Wiener { nsr, .. } => {
                if nsr >= 0.0 && nsr.is_finite() {
                    Ok(())
                } else {
                    Err(invalid!("nsr must be non-negative, got {nsr}"))
                }
            }
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            RestoreConfig::Gaussian { .. } => "gaussian",
            RestoreConfig::Bilateral { .. } => "bilateral",
            RestoreConfig::Nlm { .. } => "nlm",
            RestoreConfig::Anisotropic { .. } => "anisotropic",
            RestoreConfig::Tv { .. } => "tv",
            RestoreConfig::RichardsonLucy { .. } => "richardson_lucy",
            RestoreConfig::Wiener { .. } => "wiener",
        }
    }

    pub fn is_deconvolution(&self) -> bool {
        matches!(
            self,
            RestoreConfig::RichardsonLucy { .. } | RestoreConfig::Wiener { .. }
        )
    }

    /// Runs the method. Deconvolvers use their own kernel if configured,
    /// else `known_kernel`, else the identity.
    pub fn apply(&self, img: &Image, known_kernel: Option<&Kernel2D>) -> Result<Image> {
        let resolve = |own: &Option<BlurSpec>| -> Result<Kernel2D> {
            match (own, known_kernel) {
                (Some(spec), _) => spec.kernel(),
                (None, Some(k)) => Ok(k.clone()),
                (None, None) => Ok(Kernel2D::identity()),
            }
        };
        match self {
            RestoreConfig::Gaussian { sigma } => gaussian_denoise(img, *sigma),
            RestoreConfig::Bilateral { sigma_s, sigma_r } => {
                bilateral_denoise(img, *sigma_s, *sigma_r)
            }
            RestoreConfig::Nlm {
                patch_radius,
                search_radius,
                h,
                noise_sigma,
            } => nlm_denoise(img, *patch_radius, *search_radius, *h, *noise_sigma),
            RestoreConfig::Anisotropic { iterations, k, dt } => {
                anisotropic_diffuse(img, *iterations, *k, *dt)
            }
            RestoreConfig::Tv { lambda, iterations } => tv_denoise(img, *lambda, *iterations),
            RestoreConfig::RichardsonLucy { iterations, kernel } => {
                richardson_lucy(img, &resolve(kernel)?, *iterations)
            }
            RestoreConfig::Wiener { nsr, kernel } => {
                wiener_deconvolve(img, &resolve(kernel)?, *nsr)
            }
        }
    }
}

#[cfg(test)]
mod tests;
