//! Seeded noise models. Every function clamps its output to `[0, 1]`.

use rand_distr::{Distribution, Poisson};

use crate::error::{invalid, Result};
use crate::image::Image;
use crate::rng::CounterRng;

/// Additive Gaussian noise with standard deviation `sigma8 / 255`.
pub fn add_awgn(img: &Image, sigma8: f64, seed: u64) -> Result<Image> {
    if !(sigma8 >= 0.0 && sigma8.is_finite()) {
        return Err(invalid!("AWGN sigma must be non-negative, got {sigma8}"));
    }
    if sigma8 == 0.0 {
        return Ok(img.clone());
    }
    let sigma = sigma8 / 255.0;
    let mut eta = vec![0.0; img.data().len()];
    CounterRng::new(seed).fill_normal(&mut eta);
    let data = img
        .data()
        .iter()
        .zip(&eta)
        .map(|(v, n)| (v + sigma * n).clamp(0.0, 1.0))
        .collect();
    img.with_data(data)
}

/// Multiplicative noise `v * (1 + eta)`, `eta ~ N(0, sigma^2)`.
pub fn add_speckle(img: &Image, sigma: f64, seed: u64) -> Result<Image> {
    if !(sigma >= 0.0 && sigma.is_finite()) {
        return Err(invalid!("speckle sigma must be non-negative, got {sigma}"));
    }
    if sigma == 0.0 {
        return Ok(img.clone());
    }
    let mut eta = vec![0.0; img.data().len()];
    CounterRng::new(seed).fill_normal(&mut eta);
    let data = img
        .data()
        .iter()
        .zip(&eta)
        .map(|(v, n)| (v * (1.0 + sigma * n)).clamp(0.0, 1.0))
        .collect();
    img.with_data(data)
}

/// Each pixel (all channels together) becomes black with probability
/// `p / 2`, white with probability `p / 2`.
pub fn add_salt_pepper(img: &Image, p: f64, seed: u64) -> Result<Image> {
    if !(0.0..=1.0).contains(&p) {
        return Err(invalid!("salt-and-pepper probability must lie in [0, 1], got {p}"));
    }
    let n = img.plane_len();
    let mut rng = CounterRng::new(seed);
    let mut data = img.data().to_vec();
    for i in 0..n {
        let u = rng.uniform();
        let value = if u < p / 2.0 {
            0.0
        } else if u < p {
            1.0
        } else {
            continue;
        };
        for c in 0..img.channels() {
            data[c * n + i] = value;
        }
    }
    let out = img.with_data(data)?;
    Ok(out.clamped())
}

/// Photon-count noise: `Poisson(v * peak) / peak`.
pub fn add_poisson(img: &Image, peak: f64, seed: u64) -> Result<Image> {
    if !(peak > 0.0 && peak.is_finite()) {
        return Err(invalid!("Poisson peak must be positive, got {peak}"));
    }
    let mut rng = CounterRng::new(seed);
    let mut data = Vec::with_capacity(img.data().len());
    for &v in img.data() {
        let lambda = v.max(0.0) * peak;
        let events = if lambda > 0.0 {
            Poisson::new(lambda)
                .map_err(|e| invalid!("Poisson rate {lambda}: {e}"))?
                .sample(&mut rng)
        } else {
            0.0
        };
        data.push((events / peak).clamp(0.0, 1.0));
    }
    img.with_data(data)
}
