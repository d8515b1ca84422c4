//! Procedural stand-ins for endoscopic frames.

use crate::error::{invalid, Result};
use crate::image::Image;
use crate::rng::{derive_seed, CounterRng};

const MIN_RANGE: f64 = 0.3;

/// One deterministic scene: a vignetted illumination gradient, soft tinted
/// blobs, band-limited texture, a few specular highlights and a per-channel
/// colour cast.
pub fn synth_image(size: usize, seed: u64) -> Image {
    let mut rng = CounterRng::new(seed);
    let mut u = |lo: f64, hi: f64| lo + (hi - lo) * rng.uniform();

    let (gx, gy) = (u(-0.25, 0.25), u(-0.25, 0.25));
    let (cx, cy) = (u(0.35, 0.65), u(0.35, 0.65));
    let vignette = u(0.3, 0.6);
    let base = u(0.35, 0.55);

    let blobs: Vec<[f64; 7]> = (0..3 + (u(0.0, 4.0) as usize))
        .map(|_| {
            let amp = u(-0.35, 0.35);
            [u(0.0, 1.0), u(0.0, 1.0), u(0.05, 0.22), amp, u(0.6, 1.4), u(0.6, 1.4), u(0.6, 1.4)]
        })
        .collect();
    let waves: Vec<[f64; 4]> = (0..6)
        .map(|_| {
            let freq = u(2.0, 10.0) * std::f64::consts::TAU;
            let dir = u(0.0, std::f64::consts::PI);
            [freq * dir.cos(), freq * dir.sin(), u(0.0, std::f64::consts::TAU), u(0.01, 0.04)]
        })
        .collect();
    let dots: Vec<[f64; 3]> = (0..(u(0.0, 5.0) as usize))
        .map(|_| [u(0.05, 0.95), u(0.05, 0.95), u(1.0, 2.5)])
        .collect();
    let cast = [u(0.9, 1.2), 1.0, u(0.6, 0.95)];

    let n = size as f64;
    let img = Image::from_fn(size, size, 3, |c, x, y| {
        let (fx, fy) = ((x as f64 + 0.5) / n, (y as f64 + 0.5) / n);
        let r2 = (fx - cx).powi(2) + (fy - cy).powi(2);
        let mut v = base + gx * (fx - 0.5) + gy * (fy - 0.5) + vignette * (0.25 - r2);
        for b in &blobs {
            let d2 = (fx - b[0]).powi(2) + (fy - b[1]).powi(2);
            v += b[3] * b[4 + c] * (-d2 / (2.0 * b[2] * b[2])).exp();
        }
        for w in &waves {
            v += w[3] * (w[0] * fx + w[1] * fy + w[2]).sin();
        }
        v *= cast[c];
        for d in &dots {
            let dist = ((x as f64 - d[0] * n).powi(2) + (y as f64 - d[1] * n).powi(2)).sqrt();
            v = v.max(1.0 - (dist / d[2]).powi(2));
        }
        v.clamp(0.0, 1.0)
    });
    ensure_range(img)
}

/// Stretches a low-contrast scene about its mean so it spans `MIN_RANGE`.
fn ensure_range(img: Image) -> Image {
    let (lo, hi) = img.min_max();
    if hi - lo >= MIN_RANGE {
        return img;
    }
    let mean = img.data().iter().sum::<f64>() / img.data().len() as f64;
    let scale = (MIN_RANGE + 0.02) / (hi - lo).max(1e-6);
    let centre = mean.clamp(0.2, 0.8);
    img.map(|v| (centre + (v - mean) * scale).clamp(0.0, 1.0))
}

/// `n` scenes of `size` x `size`; scene `i` uses `derive_seed(seed, i)`.
pub fn synth_corpus(n: usize, size: usize, seed: u64) -> Result<Vec<Image>> {
    if n == 0 {
        return Err(invalid!("corpus size must be at least 1"));
    }
    if size == 0 || !size.is_multiple_of(16) {
        return Err(invalid!("scene size must be a positive multiple of 16, got {size}"));
    }
    Ok((0..n)
        .map(|i| synth_image(size, derive_seed(seed, i as u64)))
        .collect())
}
