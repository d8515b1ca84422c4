//! Local and non-local denoising filters. All operate per channel with
//! reflect-101 borders and are deterministic.

use crate::error::{invalid, Result};
use crate::image::{convolve, correlate_plane, reflect101, Image, Kernel2D};

/// Normalized Gaussian truncated at `ceil(3 sigma)`.
pub fn gaussian_kernel(sigma: f64) -> Result<Kernel2D> {
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(invalid!("Gaussian sigma must be positive, got {sigma}"));
    }
    let r = (3.0 * sigma).ceil() as usize;
    let n = 2 * r + 1;
    let mut weights = Vec::with_capacity(n * n);
    for y in 0..n {
        for x in 0..n {
            let (dx, dy) = (x as f64 - r as f64, y as f64 - r as f64);
            weights.push((-(dx * dx + dy * dy) / (2.0 * sigma * sigma)).exp());
        }
    }
    let s: f64 = weights.iter().sum();
    weights.iter_mut().for_each(|v| *v /= s);
    Kernel2D::new(n, n, weights)
}

pub fn gaussian_denoise(img: &Image, sigma: f64) -> Result<Image> {
    convolve(img, &gaussian_kernel(sigma)?)
}

pub fn bilateral_denoise(img: &Image, sigma_s: f64, sigma_r: f64) -> Result<Image> {
    if !(sigma_s > 0.0 && sigma_r > 0.0 && sigma_s.is_finite() && sigma_r.is_finite()) {
        return Err(invalid!(
            "bilateral sigmas must be positive, got {sigma_s} and {sigma_r}"
        ));
    }
    let r = (3.0 * sigma_s).ceil() as isize;
    let (w, h) = (img.width(), img.height());
    if r as usize >= w.min(h) {
        return Err(invalid!("bilateral window radius {r} exceeds a {w}x{h} image"));
    }
    let spatial: Vec<(isize, isize, f64)> = (-r..=r)
        .flat_map(|dy| (-r..=r).map(move |dx| (dx, dy)))
        .map(|(dx, dy)| {
            let d2 = (dx * dx + dy * dy) as f64;
            (dx, dy, (-d2 / (2.0 * sigma_s * sigma_s)).exp())
        })
        .collect();
    let range_coeff = -1.0 / (2.0 * sigma_r * sigma_r);
    img.map_planes(|plane| {
        let mut out = vec![0.0; w * h];
        for y in 0..h {
            for x in 0..w {
                let centre = plane[y * w + x];
                let (mut num, mut den) = (0.0, 0.0);
                for &(dx, dy, ws) in &spatial {
                    let sx = reflect101(x as isize + dx, w);
                    let sy = reflect101(y as isize + dy, h);
                    let v = plane[sy * w + sx];
                    let d = v - centre;
                    let wt = ws * (range_coeff * d * d).exp();
                    num += wt * v;
                    den += wt;
                }
                out[y * w + x] = num / den;
            }
        }
        Ok(out)
    })
}

/// Robust noise level of a plane: MAD of the 4-neighbour Laplacian residual,
/// rescaled by the Laplacian's noise gain `sqrt(20)`.
pub fn estimate_noise_sigma(plane: &[f64], w: usize, h: usize) -> f64 {
    let lap = Kernel2D::new(3, 3, vec![0.0, 1.0, 0.0, 1.0, -4.0, 1.0, 0.0, 1.0, 0.0])
        .expect("valid stencil");
    let mut residual = correlate_plane(plane, w, h, &lap);
    let median = |v: &mut Vec<f64>| {
        let mid = v.len() / 2;
        *v.select_nth_unstable_by(mid, f64::total_cmp).1
    };
    let m = median(&mut residual);
    let mut dev: Vec<f64> = residual.iter().map(|v| (v - m).abs()).collect();
    1.4826 * median(&mut dev) / 20f64.sqrt()
}

/// Pixelwise non-local means. Patch distance is the mean squared difference
/// over a `(2 patch_radius + 1)^2` patch; weights are
/// `exp(-max(d^2 - 2 sigma^2, 0) / h^2)`; the centre pixel receives the
/// largest neighbour weight. `noise_sigma = None` estimates sigma per
/// channel with [`estimate_noise_sigma`].
pub fn nlm_denoise(
    img: &Image,
    patch_radius: usize,
    search_radius: usize,
    h: f64,
    noise_sigma: Option<f64>,
) -> Result<Image> {
    if patch_radius < 1 || search_radius < 1 {
        return Err(invalid!("NLM radii must be at least 1"));
    }
    if !(h > 0.0 && h.is_finite()) {
        return Err(invalid!("NLM filtering strength must be positive, got {h}"));
    }
    if let Some(s) = noise_sigma {
        if !(s >= 0.0 && s.is_finite()) {
            return Err(invalid!("NLM noise sigma must be non-negative, got {s}"));
        }
    }
    let (w, hgt) = (img.width(), img.height());
    let pad = patch_radius + search_radius;
    if pad >= w.min(hgt) {
        return Err(invalid!(
            "NLM window (patch {patch_radius} + search {search_radius}) exceeds a {w}x{hgt} image"
        ));
    }
    img.map_planes(|plane| {
        let sigma = noise_sigma.unwrap_or_else(|| estimate_noise_sigma(plane, w, hgt));
        Ok(nlm_plane(plane, w, hgt, patch_radius, search_radius, h, sigma))
    })
}

fn nlm_plane(
    plane: &[f64],
    w: usize,
    h: usize,
    pr: usize,
    sr: usize,
    strength: f64,
    sigma: f64,
) -> Vec<f64> {
    let pad = pr + sr;
    let (pw, ph) = (w + 2 * pad, h + 2 * pad);
    let padded: Vec<f64> = (0..ph)
        .flat_map(|y| {
            let sy = reflect101(y as isize - pad as isize, h);
            (0..pw).map(move |x| plane[sy * w + reflect101(x as isize - pad as isize, w)])
        })
        .collect();
    // Squared differences live on the region of patch centres grown by pr.
    let (rw, rh) = (w + 2 * pr, h + 2 * pr);
    let patch_area = ((2 * pr + 1) * (2 * pr + 1)) as f64;
    let offset2 = 2.0 * sigma * sigma;
    let inv_h2 = 1.0 / (strength * strength);

    let mut num = vec![0.0; w * h];
    let mut den = vec![0.0; w * h];
    let mut wmax = vec![0.0f64; w * h];
    let mut integral = vec![0.0; (rw + 1) * (rh + 1)];
    let sr = sr as isize;
    for dy in -sr..=sr {
        for dx in -sr..=sr {
            if dx == 0 && dy == 0 {
                continue;
            }
            for y in 0..rh {
                let mut row_sum = 0.0;
                let py = y + sr as usize;
                let qy = (py as isize + dy) as usize;
                for x in 0..rw {
                    let px = x + sr as usize;
                    let qx = (px as isize + dx) as usize;
                    let d = padded[py * pw + px] - padded[qy * pw + qx];
                    row_sum += d * d;
                    integral[(y + 1) * (rw + 1) + x + 1] = integral[y * (rw + 1) + x + 1] + row_sum;
                }
            }
            let side = 2 * pr + 1;
            for y in 0..h {
                for x in 0..w {
                    let (x1, y1) = (x + side, y + side);
                    let box_sum = integral[y1 * (rw + 1) + x1] - integral[y * (rw + 1) + x1]
                        - integral[y1 * (rw + 1) + x]
                        + integral[y * (rw + 1) + x];
                    let d2 = box_sum / patch_area;
                    let wt = (-(d2 - offset2).max(0.0) * inv_h2).exp();
                    let q = padded[((y + pad) as isize + dy) as usize * pw
                        + ((x + pad) as isize + dx) as usize];
                    let i = y * w + x;
                    num[i] += wt * q;
                    den[i] += wt;
                    wmax[i] = wmax[i].max(wt);
                }
            }
        }
    }
    (0..w * h)
        .map(|i| {
            let self_w = if wmax[i] > 0.0 { wmax[i] } else { 1.0 };
            (num[i] + self_w * plane[i]) / (den[i] + self_w)
        })
        .collect()
}

/// Explicit Perona-Malik diffusion with conductance `exp(-(grad / k)^2)`,
/// 4-neighbour fluxes and zero flux across the image boundary. Each flux is
/// antisymmetric, so the plane mean is conserved.
pub fn anisotropic_diffuse(img: &Image, iterations: usize, k: f64, dt: f64) -> Result<Image> {
    if !(dt > 0.0 && dt <= 0.25) {
        return Err(invalid!("diffusion step must lie in (0, 0.25], got {dt}"));
    }
    if !(k > 0.0 && k.is_finite()) {
        return Err(invalid!("edge threshold K must be positive, got {k}"));
    }
    if iterations == 0 {
        return Err(invalid!("iterations must be at least 1"));
    }
    let (w, h) = (img.width(), img.height());
    let inv_k2 = 1.0 / (k * k);
    img.map_planes(|plane| {
        let mut u = plane.to_vec();
        let mut delta = vec![0.0; w * h];
        for _ in 0..iterations {
            delta.iter_mut().for_each(|d| *d = 0.0);
            for y in 0..h {
                for x in 0..w {
                    let i = y * w + x;
                    if x + 1 < w {
                        let g = u[i + 1] - u[i];
                        let f = (-(g * g) * inv_k2).exp() * g;
                        delta[i] += f;
                        delta[i + 1] -= f;
                    }
                    if y + 1 < h {
                        let g = u[i + w] - u[i];
                        let f = (-(g * g) * inv_k2).exp() * g;
                        delta[i] += f;
                        delta[i + w] -= f;
                    }
                }
            }
            u.iter_mut().zip(&delta).for_each(|(v, d)| *v += dt * d);
        }
        Ok(u)
    })
}

/// Total-variation denoising: approximately minimizes
/// `(lambda / 2) |u - f|^2 + TV(u)` with Chambolle's dual projection
/// iteration (isotropic TV, Neumann boundary).
pub fn tv_denoise(img: &Image, lambda: f64, iterations: usize) -> Result<Image> {
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(invalid!("TV fidelity weight must be positive, got {lambda}"));
    }
    if iterations == 0 {
        return Err(invalid!("iterations must be at least 1"));
    }
    let (w, h) = (img.width(), img.height());
    img.map_planes(|f| Ok(chambolle_plane(f, w, h, lambda, iterations)))
}

fn chambolle_plane(f: &[f64], w: usize, h: usize, lambda: f64, iterations: usize) -> Vec<f64> {
    const TAU: f64 = 0.25;
    let theta = 1.0 / lambda;
    let n = w * h;
    let mut px = vec![0.0; n];
    let mut py = vec![0.0; n];
    let mut div = vec![0.0; n];
    let divergence = |px: &[f64], py: &[f64], div: &mut [f64]| {
        for y in 0..h {
            for x in 0..w {
                let i = y * w + x;
                let ddx = if w == 1 {
                    0.0
                } else if x == 0 {
                    px[i]
                } else if x + 1 == w {
                    -px[i - 1]
                } else {
                    px[i] - px[i - 1]
                };
                let ddy = if h == 1 {
                    0.0
                } else if y == 0 {
                    py[i]
                } else if y + 1 == h {
                    -py[i - w]
                } else {
                    py[i] - py[i - w]
                };
                div[i] = ddx + ddy;
            }
        }
    };
    let mut v = vec![0.0; n];
    for _ in 0..iterations {
        divergence(&px, &py, &mut div);
        for i in 0..n {
            v[i] = div[i] - f[i] / theta;
        }
        for y in 0..h {
            for x in 0..w {
                let i = y * w + x;
                let gx = if x + 1 < w { v[i + 1] - v[i] } else { 0.0 };
                let gy = if y + 1 < h { v[i + w] - v[i] } else { 0.0 };
                let norm = 1.0 + TAU * gx.hypot(gy);
                px[i] = (px[i] + TAU * gx) / norm;
                py[i] = (py[i] + TAU * gy) / norm;
            }
        }
    }
    divergence(&px, &py, &mut div);
    // The exact minimizer obeys the maximum principle; projecting the
    // iterate onto the data range can only move it closer.
    let (lo, hi) = f
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
    (0..n).map(|i| (f[i] - theta * div[i]).clamp(lo, hi)).collect()
}
