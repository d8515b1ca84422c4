//! Full-reference quality measures.
//!
//! PSNR uses the dynamic-range peak of the reference (1.0 for normalized
//! images), not the per-image maximum. SSIM is the canonical windowed form:
//! an 11x11 Gaussian window with sigma 1.5, `C1 = (0.01 peak)^2`,
//! `C2 = (0.03 peak)^2`, evaluated on "valid" window positions only, and
//! averaged over channels.
//!
//! The plane-level SSIM and edge-loss routines also return the gradient
//! with respect to the first argument; the network losses reuse them.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::image::{sobel_plane, sobel_plane_adjoint, Image};

pub const SSIM_WINDOW: usize = 11;
pub const SSIM_SIGMA: f64 = 1.5;
pub const SSIM_K1: f64 = 0.01;
pub const SSIM_K2: f64 = 0.03;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    /// Decibels; `f64::INFINITY` when the images are identical.
    pub psnr: f64,
    pub ssim: f64,
    pub mse: f64,
    pub edge_loss: f64,
}

impl MetricReport {
    /// Scores `test` against the reference `reference`.
    pub fn compute(reference: &Image, test: &Image) -> Result<MetricReport> {
        let mse = mse(reference, test)?;
        Ok(MetricReport {
            psnr: psnr_from_mse(mse, reference.peak()),
            ssim: ssim(reference, test)?,
            mse,
            edge_loss: edge_loss(test, reference)?,
        })
    }
}

pub fn mse(a: &Image, b: &Image) -> Result<f64> {
    a.check_same_shape(b)?;
    let sum: f64 = a
        .data()
        .iter()
        .zip(b.data())
        .map(|(x, y)| (x - y) * (x - y))
        .sum();
    Ok(sum / a.data().len() as f64)
}

pub fn psnr_from_mse(mse: f64, peak: f64) -> f64 {
    if mse == 0.0 {
        f64::INFINITY
    } else {
        10.0 * (peak * peak / mse).log10()
    }
}

pub fn psnr(a: &Image, b: &Image, peak: f64) -> Result<f64> {
    if !(peak > 0.0 && peak.is_finite()) {
        return Err(invalid!("PSNR peak must be positive, got {peak}"));
    }
    Ok(psnr_from_mse(mse(a, b)?, peak))
}

pub fn ssim(a: &Image, b: &Image) -> Result<f64> {
    a.check_same_shape(b)?;
    let (w, h) = (a.width(), a.height());
    if w < SSIM_WINDOW || h < SSIM_WINDOW {
        return Err(Error::Shape(format!(
            "SSIM needs at least {SSIM_WINDOW}x{SSIM_WINDOW}, got {w}x{h}"
        )));
    }
    let (c1, c2) = ssim_constants(a.peak());
    let total: f64 = a
        .planes()
        .zip(b.planes())
        .map(|(x, y)| ssim_plane(x, y, w, h, c1, c2, false).0)
        .sum();
    Ok(total / a.channels() as f64)
}

/// Mean absolute difference of the Sobel gradient magnitudes.
pub fn edge_loss(a: &Image, b: &Image) -> Result<f64> {
    a.check_same_shape(b)?;
    let (w, h) = (a.width(), a.height());
    let total: f64 = a
        .planes()
        .zip(b.planes())
        .map(|(x, y)| edge_loss_plane(x, y, w, h, false).0 * (w * h) as f64)
        .sum();
    Ok(total / a.data().len() as f64)
}

pub fn ssim_constants(peak: f64) -> (f64, f64) {
    ((SSIM_K1 * peak).powi(2), (SSIM_K2 * peak).powi(2))
}

/// Normalized 1-D Gaussian; the 2-D window is its outer product.
pub fn gaussian_window() -> [f64; SSIM_WINDOW] {
    let mut g = [0.0; SSIM_WINDOW];
    let r = (SSIM_WINDOW / 2) as f64;
    for (i, v) in g.iter_mut().enumerate() {
        let d = i as f64 - r;
        *v = (-d * d / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp();
    }
    let s: f64 = g.iter().sum();
    g.iter_mut().for_each(|v| *v /= s);
    g
}

/// Separable "valid" filtering: output is `(w - 10) x (h - 10)`.
fn filter_valid(src: &[f64], w: usize, h: usize, g: &[f64; SSIM_WINDOW]) -> Vec<f64> {
    let (ow, oh) = (w + 1 - SSIM_WINDOW, h + 1 - SSIM_WINDOW);
    let mut horiz = vec![0.0; ow * h];
    for y in 0..h {
        let row = &src[y * w..(y + 1) * w];
        for x in 0..ow {
            horiz[y * ow + x] = g.iter().zip(&row[x..]).map(|(a, b)| a * b).sum();
        }
    }
    let mut out = vec![0.0; ow * oh];
    for y in 0..oh {
        for (k, gk) in g.iter().enumerate() {
            let src_row = &horiz[(y + k) * ow..(y + k + 1) * ow];
            for (o, s) in out[y * ow..(y + 1) * ow].iter_mut().zip(src_row) {
                *o += gk * s;
            }
        }
    }
    out
}

/// Adjoint of [`filter_valid`].
fn filter_valid_adjoint(d: &[f64], w: usize, h: usize, g: &[f64; SSIM_WINDOW]) -> Vec<f64> {
    let (ow, oh) = (w + 1 - SSIM_WINDOW, h + 1 - SSIM_WINDOW);
    let mut horiz = vec![0.0; ow * h];
    for y in 0..oh {
        for (k, gk) in g.iter().enumerate() {
            let dst = &mut horiz[(y + k) * ow..(y + k + 1) * ow];
            for (t, s) in dst.iter_mut().zip(&d[y * ow..(y + 1) * ow]) {
                *t += gk * s;
            }
        }
    }
    let mut out = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..ow {
            let s = horiz[y * ow + x];
            for (k, gk) in g.iter().enumerate() {
                out[y * w + x + k] += gk * s;
            }
        }
    }
    out
}

/// Mean SSIM of one plane and, optionally, its gradient with respect to
/// `x`.
pub(crate) fn ssim_plane(
    x: &[f64],
    y: &[f64],
    w: usize,
    h: usize,
    c1: f64,
    c2: f64,
    want_grad: bool,
) -> (f64, Option<Vec<f64>>) {
    let g = gaussian_window();
    let xx: Vec<f64> = x.iter().map(|v| v * v).collect();
    let yy: Vec<f64> = y.iter().map(|v| v * v).collect();
    let xy: Vec<f64> = x.iter().zip(y).map(|(a, b)| a * b).collect();
    let mx = filter_valid(x, w, h, &g);
    let my = filter_valid(y, w, h, &g);
    let exx = filter_valid(&xx, w, h, &g);
    let eyy = filter_valid(&yy, w, h, &g);
    let exy = filter_valid(&xy, w, h, &g);
    let n = mx.len();
    let inv_n = 1.0 / n as f64;

    let mut total = 0.0;
    let (mut d_mx, mut d_exx, mut d_exy) = if want_grad {
        (vec![0.0; n], vec![0.0; n], vec![0.0; n])
    } else {
        (Vec::new(), Vec::new(), Vec::new())
    };
    for i in 0..n {
        let (ux, uy) = (mx[i], my[i]);
        let vx = exx[i] - ux * ux;
        let vy = eyy[i] - uy * uy;
        let cxy = exy[i] - ux * uy;
        let a1 = 2.0 * ux * uy + c1;
        let a2 = 2.0 * cxy + c2;
        let b1 = ux * ux + uy * uy + c1;
        let b2 = vx + vy + c2;
        let s = a1 * a2 / (b1 * b2);
        total += s;
        if want_grad {
            // Partial derivatives with respect to the raw local moments
            // mu_x, E[x^2] and E[xy].
            let inv = 1.0 / (b1 * b2);
            d_exx[i] = -s / b2 * inv_n;
            d_exy[i] = 2.0 * a1 * inv * inv_n;
            d_mx[i] = (2.0 * uy * a2 * inv - 2.0 * ux * s / b1 + 2.0 * ux * s / b2
                - 2.0 * uy * a1 * inv)
                * inv_n;
        }
    }
    let grad = want_grad.then(|| {
        let gm = filter_valid_adjoint(&d_mx, w, h, &g);
        let ge = filter_valid_adjoint(&d_exx, w, h, &g);
        let gc = filter_valid_adjoint(&d_exy, w, h, &g);
        (0..w * h)
            .map(|p| gm[p] + 2.0 * x[p] * ge[p] + y[p] * gc[p])
            .collect()
    });
    (total * inv_n, grad)
}

/// Mean `|mag(a) - mag(b)|` over one plane and, optionally, its gradient
/// with respect to `a`. Points where the magnitude or the difference is
/// exactly zero contribute a zero subgradient.
pub(crate) fn edge_loss_plane(
    a: &[f64],
    b: &[f64],
    w: usize,
    h: usize,
    want_grad: bool,
) -> (f64, Option<Vec<f64>>) {
    let (ax, ay) = sobel_plane(a, w, h);
    let (bx, by) = sobel_plane(b, w, h);
    let n = (w * h) as f64;
    let mut total = 0.0;
    let (mut dgx, mut dgy) = if want_grad {
        (vec![0.0; w * h], vec![0.0; w * h])
    } else {
        (Vec::new(), Vec::new())
    };
    for i in 0..w * h {
        let ma = ax[i].hypot(ay[i]);
        let d = ma - bx[i].hypot(by[i]);
        total += d.abs();
        if want_grad && ma > 0.0 && d != 0.0 {
            let s = d.signum() / (n * ma);
            dgx[i] = s * ax[i];
            dgy[i] = s * ay[i];
        }
    }
    let grad = want_grad.then(|| sobel_plane_adjoint(&dgx, &dgy, w, h));
    (total / n, grad)
}
