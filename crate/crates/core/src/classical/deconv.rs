//! Non-blind deconvolution for a known blur kernel.

use num_complex::Complex;
use rustfft::FftPlanner;

use crate::error::{invalid, Result};
use crate::image::{correlate_plane, Image, Kernel2D};

const DIVISION_FLOOR: f64 = 1e-8;

/// Richardson-Lucy: `u <- u * (k^T (f / (k u)))`, starting from the
/// observation. Blurring is correlation with reflect-101 borders; the
/// output is clamped to `[0, 1]`.
pub fn richardson_lucy(img: &Image, k: &Kernel2D, iterations: usize) -> Result<Image> {
    k.check_normalized()?;
    if iterations == 0 {
        return Err(invalid!("iterations must be at least 1"));
    }
    if img.data().iter().any(|&v| v < 0.0) {
        return Err(invalid!("Richardson-Lucy needs a non-negative observation"));
    }
    let (w, h) = (img.width(), img.height());
    if (k.width() > 1 && k.width() >= w) || (k.height() > 1 && k.height() >= h) {
        return Err(invalid!("kernel does not fit a {w}x{h} image"));
    }
    let adjoint = k.flipped();
    let out = img.map_planes(|f| {
        let mut u = f.to_vec();
        let mut ratio = vec![0.0; w * h];
        for _ in 0..iterations {
            let est = correlate_plane(&u, w, h, k);
            for ((r, fv), e) in ratio.iter_mut().zip(f).zip(&est) {
                *r = fv / e.max(DIVISION_FLOOR);
            }
            let corr = correlate_plane(&ratio, w, h, &adjoint);
            u.iter_mut().zip(&corr).for_each(|(v, c)| *v *= c);
        }
        Ok(u)
    })?;
    Ok(out.clamped())
}

/// Transfer function of correlation with `k` on a `w`x`h` periodic grid,
/// row-major, DC at index 0.
pub fn kernel_transfer(k: &Kernel2D, w: usize, h: usize) -> Vec<Complex<f64>> {
    // Correlation with k is convolution with the flipped kernel; place it
    // with its centre at the origin.
    let flipped = k.flipped();
    let mut grid = vec![Complex::new(0.0, 0.0); w * h];
    let (rx, ry) = (k.radius_x() as isize, k.radius_y() as isize);
    for dy in -ry..=ry {
        for dx in -rx..=rx {
            let x = dx.rem_euclid(w as isize) as usize;
            let y = dy.rem_euclid(h as isize) as usize;
            grid[y * w + x] += flipped.at(dx, dy);
        }
    }
    fft2(&mut grid, w, h, false);
    grid
}

/// Wiener filter `H* / (|H|^2 + nsr)` for the blur `k`; zero where both
/// terms of the denominator vanish.
pub fn wiener_response(k: &Kernel2D, w: usize, h: usize, nsr: f64) -> Vec<Complex<f64>> {
    kernel_transfer(k, w, h)
        .into_iter()
        .map(|hv| {
            let denom = hv.norm_sqr() + nsr;
            if denom > 0.0 {
                hv.conj() / denom
            } else {
                Complex::new(0.0, 0.0)
            }
        })
        .collect()
}

/// Fixed-parameter Wiener deconvolution.
///
/// Each plane is mirrored (reflect-101) into an even-periodic grid of size
/// `(2w - 2) x (2h - 2)` before filtering. For kernels that are symmetric
/// about both axes, reflect-101 border blur is then exactly circular blur on
/// that grid, so the border introduces no ringing.
pub fn wiener_deconvolve(img: &Image, k: &Kernel2D, nsr: f64) -> Result<Image> {
    k.check_normalized()?;
    if !(nsr >= 0.0 && nsr.is_finite()) {
        return Err(invalid!("noise-to-signal ratio must be non-negative, got {nsr}"));
    }
    let (w, h) = (img.width(), img.height());
    if (k.width() > 1 && k.width() >= w) || (k.height() > 1 && k.height() >= h) {
        return Err(invalid!("kernel does not fit a {w}x{h} image"));
    }
    let (ew, eh) = (mirrored_len(w), mirrored_len(h));
    let filter = wiener_response(k, ew, eh, nsr);
    let out = img.map_planes(|plane| {
        let mut spec: Vec<Complex<f64>> = (0..ew * eh)
            .map(|i| {
                let (x, y) = (reflect101(i % ew, w), reflect101(i / ew, h));
                Complex::new(plane[y * w + x], 0.0)
            })
            .collect();
        fft2(&mut spec, ew, eh, false);
        spec.iter_mut().zip(&filter).for_each(|(s, f)| *s *= f);
        fft2(&mut spec, ew, eh, true);
        Ok((0..w * h).map(|i| spec[(i / w) * ew + i % w].re).collect())
    })?;
    Ok(out.clamped())
}

fn mirrored_len(n: usize) -> usize {
    if n > 1 {
        2 * n - 2
    } else {
        1
    }
}

fn reflect101(i: usize, n: usize) -> usize {
    if i < n {
        i
    } else {
        2 * n - 2 - i
    }
}

/// In-place 2-D FFT of a row-major grid. The inverse is normalized.
pub(crate) fn fft2(data: &mut [Complex<f64>], w: usize, h: usize, inverse: bool) {
    let mut planner = FftPlanner::<f64>::new();
    let (row_fft, col_fft) = if inverse {
        (planner.plan_fft_inverse(w), planner.plan_fft_inverse(h))
    } else {
        (planner.plan_fft_forward(w), planner.plan_fft_forward(h))
    };
    for row in data.chunks_exact_mut(w) {
        row_fft.process(row);
    }
    let mut column = vec![Complex::new(0.0, 0.0); h];
    for x in 0..w {
        for y in 0..h {
            column[y] = data[y * w + x];
        }
        col_fft.process(&mut column);
        for y in 0..h {
            data[y * w + x] = column[y];
        }
    }
    if inverse {
        let scale = 1.0 / (w * h) as f64;
        data.iter_mut().for_each(|v| *v *= scale);
    }
}
