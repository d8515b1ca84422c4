//! Parametric blur kernels.

use crate::error::{invalid, Result};
use crate::image::Kernel2D;

/// Line segment of `length` pixels through the centre at `angle_deg`
/// (counter-clockwise, image y pointing down). The segment is sampled at
/// unit spacing symmetric about the centre and each sample is splatted
/// with bilinear weights, so the kernel is exactly 180-degree symmetric.
pub fn motion_kernel(length: u32, angle_deg: f64) -> Result<Kernel2D> {
    if length < 1 {
        return Err(invalid!("motion blur length must be at least 1"));
    }
    if !angle_deg.is_finite() {
        return Err(invalid!("motion blur angle must be finite"));
    }
    if length == 1 {
        return Ok(Kernel2D::identity());
    }
    let theta = angle_deg.to_radians();
    let snap = |v: f64| if v.abs() < 1e-12 { 0.0 } else { v };
    let (c, s) = (snap(theta.cos()), snap(theta.sin()));
    let half = (length - 1) as f64 / 2.0;
    let points: Vec<(f64, f64)> = (0..length)
        .map(|j| {
            let t = j as f64 - half;
            (t * c, -t * s)
        })
        .collect();
    let rx = points.iter().map(|p| p.0.abs().ceil() as usize).max().unwrap_or(0);
    let ry = points.iter().map(|p| p.1.abs().ceil() as usize).max().unwrap_or(0);
    let (w, h) = (2 * rx + 1, 2 * ry + 1);
    let mut weights = vec![0.0; w * h];
    let mut splat = |x: isize, y: isize, v: f64| {
        if v > 0.0 {
            let ix = (x + rx as isize) as usize;
            let iy = (y + ry as isize) as usize;
            weights[iy * w + ix] += v;
        }
    };
    for &(x, y) in &points {
        let (x0, y0) = (x.floor(), y.floor());
        let (fx, fy) = (x - x0, y - y0);
        let (x0, y0) = (x0 as isize, y0 as isize);
        splat(x0, y0, (1.0 - fx) * (1.0 - fy));
        splat(x0 + 1, y0, fx * (1.0 - fy));
        splat(x0, y0 + 1, (1.0 - fx) * fy);
        splat(x0 + 1, y0 + 1, fx * fy);
    }
    normalized(w, h, weights)
}

/// Defocus blur: each tap is the area of its pixel square covered by a disk
/// of `radius` pixels, normalized to unit sum.
pub fn disk_kernel(radius: f64) -> Result<Kernel2D> {
    if !(radius >= 0.0 && radius.is_finite()) {
        return Err(invalid!("disk radius must be non-negative, got {radius}"));
    }
    let half = (radius - 0.5).ceil().max(0.0) as usize;
    if half == 0 {
        return Ok(Kernel2D::identity());
    }
    let n = 2 * half + 1;
    let mut weights = vec![0.0; n * n];
    for j in 0..n {
        for i in 0..n {
            let dx = i as f64 - half as f64;
            let dy = j as f64 - half as f64;
            weights[j * n + i] = square_disk_overlap(dx.abs(), dy.abs(), radius);
        }
    }
    normalized(n, n, weights)
}

fn normalized(w: usize, h: usize, mut weights: Vec<f64>) -> Result<Kernel2D> {
    let sum: f64 = weights.iter().sum();
    weights.iter_mut().for_each(|v| *v /= sum);
    Kernel2D::new(w, h, weights)
}

/// Area of the unit square centred at `(cx, cy)` (both >= 0) inside the
/// disk of radius `r` centred at the origin.
fn square_disk_overlap(cx: f64, cy: f64, r: f64) -> f64 {
    let fold = |c: f64| -> Vec<(f64, f64)> {
        let (lo, hi) = (c - 0.5, c + 0.5);
        if lo < 0.0 {
            vec![(0.0, -lo), (0.0, hi)]
        } else {
            vec![(lo, hi)]
        }
    };
    let mut area = 0.0;
    for &(x0, x1) in &fold(cx) {
        for &(y0, y1) in &fold(cy) {
            area += quadrant_rect_overlap(x0, x1, y0, y1, r);
        }
    }
    area
}

/// Area of `[x0, x1] x [y0, y1]` (first quadrant) inside the disk.
fn quadrant_rect_overlap(x0: f64, x1: f64, y0: f64, y1: f64, r: f64) -> f64 {
    if y0 >= r || x0 >= r {
        return 0.0;
    }
    // Primitive of sqrt(r^2 - x^2).
    let prim = |x: f64| 0.5 * (x * (r * r - x * x).max(0.0).sqrt() + r * r * (x / r).asin());
    let xa = if y1 < r { (r * r - y1 * y1).sqrt() } else { 0.0 };
    let xb = (r * r - y0 * y0).sqrt();
    let full = (x1.min(xa) - x0).max(0.0) * (y1 - y0);
    let (lo, hi) = (x0.max(xa), x1.min(xb));
    let partial = if hi > lo {
        prim(hi) - prim(lo) - y0 * (hi - lo)
    } else {
        0.0
    };
    full + partial
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unit_length_is_identity() {
        for angle in [0.0, 33.0, 90.0, 271.5] {
            assert_eq!(motion_kernel(1, angle).unwrap(), Kernel2D::identity());
        }
        assert!(motion_kernel(0, 0.0).is_err());
    }

    #[test]
    fn horizontal_length_three() {
        let k = motion_kernel(3, 0.0).unwrap();
        assert_eq!((k.width(), k.height()), (3, 1));
        for &w in k.weights() {
            assert!((w - 1.0 / 3.0).abs() < 1e-15);
        }
    }

    #[test]
    fn vertical_line_is_a_column() {
        let k = motion_kernel(5, 90.0).unwrap();
        assert_eq!((k.width(), k.height()), (1, 5));
    }

    #[test]
    fn oblique_kernel_symmetry() {
        let k = motion_kernel(9, 37.0).unwrap();
        assert!((k.sum() - 1.0).abs() < 1e-6);
        let flipped = k.flipped();
        for (a, b) in k.weights().iter().zip(flipped.weights()) {
            assert!((a - b).abs() < 1e-6);
        }
    }

    #[test]
    fn disk_radius_zero_and_small() {
        assert_eq!(disk_kernel(0.0).unwrap(), Kernel2D::identity());
        assert_eq!(disk_kernel(0.5).unwrap(), Kernel2D::identity());
        assert!(disk_kernel(-1.0).is_err());
    }

    #[test]
    fn disk_radius_two_supersampled() {
        let k = disk_kernel(2.0).unwrap();
        assert_eq!((k.width(), k.height()), (5, 5));
        // Supersampled coverage oracle.
        let n = 400;
        let mut coverage = vec![0.0; 25];
        for j in 0..5 {
            for i in 0..5 {
                let mut hits = 0usize;
                for sj in 0..n {
                    for si in 0..n {
                        let x = i as f64 - 2.5 + (si as f64 + 0.5) / n as f64;
                        let y = j as f64 - 2.5 + (sj as f64 + 0.5) / n as f64;
                        if x * x + y * y <= 4.0 {
                            hits += 1;
                        }
                    }
                }
                coverage[j * 5 + i] = hits as f64 / (n * n) as f64;
            }
        }
        let total: f64 = coverage.iter().sum();
        for (w, c) in k.weights().iter().zip(&coverage) {
            assert!((w - c / total).abs() < 1e-4);
        }
        // 4-fold rotation: (i, j) -> (4 - j, i).
        for j in 0..5 {
            for i in 0..5 {
                let a = k.weights()[j * 5 + i];
                let b = k.weights()[i * 5 + (4 - j)];
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn overlap_of_fully_covered_square() {
        assert!((square_disk_overlap(0.0, 0.0, 10.0) - 1.0).abs() < 1e-12);
        assert_eq!(square_disk_overlap(5.0, 0.0, 2.0), 0.0);
        // A whole disk of radius 0.3 sits inside the central square.
        let a = square_disk_overlap(0.0, 0.0, 0.3);
        assert!((a - std::f64::consts::PI * 0.09).abs() < 1e-12);
    }
}
