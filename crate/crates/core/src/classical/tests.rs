use super::*;
use crate::degrade::{add_awgn, motion_kernel};
use crate::image::convolve;
use crate::metrics::psnr;
use crate::rng::CounterRng;

fn smooth_scene(size: usize) -> Image {
    let s = size as f64;
    Image::from_fn(size, size, 3, |c, x, y| {
        let (u, v) = (x as f64 / s, y as f64 / s);
        let blob = (-((u - 0.4).powi(2) + (v - 0.6).powi(2)) / 0.05).exp();
        let bars = if (x / 16 + y / 24) % 2 == 0 { 0.15 } else { 0.0 };
        (0.15 + 0.35 * u + 0.15 * v + 0.3 * blob + bars + 0.05 * c as f64).clamp(0.0, 1.0)
    })
}

fn random_image(w: usize, h: usize, c: usize, seed: u64) -> Image {
    let mut rng = CounterRng::new(seed);
    Image::from_fn(w, h, c, |_, _, _| rng.uniform())
}

fn denoisers() -> Vec<RestoreConfig> {
    ["gaussian", "bilateral", "nlm", "anisotropic", "tv"]
        .iter()
        .map(|n| RestoreConfig::default_for(n).unwrap())
        .collect()
}

#[test]
fn denoisers_fix_constants() {
    let img = Image::filled(40, 40, 3, 0.42);
    for cfg in denoisers() {
        let out = cfg.apply(&img, None).unwrap();
        let worst = out.data().iter().map(|v| (v - 0.42).abs()).fold(0.0, f64::max);
        assert!(worst < 1e-9, "{} drifted by {worst}", cfg.name());
    }
}

#[test]
fn denoisers_stay_in_range() {
    let img = random_image(32, 32, 3, 3).map(|v| 0.2 + 0.5 * v);
    let (lo, hi) = img.min_max();
    for cfg in denoisers() {
        let (olo, ohi) = cfg.apply(&img, None).unwrap().min_max();
        assert!(olo >= lo - 1e-6 && ohi <= hi + 1e-6, "{}", cfg.name());
    }
}

#[test]
fn gaussian_impulse_response() {
    let mut data = vec![0.0; 21 * 21];
    data[10 * 21 + 10] = 1.0;
    let img = Image::new(21, 21, 1, data).unwrap();
    let sigma = 1.3;
    let out = gaussian_denoise(&img, sigma).unwrap();
    let r = (3.0 * sigma).ceil() as isize;
    let mut total = 0.0;
    for dy in -r..=r {
        for dx in -r..=r {
            total += (-((dx * dx + dy * dy) as f64) / (2.0 * sigma * sigma)).exp();
        }
    }
    for dy in -r..=r {
        for dx in -r..=r {
            let expected = (-((dx * dx + dy * dy) as f64) / (2.0 * sigma * sigma)).exp() / total;
            let got = out.get(0, (10 + dx) as usize, (10 + dy) as usize);
            assert!((got - expected).abs() < 1e-6);
        }
    }
    assert!(gaussian_denoise(&img, 0.0).is_err());
}

#[test]
fn gaussian_improves_psnr_on_smooth_scene() {
    let clean = smooth_scene(64);
    let noisy = add_awgn(&clean, 10.0, 1).unwrap();
    let out = gaussian_denoise(&noisy, 1.0).unwrap();
    assert!(psnr(&out, &clean, 1.0).unwrap() > psnr(&noisy, &clean, 1.0).unwrap());
}

#[test]
fn bilateral_saturated_range_is_gaussian() {
    let img = random_image(24, 24, 3, 4);
    let a = bilateral_denoise(&img, 1.2, 1e6).unwrap();
    let b = gaussian_denoise(&img, 1.2).unwrap();
    for (x, y) in a.data().iter().zip(b.data()) {
        assert!((x - y).abs() < 1e-4);
    }
}

fn step_image(w: usize, h: usize) -> Image {
    Image::from_fn(w, h, 1, |_, x, _| if x >= w / 2 { 1.0 } else { 0.0 })
}

fn edge_contrast(img: &Image) -> f64 {
    let (w, h) = (img.width(), img.height());
    let y = h / 2;
    img.get(0, w / 2, y) - img.get(0, w / 2 - 1, y)
}

#[test]
fn bilateral_preserves_edges() {
    let out = bilateral_denoise(&step_image(32, 16), 2.0, 0.05).unwrap();
    assert!(edge_contrast(&out) >= 0.9);
    assert!(bilateral_denoise(&step_image(32, 16), 2.0, 0.0).is_err());
}

#[test]
fn nlm_collapses_to_identity_for_tiny_h() {
    let noisy = add_awgn(&smooth_scene(32), 20.0, 2).unwrap();
    let out = nlm_denoise(&noisy, 1, 3, 1e-6, Some(0.0)).unwrap();
    for (a, b) in out.data().iter().zip(noisy.data()) {
        assert!((a - b).abs() < 1e-3);
    }
}

#[test]
fn nlm_improves_periodic_texture() {
    let clean = Image::from_fn(64, 64, 1, |_, x, y| {
        0.5 + 0.3 * ((x as f64 * 0.8).sin() * (y as f64 * 0.5).cos())
    });
    let noisy = add_awgn(&clean, 20.0, 3).unwrap();
    let out = nlm_denoise(&noisy, 2, 5, 0.08, None).unwrap();
    assert!(psnr(&out, &clean, 1.0).unwrap() > psnr(&noisy, &clean, 1.0).unwrap());
}

#[test]
fn nlm_window_must_fit() {
    let img = Image::filled(8, 8, 1, 0.5);
    assert!(nlm_denoise(&img, 3, 5, 0.1, None).is_err());
    assert!(nlm_denoise(&img, 0, 2, 0.1, None).is_err());
}

#[test]
fn noise_estimate_tracks_awgn() {
    let clean = smooth_scene(128);
    let noisy = add_awgn(&clean, 25.0, 9).unwrap();
    let est = estimate_noise_sigma(noisy.plane(0), 128, 128);
    assert!((est / (25.0 / 255.0) - 1.0).abs() < 0.15, "{est}");
}

#[test]
fn diffusion_conserves_mean() {
    let img = random_image(32, 24, 1, 5);
    let mut current = img.clone();
    let mut mean = img.channel_mean(0);
    for _ in 0..100 {
        current = anisotropic_diffuse(&current, 1, 0.1, 0.25).unwrap();
        let m = current.channel_mean(0);
        assert!((m - mean).abs() <= 1e-6);
        mean = m;
    }
}

#[test]
fn diffusion_keeps_strong_edges() {
    let out = anisotropic_diffuse(&step_image(32, 16), 10, 0.1, 0.25).unwrap();
    assert!(edge_contrast(&out) >= 0.95);
    assert!(anisotropic_diffuse(&step_image(8, 8), 1, 0.1, 0.3).is_err());
}

#[test]
fn tv_large_lambda_returns_input() {
    let img = random_image(24, 24, 3, 6);
    let out = tv_denoise(&img, 1e6, 50).unwrap();
    for (a, b) in out.data().iter().zip(img.data()) {
        assert!((a - b).abs() < 1e-3);
    }
    assert!(tv_denoise(&img, 0.0, 10).is_err());
}

#[test]
fn tv_flattens_extruded_step() {
    // Noise varies along x only, so each column is constant.
    let (w, h) = (64, 16);
    let mut rng = CounterRng::new(12);
    let noise: Vec<f64> = (0..w).map(|_| rng.normal_pair().0 * 0.05).collect();
    let img = Image::from_fn(w, h, 1, |_, x, _| {
        (if x < w / 2 { 0.3 } else { 0.7 }) + noise[x]
    });
    let out = tv_denoise(&img, 1.0, 3000).unwrap();
    let region_std = |img: &Image, xs: std::ops::Range<usize>| {
        let vals: Vec<f64> = xs.map(|x| img.get(0, x, h / 2)).collect();
        let m = vals.iter().sum::<f64>() / vals.len() as f64;
        (vals.iter().map(|v| (v - m).powi(2)).sum::<f64>() / vals.len() as f64).sqrt()
    };
    for range in [2..w / 2 - 2, w / 2 + 2..w - 2] {
        let before = region_std(&img, range.clone());
        let after = region_std(&out, range);
        assert!(after <= 0.2 * before, "{after} vs {before}");
    }
}

#[test]
fn rl_identity_kernel_fixed_point() {
    let img = random_image(16, 16, 3, 7);
    let out = richardson_lucy(&img, &Kernel2D::identity(), 25).unwrap();
    for (a, b) in out.data().iter().zip(img.data()) {
        assert!((a - b).abs() < 1e-12);
    }
}

#[test]
fn rl_improves_known_motion_blur() {
    let clean = smooth_scene(64);
    let k = motion_kernel(9, 0.0).unwrap();
    let blurred = convolve(&clean, &k).unwrap();
    let out = richardson_lucy(&blurred, &k, 30).unwrap();
    let gain = psnr(&out, &clean, 1.0).unwrap() - psnr(&blurred, &clean, 1.0).unwrap();
    assert!(gain >= 3.0, "gain {gain}");
}

#[test]
fn rl_stays_non_negative() {
    for seed in 0..50 {
        let img = random_image(12, 12, 1, 100 + seed);
        let mut rng = CounterRng::new(seed);
        let len = 2 + rng.below(5) as u32;
        let k = motion_kernel(len, rng.uniform() * 180.0).unwrap();
        let out = richardson_lucy(&img, &k, 5).unwrap();
        assert!(out.data().iter().all(|&v| v >= 0.0));
    }
}

#[test]
fn rl_rejects_unnormalized_kernel() {
    let img = Image::filled(8, 8, 1, 0.5);
    let k = Kernel2D::new(3, 1, vec![0.5, 0.5, 0.5]).unwrap();
    assert!(richardson_lucy(&img, &k, 3).is_err());
    assert!(wiener_deconvolve(&img, &k, 0.01).is_err());
}

#[test]
fn wiener_identity_kernel() {
    let img = random_image(20, 12, 3, 8);
    let out = wiener_deconvolve(&img, &Kernel2D::identity(), 0.0).unwrap();
    for (a, b) in out.data().iter().zip(img.data()) {
        assert!((a - b).abs() < 1e-6);
    }
}

#[test]
fn wiener_improves_known_motion_blur() {
    let clean = smooth_scene(64);
    let k = motion_kernel(9, 0.0).unwrap();
    let blurred = convolve(&clean, &k).unwrap();
    let out = wiener_deconvolve(&blurred, &k, 1e-6).unwrap();
    let gain = psnr(&out, &clean, 1.0).unwrap() - psnr(&blurred, &clean, 1.0).unwrap();
    assert!(gain >= 5.0, "gain {gain}");
}

#[test]
fn wiener_dc_gain() {
    for nsr in [0.0, 1e-3, 0.5] {
        let k = motion_kernel(7, 23.0).unwrap();
        let r = wiener_response(&k, 32, 16, nsr);
        assert!((r[0].re - 1.0 / (1.0 + nsr)).abs() < 1e-12 && r[0].im.abs() < 1e-12);
    }
}

#[test]
fn transfer_matches_spatial_correlation() {
    // Periodic correlation through the FFT equals the direct sum.
    let (w, h) = (12, 10);
    let img = random_image(w, h, 1, 30);
    let k = motion_kernel(5, 37.0).unwrap();
    let t = kernel_transfer(&k, w, h);
    let mut spec: Vec<num_complex::Complex<f64>> =
        img.data().iter().map(|&v| num_complex::Complex::new(v, 0.0)).collect();
    deconv::fft2(&mut spec, w, h, false);
    spec.iter_mut().zip(&t).for_each(|(s, t)| *s *= t);
    deconv::fft2(&mut spec, w, h, true);
    let (rx, ry) = (k.radius_x() as isize, k.radius_y() as isize);
    for y in 0..h as isize {
        for x in 0..w as isize {
            let mut acc = 0.0;
            for dy in -ry..=ry {
                for dx in -rx..=rx {
                    let sx = (x + dx).rem_euclid(w as isize) as usize;
                    let sy = (y + dy).rem_euclid(h as isize) as usize;
                    acc += k.at(dx, dy) * img.get(0, sx, sy);
                }
            }
            assert!((spec[(y as usize) * w + x as usize].re - acc).abs() < 1e-10);
        }
    }
}

#[test]
fn params_parse_and_validate() {
    let cfg = RestoreConfig::from_params("nlm", &[("h", "0.1"), ("search_radius", "4")]).unwrap();
    assert_eq!(
        cfg,
        RestoreConfig::Nlm {
            patch_radius: 2,
            search_radius: 4,
            h: 0.1,
            noise_sigma: None
        }
    );
    let rl = RestoreConfig::from_params("rl", &[("kernel", "motion:9:0")]).unwrap();
    assert!(rl.is_deconvolution());
    assert!(RestoreConfig::from_params("tv", &[("sigma", "1")]).is_err());
    assert!(RestoreConfig::from_params("tv", &[("lambda", "-1")]).is_err());
    assert!(RestoreConfig::default_for("bm3d").is_err());
    let json = serde_json::to_string(&cfg).unwrap();
    assert_eq!(serde_json::from_str::<RestoreConfig>(&json).unwrap(), cfg);
}

