//! White balance and raw-to-sRGB rendering.
//!
//! Rendering order per pixel: white-balance gains, then the 3x3 raw->XYZ
//! matrix, clamp to `[0, 1]`, then (optionally) the sRGB transfer curve.

use std::path::Path;

use crate::error::{invalid, Error, Result};
use crate::image::Image;

const MIN_CHANNEL_LEVEL: f64 = 1e-6;

#[derive(Clone, Debug, PartialEq)]
pub struct ColorPipeline {
    wb_gains: [f64; 3],
    raw_to_xyz: [[f64; 3]; 3],
    srgb_encode: bool,
}

impl Default for ColorPipeline {
    fn default() -> Self {
        ColorPipeline {
            wb_gains: [1.0; 3],
            raw_to_xyz: IDENTITY,
            srgb_encode: false,
        }
    }
}

const IDENTITY: [[f64; 3]; 3] = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];

impl ColorPipeline {
    pub fn new(wb_gains: [f64; 3], raw_to_xyz: [[f64; 3]; 3], srgb_encode: bool) -> Result<Self> {
        if wb_gains.iter().any(|g| !(g.is_finite() && *g > 0.0)) {
            return Err(invalid!("white-balance gains must be positive, got {wb_gains:?}"));
        }
        if raw_to_xyz.iter().flatten().any(|v| !v.is_finite()) {
            return Err(invalid!("raw->XYZ matrix has non-finite entries"));
        }
        let det = det3(&raw_to_xyz);
        if det.abs() <= 1e-9 {
            return Err(invalid!("raw->XYZ matrix is singular (det = {det:e})"));
        }
        Ok(ColorPipeline {
            wb_gains,
            raw_to_xyz,
            srgb_encode,
        })
    }

    pub fn from_gains(gains: [f64; 3]) -> Result<Self> {
        ColorPipeline::new(gains, IDENTITY, false)
    }

    pub fn with_matrix(self, raw_to_xyz: [[f64; 3]; 3]) -> Result<Self> {
        ColorPipeline::new(self.wb_gains, raw_to_xyz, self.srgb_encode)
    }

    pub fn with_srgb_encode(mut self, on: bool) -> Self {
        self.srgb_encode = on;
        self
    }

    pub fn wb_gains(&self) -> [f64; 3] {
        self.wb_gains
    }

    pub fn raw_to_xyz(&self) -> [[f64; 3]; 3] {
        self.raw_to_xyz
    }

    pub fn srgb_encode(&self) -> bool {
        self.srgb_encode
    }
}

fn det3(m: &[[f64; 3]; 3]) -> f64 {
    m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1]) - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
        + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
}

/// Reads nine whitespace-separated decimals, row-major.
pub fn load_matrix(path: impl AsRef<Path>) -> Result<[[f64; 3]; 3]> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_matrix(&text).map_err(|reason| Error::Decode {
        path: path.to_path_buf(),
        reason,
    })
}

pub fn parse_matrix(text: &str) -> std::result::Result<[[f64; 3]; 3], String> {
    let values = text
        .split_whitespace()
        .map(|t| t.parse::<f64>().map_err(|e| format!("bad number {t:?}: {e}")))
        .collect::<std::result::Result<Vec<_>, _>>()?;
    if values.len() != 9 {
        return Err(format!("expected 9 numbers, found {}", values.len()));
    }
    let mut m = [[0.0; 3]; 3];
    for (i, v) in values.into_iter().enumerate() {
        m[i / 3][i % 3] = v;
    }
    Ok(m)
}

fn require_rgb(img: &Image) -> Result<()> {
    if img.channels() == 3 {
        Ok(())
    } else {
        Err(Error::Shape(format!(
            "color operations need 3 channels, got {}",
            img.channels()
        )))
    }
}

/// Gray-world gains `(mean_g / mean_r, 1, mean_g / mean_b)`.
pub fn estimate_wb_grayworld(img: &Image) -> Result<[f64; 3]> {
    require_rgb(img)?;
    let means = [img.channel_mean(0), img.channel_mean(1), img.channel_mean(2)];
    gains_from_levels(means, "channel mean")
}

/// White-patch gains normalising each channel's `percentile` quantile to the
/// green one. The quantile is the nearest-rank order statistic.
pub fn estimate_wb_whitepatch(img: &Image, percentile: f64) -> Result<[f64; 3]> {
    require_rgb(img)?;
    if !(percentile > 0.0 && percentile <= 1.0) {
        return Err(invalid!("percentile must lie in (0, 1], got {percentile}"));
    }
    let mut levels = [0.0; 3];
    for (c, level) in levels.iter_mut().enumerate() {
        *level = quantile(img.plane(c), percentile);
    }
    gains_from_levels(levels, "white-patch level")
}

/// Nearest-rank quantile: the `ceil(p * n)`-th smallest value.
pub fn quantile(values: &[f64], p: f64) -> f64 {
    let mut sorted = values.to_vec();
    let rank = ((p * sorted.len() as f64).ceil() as usize).clamp(1, sorted.len());
    let (_, nth, _) = sorted.select_nth_unstable_by(rank - 1, f64::total_cmp);
    *nth
}

fn gains_from_levels(levels: [f64; 3], what: &str) -> Result<[f64; 3]> {
    if let Some(c) = levels.iter().position(|&l| l <= MIN_CHANNEL_LEVEL) {
        return Err(Error::DegenerateIlluminant(format!(
            "{what} of channel {c} is {:e}",
            levels[c]
        )));
    }
    Ok([levels[1] / levels[0], 1.0, levels[1] / levels[2]])
}

/// Multiplies each channel by its gain; no clamping.
pub fn apply_wb(img: &Image, gains: [f64; 3]) -> Result<Image> {
    require_rgb(img)?;
    let n = img.plane_len();
    let mut data = img.data().to_vec();
    for (c, g) in gains.iter().enumerate() {
        data[c * n..(c + 1) * n].iter_mut().for_each(|v| *v *= g);
    }
    img.with_data(data)
}

/// The standard sRGB opto-electronic transfer function.
#[inline]
pub fn srgb_encode(v: f64) -> f64 {
    if v <= 0.0031308 {
        12.92 * v
    } else {
        1.055 * v.powf(1.0 / 2.4) - 0.055
    }
}

pub fn apply_pipeline(img: &Image, p: &ColorPipeline) -> Result<Image> {
    require_rgb(img)?;
    let n = img.plane_len();
    let src = img.data();
    let mut data = vec![0.0; src.len()];
    let m = &p.raw_to_xyz;
    let g = &p.wb_gains;
    for i in 0..n {
        let raw = [src[i] * g[0], src[n + i] * g[1], src[2 * n + i] * g[2]];
        for (r, row) in m.iter().enumerate() {
            let mut v = (row[0] * raw[0] + row[1] * raw[1] + row[2] * raw[2]).clamp(0.0, 1.0);
            if p.srgb_encode {
                v = srgb_encode(v).clamp(0.0, 1.0);
            }
            data[r * n + i] = v;
        }
    }
    img.with_data(data)
}
