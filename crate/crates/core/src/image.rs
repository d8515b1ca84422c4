//! Planar floating-point rasters and the spatial primitives shared by every
//! other module.
//!
//! Samples are `f64` in `[0, 1]`, stored channel-major (all of channel 0,
//! then channel 1, ...). 8-bit quantization happens only in [`load_image`]
//! and [`save_image`]. Every neighbourhood operation uses reflect-101
//! borders (`dcb|abcd|cba`), which preserves constant images.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use image::{ColorType, DynamicImage, ImageReader};

use crate::error::{invalid, Error, Result};
use crate::rng::CounterRng;

#[derive(Clone, Debug, PartialEq)]
pub struct Image {
    width: usize,
    height: usize,
    channels: usize,
    data: Vec<f64>,
    peak: f64,
}

impl Image {
    pub fn new(width: usize, height: usize, channels: usize, data: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(invalid!("image dimensions must be positive, got {width}x{height}"));
        }
        if channels != 1 && channels != 3 {
            return Err(invalid!("images have 1 or 3 channels, got {channels}"));
        }
        if data.len() != width * height * channels {
            return Err(Error::Shape(format!(
                "{} samples for a {width}x{height}x{channels} image",
                data.len()
            )));
        }
        if let Some(bad) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::Numeric(format!("non-finite sample at index {bad}")));
        }
        Ok(Image {
            width,
            height,
            channels,
            data,
            peak: 1.0,
        })
    }

    pub fn filled(width: usize, height: usize, channels: usize, value: f64) -> Self {
        Image::new(width, height, channels, vec![value; width * height * channels])
            .expect("valid constant image")
    }

    /// Builds an image from `f(channel, x, y)`.
    pub fn from_fn(
        width: usize,
        height: usize,
        channels: usize,
        mut f: impl FnMut(usize, usize, usize) -> f64,
    ) -> Self {
        let mut data = Vec::with_capacity(width * height * channels);
        for c in 0..channels {
            for y in 0..height {
                for x in 0..width {
                    data.push(f(c, x, y));
                }
            }
        }
        Image::new(width, height, channels, data).expect("valid generated image")
    }

    pub fn with_peak(mut self, peak: f64) -> Result<Self> {
        if !(peak > 0.0 && peak.is_finite()) {
            return Err(invalid!("peak must be positive and finite, got {peak}"));
        }
        self.peak = peak;
        Ok(self)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn peak(&self) -> f64 {
        self.peak
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn plane_len(&self) -> usize {
        self.width * self.height
    }

    pub fn plane(&self, c: usize) -> &[f64] {
        let n = self.plane_len();
        &self.data[c * n..(c + 1) * n]
    }

    pub fn planes(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.plane_len())
    }

    #[inline]
    pub fn get(&self, c: usize, x: usize, y: usize) -> f64 {
        self.data[(c * self.height + y) * self.width + x]
    }

    pub fn same_shape(&self, other: &Image) -> bool {
        self.width == other.width && self.height == other.height && self.channels == other.channels
    }

    pub(crate) fn check_same_shape(&self, other: &Image) -> Result<()> {
        if self.same_shape(other) {
            Ok(())
        } else {
            Err(Error::Shape(format!(
                "{}x{}x{} vs {}x{}x{}",
                self.width, self.height, self.channels, other.width, other.height, other.channels
            )))
        }
    }

    /// Same geometry and peak, new samples. Non-finite values are rejected.
    pub fn with_data(&self, data: Vec<f64>) -> Result<Image> {
        let mut out = Image::new(self.width, self.height, self.channels, data)?;
        out.peak = self.peak;
        Ok(out)
    }

    /// Per-plane transform keeping geometry; used by the per-channel filters.
    pub(crate) fn map_planes(
        &self,
        mut f: impl FnMut(&[f64]) -> Result<Vec<f64>>,
    ) -> Result<Image> {
        let mut data = Vec::with_capacity(self.data.len());
        for plane in self.planes() {
            data.extend(f(plane)?);
        }
        self.with_data(data)
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Image {
        let mut out = self.clone();
        out.data.iter_mut().for_each(|v| *v = f(*v));
        out
    }

    pub fn clamped(&self) -> Image {
        self.map(|v| v.clamp(0.0, 1.0))
    }

    pub fn min_max(&self) -> (f64, f64) {
        self.data
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
                (lo.min(v), hi.max(v))
            })
    }

    pub fn channel_mean(&self, c: usize) -> f64 {
        self.plane(c).iter().sum::<f64>() / self.plane_len() as f64
    }

    pub fn crop(&self, x0: usize, y0: usize, width: usize, height: usize) -> Result<Image> {
        if width == 0 || height == 0 || x0 + width > self.width || y0 + height > self.height {
            return Err(invalid!(
                "crop {width}x{height}+{x0}+{y0} outside {}x{}",
                self.width,
                self.height
            ));
        }
        let mut data = Vec::with_capacity(width * height * self.channels);
        for plane in self.planes() {
            for y in y0..y0 + height {
                let row = y * self.width;
                data.extend_from_slice(&plane[row + x0..row + x0 + width]);
            }
        }
        let mut out = Image::new(width, height, self.channels, data)?;
        out.peak = self.peak;
        Ok(out)
    }

    /// Extends the right and bottom edges by reflect-101.
    pub fn pad_reflect(&self, right: usize, bottom: usize) -> Result<Image> {
        if right >= self.width.max(2) || bottom >= self.height.max(2) {
            return Err(invalid!(
                "reflect padding {right}x{bottom} needs a larger {}x{} image",
                self.width,
                self.height
            ));
        }
        let (w, h) = (self.width + right, self.height + bottom);
        let mut data = Vec::with_capacity(w * h * self.channels);
        for plane in self.planes() {
            for y in 0..h {
                let sy = reflect101(y as isize, self.height);
                for x in 0..w {
                    data.push(plane[sy * self.width + reflect101(x as isize, self.width)]);
                }
            }
        }
        let mut out = Image::new(w, h, self.channels, data)?;
        out.peak = self.peak;
        Ok(out)
    }
}

/// Reflect-101 index: `-1 -> 1`, `n -> n - 2`.
#[inline]
pub fn reflect101(mut i: isize, n: usize) -> usize {
    if n == 1 {
        return 0;
    }
    let n = n as isize;
    loop {
        if i < 0 {
            i = -i;
        } else if i >= n {
            i = 2 * (n - 1) - i;
        } else {
            return i as usize;
        }
    }
}

/// Dense 2-D kernel with odd extents, stored row-major. Tap `(0, 0)` of
/// [`Kernel2D::at`] is the centre.
#[derive(Clone, Debug, PartialEq)]
pub struct Kernel2D {
    width: usize,
    height: usize,
    weights: Vec<f64>,
}

impl Kernel2D {
    pub fn new(width: usize, height: usize, weights: Vec<f64>) -> Result<Self> {
        if width.is_multiple_of(2) || height.is_multiple_of(2) {
            return Err(invalid!("kernel extents must be odd, got {width}x{height}"));
        }
        if weights.len() != width * height {
            return Err(Error::Shape(format!(
                "{} weights for a {width}x{height} kernel",
                weights.len()
            )));
        }
        if weights.iter().any(|w| !w.is_finite()) {
            return Err(Error::Numeric("non-finite kernel weight".into()));
        }
        Ok(Kernel2D {
            width,
            height,
            weights,
        })
    }

    pub fn identity() -> Self {
        Kernel2D {
            width: 1,
            height: 1,
            weights: vec![1.0],
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn radius_x(&self) -> usize {
        self.width / 2
    }

    pub fn radius_y(&self) -> usize {
        self.height / 2
    }

    /// Weight at offset `(dx, dy)` from the centre.
    #[inline]
    pub fn at(&self, dx: isize, dy: isize) -> f64 {
        let x = dx + self.radius_x() as isize;
        let y = dy + self.radius_y() as isize;
        self.weights[y as usize * self.width + x as usize]
    }

    pub fn sum(&self) -> f64 {
        self.weights.iter().sum()
    }

    pub fn is_normalized(&self) -> bool {
        (self.sum() - 1.0).abs() <= 1e-6 && self.weights.iter().all(|&w| w >= 0.0)
    }

    pub(crate) fn check_normalized(&self) -> Result<()> {
        if self.is_normalized() {
            Ok(())
        } else {
            Err(invalid!(
                "blur kernel must be non-negative and sum to 1 (sum = {})",
                self.sum()
            ))
        }
    }

    /// 180-degree rotation; the adjoint of correlation with `self`.
    pub fn flipped(&self) -> Kernel2D {
        let mut weights = self.weights.clone();
        weights.reverse();
        Kernel2D {
            width: self.width,
            height: self.height,
            weights,
        }
    }
}

pub fn load_image(path: impl AsRef<Path>) -> Result<Image> {
    let path = path.as_ref();
    let decode_err = |reason: String| Error::Decode {
        path: path.to_path_buf(),
        reason,
    };
    let reader = ImageReader::open(path)
        .map_err(|e| Error::io(path, e))?
        .with_guessed_format()
        .map_err(|e| Error::io(path, e))?;
    let decoded = reader.decode().map_err(|e| decode_err(e.to_string()))?;
    let (width, height) = (decoded.width() as usize, decoded.height() as usize);
    let (channels, bytes) = match decoded {
        DynamicImage::ImageLuma8(buf) => (1, buf.into_raw()),
        DynamicImage::ImageRgb8(buf) => (3, buf.into_raw()),
        other => {
            return Err(decode_err(format!(
                "unsupported pixel format {:?}; only 8-bit gray or RGB",
                other.color()
            )))
        }
    };
    let plane = width * height;
    let mut data = vec![0.0; plane * channels];
    for (i, &b) in bytes.iter().enumerate() {
        let (p, c) = (i / channels, i % channels);
        data[c * plane + p] = f64::from(b) / 255.0;
    }
    Image::new(width, height, channels, data)
}

/// Writes an 8-bit PNG, or a binary PPM/PGM when the extension is `.ppm`
/// or `.pgm`. Samples are clamped to `[0, 1]` and rounded.
pub fn save_image(img: &Image, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let bytes = interleaved_bytes(img);
    let ext = path
        .extension()
        .and_then(|e| e.to_str())
        .map(str::to_ascii_lowercase);
    match ext.as_deref() {
        Some("ppm") | Some("pgm") | Some("pnm") => {
            let magic = if img.channels == 3 { "P6" } else { "P5" };
            let file = File::create(path).map_err(|e| Error::io(path, e))?;
            let mut w = BufWriter::new(file);
            write!(w, "{magic}\n{} {}\n255\n", img.width, img.height)
                .and_then(|_| w.write_all(&bytes))
                .and_then(|_| w.flush())
                .map_err(|e| Error::io(path, e))
        }
        _ => {
            let color = if img.channels == 3 {
                ColorType::Rgb8
            } else {
                ColorType::L8
            };
            image::save_buffer_with_format(
                path,
                &bytes,
                img.width as u32,
                img.height as u32,
                color,
                image::ImageFormat::Png,
            )
            .map_err(|e| match e {
                image::ImageError::IoError(io) => Error::io(path, io),
                other => Error::io(path, std::io::Error::other(other.to_string())),
            })
        }
    }
}

fn interleaved_bytes(img: &Image) -> Vec<u8> {
    let plane = img.plane_len();
    let mut bytes = vec![0u8; plane * img.channels];
    for c in 0..img.channels {
        for (p, &v) in img.plane(c).iter().enumerate() {
            bytes[p * img.channels + c] = (v.clamp(0.0, 1.0) * 255.0).round() as u8;
        }
    }
    bytes
}

/// Per-channel 2-D correlation with reflect-101 borders. Output has the
/// input's shape.
pub fn convolve(img: &Image, k: &Kernel2D) -> Result<Image> {
    if (k.width > 1 && k.width >= img.width) || (k.height > 1 && k.height >= img.height) {
        return Err(invalid!(
            "{}x{} kernel does not fit a {}x{} image",
            k.width,
            k.height,
            img.width,
            img.height
        ));
    }
    let (w, h) = (img.width, img.height);
    img.map_planes(|plane| Ok(correlate_plane(plane, w, h, k)))
}

pub(crate) fn correlate_plane(src: &[f64], w: usize, h: usize, k: &Kernel2D) -> Vec<f64> {
    let (rx, ry) = (k.radius_x() as isize, k.radius_y() as isize);
    let xs: Vec<Vec<usize>> = (-rx..=rx)
        .map(|dx| (0..w).map(|x| reflect101(x as isize + dx, w)).collect())
        .collect();
    let mut out = vec![0.0; w * h];
    for (ky, dy) in (-ry..=ry).enumerate() {
        for y in 0..h {
            let src_row = &src[reflect101(y as isize + dy, h) * w..][..w];
            let out_row = &mut out[y * w..(y + 1) * w];
            for (kx, xmap) in xs.iter().enumerate() {
                let wt = k.weights[ky * k.width + kx];
                if wt == 0.0 {
                    continue;
                }
                for (o, &sx) in out_row.iter_mut().zip(xmap) {
                    *o += wt * src_row[sx];
                }
            }
        }
    }
    out
}

/// Horizontal and vertical Sobel responses of one plane, reflect-101 border.
pub(crate) fn sobel_plane(src: &[f64], w: usize, h: usize) -> (Vec<f64>, Vec<f64>) {
    let mut gx = vec![0.0; w * h];
    let mut gy = vec![0.0; w * h];
    for y in 0..h {
        let ym = reflect101(y as isize - 1, h) * w;
        let y0 = y * w;
        let yp = reflect101(y as isize + 1, h) * w;
        for x in 0..w {
            let xm = reflect101(x as isize - 1, w);
            let xp = reflect101(x as isize + 1, w);
            let (a, b, c) = (src[ym + xm], src[ym + x], src[ym + xp]);
            let (d, f) = (src[y0 + xm], src[y0 + xp]);
            let (g, hh, i) = (src[yp + xm], src[yp + x], src[yp + xp]);
            gx[y0 + x] = (c + 2.0 * f + i) - (a + 2.0 * d + g);
            gy[y0 + x] = (g + 2.0 * hh + i) - (a + 2.0 * b + c);
        }
    }
    (gx, gy)
}

/// Adjoint of [`sobel_plane`]: scatters gradient-map sensitivities back onto
/// the source samples, following the same reflected indices.
pub(crate) fn sobel_plane_adjoint(dgx: &[f64], dgy: &[f64], w: usize, h: usize) -> Vec<f64> {
    let mut out = vec![0.0; w * h];
    for y in 0..h {
        let ym = reflect101(y as isize - 1, h) * w;
        let y0 = y * w;
        let yp = reflect101(y as isize + 1, h) * w;
        for x in 0..w {
            let xm = reflect101(x as isize - 1, w);
            let xp = reflect101(x as isize + 1, w);
            let sx = dgx[y0 + x];
            let sy = dgy[y0 + x];
            out[ym + xm] += -sx - sy;
            out[ym + x] += -2.0 * sy;
            out[ym + xp] += sx - sy;
            out[y0 + xm] += -2.0 * sx;
            out[y0 + xp] += 2.0 * sx;
            out[yp + xm] += -sx + sy;
            out[yp + x] += 2.0 * sy;
            out[yp + xp] += sx + sy;
        }
    }
    out
}

/// Per-channel gradient magnitude `sqrt(Gx^2 + Gy^2)`, unclamped.
pub fn sobel_magnitude(img: &Image) -> Image {
    let (w, h) = (img.width, img.height);
    let mut data = Vec::with_capacity(img.data.len());
    for plane in img.planes() {
        let (gx, gy) = sobel_plane(plane, w, h);
        data.extend(gx.iter().zip(&gy).map(|(a, b)| a.hypot(*b)));
    }
    img.with_data(data).expect("finite gradients")
}

/// Samples up to `count` distinct `size`x`size` patches whose origins lie on
/// a `stride` grid. The grid is shuffled with the seeded stream, so the
/// selection is a pure function of the arguments.
pub fn extract_patches(
    img: &Image,
    size: usize,
    stride: usize,
    seed: u64,
    count: usize,
) -> Result<Vec<Image>> {
    if size == 0 || size > img.width.min(img.height) {
        return Err(invalid!(
            "patch size {size} does not fit a {}x{} image",
            img.width,
            img.height
        ));
    }
    if count == 0 {
        return Err(invalid!("patch count must be positive"));
    }
    if stride == 0 {
        return Err(invalid!("patch stride must be positive"));
    }
    let xs: Vec<usize> = (0..=img.width - size).step_by(stride).collect();
    let ys: Vec<usize> = (0..=img.height - size).step_by(stride).collect();
    let mut origins: Vec<(usize, usize)> = ys
        .iter()
        .flat_map(|&y| xs.iter().map(move |&x| (x, y)))
        .collect();
    CounterRng::new(seed).shuffle(&mut origins);
    origins
        .into_iter()
        .take(count)
        .map(|(x, y)| img.crop(x, y, size, size))
        .collect()
}
