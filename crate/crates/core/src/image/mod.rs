//! Grayscale images with an explicit value range, and the operations the
//! experiments need: affine range normalization, additive white Gaussian
//! noise, PSNR and training-patch extraction.

mod io;
pub mod pgm;

use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};

pub use io::{decode_image, encode_image, load_corpus, load_image, save_image, ImageFormat};

/// Row-major grayscale image. `range` is the declared `(lo, hi)` span of the
/// intensity scale, not the observed min/max.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageGray {
    width: usize,
    height: usize,
    data: Vec<f64>,
    range: (f64, f64),
}

impl ImageGray {
    pub fn new(width: usize, height: usize, data: Vec<f64>, range: (f64, f64)) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::invalid(format!("empty image {width}x{height}")));
        }
        if data.len() != width * height {
            return Err(Error::shape(
                format!("{width}x{height} = {} pixels", width * height),
                format!("{} values", data.len()),
            ));
        }
        if !(range.0.is_finite() && range.1.is_finite() && range.1 > range.0) {
            return Err(Error::invalid(format!("bad value range {range:?}")));
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::invalid(format!("non-finite pixel at index {i}")));
        }
        Ok(ImageGray {
            width,
            height,
            data,
            range,
        })
    }

    /// 8-bit image on the `[0, 255]` scale.
    pub fn from_u8(width: usize, height: usize, pixels: &[u8]) -> Result<Self> {
        let data = pixels.iter().map(|&p| f64::from(p)).collect();
        Self::new(width, height, data, (0.0, 255.0))
    }

    pub fn constant(width: usize, height: usize, value: f64, range: (f64, f64)) -> Result<Self> {
        Self::new(width, height, vec![value; width * height], range)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn range(&self) -> (f64, f64) {
        self.range
    }

    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.data[y * self.width + x]
    }

    /// Same geometry and range, new pixel values.
    pub fn with_data(&self, data: Vec<f64>) -> Result<Self> {
        Self::new(self.width, self.height, data, self.range)
    }

    /// Affine map of the declared range onto `[lo, hi]`. Mapping back with
    /// the original range inverts it.
    pub fn normalize_range(&self, lo: f64, hi: f64) -> Result<Self> {
        if !(lo.is_finite() && hi.is_finite() && hi > lo) {
            return Err(Error::invalid(format!(
                "target range [{lo}, {hi}] needs hi > lo"
            )));
        }
        let (a, b) = self.range;
        if (a, b) == (lo, hi) {
            return Ok(self.clone());
        }
        let scale = (hi - lo) / (b - a);
        let data = self.data.iter().map(|&v| lo + (v - a) * scale).collect();
        Self::new(self.width, self.height, data, (lo, hi))
    }

    /// Clipped to the declared range.
    pub fn clipped(&self) -> Self {
        let (lo, hi) = self.range;
        ImageGray {
            data: self.data.iter().map(|v| v.clamp(lo, hi)).collect(),
            ..self.clone()
        }
    }

    /// 8-bit rendering: map to `[0, 255]`, clip, round half away from zero.
    pub fn to_u8(&self) -> Vec<u8> {
        let (lo, hi) = self.range;
        let scale = 255.0 / (hi - lo);
        self.data
            .iter()
            .map(|&v| ((v - lo) * scale).clamp(0.0, 255.0).round() as u8)
            .collect()
    }

    /// The image as it would read back from an 8-bit file.
    pub fn quantized_u8(&self) -> Self {
        let data = self.to_u8().into_iter().map(f64::from).collect();
        ImageGray {
            width: self.width,
            height: self.height,
            data,
            range: (0.0, 255.0),
        }
    }

    /// Sub-image with top-left corner `(x, y)`.
    pub fn crop(&self, x: usize, y: usize, w: usize, h: usize) -> Result<Self> {
        if w == 0 || h == 0 || x + w > self.width || y + h > self.height {
            return Err(Error::invalid(format!(
                "crop {w}x{h}+{x}+{y} outside {}x{}",
                self.width, self.height
            )));
        }
        let mut data = Vec::with_capacity(w * h);
        for row in y..y + h {
            let start = row * self.width + x;
            data.extend_from_slice(&self.data[start..start + w]);
        }
        Self::new(w, h, data, self.range)
    }

    /// One of the eight square symmetries: `mode % 4` quarter turns
    /// counter-clockwise, preceded by a horizontal flip when `mode >= 4`.
    pub fn dihedral(&self, mode: u8) -> Self {
        let flip = mode & 4 != 0;
        let turns = mode % 4;
        let (w, h) = (self.width, self.height);
        let (nw, nh) = if turns % 2 == 0 { (w, h) } else { (h, w) };
        let mut data = vec![0.0; w * h];
        for y in 0..h {
            for x in 0..w {
                let sx = if flip { w - 1 - x } else { x };
                let (ox, oy) = match turns {
                    0 => (sx, y),
                    1 => (y, w - 1 - sx),
                    2 => (w - 1 - sx, h - 1 - y),
                    _ => (h - 1 - y, sx),
                };
                data[oy * nw + ox] = self.data[y * w + x];
            }
        }
        ImageGray {
            width: nw,
            height: nh,
            data,
            range: self.range,
        }
    }
}

/// Additive white Gaussian noise, `sigma` on the 0..255 scale.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseSpec {
    pub sigma: f64,
    pub seed: u64,
}

impl NoiseSpec {
    pub fn new(sigma: f64, seed: u64) -> Result<Self> {
        if !(sigma.is_finite() && sigma >= 0.0) {
            return Err(Error::invalid(format!("sigma must be >= 0, got {sigma}")));
        }
        Ok(NoiseSpec { sigma, seed })
    }
}

/// Seeded i.i.d. Gaussian noise of standard deviation `sigma` (already in the
/// target scale), one value per pixel.
pub fn gaussian_noise(len: usize, sigma: f64, seed: u64) -> Vec<f64> {
    if sigma == 0.0 {
        return vec![0.0; len];
    }
    let normal = Normal::new(0.0, sigma).expect("sigma validated");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..len).map(|_| normal.sample(&mut rng)).collect()
}

/// `y = x + v`, `v ~ N(0, sigma^2)` per pixel. `sigma` is interpreted on the
/// 0..255 scale and rescaled to the image's declared range. Values are not
/// clipped.
pub fn add_awgn(img: &ImageGray, spec: &NoiseSpec) -> Result<ImageGray> {
    let spec = NoiseSpec::new(spec.sigma, spec.seed)?;
    let (lo, hi) = img.range();
    let sigma = spec.sigma * (hi - lo) / 255.0;
    let noise = gaussian_noise(img.len(), sigma, spec.seed);
    let data = img.data.iter().zip(noise).map(|(x, v)| x + v).collect();
    img.with_data(data)
}

/// PSNR in decibels; identical images give [`Psnr::Infinite`].
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub enum Psnr {
    Finite(f64),
    Infinite,
}

impl Psnr {
    pub fn from_mse(mse: f64, peak: f64) -> Self {
        if mse == 0.0 {
            Psnr::Infinite
        } else {
            Psnr::Finite(10.0 * (peak * peak / mse).log10())
        }
    }

    pub fn db(&self) -> f64 {
        match *self {
            Psnr::Finite(v) => v,
            Psnr::Infinite => f64::INFINITY,
        }
    }

    pub fn is_finite(&self) -> bool {
        matches!(self, Psnr::Finite(_))
    }
}

impl fmt::Display for Psnr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&crate::fmt::sig6(self.db()))
    }
}

pub fn mse(a: &ImageGray, b: &ImageGray) -> Result<f64> {
    if (a.width, a.height) != (b.width, b.height) {
        return Err(Error::shape(
            format!("{}x{}", a.width, a.height),
            format!("{}x{}", b.width, b.height),
        ));
    }
    let sum: f64 = a
        .data
        .iter()
        .zip(&b.data)
        .map(|(x, y)| (x - y) * (x - y))
        .sum();
    Ok(sum / a.len() as f64)
}

/// `10 log10(peak^2 / MSE)`.
pub fn psnr(reference: &ImageGray, test: &ImageGray, peak: f64) -> Result<Psnr> {
    if !(peak.is_finite() && peak > 0.0) {
        return Err(Error::invalid(format!("peak must be > 0, got {peak}")));
    }
    Ok(Psnr::from_mse(mse(reference, test)?, peak))
}

/// Augmentation applied to each extracted patch.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Augment {
    None,
    /// Uniformly random flip/rotation from the eight square symmetries.
    Dihedral,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PatchSpec {
    pub size: usize,
    pub stride: usize,
    pub augment: Augment,
}

impl Default for PatchSpec {
    fn default() -> Self {
        PatchSpec {
            size: 40,
            stride: 10,
            augment: Augment::Dihedral,
        }
    }
}

/// Square patches on a regular grid, scanned row by row.
pub fn extract_patches<R: Rng + ?Sized>(
    img: &ImageGray,
    spec: &PatchSpec,
    rng: &mut R,
) -> Result<Vec<ImageGray>> {
    let PatchSpec {
        size,
        stride,
        augment,
    } = *spec;
    if size == 0 || stride == 0 {
        return Err(Error::invalid("patch size and stride must be >= 1"));
    }
    if size > img.width.min(img.height) {
        return Err(Error::invalid(format!(
            "patch size {size} exceeds image {}x{}",
            img.width, img.height
        )));
    }
    let mut out = Vec::new();
    for y in (0..=img.height - size).step_by(stride) {
        for x in (0..=img.width - size).step_by(stride) {
            let patch = img.crop(x, y, size, size)?;
            out.push(match augment {
                Augment::None => patch,
                Augment::Dihedral => patch.dihedral(rng.gen_range(0..8)),
            });
        }
    }
    Ok(out)
}
