//! Mask deployment: turn an image plus a relevance heatmap into a simplified
//! image in which irrelevant regions are overlaid, blurred or desaturated,
//! optionally cropped to the activated region.
//!
//! Deployment is hard-thresholded: pixels with `h > tau` are copied through
//! byte-for-byte, everything else is transformed.

use crate::error::{Error, Result};
use crate::heatmap::{luma_u8, BinaryMask, Heatmap, ImageBuffer, DEFAULT_TAU};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DeployMethod {
    /// Replace irrelevant pixels with a solid color.
    Overlay { fill: [u8; 3] },
    /// Gaussian-blur irrelevant pixels. `None` picks `max(1, min(w, h) / 32)`.
    Blur { sigma: Option<f64> },
    /// Replace irrelevant pixels with their luma.
    Grayscale,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DeployStrategy {
    pub method: DeployMethod,
    pub with_crop: bool,
    pub tau: f64,
}

impl Default for DeployStrategy {
    fn default() -> Self {
        Self {
            method: DeployMethod::Overlay { fill: [0, 0, 0] },
            with_crop: true,
            tau: DEFAULT_TAU,
        }
    }
}

impl DeployStrategy {
    pub fn new(method: DeployMethod, with_crop: bool, tau: f64) -> Result<Self> {
        let s = Self {
            method,
            with_crop,
            tau,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.tau) {
            return Err(Error::InvalidValue(format!("tau {} not in [0, 1)", self.tau)));
        }
        if let DeployMethod::Blur { sigma: Some(s) } = self.method {
            if !(s > 0.0 && s.is_finite()) {
                return Err(Error::InvalidValue(format!("blur sigma {s} must be > 0")));
            }
        }
        Ok(())
    }
}

/// Scale-adaptive blur strength used when none is given.
pub fn default_blur_sigma(width: usize, height: usize) -> f64 {
    (width.min(height) as f64 / 32.0).max(1.0)
}

fn check_same_dims(img: &ImageBuffer, dims: (usize, usize)) -> Result<()> {
    if img.dims() != dims {
        return Err(Error::DimensionMismatch {
            expected: img.dims(),
            found: dims,
        });
    }
    Ok(())
}

fn require_rgb(img: &ImageBuffer) -> Result<()> {
    if img.channels() != 3 {
        return Err(Error::InvalidValue(format!(
            "expected an RGB image, got {} channel(s)",
            img.channels()
        )));
    }
    Ok(())
}

/// Apply `strategy` to `img` using heatmap `h`.
pub fn deploy(img: &ImageBuffer, h: &Heatmap, strategy: &DeployStrategy) -> Result<ImageBuffer> {
    strategy.validate()?;
    check_same_dims(img, h.dims())?;
    require_rgb(img)?;
    let mask = h.threshold(strategy.tau);
    let masked = match strategy.method {
        DeployMethod::Overlay { fill } => overlay_region(img, &mask, fill)?,
        DeployMethod::Blur { sigma } => {
            let sigma = sigma.unwrap_or_else(|| default_blur_sigma(img.width(), img.height()));
            blur_region(img, &mask, sigma)?
        }
        DeployMethod::Grayscale => grayscale_region(img, &mask)?,
    };
    if strategy.with_crop {
        crop_to_activation(&masked, h, strategy.tau)
    } else {
        Ok(masked)
    }
}

pub fn overlay_region(img: &ImageBuffer, mask: &BinaryMask, fill: [u8; 3]) -> Result<ImageBuffer> {
    check_same_dims(img, mask.dims())?;
    require_rgb(img)?;
    let mut out = img.clone();
    for y in 0..img.height() {
        for x in 0..img.width() {
            if !mask.get(x, y) {
                out.pixel_mut(x, y).copy_from_slice(&fill);
            }
        }
    }
    Ok(out)
}

/// Normalized 1-D Gaussian taps for offsets `-radius..=radius`, `radius = ceil(3 sigma)`.
pub fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    let radius = (3.0 * sigma).ceil() as i64;
    let taps: Vec<f64> = (-radius..=radius)
        .map(|k| (-((k * k) as f64) / (2.0 * sigma * sigma)).exp())
        .collect();
    let total: f64 = taps.iter().sum();
    taps.into_iter().map(|t| t / total).collect()
}

/// Separable, edge-clamped Gaussian blur of every channel, rounded to bytes.
pub fn gaussian_blur(img: &ImageBuffer, sigma: f64) -> Result<ImageBuffer> {
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(Error::InvalidValue(format!("blur sigma {sigma} must be > 0")));
    }
    let kernel = gaussian_kernel(sigma);
    let radius = (kernel.len() / 2) as i64;
    let (w, h, c) = (img.width(), img.height(), img.channels());
    let clamp = |v: i64, n: usize| v.clamp(0, n as i64 - 1) as usize;
    let mut out = vec![0u8; w * h * c];
    for ch in 0..c {
        let plane = img.plane(ch);
        let mut horiz = vec![0.0; w * h];
        for y in 0..h {
            for x in 0..w {
                let mut acc = 0.0;
                for (k, &t) in kernel.iter().enumerate() {
                    let sx = clamp(x as i64 + k as i64 - radius, w);
                    acc += t * plane[y * w + sx];
                }
                horiz[y * w + x] = acc;
            }
        }
        for y in 0..h {
            for x in 0..w {
                let mut acc = 0.0;
                for (k, &t) in kernel.iter().enumerate() {
                    let sy = clamp(y as i64 + k as i64 - radius, h);
                    acc += t * horiz[sy * w + x];
                }
                out[(y * w + x) * c + ch] = acc.round().clamp(0.0, 255.0) as u8;
            }
        }
    }
    ImageBuffer::new(w, h, c, out)
}

/// Blurred where `mask` is false, original where true. Not idempotent:
/// blurring an already blurred region keeps smoothing it.
pub fn blur_region(img: &ImageBuffer, mask: &BinaryMask, sigma: f64) -> Result<ImageBuffer> {
    check_same_dims(img, mask.dims())?;
    let blurred = gaussian_blur(img, sigma)?;
    let mut out = img.clone();
    for y in 0..img.height() {
        for x in 0..img.width() {
            if !mask.get(x, y) {
                out.pixel_mut(x, y).copy_from_slice(blurred.pixel(x, y));
            }
        }
    }
    Ok(out)
}

pub fn grayscale_region(img: &ImageBuffer, mask: &BinaryMask) -> Result<ImageBuffer> {
    check_same_dims(img, mask.dims())?;
    require_rgb(img)?;
    let mut out = img.clone();
    for y in 0..img.height() {
        for x in 0..img.width() {
            if !mask.get(x, y) {
                let p = out.pixel_mut(x, y);
                let g = luma_u8([p[0], p[1], p[2]]);
                p.fill(g);
            }
        }
    }
    Ok(out)
}

/// Crop to the activated bounding box; unchanged when nothing is activated.
pub fn crop_to_activation(img: &ImageBuffer, h: &Heatmap, tau: f64) -> Result<ImageBuffer> {
    check_same_dims(img, h.dims())?;
    match h.activated_bbox(tau) {
        Some(bbox) => img.crop(bbox),
        None => Ok(img.clone()),
    }
}
