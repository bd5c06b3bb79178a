//! Heatmaps, binary masks, bounding boxes and raster images.
//!
//! A pixel is *activated* when its heatmap value is strictly greater than the
//! threshold `tau`. Every operation takes `tau` explicitly; [`DEFAULT_TAU`] is
//! zero, so by default any positive relevance counts.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

pub const DEFAULT_TAU: f64 = 0.0;

/// Dense instruction-relevance map, row-major, values in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Heatmap {
    width: usize,
    height: usize,
    values: Vec<f64>,
}

impl Heatmap {
    pub fn new(width: usize, height: usize, values: Vec<f64>) -> Result<Self> {
        check_dims(width, height)?;
        if values.len() != width * height {
            return Err(Error::SizeMismatch {
                declared: width * height,
                actual: values.len(),
            });
        }
        if let Some((index, &value)) = values
            .iter()
            .enumerate()
            .find(|(_, v)| !(0.0..=1.0).contains(*v))
        {
            return Err(Error::ValueOutOfRange { index, value });
        }
        Ok(Self {
            width,
            height,
            values,
        })
    }

    /// Builds a heatmap, clamping every value into `[0, 1]` (NaN becomes 0).
    pub fn from_clamped(width: usize, height: usize, mut values: Vec<f64>) -> Result<Self> {
        for v in &mut values {
            *v = if v.is_nan() { 0.0 } else { v.clamp(0.0, 1.0) };
        }
        Self::new(width, height, values)
    }

    pub fn filled(width: usize, height: usize, value: f64) -> Result<Self> {
        Self::new(width, height, vec![value; width * height])
    }

    pub fn zeros(width: usize, height: usize) -> Result<Self> {
        Self::filled(width, height, 0.0)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.values[y * self.width + x]
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Hard-thresholded view: `bit[i] = value[i] > tau`.
    pub fn threshold(&self, tau: f64) -> BinaryMask {
        BinaryMask {
            width: self.width,
            height: self.height,
            bits: self.values.iter().map(|&v| v > tau).collect(),
        }
    }

    /// Minimal axis-aligned box containing every activated pixel, `None` when
    /// nothing is activated.
    pub fn activated_bbox(&self, tau: f64) -> Option<BBox> {
        let mut bounds: Option<(usize, usize, usize, usize)> = None;
        for y in 0..self.height {
            let row = &self.values[y * self.width..(y + 1) * self.width];
            for (x, &v) in row.iter().enumerate() {
                if v > tau {
                    bounds = Some(match bounds {
                        None => (x, y, x, y),
                        Some((x0, y0, x1, y1)) => (x0.min(x), y0.min(y), x1.max(x), y1.max(y)),
                    });
                }
            }
        }
        bounds.map(|(x0, y0, x1, y1)| BBox {
            x0,
            y0,
            x1: x1 + 1,
            y1: y1 + 1,
        })
    }

    /// Fraction of activated pixels.
    pub fn area_ratio(&self, tau: f64) -> f64 {
        let active = self.values.iter().filter(|&&v| v > tau).count();
        active as f64 / self.values.len() as f64
    }

    /// Bilinear resize with half-pixel-center alignment; output clamped to `[0, 1]`.
    pub fn resize_bilinear(&self, new_width: usize, new_height: usize) -> Result<Heatmap> {
        check_dims(new_width, new_height)?;
        let out = resize_plane(
            &self.values,
            self.width,
            self.height,
            new_width,
            new_height,
        );
        Heatmap::from_clamped(new_width, new_height, out)
    }

    /// Downsample by taking the maximum over each `factor x factor` block.
    pub fn downsample_max(&self, factor: usize) -> Result<Heatmap> {
        if factor == 0 || self.width % factor != 0 || self.height % factor != 0 {
            return Err(Error::InvalidValue(format!(
                "downsample factor {factor} does not divide {}x{}",
                self.width, self.height
            )));
        }
        let (w, h) = (self.width / factor, self.height / factor);
        let mut out = vec![0.0f64; w * h];
        for y in 0..self.height {
            for x in 0..self.width {
                let o = &mut out[(y / factor) * w + x / factor];
                *o = o.max(self.get(x, y));
            }
        }
        Heatmap::new(w, h, out)
    }
}

fn check_dims(width: usize, height: usize) -> Result<()> {
    if width == 0 || height == 0 {
        return Err(Error::InvalidValue(format!(
            "dimensions must be positive, got {width}x{height}"
        )));
    }
    Ok(())
}

/// Source coordinate and blend weight for half-pixel-center sampling.
#[inline]
fn sample_coord(dst: usize, src_len: usize, dst_len: usize) -> (usize, usize, f64) {
    let s = (dst as f64 + 0.5) * src_len as f64 / dst_len as f64 - 0.5;
    let s = s.clamp(0.0, (src_len - 1) as f64);
    let i0 = s.floor() as usize;
    let i1 = (i0 + 1).min(src_len - 1);
    (i0, i1, s - i0 as f64)
}

/// Bilinear resize of a single row-major plane, no clamping.
pub(crate) fn resize_plane(
    src: &[f64],
    width: usize,
    height: usize,
    new_width: usize,
    new_height: usize,
) -> Vec<f64> {
    if width == new_width && height == new_height {
        return src.to_vec();
    }
    let cols: Vec<_> = (0..new_width)
        .map(|x| sample_coord(x, width, new_width))
        .collect();
    let mut out = Vec::with_capacity(new_width * new_height);
    for y in 0..new_height {
        let (y0, y1, ty) = sample_coord(y, height, new_height);
        let r0 = &src[y0 * width..(y0 + 1) * width];
        let r1 = &src[y1 * width..(y1 + 1) * width];
        for &(x0, x1, tx) in &cols {
            let top = r0[x0] + (r0[x1] - r0[x0]) * tx;
            let bottom = r1[x0] + (r1[x1] - r1[x0]) * tx;
            out.push(top + (bottom - top) * ty);
        }
    }
    out
}

/// Row-major boolean mask.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct BinaryMask {
    width: usize,
    height: usize,
    bits: Vec<bool>,
}

impl BinaryMask {
    pub fn new(width: usize, height: usize, bits: Vec<bool>) -> Result<Self> {
        check_dims(width, height)?;
        if bits.len() != width * height {
            return Err(Error::SizeMismatch {
                declared: width * height,
                actual: bits.len(),
            });
        }
        Ok(Self {
            width,
            height,
            bits,
        })
    }

    pub fn filled(width: usize, height: usize, value: bool) -> Result<Self> {
        Self::new(width, height, vec![value; width * height])
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn get(&self, x: usize, y: usize) -> bool {
        self.bits[y * self.width + x]
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    pub fn is_empty(&self) -> bool {
        !self.bits.iter().any(|&b| b)
    }

    /// Intersection over union; two empty masks score 1.0.
    pub fn iou(&self, other: &BinaryMask) -> Result<f64> {
        if self.dims() != other.dims() {
            return Err(Error::DimensionMismatch {
                expected: self.dims(),
                found: other.dims(),
            });
        }
        let (mut inter, mut union) = (0usize, 0usize);
        for (&a, &b) in self.bits.iter().zip(&other.bits) {
            inter += (a && b) as usize;
            union += (a || b) as usize;
        }
        Ok(if union == 0 {
            1.0
        } else {
            inter as f64 / union as f64
        })
    }

    pub fn to_heatmap(&self) -> Heatmap {
        Heatmap {
            width: self.width,
            height: self.height,
            values: self.bits.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect(),
        }
    }

    /// Column-major run lengths, starting with the count of leading `false`
    /// bits (zero when the first pixel is set).
    pub fn rle_encode(&self) -> Rle {
        let mut counts = Vec::new();
        let mut current = false;
        let mut run = 0u32;
        for x in 0..self.width {
            for y in 0..self.height {
                let b = self.get(x, y);
                if b != current {
                    counts.push(run);
                    run = 0;
                    current = b;
                }
                run += 1;
            }
        }
        counts.push(run);
        Rle { counts }
    }

    pub fn rle_decode(rle: &Rle, width: usize, height: usize) -> Result<BinaryMask> {
        check_dims(width, height)?;
        let total: u64 = rle.counts.iter().map(|&c| c as u64).sum();
        if total != (width * height) as u64 {
            return Err(Error::MalformedRle(format!(
                "runs sum to {total}, expected {}",
                width * height
            )));
        }
        let mut bits = vec![false; width * height];
        let mut idx = 0usize;
        let mut value = false;
        for &c in &rle.counts {
            for k in idx..idx + c as usize {
                let (x, y) = (k / height, k % height);
                bits[y * width + x] = value;
            }
            idx += c as usize;
            value = !value;
        }
        BinaryMask::new(width, height, bits)
    }
}

/// Free-function form of [`BinaryMask::iou`].
pub fn mask_iou(a: &BinaryMask, b: &BinaryMask) -> Result<f64> {
    a.iou(b)
}

/// Run-length encoding of a [`BinaryMask`]; renders as space-separated counts.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Rle {
    pub counts: Vec<u32>,
}

impl fmt::Display for Rle {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, c) in self.counts.iter().enumerate() {
            if i > 0 {
                f.write_str(" ")?;
            }
            write!(f, "{c}")?;
        }
        Ok(())
    }
}

impl FromStr for Rle {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let counts = s
            .split_whitespace()
            .map(|t| {
                t.parse::<u32>()
                    .map_err(|e| Error::MalformedRle(format!("`{t}`: {e}")))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Rle { counts })
    }
}

/// Box with inclusive top-left and exclusive bottom-right corners.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
pub struct BBox {
    pub x0: usize,
    pub y0: usize,
    pub x1: usize,
    pub y1: usize,
}

impl BBox {
    pub fn new(x0: usize, y0: usize, x1: usize, y1: usize) -> Result<Self> {
        if x0 >= x1 || y0 >= y1 {
            return Err(Error::InvalidValue(format!(
                "empty box ({x0},{y0})-({x1},{y1})"
            )));
        }
        Ok(Self { x0, y0, x1, y1 })
    }

    pub fn width(&self) -> usize {
        self.x1 - self.x0
    }

    pub fn height(&self) -> usize {
        self.y1 - self.y0
    }

    pub fn contains(&self, x: usize, y: usize) -> bool {
        (self.x0..self.x1).contains(&x) && (self.y0..self.y1).contains(&y)
    }
}

/// 8-bit raster with 1 (gray) or 3 (RGB) interleaved channels, row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ImageBuffer {
    width: usize,
    height: usize,
    channels: usize,
    bytes: Vec<u8>,
}

impl ImageBuffer {
    pub fn new(width: usize, height: usize, channels: usize, bytes: Vec<u8>) -> Result<Self> {
        check_dims(width, height)?;
        if channels != 1 && channels != 3 {
            return Err(Error::InvalidValue(format!(
                "channels must be 1 or 3, got {channels}"
            )));
        }
        if bytes.len() != width * height * channels {
            return Err(Error::SizeMismatch {
                declared: width * height * channels,
                actual: bytes.len(),
            });
        }
        Ok(Self {
            width,
            height,
            channels,
            bytes,
        })
    }

    pub fn filled_rgb(width: usize, height: usize, rgb: [u8; 3]) -> Result<Self> {
        let bytes = rgb.iter().copied().cycle().take(width * height * 3).collect();
        Self::new(width, height, 3, bytes)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn bytes(&self) -> &[u8] {
        &self.bytes
    }

    pub fn pixel(&self, x: usize, y: usize) -> &[u8] {
        let i = (y * self.width + x) * self.channels;
        &self.bytes[i..i + self.channels]
    }

    pub fn pixel_mut(&mut self, x: usize, y: usize) -> &mut [u8] {
        let i = (y * self.width + x) * self.channels;
        &mut self.bytes[i..i + self.channels]
    }

    /// Sub-image over `bbox`; the box must lie inside the image.
    pub fn crop(&self, bbox: BBox) -> Result<ImageBuffer> {
        if bbox.x1 > self.width || bbox.y1 > self.height {
            return Err(Error::InvalidValue(format!(
                "box {bbox:?} exceeds {}x{}",
                self.width, self.height
            )));
        }
        let mut bytes = Vec::with_capacity(bbox.width() * bbox.height() * self.channels);
        for y in bbox.y0..bbox.y1 {
            let start = (y * self.width + bbox.x0) * self.channels;
            bytes.extend_from_slice(&self.bytes[start..start + bbox.width() * self.channels]);
        }
        ImageBuffer::new(bbox.width(), bbox.height(), self.channels, bytes)
    }

    /// Per-pixel luma in `[0, 1]` (`0.299 R + 0.587 G + 0.114 B`, unrounded).
    pub fn luma_unit(&self) -> Vec<f64> {
        if self.channels == 1 {
            return self.bytes.iter().map(|&b| b as f64 / 255.0).collect();
        }
        self.bytes
            .chunks_exact(3)
            .map(|p| (0.299 * p[0] as f64 + 0.587 * p[1] as f64 + 0.114 * p[2] as f64) / 255.0)
            .collect()
    }

    /// Channel `c` as a row-major `f64` plane.
    pub(crate) fn plane(&self, c: usize) -> Vec<f64> {
        self.bytes
            .iter()
            .skip(c)
            .step_by(self.channels)
            .map(|&b| b as f64)
            .collect()
    }
}

/// Rounded integer luma of an RGB triple.
pub fn luma_u8(rgb: [u8; 3]) -> u8 {
    let l = 0.299 * rgb[0] as f64 + 0.587 * rgb[1] as f64 + 0.114 * rgb[2] as f64;
    l.round().clamp(0.0, 255.0) as u8
}

/// Natural-language instruction; never blank.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Instruction(String);

impl Instruction {
    pub fn new(text: impl Into<String>) -> Result<Self> {
        let text = text.into();
        if text.trim().is_empty() {
            return Err(Error::InvalidValue("instruction is blank".into()));
        }
        Ok(Self(text))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for Instruction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn hm(w: usize, h: usize, v: &[f64]) -> Heatmap {
        Heatmap::new(w, h, v.to_vec()).unwrap()
    }

    #[test]
    fn threshold_definition() {
        let m = hm(2, 2, &[0.0, 0.5, 1.0, 0.0]).threshold(0.0);
        assert_eq!(m.bits(), &[false, true, true, false]);
        assert!(Heatmap::zeros(3, 3).unwrap().threshold(0.0).is_empty());
        let m = hm(2, 1, &[0.3, 0.7]).threshold(0.5);
        assert_eq!(m.bits(), &[false, true]);
    }

    #[test]
    fn rejects_out_of_range_values() {
        assert!(matches!(
            Heatmap::new(1, 2, vec![0.2, 1.5]),
            Err(Error::ValueOutOfRange { index: 1, .. })
        ));
        assert!(Heatmap::new(0, 2, vec![]).is_err());
        assert!(Instruction::new("   ").is_err());
    }

    #[test]
    fn bbox_examples() {
        let mut v = vec![0.0; 12 * 10];
        v[2 * 12 + 3] = 1.0;
        v[7 * 12 + 9] = 0.4;
        let b = hm(12, 10, &v).activated_bbox(0.0).unwrap();
        assert_eq!(b, BBox::new(3, 2, 10, 8).unwrap());

        let full = Heatmap::filled(5, 4, 1.0).unwrap();
        assert_eq!(full.activated_bbox(0.0), Some(BBox::new(0, 0, 5, 4).unwrap()));
        assert_eq!(Heatmap::zeros(5, 4).unwrap().activated_bbox(0.0), None);
    }

    #[test]
    fn area_ratio_examples() {
        let mut v = vec![0.0; 100];
        v[..40].fill(0.9);
        assert_eq!(hm(10, 10, &v).area_ratio(0.0), 0.40);
        assert_eq!(Heatmap::zeros(4, 4).unwrap().area_ratio(0.0), 0.0);
        assert_eq!(Heatmap::filled(4, 4, 1.0).unwrap().area_ratio(0.0), 1.0);
    }

    #[test]
    fn iou_examples() {
        let a = BinaryMask::new(2, 2, vec![true, true, false, false]).unwrap();
        let b = BinaryMask::new(2, 2, vec![false, true, true, false]).unwrap();
        let c = BinaryMask::new(2, 2, vec![false, false, true, true]).unwrap();
        assert_eq!(a.iou(&a).unwrap(), 1.0);
        assert_eq!(a.iou(&c).unwrap(), 0.0);
        assert!((a.iou(&b).unwrap() - 1.0 / 3.0).abs() < 1e-15);
        let e = BinaryMask::filled(2, 2, false).unwrap();
        assert_eq!(e.iou(&e).unwrap(), 1.0);
        let other = BinaryMask::filled(3, 2, false).unwrap();
        assert!(matches!(a.iou(&other), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn rle_examples() {
        let f = BinaryMask::filled(2, 2, false).unwrap();
        assert_eq!(f.rle_encode().counts, vec![4]);
        let t = BinaryMask::filled(2, 2, true).unwrap();
        assert_eq!(t.rle_encode().counts, vec![0, 4]);
        // column-major: (0,0),(0,1),(1,0),(1,1)
        let m = BinaryMask::new(2, 2, vec![false, true, false, false]).unwrap();
        assert_eq!(m.rle_encode().counts, vec![2, 1, 1]);
        assert_eq!("2 1 1".parse::<Rle>().unwrap(), m.rle_encode());
        assert!(matches!(
            BinaryMask::rle_decode(&Rle { counts: vec![1, 2] }, 2, 2),
            Err(Error::MalformedRle(_))
        ));
    }

    #[test]
    fn resize_identity_and_constant() {
        let h = hm(3, 2, &[0.1, 0.2, 0.3, 0.4, 0.5, 0.6]);
        assert_eq!(h.resize_bilinear(3, 2).unwrap(), h);
        let c = Heatmap::filled(5, 3, 0.25).unwrap();
        let r = c.resize_bilinear(11, 7).unwrap();
        assert!(r.values().iter().all(|&v| (v - 0.25).abs() < 1e-15));
    }

    #[test]
    fn resize_ramp_matches_scalar_reference() {
        // Scalar reference: sample x_src = (x + 0.5) * 2/4 - 0.5, clamp to
        // [0, 1], and linearly interpolate between the two source values.
        let h = hm(2, 1, &[0.0, 1.0]);
        let r = h.resize_bilinear(4, 1).unwrap();
        let reference: Vec<f64> = (0..4)
            .map(|x| {
                let s: f64 = (x as f64 + 0.5) * 0.5 - 0.5;
                s.clamp(0.0, 1.0)
            })
            .collect();
        assert_eq!(reference, vec![0.0, 0.25, 0.75, 1.0]);
        for (a, b) in r.values().iter().zip(&reference) {
            assert!((a - b).abs() < 1e-15);
        }
        assert!(r.values().windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn downsample_max_keeps_any_activation() {
        let mut v = vec![0.0; 16];
        v[5] = 0.7;
        let d = hm(4, 4, &v).downsample_max(2).unwrap();
        assert_eq!(d.values(), &[0.7, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn crop_and_luma() {
        let mut img = ImageBuffer::filled_rgb(4, 3, [1, 2, 3]).unwrap();
        img.pixel_mut(2, 1).copy_from_slice(&[255, 0, 0]);
        let c = img.crop(BBox::new(2, 1, 3, 2).unwrap()).unwrap();
        assert_eq!(c.bytes(), &[255, 0, 0]);
        assert_eq!(luma_u8([255, 0, 0]), 76);
        assert_eq!(luma_u8([9, 9, 9]), 9);
    }

    fn heatmap_strategy(max: usize) -> impl Strategy<Value = Heatmap> {
        (1..=max, 1..=max).prop_flat_map(|(w, h)| {
            prop::collection::vec(prop_oneof![Just(0.0), 0.0..=1.0f64], w * h)
                .prop_map(move |v| Heatmap::new(w, h, v).unwrap())
        })
    }

    proptest! {
        #[test]
        fn area_ratio_equals_threshold_popcount(h in heatmap_strategy(12), tau in 0.0..0.99f64) {
            let m = h.threshold(tau);
            prop_assert_eq!(h.area_ratio(tau), m.count() as f64 / h.len() as f64);
        }

        #[test]
        fn bbox_complete_and_minimal(h in heatmap_strategy(12), tau in 0.0..0.99f64) {
            match h.activated_bbox(tau) {
                None => prop_assert!(h.threshold(tau).is_empty()),
                Some(b) => {
                    let m = h.threshold(tau);
                    let mut edges = [false; 4];
                    for y in 0..h.height() {
                        for x in 0..h.width() {
                            if m.get(x, y) {
                                prop_assert!(b.contains(x, y));
                                edges[0] |= x == b.x0;
                                edges[1] |= y == b.y0;
                                edges[2] |= x + 1 == b.x1;
                                edges[3] |= y + 1 == b.y1;
                            }
                        }
                    }
                    prop_assert!(edges.iter().all(|&e| e));
                }
            }
        }

        #[test]
        fn rle_roundtrip(w in 1..=64usize, h in 1..=64usize, seed in any::<u64>()) {
            let bits: Vec<bool> = (0..w * h)
                .map(|i| (seed.rotate_left((i % 64) as u32) ^ (i as u64 * 0x9E37_79B9)) % 3 == 0)
                .collect();
            let m = BinaryMask::new(w, h, bits).unwrap();
            let back = BinaryMask::rle_decode(&m.rle_encode(), w, h).unwrap();
            prop_assert_eq!(back, m);
        }

        #[test]
        fn iou_symmetric_bounded(a in heatmap_strategy(6), seed in any::<u64>()) {
            let ma = a.threshold(0.5);
            let bits = (0..a.len()).map(|i| (seed >> (i % 64)) & 1 == 1).collect();
            let mb = BinaryMask::new(a.width(), a.height(), bits).unwrap();
            let ab = ma.iou(&mb).unwrap();
            prop_assert_eq!(ab, mb.iou(&ma).unwrap());
            prop_assert!((0.0..=1.0).contains(&ab));
        }

        #[test]
        fn resize_preserves_bounds(h in heatmap_strategy(8), nw in 1..20usize, nh in 1..20usize) {
            let lo = h.values().iter().cloned().fold(f64::INFINITY, f64::min);
            let hi = h.values().iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let r = h.resize_bilinear(nw, nh).unwrap();
            for &v in r.values() {
                prop_assert!(v >= lo - 1e-12 && v <= hi + 1e-12);
            }
        }
    }
}
