//! Fixed feature extractors shared by the generator and the discriminator.

use crate::heatmap::{resize_plane, Heatmap, ImageBuffer};

pub const FEATURE_SIDE: usize = 16;
pub const IMAGE_FEAT_DIM: usize = FEATURE_SIDE * FEATURE_SIDE;
pub const TEXT_FEAT_DIM: usize = 64;
pub const LABEL_FEAT_DIM: usize = FEATURE_SIDE * FEATURE_SIDE;
/// Generator input: image features followed by text features.
pub const GEN_INPUT_DIM: usize = IMAGE_FEAT_DIM + TEXT_FEAT_DIM;
/// Discriminator input: image, text, then label features.
pub const DISC_INPUT_DIM: usize = GEN_INPUT_DIM + LABEL_FEAT_DIM;

pub const OUTPUT_SIDE: usize = 32;
pub const OUTPUT_DIM: usize = OUTPUT_SIDE * OUTPUT_SIDE;

#[derive(Debug, Clone, PartialEq)]
pub struct SampleFeatures {
    /// `[image (256) ; text (64) ; label (256)]`, laid out so the first
    /// [`GEN_INPUT_DIM`] entries are the generator input.
    data: Vec<f64>,
}

impl SampleFeatures {
    pub fn new(image_feat: &[f64], text_feat: &[f64], label_feat: &[f64]) -> Self {
        assert_eq!(image_feat.len(), IMAGE_FEAT_DIM);
        assert_eq!(text_feat.len(), TEXT_FEAT_DIM);
        assert_eq!(label_feat.len(), LABEL_FEAT_DIM);
        let mut data = Vec::with_capacity(DISC_INPUT_DIM);
        data.extend_from_slice(image_feat);
        data.extend_from_slice(text_feat);
        data.extend_from_slice(label_feat);
        Self { data }
    }

    pub fn extract(image: &ImageBuffer, instruction: &str, label: &Heatmap) -> Self {
        let text = text_features(instruction);
        Self::with_text(image, &text, label)
    }

    /// Like [`extract`](Self::extract) with precomputed text features.
    pub fn with_text(image: &ImageBuffer, text_feat: &[f64], label: &Heatmap) -> Self {
        let img = image_features(image);
        let lab = label_features(label);
        Self::new(&img, text_feat, &lab)
    }

    pub fn image_feat(&self) -> &[f64] {
        &self.data[..IMAGE_FEAT_DIM]
    }

    pub fn text_feat(&self) -> &[f64] {
        &self.data[IMAGE_FEAT_DIM..GEN_INPUT_DIM]
    }

    pub fn label_feat(&self) -> &[f64] {
        &self.data[GEN_INPUT_DIM..]
    }

    pub fn generator_input(&self) -> &[f64] {
        &self.data[..GEN_INPUT_DIM]
    }

    pub fn discriminator_input(&self) -> &[f64] {
        &self.data
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

/// 16x16 bilinear downsample of the luma channel, in `[0, 1]`.
pub fn image_features(image: &ImageBuffer) -> Vec<f64> {
    let luma = image.luma_unit();
    resize_plane(&luma, image.width(), image.height(), FEATURE_SIDE, FEATURE_SIDE)
        .into_iter()
        .map(|v| v.clamp(0.0, 1.0))
        .collect()
}

pub fn label_features(label: &Heatmap) -> Vec<f64> {
    resize_plane(
        label.values(),
        label.width(),
        label.height(),
        FEATURE_SIDE,
        FEATURE_SIDE,
    )
    .into_iter()
    .map(|v| v.clamp(0.0, 1.0))
    .collect()
}

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        hash ^= b as u64;
        hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
    }
    hash
}

/// Hashed bag of lowercase whitespace tokens, L2-normalized.
pub fn text_features(text: &str) -> Vec<f64> {
    let mut v = vec![0.0; TEXT_FEAT_DIM];
    for token in text.split_whitespace() {
        let token = token.to_lowercase();
        v[(fnv1a(token.as_bytes()) % TEXT_FEAT_DIM as u64) as usize] += 1.0;
    }
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm > 0.0 {
        v.iter_mut().for_each(|x| *x /= norm);
    }
    v
}

/// Training target: the label reduced to 32x32. Sizes that are a multiple of
/// 32 use block maximum; anything else falls back to bilinear.
pub fn label_target(label: &Heatmap) -> Vec<f64> {
    let (w, h) = label.dims();
    if w % OUTPUT_SIDE == 0 && h % OUTPUT_SIDE == 0 && w / OUTPUT_SIDE == h / OUTPUT_SIDE {
        if let Ok(d) = label.downsample_max(w / OUTPUT_SIDE) {
            return d.into_values();
        }
    }
    resize_plane(label.values(), w, h, OUTPUT_SIDE, OUTPUT_SIDE)
        .into_iter()
        .map(|v| v.clamp(0.0, 1.0))
        .collect()
}
