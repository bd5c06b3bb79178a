//! RandomCropResize: one random crop applied identically to an image and its
//! label, both resized back to the original size.

use rand::Rng;

use crate::error::{Error, Result};
use crate::heatmap::{resize_plane, BBox, Heatmap, ImageBuffer};

/// Sample a crop whose side lengths are `s * (w, h)` for `s` uniform in
/// `scale_range`, at a uniform position.
pub fn sample_crop<R: Rng + ?Sized>(
    rng: &mut R,
    width: usize,
    height: usize,
    scale_range: (f64, f64),
) -> Result<BBox> {
    let (lo, hi) = scale_range;
    if !(lo > 0.0 && lo <= hi && hi <= 1.0) {
        return Err(Error::InvalidValue(format!(
            "crop scale range ({lo}, {hi}) not inside (0, 1]"
        )));
    }
    let s = if lo == hi { lo } else { rng.gen_range(lo..=hi) };
    let cw = ((s * width as f64).round() as usize).clamp(1, width);
    let ch = ((s * height as f64).round() as usize).clamp(1, height);
    let x0 = rng.gen_range(0..=width - cw);
    let y0 = rng.gen_range(0..=height - ch);
    BBox::new(x0, y0, x0 + cw, y0 + ch)
}

/// Crop both inputs to `bbox` and resize back to the original dimensions.
pub fn crop_resize(img: &ImageBuffer, h: &Heatmap, bbox: BBox) -> Result<(ImageBuffer, Heatmap)> {
    if img.dims() != h.dims() {
        return Err(Error::DimensionMismatch {
            expected: img.dims(),
            found: h.dims(),
        });
    }
    let (w, ht) = img.dims();
    let cropped = img.crop(bbox)?;
    let c = img.channels();
    let mut bytes = vec![0u8; w * ht * c];
    for ch in 0..c {
        let plane = resize_plane(&cropped.plane(ch), bbox.width(), bbox.height(), w, ht);
        for (i, v) in plane.into_iter().enumerate() {
            bytes[i * c + ch] = v.round().clamp(0.0, 255.0) as u8;
        }
    }
    let mut label_crop = Vec::with_capacity(bbox.width() * bbox.height());
    for y in bbox.y0..bbox.y1 {
        label_crop.extend_from_slice(&h.values()[y * w + bbox.x0..y * w + bbox.x1]);
    }
    let label = resize_plane(&label_crop, bbox.width(), bbox.height(), w, ht);
    Ok((
        ImageBuffer::new(w, ht, c, bytes)?,
        Heatmap::from_clamped(w, ht, label)?,
    ))
}

pub fn random_crop_resize<R: Rng + ?Sized>(
    img: &ImageBuffer,
    h: &Heatmap,
    rng: &mut R,
    scale_range: (f64, f64),
) -> Result<(ImageBuffer, Heatmap)> {
    let bbox = sample_crop(rng, img.width(), img.height(), scale_range)?;
    crop_resize(img, h, bbox)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn scene() -> (ImageBuffer, Heatmap) {
        let bytes = (0..32 * 24 * 3).map(|i| (i * 13 % 256) as u8).collect();
        let img = ImageBuffer::new(32, 24, 3, bytes).unwrap();
        let v = (0..32 * 24).map(|i| ((i % 7) as f64) / 6.0).collect();
        (img, Heatmap::new(32, 24, v).unwrap())
    }

    #[test]
    fn unit_scale_is_identity() {
        let (img, h) = scene();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let (i2, h2) = random_crop_resize(&img, &h, &mut rng, (1.0, 1.0)).unwrap();
        assert_eq!(i2, img);
        assert_eq!(h2, h);
    }

    #[test]
    fn constant_inputs_stay_constant() {
        let img = ImageBuffer::filled_rgb(20, 20, [10, 200, 30]).unwrap();
        let h = Heatmap::filled(20, 20, 0.4).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..10 {
            let (i2, h2) = random_crop_resize(&img, &h, &mut rng, (0.5, 0.9)).unwrap();
            assert_eq!(i2, img);
            assert!(h2.values().iter().all(|&v| (v - 0.4).abs() < 1e-12));
        }
    }

    #[test]
    fn shared_geometry_moves_delta_centroid() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let (w, ht) = (40usize, 30usize);
        for _ in 0..50 {
            let bbox = sample_crop(&mut rng, w, ht, (0.5, 0.9)).unwrap();
            let px = rng.gen_range(bbox.x0..bbox.x1);
            let py = rng.gen_range(bbox.y0..bbox.y1);
            let mut v = vec![0.0; w * ht];
            v[py * w + px] = 1.0;
            let h = Heatmap::new(w, ht, v).unwrap();
            let mut img = ImageBuffer::filled_rgb(w, ht, [0, 0, 0]).unwrap();
            img.pixel_mut(px, py).copy_from_slice(&[255, 255, 255]);
            let (i2, h2) = crop_resize(&img, &h, bbox).unwrap();
            // analytic image of the delta under crop + half-pixel resize
            let ex = (px - bbox.x0) as f64 + 0.5;
            let ex = ex * w as f64 / bbox.width() as f64 - 0.5;
            let ey = ((py - bbox.y0) as f64 + 0.5) * ht as f64 / bbox.height() as f64 - 0.5;
            let (mut sx, mut sy, mut s) = (0.0, 0.0, 0.0);
            for y in 0..ht {
                for x in 0..w {
                    let m = h2.get(x, y);
                    sx += m * x as f64;
                    sy += m * y as f64;
                    s += m;
                }
            }
            assert!(s > 0.0);
            assert!((sx / s - ex).abs() <= 1.0 && (sy / s - ey).abs() <= 1.0);
            // image goes through the same geometry
            let (mut ix, mut iy, mut is) = (0.0, 0.0, 0.0);
            for y in 0..ht {
                for x in 0..w {
                    let m = i2.pixel(x, y)[0] as f64;
                    ix += m * x as f64;
                    iy += m * y as f64;
                    is += m;
                }
            }
            assert!((ix / is - sx / s).abs() <= 1.0 && (iy / is - sy / s).abs() <= 1.0);
        }
    }

    #[test]
    fn rejects_bad_range() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(sample_crop(&mut rng, 10, 10, (0.0, 0.5)).is_err());
        assert!(sample_crop(&mut rng, 10, 10, (0.5, 1.5)).is_err());
    }
}
