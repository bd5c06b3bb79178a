//! Segmentation losses and the discriminator weighting clamp.
//!
//! All reductions sum in ascending element index before dividing, with
//! Neumaier compensation so finite-difference checks are not swamped by
//! rounding in the 1024-term sums.

use super::config::TrainConfig;
use crate::error::{Error, Result};

/// Dice smoothing constant.
pub const DICE_EPS: f64 = 1.0;

#[inline]
pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `log(1 + exp(z))` without overflow.
#[inline]
pub fn softplus(z: f64) -> f64 {
    z.max(0.0) + (-z.abs()).exp().ln_1p()
}

/// Neumaier-compensated running sum.
#[derive(Debug, Clone, Copy, Default)]
pub(crate) struct CompensatedSum {
    sum: f64,
    c: f64,
}

impl CompensatedSum {
    #[inline]
    pub(crate) fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.c += (self.sum - t) + x;
        } else {
            self.c += (x - t) + self.sum;
        }
        self.sum = t;
    }

    #[inline]
    pub(crate) fn value(self) -> f64 {
        self.sum + self.c
    }
}

fn check_len(a: usize, b: usize) -> Result<()> {
    if a != b {
        return Err(Error::LengthMismatch { left: a, right: b });
    }
    Ok(())
}

/// Mean binary cross-entropy computed from logits; targets may be soft.
pub fn bce_from_logits(z: &[f64], y: &[f64]) -> Result<f64> {
    check_len(z.len(), y.len())?;
    let mut total = CompensatedSum::default();
    for (&z, &y) in z.iter().zip(y) {
        total.add(z.max(0.0) - z * y + (-z.abs()).exp().ln_1p());
    }
    Ok(total.value() / z.len() as f64)
}

/// Soft dice loss `1 - (2 sum(p y) + eps) / (sum(p) + sum(y) + eps)`.
pub fn dice_loss(p: &[f64], y: &[f64]) -> Result<f64> {
    check_len(p.len(), y.len())?;
    let [mut inter, mut sp, mut sy] = [CompensatedSum::default(); 3];
    for (&p, &y) in p.iter().zip(y) {
        inter.add(p * y);
        sp.add(p);
        sy.add(y);
    }
    Ok(1.0 - (2.0 * inter.value() + DICE_EPS) / (sp.value() + sy.value() + DICE_EPS))
}

/// `lambda_bce * BCE(z, y) + lambda_dice * DICE(sigmoid(z), y)`.
pub fn ivm_loss(z: &[f64], y: &[f64], cfg: &TrainConfig) -> Result<f64> {
    check_len(z.len(), y.len())?;
    let p: Vec<f64> = z.iter().map(|&z| sigmoid(z)).collect();
    Ok(cfg.lambda_bce * bce_from_logits(z, y)? + cfg.lambda_dice * dice_loss(&p, y)?)
}

/// [`ivm_loss`] and its gradient with respect to the logits, scaled by
/// `scale`, written into `dz` (overwritten).
pub(crate) fn ivm_loss_and_grad(
    z: &[f64],
    y: &[f64],
    lambda_bce: f64,
    lambda_dice: f64,
    scale: f64,
    dz: &mut [f64],
) -> f64 {
    debug_assert_eq!(z.len(), y.len());
    debug_assert_eq!(z.len(), dz.len());
    let n = z.len() as f64;
    let [mut bce, mut inter, mut sp, mut sy] = [CompensatedSum::default(); 4];
    for ((&z, &y), d) in z.iter().zip(y).zip(dz.iter_mut()) {
        let e = (-z.abs()).exp();
        bce.add(z.max(0.0) - z * y + e.ln_1p());
        let p = if z >= 0.0 { 1.0 / (1.0 + e) } else { e / (1.0 + e) };
        inter.add(p * y);
        sp.add(p);
        sy.add(y);
        *d = p;
    }
    let den = sp.value() + sy.value() + DICE_EPS;
    let num = 2.0 * inter.value() + DICE_EPS;
    let loss = lambda_bce * bce.value() / n + lambda_dice * (1.0 - num / den);
    let den2 = den * den;
    for (d, &y) in dz.iter_mut().zip(y) {
        let p = *d;
        let d_bce = (p - y) / n;
        let d_dice_dp = -(2.0 * y * den - num) / den2;
        *d = scale * (lambda_bce * d_bce + lambda_dice * d_dice_dp * p * (1.0 - p));
    }
    loss
}

/// Clamp weighting `min(max(f_floor, d), f_ceil)`.
#[inline]
pub fn weight_fn(d: f64, cfg: &TrainConfig) -> f64 {
    clamp_weight(d, cfg.f_floor, cfg.f_ceil)
}

#[inline]
pub fn clamp_weight(d: f64, floor: f64, ceil: f64) -> f64 {
    d.max(floor).min(ceil)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const LN2: f64 = std::f64::consts::LN_2;

    #[test]
    fn bce_examples() {
        assert!((bce_from_logits(&[0.0], &[1.0]).unwrap() - LN2).abs() < 1e-15);
        assert!(bce_from_logits(&[50.0], &[1.0]).unwrap() < 1e-20);
        // naive formula at moderate z
        let (z, y) = (2.0f64, 0.5f64);
        let s = 1.0 / (1.0 + (-z).exp());
        let naive = -(y * s.ln() + (1.0 - y) * (1.0 - s).ln());
        assert!((bce_from_logits(&[z], &[y]).unwrap() - naive).abs() < 1e-12);
        assert!(bce_from_logits(&[1e4, -1e4], &[0.0, 1.0]).unwrap().is_finite());
        assert!(matches!(
            bce_from_logits(&[0.0], &[1.0, 0.0]),
            Err(Error::LengthMismatch { .. })
        ));
    }

    #[test]
    fn dice_examples() {
        let p = [1.0, 0.0, 1.0, 1.0];
        assert!(dice_loss(&p, &p).unwrap().abs() < 1e-15);
        assert_eq!(dice_loss(&[0.0; 5], &[0.0; 5]).unwrap(), 0.0);
        let v = dice_loss(&[1.0; 100], &[0.0; 100]).unwrap();
        assert!((v - (1.0 - 1.0 / 101.0)).abs() < 1e-15);
        assert!((v - 0.990099).abs() < 1e-6);
    }

    #[test]
    fn ivm_examples() {
        let z = [0.3, -1.2, 4.0];
        let y = [1.0, 0.0, 0.5];
        let bce_only = TrainConfig {
            lambda_dice: 0.0,
            ..TrainConfig::default()
        };
        assert_eq!(ivm_loss(&z, &y, &bce_only).unwrap(), bce_from_logits(&z, &y).unwrap());
        let dice_only = TrainConfig {
            lambda_bce: 0.0,
            ..TrainConfig::default()
        };
        let v = ivm_loss(&[800.0, -800.0], &[1.0, 0.0], &dice_only).unwrap();
        assert!(v.abs() < 1e-15);
        let both = ivm_loss(&[0.0], &[1.0], &TrainConfig::default()).unwrap();
        let expect = LN2 + (1.0 - 2.0 / 2.5);
        assert!((both - expect).abs() < 1e-15);
        assert!((both - 0.893147).abs() < 1e-6);
    }

    #[test]
    fn weight_fn_clamps() {
        let c = TrainConfig::default();
        assert_eq!(weight_fn(0.05, &c), 0.1);
        assert_eq!(weight_fn(0.5, &c), 0.5);
        assert_eq!(weight_fn(2.0, &c), 1.0);
    }

    #[test]
    fn loss_and_grad_matches_loss() {
        let z = [0.3, -1.2, 4.0, 0.0];
        let y = [1.0, 0.0, 0.5, 0.25];
        let mut dz = [0.0; 4];
        let l = ivm_loss_and_grad(&z, &y, 1.0, 1.0, 1.0, &mut dz);
        assert!((l - ivm_loss(&z, &y, &TrainConfig::default()).unwrap()).abs() < 1e-14);
        for i in 0..4 {
            let h = 1e-6;
            let mut zp = z;
            zp[i] += h;
            let mut zm = z;
            zm[i] -= h;
            let cfg = TrainConfig::default();
            let num = (ivm_loss(&zp, &y, &cfg).unwrap() - ivm_loss(&zm, &y, &cfg).unwrap()) / (2.0 * h);
            assert!((num - dz[i]).abs() < 1e-8, "{i}: {num} vs {}", dz[i]);
        }
    }

    proptest! {
        #[test]
        fn losses_bounded(
            v in prop::collection::vec((-30.0..30.0f64, 0.0..=1.0f64), 1..40)
        ) {
            let z: Vec<f64> = v.iter().map(|p| p.0).collect();
            let y: Vec<f64> = v.iter().map(|p| p.1).collect();
            let p: Vec<f64> = z.iter().map(|&z| sigmoid(z)).collect();
            prop_assert!(bce_from_logits(&z, &y).unwrap() >= 0.0);
            let d = dice_loss(&p, &y).unwrap();
            prop_assert!((0.0..1.0).contains(&d));
            prop_assert!(ivm_loss(&z, &y, &TrainConfig::default()).unwrap() >= 0.0);
        }

        #[test]
        fn weight_fn_bounded_monotone(mut xs in prop::collection::vec(-5.0..5.0f64, 2..50)) {
            let c = TrainConfig::default();
            xs.sort_by(f64::total_cmp);
            let ws: Vec<f64> = xs.iter().map(|&x| weight_fn(x, &c)).collect();
            prop_assert!(ws.iter().all(|w| (0.1..=1.0).contains(w)));
            prop_assert!(ws.windows(2).all(|w| w[0] <= w[1]));
        }
    }
}
