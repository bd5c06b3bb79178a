//! Central finite-difference checks of the hand-written gradients.
//!
//! Losses are re-evaluated in double-double arithmetic for the numeric side.
//! With a plain f64 loss near 1, rounding alone puts about `1e-16 / 2e-6`
//! of noise on every difference quotient, which swamps the legitimately
//! tiny gradient components (`dz * h` for a barely active hidden unit).

use rand::seq::index::sample;
use rand::Rng;

use super::config::TrainConfig;
use super::dd::Dd;
use super::features::{SampleFeatures, OUTPUT_DIM};
use super::loss::{sigmoid, softplus, DICE_EPS};
use super::nets::{DiscriminatorParams, GeneratorParams};
use super::train::{discriminator_loss_and_grad, generator_loss_and_grad};
use crate::error::{Error, Result};

pub const FD_STEP: f64 = 1e-6;
pub const CHECKED_PARAMS: usize = 200;

/// Max relative error between `analytic` and central differences of `loss`
/// over a random subset of at most [`CHECKED_PARAMS`] coordinates. Relative
/// error is `|a - n| / max(|a|, |n|, 1e-8)`; a model without parameters scores 0.
pub fn max_relative_error<R, F>(params: &mut [f64], analytic: &[f64], mut loss: F, rng: &mut R) -> Result<f64>
where
    R: Rng + ?Sized,
    F: FnMut(&[f64]) -> Result<Dd>,
{
    if params.is_empty() {
        return Ok(0.0);
    }
    let k = CHECKED_PARAMS.min(params.len());
    let mut idx = sample(rng, params.len(), k).into_vec();
    idx.sort_unstable();
    let mut worst: f64 = 0.0;
    for i in idx {
        let orig = params[i];
        let (xp, xm) = (orig + FD_STEP, orig - FD_STEP);
        params[i] = xp;
        let up = loss(params)?;
        params[i] = xm;
        let down = loss(params)?;
        params[i] = orig;
        // the realized step, not the nominal one
        let numeric = (up - down).to_f64() / (xp - xm);
        let a = analytic[i];
        let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-8);
        worst = worst.max(rel);
    }
    Ok(worst)
}

fn ivm_loss_precise(z: &[f64], y: &[f64], lambda_bce: f64, lambda_dice: f64) -> Dd {
    let (mut bce, mut inter, mut sp, mut sy) = (Dd::ZERO, Dd::ZERO, Dd::ZERO, Dd::ZERO);
    for (&z, &y) in z.iter().zip(y) {
        bce = bce + (z.max(0.0) - z * y + (-z.abs()).exp().ln_1p());
        let p = sigmoid(z);
        inter = inter + Dd::product(p, y);
        sp = sp + p;
        sy = sy + y;
    }
    let dice = Dd::from(1.0) - (inter * 2.0 + DICE_EPS) / (sp + sy + DICE_EPS);
    bce * lambda_bce / Dd::from(z.len() as f64) + dice * lambda_dice
}

/// The weighted generator objective, evaluated in double-double.
pub fn generator_loss_precise(
    batch: &[(&SampleFeatures, &[f64], f64)],
    gen: &GeneratorParams,
    cfg: &TrainConfig,
) -> Result<Dd> {
    if batch.is_empty() {
        return Err(Error::EmptyBatch);
    }
    let mut total = Dd::ZERO;
    for &(feat, target, w) in batch {
        let z = gen.forward(feat)?;
        total = total + ivm_loss_precise(&z, target, cfg.lambda_bce, cfg.lambda_dice) * w;
    }
    Ok(total / Dd::from(batch.len() as f64))
}

/// The discriminator objective, evaluated in double-double.
pub fn discriminator_loss_precise(
    batch_e: &[&SampleFeatures],
    batch_o: &[&SampleFeatures],
    disc: &DiscriminatorParams,
) -> Result<Dd> {
    if batch_e.is_empty() || batch_o.is_empty() {
        return Err(Error::EmptyBatch);
    }
    let (mut le, mut lo) = (Dd::ZERO, Dd::ZERO);
    for f in batch_e {
        le = le + softplus(-disc.logit(f)?);
    }
    for f in batch_o {
        lo = lo + softplus(disc.logit(f)?);
    }
    Ok(le / Dd::from(batch_e.len() as f64) + lo / Dd::from(batch_o.len() as f64))
}

/// Check the weighted generator objective on `batch` (features, target, weight).
pub fn check_generator<R: Rng + ?Sized>(
    gen: &GeneratorParams,
    batch: &[(&SampleFeatures, &[f64], f64)],
    cfg: &TrainConfig,
    rng: &mut R,
) -> Result<f64> {
    let mut analytic = vec![0.0; gen.net().len()];
    generator_loss_and_grad(batch, gen, cfg, Some(&mut analytic))?;
    let mut probe = gen.clone();
    let mut params = gen.net().params().to_vec();
    max_relative_error(
        &mut params,
        &analytic,
        |p| {
            probe.0.params_mut().copy_from_slice(p);
            generator_loss_precise(batch, &probe, cfg)
        },
        rng,
    )
}

/// Check the discriminator objective on one `D_e` and one `D_o` batch.
pub fn check_discriminator<R: Rng + ?Sized>(
    disc: &DiscriminatorParams,
    batch_e: &[&SampleFeatures],
    batch_o: &[&SampleFeatures],
    rng: &mut R,
) -> Result<f64> {
    let mut analytic = vec![0.0; disc.net().len()];
    discriminator_loss_and_grad(batch_e, batch_o, disc, Some(&mut analytic))?;
    let mut probe = disc.clone();
    let mut params = disc.net().params().to_vec();
    max_relative_error(
        &mut params,
        &analytic,
        |p| {
            probe.0.params_mut().copy_from_slice(p);
            discriminator_loss_precise(batch_e, batch_o, &probe)
        },
        rng,
    )
}

/// Random features with a sparse text part and a soft target.
pub fn random_case<R: Rng + ?Sized>(rng: &mut R) -> (SampleFeatures, Vec<f64>) {
    let img: Vec<f64> = (0..256).map(|_| rng.gen_range(0.0..1.0)).collect();
    let mut txt = vec![0.0; 64];
    for _ in 0..4 {
        txt[rng.gen_range(0..64)] = 0.5;
    }
    let lab: Vec<f64> = (0..256).map(|_| rng.gen_range(0.0..1.0)).collect();
    let target = (0..OUTPUT_DIM)
        .map(|_| if rng.gen_bool(0.3) { rng.gen_range(0.0..=1.0) } else { 0.0 })
        .collect();
    (SampleFeatures::new(&img, &txt, &lab), target)
}

/// Max errors over `trials` random models and batches: `(generator, discriminator)`.
pub fn run_trials<R: Rng + ?Sized>(trials: usize, hidden: usize, rng: &mut R) -> Result<(f64, f64)> {
    let cfg = TrainConfig::default();
    let (mut worst_g, mut worst_d): (f64, f64) = (0.0, 0.0);
    for _ in 0..trials {
        let cases: Vec<_> = (0..4).map(|_| random_case(rng)).collect();
        let weights = [1.0, 0.1, 0.55, 0.9];
        let batch: Vec<_> = cases
            .iter()
            .zip(weights)
            .map(|((f, t), w)| (f, t.as_slice(), w))
            .collect();
        let mut gen = GeneratorParams::random(hidden, rng);
        for b in gen.0.b2_mut() {
            *b = rng.gen_range(-1.0..1.0);
        }
        worst_g = worst_g.max(check_generator(&gen, &batch, &cfg, rng)?);

        let mut disc = DiscriminatorParams::random(hidden, rng);
        disc.0.b2_mut()[0] = rng.gen_range(-1.0..1.0);
        let fs: Vec<&SampleFeatures> = cases.iter().map(|c| &c.0).collect();
        worst_d = worst_d.max(check_discriminator(&disc, &fs[..2], &fs[2..], rng)?);
    }
    Ok((worst_g, worst_d))
}
