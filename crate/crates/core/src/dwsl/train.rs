//! Two-stage discriminator-weighted training.
//!
//! Stage I fits the discriminator to tell trusted (`D_e`) samples from
//! auto-labelled (`D_o`) ones. Stage II freezes it and trains the generator
//! on `D_e ∪ D_o` with every sample's loss scaled by `f(d(sample))`.
//!
//! Batch reductions always sum in sample-index order, so a run is bitwise
//! reproducible for a fixed seed.

use std::borrow::Cow;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::augment::random_crop_resize;
use super::config::TrainConfig;
use super::features::{label_target, text_features, SampleFeatures, OUTPUT_DIM};
use super::loss::{ivm_loss_and_grad, sigmoid, softplus, CompensatedSum};
use super::nets::{DiscriminatorParams, GeneratorParams};
use super::optim::{adamw_step, AdamState};
use crate::error::{Error, Result};
use crate::heatmap::{Heatmap, ImageBuffer};

/// One training example with its cached features and 32x32 target.
#[derive(Debug, Clone)]
pub struct TrainSample {
    pub id: String,
    pub image: ImageBuffer,
    pub label: Heatmap,
    pub text: Vec<f64>,
    pub features: SampleFeatures,
    pub target: Vec<f64>,
}

impl TrainSample {
    pub fn new(id: impl Into<String>, image: ImageBuffer, instruction: &str, label: Heatmap) -> Result<Self> {
        if image.dims() != label.dims() {
            return Err(Error::DimensionMismatch {
                expected: image.dims(),
                found: label.dims(),
            });
        }
        let text = text_features(instruction);
        let features = SampleFeatures::with_text(&image, &text, &label);
        let target = label_target(&label);
        Ok(Self {
            id: id.into(),
            image,
            label,
            text,
            features,
            target,
        })
    }

    /// Features and target, either cached or freshly augmented.
    fn view<R: Rng + ?Sized>(
        &self,
        cfg: &TrainConfig,
        rng: &mut R,
    ) -> Result<(Cow<'_, SampleFeatures>, Cow<'_, [f64]>)> {
        if cfg.augment {
            let (img, lab) = random_crop_resize(&self.image, &self.label, rng, cfg.crop_scale)?;
            Ok((
                Cow::Owned(SampleFeatures::with_text(&img, &self.text, &lab)),
                Cow::Owned(label_target(&lab)),
            ))
        } else {
            Ok((Cow::Borrowed(&self.features), Cow::Borrowed(&self.target)))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HistoryRow {
    pub step: usize,
    pub stage: u8,
    pub loss: f64,
    /// Mean `f(d)` over batch members drawn from `D_e` (NaN if none).
    pub mean_weight_e: f64,
    /// Mean `f(d)` over batch members drawn from `D_o` (NaN if none).
    pub mean_weight_o: f64,
}

fn mean_or_nan(sum: f64, n: usize) -> f64 {
    if n == 0 {
        f64::NAN
    } else {
        sum / n as f64
    }
}

/// Discriminator batch loss `mean_e[-log d] + mean_o[-log(1 - d)]`, with the
/// gradient accumulated into `grad` when given.
pub fn discriminator_loss_and_grad(
    batch_e: &[&SampleFeatures],
    batch_o: &[&SampleFeatures],
    disc: &DiscriminatorParams,
    mut grad: Option<&mut [f64]>,
) -> Result<f64> {
    if batch_e.is_empty() || batch_o.is_empty() {
        return Err(Error::EmptyBatch);
    }
    if !disc.net().is_finite() {
        return Err(Error::NonFiniteParams);
    }
    let net = disc.net();
    let mut pre = vec![0.0; disc.hidden()];
    let mut dh = vec![0.0; disc.hidden()];
    let mut out = [0.0];
    let mut loss_e = CompensatedSum::default();
    for f in batch_e {
        net.forward_into(f.discriminator_input(), &mut pre, &mut out);
        let s = out[0];
        loss_e.add(softplus(-s));
        if let Some(g) = grad.as_deref_mut() {
            let ds = (sigmoid(s) - 1.0) / batch_e.len() as f64;
            net.backward_into(f.discriminator_input(), &pre, &[ds], &mut dh, g);
        }
    }
    let mut loss_o = CompensatedSum::default();
    for f in batch_o {
        net.forward_into(f.discriminator_input(), &mut pre, &mut out);
        let s = out[0];
        loss_o.add(softplus(s));
        if let Some(g) = grad.as_deref_mut() {
            let ds = sigmoid(s) / batch_o.len() as f64;
            net.backward_into(f.discriminator_input(), &pre, &[ds], &mut dh, g);
        }
    }
    Ok(loss_e.value() / batch_e.len() as f64 + loss_o.value() / batch_o.len() as f64)
}

pub fn discriminator_loss(
    batch_e: &[&SampleFeatures],
    batch_o: &[&SampleFeatures],
    disc: &DiscriminatorParams,
) -> Result<f64> {
    discriminator_loss_and_grad(batch_e, batch_o, disc, None)
}

/// Per-sample loss weight used in Stage II.
pub trait SampleWeigher {
    fn weight(&self, feat: &SampleFeatures) -> Result<f64>;
}

/// `f(d(x))` with a frozen discriminator.
pub struct DiscriminatorWeigher<'a> {
    pub disc: &'a DiscriminatorParams,
    pub cfg: &'a TrainConfig,
}

impl SampleWeigher for DiscriminatorWeigher<'_> {
    fn weight(&self, feat: &SampleFeatures) -> Result<f64> {
        self.disc.weight(feat, self.cfg)
    }
}

/// Same weight for every sample; `ConstantWeigher(1.0)` is plain supervised learning.
pub struct ConstantWeigher(pub f64);

impl SampleWeigher for ConstantWeigher {
    fn weight(&self, _feat: &SampleFeatures) -> Result<f64> {
        Ok(self.0)
    }
}

impl<F: Fn(&SampleFeatures) -> f64> SampleWeigher for F {
    fn weight(&self, feat: &SampleFeatures) -> Result<f64> {
        Ok(self(feat))
    }
}

/// Weighted generator batch objective `mean_s[w_s * L_ivm(s)]`. Gradients are
/// accumulated into `grad` when given.
pub fn generator_loss_and_grad(
    batch: &[(&SampleFeatures, &[f64], f64)],
    gen: &GeneratorParams,
    cfg: &TrainConfig,
    grad: Option<&mut [f64]>,
) -> Result<f64> {
    if batch.is_empty() {
        return Err(Error::EmptyBatch);
    }
    if !gen.net().is_finite() {
        return Err(Error::NonFiniteParams);
    }
    let net = gen.net();
    let b = batch.len() as f64;
    for &(_, target, _) in batch {
        if target.len() != OUTPUT_DIM {
            return Err(Error::LengthMismatch {
                left: OUTPUT_DIM,
                right: target.len(),
            });
        }
    }
    let xs: Vec<&[f64]> = batch.iter().map(|(f, _, _)| f.generator_input()).collect();
    let mut pre = vec![0.0; batch.len() * gen.hidden()];
    let mut z = vec![0.0; batch.len() * OUTPUT_DIM];
    net.forward_batch(&xs, &mut pre, &mut z);
    let mut dz = vec![0.0; batch.len() * OUTPUT_DIM];
    let mut total = CompensatedSum::default();
    for ((&(_, target, w), zs), dzs) in batch.iter().zip(z.chunks_exact(OUTPUT_DIM)).zip(dz.chunks_exact_mut(OUTPUT_DIM)) {
        let l = ivm_loss_and_grad(zs, target, cfg.lambda_bce, cfg.lambda_dice, w / b, dzs);
        total.add(w * l);
    }
    if let Some(g) = grad {
        net.backward_batch(&xs, &pre, &dz, g);
    }
    Ok(total.value() / b)
}

/// Independent ChaCha stream `stage` of `seed`.
pub fn stage_rng(seed: u64, stage: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stage);
    rng
}

/// Stage I. Each step draws `batch_size / 2` samples from each dataset with
/// replacement and takes one AdamW step on the discriminator loss.
pub fn train_stage1_discriminator<R: Rng + ?Sized>(
    d_e: &[TrainSample],
    d_o: &[TrainSample],
    cfg: &TrainConfig,
    rng: &mut R,
) -> Result<(DiscriminatorParams, Vec<HistoryRow>)> {
    cfg.validate()?;
    if d_e.is_empty() || d_o.is_empty() {
        return Err(Error::EmptyDataset("stage I needs both D_e and D_o".into()));
    }
    let mut disc = DiscriminatorParams::random(cfg.disc_hidden, rng);
    let mut state = AdamState::new(disc.net().len());
    let mut grad = vec![0.0; disc.net().len()];
    let n_e = cfg.batch_size / 2;
    let n_o = cfg.batch_size - n_e;
    let mut history = Vec::with_capacity(cfg.stage1_steps);
    for step in 0..cfg.stage1_steps {
        let mut feats_e = Vec::with_capacity(n_e);
        for _ in 0..n_e {
            feats_e.push(d_e[rng.gen_range(0..d_e.len())].view(cfg, rng)?.0);
        }
        let mut feats_o = Vec::with_capacity(n_o);
        for _ in 0..n_o {
            feats_o.push(d_o[rng.gen_range(0..d_o.len())].view(cfg, rng)?.0);
        }
        let be: Vec<&SampleFeatures> = feats_e.iter().map(AsRef::as_ref).collect();
        let bo: Vec<&SampleFeatures> = feats_o.iter().map(AsRef::as_ref).collect();
        grad.fill(0.0);
        let loss = discriminator_loss_and_grad(&be, &bo, &disc, Some(&mut grad))?;
        if !loss.is_finite() {
            return Err(Error::NonFiniteLoss { stage: 1, step });
        }
        let mean_w = |fs: &[&SampleFeatures]| -> Result<f64> {
            let mut s = 0.0;
            for f in fs {
                s += disc.weight(f, cfg)?;
            }
            Ok(mean_or_nan(s, fs.len()))
        };
        history.push(HistoryRow {
            step,
            stage: 1,
            loss,
            mean_weight_e: mean_w(&be)?,
            mean_weight_o: mean_w(&bo)?,
        });
        adamw_step(disc.0.params_mut(), &grad, &mut state, cfg)?;
    }
    Ok((disc, history))
}

/// Stage II. Each step draws `batch_size` samples uniformly (with
/// replacement) from `D_e ∪ D_o` and minimizes the weighted objective.
/// `d_o` may be empty, which gives supervised learning on `D_e` alone.
pub fn train_stage2_generator<R: Rng + ?Sized>(
    d_e: &[TrainSample],
    d_o: &[TrainSample],
    weigher: &dyn SampleWeigher,
    cfg: &TrainConfig,
    rng: &mut R,
) -> Result<(GeneratorParams, Vec<HistoryRow>)> {
    cfg.validate()?;
    let total = d_e.len() + d_o.len();
    if total == 0 {
        return Err(Error::EmptyDataset("stage II needs at least one sample".into()));
    }
    let mut gen = GeneratorParams::random(cfg.gen_hidden, rng);
    let mut state = AdamState::new(gen.net().len());
    let mut grad = vec![0.0; gen.net().len()];
    let mut history = Vec::with_capacity(cfg.stage2_steps);
    let mut views = Vec::with_capacity(cfg.batch_size);
    // Without augmentation a sample always yields the same features, so its
    // weight under the fixed weigher is computed once.
    let mut cached: Vec<Option<f64>> = vec![None; if cfg.augment { 0 } else { total }];
    for step in 0..cfg.stage2_steps {
        views.clear();
        let (mut we, mut ne, mut wo, mut no) = (0.0, 0usize, 0.0, 0usize);
        for _ in 0..cfg.batch_size {
            let i = rng.gen_range(0..total);
            let (sample, from_e) = if i < d_e.len() {
                (&d_e[i], true)
            } else {
                (&d_o[i - d_e.len()], false)
            };
            let (feat, target) = sample.view(cfg, rng)?;
            let w = match cached.get_mut(i) {
                Some(Some(w)) => *w,
                Some(slot) => *slot.insert(weigher.weight(&feat)?),
                None => weigher.weight(&feat)?,
            };
            if from_e {
                we += w;
                ne += 1;
            } else {
                wo += w;
                no += 1;
            }
            views.push((feat, target, w));
        }
        let batch: Vec<(&SampleFeatures, &[f64], f64)> =
            views.iter().map(|(f, t, w)| (f.as_ref(), t.as_ref(), *w)).collect();
        grad.fill(0.0);
        let loss = generator_loss_and_grad(&batch, &gen, cfg, Some(&mut grad))?;
        if !loss.is_finite() {
            return Err(Error::NonFiniteLoss { stage: 2, step });
        }
        history.push(HistoryRow {
            step,
            stage: 2,
            loss,
            mean_weight_e: mean_or_nan(we, ne),
            mean_weight_o: mean_or_nan(wo, no),
        });
        adamw_step(gen.0.params_mut(), &grad, &mut state, cfg)?;
    }
    Ok((gen, history))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Regime {
    /// Stage I discriminator, then discriminator-weighted Stage II on `D_e ∪ D_o`.
    Dwsl,
    /// Unweighted supervised learning on `D_e ∪ D_o`.
    Sl,
    /// Unweighted supervised learning on `D_e` only.
    SlClean,
}

impl Regime {
    pub const ALL: [Regime; 3] = [Regime::Dwsl, Regime::Sl, Regime::SlClean];

    pub fn name(self) -> &'static str {
        match self {
            Regime::Dwsl => "dwsl",
            Regime::Sl => "sl",
            Regime::SlClean => "sl-clean",
        }
    }
}

impl std::str::FromStr for Regime {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "dwsl" => Ok(Regime::Dwsl),
            "sl" => Ok(Regime::Sl),
            "sl-clean" => Ok(Regime::SlClean),
            other => Err(Error::InvalidValue(format!("unknown regime `{other}`"))),
        }
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub regime: Regime,
    pub generator: GeneratorParams,
    pub discriminator: Option<DiscriminatorParams>,
    pub history: Vec<HistoryRow>,
}

/// Run one regime end to end. Stage I and Stage II draw from separate
/// streams of `cfg.seed`, so every regime sees the same Stage II batches.
pub fn train_regime(
    d_e: &[TrainSample],
    d_o: &[TrainSample],
    cfg: &TrainConfig,
    regime: Regime,
) -> Result<TrainOutcome> {
    let mut rng2 = stage_rng(cfg.seed, 2);
    match regime {
        Regime::Dwsl => {
            let mut rng1 = stage_rng(cfg.seed, 1);
            let (disc, mut history) = train_stage1_discriminator(d_e, d_o, cfg, &mut rng1)?;
            let weigher = DiscriminatorWeigher { disc: &disc, cfg };
            let (generator, h2) = train_stage2_generator(d_e, d_o, &weigher, cfg, &mut rng2)?;
            history.extend(h2);
            Ok(TrainOutcome {
                regime,
                generator,
                discriminator: Some(disc),
                history,
            })
        }
        Regime::Sl | Regime::SlClean => {
            let pool = if regime == Regime::Sl { d_o } else { &[] };
            let (generator, history) =
                train_stage2_generator(d_e, pool, &ConstantWeigher(1.0), cfg, &mut rng2)?;
            Ok(TrainOutcome {
                regime,
                generator,
                discriminator: None,
                history,
            })
        }
    }
}

/// Stage II only, with a caller-supplied discriminator (e.g. a constant one).
pub fn train_dwsl_with_discriminator(
    d_e: &[TrainSample],
    d_o: &[TrainSample],
    disc: &DiscriminatorParams,
    cfg: &TrainConfig,
) -> Result<(GeneratorParams, Vec<HistoryRow>)> {
    let mut rng2 = stage_rng(cfg.seed, 2);
    train_stage2_generator(d_e, d_o, &DiscriminatorWeigher { disc, cfg }, cfg, &mut rng2)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy_samples(n: usize, seed: u64, noisy: bool) -> Vec<TrainSample> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|i| {
                let x0 = rng.gen_range(0..48);
                let y0 = rng.gen_range(0..48);
                let mut img = ImageBuffer::filled_rgb(64, 64, [0, 0, 0]).unwrap();
                let mut lab = vec![0.0; 64 * 64];
                for y in y0..y0 + 12 {
                    for x in x0..x0 + 12 {
                        img.pixel_mut(x, y).copy_from_slice(&[200, 40, 40]);
                        let (lx, ly) = if noisy { ((x + 20) % 64, y) } else { (x, y) };
                        lab[ly * 64 + lx] = 1.0;
                    }
                }
                let label = Heatmap::new(64, 64, lab).unwrap();
                TrainSample::new(format!("s{i}"), img, "pick the red square", label).unwrap()
            })
            .collect()
    }

    fn small_cfg() -> TrainConfig {
        TrainConfig {
            batch_size: 8,
            stage1_steps: 40,
            stage2_steps: 20,
            gen_hidden: 8,
            disc_hidden: 8,
            seed: 9,
            ..TrainConfig::default()
        }
    }

    #[test]
    fn zero_discriminator_loss_is_two_ln2() {
        let s = toy_samples(3, 1, false);
        let fs: Vec<&SampleFeatures> = s.iter().map(|s| &s.features).collect();
        let l = discriminator_loss(&fs[..1], &fs[1..], &DiscriminatorParams::zeros(4)).unwrap();
        assert!((l - 2.0 * std::f64::consts::LN_2).abs() < 1e-12);
        assert!(matches!(
            discriminator_loss(&[], &fs, &DiscriminatorParams::zeros(4)),
            Err(Error::EmptyBatch)
        ));
    }

    #[test]
    fn separating_discriminator_loss_vanishes() {
        use super::super::features::{DISC_INPUT_DIM, GEN_INPUT_DIM};
        let zeros = vec![0.0; 256];
        let e = SampleFeatures::new(&zeros, &vec![0.0; 64], &vec![1.0; 256]);
        let o = SampleFeatures::new(&zeros, &vec![0.0; 64], &zeros);
        // one hidden unit summing the label features; output 0.5 * sum - 128
        let mut d = DiscriminatorParams::zeros(1);
        let p = d.0.params_mut();
        p[GEN_INPUT_DIM..DISC_INPUT_DIM].fill(1.0);
        p[DISC_INPUT_DIM + 1] = 1.0;
        p[DISC_INPUT_DIM + 2] = -128.0;
        let l = discriminator_loss(&[&e], &[&o], &d).unwrap();
        assert!(l < 1e-50, "{l}");
        let flipped = discriminator_loss(&[&o], &[&e], &d).unwrap();
        assert!(flipped > 255.0);
    }

    #[test]
    fn single_sample_loss_matches_hand_computation() {
        let s = toy_samples(2, 4, false);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let d = DiscriminatorParams::random(6, &mut rng);
        let de = d.forward(&s[0].features).unwrap();
        let do_ = d.forward(&s[1].features).unwrap();
        let expect = -de.ln() - (1.0 - do_).ln();
        let got = discriminator_loss(&[&s[0].features], &[&s[1].features], &d).unwrap();
        assert!((got - expect).abs() < 1e-12);
    }

    #[test]
    fn zero_steps_returns_initialization() {
        let e = toy_samples(4, 1, false);
        let o = toy_samples(4, 2, true);
        let cfg = TrainConfig {
            stage1_steps: 0,
            stage2_steps: 0,
            ..small_cfg()
        };
        let mut r1 = ChaCha8Rng::seed_from_u64(3);
        let (d, h) = train_stage1_discriminator(&e, &o, &cfg, &mut r1).unwrap();
        let mut r1b = ChaCha8Rng::seed_from_u64(3);
        assert_eq!(d, DiscriminatorParams::random(cfg.disc_hidden, &mut r1b));
        assert!(h.is_empty());
        assert!(matches!(
            train_stage1_discriminator(&e, &[], &cfg, &mut r1),
            Err(Error::EmptyDataset(_))
        ));
        assert!(matches!(
            train_stage2_generator(&[], &[], &ConstantWeigher(1.0), &cfg, &mut r1),
            Err(Error::EmptyDataset(_))
        ));
    }

    #[test]
    fn constant_one_discriminator_reduces_to_sl() {
        let e = toy_samples(4, 1, false);
        let o = toy_samples(6, 2, true);
        let cfg = small_cfg();
        let sl = train_regime(&e, &o, &cfg, Regime::Sl).unwrap();
        let (g, h) = train_dwsl_with_discriminator(&e, &o, &DiscriminatorParams::constant(4, 60.0), &cfg).unwrap();
        assert_eq!(g, sl.generator);
        for (a, b) in h.iter().zip(&sl.history) {
            assert!((a.loss - b.loss).abs() < 1e-12);
        }
    }

    #[test]
    fn constant_zero_discriminator_scales_gradient() {
        let e = toy_samples(3, 1, false);
        let cfg = small_cfg();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let g = GeneratorParams::random(8, &mut rng);
        let d0 = DiscriminatorParams::constant(4, -60.0);
        let w0 = DiscriminatorWeigher { disc: &d0, cfg: &cfg };
        let batch_sl: Vec<_> = e.iter().map(|s| (&s.features, s.target.as_slice(), 1.0)).collect();
        let batch_w: Vec<_> = e
            .iter()
            .map(|s| (&s.features, s.target.as_slice(), w0.weight(&s.features).unwrap()))
            .collect();
        assert!(batch_w.iter().all(|b| b.2 == 0.1));
        let mut g1 = vec![0.0; g.net().len()];
        let mut g2 = vec![0.0; g.net().len()];
        let l1 = generator_loss_and_grad(&batch_sl, &g, &cfg, Some(&mut g1)).unwrap();
        let l2 = generator_loss_and_grad(&batch_w, &g, &cfg, Some(&mut g2)).unwrap();
        assert!((l2 - 0.1 * l1).abs() < 1e-12);
        for (a, b) in g1.iter().zip(&g2) {
            assert!((0.1 * a - b).abs() <= 1e-12 * a.abs().max(1e-6));
        }
    }

    #[test]
    fn training_is_deterministic_and_reduces_loss() {
        let e = toy_samples(6, 1, false);
        let o = toy_samples(12, 2, true);
        let cfg = TrainConfig {
            stage1_steps: 150,
            ..small_cfg()
        };
        let a = train_regime(&e, &o, &cfg, Regime::Dwsl).unwrap();
        let b = train_regime(&e, &o, &cfg, Regime::Dwsl).unwrap();
        assert_eq!(a.generator, b.generator);
        assert_eq!(a.discriminator, b.discriminator);
        let s1: Vec<_> = a.history.iter().filter(|r| r.stage == 1).collect();
        assert!(s1.iter().all(|r| r.loss.is_finite()));
        let head: f64 = s1[..10].iter().map(|r| r.loss).sum();
        let tail: f64 = s1[s1.len() - 10..].iter().map(|r| r.loss).sum();
        assert!(tail < head, "{tail} !< {head}");
    }

    #[test]
    fn augmented_training_runs() {
        let e = toy_samples(4, 1, false);
        let o = toy_samples(4, 2, true);
        let cfg = TrainConfig {
            augment: true,
            stage1_steps: 5,
            stage2_steps: 5,
            ..small_cfg()
        };
        let out = train_regime(&e, &o, &cfg, Regime::Dwsl).unwrap();
        assert_eq!(out.history.len(), 10);
    }

    #[test]
    fn regime_names_roundtrip() {
        for r in Regime::ALL {
            assert_eq!(r.name().parse::<Regime>().unwrap(), r);
        }
        assert!("gan".parse::<Regime>().is_err());
    }
}
