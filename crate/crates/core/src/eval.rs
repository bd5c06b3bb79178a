//! Held-out IoU metrics, discriminator weight separation, and the
//! DWSL / SL / SL-on-clean comparison.

use std::fmt::Write as _;

use rayon::prelude::*;

use crate::dwsl::features::OUTPUT_SIDE;
use crate::dwsl::{
    train_regime, train_stage1_discriminator, ConstantWeigher, DiscriminatorParams, GeneratorParams,
    Regime, SampleWeigher, TrainConfig, TrainSample,
};
use crate::error::{Error, Result};
use crate::heatmap::BinaryMask;
use crate::synth::{build_mixed_dataset, build_test_set, NoiseSpec, SceneSpec, SynthRecord};

#[derive(Debug, Clone, PartialEq)]
pub struct EvalRow {
    pub id: String,
    pub iou: f64,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub regime: String,
    pub rows: Vec<EvalRow>,
    pub mean_iou: f64,
    pub iou50_accuracy: f64,
}

impl EvalReport {
    pub fn from_rows(regime: impl Into<String>, rows: Vec<EvalRow>) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::EmptyDataset("nothing to evaluate".into()));
        }
        let n = rows.len() as f64;
        let mut sum = 0.0;
        let mut hits = 0usize;
        for r in &rows {
            sum += r.iou;
            hits += (r.iou >= 0.5) as usize;
        }
        Ok(Self {
            regime: regime.into(),
            mean_iou: sum / n,
            iou50_accuracy: hits as f64 / n,
            rows,
        })
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("id,iou,weight\n");
        for r in &self.rows {
            writeln!(out, "{},{:?},{:?}", r.id, r.iou, r.weight).expect("writing to a String");
        }
        out
    }

    pub fn summary(&self) -> String {
        format!(
            "regime={}\nrecords={}\nmean_iou={:.6}\niou50_accuracy={:.6}\n",
            self.regime,
            self.rows.len(),
            self.mean_iou,
            self.iou50_accuracy
        )
    }
}

/// Predicted mask: `sigmoid(z) >= 0.5`, i.e. `z >= 0`.
pub fn predict_mask(gen: &GeneratorParams, sample: &TrainSample) -> Result<BinaryMask> {
    let z = gen.forward(&sample.features)?;
    BinaryMask::new(OUTPUT_SIDE, OUTPUT_SIDE, z.iter().map(|&v| v >= 0.0).collect())
}

/// Ground truth at output resolution: any positive target cell.
pub fn truth_mask(sample: &TrainSample) -> Result<BinaryMask> {
    BinaryMask::new(OUTPUT_SIDE, OUTPUT_SIDE, sample.target.iter().map(|&v| v > 0.0).collect())
}

/// IoU of every sample's prediction against its label, which must be the
/// ground truth. `weigher` fills the weight column.
pub fn evaluate_weighted(
    gen: &GeneratorParams,
    samples: &[TrainSample],
    weigher: &dyn SampleWeigher,
    regime: &str,
) -> Result<EvalReport> {
    let mut rows = Vec::with_capacity(samples.len());
    for s in samples {
        rows.push(EvalRow {
            id: s.id.clone(),
            iou: predict_mask(gen, s)?.iou(&truth_mask(s)?)?,
            weight: weigher.weight(&s.features)?,
        });
    }
    EvalReport::from_rows(regime, rows)
}

pub fn evaluate(gen: &GeneratorParams, samples: &[TrainSample]) -> Result<EvalReport> {
    evaluate_weighted(gen, samples, &ConstantWeigher(1.0), "unspecified")
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WeightReport {
    pub n_clean: usize,
    pub n_corrupted: usize,
    pub mean_weight_clean: f64,
    pub mean_weight_corrupted: f64,
    /// Probability that a random clean sample outscores a random corrupted one.
    pub auc: f64,
}

impl WeightReport {
    pub fn gap(&self) -> f64 {
        self.mean_weight_clean - self.mean_weight_corrupted
    }

    pub fn summary(&self) -> String {
        format!(
            "n_clean={}\nn_corrupted={}\nmean_weight_clean={:.6}\nmean_weight_corrupted={:.6}\nauc={:.6}\n",
            self.n_clean, self.n_corrupted, self.mean_weight_clean, self.mean_weight_corrupted, self.auc
        )
    }
}

/// Rank AUC with midranks for ties.
pub fn rank_auc(positive: &[f64], negative: &[f64]) -> Result<f64> {
    if positive.is_empty() || negative.is_empty() {
        return Err(Error::EmptySubset("AUC needs both classes".into()));
    }
    let mut all: Vec<(f64, bool)> = positive
        .iter()
        .map(|&s| (s, true))
        .chain(negative.iter().map(|&s| (s, false)))
        .collect();
    if all.iter().any(|(s, _)| s.is_nan()) {
        return Err(Error::InvalidValue("NaN score".into()));
    }
    all.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut rank_sum = 0.0;
    let mut i = 0;
    while i < all.len() {
        let mut j = i;
        while j + 1 < all.len() && all[j + 1].0 == all[i].0 {
            j += 1;
        }
        // 1-based ranks i+1..=j+1 share their mean
        let mid = (i + j) as f64 / 2.0 + 1.0;
        rank_sum += mid * all[i..=j].iter().filter(|(_, p)| *p).count() as f64;
        i = j + 1;
    }
    let (np, nn) = (positive.len() as f64, negative.len() as f64);
    Ok((rank_sum - np * (np + 1.0) / 2.0) / (np * nn))
}

/// Separation of clean and corrupted samples under a frozen discriminator.
pub fn weight_report(
    disc: &DiscriminatorParams,
    cfg: &TrainConfig,
    samples: &[TrainSample],
    clean: &[bool],
) -> Result<WeightReport> {
    if samples.len() != clean.len() {
        return Err(Error::LengthMismatch {
            left: samples.len(),
            right: clean.len(),
        });
    }
    let (mut sc, mut so) = (Vec::new(), Vec::new());
    let (mut wc, mut wo) = (0.0, 0.0);
    for (s, &c) in samples.iter().zip(clean) {
        let logit = disc.logit(&s.features)?;
        let w = disc.weight(&s.features, cfg)?;
        if c {
            sc.push(logit);
            wc += w;
        } else {
            so.push(logit);
            wo += w;
        }
    }
    if sc.is_empty() {
        return Err(Error::EmptySubset("no clean samples".into()));
    }
    if so.is_empty() {
        return Err(Error::EmptySubset("no corrupted samples".into()));
    }
    Ok(WeightReport {
        n_clean: sc.len(),
        n_corrupted: so.len(),
        mean_weight_clean: wc / sc.len() as f64,
        mean_weight_corrupted: wo / so.len() as f64,
        auc: rank_auc(&sc, &so)?,
    })
}

/// Worker count from `IVM_THREADS`, default 1.
pub fn thread_budget() -> usize {
    std::env::var("IVM_THREADS")
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
        .filter(|&n| n >= 1)
        .unwrap_or(1)
}

fn with_pool<T: Send>(threads: usize, f: impl FnOnce() -> T + Send) -> Result<T> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads.max(1))
        .build()
        .map_err(|e| Error::Config(e.to_string()))?;
    Ok(pool.install(f))
}

#[derive(Debug, Clone)]
pub struct RegimeRun {
    pub seed: u64,
    pub regime: Regime,
    pub report: EvalReport,
    /// Stage I separation on `D_o`; DWSL runs only.
    pub weights: Option<WeightReport>,
}

#[derive(Debug, Clone)]
pub struct Comparison {
    /// In `(seed, regime)` order.
    pub runs: Vec<RegimeRun>,
}

impl Comparison {
    pub fn mean_iou(&self, regime: Regime) -> f64 {
        let xs: Vec<f64> = self
            .runs
            .iter()
            .filter(|r| r.regime == regime)
            .map(|r| r.report.mean_iou)
            .collect();
        xs.iter().sum::<f64>() / xs.len() as f64
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("seed,regime,mean_iou,iou50_accuracy\n");
        for r in &self.runs {
            writeln!(
                out,
                "{},{},{:?},{:?}",
                r.seed,
                r.regime.name(),
                r.report.mean_iou,
                r.report.iou50_accuracy
            )
            .expect("writing to a String");
        }
        out
    }

    pub fn summary(&self) -> String {
        let mut out = String::new();
        for regime in Regime::ALL {
            writeln!(out, "mean_iou.{}={:.6}", regime.name(), self.mean_iou(regime)).expect("writing to a String");
        }
        out
    }
}

/// Everything one seed of the comparison needs.
#[derive(Debug, Clone)]
pub struct BenchmarkData {
    pub d_e: Vec<TrainSample>,
    pub d_o: Vec<TrainSample>,
    /// Evaluation-only clean flags for `d_o`.
    pub o_clean: Vec<bool>,
    pub test: Vec<TrainSample>,
}

fn run_one(data: &BenchmarkData, cfg: &TrainConfig, seed: u64, regime: Regime) -> Result<RegimeRun> {
    let cfg = TrainConfig { seed, ..cfg.clone() };
    let out = train_regime(&data.d_e, &data.d_o, &cfg, regime)?;
    let report = evaluate_weighted(&out.generator, &data.test, &ConstantWeigher(1.0), regime.name())?;
    let weights = match &out.discriminator {
        Some(d) if data.o_clean.iter().any(|&c| c) && data.o_clean.iter().any(|&c| !c) => {
            Some(weight_report(d, &cfg, &data.d_o, &data.o_clean)?)
        }
        _ => None,
    };
    Ok(RegimeRun {
        seed,
        regime,
        report,
        weights,
    })
}

/// Train all three regimes for every seed on fixed data and evaluate on
/// `data.test`. Runs are spread over `threads` workers; results come back in
/// `(seed, regime)` order regardless.
pub fn compare_regimes(data: &BenchmarkData, cfg: &TrainConfig, seeds: &[u64], threads: usize) -> Result<Comparison> {
    if seeds.is_empty() {
        return Err(Error::InvalidValue("at least one seed required".into()));
    }
    let jobs: Vec<(u64, Regime)> = seeds
        .iter()
        .flat_map(|&s| Regime::ALL.map(|r| (s, r)))
        .collect();
    let runs = with_pool(threads, || {
        jobs.par_iter()
            .map(|&(s, r)| run_one(data, cfg, s, r))
            .collect::<Result<Vec<_>>>()
    })??;
    Ok(Comparison { runs })
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchmarkSpec {
    pub n_e: usize,
    pub n_o: usize,
    pub corruption_rate: f64,
    pub n_test: usize,
    pub scene: SceneSpec,
    pub noise: NoiseSpec,
}

impl Default for BenchmarkSpec {
    fn default() -> Self {
        Self {
            n_e: 50,
            n_o: 5000,
            corruption_rate: 0.4,
            n_test: 500,
            scene: SceneSpec::default(),
            noise: NoiseSpec::default(),
        }
    }
}

fn to_samples(records: &[SynthRecord]) -> Result<Vec<TrainSample>> {
    records
        .par_iter()
        .map(|r| TrainSample::new(r.id.clone(), r.scene.image.clone(), r.scene.instruction.as_str(), r.label.clone()))
        .collect()
}

/// Generate `D_e`, `D_o` and a clean test set for `seed`. Test labels are
/// ground truth.
pub fn benchmark_data(spec: &BenchmarkSpec, seed: u64) -> Result<BenchmarkData> {
    let mixed = build_mixed_dataset(seed, spec.n_e, spec.n_o, spec.corruption_rate, &spec.scene, &spec.noise)?;
    let test = build_test_set(seed, spec.n_test, &spec.scene)?;
    Ok(BenchmarkData {
        d_e: to_samples(&mixed.d_e)?,
        d_o: to_samples(&mixed.d_o)?,
        o_clean: mixed.d_o.iter().map(|r| r.clean).collect(),
        test: to_samples(&test)?,
    })
}

/// Fresh data and training per seed: the full comparison.
pub fn run_benchmark(spec: &BenchmarkSpec, cfg: &TrainConfig, seeds: &[u64], threads: usize) -> Result<Comparison> {
    if seeds.is_empty() {
        return Err(Error::InvalidValue("at least one seed required".into()));
    }
    let mut runs = Vec::with_capacity(3 * seeds.len());
    for &seed in seeds {
        let data = with_pool(threads, || benchmark_data(spec, seed))??;
        runs.extend(compare_regimes(&data, cfg, &[seed], threads)?.runs);
    }
    Ok(Comparison { runs })
}

/// Stage I only, then the weight report on `D_o`.
pub fn stage1_weight_report(data: &BenchmarkData, cfg: &TrainConfig) -> Result<(DiscriminatorParams, WeightReport)> {
    let mut rng = crate::dwsl::train::stage_rng(cfg.seed, 1);
    let (disc, _) = train_stage1_discriminator(&data.d_e, &data.d_o, cfg, &mut rng)?;
    let report = weight_report(&disc, cfg, &data.d_o, &data.o_clean)?;
    Ok((disc, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dwsl::features::OUTPUT_DIM;
    use crate::dwsl::TwoLayer;
    use crate::heatmap::{Heatmap, ImageBuffer};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn square_sample(id: &str, x0: usize, y0: usize, side: usize) -> TrainSample {
        let img = ImageBuffer::filled_rgb(64, 64, [0, 0, 0]).unwrap();
        let vals = (0..64 * 64)
            .map(|k| {
                let (x, y) = (k % 64, k / 64);
                if x >= x0 && x < x0 + side && y >= y0 && y < y0 + side { 1.0 } else { 0.0 }
            })
            .collect();
        TrainSample::new(id, img, "pick it", Heatmap::new(64, 64, vals).unwrap()).unwrap()
    }

    /// Generator whose logits equal `2 * target - 1` for one fixed sample: all
    /// weights zero, output bias set from the target.
    fn oracle_generator(target: &[f64]) -> GeneratorParams {
        let mut g = GeneratorParams::zeros(2);
        for (b, &t) in g.0.b2_mut().iter_mut().zip(target) {
            *b = if t > 0.0 { 1.0 } else { -1.0 };
        }
        g
    }

    #[test]
    fn oracle_generator_scores_one() {
        let s = square_sample("a", 10, 20, 12);
        let r = evaluate(&oracle_generator(&s.target), std::slice::from_ref(&s)).unwrap();
        assert_eq!(r.mean_iou, 1.0);
        assert_eq!(r.iou50_accuracy, 1.0);
    }

    #[test]
    fn zero_logits_activate_everything() {
        let samples = vec![square_sample("a", 0, 0, 16), square_sample("b", 8, 8, 32)];
        let r = evaluate(&GeneratorParams::zeros(3), &samples).unwrap();
        // all-on prediction: IoU equals the target's area ratio at 32x32
        assert!((r.rows[0].iou - 64.0 / 1024.0).abs() < 1e-15);
        assert!((r.rows[1].iou - 256.0 / 1024.0).abs() < 1e-15);
        assert_eq!(r.iou50_accuracy, 0.0);
        assert!(matches!(evaluate(&GeneratorParams::zeros(3), &[]), Err(Error::EmptyDataset(_))));
    }

    #[test]
    fn mean_iou_matches_pixel_recount() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let samples: Vec<TrainSample> = (0..6)
            .map(|i| square_sample(&format!("s{i}"), rng.gen_range(0..40), rng.gen_range(0..40), rng.gen_range(2..24)))
            .collect();
        let gen = GeneratorParams::random(16, &mut rng);
        let r = evaluate(&gen, &samples).unwrap();
        let mut total = 0.0;
        for s in &samples {
            let z = gen.forward(&s.features).unwrap();
            let (mut i, mut u) = (0, 0);
            for k in 0..OUTPUT_DIM {
                let p = 1.0 / (1.0 + (-z[k]).exp()) >= 0.5;
                let t = s.target[k] > 0.0;
                i += (p && t) as u32;
                u += (p || t) as u32;
            }
            total += if u == 0 { 1.0 } else { i as f64 / u as f64 };
        }
        assert!((r.mean_iou - total / 6.0).abs() < 1e-12);
        assert!(r.to_csv().starts_with("id,iou,weight\ns0,"));
    }

    #[test]
    fn zero_discriminator_weights() {
        let samples = vec![square_sample("a", 0, 0, 8), square_sample("b", 4, 4, 8)];
        let cfg = TrainConfig::default();
        let w = weight_report(&DiscriminatorParams::zeros(4), &cfg, &samples, &[true, false]).unwrap();
        assert_eq!(w.mean_weight_clean, 0.5);
        assert_eq!(w.mean_weight_corrupted, 0.5);
        assert_eq!(w.auc, 0.5);
        assert!(matches!(
            weight_report(&DiscriminatorParams::zeros(4), &cfg, &samples, &[true, true]),
            Err(Error::EmptySubset(_))
        ));
    }

    #[test]
    fn perfect_discriminator_weights() {
        // big square (clean) vs small square (corrupted), separated by label mass
        let samples = vec![square_sample("a", 0, 0, 40), square_sample("b", 4, 4, 4), square_sample("c", 9, 9, 36)];
        let mut net = TwoLayer::zeros(576, 1, 1);
        net.params_mut()[320..576].fill(1.0);
        let n = net.len();
        net.params_mut()[n - 2] = 10.0;
        net.params_mut()[n - 1] = -200.0;
        let disc = DiscriminatorParams::from_net(net).unwrap();
        let w = weight_report(&disc, &TrainConfig::default(), &samples, &[true, false, true]).unwrap();
        assert_eq!(w.mean_weight_clean, 1.0);
        assert_eq!(w.mean_weight_corrupted, 0.1);
        assert_eq!(w.auc, 1.0);
    }

    fn brute_auc(p: &[f64], n: &[f64]) -> f64 {
        let mut s = 0.0;
        for a in p {
            for b in n {
                s += if a > b { 1.0 } else if a == b { 0.5 } else { 0.0 };
            }
        }
        s / (p.len() * n.len()) as f64
    }

    proptest! {
        #[test]
        fn auc_matches_pair_counting(
            p in proptest::collection::vec(0u8..6, 1..100),
            n in proptest::collection::vec(0u8..6, 1..100),
        ) {
            let p: Vec<f64> = p.into_iter().map(f64::from).collect();
            let n: Vec<f64> = n.into_iter().map(f64::from).collect();
            prop_assert!((rank_auc(&p, &n).unwrap() - brute_auc(&p, &n)).abs() < 1e-12);
        }

        #[test]
        fn iou50_monotone(mut ious in proptest::collection::vec(0.0f64..=1.0, 1..30), k in 0usize..30, bump in 0.0f64..1.0) {
            let rows = |v: &[f64]| v.iter().enumerate()
                .map(|(i, &iou)| EvalRow { id: i.to_string(), iou, weight: 1.0 }).collect::<Vec<_>>();
            let before = EvalReport::from_rows("x", rows(&ious)).unwrap();
            let k = k % ious.len();
            ious[k] = (ious[k] + bump).min(1.0);
            let after = EvalReport::from_rows("x", rows(&ious)).unwrap();
            prop_assert!(after.iou50_accuracy >= before.iou50_accuracy);
            prop_assert!(after.mean_iou >= before.mean_iou);
        }
    }

    #[test]
    fn zero_stage2_gives_identical_scores() {
        let spec = BenchmarkSpec {
            n_e: 4,
            n_o: 8,
            n_test: 6,
            ..BenchmarkSpec::default()
        };
        let data = benchmark_data(&spec, 2).unwrap();
        let cfg = TrainConfig {
            stage1_steps: 3,
            stage2_steps: 0,
            batch_size: 4,
            gen_hidden: 8,
            disc_hidden: 8,
            ..TrainConfig::default()
        };
        let c = compare_regimes(&data, &cfg, &[1, 2], 2).unwrap();
        assert_eq!(c.runs.len(), 6);
        for seed_runs in c.runs.chunks(3) {
            let m = seed_runs[0].report.mean_iou;
            assert!(seed_runs.iter().all(|r| r.report.mean_iou == m));
        }
        let again = compare_regimes(&data, &cfg, &[1, 2], 1).unwrap();
        assert_eq!(c.to_csv(), again.to_csv());
        assert!(c.summary().contains("mean_iou.sl-clean="));
    }
}
