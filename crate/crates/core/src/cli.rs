//! The `ivm` command line. Every subcommand prints `key=value` lines.
//!
//! Exit codes: 0 success, 1 usage error, 2 data or format error,
//! 3 numerical failure.

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::deploy::{deploy, DeployMethod, DeployStrategy};
use crate::dwsl::gradcheck::run_trials;
use crate::dwsl::{train_regime, ConstantWeigher, Regime, TrainConfig, TrainSample};
use crate::error::Error;
use crate::eval::{evaluate_weighted, weight_report};
use crate::fusion::{agreement, fuse, ExpertProposal, FusionMethod};
use crate::heatmap::DEFAULT_TAU;
use crate::io::dataset::{load_manifest_records, to_train_samples, E_MANIFEST, O_MANIFEST, TEST_MANIFEST};
use crate::io::params::{read_discriminator, read_generator, write_discriminator, write_generator, write_history};
use crate::io::{area_ratios, read_ivmh, read_manifest, read_pnm, stats_from_ratios, write_ivmh, write_pnm};
use crate::synth::{build_mixed_dataset, build_test_set, NoiseSpec, SceneSpec};

pub const GRADCHECK_TOLERANCE: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExitCode {
    Success = 0,
    Usage = 1,
    Data = 2,
    Numerical = 3,
}

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Numerical(String),
    Lib(Error),
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Lib(e)
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Lib(e.into())
    }
}

impl CliError {
    pub fn exit_code(&self) -> ExitCode {
        match self {
            CliError::Usage(_) => ExitCode::Usage,
            CliError::Numerical(_) => ExitCode::Numerical,
            CliError::Lib(Error::NonFiniteLoss { .. } | Error::NonFiniteParams) => ExitCode::Numerical,
            CliError::Lib(_) => ExitCode::Data,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "usage error: {m}"),
            CliError::Numerical(m) => write!(f, "numerical failure: {m}"),
            CliError::Lib(e) => write!(f, "{e}"),
        }
    }
}

type CliResult = std::result::Result<(), CliError>;

#[derive(Debug, Parser)]
#[command(name = "ivm", version, about = "Instruction-guided visual masking toolkit")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum MethodArg {
    Overlay,
    Blur,
    Grayscale,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum FuseArg {
    Mean,
    Weighted,
    Vote,
    Max,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum RegimeArg {
    Dwsl,
    Sl,
    SlClean,
}

impl From<RegimeArg> for Regime {
    fn from(r: RegimeArg) -> Self {
        match r {
            RegimeArg::Dwsl => Regime::Dwsl,
            RegimeArg::Sl => Regime::Sl,
            RegimeArg::SlClean => Regime::SlClean,
        }
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Mask an image with a heatmap.
    Deploy {
        #[arg(long)]
        image: PathBuf,
        #[arg(long)]
        heatmap: PathBuf,
        #[arg(long, value_enum, default_value = "overlay")]
        method: MethodArg,
        /// Crop to the activated bounding box.
        #[arg(long)]
        crop: bool,
        #[arg(long, default_value_t = DEFAULT_TAU)]
        tau: f64,
        /// Overlay color as RRGGBB hex.
        #[arg(long, default_value = "000000")]
        fill: String,
        #[arg(long)]
        sigma: Option<f64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Generate a synthetic mixed-quality dataset.
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        n_clean: usize,
        #[arg(long)]
        n_noisy: usize,
        #[arg(long)]
        corruption: f64,
        #[arg(long)]
        seed: u64,
        #[arg(long, default_value_t = 500)]
        n_test: usize,
    },
    /// Train one regime on a dataset directory.
    Train {
        #[arg(long)]
        data: PathBuf,
        /// TOML config; flags below override it.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: u64,
        #[arg(long, value_enum)]
        regime: RegimeArg,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        stage1_steps: Option<usize>,
        #[arg(long)]
        stage2_steps: Option<usize>,
        #[arg(long)]
        batch_size: Option<usize>,
        #[arg(long)]
        lr: Option<f64>,
    },
    /// Score a generator on held-out records.
    Eval {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        generator: PathBuf,
        /// Fills the weight column and reports clean/corrupted separation on `o.jsonl`.
        #[arg(long)]
        discriminator: Option<PathBuf>,
        #[arg(long)]
        config: Option<PathBuf>,
        /// Manifest inside `--data` to evaluate.
        #[arg(long, default_value = TEST_MANIFEST)]
        manifest: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Area-ratio histograms per source tag.
    Stats {
        #[arg(long = "manifest", required = true)]
        manifests: Vec<PathBuf>,
        #[arg(long, default_value_t = DEFAULT_TAU)]
        tau: f64,
        #[arg(long, default_value_t = 10)]
        bins: usize,
    },
    /// Fuse several heatmaps into one.
    Fuse {
        #[arg(long = "input", required = true)]
        inputs: Vec<PathBuf>,
        #[arg(long, value_enum, default_value = "mean")]
        method: FuseArg,
        /// One per input, for `weighted`.
        #[arg(long = "confidence")]
        confidences: Vec<f64>,
        /// Vote threshold.
        #[arg(long, default_value_t = DEFAULT_TAU)]
        tau: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Finite-difference check of both training losses.
    Gradcheck {
        #[arg(long)]
        seed: u64,
        #[arg(long, default_value_t = 20)]
        trials: usize,
        #[arg(long, default_value_t = 64)]
        hidden: usize,
    },
}

fn parse_hex_rgb(s: &str) -> std::result::Result<[u8; 3], CliError> {
    let s = s.trim_start_matches('#');
    if s.len() != 6 || !s.is_ascii() {
        return Err(CliError::Usage(format!("fill `{s}` is not RRGGBB")));
    }
    let mut rgb = [0u8; 3];
    for (i, c) in rgb.iter_mut().enumerate() {
        *c = u8::from_str_radix(&s[2 * i..2 * i + 2], 16)
            .map_err(|_| CliError::Usage(format!("fill `{s}` is not RRGGBB")))?;
    }
    Ok(rgb)
}

fn load_config(path: Option<&Path>) -> std::result::Result<TrainConfig, CliError> {
    match path {
        Some(p) => TrainConfig::load(p).map_err(|e| match e {
            Error::Io(_) => CliError::Lib(e),
            other => CliError::Usage(other.to_string()),
        }),
        None => Ok(TrainConfig::default()),
    }
}

fn usage(e: Error) -> CliError {
    CliError::Usage(e.to_string())
}

fn cmd_deploy(
    out: &mut dyn Write,
    image: &Path,
    heatmap: &Path,
    method: MethodArg,
    crop: bool,
    tau: f64,
    fill: &str,
    sigma: Option<f64>,
    dest: &Path,
) -> CliResult {
    let method = match method {
        MethodArg::Overlay => DeployMethod::Overlay { fill: parse_hex_rgb(fill)? },
        MethodArg::Blur => DeployMethod::Blur { sigma },
        MethodArg::Grayscale => DeployMethod::Grayscale,
    };
    let strategy = DeployStrategy::new(method, crop, tau).map_err(usage)?;
    let img = read_pnm(image)?;
    let h = read_ivmh(heatmap)?;
    let result = deploy(&img, &h, &strategy)?;
    write_pnm(dest, &result)?;
    writeln!(out, "width={}", result.width())?;
    writeln!(out, "height={}", result.height())?;
    writeln!(out, "retained_area={:.6}", h.area_ratio(tau))?;
    Ok(())
}

fn cmd_synth(
    out: &mut dyn Write,
    dir: &Path,
    n_clean: usize,
    n_noisy: usize,
    corruption: f64,
    seed: u64,
    n_test: usize,
) -> CliResult {
    if !(0.0..=1.0).contains(&corruption) {
        return Err(CliError::Usage(format!("--corruption {corruption} outside [0, 1]")));
    }
    if n_clean == 0 || n_noisy == 0 {
        return Err(CliError::Usage("--n-clean and --n-noisy must be >= 1".into()));
    }
    let spec = SceneSpec::default();
    let data = build_mixed_dataset(seed, n_clean, n_noisy, corruption, &spec, &NoiseSpec::default())?;
    let test = build_test_set(seed, n_test, &spec)?;
    crate::io::write_synth_dataset(dir, &data, &test)?;
    let corrupted = data.d_o.iter().filter(|r| !r.clean).count();
    writeln!(out, "e_records={}", data.d_e.len())?;
    writeln!(out, "o_records={}", data.d_o.len())?;
    writeln!(out, "o_corrupted={corrupted}")?;
    writeln!(out, "test_records={}", test.len())?;
    Ok(())
}

fn load_samples(path: &Path) -> std::result::Result<Vec<TrainSample>, CliError> {
    Ok(to_train_samples(&load_manifest_records(path)?)?)
}

#[allow(clippy::too_many_arguments)]
fn cmd_train(
    out: &mut dyn Write,
    data: &Path,
    config: Option<&Path>,
    seed: u64,
    regime: Regime,
    dest: &Path,
    overrides: (Option<usize>, Option<usize>, Option<usize>, Option<f64>),
) -> CliResult {
    let mut cfg = load_config(config)?;
    cfg.seed = seed;
    let (s1, s2, bs, lr) = overrides;
    cfg.stage1_steps = s1.unwrap_or(cfg.stage1_steps);
    cfg.stage2_steps = s2.unwrap_or(cfg.stage2_steps);
    cfg.batch_size = bs.unwrap_or(cfg.batch_size);
    cfg.lr = lr.unwrap_or(cfg.lr);
    cfg.validate().map_err(usage)?;
    let d_e = load_samples(&data.join(E_MANIFEST))?;
    let d_o = load_samples(&data.join(O_MANIFEST))?;
    let outcome = train_regime(&d_e, &d_o, &cfg, regime)?;
    fs::create_dir_all(dest)?;
    write_generator(&dest.join("generator.ivmp"), &outcome.generator)?;
    if let Some(d) = &outcome.discriminator {
        write_discriminator(&dest.join("discriminator.ivmp"), d)?;
    }
    write_history(&dest.join("history.csv"), &outcome.history)?;
    writeln!(out, "regime={}", regime.name())?;
    for stage in [1u8, 2] {
        if let Some(last) = outcome.history.iter().rev().find(|r| r.stage == stage) {
            writeln!(out, "final_loss_stage{stage}={:.6}", last.loss)?;
        }
    }
    Ok(())
}

fn cmd_eval(
    out: &mut dyn Write,
    data: &Path,
    generator: &Path,
    discriminator: Option<&Path>,
    config: Option<&Path>,
    manifest: &str,
    dest: &Path,
) -> CliResult {
    let cfg = load_config(config)?;
    let gen = read_generator(generator)?;
    let disc = discriminator.map(read_discriminator).transpose()?;
    let records = load_manifest_records(&data.join(manifest))?;
    // score against ground truth where the manifest carries it
    let samples = records
        .iter()
        .map(|r| {
            TrainSample::new(
                r.record.id.clone(),
                r.image.clone(),
                &r.record.instruction,
                r.ground_truth.clone().unwrap_or_else(|| r.label.clone()),
            )
        })
        .collect::<crate::error::Result<Vec<_>>>()?;
    let name = manifest.trim_end_matches(".jsonl");
    let report = match &disc {
        Some(d) => {
            let w = |f: &crate::dwsl::SampleFeatures| d.weight(f, &cfg).unwrap_or(f64::NAN);
            evaluate_weighted(&gen, &samples, &w, name)?
        }
        None => evaluate_weighted(&gen, &samples, &ConstantWeigher(1.0), name)?,
    };
    fs::write(dest, report.to_csv())?;
    write!(out, "{}", report.summary())?;
    if let Some(d) = &disc {
        let o_path = data.join(O_MANIFEST);
        if o_path.exists() {
            let o = load_manifest_records(&o_path)?;
            let clean: Vec<bool> = o.iter().map(|r| r.is_clean()).collect();
            match weight_report(d, &cfg, &to_train_samples(&o)?, &clean) {
                Ok(w) => {
                    for line in w.summary().lines() {
                        writeln!(out, "weights.{line}")?;
                    }
                }
                Err(Error::EmptySubset(_)) => {}
                Err(e) => return Err(e.into()),
            }
        }
    }
    Ok(())
}

fn cmd_stats(out: &mut dyn Write, manifests: &[PathBuf], tau: f64, bins: usize) -> CliResult {
    if bins == 0 {
        return Err(CliError::Usage("--bins must be >= 1".into()));
    }
    if !(0.0..1.0).contains(&tau) {
        return Err(CliError::Usage(format!("--tau {tau} not in [0, 1)")));
    }
    let mut ratios = Vec::new();
    for m in manifests {
        let base = m.parent().unwrap_or(Path::new("."));
        ratios.extend(area_ratios(&read_manifest(m)?, base, tau)?);
    }
    let stats = stats_from_ratios(ratios.iter().map(|(s, r)| (s.as_str(), *r)), bins)?;
    write!(out, "{stats}")?;
    Ok(())
}

fn cmd_fuse(
    out: &mut dyn Write,
    inputs: &[PathBuf],
    method: FuseArg,
    confidences: &[f64],
    tau: f64,
    dest: &Path,
) -> CliResult {
    if !confidences.is_empty() && confidences.len() != inputs.len() {
        return Err(CliError::Usage(format!(
            "{} confidences for {} inputs",
            confidences.len(),
            inputs.len()
        )));
    }
    let method = match method {
        FuseArg::Mean => FusionMethod::Mean,
        FuseArg::Weighted => FusionMethod::WeightedMean,
        FuseArg::Vote => FusionMethod::MajorityVote(tau),
        FuseArg::Max => FusionMethod::Max,
    };
    if let FusionMethod::MajorityVote(t) = method {
        if !(0.0..1.0).contains(&t) {
            return Err(CliError::Usage(format!("--tau {t} not in [0, 1)")));
        }
    }
    let mut proposals = Vec::with_capacity(inputs.len());
    for (i, p) in inputs.iter().enumerate() {
        let mut prop = ExpertProposal::new(p.display().to_string(), read_ivmh(p)?);
        if let Some(&c) = confidences.get(i) {
            prop = prop.with_confidence(c).map_err(usage)?;
        }
        proposals.push(prop);
    }
    let fused = fuse(&proposals, method)?;
    write_ivmh(dest, &fused)?;
    writeln!(out, "inputs={}", proposals.len())?;
    writeln!(out, "width={}", fused.width())?;
    writeln!(out, "height={}", fused.height())?;
    if proposals.len() >= 2 {
        writeln!(out, "agreement={:.6}", agreement(&proposals)?)?;
    }
    Ok(())
}

fn cmd_gradcheck(out: &mut dyn Write, seed: u64, trials: usize, hidden: usize) -> CliResult {
    if trials == 0 || hidden == 0 {
        return Err(CliError::Usage("--trials and --hidden must be >= 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (g, d) = run_trials(trials, hidden, &mut rng)?;
    writeln!(out, "max_rel_error_generator={g:e}")?;
    writeln!(out, "max_rel_error_discriminator={d:e}")?;
    let worst = g.max(d);
    // NaN also fails
    if !(worst < GRADCHECK_TOLERANCE) {
        return Err(CliError::Numerical(format!("max relative error {worst:e} >= {GRADCHECK_TOLERANCE:e}")));
    }
    Ok(())
}

pub fn execute(cli: Cli, out: &mut dyn Write) -> CliResult {
    match cli.command {
        Command::Deploy {
            image,
            heatmap,
            method,
            crop,
            tau,
            fill,
            sigma,
            out: dest,
        } => cmd_deploy(out, &image, &heatmap, method, crop, tau, &fill, sigma, &dest),
        Command::Synth {
            out: dir,
            n_clean,
            n_noisy,
            corruption,
            seed,
            n_test,
        } => cmd_synth(out, &dir, n_clean, n_noisy, corruption, seed, n_test),
        Command::Train {
            data,
            config,
            seed,
            regime,
            out: dest,
            stage1_steps,
            stage2_steps,
            batch_size,
            lr,
        } => cmd_train(
            out,
            &data,
            config.as_deref(),
            seed,
            regime.into(),
            &dest,
            (stage1_steps, stage2_steps, batch_size, lr),
        ),
        Command::Eval {
            data,
            generator,
            discriminator,
            config,
            manifest,
            out: dest,
        } => cmd_eval(
            out,
            &data,
            &generator,
            discriminator.as_deref(),
            config.as_deref(),
            &manifest,
            &dest,
        ),
        Command::Stats { manifests, tau, bins } => cmd_stats(out, &manifests, tau, bins),
        Command::Fuse {
            inputs,
            method,
            confidences,
            tau,
            out: dest,
        } => cmd_fuse(out, &inputs, method, &confidences, tau, &dest),
        Command::Gradcheck { seed, trials, hidden } => cmd_gradcheck(out, seed, trials, hidden),
    }
}

/// Parse `args` (including the program name), run, and report errors on
/// `err`. Returns the process exit code.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> ExitCode
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = write!(err, "{e}");
            return if e.use_stderr() { ExitCode::Usage } else { ExitCode::Success };
        }
    };
    match execute(cli, out) {
        Ok(()) => ExitCode::Success,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            e.exit_code()
        }
    }
}
