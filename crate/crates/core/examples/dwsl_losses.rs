//! The DWSL building blocks on concrete numbers: the weight clamp, the
//! segmentation loss, the discriminator loss at initialization, and one
//! short Stage I run showing the discriminator pushing clean and corrupted
//! labels apart.

use ivm::dwsl::{
    bce_from_logits, dice_loss, discriminator_loss, ivm_loss, sigmoid, train_stage1_discriminator, weight_fn,
    DiscriminatorParams, TrainConfig, TrainSample,
};
use ivm::eval::{benchmark_data, weight_report, BenchmarkSpec};

fn main() -> ivm::Result<()> {
    let cfg = TrainConfig::default();
    for d in [-1.0, 0.05, 0.5, 2.0] {
        println!("f({d}) = {}", weight_fn(d, &cfg));
    }
    let z = [2.0, -1.0, 0.0, 3.0];
    let y = [1.0, 0.0, 1.0, 1.0];
    let p: Vec<f64> = z.iter().map(|&v| sigmoid(v)).collect();
    println!("bce={:.6} dice={:.6} ivm={:.6}", bce_from_logits(&z, &y)?, dice_loss(&p, &y)?, ivm_loss(&z, &y, &cfg)?);

    let spec = BenchmarkSpec {
        n_e: 50,
        n_o: 500,
        n_test: 1,
        ..BenchmarkSpec::default()
    };
    let data = benchmark_data(&spec, 1)?;
    let fe: Vec<_> = data.d_e.iter().take(16).map(|s: &TrainSample| &s.features).collect();
    let fo: Vec<_> = data.d_o.iter().take(16).map(|s| &s.features).collect();
    let zero = DiscriminatorParams::zeros(cfg.disc_hidden);
    println!("stage1 loss at zero init = {:.12} (2 ln 2 = {:.12})", discriminator_loss(&fe, &fo, &zero)?, 2.0 * 2f64.ln());

    let cfg = TrainConfig {
        stage1_steps: 300,
        ..cfg
    };
    let mut rng = ivm::dwsl::stage_rng(cfg.seed, 1);
    let (disc, history) = train_stage1_discriminator(&data.d_e, &data.d_o, &cfg, &mut rng)?;
    println!(
        "stage1 loss {:.4} -> {:.4}",
        history.first().map_or(f64::NAN, |h| h.loss),
        history.last().map_or(f64::NAN, |h| h.loss)
    );
    println!("{}", weight_report(&disc, &cfg, &data.d_o, &data.o_clean)?.summary());
    Ok(())
}
