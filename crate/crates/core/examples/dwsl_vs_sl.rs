//! Train DWSL, SL on the union, and SL on the clean set only, then compare
//! held-out IoU. `cargo run --release --example dwsl_vs_sl -- [seeds] [stage2_steps]`

use std::time::Instant;

use ivm::dwsl::TrainConfig;
use ivm::eval::{run_benchmark, thread_budget, BenchmarkSpec};

fn main() -> ivm::Result<()> {
    let mut args = std::env::args().skip(1);
    let seeds: u64 = args.next().and_then(|s| s.parse().ok()).unwrap_or(1);
    let mut cfg = TrainConfig::default();
    if let Some(steps) = args.next().and_then(|s| s.parse().ok()) {
        cfg.stage2_steps = steps;
    }
    let spec = BenchmarkSpec::default();
    let seeds: Vec<u64> = (0..seeds).collect();
    let t = Instant::now();
    let cmp = run_benchmark(&spec, &cfg, &seeds, thread_budget())?;
    for r in &cmp.runs {
        print!("seed={} regime={} mean_iou={:.4} iou50={:.4}", r.seed, r.regime.name(), r.report.mean_iou, r.report.iou50_accuracy);
        if let Some(w) = &r.weights {
            print!(" auc={:.4} w_clean={:.4} w_corrupt={:.4}", w.auc, w.mean_weight_clean, w.mean_weight_corrupted);
        }
        println!();
    }
    print!("{}", cmp.summary());
    println!("elapsed_s={:.1}", t.elapsed().as_secs_f64());
    Ok(())
}
