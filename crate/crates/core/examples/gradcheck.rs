//! Central finite differences against the analytic gradients of both
//! training losses. `cargo run --release --example gradcheck -- [trials] [hidden]`

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use ivm::dwsl::gradcheck::run_trials;

fn main() -> ivm::Result<()> {
    let mut args = std::env::args().skip(1);
    let trials = args.next().and_then(|s| s.parse().ok()).unwrap_or(20);
    let hidden = args.next().and_then(|s| s.parse().ok()).unwrap_or(64);
    let (g, d) = run_trials(trials, hidden, &mut ChaCha8Rng::seed_from_u64(0))?;
    println!("trials={trials} hidden={hidden}");
    println!("max_rel_error_generator={g:.3e}");
    println!("max_rel_error_discriminator={d:.3e}");
    Ok(())
}
