//! Mask a synthetic scene with its ground-truth heatmap using every
//! deployment method, with and without cropping. Writes PPMs to the
//! directory given as the first argument (default `deploy_out`).

use std::path::PathBuf;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use ivm::deploy::{deploy, DeployMethod, DeployStrategy};
use ivm::io::write_pnm;
use ivm::synth::{gen_scene, SceneSpec};

fn main() -> ivm::Result<()> {
    let dir = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "deploy_out".into()));
    std::fs::create_dir_all(&dir)?;
    let scene = gen_scene(&mut ChaCha8Rng::seed_from_u64(4), &SceneSpec::default())?;
    println!("instruction: {}", scene.instruction.as_str());
    println!("area_ratio={:.4}", scene.label.area_ratio(0.0));
    write_pnm(&dir.join("scene.ppm"), &scene.image)?;
    let methods = [
        ("overlay", DeployMethod::Overlay { fill: [0, 0, 0] }),
        ("blur", DeployMethod::Blur { sigma: Some(3.0) }),
        ("grayscale", DeployMethod::Grayscale),
    ];
    for (name, method) in methods {
        for crop in [false, true] {
            let out = deploy(&scene.image, &scene.label, &DeployStrategy::new(method, crop, 0.0)?)?;
            let file = format!("{name}{}.ppm", if crop { "_crop" } else { "" });
            write_pnm(&dir.join(&file), &out)?;
            println!("{file}: {}x{}", out.width(), out.height());
        }
    }
    Ok(())
}
