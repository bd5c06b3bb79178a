//! Build a machine label from several grounding experts: one exact, one
//! that over-segments, one that misses, one that fails. Compares the fusion
//! methods against the true mask.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use ivm::fusion::{build_candidate_label, Expert, FnExpert, RuleSimplifier};
use ivm::synth::{corrupt_label, gen_scene, CorruptionMode, SceneSpec};
use ivm::{agreement, mask_iou, ExpertProposal, FusionMethod, Heatmap, ImageBuffer};

fn main() -> ivm::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let scene = gen_scene(&mut rng, &SceneSpec::default())?;
    let truth = scene.label.clone();
    let dilated = corrupt_label(&truth, &mut rng, CorruptionMode::Dilate { radius: 3 }, None);
    let shifted = corrupt_label(&truth, &mut rng, CorruptionMode::Shift { dx: 4, dy: 0 }, None);

    let exact = FnExpert::new("exact", |_: &ImageBuffer, _: &str| Ok(truth.clone()));
    let wide = FnExpert::new("wide", |_: &ImageBuffer, _: &str| Ok(dilated.clone()));
    let off = FnExpert::new("off", |_: &ImageBuffer, _: &str| Ok(shifted.clone()));
    let broken = FnExpert::new("broken", |_: &ImageBuffer, _: &str| -> Result<Heatmap, String> {
        Err("model unavailable".into())
    });
    let experts: [&dyn Expert; 4] = [&exact, &wide, &off, &broken];

    println!("instruction: {}", scene.instruction.as_str());
    let proposals: Vec<ExpertProposal> = [("exact", &truth), ("wide", &dilated), ("off", &shifted)]
        .iter()
        .map(|(id, h)| ExpertProposal::new(*id, (*h).clone()))
        .collect();
    println!("agreement={:.4}", agreement(&proposals)?);

    let truth_mask = truth.threshold(0.0);
    for (name, method) in [
        ("mean", FusionMethod::Mean),
        ("vote", FusionMethod::MajorityVote(0.5)),
        ("max", FusionMethod::Max),
    ] {
        let label = build_candidate_label(&scene.image, scene.instruction.as_str(), &experts, &RuleSimplifier, method)?;
        // a Mean-fused map is soft; threshold it at 0.5 before scoring
        let mask = label.heatmap.threshold(if name == "mean" { 0.5 } else { 0.0 });
        println!(
            "{name}: phrases={:?} experts={:?} failed={} iou_vs_truth={:.4}",
            label.phrases,
            label.expert_ids,
            label.failures.len(),
            mask_iou(&mask, &truth_mask)?
        );
    }
    Ok(())
}
