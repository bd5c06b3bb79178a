//! Discriminator-weighted supervised learning on toy networks.
//!
//! A discriminator `d` scores how trustworthy an (image, instruction, label)
//! triple is; the generator is then trained with each sample's
//! `BCE + DICE` loss scaled by `f(d) = min(max(0.1, d), 1)`.

pub mod augment;
pub mod config;
pub mod dd;
pub mod features;
pub mod gradcheck;
pub mod loss;
pub mod nets;
pub mod optim;
pub mod train;

pub use augment::random_crop_resize;
pub use config::TrainConfig;
pub use features::SampleFeatures;
pub use loss::{bce_from_logits, dice_loss, ivm_loss, sigmoid, weight_fn};
pub use nets::{DiscriminatorParams, GeneratorParams, TwoLayer};
pub use optim::{adamw_step, AdamState};
pub use train::{
    stage_rng,
    discriminator_loss, train_regime, train_stage1_discriminator, train_stage2_generator,
    ConstantWeigher, DiscriminatorWeigher, HistoryRow, Regime, SampleWeigher, TrainOutcome,
    TrainSample,
};
