//! Augmentation operators and support-set augmentation.

mod confusion;
mod mix;
mod operators;
mod spec;
mod support;

pub use confusion::{pick_source, ConfusionMatrix, SourcePick};
pub use mix::{mix_baselines, traditional_strong, traditional_weak, MixMode};
pub use operators::{
    condsample_batch, genie, genie_batch, img2img, img2img_batch, noise_and_denoise,
};
pub use spec::{AugmentationSpec, Method, SourcePolicy, DEFAULT_GUIDANCE};
pub use support::{augment_support, label_consistency, AugmentContext};
