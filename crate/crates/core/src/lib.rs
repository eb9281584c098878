//! Hard-negative data augmentation with a class-conditional diffusion model.
//!
//! A source sample is noised part of the way along the diffusion chain and then
//! denoised under a *different* target class. The result keeps the source's
//! class-independent context while taking on the target's class signal, and is
//! added to the target class as a hard negative for the source. The crate bundles
//! the diffusion engine, the augmentation operators, synthetic datasets with a
//! shared context channel, and few-shot / long-tail evaluation harnesses.

pub mod adam;
pub mod augment;
pub mod data;
pub mod diffusion;
pub mod error;
pub mod eval;
pub mod nn;
pub mod rng;
pub mod sample;

pub use error::{Error, Result};
pub use rng::RngStream;
pub use sample::{LabeledSample, Provenance};

/// Version string embedded in every emitted artifact.
pub const CODE_VERSION: &str = concat!("genie-core ", env!("CARGO_PKG_VERSION"));
