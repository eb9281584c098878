//! Class-conditional DDPM: schedule, denoiser training, guided sampling and
//! checkpoint persistence.

pub mod checkpoint;
mod denoiser;
mod sampler;
mod schedule;

pub use denoiser::{
    train_denoiser, Condition, Denoiser, DenoiserArch, EpsModel, Superclasses, TrainConfig,
    TrainReport,
};
pub use sampler::{
    cond_sample, cond_sample_batch, forward_noise_batch, guided_eps_batch, predict_eps,
    reverse_from, reverse_from_batch,
};
pub use schedule::{forward_noise, noising_step_count, NoiseSchedule, ScheduleConfig};
