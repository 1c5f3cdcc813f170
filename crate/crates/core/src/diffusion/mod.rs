//! Noise schedule, forward process, DDIM reverse step, losses and NMSE.

mod metrics;
mod sampler;
mod schedule;

pub use metrics::{huber_loss, nmse_db, nmse_ratios, ratio_to_db, LossConfig, LossKind, NMSE_CEIL_DB, NMSE_FLOOR_DB};
pub use sampler::{ddim_sigma, ddim_step, forward_diffuse, make_substeps, noise_from_sample, SamplerConfig};
pub use schedule::{cosine_alpha_bar, make_cosine_schedule, NoiseSchedule};
