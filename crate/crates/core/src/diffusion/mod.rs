//! Forward noising, stage-wise training with frozen parameter groups, and
//! DDIM sampling.

pub mod data;
mod objective;
mod sampler;
mod schedule;
mod stage;
mod train;

pub use data::{moving_square_clip, moving_squares, to_byte, Augment, Batch, Clip, ClipDataset, ClipMeta};
pub use objective::{gaussian_like, training_loss, NoisePredictor};
pub use sampler::{sample, sample_with, sampling_timesteps, SampleConfig};
pub use schedule::{add_noise, make_schedule, DiffusionSchedule};
pub use stage::{prepare_for_stage, trainable_set, StageSelection, TrainStage, TEMPORAL_STAGE_DOMAIN};
pub use train::{smoothed_endpoints, train, TrainConfig, TrainReport};

use crate::video_model::ModelError;

#[derive(Debug, thiserror::Error)]
pub enum DiffusionError {
    #[error("invalid schedule: {0}")]
    Schedule(String),
    #[error("timestep {t} outside [0, {max}]")]
    Timestep { t: usize, max: usize },
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("{0}")]
    StageOrder(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("dataset: {0}")]
    Dataset(String),
    #[error("{stage} diverged at step {step}: {detail}")]
    Divergence {
        stage: TrainStage,
        step: usize,
        detail: String,
    },
    #[error("non-finite {what}{}", step.map(|s| format!(" at sampling step {s}")).unwrap_or_default())]
    NonFinite { what: String, step: Option<usize> },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Image(#[from] image::ImageError),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl From<candle_core::Error> for DiffusionError {
    fn from(e: candle_core::Error) -> Self {
        DiffusionError::Model(ModelError::Tensor(e))
    }
}

pub type Result<T> = std::result::Result<T, DiffusionError>;
