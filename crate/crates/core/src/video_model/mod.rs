//! Text-conditioned video denoiser: a per-frame image U-Net with spatial
//! adapters and temporal layers that can be grafted on in stages.

mod checkpoint;
mod codec;
mod config;
mod layers;
pub mod ops;
mod params;
mod text_encoder;
mod unet;

pub use checkpoint::{load_checkpoint, read_header, save_checkpoint, Checkpoint, CheckpointHeader, FORMAT_VERSION};
pub use codec::{FrameCodec, IdentityCodec};
pub use config::ModelConfig;
pub use layers::{domain_norm, DomainNormParams};
pub use ops::sinusoidal_embedding;
pub use params::{GroupSet, Param, ParamGroup, ParamStore};
pub use text_encoder::{StubTextEncoder, TextEncoder};
pub use unet::{build_base_model, insert_spatial_adapters, insert_temporal_layers, ForwardOptions, VideoDenoiser};

#[derive(Debug, thiserror::Error)]
pub enum ModelError {
    #[error("shape error: {0}")]
    Shape(String),
    #[error("invalid model config: {0}")]
    Config(String),
    #[error("domain {domain} out of range for {n_domains} domains")]
    UnknownDomain { domain: usize, n_domains: usize },
    #[error("duplicate parameter name {0}")]
    DuplicateParam(String),
    #[error("{0}")]
    Stage(String),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Tensor(#[from] candle_core::Error),
}

pub type Result<T> = std::result::Result<T, ModelError>;
