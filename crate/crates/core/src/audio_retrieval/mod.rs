//! Sound-effect and background-music retrieval from an embedding index.

mod catalog;
mod embed;
mod index;
mod retrieve;

pub use catalog::{wav_duration, write_demo_catalog, write_tone, AudioCatalog, CATALOG_FILE, CATALOG_VERSION};
pub use embed::{token_bucket, AudioEmbedder, EmbeddingVector, HashedTextEmbedder, StatsVideoEmbedder, TextEmbedder, VideoEmbedder};
pub use index::{rank_order, AudioAsset, AudioIndex, AudioKind, IndexEntry, IndexField, RetrievalResult, ScoredAsset, INDEX_FORMAT_VERSION};
pub use retrieve::{retrieve_sfx, select_music};

use crate::video_model::ModelError;

#[derive(Debug, thiserror::Error)]
pub enum AudioError {
    #[error("cannot embed empty text")]
    EmptyText,
    #[error("cannot embed an empty clip")]
    EmptyClip,
    #[error("embedding: {0}")]
    Embedding(String),
    #[error("embedding dimension {got} does not match index dimension {expected}")]
    DimMismatch { expected: usize, got: usize },
    #[error("asset {0} is already indexed")]
    DuplicateAsset(String),
    #[error("invalid asset: {0}")]
    InvalidAsset(String),
    #[error("invalid query: {0}")]
    InvalidQuery(String),
    #[error("no {0:?} assets in the index")]
    EmptyCatalog(AudioKind),
    #[error("catalog: {0}")]
    Catalog(String),
    #[error(transparent)]
    Wav(#[from] hound::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Model(#[from] ModelError),
}

pub type Result<T> = std::result::Result<T, AudioError>;
