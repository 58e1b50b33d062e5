//! Distribution and alignment metrics for generated clips.

mod frechet;

pub use frechet::{frechet_distance, gaussian_stats, sqrtm_psd, FeatureSet, GaussianStats, EIGEN_FLOOR};

use serde::{Deserialize, Serialize};

use crate::audio_retrieval::{AudioError, StatsVideoEmbedder, TextEmbedder, VideoEmbedder};
use crate::video::VideoArray;
use crate::video_model::ModelError;

#[derive(Debug, thiserror::Error)]
pub enum EvalError {
    #[error("need at least {needed} samples, got {got}")]
    TooFewSamples { needed: usize, got: usize },
    #[error("dimension mismatch: {0}")]
    DimMismatch(String),
    #[error("length mismatch: {a} texts for {b} clips")]
    LengthMismatch { a: usize, b: usize },
    #[error("non-finite {0}")]
    NonFinite(String),
    #[error("a clip needs at least two frames")]
    SingleFrame,
    #[error(transparent)]
    Embedding(#[from] AudioError),
    #[error(transparent)]
    Model(#[from] ModelError),
}

pub type Result<T> = std::result::Result<T, EvalError>;

/// Turns a clip into a fixed-length feature row.
pub trait FeatureExtractor: Send + Sync {
    fn id(&self) -> &str;
    fn extract(&self, clip: &VideoArray) -> Result<Vec<f64>>;
}

/// Reuses the retrieval video embedder as a desk-scale feature extractor.
#[derive(Debug, Clone, Copy)]
pub struct StubVideoFeatures {
    embedder: StatsVideoEmbedder,
}

impl StubVideoFeatures {
    pub fn new(dim: usize, seed: u64) -> Self {
        Self {
            embedder: StatsVideoEmbedder::new(dim, seed),
        }
    }
}

impl Default for StubVideoFeatures {
    fn default() -> Self {
        Self::new(64, 0)
    }
}

impl FeatureExtractor for StubVideoFeatures {
    fn id(&self) -> &str {
        "stub-video-stats"
    }

    fn extract(&self, clip: &VideoArray) -> Result<Vec<f64>> {
        Ok(self.embedder.embed_video(clip)?.values().to_vec())
    }
}

/// Unnormalized clip statistics: per-frame channel means and per-channel
/// frame differences, without the random projection.
#[derive(Debug, Clone, Copy, Default)]
pub struct RawStatsFeatures;

impl FeatureExtractor for RawStatsFeatures {
    fn id(&self) -> &str {
        "raw-video-stats"
    }

    fn extract(&self, clip: &VideoArray) -> Result<Vec<f64>> {
        let mut f = StatsVideoEmbedder::features(clip)?;
        f.pop();
        Ok(f)
    }
}

pub fn extract_features(clips: &[VideoArray], extractor: &dyn FeatureExtractor) -> Result<FeatureSet> {
    let rows = clips.iter().map(|c| extractor.extract(c)).collect::<Result<Vec<_>>>()?;
    FeatureSet::new(rows, extractor.id())
}

/// Fréchet distance between Gaussian fits of two clip sets' features.
pub fn fvd_style(a: &[VideoArray], b: &[VideoArray], extractor: &dyn FeatureExtractor) -> Result<f64> {
    let sa = gaussian_stats(&extract_features(a, extractor)?)?;
    let sb = gaussian_stats(&extract_features(b, extractor)?)?;
    frechet_distance(&sa, &sb)
}

/// Mean cosine similarity between each text and its clip.
pub fn clipsim(texts: &[&str], clips: &[VideoArray], text: &dyn TextEmbedder, video: &dyn VideoEmbedder) -> Result<f64> {
    if texts.len() != clips.len() {
        return Err(EvalError::LengthMismatch {
            a: texts.len(),
            b: clips.len(),
        });
    }
    if texts.is_empty() {
        return Err(EvalError::TooFewSamples { needed: 1, got: 0 });
    }
    if text.dim() != video.dim() {
        return Err(EvalError::DimMismatch(format!("text {} vs video {}", text.dim(), video.dim())));
    }
    let mut total = 0.0;
    for (t, c) in texts.iter().zip(clips) {
        total += text.embed_text(t)?.cosine(&video.embed_video(c)?);
    }
    Ok(total / texts.len() as f64)
}

/// Mean absolute difference between consecutive frames.
pub fn motion_energy(clip: &VideoArray) -> Result<f64> {
    let d = clip.dims();
    if d.frames < 2 {
        return Err(EvalError::SingleFrame);
    }
    let t = clip.tensor();
    let next = t.narrow(1, 1, d.frames - 1)?;
    let prev = t.narrow(1, 0, d.frames - 1)?;
    let m = (next - prev)?.abs()?.to_dtype(candle_core::DType::F64)?.mean_all()?.to_scalar::<f64>()?;
    Ok(m)
}

impl From<candle_core::Error> for EvalError {
    fn from(e: candle_core::Error) -> Self {
        EvalError::Model(ModelError::Tensor(e))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRecord {
    pub metric: String,
    pub extractor_id: String,
    pub value: f64,
    pub n_samples: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_reference: Option<usize>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub metrics: Vec<MetricRecord>,
}

impl MetricsReport {
    pub fn get(&self, metric: &str) -> Option<f64> {
        self.metrics.iter().find(|m| m.metric == metric).map(|m| m.value)
    }
}
