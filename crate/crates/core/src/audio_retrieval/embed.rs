use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{AudioError, Result};
use crate::video::VideoArray;

/// A finite vector with its Euclidean norm cached.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(from = "Vec<f64>", into = "Vec<f64>")]
pub struct EmbeddingVector {
    values: Vec<f64>,
    norm: f64,
}

impl From<Vec<f64>> for EmbeddingVector {
    fn from(values: Vec<f64>) -> Self {
        let norm = values.iter().map(|v| v * v).sum::<f64>().sqrt();
        Self { values, norm }
    }
}

impl From<EmbeddingVector> for Vec<f64> {
    fn from(v: EmbeddingVector) -> Self {
        v.values
    }
}

impl EmbeddingVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.iter().any(|v| !v.is_finite()) {
            return Err(AudioError::Embedding("embedding has non-finite values".into()));
        }
        Ok(values.into())
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn norm(&self) -> f64 {
        self.norm
    }

    /// Cosine similarity clamped to `[-1, 1]`; zero when either side is zero.
    pub fn cosine(&self, other: &EmbeddingVector) -> f64 {
        if self.norm == 0.0 || other.norm == 0.0 {
            return 0.0;
        }
        let dot: f64 = self.values.iter().zip(&other.values).map(|(a, b)| a * b).sum();
        (dot / (self.norm * other.norm)).clamp(-1.0, 1.0)
    }

    fn normalized(values: Vec<f64>) -> Result<Self> {
        let norm = values.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm == 0.0 || !norm.is_finite() {
            return Err(AudioError::Embedding("cannot normalize a zero vector".into()));
        }
        Self::new(values.into_iter().map(|v| v / norm).collect())
    }
}

pub trait TextEmbedder: Send + Sync {
    fn dim(&self) -> usize;
    fn embed_text(&self, text: &str) -> Result<EmbeddingVector>;
}

pub trait VideoEmbedder: Send + Sync {
    fn dim(&self) -> usize;
    fn embed_video(&self, clip: &VideoArray) -> Result<EmbeddingVector>;
}

/// Optional audio-side encoder for index proxies. Without one, proxies
/// are embedded from captions.
pub trait AudioEmbedder: Send + Sync {
    fn dim(&self) -> usize;
    fn embed_audio(&self, path: &std::path::Path) -> Result<EmbeddingVector>;
}

fn tokens(text: &str) -> impl Iterator<Item = String> + '_ {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|w| !w.is_empty())
        .map(str::to_lowercase)
}

/// Hashed bag of words: each token lands in one of `dim` buckets.
#[derive(Debug, Clone, Copy)]
pub struct HashedTextEmbedder {
    dim: usize,
}

impl HashedTextEmbedder {
    pub fn new(dim: usize) -> Self {
        assert!(dim > 0, "embedding dim must be positive");
        Self { dim }
    }
}

impl Default for HashedTextEmbedder {
    fn default() -> Self {
        Self::new(64)
    }
}

pub fn token_bucket(token: &str, dim: usize) -> usize {
    let digest = Sha256::digest(token.as_bytes());
    let mut b = [0u8; 8];
    b.copy_from_slice(&digest[..8]);
    (u64::from_le_bytes(b) % dim as u64) as usize
}

impl TextEmbedder for HashedTextEmbedder {
    fn dim(&self) -> usize {
        self.dim
    }

    fn embed_text(&self, text: &str) -> Result<EmbeddingVector> {
        let mut counts = vec![0.0; self.dim];
        let mut any = false;
        for t in tokens(text) {
            counts[token_bucket(&t, self.dim)] += 1.0;
            any = true;
        }
        if !any {
            return Err(AudioError::EmptyText);
        }
        EmbeddingVector::normalized(counts)
    }
}

/// Per-frame channel means, mean absolute change between consecutive frames
/// per channel, and a constant bias, projected by a seeded Gaussian matrix.
#[derive(Debug, Clone, Copy)]
pub struct StatsVideoEmbedder {
    dim: usize,
    seed: u64,
}

impl StatsVideoEmbedder {
    pub fn new(dim: usize, seed: u64) -> Self {
        assert!(dim > 0, "embedding dim must be positive");
        Self { dim, seed }
    }

    /// Raw statistics before projection.
    pub fn features(clip: &VideoArray) -> Result<Vec<f64>> {
        let d = clip.dims();
        if d.batch != 1 || d.frames == 0 || d.frame_numel() == 0 {
            return Err(AudioError::EmptyClip);
        }
        let v = clip.to_vec()?;
        let plane = d.height * d.width;
        let at = |f: usize, c: usize| &v[(f * d.channels + c) * plane..(f * d.channels + c + 1) * plane];
        let mut feats = Vec::with_capacity(2 * d.frames * d.channels + 1);
        for f in 0..d.frames {
            for c in 0..d.channels {
                feats.push(at(f, c).iter().map(|&x| x as f64).sum::<f64>() / plane as f64);
            }
        }
        for f in 1..d.frames {
            for c in 0..d.channels {
                let diff: f64 = at(f, c).iter().zip(at(f - 1, c)).map(|(a, b)| (a - b).abs() as f64).sum();
                feats.push(diff / plane as f64);
            }
        }
        feats.push(1.0);
        Ok(feats)
    }
}

impl VideoEmbedder for StatsVideoEmbedder {
    fn dim(&self) -> usize {
        self.dim
    }

    fn embed_video(&self, clip: &VideoArray) -> Result<EmbeddingVector> {
        let feats = Self::features(clip)?;
        // One fixed matrix per input length, so any clip shape is accepted.
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed ^ (feats.len() as u64).wrapping_mul(0x9E37_79B9));
        let out = (0..self.dim)
            .map(|_| {
                feats
                    .iter()
                    .map(|f| {
                        let w: f64 = StandardNormal.sample(&mut rng);
                        w * f
                    })
                    .sum()
            })
            .collect();
        EmbeddingVector::normalized(out)
    }
}
