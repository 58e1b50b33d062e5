use candle_core::{Device, Tensor};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use sha2::{Digest, Sha256};

use super::Result;

/// Turns scene text into the `[tokens, dim]` condition the denoiser attends to.
pub trait TextEncoder: Send + Sync {
    fn dim(&self) -> usize;
    fn tokens(&self) -> usize;
    fn encode(&self, text: &str) -> Result<Tensor>;

    /// Stacks several encodings into `[batch, tokens, dim]`.
    fn encode_batch(&self, texts: &[&str]) -> Result<Tensor> {
        let rows = texts.iter().map(|t| self.encode(t)).collect::<Result<Vec<_>>>()?;
        Ok(Tensor::stack(&rows, 0)?)
    }

    /// The all-zero condition used for the unconditional branch.
    fn null(&self, batch: usize, device: &Device) -> Result<Tensor> {
        Ok(Tensor::zeros((batch, self.tokens(), self.dim()), candle_core::DType::F32, device)?)
    }
}

/// Deterministic stand-in encoder: each word hashes to one of `vocab` buckets,
/// each bucket owns a seeded random vector, and the first `tokens` words become
/// the rows. Unused rows stay zero.
#[derive(Debug, Clone)]
pub struct StubTextEncoder {
    dim: usize,
    tokens: usize,
    vocab: usize,
    table: Vec<f32>,
    device: Device,
}

impl StubTextEncoder {
    pub fn new(dim: usize, tokens: usize, seed: u64) -> Self {
        let vocab = 1024;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let scale = (dim as f64).powf(-0.5);
        let table = (0..vocab * dim)
            .map(|_| {
                let z: f64 = StandardNormal.sample(&mut rng);
                (z * scale) as f32
            })
            .collect();
        Self {
            dim,
            tokens,
            vocab,
            table,
            device: Device::Cpu,
        }
    }

    fn bucket(&self, word: &str) -> usize {
        let digest = Sha256::digest(word.as_bytes());
        let mut b = [0u8; 8];
        b.copy_from_slice(&digest[..8]);
        (u64::from_le_bytes(b) % self.vocab as u64) as usize
    }
}

pub(crate) fn words(text: &str) -> impl Iterator<Item = String> + '_ {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|w| !w.is_empty())
        .map(str::to_lowercase)
}

impl TextEncoder for StubTextEncoder {
    fn dim(&self) -> usize {
        self.dim
    }

    fn tokens(&self) -> usize {
        self.tokens
    }

    fn encode(&self, text: &str) -> Result<Tensor> {
        let mut out = vec![0f32; self.tokens * self.dim];
        for (row, word) in words(text).take(self.tokens).enumerate() {
            let b = self.bucket(&word);
            out[row * self.dim..(row + 1) * self.dim]
                .copy_from_slice(&self.table[b * self.dim..(b + 1) * self.dim]);
        }
        Ok(Tensor::from_vec(out, (self.tokens, self.dim), &self.device)?)
    }
}
