use serde::{Deserialize, Serialize};

use super::ModelError;

/// Shape and width of the toy denoiser.
///
/// The default grid is 8x16 (a 2:1 landscape frame) with 8 frames per clip.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub in_channels: usize,
    pub base_channels: usize,
    pub channel_mults: Vec<usize>,
    pub frames: usize,
    pub height: usize,
    pub width: usize,
    pub n_domains: usize,
    pub text_embed_dim: usize,
    pub text_tokens: usize,
    pub time_embed_dim: usize,
    /// Resolution levels (0 = full resolution) whose base blocks carry attention.
    /// Empty means the lowest level only.
    pub attn_levels: Vec<usize>,
    pub attn_heads: usize,
    pub norm_groups: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            in_channels: 3,
            base_channels: 32,
            channel_mults: vec![1, 2],
            frames: 8,
            height: 8,
            width: 16,
            n_domains: 2,
            text_embed_dim: 32,
            text_tokens: 8,
            time_embed_dim: 64,
            attn_levels: Vec::new(),
            attn_heads: 2,
            norm_groups: 8,
        }
    }
}

impl ModelConfig {
    /// A narrower preset that trains in seconds on one CPU core.
    pub fn toy() -> Self {
        Self {
            base_channels: 16,
            text_embed_dim: 16,
            time_embed_dim: 32,
            attn_heads: 1,
            norm_groups: 4,
            ..Self::default()
        }
    }

    pub fn levels(&self) -> usize {
        self.channel_mults.len()
    }

    pub fn level_channels(&self, level: usize) -> usize {
        self.base_channels * self.channel_mults[level]
    }

    pub fn has_attention(&self, level: usize) -> bool {
        if self.attn_levels.is_empty() {
            level + 1 == self.levels()
        } else {
            self.attn_levels.contains(&level)
        }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let bad = |msg: String| Err(ModelError::Config(msg));
        if self.in_channels == 0
            || self.base_channels == 0
            || self.height == 0
            || self.width == 0
            || self.text_embed_dim == 0
            || self.text_tokens == 0
            || self.time_embed_dim == 0
            || self.attn_heads == 0
            || self.norm_groups == 0
        {
            return bad("all dimensions must be positive".into());
        }
        if self.channel_mults.is_empty() || self.channel_mults.contains(&0) {
            return bad("channel_mults must be a non-empty list of positive integers".into());
        }
        if self.frames < 2 {
            return bad(format!("frames must be at least 2, got {}", self.frames));
        }
        if self.n_domains == 0 {
            return bad("n_domains must be at least 1".into());
        }
        if self.width < self.height {
            return bad(format!(
                "frames must be landscape (width >= height), got {}x{}",
                self.height, self.width
            ));
        }
        let down = 1usize << (self.levels() - 1);
        if self.height % down != 0 || self.width % down != 0 {
            return bad(format!(
                "height and width must be divisible by {down} for {} levels",
                self.levels()
            ));
        }
        if self.base_channels % 2 != 0 {
            return bad("base_channels must be even for the timestep embedding".into());
        }
        if let Some(l) = self.attn_levels.iter().find(|&&l| l >= self.levels()) {
            return bad(format!("attention level {l} does not exist"));
        }
        for level in 0..self.levels() {
            let c = self.level_channels(level);
            if c % self.norm_groups != 0 {
                return bad(format!(
                    "channel count {c} at level {level} is not divisible by norm_groups {}",
                    self.norm_groups
                ));
            }
            if c % self.attn_heads != 0 {
                return bad(format!(
                    "channel count {c} at level {level} is not divisible by attn_heads {}",
                    self.attn_heads
                ));
            }
        }
        Ok(())
    }
}
