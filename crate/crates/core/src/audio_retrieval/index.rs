use std::cmp::Ordering;
use std::collections::HashSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{AudioError, AudioEmbedder, EmbeddingVector, Result, TextEmbedder};
use crate::script_gen::ToneCategory;

pub const INDEX_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum AudioKind {
    Sfx,
    Music,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AudioAsset {
    pub asset_id: String,
    /// Waveform file, relative to the catalog directory.
    pub path: PathBuf,
    pub caption: String,
    pub kind: AudioKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tone: Option<ToneCategory>,
    pub duration_seconds: f64,
}

impl AudioAsset {
    pub fn validate(&self) -> Result<()> {
        if self.asset_id.is_empty() {
            return Err(AudioError::InvalidAsset("empty asset_id".into()));
        }
        if !(self.duration_seconds > 0.0 && self.duration_seconds.is_finite()) {
            return Err(AudioError::InvalidAsset(format!("{}: duration must be positive", self.asset_id)));
        }
        if self.kind == AudioKind::Music && self.tone.is_none() {
            return Err(AudioError::InvalidAsset(format!("{}: music needs a tone", self.asset_id)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndexEntry {
    pub asset: AudioAsset,
    pub caption_vec: EmbeddingVector,
    pub proxy_vec: EmbeddingVector,
}

/// Which stored vector a query is compared against.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IndexField {
    Caption,
    Proxy,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredAsset {
    pub asset_id: String,
    pub score: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub text_score: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub video_score: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrievalResult {
    pub hits: Vec<ScoredAsset>,
    /// Weight of the video route in fused queries.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda: Option<f64>,
}

impl RetrievalResult {
    pub fn ids(&self) -> Vec<&str> {
        self.hits.iter().map(|h| h.asset_id.as_str()).collect()
    }

    pub fn top(&self) -> Option<&ScoredAsset> {
        self.hits.first()
    }
}

/// Descending score, then ascending asset id.
pub fn rank_order(a: &ScoredAsset, b: &ScoredAsset) -> Ordering {
    b.score.total_cmp(&a.score).then_with(|| a.asset_id.cmp(&b.asset_id))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct Persisted {
    format_version: u32,
    dim: usize,
    entries: Vec<IndexEntry>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AudioIndex {
    dim: usize,
    entries: Vec<IndexEntry>,
    ids: HashSet<String>,
}

impl AudioIndex {
    pub fn new(dim: usize) -> Self {
        Self {
            dim,
            entries: Vec::new(),
            ids: HashSet::new(),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[IndexEntry] {
        &self.entries
    }

    pub fn get(&self, asset_id: &str) -> Option<&IndexEntry> {
        self.entries.iter().find(|e| e.asset.asset_id == asset_id)
    }

    pub fn count(&self, kind: AudioKind) -> usize {
        self.entries.iter().filter(|e| e.asset.kind == kind).count()
    }

    fn check_dim(&self, v: &EmbeddingVector) -> Result<()> {
        if v.dim() != self.dim {
            return Err(AudioError::DimMismatch {
                expected: self.dim,
                got: v.dim(),
            });
        }
        Ok(())
    }

    pub fn add(&mut self, asset: AudioAsset, caption_vec: EmbeddingVector, proxy_vec: EmbeddingVector) -> Result<()> {
        asset.validate()?;
        self.check_dim(&caption_vec)?;
        self.check_dim(&proxy_vec)?;
        if caption_vec.norm() == 0.0 || proxy_vec.norm() == 0.0 {
            return Err(AudioError::Embedding(format!("{}: zero vector", asset.asset_id)));
        }
        if !self.ids.insert(asset.asset_id.clone()) {
            return Err(AudioError::DuplicateAsset(asset.asset_id));
        }
        self.entries.push(IndexEntry {
            asset,
            caption_vec,
            proxy_vec,
        });
        Ok(())
    }

    /// Embeds the caption for both vectors unless an audio embedder and the
    /// catalog directory are given for the proxy.
    pub fn add_asset(
        &mut self,
        asset: AudioAsset,
        text: &dyn TextEmbedder,
        audio: Option<(&dyn AudioEmbedder, &Path)>,
    ) -> Result<()> {
        let caption_vec = text.embed_text(&asset.caption)?;
        let proxy_vec = match audio {
            Some((enc, root)) => enc.embed_audio(&root.join(&asset.path))?,
            None => caption_vec.clone(),
        };
        self.add(asset, caption_vec, proxy_vec)
    }

    pub(crate) fn scored(
        &self,
        kind: Option<AudioKind>,
        score: impl Fn(&IndexEntry) -> ScoredAsset,
        k: usize,
    ) -> Result<RetrievalResult> {
        if k == 0 {
            return Err(AudioError::InvalidQuery("k must be at least 1".into()));
        }
        let mut hits: Vec<ScoredAsset> = self
            .entries
            .iter()
            .filter(|e| kind.is_none_or(|k| e.asset.kind == k))
            .map(score)
            .collect();
        hits.sort_by(rank_order);
        hits.truncate(k);
        Ok(RetrievalResult { hits, lambda: None })
    }

    /// Top `k` entries by cosine similarity against `field`.
    pub fn search(&self, query: &EmbeddingVector, k: usize, kind: Option<AudioKind>, field: IndexField) -> Result<RetrievalResult> {
        self.check_dim(query)?;
        self.scored(
            kind,
            |e| {
                let v = match field {
                    IndexField::Caption => &e.caption_vec,
                    IndexField::Proxy => &e.proxy_vec,
                };
                ScoredAsset {
                    asset_id: e.asset.asset_id.clone(),
                    score: query.cosine(v),
                    text_score: None,
                    video_score: None,
                }
            },
            k,
        )
    }

    pub fn to_json(&self) -> Result<String> {
        let p = Persisted {
            format_version: INDEX_FORMAT_VERSION,
            dim: self.dim,
            entries: self.entries.clone(),
        };
        Ok(serde_json::to_string_pretty(&p)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let p: Persisted = serde_json::from_str(s)?;
        if p.format_version != INDEX_FORMAT_VERSION {
            return Err(AudioError::Catalog(format!("index format {} is not supported", p.format_version)));
        }
        let mut index = Self::new(p.dim);
        for e in p.entries {
            index.add(e.asset, e.caption_vec, e.proxy_vec)?;
        }
        Ok(index)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}
