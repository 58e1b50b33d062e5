use std::f64::consts::PI;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{AudioAsset, AudioEmbedder, AudioError, AudioIndex, AudioKind, Result, TextEmbedder};
use crate::script_gen::ToneCategory;

pub const CATALOG_FILE: &str = "catalog.json";
pub const CATALOG_VERSION: u32 = 1;

/// `catalog.json`: asset metadata with paths relative to the catalog directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AudioCatalog {
    pub version: u32,
    pub assets: Vec<AudioAsset>,
}

impl AudioCatalog {
    /// Reads `catalog.json` from `dir` and checks each waveform exists.
    pub fn load(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        let path = dir.join(CATALOG_FILE);
        let raw = fs::read_to_string(&path).map_err(|e| AudioError::Catalog(format!("{}: {e}", path.display())))?;
        let cat: AudioCatalog = serde_json::from_str(&raw).map_err(|e| AudioError::Catalog(format!("{}: {e}", path.display())))?;
        if cat.version != CATALOG_VERSION {
            return Err(AudioError::Catalog(format!("catalog version {} is not supported", cat.version)));
        }
        for a in &cat.assets {
            a.validate()?;
            let wav = dir.join(&a.path);
            if !wav.is_file() {
                return Err(AudioError::Catalog(format!("{}: missing waveform {}", a.asset_id, wav.display())));
            }
        }
        Ok(cat)
    }

    pub fn save(&self, dir: impl AsRef<Path>) -> Result<()> {
        fs::create_dir_all(dir.as_ref())?;
        fs::write(dir.as_ref().join(CATALOG_FILE), serde_json::to_string_pretty(self)?)?;
        Ok(())
    }

    pub fn build_index(&self, dir: &Path, text: &dyn TextEmbedder, audio: Option<&dyn AudioEmbedder>) -> Result<AudioIndex> {
        let mut index = AudioIndex::new(text.dim());
        for a in &self.assets {
            index.add_asset(a.clone(), text, audio.map(|e| (e, dir)))?;
        }
        Ok(index)
    }
}

/// Length in seconds of a PCM WAV file.
pub fn wav_duration(path: &Path) -> Result<f64> {
    let r = hound::WavReader::open(path)?;
    let spec = r.spec();
    Ok(r.duration() as f64 / spec.sample_rate as f64)
}

/// Writes a mono 16-bit sine tone with a short fade at both ends.
pub fn write_tone(path: &Path, freq_hz: f64, seconds: f64, sample_rate: u32) -> Result<()> {
    let spec = hound::WavSpec {
        channels: 1,
        sample_rate,
        bits_per_sample: 16,
        sample_format: hound::SampleFormat::Int,
    };
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    let mut w = hound::WavWriter::create(path, spec)?;
    let n = (seconds * sample_rate as f64).round() as usize;
    let fade = (sample_rate as usize / 50).max(1);
    for i in 0..n {
        let env = (i.min(n - 1 - i) as f64 / fade as f64).min(1.0);
        let v = (2.0 * PI * freq_hz * i as f64 / sample_rate as f64).sin() * env * 0.5;
        w.write_sample((v * i16::MAX as f64) as i16)?;
    }
    w.finalize()?;
    Ok(())
}

const DEMO_SFX: [(&str, &str, f64); 6] = [
    ("sfx_engine", "roaring car engine revving on a race track", 2.5),
    ("sfx_crowd", "crowd cheering in a stadium", 1.5),
    ("sfx_wind", "wind howling over open ground", 3.0),
    ("sfx_water", "splash of water and waves", 0.8),
    ("sfx_steps", "footsteps running on gravel", 1.2),
    ("sfx_horn", "loud horn blast at the start line", 0.6),
];

const DEMO_MUSIC: [(&str, &str, ToneCategory); 6] = [
    ("music_epic_a", "epic orchestral drums and brass", ToneCategory::Epic),
    ("music_epic_b", "soaring epic choir", ToneCategory::Epic),
    ("music_triumph", "triumphant fanfare with victory brass", ToneCategory::Triumphant),
    ("music_tense", "tense pulsing strings", ToneCategory::Tense),
    ("music_calm", "serene piano over soft pads", ToneCategory::Serene),
    ("music_sad", "melancholic solo cello", ToneCategory::Melancholic),
];

/// Writes a small catalog of synthetic tones to `dir`. No track is tagged
/// ominous, joyful or mysterious, so those tones take the fallback path.
pub fn write_demo_catalog(dir: impl AsRef<Path>) -> Result<AudioCatalog> {
    let dir = dir.as_ref();
    let mut assets = Vec::new();
    for (i, (id, caption, secs)) in DEMO_SFX.iter().enumerate() {
        let path = PathBuf::from("sfx").join(format!("{id}.wav"));
        write_tone(&dir.join(&path), 220.0 + 110.0 * i as f64, *secs, 8000)?;
        assets.push(AudioAsset {
            asset_id: id.to_string(),
            path,
            caption: caption.to_string(),
            kind: AudioKind::Sfx,
            tone: None,
            duration_seconds: *secs,
        });
    }
    for (i, (id, caption, tone)) in DEMO_MUSIC.iter().enumerate() {
        let path = PathBuf::from("music").join(format!("{id}.wav"));
        write_tone(&dir.join(&path), 130.0 + 20.0 * i as f64, 12.0, 8000)?;
        assets.push(AudioAsset {
            asset_id: id.to_string(),
            path,
            caption: caption.to_string(),
            kind: AudioKind::Music,
            tone: Some(*tone),
            duration_seconds: 12.0,
        });
    }
    let cat = AudioCatalog {
        version: CATALOG_VERSION,
        assets,
    };
    cat.save(dir)?;
    Ok(cat)
}
