//! Scene clips, sound effects and one music track laid out on a timeline,
//! then exported as PNG frame sequences, copied audio and `manifest.json`.

mod export;
mod upscale;

pub use export::{export, validate_manifest, ExportManifest, ManifestMusic, ManifestScene, ManifestSfx, Provenance, MANIFEST_FILE, MANIFEST_VERSION};
pub use upscale::{apply_upscaler, frame_images, IdentityUpscaler, NearestUpscaler, UpscaleError, Upscaler};

use serde::{Deserialize, Serialize};

use crate::audio_retrieval::AudioAsset;
use crate::script_gen::{SceneScript, ToneLabel};
use crate::video::VideoArray;
use crate::video_model::ModelError;

pub const MUSIC_GAIN_DB: f64 = -12.0;
pub const SFX_GAIN_DB: f64 = -6.0;
pub const DEFAULT_FPS: f64 = 8.0;

#[derive(Debug, thiserror::Error)]
pub enum AssemblyError {
    #[error("a movie needs at least one scene")]
    NoScenes,
    #[error("no background music track was supplied")]
    MissingMusic,
    #[error("{scenes} scenes but {choices} sound-effect choices")]
    SfxCount { scenes: usize, choices: usize },
    #[error("scene {scene}: {detail}")]
    InvalidScene { scene: usize, detail: String },
    #[error("upscaling scene {scene} failed: {detail}")]
    Upscale { scene: usize, detail: String },
    #[error("manifest invalid: {0}")]
    Manifest(String),
    #[error("missing file {}", .0.display())]
    MissingFile(std::path::PathBuf),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Image(#[from] image::ImageError),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Model(#[from] ModelError),
}

pub type Result<T> = std::result::Result<T, AssemblyError>;

impl From<candle_core::Error> for AssemblyError {
    fn from(e: candle_core::Error) -> Self {
        AssemblyError::Model(ModelError::Tensor(e))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Gains {
    pub music_db: f64,
    pub sfx_db: f64,
}

impl Default for Gains {
    fn default() -> Self {
        Self {
            music_db: MUSIC_GAIN_DB,
            sfx_db: SFX_GAIN_DB,
        }
    }
}

/// A sound effect anchored at its scene's start.
#[derive(Debug, Clone, PartialEq)]
pub struct SfxPlacement {
    pub asset: AudioAsset,
    pub gain_db: f64,
    /// Seconds actually played: the asset's length cut to the scene's.
    pub play_seconds: f64,
}

impl SfxPlacement {
    pub fn truncated(&self) -> bool {
        self.play_seconds < self.asset.duration_seconds
    }
}

#[derive(Debug, Clone)]
pub struct SceneClip {
    pub scene: SceneScript,
    /// One clip, `[1, frames, 3, height, width]`, values in `[-1, 1]`.
    pub frames: VideoArray,
    pub fps: f64,
    pub sfx: Option<SfxPlacement>,
    /// Product of the upscaler factors applied to these frames.
    pub scale: u32,
}

impl SceneClip {
    pub fn new(scene: SceneScript, frames: VideoArray, fps: f64) -> Result<Self> {
        let bad = |detail: String| AssemblyError::InvalidScene { scene: scene.index, detail };
        if !(fps > 0.0 && fps.is_finite()) {
            return Err(bad(format!("fps must be positive, got {fps}")));
        }
        let d = frames.dims();
        if d.batch != 1 || d.channels != 3 {
            return Err(bad(format!("expected one 3-channel clip, got {d:?}")));
        }
        let want = (scene.duration_seconds * fps).round();
        if want != d.frames as f64 {
            return Err(bad(format!(
                "{} frames at {fps} fps do not cover {} s",
                d.frames, scene.duration_seconds
            )));
        }
        Ok(Self {
            scene,
            frames,
            fps,
            sfx: None,
            scale: 1,
        })
    }

    pub fn duration(&self) -> f64 {
        self.scene.duration_seconds
    }

    pub fn frame_count(&self) -> usize {
        self.frames.dims().frames
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MusicTrack {
    pub asset: AudioAsset,
    pub gain_db: f64,
}

#[derive(Debug, Clone)]
pub struct MovieTimeline {
    pub scenes: Vec<SceneClip>,
    /// Absent only on the degraded path, which leaves a warning.
    pub music: Option<MusicTrack>,
    pub tone: Option<ToneLabel>,
    pub warnings: Vec<String>,
}

impl MovieTimeline {
    /// `[start, end)` of every scene, placed back to back from zero.
    pub fn spans(&self) -> Vec<(f64, f64)> {
        let mut t = 0.0;
        self.scenes
            .iter()
            .map(|s| {
                let span = (t, t + s.duration());
                t = span.1;
                span
            })
            .collect()
    }

    pub fn total_duration(&self) -> f64 {
        self.spans().last().map_or(0.0, |s| s.1)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct AssembleOptions {
    pub gains: Gains,
    /// Export without background music instead of failing.
    pub allow_missing_music: bool,
}

/// Lays scenes out as hard cuts in input order, anchors each scene's sound
/// effect at its start and spans the music over the whole movie.
pub fn assemble(
    mut scenes: Vec<SceneClip>,
    sfx: Vec<Option<AudioAsset>>,
    music: Option<AudioAsset>,
    opts: AssembleOptions,
) -> Result<MovieTimeline> {
    if scenes.is_empty() {
        return Err(AssemblyError::NoScenes);
    }
    if sfx.len() != scenes.len() {
        return Err(AssemblyError::SfxCount {
            scenes: scenes.len(),
            choices: sfx.len(),
        });
    }
    let mut warnings = Vec::new();
    let music = match music {
        Some(asset) => Some(MusicTrack {
            asset,
            gain_db: opts.gains.music_db,
        }),
        None if opts.allow_missing_music => {
            warnings.push("no background music available; exported without music".to_string());
            None
        }
        None => return Err(AssemblyError::MissingMusic),
    };
    for (clip, choice) in scenes.iter_mut().zip(sfx) {
        clip.sfx = choice.map(|asset| SfxPlacement {
            play_seconds: asset.duration_seconds.min(clip.duration()),
            asset,
            gain_db: opts.gains.sfx_db,
        });
    }
    Ok(MovieTimeline {
        scenes,
        music,
        tone: None,
        warnings,
    })
}
