use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{frame_images, AssemblyError, MovieTimeline, Result};
use crate::audio_retrieval::AudioAsset;
use crate::script_gen::ToneLabel;

pub const MANIFEST_FILE: &str = "manifest.json";
pub const MANIFEST_VERSION: u32 = 1;

/// What produced the movie. Run ids and timestamps are kept out so that
/// identical inputs give identical manifests.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Provenance {
    pub seeds: BTreeMap<String, u64>,
    pub checkpoint_id: Option<String>,
    pub config_hash: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestSfx {
    pub asset_id: String,
    pub path: PathBuf,
    pub offset_seconds: f64,
    pub play_seconds: f64,
    pub source_seconds: f64,
    pub truncated: bool,
    pub gain_db: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestScene {
    pub index: usize,
    pub text: String,
    /// Glob for the frame files, relative to the manifest.
    pub frames: String,
    pub frame_count: usize,
    pub fps: f64,
    pub start_seconds: f64,
    pub end_seconds: f64,
    pub width: usize,
    pub height: usize,
    pub scale: u32,
    pub sfx: Option<ManifestSfx>,
}

impl ManifestScene {
    pub fn frame_path(&self, j: usize) -> PathBuf {
        scene_dir(self.index).join(frame_name(j))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestMusic {
    pub asset_id: String,
    pub path: PathBuf,
    pub gain_db: f64,
    pub start_seconds: f64,
    pub end_seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExportManifest {
    pub version: u32,
    pub total_duration: f64,
    pub scenes: Vec<ManifestScene>,
    pub music: Option<ManifestMusic>,
    pub tone: Option<ToneLabel>,
    pub warnings: Vec<String>,
    pub provenance: Provenance,
}

fn scene_dir(k: usize) -> PathBuf {
    PathBuf::from(format!("scene_{k:03}"))
}

fn frame_name(j: usize) -> String {
    format!("frame_{j:04}.png")
}

fn audio_rel(asset: &AudioAsset) -> PathBuf {
    let ext = asset.path.extension().and_then(|e| e.to_str()).unwrap_or("wav");
    PathBuf::from("audio").join(format!("{}.{ext}", asset.asset_id))
}

fn copy_audio(asset: &AudioAsset, audio_root: &Path, out_dir: &Path) -> Result<PathBuf> {
    let rel = audio_rel(asset);
    let dst = out_dir.join(&rel);
    if !dst.exists() {
        let src = audio_root.join(&asset.path);
        if !src.is_file() {
            return Err(AssemblyError::MissingFile(src));
        }
        fs::create_dir_all(dst.parent().expect("audio path has a parent"))?;
        fs::copy(&src, &dst)?;
    }
    Ok(rel)
}

/// Writes frames and audio under `out_dir`, then `manifest.json` last, then
/// re-validates what was written. Audio paths in the timeline are resolved
/// against `audio_root`.
pub fn export(timeline: &MovieTimeline, out_dir: &Path, audio_root: &Path, provenance: Provenance) -> Result<ExportManifest> {
    fs::create_dir_all(out_dir)?;
    let spans = timeline.spans();
    let mut scenes = Vec::with_capacity(timeline.scenes.len());
    for (pos, (clip, (start, end))) in timeline.scenes.iter().zip(spans).enumerate() {
        let dir = scene_dir(pos);
        fs::create_dir_all(out_dir.join(&dir))?;
        for (j, img) in frame_images(&clip.frames)?.iter().enumerate() {
            img.save(out_dir.join(&dir).join(frame_name(j)))?;
        }
        let sfx = match &clip.sfx {
            Some(p) => Some(ManifestSfx {
                asset_id: p.asset.asset_id.clone(),
                path: copy_audio(&p.asset, audio_root, out_dir)?,
                offset_seconds: 0.0,
                play_seconds: p.play_seconds,
                source_seconds: p.asset.duration_seconds,
                truncated: p.truncated(),
                gain_db: p.gain_db,
            }),
            None => None,
        };
        let d = clip.frames.dims();
        scenes.push(ManifestScene {
            index: pos,
            text: clip.scene.text.clone(),
            frames: format!("{}/frame_*.png", dir.display()),
            frame_count: d.frames,
            fps: clip.fps,
            start_seconds: start,
            end_seconds: end,
            width: d.width,
            height: d.height,
            scale: clip.scale,
            sfx,
        });
    }
    let total = timeline.total_duration();
    let music = match &timeline.music {
        Some(m) => Some(ManifestMusic {
            asset_id: m.asset.asset_id.clone(),
            path: copy_audio(&m.asset, audio_root, out_dir)?,
            gain_db: m.gain_db,
            start_seconds: 0.0,
            end_seconds: total,
        }),
        None => None,
    };
    let manifest = ExportManifest {
        version: MANIFEST_VERSION,
        total_duration: total,
        scenes,
        music,
        tone: timeline.tone.clone(),
        warnings: timeline.warnings.clone(),
        provenance,
    };
    let mut bytes = serde_json::to_vec_pretty(&manifest)?;
    bytes.push(b'\n');
    fs::write(out_dir.join(MANIFEST_FILE), bytes)?;
    validate_manifest(out_dir)
}

fn check(ok: bool, msg: impl FnOnce() -> String) -> Result<()> {
    if ok {
        Ok(())
    } else {
        Err(AssemblyError::Manifest(msg()))
    }
}

fn exists(dir: &Path, rel: &Path) -> Result<()> {
    let p = dir.join(rel);
    if p.is_file() {
        Ok(())
    } else {
        Err(AssemblyError::MissingFile(p))
    }
}

/// Reads `dir/manifest.json` and fails on the first broken invariant: a
/// missing file, a gap or overlap between spans, or a wrong total.
pub fn validate_manifest(dir: &Path) -> Result<ExportManifest> {
    let path = dir.join(MANIFEST_FILE);
    if !path.is_file() {
        return Err(AssemblyError::MissingFile(path));
    }
    let m: ExportManifest = serde_json::from_slice(&fs::read(&path)?)?;
    check(m.version == MANIFEST_VERSION, || format!("unsupported version {}", m.version))?;
    check(!m.scenes.is_empty(), || "no scenes".into())?;
    let mut t = 0.0;
    for (pos, s) in m.scenes.iter().enumerate() {
        check(s.index == pos, || format!("scene at position {pos} has index {}", s.index))?;
        check(s.start_seconds == t, || {
            format!("scene {pos} starts at {} but the previous one ends at {t}", s.start_seconds)
        })?;
        check(s.end_seconds > s.start_seconds, || format!("scene {pos} has an empty span"))?;
        check(s.fps > 0.0 && s.frame_count > 0, || format!("scene {pos} has no frames"))?;
        for j in 0..s.frame_count {
            exists(dir, &s.frame_path(j))?;
        }
        if let Some(sfx) = &s.sfx {
            exists(dir, &sfx.path)?;
            check(sfx.play_seconds <= s.end_seconds - s.start_seconds, || {
                format!("scene {pos} sound effect outlasts its scene")
            })?;
        }
        t = s.end_seconds;
    }
    check(m.total_duration == t, || format!("total {} but spans end at {t}", m.total_duration))?;
    if let Some(music) = &m.music {
        exists(dir, &music.path)?;
        check(music.start_seconds == 0.0 && music.end_seconds == t, || "music does not span the movie".into())?;
    }
    Ok(m)
}
