use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use candle_core::{DType, Device};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{PipelineError, Result, Run};
use crate::assembly::{self, apply_upscaler, AssembleOptions, ExportManifest, Provenance, SceneClip};
use crate::audio_retrieval::{
    retrieve_sfx, select_music, AudioAsset, AudioCatalog, AudioError, AudioIndex, HashedTextEmbedder, ScoredAsset, StatsVideoEmbedder,
    TextEmbedder,
};
use crate::diffusion::{self, prepare_for_stage, Clip, ClipDataset, ClipMeta, TrainReport, TrainStage};
use crate::evaluation::{clipsim, fvd_style, motion_energy, MetricRecord, MetricsReport, StubVideoFeatures};
use crate::script_gen::{self, summarize_tone, ScriptSequence, ToneLabel, UserBrief};
use crate::video::VideoArray;
use crate::video_model::{load_checkpoint, save_checkpoint, Checkpoint, TextEncoder, VideoDenoiser};

pub const SCRIPTS_FILE: &str = "scripts.json";
pub const SAMPLES_DIR: &str = "samples";
pub const AUDIO_PLAN_FILE: &str = "audio.json";
pub const METRICS_FILE: &str = "metrics.json";
pub const MOVIE_DIR: &str = "movie";
pub const FAILED_DIR: &str = "failed";

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    let mut bytes = serde_json::to_vec_pretty(value)?;
    bytes.push(b'\n');
    fs::write(path, bytes)?;
    Ok(())
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let bytes = fs::read(path).map_err(|e| PipelineError::Input(format!("{}: {e}", path.display())))?;
    serde_json::from_slice(&bytes).map_err(|e| PipelineError::Input(format!("{}: {e}", path.display())))
}

/// Expands a brief into `dir/scripts.json`. Scene length follows from the
/// clip length and frame rate.
pub fn expand(run: &mut Run, brief: &str, n_scenes: usize, dir: &Path) -> Result<ScriptSequence> {
    let brief = UserBrief::new(brief, n_scenes, run.config.scene_seconds());
    brief.validate()?;
    let client = run.config.llm_client()?;
    let seq = script_gen::expand(&brief, client.as_ref(), run.config.llm.retries)?;
    if seq.has_count_mismatch() {
        run.warn(format!("asked for {n_scenes} scenes, got {}", seq.scenes.len()));
    }
    let path = dir.join(SCRIPTS_FILE);
    write_json(&path, &seq)?;
    run.output(path);
    Ok(seq)
}

fn fresh_base(run: &Run) -> Result<VideoDenoiser> {
    Ok(VideoDenoiser::build(&run.config.model, run.seeds.get("init"), DType::F32, &Device::Cpu)?)
}

fn checkpoint_model(run: &Run, path: &Path) -> Result<Checkpoint> {
    let ckpt = load_checkpoint(path)?;
    if ckpt.model.config() != &run.config.model {
        return Err(PipelineError::Config(format!(
            "{} was trained with a different model section than the current config",
            path.display()
        )));
    }
    Ok(ckpt)
}

fn file_id(path: &Path) -> Result<String> {
    Ok(hex::encode(Sha256::digest(fs::read(path)?)))
}

/// Runs one training stage and writes `checkpoints/<stage>.safetensors`
/// and `metrics/<stage>.jsonl`. Without `init` the stage starts from a
/// freshly initialized base model.
pub fn train(run: &mut Run, stage: TrainStage, data: &Path, init: Option<&Path>) -> Result<TrainReport> {
    let mc = run.config.model.clone();
    let dataset = ClipDataset::load(data, mc.height, mc.width)?;
    let mut model = match init {
        Some(p) => checkpoint_model(run, p)?.model,
        None => {
            if stage != TrainStage::BasePretrain {
                run.warn(format!("{stage} starts from an untrained base model"));
            }
            fresh_base(run)?
        }
    };
    prepare_for_stage(&mut model, stage)?;
    let mut cfg = run.config.train.clone();
    cfg.stage = stage;
    cfg.seed = run.seeds.get("train");
    let sched = run.config.schedule()?;
    let encoder = run.config.text_encoder();
    let name = stage.as_str().to_lowercase();
    let metrics_path = run.out_dir().join("metrics").join(format!("{name}.jsonl"));
    fs::create_dir_all(metrics_path.parent().expect("has parent"))?;
    let mut metrics = fs::File::create(&metrics_path)?;
    let report = diffusion::train(&mut model, &dataset, &encoder, &sched, &cfg, Some(&mut metrics))?;
    run.output(metrics_path);
    let mut ckpt = Checkpoint::new(model);
    ckpt.ema = report.ema.clone();
    ckpt.extra = BTreeMap::from([
        ("config_hash".to_string(), run.config_hash().to_string()),
        ("stage".to_string(), stage.as_str().to_string()),
    ]);
    let ckpt_path = run.out_dir().join("checkpoints").join(format!("{name}.safetensors"));
    save_checkpoint(&ckpt, &ckpt_path)?;
    run.output(ckpt_path);
    Ok(report)
}

/// Loads the sampling model, preferring averaged weights when the
/// checkpoint has them. Without a checkpoint an untrained extended model is
/// built from the init seed. Returns the model and an identifier for it.
fn sampling_model(run: &mut Run, checkpoint: Option<&Path>) -> Result<(VideoDenoiser, String)> {
    match checkpoint {
        Some(p) => {
            let ckpt = checkpoint_model(run, p)?;
            let model = if ckpt.ema.is_empty() { ckpt.model } else { ckpt.ema_model()? };
            Ok((model, file_id(p)?))
        }
        None => {
            run.warn("no checkpoint given; sampling from an untrained model");
            let mut model = fresh_base(run)?;
            model.insert_spatial_adapters()?;
            model.insert_temporal_layers()?;
            let id = format!("untrained:{}", model.seed());
            Ok((model, id))
        }
    }
}

fn sample_clips(run: &Run, model: &VideoDenoiser, prompts: &[String]) -> Result<Vec<VideoArray>> {
    let sched = run.config.schedule()?;
    let encoder = run.config.text_encoder();
    prompts
        .iter()
        .enumerate()
        .map(|(i, p)| {
            let cond = encoder.encode_batch(&[p.as_str()])?;
            let mut sconf = run.config.sample.clone();
            sconf.seed = run.seeds.item("sample", i);
            Ok(diffusion::sample(model, &cond, &sconf, &sched)?)
        })
        .collect()
}

/// Writes clips as `clip_NNNN/frame_NNNN.png` plus a caption sidecar,
/// replacing whatever `dir` held before.
pub fn write_clips(dir: &Path, captions: &[String], clips: &[VideoArray], domain: usize, fps: f64) -> Result<()> {
    if dir.exists() {
        fs::remove_dir_all(dir)?;
    }
    let items = captions
        .iter()
        .zip(clips)
        .map(|(caption, v)| {
            let d = v.dims();
            let meta = ClipMeta {
                caption: caption.clone(),
                domain,
                fps,
            };
            Ok(Clip::new(meta, d.frames, d.channels, d.height, d.width, v.to_vec()?)?)
        })
        .collect::<Result<Vec<_>>>()?;
    ClipDataset::new(items).save(dir)?;
    Ok(())
}

/// Reads clips written by [`write_clips`] (or any dataset directory),
/// resized to `height x width` and cut to the first `frames` frames.
pub fn load_clips(dir: &Path, frames: usize, height: usize, width: usize) -> Result<Vec<(ClipMeta, VideoArray)>> {
    let ds = ClipDataset::load_exact(dir, height, width)?;
    ds.clips()
        .iter()
        .map(|c| {
            if c.frames() < frames {
                return Err(PipelineError::Input(format!(
                    "clip {:?} has {} frames, need {frames}",
                    c.meta.caption,
                    c.frames()
                )));
            }
            let dims = crate::video::VideoDims {
                batch: 1,
                frames,
                channels: 3,
                height,
                width,
            };
            let data = c.crop(0, frames, 0, 0, height, width, false);
            Ok((c.meta.clone(), VideoArray::from_vec(data, dims, &Device::Cpu)?))
        })
        .collect()
}

/// Samples one clip per prompt into `dir`. Returns the clips and the
/// checkpoint identifier.
pub fn sample(run: &mut Run, checkpoint: Option<&Path>, prompts: &[String], dir: &Path) -> Result<(Vec<VideoArray>, String)> {
    if prompts.is_empty() {
        return Err(PipelineError::Input("nothing to sample: no prompts".into()));
    }
    let (model, id) = sampling_model(run, checkpoint)?;
    let clips = sample_clips(run, &model, prompts)?;
    write_clips(dir, prompts, &clips, run.config.sample.domain_id, run.config.assembly.fps)?;
    run.output(dir);
    Ok((clips, id))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneAudio {
    pub scene: usize,
    pub hits: Vec<ScoredAsset>,
    pub sfx: Option<AudioAsset>,
}

/// Retrieval results for a whole movie, written as `audio.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AudioPlan {
    /// Directory the asset paths are relative to.
    pub catalog: Option<PathBuf>,
    pub lambda: f64,
    pub tone: ToneLabel,
    pub music: Option<AudioAsset>,
    pub scenes: Vec<SceneAudio>,
    pub warnings: Vec<String>,
}

fn open_catalog(run: &mut Run, catalog: Option<&Path>, text: &HashedTextEmbedder) -> Result<(Option<PathBuf>, AudioIndex)> {
    let dir = catalog.map(Path::to_path_buf).or_else(|| run.config.audio.catalog.clone());
    match dir {
        Some(dir) => {
            let index = AudioCatalog::load(&dir)?.build_index(&dir, text, None)?;
            Ok((Some(dir), index))
        }
        None => Ok((None, AudioIndex::new(text.dim()))),
    }
}

/// Picks one sound effect per scene and one music track for the movie.
/// An empty catalog degrades to no audio with a warning.
pub fn retrieve_audio(run: &mut Run, scripts: &ScriptSequence, clips: &[VideoArray], catalog: Option<&Path>, dir: &Path) -> Result<AudioPlan> {
    if scripts.scenes.len() != clips.len() {
        return Err(PipelineError::Input(format!(
            "{} scenes but {} clips",
            scripts.scenes.len(),
            clips.len()
        )));
    }
    let ac = run.config.audio.clone();
    let text = HashedTextEmbedder::new(ac.embed_dim);
    let video = StatsVideoEmbedder::new(ac.embed_dim, ac.video_seed);
    let (catalog, index) = open_catalog(run, catalog, &text)?;
    let mut warnings = Vec::new();
    let mut scenes = Vec::with_capacity(clips.len());
    for (scene, clip) in scripts.scenes.iter().zip(clips) {
        let (hits, sfx) = match retrieve_sfx(scene, clip, &index, ac.k, ac.lambda, &text, &video) {
            Ok(r) => {
                let top = r.top().and_then(|h| index.get(&h.asset_id)).map(|e| e.asset.clone());
                (r.hits, top)
            }
            Err(AudioError::EmptyCatalog(_)) => (Vec::new(), None),
            Err(e) => return Err(e.into()),
        };
        scenes.push(SceneAudio {
            scene: scene.index,
            hits,
            sfx,
        });
    }
    if scenes.iter().all(|s| s.sfx.is_none()) {
        warnings.push("audio catalog has no sound effects; scenes are silent".to_string());
    }
    let client = run.config.llm_client()?;
    let tone = summarize_tone(scripts, client.as_ref())?;
    let music = match select_music(&tone, &index, run.seeds.get("music"), &text) {
        Ok(a) => Some(a),
        Err(AudioError::EmptyCatalog(_)) => {
            warnings.push("audio catalog has no music; movie has no background track".to_string());
            None
        }
        Err(e) => return Err(e.into()),
    };
    for w in &warnings {
        run.warn(w.clone());
    }
    let plan = AudioPlan {
        catalog,
        lambda: ac.lambda,
        tone,
        music,
        scenes,
        warnings,
    };
    let path = dir.join(AUDIO_PLAN_FILE);
    write_json(&path, &plan)?;
    run.output(path);
    Ok(plan)
}

/// Builds the timeline from scripts, clips and the audio plan, upscales it
/// and exports it to `dir`.
pub fn assemble(
    run: &mut Run,
    scripts: &ScriptSequence,
    clips: Vec<VideoArray>,
    plan: &AudioPlan,
    checkpoint_id: Option<String>,
    dir: &Path,
) -> Result<ExportManifest> {
    if scripts.scenes.len() != clips.len() || plan.scenes.len() != clips.len() {
        return Err(PipelineError::Input(format!(
            "{} scenes, {} clips and {} audio entries",
            scripts.scenes.len(),
            clips.len(),
            plan.scenes.len()
        )));
    }
    let fps = run.config.assembly.fps;
    let scene_clips = scripts
        .scenes
        .iter()
        .zip(clips)
        .map(|(s, c)| Ok(SceneClip::new(s.clone(), c, fps)?))
        .collect::<Result<Vec<_>>>()?;
    let sfx = plan.scenes.iter().map(|s| s.sfx.clone()).collect();
    let opts = AssembleOptions {
        gains: run.config.assembly.gains,
        allow_missing_music: true,
    };
    let mut timeline = assembly::assemble(scene_clips, sfx, plan.music.clone(), opts)?;
    timeline.tone = Some(plan.tone.clone());
    timeline.warnings.splice(0..0, plan.warnings.iter().cloned());
    timeline.warnings.dedup();
    let upscaler = run.config.upscaler();
    apply_upscaler(&mut timeline, upscaler.as_ref())?;
    let mut seeds = run.seeds.seeds.clone();
    seeds.insert("root".into(), run.seeds.root);
    let provenance = Provenance {
        seeds,
        checkpoint_id,
        config_hash: Some(run.config_hash().to_string()),
    };
    let audio_root = plan.catalog.clone().unwrap_or_else(|| dir.to_path_buf());
    let manifest = assembly::export(&timeline, dir, &audio_root, provenance)?;
    run.output(dir.join(assembly::MANIFEST_FILE));
    Ok(manifest)
}

/// FVD-style distance, CLIPSIM-style alignment and motion energy of the
/// clips in `samples` against those in `reference`, written to `metrics.json`.
pub fn evaluate(run: &mut Run, samples: &Path, reference: &Path) -> Result<MetricsReport> {
    let mc = run.config.model.clone();
    let ec = run.config.eval.clone();
    let s = load_clips(samples, mc.frames, mc.height, mc.width)?;
    let r = load_clips(reference, mc.frames, mc.height, mc.width)?;
    let sv: Vec<VideoArray> = s.iter().map(|(_, v)| v.clone()).collect();
    let rv: Vec<VideoArray> = r.iter().map(|(_, v)| v.clone()).collect();
    let extractor = StubVideoFeatures::new(ec.feature_dim, ec.feature_seed);
    let fvd = fvd_style(&sv, &rv, &extractor)?;
    let captions: Vec<&str> = s.iter().map(|(m, _)| m.caption.as_str()).collect();
    let sim = clipsim(
        &captions,
        &sv,
        &HashedTextEmbedder::new(ec.feature_dim),
        &StatsVideoEmbedder::new(ec.feature_dim, ec.feature_seed),
    )?;
    let mean_motion = |clips: &[VideoArray]| -> Result<f64> {
        let total = clips.iter().map(motion_energy).sum::<std::result::Result<f64, _>>()?;
        Ok(total / clips.len() as f64)
    };
    let record = |metric: &str, extractor_id: &str, value: f64, n: usize, n_ref: Option<usize>| MetricRecord {
        metric: metric.into(),
        extractor_id: extractor_id.into(),
        value,
        n_samples: n,
        n_reference: n_ref,
    };
    let report = MetricsReport {
        metrics: vec![
            record("fvd_style", "stub-video-stats", fvd, sv.len(), Some(rv.len())),
            record("clipsim_style", "hashed-text+stub-video-stats", sim, sv.len(), None),
            record("motion_energy", "pixels", mean_motion(&sv)?, sv.len(), None),
            record("motion_energy_reference", "pixels", mean_motion(&rv)?, rv.len(), None),
        ],
    };
    let path = run.out_dir().join(METRICS_FILE);
    write_json(&path, &report)?;
    run.output(path);
    Ok(report)
}

fn movie_steps(run: &mut Run, brief: &str, n_scenes: usize, checkpoint: Option<&Path>, catalog: Option<&Path>, dir: &Path) -> Result<ExportManifest> {
    let scripts = run.stage("expand", |r| expand(r, brief, n_scenes, dir))?;
    let (model, ckpt_id) = run.stage("load-model", |r| sampling_model(r, checkpoint))?;
    let prompts: Vec<String> = scripts.texts().map(String::from).collect();
    let clips = run.stage("sample", |r| {
        let clips = sample_clips(r, &model, &prompts)?;
        write_clips(&dir.join(SAMPLES_DIR), &prompts, &clips, r.config.sample.domain_id, r.config.assembly.fps)?;
        Ok(clips)
    })?;
    let plan = run.stage("retrieve-audio", |r| retrieve_audio(r, &scripts, &clips, catalog, dir))?;
    run.stage("assemble", |r| assemble(r, &scripts, clips, &plan, Some(ckpt_id), dir))
}

/// The whole chain from brief to exported movie under `out/movie`. On
/// failure the partial output is moved to `out/failed/<run id>`.
pub fn make_movie(run: &mut Run, brief: &str, n_scenes: usize, checkpoint: Option<&Path>, catalog: Option<&Path>) -> Result<ExportManifest> {
    let dir = run.out_dir().join(MOVIE_DIR);
    if dir.exists() {
        fs::remove_dir_all(&dir)?;
    }
    fs::create_dir_all(&dir)?;
    match movie_steps(run, brief, n_scenes, checkpoint, catalog, &dir) {
        Ok(m) => Ok(m),
        Err(e) => {
            let failed = run.out_dir().join(FAILED_DIR).join(run.run_id());
            fs::create_dir_all(failed.parent().expect("has parent"))?;
            fs::rename(&dir, &failed)?;
            run.warn(format!("partial output kept in {}", failed.display()));
            Err(e)
        }
    }
}
