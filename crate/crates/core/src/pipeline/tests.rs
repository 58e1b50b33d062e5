use std::fs;
use std::path::Path;

use super::*;
use crate::audio_retrieval::{write_demo_catalog, AudioCatalog, CATALOG_VERSION};
use crate::diffusion::{moving_squares, TrainStage};
use crate::video_model::{load_checkpoint, GroupSet, ParamGroup};

fn quick(out: &Path) -> PipelineConfig {
    let mut c = PipelineConfig::default();
    c.io.out_dir = out.to_path_buf();
    c.sample.steps = 3;
    c.train.steps = 4;
    c.train.batch = 2;
    c.train.smoothing_window = 2;
    c
}

#[test]
fn default_config_validates_and_round_trips() {
    let c = PipelineConfig::default();
    c.validate().unwrap();
    let text = serde_json::to_string(&c).unwrap();
    assert_eq!(PipelineConfig::from_json(&text).unwrap(), c);
    assert_eq!(PipelineConfig::from_json("{}").unwrap(), c);
}

#[test]
fn unknown_keys_are_rejected() {
    let err = PipelineConfig::from_json(r#"{"audio": {"lamda": 0.3}}"#).unwrap_err();
    assert!(err.to_string().contains("lamda"), "{err}");
    assert!(PipelineConfig::from_json(r#"{"extra": 1}"#).is_err());
}

#[test]
fn invalid_values_are_rejected() {
    let mut c = PipelineConfig::default();
    c.audio.lambda = 1.5;
    assert!(c.validate().is_err());
    let mut c = PipelineConfig::default();
    c.sample.domain_id = 9;
    assert!(c.validate().is_err());
    let mut c = PipelineConfig::default();
    c.assembly.fps = 0.0;
    assert!(c.validate().is_err());
}

#[test]
fn hash_ignores_output_location_only() {
    let a = PipelineConfig::default();
    let mut b = a.clone();
    b.io.out_dir = "elsewhere".into();
    assert_eq!(a.hash(), b.hash());
    b.io.seed = 1;
    assert_ne!(a.hash(), b.hash());
    assert_eq!(a.hash().len(), 64);
}

#[test]
fn invalid_config_writes_nothing() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("out");
    let mut c = quick(&out);
    c.audio.k = 0;
    let r = Run::execute(&c, "expand", |run| expand(run, "a fox", 2, &out));
    assert!(matches!(r, Err(PipelineError::Config(_))));
    assert!(!out.exists());
}

#[test]
fn expand_is_deterministic_and_logged() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path();
    let c = quick(out);
    let brief = "a race between a car and an airplane";
    let (seq, rec) = Run::execute(&c, "expand", |run| expand(run, brief, 10, out)).unwrap();
    assert_eq!(seq.scenes.len(), 10);
    assert!(seq.scenes.iter().all(|s| s.duration_seconds == 1.0));
    let first = fs::read(out.join(SCRIPTS_FILE)).unwrap();
    Run::execute(&c, "expand", |run| expand(run, brief, 10, out)).unwrap();
    assert_eq!(first, fs::read(out.join(SCRIPTS_FILE)).unwrap());
    let runs = read_runs(out).unwrap();
    assert_eq!(runs.len(), 2);
    assert_ne!(runs[0].run_id, runs[1].run_id);
    assert_eq!(runs[0].run_id, rec.run_id);
    assert_eq!(runs[0].config_hash, c.hash());
    assert_eq!(runs[0].status, "ok");
}

#[test]
fn failed_command_is_logged() {
    let tmp = tempfile::tempdir().unwrap();
    let c = quick(tmp.path());
    let r = Run::execute(&c, "expand", |run| expand(run, "   ", 2, tmp.path()));
    assert!(r.is_err());
    let runs = read_runs(tmp.path()).unwrap();
    assert_eq!(runs[0].status, "failed");
    assert!(runs[0].error.as_deref().unwrap().contains("empty"));
}

#[test]
fn staged_training_through_the_commands() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("out");
    let data = tmp.path().join("data");
    let c = quick(&out);
    let (h, w) = crate::diffusion::data::load_size(c.model.height, c.model.width);
    moving_squares(3, &[0, 1], 2, c.model.frames, h, w).save(&data).unwrap();

    let (base, _) = Run::execute(&c, "train", |run| train(run, TrainStage::BasePretrain, &data, None)).unwrap();
    assert!(base.frozen_unchanged());
    let base_ckpt = out.join("checkpoints/base_pretrain.safetensors");
    assert!(out.join("metrics/base_pretrain.jsonl").is_file());

    let err = Run::execute(&c, "train", |run| train(run, TrainStage::TemporalTrain, &data, Some(&base_ckpt))).unwrap_err();
    assert!(err.to_string().contains("spatial adapters"), "{err}");

    let (spatial, _) = Run::execute(&c, "train", |run| train(run, TrainStage::SpatialFinetune, &data, Some(&base_ckpt))).unwrap();
    assert_eq!(spatial.changed_groups(), GroupSet::NONE.with(ParamGroup::Adapter));
    let a = load_checkpoint(&base_ckpt).unwrap().model;
    let b = load_checkpoint(out.join("checkpoints/spatial_finetune.safetensors")).unwrap().model;
    assert_eq!(a.params().group_hash(ParamGroup::Base).unwrap(), b.params().group_hash(ParamGroup::Base).unwrap());

    let spatial_ckpt = out.join("checkpoints/spatial_finetune.safetensors");
    Run::execute(&c, "train", |run| train(run, TrainStage::TemporalTrain, &data, Some(&spatial_ckpt))).unwrap();
    let temporal_ckpt = out.join("checkpoints/temporal_train.safetensors");
    let (movie, _) = Run::execute(&c, "train", |run| train(run, TrainStage::MovieFinetune, &data, Some(&temporal_ckpt))).unwrap();
    assert_eq!(movie.changed_groups(), GroupSet::NONE.with(ParamGroup::Adapter));
    let log = fs::read_to_string(out.join("metrics/movie_finetune.jsonl")).unwrap();
    let census: serde_json::Value = serde_json::from_str(log.lines().last().unwrap()).unwrap();
    assert_eq!(census["trained_groups"], serde_json::json!(["ADAPTER"]));
}

fn demo_catalog(dir: &Path) -> std::path::PathBuf {
    let cat = dir.join("catalog");
    write_demo_catalog(&cat).unwrap();
    cat
}

#[test]
fn make_movie_end_to_end() {
    let tmp = tempfile::tempdir().unwrap();
    let cat = demo_catalog(tmp.path());
    let mut manifests = Vec::new();
    for name in ["a", "b"] {
        let out = tmp.path().join(name);
        let c = quick(&out);
        let (m, rec) = Run::execute(&c, "make-movie", |run| make_movie(run, "a fox in the snow", 3, None, Some(&cat))).unwrap();
        assert_eq!(m.scenes.len(), 3);
        assert!(m.scenes.iter().all(|s| s.sfx.is_some()));
        assert!(m.music.is_some());
        assert_eq!(m.total_duration, 3.0);
        let stages: Vec<&str> = rec.timings.iter().map(|t| t.stage.as_str()).collect();
        assert_eq!(stages, ["expand", "load-model", "sample", "retrieve-audio", "assemble"]);
        assert_eq!(read_runs(&out).unwrap().len(), 1);
        manifests.push(fs::read(out.join(MOVIE_DIR).join("manifest.json")).unwrap());
    }
    assert_eq!(manifests[0], manifests[1]);
}

#[test]
fn empty_catalog_degrades_gracefully() {
    let tmp = tempfile::tempdir().unwrap();
    let cat = tmp.path().join("empty");
    AudioCatalog {
        version: CATALOG_VERSION,
        assets: vec![],
    }
    .save(&cat)
    .unwrap();
    let out = tmp.path().join("out");
    let c = quick(&out);
    let (m, rec) = Run::execute(&c, "make-movie", |run| make_movie(run, "a quiet lake", 2, None, Some(&cat))).unwrap();
    assert!(m.music.is_none());
    assert!(m.scenes.iter().all(|s| s.sfx.is_none()));
    assert!(m.warnings.iter().any(|w| w.contains("no music")));
    assert!(rec.warnings.iter().any(|w| w.contains("no sound effects")));
}

#[test]
fn failed_movie_keeps_partials() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("out");
    let c = quick(&out);
    let missing = tmp.path().join("no-such-catalog");
    let err = Run::execute(&c, "make-movie", |run| make_movie(run, "a storm at sea", 2, None, Some(&missing))).unwrap_err();
    assert_eq!(err.stage(), Some("retrieve-audio"));
    let runs = read_runs(&out).unwrap();
    assert_eq!(runs[0].status, "failed");
    let kept = out.join(FAILED_DIR).join(&runs[0].run_id);
    assert!(kept.join(SCRIPTS_FILE).is_file());
    assert!(kept.join(SAMPLES_DIR).join("clip_0001/frame_0000.png").is_file());
    assert!(!out.join(MOVIE_DIR).exists());
}

#[test]
fn evaluate_reference_against_itself() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("out");
    let c = quick(&out);
    let data = tmp.path().join("data");
    moving_squares(5, &[0, 1], 3, c.model.frames, c.model.height, c.model.width).save(&data).unwrap();
    let (report, _) = Run::execute(&c, "evaluate", |run| evaluate(run, &data, &data)).unwrap();
    assert!(report.get("fvd_style").unwrap() <= 1e-6);
    assert!(report.get("motion_energy").unwrap() > 0.0);
    assert!(out.join(METRICS_FILE).is_file());

    let statics = tmp.path().join("static");
    let clips: Vec<_> = load_clips(&data, c.model.frames, c.model.height, c.model.width)
        .unwrap()
        .into_iter()
        .map(|(_, v)| {
            let first = v.tensor().narrow(1, 0, 1).unwrap();
            let rep = first.repeat((1, c.model.frames, 1, 1, 1)).unwrap();
            crate::video::VideoArray::new(rep).unwrap()
        })
        .collect();
    let caps = vec!["still".to_string(); clips.len()];
    write_clips(&statics, &caps, &clips, 0, 8.0).unwrap();
    let (report, _) = Run::execute(&c, "evaluate", |run| evaluate(run, &statics, &data)).unwrap();
    assert_eq!(report.get("motion_energy").unwrap(), 0.0);

    let one = tmp.path().join("one");
    write_clips(&one, &caps[..1], &clips[..1], 0, 8.0).unwrap();
    assert!(Run::execute(&c, "evaluate", |run| evaluate(run, &one, &data)).is_err());
}
