use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{AudioAsset, AudioError, AudioIndex, AudioKind, IndexField, Result, RetrievalResult, ScoredAsset, TextEmbedder, VideoEmbedder};
use crate::script_gen::{SceneScript, ToneLabel};
use crate::video::VideoArray;

/// Sound effects for one scene, scored as
/// `(1 - lambda) * cos(text, caption) + lambda * cos(video, proxy)`.
#[allow(clippy::too_many_arguments)]
pub fn retrieve_sfx(
    scene: &SceneScript,
    clip: &VideoArray,
    index: &AudioIndex,
    k: usize,
    lambda: f64,
    text: &dyn TextEmbedder,
    video: &dyn VideoEmbedder,
) -> Result<RetrievalResult> {
    if !(0.0..=1.0).contains(&lambda) {
        return Err(AudioError::InvalidQuery(format!("lambda {lambda} outside [0, 1]")));
    }
    if index.count(AudioKind::Sfx) == 0 {
        return Err(AudioError::EmptyCatalog(AudioKind::Sfx));
    }
    let tq = text.embed_text(&scene.text)?;
    let vq = video.embed_video(clip)?;
    for q in [&tq, &vq] {
        if q.dim() != index.dim() {
            return Err(AudioError::DimMismatch {
                expected: index.dim(),
                got: q.dim(),
            });
        }
    }
    let mut result = index.scored(
        Some(AudioKind::Sfx),
        |e| {
            let ts = tq.cosine(&e.caption_vec);
            let vs = vq.cosine(&e.proxy_vec);
            ScoredAsset {
                asset_id: e.asset.asset_id.clone(),
                score: (1.0 - lambda) * ts + lambda * vs,
                text_score: Some(ts),
                video_score: Some(vs),
            }
        },
        k,
    )?;
    result.lambda = Some(lambda);
    Ok(result)
}

/// One background track for the whole movie: a seeded pick among tracks
/// tagged with the tone, or the closest caption to the tone word when none is.
pub fn select_music(tone: &ToneLabel, index: &AudioIndex, seed: u64, text: &dyn TextEmbedder) -> Result<AudioAsset> {
    let mut tagged: Vec<&AudioAsset> = index
        .entries()
        .iter()
        .map(|e| &e.asset)
        .filter(|a| a.kind == AudioKind::Music && a.tone == Some(tone.category))
        .collect();
    if index.count(AudioKind::Music) == 0 {
        return Err(AudioError::EmptyCatalog(AudioKind::Music));
    }
    if !tagged.is_empty() {
        tagged.sort_by(|a, b| a.asset_id.cmp(&b.asset_id));
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        return Ok(tagged[rng.random_range(0..tagged.len())].clone());
    }
    let q = text.embed_text(tone.category.as_str())?;
    let best = index.search(&q, 1, Some(AudioKind::Music), IndexField::Caption)?;
    let id = &best.top().expect("music present").asset_id;
    Ok(index.get(id).expect("hit comes from the index").asset.clone())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::audio_retrieval::{EmbeddingVector, HashedTextEmbedder, StatsVideoEmbedder};
    use crate::script_gen::ToneCategory;
    use crate::video::VideoDims;
    use candle_core::Device;

    fn scene(text: &str) -> SceneScript {
        SceneScript {
            index: 0,
            text: text.into(),
            duration_seconds: 1.0,
        }
    }

    fn clip() -> VideoArray {
        let dims = VideoDims {
            batch: 1,
            frames: 3,
            channels: 3,
            height: 4,
            width: 8,
        };
        let v = (0..dims.numel()).map(|i| ((i % 7) as f32 - 3.0) / 3.0).collect();
        VideoArray::from_vec(v, dims, &Device::Cpu).unwrap()
    }

    fn sfx(id: &str, caption: &str) -> AudioAsset {
        AudioAsset {
            asset_id: id.into(),
            path: format!("{id}.wav").into(),
            caption: caption.into(),
            kind: AudioKind::Sfx,
            tone: None,
            duration_seconds: 2.0,
        }
    }

    fn music(id: &str, caption: &str, tone: ToneCategory) -> AudioAsset {
        AudioAsset {
            kind: AudioKind::Music,
            tone: Some(tone),
            ..sfx(id, caption)
        }
    }

    /// Five SFX with hand-chosen 2-d caption and proxy vectors.
    fn fixture() -> AudioIndex {
        let mut idx = AudioIndex::new(2);
        let rows = [(1.0, 0.0, 0.0, 1.0), (0.0, 1.0, 1.0, 0.0), (1.0, 1.0, 1.0, -1.0), (-1.0, 0.0, 1.0, 1.0), (3.0, 4.0, 0.0, -2.0)];
        for (i, (a, b, c, d)) in rows.iter().enumerate() {
            let cv = EmbeddingVector::new(vec![*a, *b]).unwrap();
            let pv = EmbeddingVector::new(vec![*c, *d]).unwrap();
            idx.add(sfx(&format!("s{i}"), "x"), cv, pv).unwrap();
        }
        idx
    }

    struct Fixed(Vec<f64>);

    impl TextEmbedder for Fixed {
        fn dim(&self) -> usize {
            self.0.len()
        }
        fn embed_text(&self, _: &str) -> Result<EmbeddingVector> {
            EmbeddingVector::new(self.0.clone())
        }
    }

    impl VideoEmbedder for Fixed {
        fn dim(&self) -> usize {
            self.0.len()
        }
        fn embed_video(&self, _: &VideoArray) -> Result<EmbeddingVector> {
            EmbeddingVector::new(self.0.clone())
        }
    }

    #[test]
    fn fused_scores_match_hand_computation() {
        let idx = fixture();
        let text = Fixed(vec![1.0, 0.0]);
        let video = Fixed(vec![0.0, 1.0]);
        let r = retrieve_sfx(&scene("x"), &clip(), &idx, 5, 0.5, &text, &video).unwrap();
        // cos with [1,0] is x / |v|, cos with [0,1] is y / |v|.
        let s = 0.5f64.sqrt();
        let want = [
            ("s0", 0.5 * 1.0 + 0.5 * 1.0),
            ("s1", 0.5 * 0.0 + 0.5 * 0.0),
            ("s2", 0.5 * s + 0.5 * -s),
            ("s3", 0.5 * -1.0 + 0.5 * s),
            ("s4", 0.5 * 0.6 + 0.5 * -1.0),
        ];
        for (id, score) in want {
            let hit = r.hits.iter().find(|h| h.asset_id == id).unwrap();
            assert!((hit.score - score).abs() < 1e-6, "{id}");
        }
        assert!(r.hits.windows(2).all(|w| w[0].score >= w[1].score));
        assert_eq!(r.lambda, Some(0.5));
    }

    #[test]
    fn degenerate_weights_reduce_to_single_routes() {
        let t = HashedTextEmbedder::new(64);
        let v = StatsVideoEmbedder::new(64, 1);
        let mut idx = AudioIndex::new(64);
        for (i, cap) in ["engine roar", "crowd cheering", "wind howling", "splash of water", "horse gallop"].iter().enumerate() {
            let cv = t.embed_text(cap).unwrap();
            let pv = v.embed_video(&clip()).unwrap();
            let pv = EmbeddingVector::new(pv.values().iter().enumerate().map(|(j, x)| x + (i * j) as f64 * 0.01).collect()).unwrap();
            idx.add(sfx(&format!("s{i}"), cap), cv, pv).unwrap();
        }
        let sc = scene("the crowd is cheering");
        let text_only = idx.search(&t.embed_text(&sc.text).unwrap(), 5, Some(AudioKind::Sfx), IndexField::Caption).unwrap();
        let video_only = idx.search(&v.embed_video(&clip()).unwrap(), 5, Some(AudioKind::Sfx), IndexField::Proxy).unwrap();
        let r0 = retrieve_sfx(&sc, &clip(), &idx, 5, 0.0, &t, &v).unwrap();
        let r1 = retrieve_sfx(&sc, &clip(), &idx, 5, 1.0, &t, &v).unwrap();
        assert_eq!(r0.ids(), text_only.ids());
        assert_eq!(r1.ids(), video_only.ids());
        // Fused scores are convex combinations of the route scores.
        let r = retrieve_sfx(&sc, &clip(), &idx, 5, 0.3, &t, &v).unwrap();
        for h in &r.hits {
            let want = 0.7 * h.text_score.unwrap() + 0.3 * h.video_score.unwrap();
            assert!((h.score - want).abs() < 1e-15);
        }
        assert!(retrieve_sfx(&sc, &clip(), &idx, 5, 1.5, &t, &v).is_err());
        assert!(matches!(
            retrieve_sfx(&sc, &clip(), &AudioIndex::new(64), 1, 0.5, &t, &v),
            Err(AudioError::EmptyCatalog(AudioKind::Sfx))
        ));
    }

    fn music_index(t: &HashedTextEmbedder) -> AudioIndex {
        let mut idx = AudioIndex::new(t.dim());
        idx.add_asset(music("m_epic", "epic orchestral drums", ToneCategory::Epic), t, None).unwrap();
        idx.add_asset(music("m_joy1", "bright joyful ukulele", ToneCategory::Joyful), t, None).unwrap();
        idx.add_asset(music("m_joy2", "happy whistling tune", ToneCategory::Joyful), t, None).unwrap();
        idx.add_asset(music("m_dark", "low ominous drone", ToneCategory::Mysterious), t, None).unwrap();
        idx.add_asset(sfx("s_wind", "wind"), t, None).unwrap();
        idx
    }

    fn label(category: ToneCategory) -> ToneLabel {
        ToneLabel { category, confidence: 1.0 }
    }

    #[test]
    fn music_selection() {
        let t = HashedTextEmbedder::new(64);
        let idx = music_index(&t);
        assert_eq!(select_music(&label(ToneCategory::Epic), &idx, 0, &t).unwrap().asset_id, "m_epic");
        let a = select_music(&label(ToneCategory::Joyful), &idx, 7, &t).unwrap();
        assert_eq!(a, select_music(&label(ToneCategory::Joyful), &idx, 7, &t).unwrap());
        assert!(a.asset_id.starts_with("m_joy"));
        let picks: std::collections::BTreeSet<String> = (0..32)
            .map(|s| select_music(&label(ToneCategory::Joyful), &idx, s, &t).unwrap().asset_id)
            .collect();
        assert_eq!(picks.len(), 2);
        // No ominous tag: the caption search finds the drone.
        let fb = select_music(&label(ToneCategory::Ominous), &idx, 0, &t).unwrap();
        assert_eq!(fb.kind, AudioKind::Music);
        assert_eq!(fb.asset_id, "m_dark");
        let mut only_sfx = AudioIndex::new(64);
        only_sfx.add_asset(sfx("s", "wind"), &t, None).unwrap();
        assert!(matches!(
            select_music(&label(ToneCategory::Epic), &only_sfx, 0, &t),
            Err(AudioError::EmptyCatalog(AudioKind::Music))
        ));
    }
}
