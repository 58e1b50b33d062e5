use std::collections::BTreeMap;
use std::io::Write;

use candle_core::Tensor;
use candle_nn::{AdamW, Optimizer, ParamsAdamW};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::json;

use super::data::{Augment, ClipDataset};
use super::objective::training_loss;
use super::stage::{trainable_set, StageSelection, TrainStage};
use super::{DiffusionError, DiffusionSchedule, Result};
use crate::video_model::{ForwardOptions, GroupSet, ParamGroup, TextEncoder, VideoDenoiser};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub stage: TrainStage,
    pub steps: usize,
    pub batch: usize,
    pub learning_rate: f64,
    pub seed: u64,
    pub ema_decay: f64,
    /// Probability of replacing a caption with the empty condition.
    pub caption_dropout: f64,
    pub random_crop: bool,
    pub random_flip: bool,
    /// Width of the moving-average window used for smoothed losses.
    pub smoothing_window: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            stage: TrainStage::SpatialFinetune,
            steps: 200,
            batch: 4,
            learning_rate: 2e-3,
            seed: 0,
            ema_decay: 0.999,
            caption_dropout: 0.1,
            random_crop: true,
            random_flip: true,
            smoothing_window: 25,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(DiffusionError::Config(m.to_string()));
        if self.steps == 0 {
            return bad("train.steps must be at least 1");
        }
        if self.batch == 0 {
            return bad("train.batch must be at least 1");
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("train.learning_rate must be positive");
        }
        if !(self.ema_decay > 0.0 && self.ema_decay < 1.0) {
            return bad("train.ema_decay must lie in (0, 1)");
        }
        if !(0.0..=1.0).contains(&self.caption_dropout) {
            return bad("train.caption_dropout must lie in [0, 1]");
        }
        if self.smoothing_window == 0 {
            return bad("train.smoothing_window must be at least 1");
        }
        Ok(())
    }

    fn augment(&self) -> Augment {
        Augment {
            random_crop: self.random_crop,
            random_flip: self.random_flip,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct TrainReport {
    pub stage: TrainStage,
    pub losses: Vec<f64>,
    /// Domain each step's batch was evaluated with.
    pub step_domains: Vec<usize>,
    pub initial_smoothed_loss: f64,
    pub final_smoothed_loss: f64,
    pub trained_groups: Vec<ParamGroup>,
    /// Parameters whose bytes changed, counted per group.
    pub changed: BTreeMap<ParamGroup, usize>,
    pub frozen_hashes_before: BTreeMap<ParamGroup, String>,
    pub frozen_hashes_after: BTreeMap<ParamGroup, String>,
    #[serde(skip)]
    pub ema: BTreeMap<String, Tensor>,
}

impl TrainReport {
    pub fn frozen_unchanged(&self) -> bool {
        self.frozen_hashes_before == self.frozen_hashes_after
    }

    /// Groups with at least one changed parameter.
    pub fn changed_groups(&self) -> GroupSet {
        self.changed
            .iter()
            .filter(|(_, &n)| n > 0)
            .fold(GroupSet::NONE, |s, (g, _)| s.with(*g))
    }

    pub fn loss_reduction(&self) -> f64 {
        1.0 - self.final_smoothed_loss / self.initial_smoothed_loss
    }
}

/// Mean of the first and the last `window` values.
pub fn smoothed_endpoints(losses: &[f64], window: usize) -> (f64, f64) {
    let w = window.min(losses.len()).max(1);
    let mean = |s: &[f64]| s.iter().sum::<f64>() / s.len().max(1) as f64;
    (mean(&losses[..w.min(losses.len())]), mean(&losses[losses.len().saturating_sub(w)..]))
}

/// Runs one training stage on `model` in place.
///
/// Only the stage's parameter groups are handed to the optimizer and tracked
/// by autodiff. Batches cycle through the dataset's domains round-robin, one
/// domain per batch, unless the stage pins a domain. One JSON object per step
/// goes to `metrics`, followed by a census of changed parameters.
pub fn train(
    model: &mut VideoDenoiser,
    dataset: &ClipDataset,
    encoder: &dyn TextEncoder,
    sched: &DiffusionSchedule,
    cfg: &TrainConfig,
    mut metrics: Option<&mut dyn Write>,
) -> Result<TrainReport> {
    cfg.validate()?;
    if dataset.is_empty() {
        return Err(DiffusionError::EmptyDataset);
    }
    let selection = trainable_set(model, cfg.stage)?;
    let StageSelection { groups, temporal, pinned_domain, .. } = selection;
    let mc = model.config().clone();
    let frames = if temporal { mc.frames } else { 1 };
    let domains = dataset.domains();
    if let Some(bad) = domains.iter().find(|&&d| d >= mc.n_domains) {
        return Err(DiffusionError::Dataset(format!(
            "dataset domain {bad} exceeds the model's {} domains",
            mc.n_domains
        )));
    }

    let frozen: Vec<ParamGroup> = ParamGroup::ALL.into_iter().filter(|g| !groups.contains(*g)).collect();
    let hashes = |m: &VideoDenoiser| -> Result<BTreeMap<ParamGroup, String>> {
        frozen.iter().map(|&g| Ok((g, m.params().group_hash(g)?))).collect()
    };
    let frozen_hashes_before = hashes(model)?;
    let snapshot: Vec<(String, ParamGroup, Tensor)> = model
        .params()
        .iter()
        .map(|p| Ok((p.name().to_string(), p.group(), p.value().copy()?)))
        .collect::<Result<_>>()?;

    let selected = model.params().selection(groups);
    let vars = selected.iter().map(|p| p.var().clone()).collect();
    let mut opt = AdamW::new(
        vars,
        ParamsAdamW {
            lr: cfg.learning_rate,
            weight_decay: 0.0,
            ..Default::default()
        },
    )?;
    let mut ema: BTreeMap<String, Tensor> = selected
        .iter()
        .map(|p| Ok((p.name().to_string(), p.value().copy()?)))
        .collect::<Result<_>>()?;

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let opts = ForwardOptions {
        temporal,
        trainable: groups,
    };
    let mut losses = Vec::with_capacity(cfg.steps);
    let mut step_domains = Vec::with_capacity(cfg.steps);
    for step in 0..cfg.steps {
        let source = domains[step % domains.len()];
        let batch = dataset.sample_batch(source, cfg.batch, frames, mc.height, mc.width, cfg.augment(), &mut rng)?;
        let domain = pinned_domain.unwrap_or(batch.domain);
        let texts: Vec<&str> = batch
            .captions
            .iter()
            .map(|c| if rng.random_bool(cfg.caption_dropout) { "" } else { c.as_str() })
            .collect();
        let cond = encoder.encode_batch(&texts)?;
        let loss = training_loss(model, &batch.video, &cond, domain, sched, &mut rng, opts).map_err(|e| match e {
            DiffusionError::NonFinite { what, .. } => DiffusionError::Divergence {
                stage: cfg.stage,
                step: step + 1,
                detail: what,
            },
            other => other,
        })?;
        let value = loss.to_dtype(candle_core::DType::F64)?.to_scalar::<f64>()?;
        opt.backward_step(&loss)?;

        let decay = cfg.ema_decay.min((1.0 + step as f64) / (10.0 + step as f64));
        for p in &selected {
            let avg = ema.get_mut(p.name()).expect("ema entry per trained parameter");
            *avg = ((&*avg * decay)? + (p.value() * (1.0 - decay))?)?;
        }

        losses.push(value);
        step_domains.push(domain);
        if let Some(w) = metrics.as_deref_mut() {
            let line = json!({
                "step": step + 1,
                "stage": cfg.stage,
                "loss": value,
                "learning_rate": cfg.learning_rate,
                "domain": domain,
            });
            writeln!(w, "{line}")?;
        }
        log::debug!("{} step {} loss {value:.5}", cfg.stage, step + 1);
    }

    let mut changed: BTreeMap<ParamGroup, usize> = ParamGroup::ALL.into_iter().map(|g| (g, 0)).collect();
    for (name, group, before) in &snapshot {
        let now = model.params().get(name).expect("parameter set is fixed during training").value();
        let bits = |t: &Tensor| -> Result<Vec<u64>> {
            let v = t.to_dtype(candle_core::DType::F64)?.flatten_all()?.to_vec1::<f64>()?;
            Ok(v.into_iter().map(f64::to_bits).collect())
        };
        if bits(&now)? != bits(before)? {
            *changed.entry(*group).or_default() += 1;
        }
    }
    let frozen_hashes_after = hashes(model)?;
    model.record_stage(cfg.stage.as_str());

    let (initial, last) = smoothed_endpoints(&losses, cfg.smoothing_window);
    let report = TrainReport {
        stage: cfg.stage,
        losses,
        step_domains,
        initial_smoothed_loss: initial,
        final_smoothed_loss: last,
        trained_groups: groups.groups().collect(),
        changed,
        frozen_hashes_before,
        frozen_hashes_after,
        ema,
    };
    if let Some(w) = metrics.as_deref_mut() {
        let line = json!({
            "stage": cfg.stage,
            "census": report.changed,
            "trained_groups": report.trained_groups,
            "frozen_unchanged": report.frozen_unchanged(),
            "initial_smoothed_loss": initial,
            "final_smoothed_loss": last,
        });
        writeln!(w, "{line}")?;
    }
    Ok(report)
}
