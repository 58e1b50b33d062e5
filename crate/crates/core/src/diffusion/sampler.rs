use candle_core::{DType, Tensor};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::objective::{gaussian_like, NoisePredictor};
use super::{DiffusionError, DiffusionSchedule, Result};
use crate::video::{VideoArray, VideoDims};
use crate::video_model::{ForwardOptions, VideoDenoiser};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SampleConfig {
    pub steps: usize,
    pub guidance_scale: f64,
    pub seed: u64,
    pub domain_id: usize,
    /// Clamp each step's clean-signal estimate to the data range.
    pub clip_denoised: bool,
}

impl Default for SampleConfig {
    fn default() -> Self {
        Self {
            steps: 25,
            guidance_scale: 3.0,
            seed: 0,
            domain_id: 0,
            clip_denoised: true,
        }
    }
}

impl SampleConfig {
    pub fn validate(&self, sched: &DiffusionSchedule) -> Result<()> {
        if self.steps == 0 || self.steps > sched.steps() {
            return Err(DiffusionError::Config(format!(
                "sample.steps must lie in [1, {}], got {}",
                sched.steps(),
                self.steps
            )));
        }
        if !(self.guidance_scale >= 0.0 && self.guidance_scale.is_finite()) {
            return Err(DiffusionError::Config("sample.guidance_scale must be >= 0".into()));
        }
        Ok(())
    }
}

/// Evenly spaced timesteps from `T` down to the first step, highest first.
pub fn sampling_timesteps(total: usize, steps: usize) -> Vec<usize> {
    (0..steps)
        .map(|i| ((total * (steps - i)) as f64 / steps as f64).round() as usize)
        .map(|t| t.max(1))
        .collect()
}

/// Deterministic DDIM sampling from a seeded standard-normal start.
///
/// `cond` is `[batch, tokens, dim]`; the unconditional branch uses an
/// all-zero condition of the same shape and the two predictions mix as
/// `eps_u + s * (eps_c - eps_u)`.
pub fn sample_with(
    model: &dyn NoisePredictor,
    dims: VideoDims,
    cond: &Tensor,
    sconf: &SampleConfig,
    sched: &DiffusionSchedule,
    temporal: bool,
    dtype: DType,
) -> Result<VideoArray> {
    sconf.validate(sched)?;
    let mut rng = ChaCha8Rng::seed_from_u64(sconf.seed);
    let shape = VideoArray::zeros(dims, dtype, cond.device())?;
    let mut x = gaussian_like(&shape, &mut rng)?;
    let cond = cond.to_dtype(dtype)?;
    let uncond = cond.zeros_like()?;
    let opts = ForwardOptions {
        temporal,
        ..ForwardOptions::spatial()
    };
    let ts = sampling_timesteps(sched.steps(), sconf.steps);
    let s = sconf.guidance_scale;
    for (i, &t) in ts.iter().enumerate() {
        let t_prev = ts.get(i + 1).copied().unwrap_or(0);
        let tb = vec![t; dims.batch];
        let eps_u = model.predict_noise(&x, &tb, &uncond, sconf.domain_id, opts)?;
        let eps = if s == 0.0 {
            eps_u.into_tensor()
        } else {
            let eps_c = model.predict_noise(&x, &tb, &cond, sconf.domain_id, opts)?;
            let delta = (eps_c.tensor() - eps_u.tensor())?;
            (eps_u.tensor() + (delta * s)?)?
        };
        let (ab, ab_prev) = (sched.alpha_bar(t), sched.alpha_bar(t_prev));
        let xt = x.tensor();
        let mut x0 = ((xt - (&eps * (1.0 - ab).sqrt())?)? / ab.sqrt())?;
        let mut eps = eps;
        if sconf.clip_denoised {
            x0 = x0.clamp(-1.0, 1.0)?;
            eps = ((xt - (&x0 * ab.sqrt())?)? / (1.0 - ab).sqrt())?;
        }
        let next = ((&x0 * ab_prev.sqrt())? + (eps * (1.0 - ab_prev).sqrt())?)?;
        x = VideoArray::new(next)?;
        if !x.all_finite()? {
            return Err(DiffusionError::NonFinite {
                what: "sampler state".into(),
                step: Some(i + 1),
            });
        }
    }
    Ok(x)
}

/// Samples one clip per condition row with the model's configured shape.
/// Requires temporal layers.
pub fn sample(model: &VideoDenoiser, cond: &Tensor, sconf: &SampleConfig, sched: &DiffusionSchedule) -> Result<VideoArray> {
    if !model.has_temporal() {
        return Err(DiffusionError::StageOrder(
            "sampling clips needs temporal layers; train TEMPORAL_TRAIN first".into(),
        ));
    }
    let c = model.config();
    let dims = VideoDims {
        batch: cond.dims()[0],
        frames: c.frames,
        channels: c.in_channels,
        height: c.height,
        width: c.width,
    };
    sample_with(model, dims, cond, sconf, sched, true, model.dtype())
}
