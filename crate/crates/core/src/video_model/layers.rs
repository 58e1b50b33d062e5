use candle_core::{DType, Device, Tensor};

use super::ops;
use super::params::{GroupSet, Param, ParamGroup, ParamInit, ParamStore};
use super::{ModelError, Result};

#[derive(Debug, Clone)]
pub(crate) struct Linear {
    w: Param,
    b: Param,
}

impl Linear {
    pub fn new(init: &mut ParamInit, name: &str, fan_in: usize, fan_out: usize) -> Result<Self> {
        init.scope(name, |i| {
            Ok(Self {
                w: i.normal("w", &[fan_in, fan_out], (fan_in as f64).powf(-0.5))?,
                b: i.zeros("b", &[fan_out])?,
            })
        })
    }

    pub fn zeroed(init: &mut ParamInit, name: &str, fan_in: usize, fan_out: usize) -> Result<Self> {
        init.scope(name, |i| {
            Ok(Self {
                w: i.zeros("w", &[fan_in, fan_out])?,
                b: i.zeros("b", &[fan_out])?,
            })
        })
    }

    pub fn forward(&self, x: &Tensor, tr: GroupSet) -> Result<Tensor> {
        ops::linear(x, &self.w.get(tr), &self.b.get(tr))
    }
}

#[derive(Debug, Clone)]
pub(crate) struct Conv3 {
    w: Param,
    b: Param,
}

impl Conv3 {
    pub fn new(init: &mut ParamInit, name: &str, cin: usize, cout: usize, zero: bool) -> Result<Self> {
        init.scope(name, |i| {
            let w = if zero {
                i.zeros("w", &[9 * cin, cout])?
            } else {
                i.normal("w", &[9 * cin, cout], (9.0 * cin as f64).powf(-0.5))?
            };
            Ok(Self {
                w,
                b: i.zeros("b", &[cout])?,
            })
        })
    }

    pub fn forward(&self, x: &Tensor, tr: GroupSet) -> Result<Tensor> {
        ops::conv3x3(x, &self.w.get(tr), &self.b.get(tr))
    }
}

#[derive(Debug, Clone)]
pub(crate) struct Conv1 {
    w: Param,
    b: Param,
}

impl Conv1 {
    pub fn new(init: &mut ParamInit, name: &str, cin: usize, cout: usize) -> Result<Self> {
        init.scope(name, |i| {
            Ok(Self {
                w: i.normal("w", &[cin, cout], (cin as f64).powf(-0.5))?,
                b: i.zeros("b", &[cout])?,
            })
        })
    }

    pub fn forward(&self, x: &Tensor, tr: GroupSet) -> Result<Tensor> {
        ops::conv1x1(x, &self.w.get(tr), &self.b.get(tr))
    }
}

/// Kernel-3 convolution along the frame axis with channel mixing.
#[derive(Debug, Clone)]
pub(crate) struct FrameConv {
    w: Param,
    b: Param,
}

impl FrameConv {
    pub fn new(init: &mut ParamInit, name: &str, c: usize, zero: bool) -> Result<Self> {
        init.scope(name, |i| {
            let w = if zero {
                i.zeros("w", &[3 * c, c])?
            } else {
                i.normal("w", &[3 * c, c], (3.0 * c as f64).powf(-0.5))?
            };
            Ok(Self {
                w,
                b: i.zeros("b", &[c])?,
            })
        })
    }

    pub fn forward(&self, x: &Tensor, tr: GroupSet) -> Result<Tensor> {
        ops::conv1d_k3(x, &self.w.get(tr), &self.b.get(tr))
    }
}

/// Learnable per-channel scale and shift of a normalization layer.
#[derive(Debug, Clone)]
pub(crate) struct Affine {
    scale: Param,
    shift: Param,
}

impl Affine {
    pub fn new(init: &mut ParamInit, name: &str, c: usize) -> Result<Self> {
        init.scope(name, |i| {
            Ok(Self {
                scale: i.ones("scale", &[c])?,
                shift: i.zeros("shift", &[c])?,
            })
        })
    }

    pub fn forward(&self, x: &Tensor, channel_dim: usize, tr: GroupSet) -> Result<Tensor> {
        ops::channel_affine(x, &self.scale.get(tr), &self.shift.get(tr), channel_dim)
    }
}

/// One scaler/shifter pair per data domain, `H = X * alpha_i + beta_i`.
#[derive(Debug, Clone)]
pub struct DomainNormParams {
    alpha: Param,
    beta: Param,
}

impl DomainNormParams {
    pub(crate) fn new(init: &mut ParamInit, name: &str, n_domains: usize, c: usize) -> Result<Self> {
        init.scope(name, |i| {
            Ok(Self {
                alpha: i.ones("alpha", &[n_domains, c])?,
                beta: i.zeros("beta", &[n_domains, c])?,
            })
        })
    }

    /// Identity parameters (`alpha = 1`, `beta = 0`) outside any model, tagged
    /// ADAPTER.
    pub fn standalone(n_domains: usize, c: usize, dtype: DType, device: &Device) -> Result<Self> {
        let mut store = ParamStore::default();
        let mut init = ParamInit::new(&mut store, ParamGroup::Adapter, 0, dtype, device);
        Self::new(&mut init, "domain_norm", n_domains, c)
    }

    pub fn n_domains(&self) -> usize {
        self.alpha.var().dims()[0]
    }

    pub fn channels(&self) -> usize {
        self.alpha.var().dims()[1]
    }

    pub fn alpha(&self) -> &Param {
        &self.alpha
    }

    pub fn beta(&self) -> &Param {
        &self.beta
    }

    /// Applies domain `domain_id`'s affine to `x`, whose channels sit on
    /// axis `channel_dim`.
    pub fn apply(&self, x: &Tensor, channel_dim: usize, domain_id: usize, tr: GroupSet) -> Result<Tensor> {
        if domain_id >= self.n_domains() {
            return Err(ModelError::UnknownDomain {
                domain: domain_id,
                n_domains: self.n_domains(),
            });
        }
        let alpha = self.alpha.get(tr).narrow(0, domain_id, 1)?.squeeze(0)?;
        let beta = self.beta.get(tr).narrow(0, domain_id, 1)?.squeeze(0)?;
        ops::channel_affine(x, &alpha, &beta, channel_dim)
    }
}

/// Domain-aware normalization as a free function.
pub fn domain_norm(
    x: &Tensor,
    channel_dim: usize,
    domain_id: usize,
    params: &DomainNormParams,
    tr: GroupSet,
) -> Result<Tensor> {
    params.apply(x, channel_dim, domain_id, tr)
}

#[derive(Debug, Clone)]
enum FirstNorm {
    Plain(Affine),
    Domain(DomainNormParams),
}

/// Spatial residual block:
/// `norm -> silu -> conv -> +time -> norm -> silu -> conv`, plus skip.
///
/// The adapter variant swaps the first norm's affine for per-domain
/// parameters and zero-initializes the last convolution.
#[derive(Debug, Clone)]
pub(crate) struct ResBlock {
    groups: usize,
    norm1: FirstNorm,
    conv1: Conv3,
    time: Linear,
    norm2: Affine,
    conv2: Conv3,
    skip: Option<Conv1>,
}

impl ResBlock {
    pub fn new(init: &mut ParamInit, cin: usize, cout: usize, temb: usize, groups: usize) -> Result<Self> {
        Ok(Self {
            groups,
            norm1: FirstNorm::Plain(Affine::new(init, "norm1", cin)?),
            conv1: Conv3::new(init, "conv1", cin, cout, false)?,
            time: Linear::new(init, "time", temb, cout)?,
            norm2: Affine::new(init, "norm2", cout)?,
            conv2: Conv3::new(init, "conv2", cout, cout, false)?,
            skip: if cin != cout {
                Some(Conv1::new(init, "skip", cin, cout)?)
            } else {
                None
            },
        })
    }

    pub fn adapter(init: &mut ParamInit, c: usize, temb: usize, groups: usize, n_domains: usize) -> Result<Self> {
        Ok(Self {
            groups,
            norm1: FirstNorm::Domain(DomainNormParams::new(init, "domain_norm", n_domains, c)?),
            conv1: Conv3::new(init, "conv1", c, c, false)?,
            time: Linear::new(init, "time", temb, c)?,
            norm2: Affine::new(init, "norm2", c)?,
            conv2: Conv3::new(init, "conv2", c, c, true)?,
            skip: None,
        })
    }

    pub fn domain_params(&self) -> Option<&DomainNormParams> {
        match &self.norm1 {
            FirstNorm::Domain(p) => Some(p),
            FirstNorm::Plain(_) => None,
        }
    }

    /// `x` is `[n, c, h, w]`, `temb` is `[n, temb]`.
    pub fn forward(&self, x: &Tensor, temb: &Tensor, domain_id: usize, tr: GroupSet) -> Result<Tensor> {
        let h = ops::group_norm(x, self.groups)?;
        let h = match &self.norm1 {
            FirstNorm::Plain(a) => a.forward(&h, 1, tr)?,
            FirstNorm::Domain(p) => p.apply(&h, 1, domain_id, tr)?,
        };
        let h = self.conv1.forward(&h.silu()?, tr)?;
        let t = self.time.forward(&temb.silu()?, tr)?.unsqueeze(2)?.unsqueeze(3)?;
        let h = h.broadcast_add(&t)?;
        let h = self.norm2.forward(&ops::group_norm(&h, self.groups)?, 1, tr)?;
        let h = self.conv2.forward(&h.silu()?, tr)?;
        let skip = match &self.skip {
            Some(conv) => conv.forward(x, tr)?,
            None => x.clone(),
        };
        Ok((skip + h)?)
    }
}

#[derive(Debug, Clone)]
struct SelfAttn {
    q: Linear,
    k: Linear,
    v: Linear,
    out: Linear,
}

impl SelfAttn {
    fn new(init: &mut ParamInit, name: &str, c: usize, ctx: usize) -> Result<Self> {
        init.scope(name, |i| {
            Ok(Self {
                q: Linear::new(i, "q", c, c)?,
                k: Linear::new(i, "k", ctx, c)?,
                v: Linear::new(i, "v", ctx, c)?,
                out: Linear::new(i, "out", c, c)?,
            })
        })
    }

    fn forward(&self, x: &Tensor, ctx: &Tensor, heads: usize, tr: GroupSet) -> Result<Tensor> {
        let q = self.q.forward(x, tr)?;
        let k = self.k.forward(ctx, tr)?;
        let v = self.v.forward(ctx, tr)?;
        self.out.forward(&ops::attention(&q, &k, &v, heads)?, tr)
    }
}

#[derive(Debug, Clone)]
struct FeedForward {
    up: Linear,
    down: Linear,
}

impl FeedForward {
    fn new(init: &mut ParamInit, c: usize) -> Result<Self> {
        init.scope("ff", |i| {
            Ok(Self {
                up: Linear::new(i, "up", c, 2 * c)?,
                down: Linear::new(i, "down", 2 * c, c)?,
            })
        })
    }

    fn forward(&self, x: &Tensor, tr: GroupSet) -> Result<Tensor> {
        self.down.forward(&self.up.forward(x, tr)?.silu()?, tr)
    }
}

/// Spatial transformer over the `h * w` tokens of each frame: self-attention,
/// cross-attention to the text condition, feed-forward, then a residual
/// output projection.
#[derive(Debug, Clone)]
pub(crate) struct SpatialAttention {
    heads: usize,
    groups: usize,
    norm: Affine,
    proj_in: Linear,
    self_attn: SelfAttn,
    cross_attn: SelfAttn,
    ff: FeedForward,
    proj_out: Linear,
}

impl SpatialAttention {
    pub fn new(init: &mut ParamInit, c: usize, text_dim: usize, heads: usize, groups: usize, zero_out: bool) -> Result<Self> {
        Ok(Self {
            heads,
            groups,
            norm: Affine::new(init, "norm", c)?,
            proj_in: Linear::new(init, "proj_in", c, c)?,
            self_attn: SelfAttn::new(init, "self_attn", c, c)?,
            cross_attn: SelfAttn::new(init, "cross_attn", c, text_dim)?,
            ff: FeedForward::new(init, c)?,
            proj_out: if zero_out {
                Linear::zeroed(init, "proj_out", c, c)?
            } else {
                Linear::new(init, "proj_out", c, c)?
            },
        })
    }

    /// `x` is `[n, c, h, w]`, `ctx` is `[n, tokens, text_dim]`.
    pub fn forward(&self, x: &Tensor, ctx: &Tensor, tr: GroupSet) -> Result<Tensor> {
        let (n, c, h, w) = x.dims4()?;
        let t = self.norm.forward(&ops::group_norm(x, self.groups)?, 1, tr)?;
        let t = t.permute((0, 2, 3, 1))?.reshape((n, h * w, c))?;
        let t = self.proj_in.forward(&t, tr)?;
        let normed = ops::layer_norm(&t)?;
        let t = (&t + self.self_attn.forward(&normed, &normed, self.heads, tr)?)?;
        let t = (&t + self.cross_attn.forward(&ops::layer_norm(&t)?, ctx, self.heads, tr)?)?;
        let t = (&t + self.ff.forward(&ops::layer_norm(&t)?, tr)?)?;
        let t = self.proj_out.forward(&t, tr)?;
        let t = t.reshape((n, h, w, c))?.permute((0, 3, 1, 2))?;
        Ok((x + t)?)
    }
}

/// Residual block of kernel-3 frame convolutions applied at every spatial
/// location. Identity at initialization.
#[derive(Debug, Clone)]
pub(crate) struct TemporalResBlock {
    groups: usize,
    norm1: Affine,
    conv1: FrameConv,
    norm2: Affine,
    conv2: FrameConv,
}

impl TemporalResBlock {
    pub fn new(init: &mut ParamInit, c: usize, groups: usize) -> Result<Self> {
        Ok(Self {
            groups,
            norm1: Affine::new(init, "norm1", c)?,
            conv1: FrameConv::new(init, "conv1", c, false)?,
            norm2: Affine::new(init, "norm2", c)?,
            conv2: FrameConv::new(init, "conv2", c, true)?,
        })
    }

    /// `x` is `[b * frames, c, h, w]`.
    pub fn forward(&self, x: &Tensor, frames: usize, tr: GroupSet) -> Result<Tensor> {
        let (bf, _, h, w) = x.dims4()?;
        let seq = ops::frames_to_sequences(x, frames)?;
        let y = self.norm1.forward(&ops::group_norm(&seq, self.groups)?, 1, tr)?;
        let y = self.conv1.forward(&y.silu()?, tr)?;
        let y = self.norm2.forward(&ops::group_norm(&y, self.groups)?, 1, tr)?;
        let y = self.conv2.forward(&y.silu()?, tr)?;
        let y = ops::sequences_to_frames(&y, bf / frames, h, w)?;
        Ok((x + y)?)
    }
}

/// Self-attention across frames at each spatial location, with sinusoidal
/// frame positions added to the branch input. Identity at initialization.
#[derive(Debug, Clone)]
pub(crate) struct TemporalAttention {
    heads: usize,
    proj_in: Linear,
    self_attn: SelfAttn,
    ff: FeedForward,
    proj_out: Linear,
}

impl TemporalAttention {
    pub fn new(init: &mut ParamInit, c: usize, heads: usize) -> Result<Self> {
        Ok(Self {
            heads,
            proj_in: Linear::new(init, "proj_in", c, c)?,
            self_attn: SelfAttn::new(init, "self_attn", c, c)?,
            ff: FeedForward::new(init, c)?,
            proj_out: Linear::zeroed(init, "proj_out", c, c)?,
        })
    }

    pub fn forward(&self, x: &Tensor, frames: usize, tr: GroupSet) -> Result<Tensor> {
        let (bf, c, h, w) = x.dims4()?;
        let b = bf / frames;
        // [b*h*w, frames, c]
        let seq = ops::frames_to_sequences(x, frames)?.transpose(1, 2)?;
        let positions: Vec<usize> = (0..frames).collect();
        let pos = ops::sinusoidal_embedding(&positions, c, x.device())?.to_dtype(x.dtype())?;
        let t = seq.broadcast_add(&pos)?;
        let t = self.proj_in.forward(&ops::layer_norm(&t)?, tr)?;
        let normed = ops::layer_norm(&t)?;
        let t = (&t + self.self_attn.forward(&normed, &normed, self.heads, tr)?)?;
        let t = (&t + self.ff.forward(&ops::layer_norm(&t)?, tr)?)?;
        let t = self.proj_out.forward(&t, tr)?;
        let y = ops::sequences_to_frames(&t.transpose(1, 2)?.contiguous()?, b, h, w)?;
        Ok((x + y)?)
    }
}
