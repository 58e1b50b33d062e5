use candle_core::{DType, Device, Tensor};

use super::layers::{Affine, Conv3, DomainNormParams, Linear, ResBlock, SpatialAttention, TemporalAttention, TemporalResBlock};
use super::params::{GroupSet, ParamGroup, ParamInit, ParamStore};
use super::{ops, ModelConfig, ModelError, Result};
use crate::video::VideoArray;

const ADAPTER_SEED_SALT: u64 = 0x9E37_79B9_7F4A_7C15;
const TEMPORAL_SEED_SALT: u64 = 0xC2B2_AE3D_27D4_EB4F;

/// How a forward pass treats the frame axis and which groups it tracks for
/// gradients.
#[derive(Debug, Clone, Copy)]
pub struct ForwardOptions {
    /// When false, frames are independent images and temporal layers are skipped.
    pub temporal: bool,
    pub trainable: GroupSet,
}

impl ForwardOptions {
    pub fn spatial() -> Self {
        Self {
            temporal: false,
            trainable: GroupSet::NONE,
        }
    }

    pub fn video() -> Self {
        Self {
            temporal: true,
            trainable: GroupSet::NONE,
        }
    }

    pub fn training(mut self, groups: GroupSet) -> Self {
        self.trainable = groups;
        self
    }
}

#[derive(Debug, Clone)]
struct ResUnit {
    spatial: ResBlock,
    temporal: Option<TemporalResBlock>,
}

impl ResUnit {
    fn forward(&self, x: &Tensor, temb: &Tensor, cx: &Cx) -> Result<Tensor> {
        let h = self.spatial.forward(x, temb, cx.domain, cx.opts.trainable)?;
        match (&self.temporal, cx.opts.temporal) {
            (Some(t), true) => t.forward(&h, cx.frames, cx.opts.trainable),
            _ => Ok(h),
        }
    }
}

#[derive(Debug, Clone)]
struct AttnUnit {
    spatial: SpatialAttention,
    temporal: Option<TemporalAttention>,
}

impl AttnUnit {
    fn forward(&self, x: &Tensor, ctx: &Tensor, cx: &Cx) -> Result<Tensor> {
        let h = self.spatial.forward(x, ctx, cx.opts.trainable)?;
        match (&self.temporal, cx.opts.temporal) {
            (Some(t), true) => t.forward(&h, cx.frames, cx.opts.trainable),
            _ => Ok(h),
        }
    }
}

/// Domain-aware ResBlk followed by attention, inserted in front of a U-Net block.
#[derive(Debug, Clone)]
struct AdapterUnit {
    res: ResUnit,
    attn: AttnUnit,
}

impl AdapterUnit {
    fn forward(&self, x: &Tensor, temb: &Tensor, ctx: &Tensor, cx: &Cx) -> Result<Tensor> {
        let h = self.res.forward(x, temb, cx)?;
        self.attn.forward(&h, ctx, cx)
    }
}

#[derive(Debug, Clone)]
struct Block {
    adapter: Option<AdapterUnit>,
    res: ResUnit,
    attn: Option<AttnUnit>,
    resample: Option<Conv3>,
}

#[derive(Debug, Clone)]
struct MidBlock {
    res1: ResUnit,
    attn: AttnUnit,
    res2: ResUnit,
}

/// Per-call state threaded through the blocks.
struct Cx {
    frames: usize,
    domain: usize,
    opts: ForwardOptions,
}

/// Frozen per-frame image U-Net with optional spatial adapters and temporal
/// layers grafted on.
#[derive(Debug, Clone)]
pub struct VideoDenoiser {
    config: ModelConfig,
    seed: u64,
    dtype: DType,
    device: Device,
    store: ParamStore,
    time_in: Linear,
    time_out: Linear,
    conv_in: Conv3,
    down: Vec<Block>,
    mid: MidBlock,
    up: Vec<Block>,
    out_norm: Affine,
    conv_out: Conv3,
    history: Vec<String>,
}

fn res_unit(spatial: ResBlock) -> ResUnit {
    ResUnit {
        spatial,
        temporal: None,
    }
}

fn attn_unit(spatial: SpatialAttention) -> AttnUnit {
    AttnUnit {
        spatial,
        temporal: None,
    }
}

/// Builds the seeded per-frame image U-Net; every parameter is tagged BASE.
pub fn build_base_model(config: &ModelConfig, seed: u64) -> Result<VideoDenoiser> {
    VideoDenoiser::build(config, seed, DType::F32, &Device::Cpu)
}

/// Puts a domain-aware adapter unit in front of every down and up block.
pub fn insert_spatial_adapters(model: &mut VideoDenoiser) -> Result<()> {
    model.insert_spatial_adapters()
}

/// Adds a temporal ResBlk after every spatial ResBlk and a temporal attention
/// after every spatial attention.
pub fn insert_temporal_layers(model: &mut VideoDenoiser) -> Result<()> {
    model.insert_temporal_layers()
}

impl VideoDenoiser {
    pub fn build(config: &ModelConfig, seed: u64, dtype: DType, device: &Device) -> Result<Self> {
        config.validate()?;
        let c = config;
        let g = c.norm_groups;
        let temb = c.time_embed_dim;
        let levels = c.levels();
        let mut store = ParamStore::default();
        let mut init = ParamInit::new(&mut store, ParamGroup::Base, seed, dtype, device);
        let built = init.scope("base", |i| -> Result<_> {
            let time_in = Linear::new(i, "time_in", c.base_channels, temb)?;
            let time_out = Linear::new(i, "time_out", temb, temb)?;
            let conv_in = Conv3::new(i, "conv_in", c.in_channels, c.level_channels(0), false)?;
            let mut down = Vec::with_capacity(levels);
            for l in 0..levels {
                let cin = if l == 0 { c.level_channels(0) } else { c.level_channels(l - 1) };
                let ch = c.level_channels(l);
                down.push(i.scope(format!("down.{l}"), |i| -> Result<_> {
                    Ok(Block {
                        adapter: None,
                        res: res_unit(i.scope("res", |i| ResBlock::new(i, cin, ch, temb, g))?),
                        attn: if c.has_attention(l) {
                            Some(attn_unit(i.scope("attn", |i| {
                                SpatialAttention::new(i, ch, c.text_embed_dim, c.attn_heads, g, false)
                            })?))
                        } else {
                            None
                        },
                        resample: if l + 1 < levels {
                            Some(Conv3::new(i, "downsample", ch, ch, false)?)
                        } else {
                            None
                        },
                    })
                })?);
            }
            let ch = c.level_channels(levels - 1);
            let mid = i.scope("mid", |i| -> Result<_> {
                Ok(MidBlock {
                    res1: res_unit(i.scope("res1", |i| ResBlock::new(i, ch, ch, temb, g))?),
                    attn: attn_unit(i.scope("attn", |i| {
                        SpatialAttention::new(i, ch, c.text_embed_dim, c.attn_heads, g, false)
                    })?),
                    res2: res_unit(i.scope("res2", |i| ResBlock::new(i, ch, ch, temb, g))?),
                })
            })?;
            let mut up = Vec::with_capacity(levels);
            for l in 0..levels {
                let h_ch = if l + 1 == levels { c.level_channels(l) } else { c.level_channels(l + 1) };
                let ch = c.level_channels(l);
                up.push(i.scope(format!("up.{l}"), |i| -> Result<_> {
                    Ok(Block {
                        adapter: None,
                        res: res_unit(i.scope("res", |i| ResBlock::new(i, h_ch + ch, ch, temb, g))?),
                        attn: if c.has_attention(l) {
                            Some(attn_unit(i.scope("attn", |i| {
                                SpatialAttention::new(i, ch, c.text_embed_dim, c.attn_heads, g, false)
                            })?))
                        } else {
                            None
                        },
                        resample: if l > 0 {
                            Some(Conv3::new(i, "upsample", ch, ch, false)?)
                        } else {
                            None
                        },
                    })
                })?);
            }
            let out_norm = Affine::new(i, "out_norm", c.level_channels(0))?;
            let conv_out = Conv3::new(i, "conv_out", c.level_channels(0), c.in_channels, false)?;
            Ok((time_in, time_out, conv_in, down, mid, up, out_norm, conv_out))
        })?;
        let (time_in, time_out, conv_in, down, mid, up, out_norm, conv_out) = built;
        Ok(Self {
            config: config.clone(),
            seed,
            dtype,
            device: device.clone(),
            store,
            time_in,
            time_out,
            conv_in,
            down,
            mid,
            up,
            out_norm,
            conv_out,
            history: Vec::new(),
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn dtype(&self) -> DType {
        self.dtype
    }

    pub fn device(&self) -> &Device {
        &self.device
    }

    pub fn params(&self) -> &ParamStore {
        &self.store
    }

    /// Training stages applied so far, oldest first.
    pub fn history(&self) -> &[String] {
        &self.history
    }

    pub fn record_stage(&mut self, stage: impl Into<String>) {
        self.history.push(stage.into());
    }

    pub(crate) fn set_history(&mut self, history: Vec<String>) {
        self.history = history;
    }

    /// Deep copy with fresh parameter storage. Plain `clone` shares storage.
    pub fn clone_detached(&self) -> Result<Self> {
        let mut m = Self::build(&self.config, self.seed, self.dtype, &self.device)?;
        if self.has_adapters() {
            m.insert_spatial_adapters()?;
        }
        if self.has_temporal() {
            m.insert_temporal_layers()?;
        }
        for p in self.store.iter() {
            let q = m
                .store
                .get(p.name())
                .ok_or_else(|| ModelError::Checkpoint(format!("missing {}", p.name())))?;
            q.var().set(&p.value())?;
        }
        m.history = self.history.clone();
        Ok(m)
    }

    pub fn has_adapters(&self) -> bool {
        self.down.iter().any(|b| b.adapter.is_some())
    }

    pub fn has_temporal(&self) -> bool {
        self.mid.res1.temporal.is_some()
    }

    pub fn insert_spatial_adapters(&mut self) -> Result<()> {
        if self.has_adapters() {
            return Err(ModelError::Stage("spatial adapters are already inserted".into()));
        }
        let c = self.config.clone();
        let levels = c.levels();
        let mut store = std::mem::take(&mut self.store);
        let mut init = ParamInit::new(&mut store, ParamGroup::Adapter, self.seed ^ ADAPTER_SEED_SALT, self.dtype, &self.device);
        let make = |i: &mut ParamInit, ch: usize| -> Result<AdapterUnit> {
            Ok(AdapterUnit {
                res: res_unit(i.scope("res", |i| {
                    ResBlock::adapter(i, ch, c.time_embed_dim, c.norm_groups, c.n_domains)
                })?),
                attn: attn_unit(i.scope("attn", |i| {
                    SpatialAttention::new(i, ch, c.text_embed_dim, c.attn_heads, c.norm_groups, true)
                })?),
            })
        };
        let result = init.scope("adapter", |i| -> Result<()> {
            for (l, block) in self.down.iter_mut().enumerate() {
                let ch = if l == 0 { c.level_channels(0) } else { c.level_channels(l - 1) };
                block.adapter = Some(i.scope(format!("down.{l}"), |i| make(i, ch))?);
            }
            for (l, block) in self.up.iter_mut().enumerate() {
                let ch = if l + 1 == levels { c.level_channels(l) } else { c.level_channels(l + 1) };
                block.adapter = Some(i.scope(format!("up.{l}"), |i| make(i, ch))?);
            }
            Ok(())
        });
        self.store = store;
        result
    }

    pub fn insert_temporal_layers(&mut self) -> Result<()> {
        if !self.has_adapters() {
            return Err(ModelError::Stage(
                "temporal layers go in after the spatial adapters".into(),
            ));
        }
        if self.has_temporal() {
            return Err(ModelError::Stage("temporal layers are already inserted".into()));
        }
        let c = self.config.clone();
        let levels = c.levels();
        let (g, heads) = (c.norm_groups, c.attn_heads);
        let mut store = std::mem::take(&mut self.store);
        let mut init = ParamInit::new(&mut store, ParamGroup::Temporal, self.seed ^ TEMPORAL_SEED_SALT, self.dtype, &self.device);
        let graft_res = |i: &mut ParamInit, name: &str, unit: &mut ResUnit, ch: usize| -> Result<()> {
            unit.temporal = Some(i.scope(name, |i| TemporalResBlock::new(i, ch, g))?);
            Ok(())
        };
        let graft_attn = |i: &mut ParamInit, name: &str, unit: &mut AttnUnit, ch: usize| -> Result<()> {
            unit.temporal = Some(i.scope(name, |i| TemporalAttention::new(i, ch, heads))?);
            Ok(())
        };
        let result = init.scope("temporal", |i| -> Result<()> {
            for (l, block) in self.down.iter_mut().enumerate() {
                let ch_in = if l == 0 { c.level_channels(0) } else { c.level_channels(l - 1) };
                let ch = c.level_channels(l);
                i.scope(format!("down.{l}"), |i| -> Result<()> {
                    if let Some(a) = block.adapter.as_mut() {
                        graft_res(i, "adapter.res", &mut a.res, ch_in)?;
                        graft_attn(i, "adapter.attn", &mut a.attn, ch_in)?;
                    }
                    graft_res(i, "res", &mut block.res, ch)?;
                    if let Some(attn) = block.attn.as_mut() {
                        graft_attn(i, "attn", attn, ch)?;
                    }
                    Ok(())
                })?;
            }
            let ch = c.level_channels(levels - 1);
            i.scope("mid", |i| -> Result<()> {
                graft_res(i, "res1", &mut self.mid.res1, ch)?;
                graft_attn(i, "attn", &mut self.mid.attn, ch)?;
                graft_res(i, "res2", &mut self.mid.res2, ch)
            })?;
            for (l, block) in self.up.iter_mut().enumerate() {
                let ch_in = if l + 1 == levels { c.level_channels(l) } else { c.level_channels(l + 1) };
                let ch = c.level_channels(l);
                i.scope(format!("up.{l}"), |i| -> Result<()> {
                    if let Some(a) = block.adapter.as_mut() {
                        graft_res(i, "adapter.res", &mut a.res, ch_in)?;
                        graft_attn(i, "adapter.attn", &mut a.attn, ch_in)?;
                    }
                    graft_res(i, "res", &mut block.res, ch)?;
                    if let Some(attn) = block.attn.as_mut() {
                        graft_attn(i, "attn", attn, ch)?;
                    }
                    Ok(())
                })?;
            }
            Ok(())
        });
        self.store = store;
        result
    }

    fn res_units(&self) -> Vec<&ResUnit> {
        let mut out = Vec::new();
        for b in self.down.iter().chain(self.up.iter()) {
            if let Some(a) = &b.adapter {
                out.push(&a.res);
            }
            out.push(&b.res);
        }
        out.push(&self.mid.res1);
        out.push(&self.mid.res2);
        out
    }

    fn attn_units(&self) -> Vec<&AttnUnit> {
        let mut out = Vec::new();
        for b in self.down.iter().chain(self.up.iter()) {
            if let Some(a) = &b.adapter {
                out.push(&a.attn);
            }
            if let Some(attn) = &b.attn {
                out.push(attn);
            }
        }
        out.push(&self.mid.attn);
        out
    }

    pub fn adapter_count(&self) -> usize {
        self.down
            .iter()
            .chain(self.up.iter())
            .filter(|b| b.adapter.is_some())
            .count()
    }

    pub fn spatial_resblock_count(&self) -> usize {
        self.res_units().len()
    }

    pub fn temporal_resblock_count(&self) -> usize {
        self.res_units().iter().filter(|u| u.temporal.is_some()).count()
    }

    pub fn spatial_attention_count(&self) -> usize {
        self.attn_units().len()
    }

    pub fn temporal_attention_count(&self) -> usize {
        self.attn_units().iter().filter(|u| u.temporal.is_some()).count()
    }

    pub fn down_block_count(&self) -> usize {
        self.down.len()
    }

    pub fn up_block_count(&self) -> usize {
        self.up.len()
    }

    /// Domain-norm parameters of every adapter, down blocks first.
    pub fn domain_norms(&self) -> Vec<&DomainNormParams> {
        self.down
            .iter()
            .chain(self.up.iter())
            .filter_map(|b| b.adapter.as_ref())
            .filter_map(|a| a.res.spatial.domain_params())
            .collect()
    }

    /// Predicts the noise in `x_t`.
    ///
    /// `t` holds one timestep per batch item and `cond` is the text condition
    /// `[batch, tokens, text_embed_dim]`. With `opts.temporal == false` the
    /// frames are folded into the batch and denoised independently.
    pub fn forward(
        &self,
        x_t: &VideoArray,
        t: &[usize],
        cond: &Tensor,
        domain_id: usize,
        opts: ForwardOptions,
    ) -> Result<VideoArray> {
        let d = x_t.dims();
        let c = &self.config;
        if d.channels != c.in_channels || d.height != c.height || d.width != c.width || d.frames == 0 {
            return Err(ModelError::Shape(format!(
                "expected [*, *, {}, {}, {}], got {:?}",
                c.in_channels,
                c.height,
                c.width,
                x_t.tensor().dims()
            )));
        }
        if t.len() != d.batch {
            return Err(ModelError::Shape(format!(
                "{} timesteps for a batch of {}",
                t.len(),
                d.batch
            )));
        }
        let (cb, tokens, cdim) = cond.dims3()?;
        if cb != d.batch || cdim != c.text_embed_dim {
            return Err(ModelError::Shape(format!(
                "condition must be [{}, tokens, {}], got {:?}",
                d.batch,
                c.text_embed_dim,
                cond.dims()
            )));
        }
        if domain_id >= c.n_domains {
            return Err(ModelError::UnknownDomain {
                domain: domain_id,
                n_domains: c.n_domains,
            });
        }

        let (b, f) = (d.batch, d.frames);
        let tr = opts.trainable;
        let cx = Cx {
            frames: f,
            domain: domain_id,
            opts,
        };
        let x = x_t
            .tensor()
            .to_dtype(self.dtype)?
            .reshape((b * f, d.channels, d.height, d.width))?;

        let temb = ops::sinusoidal_embedding(t, c.base_channels, &self.device)?.to_dtype(self.dtype)?;
        let temb = self.time_out.forward(&self.time_in.forward(&temb, tr)?.silu()?, tr)?;
        let temb = per_frame(&temb, f)?;
        let ctx = per_frame(&cond.to_dtype(self.dtype)?, f)?;
        let _ = tokens;

        let mut h = self.conv_in.forward(&x, tr)?;
        let mut skips = Vec::with_capacity(self.down.len());
        for block in &self.down {
            if let Some(a) = &block.adapter {
                h = a.forward(&h, &temb, &ctx, &cx)?;
            }
            h = block.res.forward(&h, &temb, &cx)?;
            if let Some(attn) = &block.attn {
                h = attn.forward(&h, &ctx, &cx)?;
            }
            skips.push(h.clone());
            if let Some(conv) = &block.resample {
                h = conv.forward(&ops::downsample2(&h)?, tr)?;
            }
        }
        h = self.mid.res1.forward(&h, &temb, &cx)?;
        h = self.mid.attn.forward(&h, &ctx, &cx)?;
        h = self.mid.res2.forward(&h, &temb, &cx)?;
        for (block, skip) in self.up.iter().zip(skips).rev() {
            if let Some(a) = &block.adapter {
                h = a.forward(&h, &temb, &ctx, &cx)?;
            }
            h = Tensor::cat(&[&h, &skip], 1)?;
            h = block.res.forward(&h, &temb, &cx)?;
            if let Some(attn) = &block.attn {
                h = attn.forward(&h, &ctx, &cx)?;
            }
            if let Some(conv) = &block.resample {
                h = conv.forward(&ops::upsample2(&h)?, tr)?;
            }
        }
        let h = self.out_norm.forward(&ops::group_norm(&h, c.norm_groups)?, 1, tr)?;
        let out = self.conv_out.forward(&h.silu()?, tr)?;
        VideoArray::new(out.reshape((b, f, d.channels, d.height, d.width))?)
    }
}

/// Repeats each batch row once per frame: `[b, ...]` to `[b * frames, ...]`.
fn per_frame(x: &Tensor, frames: usize) -> Result<Tensor> {
    let mut dims = x.dims().to_vec();
    let b = dims[0];
    let mut expanded = vec![b, frames];
    expanded.extend_from_slice(&dims[1..]);
    let y = x.unsqueeze(1)?.broadcast_as(expanded)?;
    dims[0] = b * frames;
    Ok(y.reshape(dims)?)
}
