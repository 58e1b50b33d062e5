use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use candle_core::{DType, Device, Tensor};
use serde::{Deserialize, Serialize};

use super::params::{tensor_bytes, ParamGroup};
use super::{ModelConfig, ModelError, Result, VideoDenoiser};

pub const FORMAT_VERSION: u32 = 1;
const HEADER_KEY: &str = "scenecraft";
const EMA_PREFIX: &str = "ema/";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointHeader {
    pub format_version: u32,
    pub config: ModelConfig,
    pub seed: u64,
    /// Training stages applied so far, oldest first.
    pub stages: Vec<String>,
    pub groups: BTreeMap<String, ParamGroup>,
    pub has_adapters: bool,
    pub has_temporal: bool,
    #[serde(default)]
    pub extra: BTreeMap<String, String>,
}

/// A model plus the averaged weights kept by the trainer, if any.
#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub model: VideoDenoiser,
    pub ema: BTreeMap<String, Tensor>,
    pub extra: BTreeMap<String, String>,
}

impl Checkpoint {
    pub fn new(model: VideoDenoiser) -> Self {
        Self {
            model,
            ema: BTreeMap::new(),
            extra: BTreeMap::new(),
        }
    }

    /// A copy of the model with the averaged weights swapped in where present.
    pub fn ema_model(&self) -> Result<VideoDenoiser> {
        let model = self.model.clone_detached()?;
        for (name, value) in &self.ema {
            if let Some(p) = model.params().get(name) {
                p.var().set(&value.to_dtype(p.var().dtype())?)?;
            }
        }
        Ok(model)
    }
}

fn to_view(t: &Tensor) -> Result<(safetensors::Dtype, Vec<usize>, Vec<u8>)> {
    let dtype = match t.dtype() {
        DType::F64 => safetensors::Dtype::F64,
        _ => safetensors::Dtype::F32,
    };
    Ok((dtype, t.dims().to_vec(), tensor_bytes(t)?))
}

fn from_view(view: &safetensors::tensor::TensorView<'_>, device: &Device) -> Result<Tensor> {
    let shape = view.shape().to_vec();
    let data = view.data();
    let t = match view.dtype() {
        safetensors::Dtype::F32 => {
            let v: Vec<f32> = data
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
                .collect();
            Tensor::from_vec(v, shape, device)?
        }
        safetensors::Dtype::F64 => {
            let v: Vec<f64> = data
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
                .collect();
            Tensor::from_vec(v, shape, device)?
        }
        other => return Err(ModelError::Checkpoint(format!("unsupported dtype {other:?}"))),
    };
    Ok(t)
}

pub fn save_checkpoint(ckpt: &Checkpoint, path: impl AsRef<Path>) -> Result<()> {
    let model = &ckpt.model;
    let header = CheckpointHeader {
        format_version: FORMAT_VERSION,
        config: model.config().clone(),
        seed: model.seed(),
        stages: model.history().to_vec(),
        groups: model
            .params()
            .iter()
            .map(|p| (p.name().to_string(), p.group()))
            .collect(),
        has_adapters: model.has_adapters(),
        has_temporal: model.has_temporal(),
        extra: ckpt.extra.clone(),
    };
    let mut views = Vec::new();
    for p in model.params().iter() {
        views.push((p.name().to_string(), to_view(&p.value())?));
    }
    for (name, t) in &ckpt.ema {
        views.push((format!("{EMA_PREFIX}{name}"), to_view(t)?));
    }
    let tensors = views
        .iter()
        .map(|(name, (dtype, shape, bytes))| {
            safetensors::tensor::TensorView::new(*dtype, shape.clone(), bytes)
                .map(|v| (name.clone(), v))
                .map_err(|e| ModelError::Checkpoint(e.to_string()))
        })
        .collect::<Result<Vec<_>>>()?;
    let meta = HashMap::from([(
        HEADER_KEY.to_string(),
        serde_json::to_string(&header).map_err(|e| ModelError::Checkpoint(e.to_string()))?,
    )]);
    let bytes = safetensors::serialize(tensors, Some(meta))
        .map_err(|e| ModelError::Checkpoint(e.to_string()))?;
    if let Some(parent) = path.as_ref().parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)?;
        }
    }
    std::fs::write(path, bytes)?;
    Ok(())
}

pub fn read_header(bytes: &[u8]) -> Result<CheckpointHeader> {
    let (_, meta) = safetensors::SafeTensors::read_metadata(bytes)
        .map_err(|e| ModelError::Checkpoint(e.to_string()))?;
    let raw = meta
        .metadata()
        .as_ref()
        .and_then(|m| m.get(HEADER_KEY))
        .ok_or_else(|| ModelError::Checkpoint("missing header".into()))?;
    let header: CheckpointHeader =
        serde_json::from_str(raw).map_err(|e| ModelError::Checkpoint(e.to_string()))?;
    if header.format_version != FORMAT_VERSION {
        return Err(ModelError::Checkpoint(format!(
            "format version {} is not supported",
            header.format_version
        )));
    }
    Ok(header)
}

/// Rebuilds the architecture recorded in the header and loads every
/// parameter by name. Fails unless the stored names and groups match the
/// rebuilt model exactly.
pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<Checkpoint> {
    let bytes = std::fs::read(path)?;
    let header = read_header(&bytes)?;
    let st = safetensors::SafeTensors::deserialize(&bytes)
        .map_err(|e| ModelError::Checkpoint(e.to_string()))?;
    let device = Device::Cpu;

    let dtype = st
        .tensors()
        .iter()
        .find(|(n, _)| !n.starts_with(EMA_PREFIX))
        .map(|(_, v)| match v.dtype() {
            safetensors::Dtype::F64 => DType::F64,
            _ => DType::F32,
        })
        .unwrap_or(DType::F32);
    let mut model = VideoDenoiser::build(&header.config, header.seed, dtype, &device)?;
    if header.has_adapters {
        model.insert_spatial_adapters()?;
    }
    if header.has_temporal {
        model.insert_temporal_layers()?;
    }
    model.set_history(header.stages.clone());

    let rebuilt: BTreeMap<String, ParamGroup> = model
        .params()
        .iter()
        .map(|p| (p.name().to_string(), p.group()))
        .collect();
    if rebuilt != header.groups {
        return Err(ModelError::Checkpoint(
            "parameter names or groups do not match the recorded architecture".into(),
        ));
    }

    let mut ema = BTreeMap::new();
    let mut seen = 0usize;
    for (name, view) in st.tensors() {
        let t = from_view(&view, &device)?;
        if let Some(base) = name.strip_prefix(EMA_PREFIX) {
            ema.insert(base.to_string(), t);
            continue;
        }
        let p = model
            .params()
            .get(&name)
            .ok_or_else(|| ModelError::Checkpoint(format!("unexpected tensor {name}")))?;
        if p.var().dims() != t.dims() {
            return Err(ModelError::Checkpoint(format!(
                "tensor {name} has shape {:?}, expected {:?}",
                t.dims(),
                p.var().dims()
            )));
        }
        p.var().set(&t.to_dtype(dtype)?)?;
        seen += 1;
    }
    if seen != model.params().len() {
        return Err(ModelError::Checkpoint(format!(
            "{} of {} parameters present",
            seen,
            model.params().len()
        )));
    }
    Ok(Checkpoint {
        model,
        ema,
        extra: header.extra,
    })
}
