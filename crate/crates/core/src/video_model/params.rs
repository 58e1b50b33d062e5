use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use candle_core::{DType, Device, Tensor, Var};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::ModelError;

/// Which construction stage a parameter came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum ParamGroup {
    Base,
    Adapter,
    Temporal,
}

impl ParamGroup {
    pub const ALL: [ParamGroup; 3] = [ParamGroup::Base, ParamGroup::Adapter, ParamGroup::Temporal];

    pub fn as_str(self) -> &'static str {
        match self {
            ParamGroup::Base => "BASE",
            ParamGroup::Adapter => "ADAPTER",
            ParamGroup::Temporal => "TEMPORAL",
        }
    }
}

impl fmt::Display for ParamGroup {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ParamGroup {
    type Err = ModelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ParamGroup::ALL
            .into_iter()
            .find(|g| g.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| ModelError::Checkpoint(format!("unknown parameter group {s:?}")))
    }
}

/// A set of parameter groups, e.g. the ones a training stage may update.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash)]
pub struct GroupSet(u8);

impl GroupSet {
    pub const NONE: GroupSet = GroupSet(0);

    pub fn only(group: ParamGroup) -> Self {
        GroupSet(1 << group as u8)
    }

    pub fn with(self, group: ParamGroup) -> Self {
        GroupSet(self.0 | 1 << group as u8)
    }

    pub fn contains(self, group: ParamGroup) -> bool {
        self.0 & (1 << group as u8) != 0
    }

    pub fn groups(self) -> impl Iterator<Item = ParamGroup> {
        ParamGroup::ALL.into_iter().filter(move |g| self.contains(*g))
    }
}

/// A named, group-tagged learnable tensor. Clones share storage.
#[derive(Clone)]
pub struct Param {
    name: Arc<str>,
    group: ParamGroup,
    var: Var,
}

impl fmt::Debug for Param {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Param({} {:?} {})", self.name, self.var.dims(), self.group)
    }
}

impl Param {
    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn group(&self) -> ParamGroup {
        self.group
    }

    pub fn var(&self) -> &Var {
        &self.var
    }

    /// The value as seen by a forward pass: tracked for autodiff only when the
    /// parameter's group is being trained, detached otherwise.
    pub fn get(&self, trainable: GroupSet) -> Tensor {
        if trainable.contains(self.group) {
            self.var.as_tensor().clone()
        } else {
            self.var.as_detached_tensor()
        }
    }

    pub fn value(&self) -> Tensor {
        self.var.as_detached_tensor()
    }
}

/// Every parameter of a model, in construction order.
#[derive(Debug, Clone, Default)]
pub struct ParamStore {
    params: Vec<Param>,
    index: BTreeMap<String, usize>,
}

impl ParamStore {
    pub fn iter(&self) -> impl Iterator<Item = &Param> {
        self.params.iter()
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn get(&self, name: &str) -> Option<&Param> {
        self.index.get(name).map(|&i| &self.params[i])
    }

    pub fn group(&self, group: ParamGroup) -> impl Iterator<Item = &Param> {
        self.params.iter().filter(move |p| p.group == group)
    }

    pub fn selection(&self, groups: GroupSet) -> Vec<Param> {
        self.params
            .iter()
            .filter(|p| groups.contains(p.group))
            .cloned()
            .collect()
    }

    fn push(&mut self, param: Param) -> Result<(), ModelError> {
        if self.index.contains_key(param.name()) {
            return Err(ModelError::DuplicateParam(param.name().to_string()));
        }
        self.index.insert(param.name().to_string(), self.params.len());
        self.params.push(param);
        Ok(())
    }

    /// SHA-256 over names and raw bytes of one group, in name order.
    pub fn group_hash(&self, group: ParamGroup) -> Result<String, ModelError> {
        let mut hasher = Sha256::new();
        for (name, &i) in &self.index {
            let p = &self.params[i];
            if p.group != group {
                continue;
            }
            hasher.update(name.as_bytes());
            hasher.update(tensor_bytes(&p.value())?);
        }
        Ok(hex::encode(hasher.finalize()))
    }

    /// Total element count per group.
    pub fn census(&self) -> BTreeMap<ParamGroup, usize> {
        let mut out: BTreeMap<ParamGroup, usize> =
            ParamGroup::ALL.into_iter().map(|g| (g, 0)).collect();
        for p in &self.params {
            *out.entry(p.group).or_default() += p.var.elem_count();
        }
        out
    }
}

pub(crate) fn tensor_bytes(t: &Tensor) -> Result<Vec<u8>, ModelError> {
    let flat = t.flatten_all()?;
    Ok(match flat.dtype() {
        DType::F64 => flat.to_vec1::<f64>()?.iter().flat_map(|v| v.to_le_bytes()).collect(),
        _ => flat
            .to_dtype(DType::F32)?
            .to_vec1::<f32>()?
            .iter()
            .flat_map(|v| v.to_le_bytes())
            .collect(),
    })
}

/// Creates parameters under a name prefix, tagged with one group, drawing
/// initial values from a seeded generator.
pub(crate) struct ParamInit<'a> {
    store: &'a mut ParamStore,
    rng: ChaCha8Rng,
    group: ParamGroup,
    prefix: String,
    dtype: DType,
    device: Device,
}

impl<'a> ParamInit<'a> {
    pub fn new(
        store: &'a mut ParamStore,
        group: ParamGroup,
        seed: u64,
        dtype: DType,
        device: &Device,
    ) -> Self {
        Self {
            store,
            rng: ChaCha8Rng::seed_from_u64(seed),
            group,
            prefix: String::new(),
            dtype,
            device: device.clone(),
        }
    }

    /// Runs `f` with `segment` appended to the name prefix.
    pub fn scope<T>(&mut self, segment: impl fmt::Display, f: impl FnOnce(&mut Self) -> T) -> T {
        let saved = self.prefix.clone();
        self.prefix = if saved.is_empty() {
            segment.to_string()
        } else {
            format!("{saved}.{segment}")
        };
        let out = f(self);
        self.prefix = saved;
        out
    }

    fn create(&mut self, name: &str, dims: &[usize], values: Vec<f64>) -> Result<Param, ModelError> {
        let full = if self.prefix.is_empty() {
            name.to_string()
        } else {
            format!("{}.{name}", self.prefix)
        };
        let t = Tensor::from_vec(values, dims, &self.device)?.to_dtype(self.dtype)?;
        let param = Param {
            name: Arc::from(full.as_str()),
            group: self.group,
            var: Var::from_tensor(&t)?,
        };
        self.store.push(param.clone())?;
        Ok(param)
    }

    pub fn normal(&mut self, name: &str, dims: &[usize], std: f64) -> Result<Param, ModelError> {
        let n: usize = dims.iter().product();
        let values = (0..n)
            .map(|_| {
                let z: f64 = StandardNormal.sample(&mut self.rng);
                z * std
            })
            .collect();
        self.create(name, dims, values)
    }

    pub fn constant(&mut self, name: &str, dims: &[usize], value: f64) -> Result<Param, ModelError> {
        let n: usize = dims.iter().product();
        self.create(name, dims, vec![value; n])
    }

    pub fn zeros(&mut self, name: &str, dims: &[usize]) -> Result<Param, ModelError> {
        self.constant(name, dims, 0.0)
    }

    pub fn ones(&mut self, name: &str, dims: &[usize]) -> Result<Param, ModelError> {
        self.constant(name, dims, 1.0)
    }
}
