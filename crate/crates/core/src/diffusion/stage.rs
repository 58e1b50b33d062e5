use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{DiffusionError, Result};
use crate::video_model::{GroupSet, ParamGroup, VideoDenoiser};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum TrainStage {
    BasePretrain,
    SpatialFinetune,
    TemporalTrain,
    MovieFinetune,
}

impl TrainStage {
    pub const ALL: [TrainStage; 4] = [
        TrainStage::BasePretrain,
        TrainStage::SpatialFinetune,
        TrainStage::TemporalTrain,
        TrainStage::MovieFinetune,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            TrainStage::BasePretrain => "BASE_PRETRAIN",
            TrainStage::SpatialFinetune => "SPATIAL_FINETUNE",
            TrainStage::TemporalTrain => "TEMPORAL_TRAIN",
            TrainStage::MovieFinetune => "MOVIE_FINETUNE",
        }
    }
}

impl fmt::Display for TrainStage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for TrainStage {
    type Err = DiffusionError;

    fn from_str(s: &str) -> Result<Self> {
        let norm = s.trim().replace('-', "_").to_ascii_uppercase();
        TrainStage::ALL
            .into_iter()
            .find(|st| st.as_str() == norm)
            .ok_or_else(|| DiffusionError::Config(format!("unknown training stage {s:?}")))
    }
}

/// What one stage may touch and how its forward passes run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StageSelection {
    pub stage: TrainStage,
    pub groups: GroupSet,
    pub temporal: bool,
    /// Every batch is evaluated with this domain regardless of its source.
    pub pinned_domain: Option<usize>,
}

/// Domain whose normalization parameters stay in use while temporal layers train.
pub const TEMPORAL_STAGE_DOMAIN: usize = 0;

fn last_stage(model: &VideoDenoiser) -> Option<TrainStage> {
    model.history().last().and_then(|s| s.parse().ok())
}

/// Parameter groups `stage` optimizes, after checking the model is in a
/// state where the stage makes sense.
pub fn trainable_set(model: &VideoDenoiser, stage: TrainStage) -> Result<StageSelection> {
    if let Some(prev) = last_stage(model) {
        if prev > stage {
            return Err(DiffusionError::StageOrder(format!(
                "{stage} cannot follow {prev}; stages run in order"
            )));
        }
    }
    let sel = |groups, temporal, pinned_domain| StageSelection {
        stage,
        groups,
        temporal,
        pinned_domain,
    };
    match stage {
        TrainStage::BasePretrain => {
            if model.has_adapters() {
                return Err(DiffusionError::StageOrder(
                    "BASE_PRETRAIN runs before spatial adapters are inserted".into(),
                ));
            }
            Ok(sel(GroupSet::only(ParamGroup::Base), false, None))
        }
        TrainStage::SpatialFinetune => {
            if !model.has_adapters() {
                return Err(DiffusionError::StageOrder(
                    "SPATIAL_FINETUNE needs spatial adapters; insert them first".into(),
                ));
            }
            Ok(sel(GroupSet::only(ParamGroup::Adapter), false, None))
        }
        TrainStage::TemporalTrain => {
            if !model.has_temporal() {
                return Err(DiffusionError::StageOrder(
                    "TEMPORAL_TRAIN needs temporal layers, which require spatial adapters from SPATIAL_FINETUNE".into(),
                ));
            }
            Ok(sel(GroupSet::only(ParamGroup::Temporal), true, Some(TEMPORAL_STAGE_DOMAIN)))
        }
        TrainStage::MovieFinetune => {
            if !model.history().iter().any(|s| s == TrainStage::TemporalTrain.as_str()) {
                return Err(DiffusionError::StageOrder(
                    "MOVIE_FINETUNE needs a model that went through TEMPORAL_TRAIN".into(),
                ));
            }
            Ok(sel(GroupSet::only(ParamGroup::Adapter), true, None))
        }
    }
}

/// Grafts whatever layers `stage` expects onto `model`. Refuses to add
/// temporal layers to a model without adapters.
pub fn prepare_for_stage(model: &mut VideoDenoiser, stage: TrainStage) -> Result<()> {
    match stage {
        TrainStage::BasePretrain => {}
        TrainStage::SpatialFinetune => {
            if !model.has_adapters() {
                model.insert_spatial_adapters()?;
            }
        }
        TrainStage::TemporalTrain => {
            if !model.has_adapters() {
                return Err(DiffusionError::StageOrder(
                    "TEMPORAL_TRAIN refused: the model has no spatial adapters; run SPATIAL_FINETUNE first".into(),
                ));
            }
            if !model.has_temporal() {
                model.insert_temporal_layers()?;
            }
        }
        TrainStage::MovieFinetune => {}
    }
    trainable_set(model, stage).map(|_| ())
}
