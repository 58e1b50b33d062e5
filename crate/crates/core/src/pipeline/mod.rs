//! Configuration, seeds, the run log, and the command entry points that
//! chain the other modules together. Each command reads and writes files so
//! that stages can be rerun on their own.

mod commands;
mod config;
mod record;
mod seeds;

pub use commands::{
    assemble, evaluate, expand, load_clips, make_movie, read_json, retrieve_audio, sample, train, write_clips, AudioPlan, SceneAudio,
    AUDIO_PLAN_FILE, FAILED_DIR, METRICS_FILE, MOVIE_DIR, SAMPLES_DIR, SCRIPTS_FILE,
};
pub use config::{AssemblyConfig, AudioConfig, EvalConfig, IoConfig, LlmConfig, LlmProvider, PipelineConfig, ScheduleConfig, TextEncConfig};
pub use record::{read_runs, RunRecord, StageTiming, RUNS_FILE};
pub use seeds::{derive_seed, splitmix64, SeedPlan, SEED_STREAMS};

use std::path::{Path, PathBuf};
use std::time::Instant;

use crate::assembly::AssemblyError;
use crate::audio_retrieval::AudioError;
use crate::diffusion::DiffusionError;
use crate::evaluation::EvalError;
use crate::script_gen::{ClientError, ScriptError};
use crate::video_model::ModelError;

#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error("config: {0}")]
    Config(String),
    #[error("{0}")]
    Input(String),
    #[error("stage {stage} failed: {source}")]
    Stage {
        stage: String,
        #[source]
        source: Box<PipelineError>,
    },
    #[error(transparent)]
    Script(#[from] ScriptError),
    #[error(transparent)]
    Diffusion(#[from] DiffusionError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Audio(#[from] AudioError),
    #[error(transparent)]
    Assembly(#[from] AssemblyError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl From<ClientError> for PipelineError {
    fn from(e: ClientError) -> Self {
        PipelineError::Script(ScriptError::Client(e))
    }
}

impl PipelineError {
    /// Name of the innermost failing stage, if any.
    pub fn stage(&self) -> Option<&str> {
        match self {
            PipelineError::Stage { stage, source } => source.stage().or(Some(stage)),
            _ => None,
        }
    }
}

pub type Result<T> = std::result::Result<T, PipelineError>;

/// State of one command while it runs. Every command goes through
/// [`Run::execute`], which appends a [`RunRecord`] on success and failure.
pub struct Run {
    pub config: PipelineConfig,
    pub seeds: SeedPlan,
    record: RunRecord,
}

impl Run {
    /// Validates `config`, then runs `body`. An invalid config fails before
    /// anything is written.
    pub fn execute<T>(config: &PipelineConfig, command: &str, body: impl FnOnce(&mut Run) -> Result<T>) -> Result<(T, RunRecord)> {
        config.validate()?;
        let seeds = SeedPlan::new(config.io.seed);
        let record = RunRecord {
            run_id: uuid::Uuid::new_v4().to_string(),
            command: command.to_string(),
            started_at: chrono::Utc::now().to_rfc3339(),
            config_hash: config.hash(),
            root_seed: seeds.root,
            seeds: seeds.seeds.clone(),
            timings: Vec::new(),
            outputs: Vec::new(),
            warnings: Vec::new(),
            status: "ok".into(),
            error: None,
        };
        let mut run = Run {
            config: config.clone(),
            seeds,
            record,
        };
        let result = body(&mut run);
        let mut record = run.record;
        if let Err(e) = &result {
            record.status = "failed".into();
            record.error = Some(e.to_string());
        }
        record.append(&config.io.out_dir)?;
        result.map(|v| (v, record))
    }

    pub fn out_dir(&self) -> &Path {
        &self.config.io.out_dir
    }

    pub fn run_id(&self) -> &str {
        &self.record.run_id
    }

    pub fn config_hash(&self) -> &str {
        &self.record.config_hash
    }

    /// Times `f` and tags any error with the stage name.
    pub fn stage<T>(&mut self, name: &str, f: impl FnOnce(&mut Run) -> Result<T>) -> Result<T> {
        let t0 = Instant::now();
        let out = f(self);
        self.record.timings.push(StageTiming {
            stage: name.to_string(),
            seconds: t0.elapsed().as_secs_f64(),
        });
        out.map_err(|e| PipelineError::Stage {
            stage: name.to_string(),
            source: Box::new(e),
        })
    }

    pub fn output(&mut self, path: impl Into<PathBuf>) {
        self.record.outputs.push(path.into());
    }

    pub fn warn(&mut self, msg: impl Into<String>) {
        let msg = msg.into();
        log::warn!("{msg}");
        self.record.warnings.push(msg);
    }

    pub fn warnings(&self) -> &[String] {
        &self.record.warnings
    }
}

#[cfg(test)]
mod tests;
