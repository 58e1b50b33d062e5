use std::path::{Path, PathBuf};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{PipelineError, Result};
use crate::assembly::{Gains, IdentityUpscaler, NearestUpscaler, Upscaler};
use crate::diffusion::{make_schedule, DiffusionSchedule, SampleConfig, TrainConfig};
use crate::script_gen::{HttpClient, StubClient, TextExpansionClient};
use crate::video_model::{ModelConfig, StubTextEncoder};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LlmProvider {
    #[default]
    Stub,
    Http,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LlmConfig {
    pub provider: LlmProvider,
    pub endpoint: String,
    /// Environment variable holding the API key for the HTTP provider.
    pub api_key_env: String,
    /// Extra stub answers, keyed by prompt hash.
    pub fixtures: Option<PathBuf>,
    pub retries: usize,
    pub timeout_seconds: u64,
}

impl Default for LlmConfig {
    fn default() -> Self {
        Self {
            provider: LlmProvider::Stub,
            endpoint: "http://127.0.0.1:8000/v1/completions".into(),
            api_key_env: "SCENECRAFT_LLM_KEY".into(),
            fixtures: None,
            retries: 2,
            timeout_seconds: 60,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TextEncConfig {
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScheduleConfig {
    pub steps: usize,
    pub beta_min: f64,
    pub beta_max: f64,
}

impl Default for ScheduleConfig {
    fn default() -> Self {
        Self {
            steps: 1000,
            beta_min: 1e-4,
            beta_max: 0.02,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AudioConfig {
    /// Directory holding `catalog.json` and its waveforms.
    pub catalog: Option<PathBuf>,
    pub lambda: f64,
    pub k: usize,
    pub embed_dim: usize,
    pub video_seed: u64,
}

impl Default for AudioConfig {
    fn default() -> Self {
        Self {
            catalog: None,
            lambda: 0.5,
            k: 3,
            embed_dim: 64,
            video_seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AssemblyConfig {
    pub fps: f64,
    pub gains: Gains,
    /// Integer upscale factor; 1 leaves frames untouched.
    pub upscale: u32,
}

impl Default for AssemblyConfig {
    fn default() -> Self {
        Self {
            fps: 8.0,
            gains: Gains::default(),
            upscale: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    pub feature_dim: usize,
    pub feature_seed: u64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            feature_dim: 64,
            feature_seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IoConfig {
    pub out_dir: PathBuf,
    /// Root seed; every stage seed is derived from it.
    pub seed: u64,
}

impl Default for IoConfig {
    fn default() -> Self {
        Self {
            out_dir: PathBuf::from("out"),
            seed: 0,
        }
    }
}

/// Everything a command needs. Missing sections and keys take defaults;
/// unknown keys are rejected.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub llm: LlmConfig,
    pub textenc: TextEncConfig,
    pub model: ModelConfig,
    pub schedule: ScheduleConfig,
    pub train: TrainConfig,
    pub sample: SampleConfig,
    pub audio: AudioConfig,
    pub assembly: AssemblyConfig,
    pub eval: EvalConfig,
    pub io: IoConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            llm: LlmConfig::default(),
            textenc: TextEncConfig::default(),
            model: ModelConfig::toy(),
            schedule: ScheduleConfig::default(),
            train: TrainConfig::default(),
            sample: SampleConfig::default(),
            audio: AudioConfig::default(),
            assembly: AssemblyConfig::default(),
            eval: EvalConfig::default(),
            io: IoConfig::default(),
        }
    }
}

fn bad<T>(msg: impl Into<String>) -> Result<T> {
    Err(PipelineError::Config(msg.into()))
}

impl PipelineConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| PipelineError::Config(e.to_string()))
    }

    /// Reads and validates a config file.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| PipelineError::Config(format!("{}: {e}", path.display())))?;
        let cfg = Self::from_json(&text).map_err(|e| PipelineError::Config(format!("{}: {e}", path.display())))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate().map_err(|e| PipelineError::Config(format!("model: {e}")))?;
        let sched = self.schedule()?;
        self.train.validate().map_err(|e| PipelineError::Config(e.to_string()))?;
        self.sample.validate(&sched).map_err(|e| PipelineError::Config(e.to_string()))?;
        if self.sample.domain_id >= self.model.n_domains {
            return bad(format!(
                "sample.domain_id {} exceeds model.n_domains {}",
                self.sample.domain_id, self.model.n_domains
            ));
        }
        if self.llm.provider == LlmProvider::Http && self.llm.endpoint.trim().is_empty() {
            return bad("llm.endpoint is required for the http provider");
        }
        if !(0.0..=1.0).contains(&self.audio.lambda) {
            return bad("audio.lambda must lie in [0, 1]");
        }
        if self.audio.k == 0 || self.audio.embed_dim == 0 {
            return bad("audio.k and audio.embed_dim must be at least 1");
        }
        if !(self.assembly.fps > 0.0 && self.assembly.fps.is_finite()) {
            return bad("assembly.fps must be positive");
        }
        if !(self.assembly.gains.music_db.is_finite() && self.assembly.gains.sfx_db.is_finite()) {
            return bad("assembly.gains must be finite");
        }
        if self.assembly.upscale == 0 {
            return bad("assembly.upscale must be at least 1");
        }
        if self.eval.feature_dim == 0 {
            return bad("eval.feature_dim must be at least 1");
        }
        Ok(())
    }

    /// SHA-256 of the canonical JSON form with `io.out_dir` blanked, since
    /// where results land does not change them.
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.io.out_dir = PathBuf::new();
        let bytes = serde_json::to_vec(&c).expect("config serializes");
        hex::encode(Sha256::digest(bytes))
    }

    pub fn schedule(&self) -> Result<DiffusionSchedule> {
        make_schedule(self.schedule.steps, self.schedule.beta_min, self.schedule.beta_max)
            .map_err(|e| PipelineError::Config(format!("schedule: {e}")))
    }

    /// Scene length implied by the clip length and frame rate.
    pub fn scene_seconds(&self) -> f64 {
        self.model.frames as f64 / self.assembly.fps
    }

    pub fn text_encoder(&self) -> StubTextEncoder {
        StubTextEncoder::new(self.model.text_embed_dim, self.model.text_tokens, self.textenc.seed)
    }

    pub fn llm_client(&self) -> Result<Box<dyn TextExpansionClient>> {
        match self.llm.provider {
            LlmProvider::Stub => {
                let mut stub = StubClient::with_builtin_fixtures();
                if let Some(path) = &self.llm.fixtures {
                    stub.load_fixtures(path)?;
                }
                Ok(Box::new(stub))
            }
            LlmProvider::Http => Ok(Box::new(
                HttpClient::from_env(&self.llm.endpoint, &self.llm.api_key_env)?
                    .with_timeout(Duration::from_secs(self.llm.timeout_seconds)),
            )),
        }
    }

    pub fn upscaler(&self) -> Box<dyn Upscaler> {
        match self.assembly.upscale {
            1 => Box::new(IdentityUpscaler),
            k => Box::new(NearestUpscaler(k)),
        }
    }
}
