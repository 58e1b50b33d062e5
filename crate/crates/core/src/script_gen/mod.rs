//! Script expansion: a terse user brief becomes an ordered list of per-scene
//! generation prompts, and the finished script is summarized into a tone
//! category for background-music selection.

mod client;
mod parse;
mod prompt;
mod tone;

pub use client::{
    ClientError, CompletionRequest, HttpClient, StubClient, TextExpansionClient,
};
pub use parse::{format_as_numbered_list, parse_scripts};
pub use prompt::{build_expansion_prompt, build_tone_prompt, EXPANSION_REQUIREMENTS};
pub use tone::{keyword_vote, map_tone_response, summarize_tone, ToneCategory, ToneLabel};

use serde::{Deserialize, Serialize};

#[derive(Debug, thiserror::Error)]
pub enum ScriptError {
    #[error("empty input: the brief text is blank")]
    EmptyBrief,
    #[error("invalid brief: {0}")]
    InvalidBrief(String),
    #[error("could not extract any scene from the response")]
    Parse,
    #[error("script sequence has no scenes")]
    NoScenes,
    #[error(transparent)]
    Client(#[from] ClientError),
}

/// What the user typed, plus how many scenes of what length to ask for.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UserBrief {
    pub text: String,
    pub n_scenes: usize,
    pub scene_seconds: f64,
}

impl UserBrief {
    pub fn new(text: impl Into<String>, n_scenes: usize, scene_seconds: f64) -> Self {
        Self {
            text: text.into(),
            n_scenes,
            scene_seconds,
        }
    }

    /// Brief with the default ten scenes of two seconds each.
    pub fn with_defaults(text: impl Into<String>) -> Self {
        Self::new(text, 10, 2.0)
    }

    pub fn validate(&self) -> Result<(), ScriptError> {
        if self.text.trim().is_empty() {
            return Err(ScriptError::EmptyBrief);
        }
        if self.n_scenes == 0 {
            return Err(ScriptError::InvalidBrief("n_scenes must be at least 1".into()));
        }
        if !(self.scene_seconds > 0.0 && self.scene_seconds.is_finite()) {
            return Err(ScriptError::InvalidBrief(
                "scene_seconds must be a positive number".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneScript {
    pub index: usize,
    pub text: String,
    pub duration_seconds: f64,
}

/// Non-fatal findings attached to a parsed script.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ScriptWarning {
    CountMismatch { expected: usize, got: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScriptSequence {
    pub brief: UserBrief,
    pub scenes: Vec<SceneScript>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<ScriptWarning>,
}

impl ScriptSequence {
    pub fn has_count_mismatch(&self) -> bool {
        self.warnings
            .iter()
            .any(|w| matches!(w, ScriptWarning::CountMismatch { .. }))
    }

    pub fn texts(&self) -> impl Iterator<Item = &str> {
        self.scenes.iter().map(|s| s.text.as_str())
    }
}

/// Builds the expansion prompt, asks the client, and parses the answer.
/// Client failures and unparseable answers are retried `retries` times with
/// the same prompt; the last failure is returned once attempts run out.
pub fn expand(
    brief: &UserBrief,
    client: &dyn TextExpansionClient,
    retries: usize,
) -> Result<ScriptSequence, ScriptError> {
    let prompt = build_expansion_prompt(brief)?;
    let request = CompletionRequest::new(prompt);
    let mut last_err = ScriptError::Parse;
    for attempt in 0..=retries {
        match client.complete(&request) {
            Ok(raw) => match parse_scripts(&raw, brief) {
                Ok(seq) => return Ok(seq),
                Err(e) => {
                    log::warn!("expansion attempt {attempt}: {e}");
                    last_err = e;
                }
            },
            Err(e) => {
                log::warn!("expansion attempt {attempt}: {e}");
                last_err = ScriptError::Client(e);
            }
        }
    }
    Err(last_err)
}
