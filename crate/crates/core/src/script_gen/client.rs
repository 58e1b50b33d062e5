use std::collections::HashMap;
use std::path::Path;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{keyword_vote, parse_scripts, UserBrief};
use super::prompt::build_expansion_prompt;

#[derive(Debug, thiserror::Error)]
pub enum ClientError {
    #[error("transport failure: {0}")]
    Transport(String),
    #[error("endpoint returned status {status}: {body}")]
    Status { status: u16, body: String },
    #[error("malformed response: {0}")]
    Protocol(String),
    #[error("environment variable {0} holding the API key is not set")]
    MissingKey(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompletionRequest {
    pub prompt: String,
    pub temperature: f64,
    pub max_tokens: usize,
}

impl CompletionRequest {
    pub fn new(prompt: impl Into<String>) -> Self {
        Self {
            prompt: prompt.into(),
            temperature: 0.7,
            max_tokens: 1024,
        }
    }
}

/// One prompt in, one completion out. Implementations must be callable from
/// several threads at once.
pub trait TextExpansionClient: Send + Sync {
    fn complete(&self, request: &CompletionRequest) -> Result<String, ClientError>;
}

pub fn prompt_key(prompt: &str) -> String {
    hex::encode(Sha256::digest(prompt.as_bytes()))
}

/// Offline client. Answers come from a fixture table keyed by the SHA-256 of
/// the prompt; unknown prompts get a deterministic synthesized answer so the
/// whole pipeline runs without network access.
#[derive(Debug, Clone, Default)]
pub struct StubClient {
    fixtures: HashMap<String, String>,
}

const SHOTS: [&str; 6] = [
    "Close-up",
    "Wide aerial shot",
    "Tracking shot",
    "Low-angle shot",
    "Medium shot",
    "Slow-motion shot",
];

const BEATS: [&str; 6] = [
    "introducing the scene in warm morning light",
    "moving fast across the frame",
    "turning sharply as dust rises",
    "racing side by side",
    "approaching the finish line",
    "celebrating the victory under a golden sky",
];

const RACE_SCENES: [&str; 10] = [
    "Close-up of an airplane soaring through the sky, 4K, high resolution",
    "Close-up of a car speeding along a coastal road, 4K, high resolution",
    "The car drifting around a hairpin turn, tires smoking, 4K, high resolution",
    "The airplane diving through a narrow canyon, 4K, high resolution",
    "Wide shot of the car and airplane racing side by side, 4K, high resolution",
    "The car jumping over a desert dune, 4K, high resolution",
    "The airplane skimming low over the sea, 4K, high resolution",
    "The car bursting out of a mountain tunnel, 4K, high resolution",
    "Both racers approaching the finish line at full speed, 4K, high resolution",
    "A checkered flag waving in victory, 4K, high resolution",
];

impl StubClient {
    pub fn new() -> Self {
        Self::default()
    }

    /// Stub preloaded with the car-versus-airplane race answer.
    pub fn with_builtin_fixtures() -> Self {
        let mut stub = Self::new();
        let brief = UserBrief::with_defaults("a race between a car and an airplane");
        if let Ok(prompt) = build_expansion_prompt(&brief) {
            let answer = RACE_SCENES
                .iter()
                .enumerate()
                .map(|(i, s)| format!("{}. {s}", i + 1))
                .collect::<Vec<_>>()
                .join("\n");
            stub.insert(&prompt, answer);
        }
        stub
    }

    pub fn insert(&mut self, prompt: &str, response: impl Into<String>) {
        self.fixtures.insert(prompt_key(prompt), response.into());
    }

    /// Loads a JSON object mapping prompt hashes (hex SHA-256) to responses.
    pub fn load_fixtures(&mut self, path: &Path) -> Result<(), ClientError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ClientError::Transport(format!("{}: {e}", path.display())))?;
        let table: HashMap<String, String> =
            serde_json::from_str(&text).map_err(|e| ClientError::Protocol(e.to_string()))?;
        self.fixtures.extend(table);
        Ok(())
    }

    fn synthesize(&self, prompt: &str) -> String {
        let subject = prompt
            .starts_with("Write a sequence of prompts")
            .then(|| prompt.rsplit_once("The movie is about "))
            .flatten()
            .map(|(_, s)| s);
        if let Some(subject) = subject {
            let n = prompt
                .split("write ")
                .nth(1)
                .and_then(|rest| rest.split_whitespace().next())
                .and_then(|n| n.parse::<usize>().ok())
                .unwrap_or(10);
            let seed = u64::from_le_bytes(Sha256::digest(subject.as_bytes())[..8].try_into().unwrap());
            return (0..n)
                .map(|i| {
                    let shot = SHOTS[(seed as usize + i) % SHOTS.len()];
                    let beat = BEATS[i * BEATS.len() / n.max(1)];
                    format!("{}. {shot} of {subject}, {beat}, 4K, high resolution", i + 1)
                })
                .collect::<Vec<_>>()
                .join("\n");
        }
        if let Some((_, listing)) = prompt.split_once("\nScripts:") {
            let brief = UserBrief::new("tone", 1, 1.0);
            if let Ok(scripts) = parse_scripts(listing, &brief) {
                return format!("The tone is {}.", keyword_vote(&scripts).category);
            }
        }
        String::from("I am a stub and have no answer for this prompt.")
    }
}

impl TextExpansionClient for StubClient {
    fn complete(&self, request: &CompletionRequest) -> Result<String, ClientError> {
        Ok(self
            .fixtures
            .get(&prompt_key(&request.prompt))
            .cloned()
            .unwrap_or_else(|| self.synthesize(&request.prompt)))
    }
}

/// JSON-over-HTTP completion endpoint.
///
/// Sends `{"prompt", "temperature", "max_tokens"}` and accepts either
/// `{"completion": "..."}` or an OpenAI-style `choices` array.
#[derive(Debug, Clone)]
pub struct HttpClient {
    endpoint: String,
    api_key: Option<String>,
    timeout: Duration,
}

impl HttpClient {
    pub fn new(endpoint: impl Into<String>, api_key: Option<String>) -> Self {
        Self {
            endpoint: endpoint.into(),
            api_key,
            timeout: Duration::from_secs(60),
        }
    }

    /// Reads the key from the named environment variable.
    pub fn from_env(endpoint: impl Into<String>, key_var: &str) -> Result<Self, ClientError> {
        let key = std::env::var(key_var).map_err(|_| ClientError::MissingKey(key_var.to_string()))?;
        Ok(Self::new(endpoint, Some(key)))
    }

    pub fn with_timeout(mut self, timeout: Duration) -> Self {
        self.timeout = timeout;
        self
    }
}

fn extract_completion(body: &serde_json::Value) -> Option<String> {
    if let Some(s) = body.get("completion").and_then(|v| v.as_str()) {
        return Some(s.to_string());
    }
    let choice = body.get("choices")?.get(0)?;
    choice
        .get("text")
        .or_else(|| choice.get("message").and_then(|m| m.get("content")))
        .and_then(|v| v.as_str())
        .map(str::to_string)
}

impl TextExpansionClient for HttpClient {
    fn complete(&self, request: &CompletionRequest) -> Result<String, ClientError> {
        let mut call = ureq::post(&self.endpoint).timeout(self.timeout);
        if let Some(key) = &self.api_key {
            call = call.set("Authorization", &format!("Bearer {key}"));
        }
        let response = match call.send_json(request) {
            Ok(r) => r,
            Err(ureq::Error::Status(status, r)) => {
                return Err(ClientError::Status {
                    status,
                    body: r.into_string().unwrap_or_default(),
                })
            }
            Err(e) => return Err(ClientError::Transport(e.to_string())),
        };
        let body: serde_json::Value = response
            .into_json()
            .map_err(|e| ClientError::Protocol(e.to_string()))?;
        extract_completion(&body)
            .ok_or_else(|| ClientError::Protocol("no completion text in response".into()))
    }
}
