//! Text-to-movie generation at desk scale.
//!
//! A short brief is expanded into per-scene scripts, each scene is rendered by
//! a frozen image denoiser extended with domain-aware spatial adapters and
//! temporal layers, sound effects and one music track are retrieved from an
//! embedding index, and the clips are assembled into an exported timeline.
//!
//! ```text
//! brief ─► script_gen ─► scenes ─► diffusion::sample ─► clips ─┐
//!                          │                                     ├─► assembly ─► manifest.json
//!                          └─► tone ─► audio_retrieval ──────────┘
//! ```

pub mod assembly;
pub mod audio_retrieval;
pub mod diffusion;
pub mod evaluation;
pub mod pipeline;
pub mod script_gen;
pub mod video;
pub mod video_model;

pub use candle_core::{DType, Device, Tensor};
pub use video::{VideoArray, VideoDims};
