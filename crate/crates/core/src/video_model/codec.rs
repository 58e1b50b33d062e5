use crate::video::VideoArray;

use super::Result;

/// Maps pixel-space clips to the space the denoiser works in and back.
pub trait FrameCodec: Send + Sync {
    fn encode(&self, pixels: &VideoArray) -> Result<VideoArray>;
    fn decode(&self, latents: &VideoArray) -> Result<VideoArray>;
}

/// The denoiser runs directly on pixels.
#[derive(Debug, Clone, Copy, Default)]
pub struct IdentityCodec;

impl FrameCodec for IdentityCodec {
    fn encode(&self, pixels: &VideoArray) -> Result<VideoArray> {
        Ok(pixels.clone())
    }

    fn decode(&self, latents: &VideoArray) -> Result<VideoArray> {
        Ok(latents.clone())
    }
}
