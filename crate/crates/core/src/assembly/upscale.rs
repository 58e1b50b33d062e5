use image::{imageops, Rgb, RgbImage};

use super::{AssemblyError, MovieTimeline, Result};
use crate::diffusion::to_byte;
use crate::video::{VideoArray, VideoDims};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("{0}")]
pub struct UpscaleError(pub String);

/// Image in, image out. `scale` is the factor applied to both sides.
pub trait Upscaler: Send + Sync {
    fn scale(&self) -> u32;
    fn upscale(&self, frame: &RgbImage) -> std::result::Result<RgbImage, UpscaleError>;
}

#[derive(Debug, Clone, Copy, Default)]
pub struct IdentityUpscaler;

impl Upscaler for IdentityUpscaler {
    fn scale(&self) -> u32 {
        1
    }

    fn upscale(&self, frame: &RgbImage) -> std::result::Result<RgbImage, UpscaleError> {
        Ok(frame.clone())
    }
}

/// Pixel replication by an integer factor.
#[derive(Debug, Clone, Copy)]
pub struct NearestUpscaler(pub u32);

impl Upscaler for NearestUpscaler {
    fn scale(&self) -> u32 {
        self.0
    }

    fn upscale(&self, frame: &RgbImage) -> std::result::Result<RgbImage, UpscaleError> {
        if self.0 == 0 {
            return Err(UpscaleError("scale factor 0".into()));
        }
        let (w, h) = frame.dimensions();
        Ok(imageops::resize(frame, w * self.0, h * self.0, imageops::FilterType::Nearest))
    }
}

/// Quantizes each frame of a one-clip video to 8-bit RGB.
pub fn frame_images(video: &VideoArray) -> Result<Vec<RgbImage>> {
    let d = video.dims();
    let v = video.to_vec()?;
    let plane = d.height * d.width;
    Ok((0..d.frames)
        .map(|f| {
            let base = f * d.frame_numel();
            RgbImage::from_fn(d.width as u32, d.height as u32, |x, y| {
                let i = y as usize * d.width + x as usize;
                Rgb([0, 1, 2].map(|c| to_byte(v[base + c * plane + i])))
            })
        })
        .collect())
}

fn from_images(frames: &[RgbImage]) -> Result<VideoArray> {
    let (w, h) = frames[0].dimensions();
    let mut data = Vec::with_capacity(frames.len() * 3 * (w * h) as usize);
    for img in frames {
        for c in 0..3 {
            data.extend(img.pixels().map(|p| p[c] as f32 / 127.5 - 1.0));
        }
    }
    let dims = VideoDims {
        batch: 1,
        frames: frames.len(),
        channels: 3,
        height: h as usize,
        width: w as usize,
    };
    Ok(VideoArray::from_vec(data, dims, &candle_core::Device::Cpu)?)
}

/// Routes every frame through `client`, scene by scene. On failure the
/// error names the scene; scenes before it keep their upscaled frames.
pub fn apply_upscaler(timeline: &mut MovieTimeline, client: &dyn Upscaler) -> Result<()> {
    let k = client.scale();
    for clip in timeline.scenes.iter_mut() {
        let scene = clip.scene.index;
        let fail = |detail: String| AssemblyError::Upscale { scene, detail };
        let mut out = Vec::with_capacity(clip.frame_count());
        for img in frame_images(&clip.frames)? {
            let up = client.upscale(&img).map_err(|e| fail(e.0))?;
            if up.dimensions() != (img.width() * k, img.height() * k) {
                return Err(fail(format!(
                    "client reported scale {k} but returned {:?} for {:?}",
                    up.dimensions(),
                    img.dimensions()
                )));
            }
            out.push(up);
        }
        clip.frames = from_images(&out)?;
        clip.scale *= k;
    }
    Ok(())
}
