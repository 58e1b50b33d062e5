use std::fs;
use std::path::{Path, PathBuf};

use candle_core::Device;
use image::{imageops, Rgb, RgbImage};
use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{DiffusionError, Result};
use crate::video::{VideoArray, VideoDims};

pub const SIDECAR: &str = "clip.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClipMeta {
    pub caption: String,
    pub domain: usize,
    #[serde(default = "default_fps")]
    pub fps: f64,
}

fn default_fps() -> f64 {
    8.0
}

/// One training clip, channel-first frames in `[-1, 1]`.
#[derive(Debug, Clone)]
pub struct Clip {
    pub meta: ClipMeta,
    frames: usize,
    channels: usize,
    height: usize,
    width: usize,
    data: Vec<f32>,
}

impl Clip {
    pub fn new(meta: ClipMeta, frames: usize, channels: usize, height: usize, width: usize, data: Vec<f32>) -> Result<Self> {
        if data.len() != frames * channels * height * width || frames == 0 {
            return Err(DiffusionError::Dataset(format!(
                "clip data has {} values for {frames}x{channels}x{height}x{width}",
                data.len()
            )));
        }
        Ok(Self {
            meta,
            frames,
            channels,
            height,
            width,
            data,
        })
    }

    pub fn frames(&self) -> usize {
        self.frames
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn values(&self) -> &[f32] {
        &self.data
    }

    fn at(&self, f: usize, c: usize, y: usize, x: usize) -> f32 {
        self.data[((f * self.channels + c) * self.height + y) * self.width + x]
    }

    pub fn to_video(&self) -> Result<VideoArray> {
        let dims = VideoDims {
            batch: 1,
            frames: self.frames,
            channels: self.channels,
            height: self.height,
            width: self.width,
        };
        Ok(VideoArray::from_vec(self.data.clone(), dims, &Device::Cpu)?)
    }

    /// Cuts a `height x width` window at `(top, left)` from frames
    /// `first..first + count`, optionally mirrored left to right.
    pub fn crop(&self, first: usize, count: usize, top: usize, left: usize, height: usize, width: usize, flip: bool) -> Vec<f32> {
        let mut out = Vec::with_capacity(count * self.channels * height * width);
        for f in first..first + count {
            for c in 0..self.channels {
                for y in 0..height {
                    for x in 0..width {
                        let sx = if flip { left + width - 1 - x } else { left + x };
                        out.push(self.at(f, c, top + y, sx));
                    }
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Augment {
    pub random_crop: bool,
    pub random_flip: bool,
}

impl Default for Augment {
    fn default() -> Self {
        Self {
            random_crop: true,
            random_flip: true,
        }
    }
}

impl Augment {
    pub fn none() -> Self {
        Self {
            random_crop: false,
            random_flip: false,
        }
    }
}

/// A single-domain minibatch.
#[derive(Debug, Clone)]
pub struct Batch {
    pub video: VideoArray,
    pub captions: Vec<String>,
    pub domain: usize,
}

#[derive(Debug, Clone, Default)]
pub struct ClipDataset {
    clips: Vec<Clip>,
}

impl ClipDataset {
    pub fn new(clips: Vec<Clip>) -> Self {
        Self { clips }
    }

    pub fn clips(&self) -> &[Clip] {
        &self.clips
    }

    pub fn len(&self) -> usize {
        self.clips.len()
    }

    pub fn is_empty(&self) -> bool {
        self.clips.is_empty()
    }

    /// Distinct domain ids, ascending.
    pub fn domains(&self) -> Vec<usize> {
        let mut d: Vec<usize> = self.clips.iter().map(|c| c.meta.domain).collect();
        d.sort_unstable();
        d.dedup();
        d
    }

    pub fn indices_for(&self, domain: usize) -> Vec<usize> {
        (0..self.clips.len()).filter(|&i| self.clips[i].meta.domain == domain).collect()
    }

    /// Loads every clip subdirectory of `dir` in name order. Frames are
    /// resized so they just cover `height x width` plus a crop margin.
    pub fn load(dir: impl AsRef<Path>, height: usize, width: usize) -> Result<Self> {
        let (th, tw) = load_size(height, width);
        Self::load_exact(dir, th, tw)
    }

    /// Like [`ClipDataset::load`] but resizes frames to exactly `height x width`.
    pub fn load_exact(dir: impl AsRef<Path>, height: usize, width: usize) -> Result<Self> {
        let dir = dir.as_ref();
        let mut subdirs: Vec<PathBuf> = fs::read_dir(dir)
            .map_err(|e| DiffusionError::Dataset(format!("{}: {e}", dir.display())))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.join(SIDECAR).is_file())
            .collect();
        subdirs.sort();
        let clips = subdirs
            .iter()
            .map(|d| load_clip(d, height, width))
            .collect::<Result<Vec<_>>>()?;
        if clips.is_empty() {
            return Err(DiffusionError::EmptyDataset);
        }
        Ok(Self { clips })
    }

    pub fn save(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        for (i, clip) in self.clips.iter().enumerate() {
            let sub = dir.join(format!("clip_{i:04}"));
            fs::create_dir_all(&sub)?;
            for f in 0..clip.frames {
                frame_to_image(clip, f)?.save(sub.join(format!("frame_{f:04}.png")))?;
            }
            fs::write(sub.join(SIDECAR), serde_json::to_vec_pretty(&clip.meta)?)?;
        }
        Ok(())
    }

    /// Draws `batch` items of one domain, each cut to `frames x height x width`
    /// with a random start frame, crop window and flip.
    pub fn sample_batch(
        &self,
        domain: usize,
        batch: usize,
        frames: usize,
        height: usize,
        width: usize,
        augment: Augment,
        rng: &mut ChaCha8Rng,
    ) -> Result<Batch> {
        let pool = self.indices_for(domain);
        if pool.is_empty() {
            return Err(DiffusionError::Dataset(format!("no clips for domain {domain}")));
        }
        let mut data = Vec::new();
        let mut captions = Vec::with_capacity(batch);
        let mut channels = 0;
        for _ in 0..batch {
            let clip = &self.clips[*pool.choose(rng).expect("non-empty pool")];
            if clip.frames < frames || clip.height < height || clip.width < width {
                return Err(DiffusionError::Dataset(format!(
                    "clip {:?} is {}x{}x{}, smaller than {frames}x{height}x{width}",
                    clip.meta.caption, clip.frames, clip.height, clip.width
                )));
            }
            channels = clip.channels;
            captions.push(clip.meta.caption.clone());
            let first = rng.random_range(0..=clip.frames - frames);
            let (top, left) = if augment.random_crop {
                (rng.random_range(0..=clip.height - height), rng.random_range(0..=clip.width - width))
            } else {
                ((clip.height - height) / 2, (clip.width - width) / 2)
            };
            let flip = augment.random_flip && rng.random_bool(0.5);
            data.extend(clip.crop(first, frames, top, left, height, width, flip));
        }
        let dims = VideoDims {
            batch,
            frames,
            channels,
            height,
            width,
        };
        Ok(Batch {
            video: VideoArray::from_vec(data, dims, &Device::Cpu)?,
            captions,
            domain,
        })
    }
}

/// Size frames are resized to on load: the target plus an eighth for cropping.
pub fn load_size(height: usize, width: usize) -> (usize, usize) {
    (height + height / 8, width + width / 8)
}

fn to_unit(v: u8) -> f32 {
    v as f32 / 127.5 - 1.0
}

pub fn to_byte(v: f32) -> u8 {
    ((v.clamp(-1.0, 1.0) + 1.0) * 127.5).round() as u8
}

fn frame_to_image(clip: &Clip, f: usize) -> Result<RgbImage> {
    if clip.channels != 3 {
        return Err(DiffusionError::Dataset("PNG export needs 3 channels".into()));
    }
    Ok(RgbImage::from_fn(clip.width as u32, clip.height as u32, |x, y| {
        let px = |c| to_byte(clip.at(f, c, y as usize, x as usize));
        Rgb([px(0), px(1), px(2)])
    }))
}

fn load_clip(dir: &Path, height: usize, width: usize) -> Result<Clip> {
    let meta: ClipMeta = serde_json::from_slice(&fs::read(dir.join(SIDECAR))?)
        .map_err(|e| DiffusionError::Dataset(format!("{}: {e}", dir.join(SIDECAR).display())))?;
    let mut frames: Vec<PathBuf> = fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x.eq_ignore_ascii_case("png")))
        .collect();
    frames.sort();
    if frames.is_empty() {
        return Err(DiffusionError::Dataset(format!("{} has no PNG frames", dir.display())));
    }
    let mut data = Vec::with_capacity(frames.len() * 3 * height * width);
    for path in &frames {
        let img = image::open(path)?.to_rgb8();
        let img = if img.dimensions() != (width as u32, height as u32) {
            imageops::resize(&img, width as u32, height as u32, imageops::FilterType::Triangle)
        } else {
            img
        };
        for c in 0..3 {
            for y in 0..height as u32 {
                for x in 0..width as u32 {
                    data.push(to_unit(img.get_pixel(x, y)[c]));
                }
            }
        }
    }
    Clip::new(meta, frames.len(), 3, height, width, data)
}

/// Brightness palette of a synthetic domain: background and square levels.
pub fn square_palette(domain: usize) -> (f32, f32) {
    match domain % 2 {
        0 => (0.5, 1.0),
        _ => (-0.8, -0.2),
    }
}

/// A square gliding over a flat background, bouncing off the edges.
/// Even domains are bright, odd domains dark.
pub fn moving_square_clip(rng: &mut ChaCha8Rng, domain: usize, frames: usize, height: usize, width: usize) -> Clip {
    let side = (height / 3).max(2);
    let (bg, fg) = square_palette(domain);
    let mut y = rng.random_range(0..=height - side) as i64;
    let mut x = rng.random_range(0..=width - side) as i64;
    let mut vy: i64 = [-1, 0, 1][rng.random_range(0..3)];
    let mut vx: i64 = if rng.random_bool(0.5) { 1 } else { -1 };
    let mut data = Vec::with_capacity(frames * 3 * height * width);
    for _ in 0..frames {
        for _c in 0..3 {
            for py in 0..height as i64 {
                for px in 0..width as i64 {
                    let inside = py >= y && py < y + side as i64 && px >= x && px < x + side as i64;
                    data.push(if inside { fg } else { bg });
                }
            }
        }
        if x + vx < 0 || x + vx + side as i64 > width as i64 {
            vx = -vx;
        }
        if y + vy < 0 || y + vy + side as i64 > height as i64 {
            vy = -vy;
        }
        x += vx;
        y += vy;
    }
    let shade = if domain % 2 == 0 { "bright" } else { "dark" };
    let way = if vx > 0 { "right" } else { "left" };
    let meta = ClipMeta {
        caption: format!("a {shade} square moving {way}"),
        domain,
        fps: 8.0,
    };
    Clip::new(meta, frames, 3, height, width, data).expect("sizes agree")
}

/// `per_domain` moving-square clips for each of `domains`.
pub fn moving_squares(seed: u64, domains: &[usize], per_domain: usize, frames: usize, height: usize, width: usize) -> ClipDataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut clips = Vec::new();
    for &d in domains {
        for _ in 0..per_domain {
            clips.push(moving_square_clip(&mut rng, d, frames, height, width));
        }
    }
    ClipDataset::new(clips)
}
