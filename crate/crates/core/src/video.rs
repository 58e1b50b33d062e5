use candle_core::{DType, Device, Tensor};

use crate::video_model::ModelError;

/// Rank-5 video batch laid out as `[batch, frames, channels, height, width]`.
///
/// Holds pixel-space clips in `[-1, 1]`, noisy diffusion states, and noise
/// predictions alike.
#[derive(Debug, Clone)]
pub struct VideoArray(Tensor);

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct VideoDims {
    pub batch: usize,
    pub frames: usize,
    pub channels: usize,
    pub height: usize,
    pub width: usize,
}

impl VideoDims {
    pub fn numel(&self) -> usize {
        self.batch * self.frames * self.channels * self.height * self.width
    }

    pub fn frame_numel(&self) -> usize {
        self.channels * self.height * self.width
    }
}

impl VideoArray {
    pub fn new(tensor: Tensor) -> Result<Self, ModelError> {
        if tensor.rank() != 5 {
            return Err(ModelError::Shape(format!(
                "video arrays are rank 5, got shape {:?}",
                tensor.dims()
            )));
        }
        Ok(Self(tensor))
    }

    pub fn from_vec(data: Vec<f32>, dims: VideoDims, device: &Device) -> Result<Self, ModelError> {
        let shape = (dims.batch, dims.frames, dims.channels, dims.height, dims.width);
        Self::new(Tensor::from_vec(data, shape, device)?)
    }

    pub fn zeros(dims: VideoDims, dtype: DType, device: &Device) -> Result<Self, ModelError> {
        let shape = (dims.batch, dims.frames, dims.channels, dims.height, dims.width);
        Self::new(Tensor::zeros(shape, dtype, device)?)
    }

    pub fn dims(&self) -> VideoDims {
        let d = self.0.dims();
        VideoDims {
            batch: d[0],
            frames: d[1],
            channels: d[2],
            height: d[3],
            width: d[4],
        }
    }

    pub fn tensor(&self) -> &Tensor {
        &self.0
    }

    pub fn into_tensor(self) -> Tensor {
        self.0
    }

    /// Flattened values in row-major order, as `f32`.
    pub fn to_vec(&self) -> Result<Vec<f32>, ModelError> {
        Ok(self.0.to_dtype(DType::F32)?.flatten_all()?.to_vec1::<f32>()?)
    }

    /// One clip of the batch, still rank 5 with batch size 1.
    pub fn item(&self, index: usize) -> Result<VideoArray, ModelError> {
        Self::new(self.0.narrow(0, index, 1)?)
    }

    /// Concatenates along the batch axis.
    pub fn cat(items: &[VideoArray]) -> Result<VideoArray, ModelError> {
        let tensors: Vec<&Tensor> = items.iter().map(|v| &v.0).collect();
        Self::new(Tensor::cat(&tensors, 0)?)
    }

    pub fn all_finite(&self) -> Result<bool, ModelError> {
        Ok(self.to_vec()?.iter().all(|v| v.is_finite()))
    }
}
