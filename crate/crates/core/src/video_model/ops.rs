//! Differentiable building blocks expressed with plain tensor ops, so every
//! backward pass goes through matmuls and elementwise kernels.

use candle_core::{DType, Device, Tensor, D};

use super::{ModelError, Result};

const NORM_EPS: f64 = 1e-5;

/// Sinusoidal position table `[positions.len(), dim]` in `f64`.
///
/// Column `2k` holds `sin(p * 10000^(-2k/dim))` and column `2k+1` the matching
/// cosine. Shared by the diffusion timestep embedding and the frame-position
/// encoding of temporal attention.
pub fn sinusoidal_embedding(positions: &[usize], dim: usize, device: &Device) -> Result<Tensor> {
    if dim == 0 || dim % 2 != 0 {
        return Err(ModelError::Shape(format!(
            "sinusoidal embedding dimension must be even and positive, got {dim}"
        )));
    }
    let mut data = Vec::with_capacity(positions.len() * dim);
    for &p in positions {
        for k in 0..dim / 2 {
            let freq = 10000f64.powf(-2.0 * k as f64 / dim as f64);
            let angle = p as f64 * freq;
            data.push(angle.sin());
            data.push(angle.cos());
        }
    }
    Ok(Tensor::from_vec(data, (positions.len(), dim), device)?)
}

fn channel_view(v: &Tensor, rank: usize, channel_dim: usize) -> Result<Tensor> {
    let c = v.elem_count();
    let mut shape = vec![1usize; rank];
    shape[channel_dim] = c;
    Ok(v.reshape(shape)?)
}

/// `x * scale + shift` with per-channel vectors broadcast over every other axis.
pub fn channel_affine(x: &Tensor, scale: &Tensor, shift: &Tensor, channel_dim: usize) -> Result<Tensor> {
    let c = x.dim(channel_dim)?;
    if scale.elem_count() != c || shift.elem_count() != c {
        return Err(ModelError::Shape(format!(
            "channel mismatch: input has {c} channels, affine has {}/{}",
            scale.elem_count(),
            shift.elem_count()
        )));
    }
    let rank = x.rank();
    let scale = channel_view(scale, rank, channel_dim)?;
    let shift = channel_view(shift, rank, channel_dim)?;
    Ok(x.broadcast_mul(&scale)?.broadcast_add(&shift)?)
}

/// Group normalization without affine, for `[n, c, ...]` inputs.
pub fn group_norm(x: &Tensor, groups: usize) -> Result<Tensor> {
    let dims = x.dims().to_vec();
    let n = dims[0];
    let xg = x.reshape((n, groups, ()))?;
    let mean = xg.mean_keepdim(D::Minus1)?;
    let centered = xg.broadcast_sub(&mean)?;
    let var = centered.sqr()?.mean_keepdim(D::Minus1)?;
    let normed = centered.broadcast_div(&(var + NORM_EPS)?.sqrt()?)?;
    Ok(normed.reshape(dims)?)
}

/// Layer normalization over the last axis, without affine.
pub fn layer_norm(x: &Tensor) -> Result<Tensor> {
    let mean = x.mean_keepdim(D::Minus1)?;
    let centered = x.broadcast_sub(&mean)?;
    let var = centered.sqr()?.mean_keepdim(D::Minus1)?;
    Ok(centered.broadcast_div(&(var + NORM_EPS)?.sqrt()?)?)
}

/// `x @ w + b` over the last axis; `w` is `[in, out]`.
pub fn linear(x: &Tensor, w: &Tensor, b: &Tensor) -> Result<Tensor> {
    let dims = x.dims().to_vec();
    let inner = *dims.last().unwrap();
    let rows = x.elem_count() / inner;
    let out = w.dim(1)?;
    let y = x.reshape((rows, inner))?.matmul(w)?.broadcast_add(b)?;
    let mut shape = dims;
    *shape.last_mut().unwrap() = out;
    Ok(y.reshape(shape)?)
}

/// 3x3 convolution, stride 1, zero padding 1, on `[n, c, h, w]`.
/// The weight is laid out `[9 * c_in, c_out]` with tap-major rows.
pub fn conv3x3(x: &Tensor, w: &Tensor, b: &Tensor) -> Result<Tensor> {
    let (n, c, h, wd) = x.dims4()?;
    let padded = x.pad_with_zeros(2, 1, 1)?.pad_with_zeros(3, 1, 1)?;
    let mut taps = Vec::with_capacity(9);
    for dy in 0..3 {
        for dx in 0..3 {
            taps.push(padded.narrow(2, dy, h)?.narrow(3, dx, wd)?);
        }
    }
    let cols = Tensor::cat(&taps, 1)?
        .permute((0, 2, 3, 1))?
        .reshape((n * h * wd, 9 * c))?;
    let co = w.dim(1)?;
    let y = cols.matmul(w)?.broadcast_add(b)?;
    Ok(y.reshape((n, h, wd, co))?.permute((0, 3, 1, 2))?.contiguous()?)
}

/// 1x1 convolution on `[n, c, h, w]`; the weight is `[c_in, c_out]`.
pub fn conv1x1(x: &Tensor, w: &Tensor, b: &Tensor) -> Result<Tensor> {
    let (n, c, h, wd) = x.dims4()?;
    let co = w.dim(1)?;
    let y = x
        .permute((0, 2, 3, 1))?
        .reshape((n * h * wd, c))?
        .matmul(w)?
        .broadcast_add(b)?;
    Ok(y.reshape((n, h, wd, co))?.permute((0, 3, 1, 2))?.contiguous()?)
}

/// Kernel-3 convolution along the last axis of `[m, c, len]` with zero
/// padding; the weight is `[3 * c_in, c_out]`.
pub fn conv1d_k3(x: &Tensor, w: &Tensor, b: &Tensor) -> Result<Tensor> {
    let (m, c, len) = x.dims3()?;
    let padded = x.pad_with_zeros(2, 1, 1)?;
    let taps: Vec<Tensor> = (0..3)
        .map(|k| padded.narrow(2, k, len))
        .collect::<candle_core::Result<_>>()?;
    let cols = Tensor::cat(&taps, 1)?.permute((0, 2, 1))?.reshape((m * len, 3 * c))?;
    let co = w.dim(1)?;
    let y = cols.matmul(w)?.broadcast_add(b)?;
    Ok(y.reshape((m, len, co))?.permute((0, 2, 1))?.contiguous()?)
}

/// Scaled dot-product attention with `heads` heads.
/// `q` is `[n, lq, c]`, `k` and `v` are `[n, lk, c]`.
pub fn attention(q: &Tensor, k: &Tensor, v: &Tensor, heads: usize) -> Result<Tensor> {
    let (n, lq, c) = q.dims3()?;
    let lk = k.dim(1)?;
    let hd = c / heads;
    let split = |t: &Tensor, l: usize| -> candle_core::Result<Tensor> {
        t.reshape((n, l, heads, hd))?
            .transpose(1, 2)?
            .contiguous()?
            .reshape((n * heads, l, hd))
    };
    let (q, k, v) = (split(q, lq)?, split(k, lk)?, split(v, lk)?);
    let scores = (q.matmul(&k.t()?)? * (1.0 / (hd as f64).sqrt()))?;
    let weights = candle_nn::ops::softmax(&scores, D::Minus1)?;
    let out = weights.matmul(&v)?;
    Ok(out
        .reshape((n, heads, lq, hd))?
        .transpose(1, 2)?
        .contiguous()?
        .reshape((n, lq, c))?)
}

/// 2x2 average pooling on `[n, c, h, w]`.
pub fn downsample2(x: &Tensor) -> Result<Tensor> {
    let (n, c, h, w) = x.dims4()?;
    Ok(x.reshape((n, c, h / 2, 2, w / 2, 2))?
        .sum(5)?
        .sum(3)?
        .affine(0.25, 0.0)?)
}

/// Nearest-neighbour 2x upsampling on `[n, c, h, w]`.
pub fn upsample2(x: &Tensor) -> Result<Tensor> {
    let (n, c, h, w) = x.dims4()?;
    Ok(x.reshape((n, c, h, 1, w, 1))?
        .broadcast_as((n, c, h, 2, w, 2))?
        .reshape((n, c, 2 * h, 2 * w))?)
}

/// `[b * f, c, h, w]` frames to `[b * h * w, c, f]` sequences along time.
pub fn frames_to_sequences(x: &Tensor, frames: usize) -> Result<Tensor> {
    let (bf, c, h, w) = x.dims4()?;
    let b = bf / frames;
    Ok(x.reshape((b, frames, c, h, w))?
        .permute((0, 3, 4, 2, 1))?
        .contiguous()?
        .reshape((b * h * w, c, frames))?)
}

/// Inverse of [`frames_to_sequences`].
pub fn sequences_to_frames(x: &Tensor, batch: usize, h: usize, w: usize) -> Result<Tensor> {
    let (_, c, frames) = x.dims3()?;
    Ok(x.reshape((batch, h, w, c, frames))?
        .permute((0, 4, 3, 1, 2))?
        .contiguous()?
        .reshape((batch * frames, c, h, w))?)
}

pub fn to_dtype(t: Tensor, dtype: DType) -> Result<Tensor> {
    Ok(if t.dtype() == dtype { t } else { t.to_dtype(dtype)? })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn t(data: &[f64], shape: &[usize]) -> Tensor {
        Tensor::from_vec(data.to_vec(), shape, &Device::Cpu).unwrap()
    }

    #[test]
    fn sinusoid_position_zero() {
        let e = sinusoidal_embedding(&[0], 8, &Device::Cpu).unwrap().to_vec2::<f64>().unwrap();
        for k in 0..4 {
            assert_eq!(e[0][2 * k], 0.0);
            assert_eq!(e[0][2 * k + 1], 1.0);
        }
    }

    #[test]
    fn sinusoid_dim4_position1() {
        let e = sinusoidal_embedding(&[1], 4, &Device::Cpu).unwrap().to_vec2::<f64>().unwrap();
        let want = [1f64.sin(), 1f64.cos(), 0.01f64.sin(), 0.01f64.cos()];
        for (g, w) in e[0].iter().zip(want) {
            assert_relative_eq!(*g, w, epsilon = 1e-15);
        }
    }

    #[test]
    fn sinusoid_odd_dim_rejected() {
        assert!(sinusoidal_embedding(&[1], 5, &Device::Cpu).is_err());
    }

    #[test]
    fn sinusoid_positions_are_distinct() {
        let positions: Vec<usize> = (0..64).collect();
        for dim in [2usize, 4, 16, 32] {
            let e = sinusoidal_embedding(&positions, dim, &Device::Cpu)
                .unwrap()
                .to_vec2::<f64>()
                .unwrap();
            for p in 0..64 {
                for q in p + 1..64 {
                    let max_diff = e[p]
                        .iter()
                        .zip(&e[q])
                        .map(|(a, b)| (a - b).abs())
                        .fold(0.0, f64::max);
                    assert!(max_diff > 1e-9, "dim {dim}: {p} vs {q}");
                }
            }
        }
    }

    /// Direct nested-loop convolution used as the reference.
    fn conv_reference(x: &[f64], c: usize, h: usize, w: usize, wt: &[f64], co: usize) -> Vec<f64> {
        let mut out = vec![0.0; co * h * w];
        for o in 0..co {
            for y in 0..h {
                for xx in 0..w {
                    let mut acc = 0.0;
                    for dy in 0..3 {
                        for dx in 0..3 {
                            let (sy, sx) = (y as isize + dy as isize - 1, xx as isize + dx as isize - 1);
                            if sy < 0 || sx < 0 || sy >= h as isize || sx >= w as isize {
                                continue;
                            }
                            for ci in 0..c {
                                let tap = (dy * 3 + dx) * c + ci;
                                acc += x[ci * h * w + sy as usize * w + sx as usize] * wt[tap * co + o];
                            }
                        }
                    }
                    out[o * h * w + y * w + xx] = acc;
                }
            }
        }
        out
    }

    #[test]
    fn conv3x3_matches_reference() {
        let (c, h, w, co) = (2, 3, 4, 3);
        let x: Vec<f64> = (0..c * h * w).map(|i| (i as f64 * 0.37).sin()).collect();
        let wt: Vec<f64> = (0..9 * c * co).map(|i| (i as f64 * 0.11).cos()).collect();
        let y = conv3x3(&t(&x, &[1, c, h, w]), &t(&wt, &[9 * c, co]), &t(&[0.0; 3], &[co]))
            .unwrap()
            .flatten_all()
            .unwrap()
            .to_vec1::<f64>()
            .unwrap();
        for (g, r) in y.iter().zip(conv_reference(&x, c, h, w, &wt, co)) {
            assert_relative_eq!(*g, r, epsilon = 1e-12);
        }
    }

    #[test]
    fn conv1d_matches_reference() {
        let (c, len, co) = (2, 5, 2);
        let x: Vec<f64> = (0..c * len).map(|i| i as f64 - 3.0).collect();
        let wt: Vec<f64> = (0..3 * c * co).map(|i| (i as f64 * 0.3).sin()).collect();
        let y = conv1d_k3(&t(&x, &[1, c, len]), &t(&wt, &[3 * c, co]), &t(&[0.5, -0.5], &[co]))
            .unwrap()
            .flatten_all()
            .unwrap()
            .to_vec1::<f64>()
            .unwrap();
        for o in 0..co {
            for i in 0..len {
                let mut acc = if o == 0 { 0.5 } else { -0.5 };
                for k in 0..3 {
                    let src = i as isize + k as isize - 1;
                    if src < 0 || src >= len as isize {
                        continue;
                    }
                    for ci in 0..c {
                        acc += x[ci * len + src as usize] * wt[(k * c + ci) * co + o];
                    }
                }
                assert_relative_eq!(y[o * len + i], acc, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn frame_sequence_round_trip() {
        let x = Tensor::arange(0f64, 2.0 * 3.0 * 2.0 * 2.0 * 4.0, &Device::Cpu)
            .unwrap()
            .reshape((6, 2, 2, 4))
            .unwrap();
        let seq = frames_to_sequences(&x, 3).unwrap();
        assert_eq!(seq.dims(), &[2 * 2 * 4, 2, 3]);
        let back = sequences_to_frames(&seq, 2, 2, 4).unwrap();
        assert_eq!(
            back.flatten_all().unwrap().to_vec1::<f64>().unwrap(),
            x.flatten_all().unwrap().to_vec1::<f64>().unwrap()
        );
    }

    #[test]
    fn pooling_shapes() {
        let x = Tensor::ones((1, 2, 4, 8), DType::F32, &Device::Cpu).unwrap();
        let d = downsample2(&x).unwrap();
        assert_eq!(d.dims(), &[1, 2, 2, 4]);
        assert_eq!(d.flatten_all().unwrap().to_vec1::<f32>().unwrap()[0], 1.0);
        assert_eq!(upsample2(&d).unwrap().dims(), &[1, 2, 4, 8]);
    }

    #[test]
    fn affine_identity_is_exact() {
        let x = Tensor::from_vec(vec![1.5f32, -2.25, 3.0, 1e-7], (1, 2, 2), &Device::Cpu).unwrap();
        let ones = Tensor::ones(2, DType::F32, &Device::Cpu).unwrap();
        let zeros = Tensor::zeros(2, DType::F32, &Device::Cpu).unwrap();
        let y = channel_affine(&x, &ones, &zeros, 1).unwrap();
        assert_eq!(
            y.flatten_all().unwrap().to_vec1::<f32>().unwrap(),
            x.flatten_all().unwrap().to_vec1::<f32>().unwrap()
        );
    }
}
