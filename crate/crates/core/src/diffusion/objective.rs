use candle_core::{DType, Tensor};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::{DiffusionError, DiffusionSchedule, Result};
use crate::video::VideoArray;
use crate::video_model::{ForwardOptions, ModelError, VideoDenoiser};

/// Anything that predicts the noise in a noisy clip.
pub trait NoisePredictor {
    fn predict_noise(
        &self,
        x_t: &VideoArray,
        t: &[usize],
        cond: &Tensor,
        domain_id: usize,
        opts: ForwardOptions,
    ) -> std::result::Result<VideoArray, ModelError>;
}

impl NoisePredictor for VideoDenoiser {
    fn predict_noise(
        &self,
        x_t: &VideoArray,
        t: &[usize],
        cond: &Tensor,
        domain_id: usize,
        opts: ForwardOptions,
    ) -> std::result::Result<VideoArray, ModelError> {
        self.forward(x_t, t, cond, domain_id, opts)
    }
}

/// Standard-normal array shaped like `like`, drawn from `rng`.
pub fn gaussian_like(like: &VideoArray, rng: &mut ChaCha8Rng) -> Result<VideoArray> {
    let d = like.dims();
    let v: Vec<f32> = (0..d.numel()).map(|_| StandardNormal.sample(rng)).collect();
    let x = VideoArray::from_vec(v, d, like.tensor().device())?;
    Ok(VideoArray::new(x.tensor().to_dtype(like.tensor().dtype())?)?)
}

/// Epsilon-prediction loss for one batch: draws `t` uniformly from `1..=T`
/// and `eps` from a standard normal, both from `rng`, and returns the mean
/// squared error as a scalar tensor that still carries the graph.
pub fn training_loss(
    model: &dyn NoisePredictor,
    x0: &VideoArray,
    cond: &Tensor,
    domain_id: usize,
    sched: &DiffusionSchedule,
    rng: &mut ChaCha8Rng,
    opts: ForwardOptions,
) -> Result<Tensor> {
    if !x0.all_finite()? {
        return Err(DiffusionError::NonFinite {
            what: "training input".into(),
            step: None,
        });
    }
    let b = x0.dims().batch;
    let t: Vec<usize> = (0..b).map(|_| rng.random_range(1..=sched.steps())).collect();
    let eps = gaussian_like(x0, rng)?;
    let x_t = sched.add_noise(x0, &t, &eps)?;
    let pred = model.predict_noise(&x_t, &t, cond, domain_id, opts)?;
    let loss = (pred.tensor() - eps.tensor())?.sqr()?.mean_all()?;
    let value = loss.to_dtype(DType::F64)?.to_scalar::<f64>()?;
    if !value.is_finite() {
        return Err(DiffusionError::NonFinite {
            what: format!("loss {value}"),
            step: None,
        });
    }
    Ok(loss)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::video::VideoDims;
    use candle_core::{Device, Var};
    use rand::SeedableRng;

    struct Oracle<'a> {
        x0: &'a VideoArray,
        sched: &'a DiffusionSchedule,
    }

    impl NoisePredictor for Oracle<'_> {
        fn predict_noise(&self, x_t: &VideoArray, t: &[usize], _: &Tensor, _: usize, _: ForwardOptions) -> std::result::Result<VideoArray, ModelError> {
            // Inverts the forward mix, so it recovers exactly the noise used.
            let ab = self.sched.alpha_bar(t[0]);
            let e = ((x_t.tensor() - (self.x0.tensor() * ab.sqrt())?)? / (1.0 - ab).sqrt())?;
            VideoArray::new(e)
        }
    }

    struct Zero;

    impl NoisePredictor for Zero {
        fn predict_noise(&self, x_t: &VideoArray, _: &[usize], _: &Tensor, _: usize, _: ForwardOptions) -> std::result::Result<VideoArray, ModelError> {
            VideoArray::new(x_t.tensor().zeros_like()?)
        }
    }

    /// `eps_hat = a * x_t + b`.
    struct Micro {
        a: Var,
        b: Var,
    }

    impl NoisePredictor for Micro {
        fn predict_noise(&self, x_t: &VideoArray, _: &[usize], _: &Tensor, _: usize, _: ForwardOptions) -> std::result::Result<VideoArray, ModelError> {
            let y = x_t.tensor().broadcast_mul(self.a.as_tensor())?.broadcast_add(self.b.as_tensor())?;
            VideoArray::new(y)
        }
    }

    fn dims(batch: usize, n: usize) -> VideoDims {
        VideoDims {
            batch,
            frames: 1,
            channels: 1,
            height: 1,
            width: n,
        }
    }

    fn cond() -> Tensor {
        Tensor::zeros((1, 1, 1), DType::F32, &Device::Cpu).unwrap()
    }

    #[test]
    fn oracle_predictor_has_zero_loss() {
        let sched = DiffusionSchedule::linear(50, 1e-3, 0.05).unwrap();
        let x0 = VideoArray::from_vec(vec![0.3, -0.7, 0.1, 0.9], dims(1, 4), &Device::Cpu).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let oracle = Oracle { x0: &x0, sched: &sched };
        let loss = training_loss(&oracle, &x0, &cond(), 0, &sched, &mut rng, ForwardOptions::spatial()).unwrap();
        assert!(loss.to_scalar::<f32>().unwrap().abs() < 1e-10);
    }

    #[test]
    fn zero_predictor_loss_is_noise_power() {
        let sched = DiffusionSchedule::linear(50, 1e-3, 0.05).unwrap();
        let x0 = VideoArray::zeros(dims(1, 10), DType::F32, &Device::Cpu).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let draws = 1000;
        let mut total = 0.0;
        for _ in 0..draws {
            let l = training_loss(&Zero, &x0, &cond(), 0, &sched, &mut rng, ForwardOptions::spatial()).unwrap();
            total += l.to_scalar::<f32>().unwrap() as f64;
        }
        // Mean of 10 000 squared normals: standard error sqrt(2 / 10 000).
        let mean = total / draws as f64;
        assert!((mean - 1.0).abs() < 5.0 * (2.0f64 / 10_000.0).sqrt(), "{mean}");
    }

    #[test]
    fn deterministic_given_seed() {
        let sched = DiffusionSchedule::linear(50, 1e-3, 0.05).unwrap();
        let x0 = VideoArray::from_vec(vec![0.5; 6], dims(2, 3), &Device::Cpu).unwrap();
        let run = || {
            let mut rng = ChaCha8Rng::seed_from_u64(7);
            training_loss(&Zero, &x0, &cond(), 0, &sched, &mut rng, ForwardOptions::spatial())
                .unwrap()
                .to_scalar::<f32>()
                .unwrap()
        };
        assert_eq!(run().to_bits(), run().to_bits());
    }

    #[test]
    fn micro_model_gradient_matches_finite_differences() {
        let dev = Device::Cpu;
        let sched = DiffusionSchedule::linear(20, 1e-3, 0.2).unwrap();
        let x0 = VideoArray::new(
            Tensor::new(&[0.4f64, -0.3, 0.8, 0.1, -0.9, 0.6], &dev)
                .unwrap()
                .reshape((2, 1, 1, 1, 3))
                .unwrap(),
        )
        .unwrap();
        let m = Micro {
            a: Var::new(0.3f64, &dev).unwrap(),
            b: Var::new(-0.2f64, &dev).unwrap(),
        };
        let eval = |m: &Micro| {
            let mut rng = ChaCha8Rng::seed_from_u64(11);
            training_loss(m, &x0, &cond(), 0, &sched, &mut rng, ForwardOptions::spatial()).unwrap()
        };
        let loss = eval(&m);
        let grads = loss.backward().unwrap();
        let h = 1e-4;
        for var in [&m.a, &m.b] {
            let g = grads.get(var.as_tensor()).unwrap().to_scalar::<f64>().unwrap();
            let v0 = var.as_tensor().to_scalar::<f64>().unwrap();
            var.set(&Tensor::new(v0 + h, &dev).unwrap()).unwrap();
            let up = eval(&m).to_scalar::<f64>().unwrap();
            var.set(&Tensor::new(v0 - h, &dev).unwrap()).unwrap();
            let down = eval(&m).to_scalar::<f64>().unwrap();
            var.set(&Tensor::new(v0, &dev).unwrap()).unwrap();
            let fd = (up - down) / (2.0 * h);
            assert!((fd - g).abs() <= 1e-3 * fd.abs().max(g.abs()), "fd {fd} vs {g}");
        }
    }

    #[test]
    fn non_finite_input_is_rejected() {
        let sched = DiffusionSchedule::linear(5, 1e-3, 0.05).unwrap();
        let x0 = VideoArray::from_vec(vec![f32::NAN], dims(1, 1), &Device::Cpu).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(matches!(
            training_loss(&Zero, &x0, &cond(), 0, &sched, &mut rng, ForwardOptions::spatial()),
            Err(DiffusionError::NonFinite { .. })
        ));
    }
}
