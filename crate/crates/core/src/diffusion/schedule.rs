use candle_core::Tensor;

use super::{DiffusionError, Result};
use crate::video::VideoArray;

/// Linear-beta noise schedule. `alpha_bars[0]` is 1 so `t = 0` is the clean
/// signal and `t = T` the noisiest step.
#[derive(Debug, Clone, PartialEq)]
pub struct DiffusionSchedule {
    betas: Vec<f64>,
    alpha_bars: Vec<f64>,
}

pub fn make_schedule(steps: usize, beta_min: f64, beta_max: f64) -> Result<DiffusionSchedule> {
    DiffusionSchedule::linear(steps, beta_min, beta_max)
}

impl DiffusionSchedule {
    pub fn linear(steps: usize, beta_min: f64, beta_max: f64) -> Result<Self> {
        if steps == 0 {
            return Err(DiffusionError::Schedule("at least one step is required".into()));
        }
        if !(0.0 < beta_min && beta_min <= beta_max && beta_max < 1.0) {
            return Err(DiffusionError::Schedule(format!(
                "need 0 < beta_min <= beta_max < 1, got {beta_min} and {beta_max}"
            )));
        }
        let betas: Vec<f64> = (0..steps)
            .map(|i| {
                if steps == 1 {
                    beta_min
                } else {
                    beta_min + (beta_max - beta_min) * i as f64 / (steps - 1) as f64
                }
            })
            .collect();
        let mut alpha_bars = Vec::with_capacity(steps + 1);
        alpha_bars.push(1.0);
        let mut acc = 1.0;
        for b in &betas {
            acc *= 1.0 - b;
            alpha_bars.push(acc);
        }
        Ok(Self { betas, alpha_bars })
    }

    /// Number of noising steps `T`.
    pub fn steps(&self) -> usize {
        self.betas.len()
    }

    /// `beta_t` for `t` in `1..=T`.
    pub fn beta(&self, t: usize) -> f64 {
        self.betas[t - 1]
    }

    pub fn alpha_bar(&self, t: usize) -> f64 {
        self.alpha_bars[t]
    }

    pub fn alpha_bars(&self) -> &[f64] {
        &self.alpha_bars
    }

    fn check_t(&self, t: &[usize]) -> Result<()> {
        match t.iter().find(|&&s| s > self.steps()) {
            Some(bad) => Err(DiffusionError::Timestep {
                t: *bad,
                max: self.steps(),
            }),
            None => Ok(()),
        }
    }

    /// Per-item coefficient column `[batch, 1, 1, 1, 1]` built from `f`.
    fn coef(&self, t: &[usize], like: &Tensor, f: impl Fn(f64) -> f64) -> Result<Tensor> {
        let v: Vec<f64> = t.iter().map(|&s| f(self.alpha_bars[s])).collect();
        Ok(Tensor::from_vec(v, (t.len(), 1, 1, 1, 1), like.device())?.to_dtype(like.dtype())?)
    }

    /// `x_t = sqrt(ab_t) * x0 + sqrt(1 - ab_t) * eps`, per batch item.
    pub fn add_noise(&self, x0: &VideoArray, t: &[usize], eps: &VideoArray) -> Result<VideoArray> {
        self.check_t(t)?;
        let (a, e) = (x0.tensor(), eps.tensor());
        if a.dims() != e.dims() || t.len() != a.dims()[0] {
            return Err(DiffusionError::Shape(format!(
                "x0 {:?}, eps {:?}, {} timesteps",
                a.dims(),
                e.dims(),
                t.len()
            )));
        }
        if t.iter().all(|&s| s == 0) {
            return Ok(x0.clone());
        }
        let ca = self.coef(t, a, f64::sqrt)?;
        let ce = self.coef(t, a, |ab| (1.0 - ab).sqrt())?;
        let x = (a.broadcast_mul(&ca)? + e.to_dtype(a.dtype())?.broadcast_mul(&ce)?)?;
        Ok(VideoArray::new(x)?)
    }
}

/// Free-function form of [`DiffusionSchedule::add_noise`].
pub fn add_noise(x0: &VideoArray, t: &[usize], eps: &VideoArray, sched: &DiffusionSchedule) -> Result<VideoArray> {
    sched.add_noise(x0, t, eps)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::video::VideoDims;
    use candle_core::Device;
    use proptest::prelude::*;

    fn arr(v: Vec<f32>) -> VideoArray {
        let n = v.len();
        let dims = VideoDims {
            batch: 1,
            frames: 1,
            channels: 1,
            height: 1,
            width: n,
        };
        VideoArray::from_vec(v, dims, &Device::Cpu).unwrap()
    }

    #[test]
    fn single_step() {
        let s = make_schedule(1, 0.5, 0.5).unwrap();
        assert_eq!(s.alpha_bar(0), 1.0);
        assert_eq!(s.alpha_bar(1), 0.5);
    }

    #[test]
    fn rejects_bad_ranges() {
        assert!(make_schedule(10, 0.0, 0.1).is_err());
        assert!(make_schedule(10, 0.2, 0.1).is_err());
        assert!(make_schedule(10, 0.1, 1.0).is_err());
        assert!(make_schedule(0, 0.1, 0.2).is_err());
    }

    #[test]
    fn toy_preset_matches_scalar_product() {
        let s = make_schedule(100, 1e-4, 0.02).unwrap();
        // Independent recomputation: sum of logs, one beta at a time.
        let mut log_acc = 0.0f64;
        for i in 0..100 {
            let beta = 1e-4 + (0.02 - 1e-4) * (i as f64) / 99.0;
            log_acc += (-beta).ln_1p();
        }
        assert!((s.alpha_bar(100) - log_acc.exp()).abs() < 1e-12);
        assert!(s.alpha_bars().windows(2).all(|w| w[1] < w[0]));
    }

    #[test]
    fn t_zero_is_clean_and_scalar_case() {
        let s = make_schedule(4, 0.1, 0.3).unwrap();
        let x0 = arr(vec![1.0, -2.0, 0.5]);
        let eps = arr(vec![3.0, 3.0, 3.0]);
        let xt = s.add_noise(&x0, &[0], &eps).unwrap();
        assert_eq!(xt.to_vec().unwrap(), x0.to_vec().unwrap());
        assert!(s.add_noise(&x0, &[5], &eps).is_err());

        // ab = 0.25 happens at t = 1 for beta = 0.75.
        let q = make_schedule(1, 0.75, 0.75).unwrap();
        let xt = q.add_noise(&arr(vec![1.0]), &[1], &arr(vec![0.0])).unwrap();
        assert_eq!(xt.to_vec().unwrap(), [0.5]);
        // Near-total noise leaves almost only eps.
        let q = make_schedule(1, 0.999_999, 0.999_999).unwrap();
        let xt = q.add_noise(&arr(vec![1.0]), &[1], &arr(vec![2.0])).unwrap();
        assert!((xt.to_vec().unwrap()[0] - 2.0).abs() < 1e-2);
    }

    proptest! {
        #[test]
        fn schedule_is_monotone(t in 1usize..300, lo in 1e-5f64..0.05, span in 0.0f64..0.4) {
            let s = make_schedule(t, lo, lo + span).unwrap();
            prop_assert_eq!(s.alpha_bar(0), 1.0);
            prop_assert!(s.alpha_bars().windows(2).all(|w| w[1] < w[0]));
        }

        #[test]
        fn add_noise_is_linear(a in -3.0f32..3.0, x in prop::collection::vec(-1.0f32..1.0, 4), e in prop::collection::vec(-1.0f32..1.0, 4), t in 0usize..=20) {
            let s = make_schedule(20, 1e-3, 0.05).unwrap();
            let lhs = s.add_noise(&arr(x.iter().map(|v| a * v).collect()), &[t], &arr(e.iter().map(|v| a * v).collect())).unwrap();
            let rhs = s.add_noise(&arr(x.clone()), &[t], &arr(e.clone())).unwrap();
            for (l, r) in lhs.to_vec().unwrap().iter().zip(rhs.to_vec().unwrap()) {
                prop_assert!((l - a * r).abs() <= 1e-5 * (1.0 + l.abs()));
            }
        }
    }
}
