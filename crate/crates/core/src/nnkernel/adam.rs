use serde::{Deserialize, Serialize};

use super::tensor::{ensure_finite, Scalar};
use super::KernelError;

/// Adam hyperparameters with a per-epoch multiplicative learning-rate decay.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr0: f64,
    pub decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self { lr0: 0.001, decay: 0.7, beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

impl AdamConfig {
    pub fn validate(&self) -> Result<(), KernelError> {
        let ok = self.lr0 > 0.0
            && self.decay > 0.0
            && self.decay <= 1.0
            && (0.0..1.0).contains(&self.beta1)
            && (0.0..1.0).contains(&self.beta2)
            && self.eps > 0.0;
        if ok {
            Ok(())
        } else {
            Err(KernelError::Config(format!("invalid Adam settings {self:?}")))
        }
    }

    /// `lr0 · decay^epoch` (epochs counted from zero).
    pub fn effective_lr(&self, epoch: usize) -> f64 {
        self.lr0 * self.decay.powi(epoch as i32)
    }
}

/// One parameter buffer handed to [`AdamState::step`].
pub struct ParamRef<'a, T> {
    pub values: &'a mut [T],
    pub grads: &'a [T],
    pub trainable: bool,
}

#[derive(Debug, Clone)]
struct Moments<T> {
    first: Vec<T>,
    second: Vec<T>,
}

/// Optimizer state: step counter plus first/second moments per parameter buffer.
#[derive(Debug, Clone)]
pub struct AdamState<T> {
    pub config: AdamConfig,
    pub step: u64,
    moments: Vec<Moments<T>>,
}

impl<T: Scalar> AdamState<T> {
    pub fn new(config: AdamConfig, sizes: &[usize]) -> Result<Self, KernelError> {
        config.validate()?;
        let moments = sizes.iter().map(|&n| Moments { first: vec![T::zero(); n], second: vec![T::zero(); n] }).collect();
        Ok(Self { config, step: 0, moments })
    }

    /// One Adam update with learning rate `lr0 · decay^epoch`; frozen buffers are skipped entirely.
    pub fn step(&mut self, params: &mut [ParamRef<'_, T>], epoch: usize) -> Result<(), KernelError> {
        if params.len() != self.moments.len() {
            return Err(KernelError::Shape {
                op: "adam_step",
                detail: format!("{} parameter buffers, optimizer tracks {}", params.len(), self.moments.len()),
            });
        }
        for (i, (p, m)) in params.iter().zip(&self.moments).enumerate() {
            if p.values.len() != p.grads.len() || p.values.len() != m.first.len() {
                return Err(KernelError::Shape {
                    op: "adam_step",
                    detail: format!(
                        "buffer {i}: {} values, {} grads, {} moments",
                        p.values.len(),
                        p.grads.len(),
                        m.first.len()
                    ),
                });
            }
        }
        self.step += 1;
        let cfg = self.config;
        let lr = T::from_f64(cfg.effective_lr(epoch));
        let (b1, b2) = (T::from_f64(cfg.beta1), T::from_f64(cfg.beta2));
        let t = self.step as i32;
        let c1 = T::one() - T::from_f64(cfg.beta1.powi(t));
        let c2 = T::one() - T::from_f64(cfg.beta2.powi(t));
        let eps = T::from_f64(cfg.eps);
        for (p, m) in params.iter_mut().zip(self.moments.iter_mut()) {
            if !p.trainable {
                continue;
            }
            ensure_finite(p.grads, "adam_step")?;
            for (((w, &g), m1), m2) in p.values.iter_mut().zip(p.grads).zip(m.first.iter_mut()).zip(m.second.iter_mut()) {
                *m1 = b1 * *m1 + (T::one() - b1) * g;
                *m2 = b2 * *m2 + (T::one() - b2) * g * g;
                let m_hat = *m1 / c1;
                let v_hat = *m2 / c2;
                *w -= lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn three_step_trajectory_matches_hand_recurrence() {
        let cfg = AdamConfig { lr0: 0.1, decay: 1.0, ..AdamConfig::default() };
        let mut state = AdamState::<f64>::new(cfg, &[1]).unwrap();
        let mut w = [1.0f64];
        let grads = [0.5, -0.2, 0.3];
        // Hand-rolled reference recurrence.
        let (mut m, mut v, mut w_ref) = (0.0f64, 0.0f64, 1.0f64);
        for (t, g) in grads.iter().enumerate() {
            let t = (t + 1) as i32;
            m = 0.9 * m + 0.1 * g;
            v = 0.999 * v + 0.001 * g * g;
            w_ref -= 0.1 * (m / (1.0 - 0.9f64.powi(t))) / ((v / (1.0 - 0.999f64.powi(t))).sqrt() + 1e-8);
            state.step(&mut [ParamRef { values: &mut w, grads: &[*g], trainable: true }], 0).unwrap();
            assert!((w[0] - w_ref).abs() < 1e-15);
        }
        assert_eq!(state.step, 3);
    }

    #[test]
    fn zero_gradients_leave_values_bitwise_unchanged() {
        let mut state = AdamState::<f32>::new(AdamConfig::default(), &[3]).unwrap();
        let mut w = [0.25f32, -1.5, 3.0];
        let before = w;
        for _ in 0..5 {
            state.step(&mut [ParamRef { values: &mut w, grads: &[0.0; 3], trainable: true }], 0).unwrap();
        }
        assert_eq!(w, before);
        assert_eq!(state.step, 5);
    }

    #[test]
    fn frozen_buffers_are_skipped() {
        let mut state = AdamState::<f32>::new(AdamConfig::default(), &[1, 1]).unwrap();
        let (mut a, mut b) = ([1.0f32], [1.0f32]);
        state
            .step(
                &mut [
                    ParamRef { values: &mut a, grads: &[1.0], trainable: false },
                    ParamRef { values: &mut b, grads: &[1.0], trainable: true },
                ],
                0,
            )
            .unwrap();
        assert_eq!(a, [1.0]);
        assert!(b[0] < 1.0);
    }

    #[test]
    fn decayed_learning_rate() {
        let cfg = AdamConfig { decay: 0.7, ..AdamConfig::default() };
        assert!((cfg.effective_lr(2) - 0.001 * 0.49).abs() < 1e-15);
        assert_eq!(cfg.effective_lr(0), 0.001);
    }

    #[test]
    fn shape_mismatch_is_rejected() {
        let mut state = AdamState::<f32>::new(AdamConfig::default(), &[2]).unwrap();
        let mut w = [0.0f32; 3];
        let err = state.step(&mut [ParamRef { values: &mut w, grads: &[0.0; 3], trainable: true }], 0);
        assert!(err.is_err());
    }
}
