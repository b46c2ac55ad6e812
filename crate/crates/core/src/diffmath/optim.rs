use serde::{Deserialize, Serialize};

use super::param::ParamStore;
use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Adaptive-moment optimizer settings with decoupled weight decay.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamW {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl Default for AdamW {
    fn default() -> Self {
        Self {
            lr: 5e-4,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 1e-4,
        }
    }
}

/// Moment accumulators for every parameter of one store.
#[derive(Clone, Debug)]
pub struct OptimState {
    pub settings: AdamW,
    first: Vec<Tensor>,
    second: Vec<Tensor>,
    step: u64,
}

impl OptimState {
    pub fn new(settings: AdamW, store: &ParamStore) -> Self {
        let zeros = || {
            store
                .iter()
                .map(|(_, _, p)| Tensor::zeros(p.value.shape()))
                .collect::<Vec<_>>()
        };
        Self {
            settings,
            first: zeros(),
            second: zeros(),
            step: 0,
        }
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    /// Applies one update from the accumulated gradients.
    ///
    /// A parameter whose gradient is identically zero did not take part in
    /// the graph and is left untouched, including its moments and decay.
    pub fn step(&mut self, store: &mut ParamStore) -> Result<()> {
        assert_eq!(self.first.len(), store.len(), "optimizer built for another store");
        for (_, name, p) in store.iter() {
            if p.trainable && !p.grad.is_finite() {
                return Err(Error::Diverged(format!("non-finite gradient in {name}")));
            }
        }
        self.step += 1;
        let AdamW {
            lr,
            beta1,
            beta2,
            eps,
            weight_decay,
        } = self.settings;
        let bc1 = 1.0 - beta1.powi(self.step as i32);
        let bc2 = 1.0 - beta2.powi(self.step as i32);
        for ((p, m), v) in store
            .params_mut()
            .zip(self.first.iter_mut())
            .zip(self.second.iter_mut())
        {
            if !p.trainable || p.grad.data().iter().all(|&g| g == 0.0) {
                continue;
            }
            let grad = p.grad.data();
            let (m, v) = (m.data_mut(), v.data_mut());
            for (i, w) in p.value.data_mut().iter_mut().enumerate() {
                let g = grad[i];
                m[i] = beta1 * m[i] + (1.0 - beta1) * g;
                v[i] = beta2 * v[i] + (1.0 - beta2) * g * g;
                let mhat = m[i] / bc1;
                let vhat = v[i] / bc2;
                *w -= lr * weight_decay * *w;
                *w -= lr * mhat / (vhat.sqrt() + eps);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_leaves_parameters_unchanged() {
        let mut store = ParamStore::new();
        store.add("w", Tensor::vector(vec![1.0, -2.0, 3.0]), true);
        let before = store.clone();
        let mut opt = OptimState::new(AdamW::default(), &store);
        opt.step(&mut store).unwrap();
        assert_eq!(store, before);
        assert_eq!(opt.steps(), 1);
    }

    #[test]
    fn first_step_moves_by_learning_rate() {
        let mut store = ParamStore::new();
        let id = store.add("w", Tensor::scalar(1.0), true);
        store.get_mut(id).grad = Tensor::scalar(1.0);
        let settings = AdamW {
            lr: 0.1,
            ..AdamW::default()
        };
        let mut opt = OptimState::new(settings, &store);
        opt.step(&mut store).unwrap();
        // 1 - 0.1 * 1e-4 (decay) - 0.1 * 1 / (1 + 1e-8)
        let w = store.value(id).data()[0];
        assert!((w - 0.9).abs() < 1e-4, "{w}");
        assert!((w - (1.0 - 1e-5 - 0.1 / (1.0 + 1e-8))).abs() < 1e-15);
    }

    #[test]
    fn frozen_entries_survive_many_steps() {
        let mut store = ParamStore::new();
        let frozen = store.add("bank", Tensor::vector(vec![0.6, 0.8]), false);
        let live = store.add("w", Tensor::vector(vec![0.5, 0.5]), true);
        let mut opt = OptimState::new(AdamW::default(), &store);
        for _ in 0..100 {
            store.get_mut(frozen).grad = Tensor::vector(vec![1.0, -1.0]);
            store.get_mut(live).grad = Tensor::vector(vec![1.0, -1.0]);
            opt.step(&mut store).unwrap();
            store.zero_grad();
        }
        assert_eq!(store.value(frozen).data(), &[0.6, 0.8]);
        assert_ne!(store.value(live).data(), &[0.5, 0.5]);
        assert_eq!(opt.steps(), 100);
    }

    #[test]
    fn nan_gradient_aborts_step() {
        let mut store = ParamStore::new();
        let id = store.add("w", Tensor::vector(vec![1.0, 1.0]), true);
        store.get_mut(id).grad = Tensor::vector(vec![f64::NAN, 1.0]);
        let mut opt = OptimState::new(AdamW::default(), &store);
        let err = opt.step(&mut store).unwrap_err();
        assert!(err.to_string().starts_with("diverged"));
        assert_eq!(store.value(id).data(), &[1.0, 1.0]);
        assert_eq!(opt.steps(), 0);
    }

    #[test]
    fn zero_grad_clears_gradients() {
        let mut store = ParamStore::new();
        let id = store.add("w", Tensor::vector(vec![1.0, 1.0]), true);
        store.get_mut(id).grad = Tensor::vector(vec![3.0, 1.0]);
        store.zero_grad();
        assert!(store.get(id).grad.data().iter().all(|&g| g == 0.0));
    }
}
