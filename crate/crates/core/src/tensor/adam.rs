use serde::{Deserialize, Serialize};

use super::Tensor;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// First and second moment estimates for one parameter tensor.
#[derive(Debug, Clone, Default)]
pub struct Moments {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
}

/// Adam with bias correction.
#[derive(Debug, Clone)]
pub struct Adam {
    pub config: AdamConfig,
    state: Vec<Moments>,
    step: u64,
}

impl Adam {
    pub fn new(config: AdamConfig) -> Self {
        Adam {
            config,
            state: Vec::new(),
            step: 0,
        }
    }

    pub fn steps_taken(&self) -> u64 {
        self.step
    }

    pub fn moments(&self) -> &[Moments] {
        &self.state
    }

    /// Update every parameter from its gradient, then zero the gradients.
    ///
    /// The parameter list must be presented in the same order on every call.
    pub fn step<'a, I>(&mut self, params: I) -> Result<()>
    where
        I: IntoIterator<Item = &'a mut Tensor>,
    {
        let params: Vec<&mut Tensor> = params.into_iter().collect();
        if let Some(i) = params.iter().position(|p| p.grad().is_none()) {
            return Err(Error::Contract(format!(
                "adam: parameter {i} (shape {:?}) has no gradient",
                params[i].shape()
            )));
        }
        if self.state.is_empty() {
            self.state = params
                .iter()
                .map(|p| Moments {
                    m: vec![0.0; p.numel()],
                    v: vec![0.0; p.numel()],
                })
                .collect();
        } else if self.state.len() != params.len() {
            return Err(Error::Contract(format!(
                "adam: {} parameters, state for {}",
                params.len(),
                self.state.len()
            )));
        }

        self.step += 1;
        let AdamConfig {
            lr,
            beta1,
            beta2,
            eps,
        } = self.config;
        let bc1 = 1.0 - beta1.powi(self.step as i32);
        let bc2 = 1.0 - beta2.powi(self.step as i32);

        for (p, st) in params.into_iter().zip(&mut self.state) {
            let grad = p.grad().expect("checked").to_vec();
            if grad.len() != st.m.len() {
                return Err(Error::Contract(format!(
                    "adam: parameter shape changed to {:?}",
                    p.shape()
                )));
            }
            for (k, g) in grad.iter().enumerate() {
                st.m[k] = beta1 * st.m[k] + (1.0 - beta1) * g;
                st.v[k] = beta2 * st.v[k] + (1.0 - beta2) * g * g;
                let m_hat = st.m[k] / bc1;
                let v_hat = st.v[k] / bc2;
                p.data_mut()[k] -= lr * m_hat / (v_hat.sqrt() + eps);
            }
            p.zero_grad();
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn param(value: f64, grad: f64) -> Tensor {
        let mut t = Tensor::scalar(value);
        t.accumulate_grad(&[grad]).unwrap();
        t
    }

    #[test]
    fn zero_gradient_leaves_params() {
        let mut p = param(1.5, 0.0);
        let mut adam = Adam::new(AdamConfig::default());
        for _ in 0..5 {
            adam.step([&mut p]).unwrap();
        }
        assert_eq!(p.item(), 1.5);
    }

    #[test]
    fn first_step_hand_computed() {
        // m1 = 0.1, v1 = 0.001; bias-corrected both equal 1; step = 0.1 / (1 + 1e-8).
        let mut p = param(0.0, 1.0);
        let mut adam = Adam::new(AdamConfig {
            lr: 0.1,
            ..AdamConfig::default()
        });
        adam.step([&mut p]).unwrap();
        let expected = -0.1 / (1.0 + 1e-8);
        assert!((p.item() - expected).abs() < 1e-15, "{}", p.item());
        assert_eq!(p.grad().unwrap(), &[0.0]);
    }

    #[test]
    fn constant_gradient_step_tends_to_lr_sign() {
        let mut p = param(0.0, 0.0);
        let mut adam = Adam::new(AdamConfig {
            lr: 0.01,
            ..AdamConfig::default()
        });
        let mut last = 0.0;
        for _ in 0..2000 {
            let before = p.item();
            p.accumulate_grad(&[-3.0]).unwrap();
            adam.step([&mut p]).unwrap();
            last = p.item() - before;
        }
        assert!((last - 0.01).abs() < 1e-6, "{last}");
    }

    #[test]
    fn missing_grad_is_an_error() {
        let mut p = Tensor::scalar(0.0);
        let mut adam = Adam::new(AdamConfig::default());
        assert!(matches!(adam.step([&mut p]), Err(Error::Contract(_))));
    }
}
