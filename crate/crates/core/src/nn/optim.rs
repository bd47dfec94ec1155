use serde::{Deserialize, Serialize};

use super::Grads;
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum OptimizerConfig {
    /// Plain gradient descent with a fixed step size.
    Sgd { lr: f64 },
    Adam { lr: f64, beta1: f64, beta2: f64, eps: f64 },
}

impl OptimizerConfig {
    pub fn adam(lr: f64) -> Self {
        OptimizerConfig::Adam {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }

    pub fn build<T: Scalar>(self, sizes: &[usize]) -> Optimizer<T> {
        let zeros = || sizes.iter().map(|&n| vec![T::zero(); n]).collect::<Vec<_>>();
        let (m, v) = match self {
            OptimizerConfig::Sgd { .. } => (Vec::new(), Vec::new()),
            OptimizerConfig::Adam { .. } => (zeros(), zeros()),
        };
        Optimizer {
            config: self,
            step: 0,
            m,
            v,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Optimizer<T> {
    config: OptimizerConfig,
    step: u64,
    m: Vec<Vec<T>>,
    v: Vec<Vec<T>>,
}

impl<T: Scalar> Optimizer<T> {
    pub fn steps(&self) -> u64 {
        self.step
    }

    /// Applies one descent step to `params` (same tensor order as `grads`).
    pub fn step(&mut self, params: Vec<&mut [T]>, grads: &Grads<T>) {
        self.step += 1;
        match self.config {
            OptimizerConfig::Sgd { lr } => {
                let lr = T::of(lr);
                for (p, g) in params.into_iter().zip(&grads.tensors) {
                    for (x, &d) in p.iter_mut().zip(g) {
                        *x = *x - lr * d;
                    }
                }
            }
            OptimizerConfig::Adam {
                lr,
                beta1,
                beta2,
                eps,
            } => {
                let t = self.step as i32;
                let c1 = 1.0 - beta1.powi(t);
                let c2 = 1.0 - beta2.powi(t);
                let step_size = T::of(lr * c2.sqrt() / c1);
                let (b1, b2, eps) = (T::of(beta1), T::of(beta2), T::of(eps * c2.sqrt()));
                let one = T::one();
                for (((p, g), m), v) in params
                    .into_iter()
                    .zip(&grads.tensors)
                    .zip(&mut self.m)
                    .zip(&mut self.v)
                {
                    for i in 0..p.len() {
                        let d = g[i];
                        m[i] = b1 * m[i] + (one - b1) * d;
                        v[i] = b2 * v[i] + (one - b2) * d * d;
                        p[i] = p[i] - step_size * m[i] / (v[i].sqrt() + eps);
                    }
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn minimize(config: OptimizerConfig, steps: usize) -> f64 {
        // f(x) = (x - 3)^2
        let mut x = vec![0.0f64];
        let mut opt = config.build::<f64>(&[1]);
        for _ in 0..steps {
            let g = Grads {
                tensors: vec![vec![2.0 * (x[0] - 3.0)]],
            };
            opt.step(vec![x.as_mut_slice()], &g);
        }
        x[0]
    }

    #[test]
    fn sgd_and_adam_converge_on_quadratic() {
        assert!((minimize(OptimizerConfig::Sgd { lr: 0.1 }, 200) - 3.0).abs() < 1e-9);
        assert!((minimize(OptimizerConfig::adam(0.05), 2000) - 3.0).abs() < 1e-3);
    }

    #[test]
    fn sgd_single_step_is_exact() {
        assert_eq!(minimize(OptimizerConfig::Sgd { lr: 0.25 }, 1), 1.5);
    }
}
