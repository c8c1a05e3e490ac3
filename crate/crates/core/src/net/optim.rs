use serde::{Deserialize, Serialize};

use super::{Gradients, Network};
use crate::error::{Error, Result};
use crate::linalg::Real;

/// Update rules, per parameter `w` with gradient `g`:
///
/// * `Sgd`: `w -= lr * g`
/// * `Momentum`: `v = momentum * v + g; w -= lr * v`
/// * `Adam`: `m = b1 m + (1 - b1) g; v = b2 v + (1 - b2) g^2;
///   w -= lr * (m / (1 - b1^t)) / (sqrt(v / (1 - b2^t)) + eps)`
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum OptimizerKind {
    Sgd,
    Momentum { momentum: f64 },
    Adam { beta1: f64, beta2: f64, eps: f64 },
}

impl OptimizerKind {
    pub fn adam() -> Self {
        OptimizerKind::Adam {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct OptimizerConfig {
    pub kind: OptimizerKind,
    pub lr: f64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            kind: OptimizerKind::adam(),
            lr: 1e-3,
        }
    }
}

#[derive(Clone, Debug)]
pub struct Optimizer<F> {
    config: OptimizerConfig,
    step: u64,
    first: Vec<Vec<F>>,
    second: Vec<Vec<F>>,
}

impl<F: Real> Optimizer<F> {
    pub fn new(config: OptimizerConfig) -> Self {
        Self {
            config,
            step: 0,
            first: Vec::new(),
            second: Vec::new(),
        }
    }

    pub fn config(&self) -> &OptimizerConfig {
        &self.config
    }

    /// Number of updates applied so far.
    pub fn steps(&self) -> u64 {
        self.step
    }

    pub fn step(&mut self, net: &mut Network<F>, grads: &Gradients<F>) -> Result<()> {
        let shapes: Vec<usize> = grads.tensors().map(|t| t.len()).collect();
        let params: Vec<usize> = net.tensors_mut().map(|t| t.len()).collect();
        if shapes != params {
            return Err(Error::Dimension(
                "gradient tensors do not match the network parameters".into(),
            ));
        }
        if self.first.is_empty() {
            self.first = shapes.iter().map(|&n| vec![F::zero(); n]).collect();
            if matches!(self.config.kind, OptimizerKind::Adam { .. }) {
                self.second = self.first.clone();
            }
        }
        self.step += 1;
        let lr = self.config.lr;
        match self.config.kind {
            OptimizerKind::Sgd => {
                let lr = F::of_f64(lr);
                for (w, g) in net.tensors_mut().zip(grads.tensors()) {
                    w.iter_mut().zip(g).for_each(|(w, &g)| *w -= lr * g);
                }
            }
            OptimizerKind::Momentum { momentum } => {
                let (lr, mu) = (F::of_f64(lr), F::of_f64(momentum));
                for ((w, g), v) in net.tensors_mut().zip(grads.tensors()).zip(&mut self.first) {
                    for ((w, &g), v) in w.iter_mut().zip(g).zip(v.iter_mut()) {
                        *v = mu * *v + g;
                        *w -= lr * *v;
                    }
                }
            }
            OptimizerKind::Adam { beta1, beta2, eps } => {
                let t = self.step as i32;
                let c1 = F::of_f64(1.0 / (1.0 - beta1.powi(t)));
                let c2 = F::of_f64(1.0 / (1.0 - beta2.powi(t)));
                let (b1, b2) = (F::of_f64(beta1), F::of_f64(beta2));
                let (one, lr, eps) = (F::one(), F::of_f64(lr), F::of_f64(eps));
                for (((w, g), m), v) in net
                    .tensors_mut()
                    .zip(grads.tensors())
                    .zip(&mut self.first)
                    .zip(&mut self.second)
                {
                    for (((w, &g), m), v) in w.iter_mut().zip(g).zip(m.iter_mut()).zip(v.iter_mut()) {
                        *m = b1 * *m + (one - b1) * g;
                        *v = b2 * *v + (one - b2) * g * g;
                        *w -= lr * (*m * c1) / ((*v * c2).sqrt() + eps);
                    }
                }
            }
        }
        Ok(())
    }
}
