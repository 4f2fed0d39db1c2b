use serde::{Deserialize, Serialize};

use crate::layers::Module;
use crate::tensor::{Tensor, TensorError};

/// First and second moment buffers of one parameter tensor.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Moments {
    pub m: Vec<f32>,
    pub v: Vec<f32>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self { lr: 2e-4, beta1: 0.5, beta2: 0.999, eps: 1e-8 }
    }
}

/// Adam with bias correction. Moments are stored in f32 and the update is
/// evaluated in f64.
#[derive(Debug, Clone, PartialEq)]
pub struct Adam {
    pub config: AdamConfig,
    pub step: u64,
    /// One entry per parameter tensor, in visit order.
    pub moments: Vec<Moments>,
}

impl Adam {
    pub fn new(config: AdamConfig) -> Result<Self, TensorError> {
        if !(config.lr > 0.0) {
            return Err(TensorError::Invalid { op: "adam", message: format!("learning rate {} must be positive", config.lr) });
        }
        Ok(Self { config, step: 0, moments: Vec::new() })
    }

    /// Applies one update to every parameter of `model` using its gradients.
    pub fn step<M: Module + ?Sized>(&mut self, model: &mut M) -> Result<(), TensorError> {
        let mut shapes = Vec::new();
        model.visit_params("", &mut |_, p| shapes.push((p.len(), p.grad.as_ref().map(Vec::len))));
        self.prepare(&shapes)?;
        let (c1, c2) = self.corrections();
        let config = self.config;
        let mut moments = self.moments.iter_mut();
        model.visit_params_mut("", &mut |_, p| update(p, moments.next().expect("checked in prepare"), config, c1, c2));
        Ok(())
    }

    pub fn step_tensors(&mut self, params: &mut [&mut Tensor]) -> Result<(), TensorError> {
        let shapes: Vec<_> = params.iter().map(|p| (p.len(), p.grad.as_ref().map(Vec::len))).collect();
        self.prepare(&shapes)?;
        let (c1, c2) = self.corrections();
        for (p, mo) in params.iter_mut().zip(&mut self.moments) {
            update(p, mo, self.config, c1, c2);
        }
        Ok(())
    }

    /// Validates shapes, allocates moments on first use and advances the step.
    fn prepare(&mut self, shapes: &[(usize, Option<usize>)]) -> Result<(), TensorError> {
        if self.moments.is_empty() {
            self.moments = shapes.iter().map(|(n, _)| Moments { m: vec![0.0; *n], v: vec![0.0; *n] }).collect();
        }
        if self.moments.len() != shapes.len() {
            return Err(TensorError::Invalid {
                op: "adam",
                message: format!("optimizer tracks {} tensors, model has {}", self.moments.len(), shapes.len()),
            });
        }
        for (i, ((n, g), mo)) in shapes.iter().zip(&self.moments).enumerate() {
            if mo.m.len() != *n || g.is_some_and(|g| g != *n) {
                return Err(TensorError::Invalid { op: "adam", message: format!("parameter {i} does not match its moment buffers") });
            }
        }
        self.step += 1;
        Ok(())
    }

    fn corrections(&self) -> (f64, f64) {
        (1.0 - self.config.beta1.powi(self.step as i32), 1.0 - self.config.beta2.powi(self.step as i32))
    }
}

fn update(p: &mut Tensor, mo: &mut Moments, config: AdamConfig, c1: f64, c2: f64) {
    let AdamConfig { lr, beta1, beta2, eps } = config;
    let grad = p.grad.take();
    let data = p.data_mut();
    for j in 0..data.len() {
        let g = grad.as_ref().map_or(0.0, |g| g[j] as f64);
        let m = beta1 * mo.m[j] as f64 + (1.0 - beta1) * g;
        let v = beta2 * mo.v[j] as f64 + (1.0 - beta2) * g * g;
        mo.m[j] = m as f32;
        mo.v[j] = v as f32;
        let step = lr * (m / c1) / ((v / c2).sqrt() + eps);
        data[j] = (data[j] as f64 - step) as f32;
    }
    p.grad = grad;
}
