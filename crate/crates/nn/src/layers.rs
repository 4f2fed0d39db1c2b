//! Layers with cached forward inputs. A [`Sequential`] stack is the static
//! tape: backward walks it in reverse, accumulating parameter gradients.

use tilesynth_core::rng::SplitMix64;

pub use crate::ops::PadMode;
use crate::ops::{self, ActKind};
use crate::tensor::{Tensor, TensorError};

/// Standard deviation of the Normal weight initialisation.
pub const INIT_STD: f64 = 0.02;

pub trait Module {
    /// Runs the layer and caches what backward needs.
    fn forward(&mut self, x: &Tensor) -> Result<Tensor, TensorError>;
    /// Accumulates parameter gradients and returns the input gradient.
    fn backward(&mut self, gout: &Tensor) -> Result<Tensor, TensorError>;
    fn visit_params(&self, prefix: &str, f: &mut dyn FnMut(&str, &Tensor));
    fn visit_params_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Tensor));

    fn zero_grad(&mut self) {
        self.visit_params_mut("", &mut |_, p| p.zero_grad());
    }

    fn param_count(&self) -> usize {
        let mut n = 0;
        self.visit_params("", &mut |_, p| n += p.len());
        n
    }

    fn param_names(&self) -> Vec<String> {
        let mut names = Vec::new();
        self.visit_params("", &mut |name, _| names.push(name.to_string()));
        names
    }
}

fn cached<'a>(cache: &'a Option<Tensor>, op: &'static str) -> Result<&'a Tensor, TensorError> {
    cache.as_ref().ok_or(TensorError::Invalid { op, message: "backward called before forward".into() })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Conv2d {
    pub weight: Tensor,
    pub bias: Option<Tensor>,
    pub stride: usize,
    pub pad: usize,
    pub mode: PadMode,
    cache: Option<Tensor>,
}

impl Conv2d {
    pub fn new(c_in: usize, c_out: usize, k: usize, stride: usize, pad: usize, mode: PadMode, rng: &mut SplitMix64) -> Self {
        Self {
            weight: Tensor::randn(&[c_out, c_in, k, k], INIT_STD, rng),
            bias: Some(Tensor::zeros(&[c_out])),
            stride,
            pad,
            mode,
            cache: None,
        }
    }

    pub fn from_weights(weight: Tensor, bias: Option<Tensor>, stride: usize, pad: usize, mode: PadMode) -> Self {
        Self { weight, bias, stride, pad, mode, cache: None }
    }
}

impl Module for Conv2d {
    fn forward(&mut self, x: &Tensor) -> Result<Tensor, TensorError> {
        let y = ops::conv2d(x, &self.weight, self.bias.as_ref(), self.stride, self.pad, self.mode)?;
        self.cache = Some(x.clone());
        Ok(y)
    }

    fn backward(&mut self, gout: &Tensor) -> Result<Tensor, TensorError> {
        let x = cached(&self.cache, "conv2d")?;
        let g = ops::conv2d_backward(x, &self.weight, gout, self.stride, self.pad, self.mode)?;
        self.weight.accumulate_grad(&g.weight);
        if let Some(b) = &mut self.bias {
            b.accumulate_grad(&g.bias);
        }
        Ok(g.input)
    }

    fn visit_params(&self, prefix: &str, f: &mut dyn FnMut(&str, &Tensor)) {
        f(&format!("{prefix}weight"), &self.weight);
        if let Some(b) = &self.bias {
            f(&format!("{prefix}bias"), b);
        }
    }

    fn visit_params_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Tensor)) {
        f(&format!("{prefix}weight"), &mut self.weight);
        if let Some(b) = &mut self.bias {
            f(&format!("{prefix}bias"), b);
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvTranspose2d {
    /// (C_in, C_out, k, k).
    pub weight: Tensor,
    pub bias: Option<Tensor>,
    pub stride: usize,
    pub pad: usize,
    cache: Option<Tensor>,
}

impl ConvTranspose2d {
    pub fn new(c_in: usize, c_out: usize, k: usize, stride: usize, pad: usize, rng: &mut SplitMix64) -> Self {
        Self {
            weight: Tensor::randn(&[c_in, c_out, k, k], INIT_STD, rng),
            bias: Some(Tensor::zeros(&[c_out])),
            stride,
            pad,
            cache: None,
        }
    }

    pub fn from_weights(weight: Tensor, bias: Option<Tensor>, stride: usize, pad: usize) -> Self {
        Self { weight, bias, stride, pad, cache: None }
    }
}

impl Module for ConvTranspose2d {
    fn forward(&mut self, x: &Tensor) -> Result<Tensor, TensorError> {
        let y = ops::conv_transpose2d(x, &self.weight, self.bias.as_ref(), self.stride, self.pad)?;
        self.cache = Some(x.clone());
        Ok(y)
    }

    fn backward(&mut self, gout: &Tensor) -> Result<Tensor, TensorError> {
        let x = cached(&self.cache, "conv_transpose2d")?;
        let g = ops::conv_transpose2d_backward(x, &self.weight, gout, self.stride, self.pad)?;
        self.weight.accumulate_grad(&g.weight);
        if let Some(b) = &mut self.bias {
            b.accumulate_grad(&g.bias);
        }
        Ok(g.input)
    }

    fn visit_params(&self, prefix: &str, f: &mut dyn FnMut(&str, &Tensor)) {
        f(&format!("{prefix}weight"), &self.weight);
        if let Some(b) = &self.bias {
            f(&format!("{prefix}bias"), b);
        }
    }

    fn visit_params_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Tensor)) {
        f(&format!("{prefix}weight"), &mut self.weight);
        if let Some(b) = &mut self.bias {
            f(&format!("{prefix}bias"), b);
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct InstanceNorm {
    pub scale: Tensor,
    pub shift: Tensor,
    cache: Option<Tensor>,
}

impl InstanceNorm {
    pub fn new(channels: usize) -> Self {
        Self { scale: Tensor::full(&[channels], 1.0), shift: Tensor::zeros(&[channels]), cache: None }
    }
}

impl Module for InstanceNorm {
    fn forward(&mut self, x: &Tensor) -> Result<Tensor, TensorError> {
        let y = ops::instance_norm(x, &self.scale, &self.shift)?;
        self.cache = Some(x.clone());
        Ok(y)
    }

    fn backward(&mut self, gout: &Tensor) -> Result<Tensor, TensorError> {
        let x = cached(&self.cache, "instance_norm")?;
        let g = ops::instance_norm_backward(x, &self.scale, &self.shift, gout)?;
        self.scale.accumulate_grad(&g.gamma);
        self.shift.accumulate_grad(&g.beta);
        Ok(g.input)
    }

    fn visit_params(&self, prefix: &str, f: &mut dyn FnMut(&str, &Tensor)) {
        f(&format!("{prefix}scale"), &self.scale);
        f(&format!("{prefix}shift"), &self.shift);
    }

    fn visit_params_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Tensor)) {
        f(&format!("{prefix}scale"), &mut self.scale);
        f(&format!("{prefix}shift"), &mut self.shift);
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Activation {
    pub kind: ActKind,
    cache: Option<Tensor>,
}

impl Activation {
    pub fn new(kind: ActKind) -> Self {
        Self { kind, cache: None }
    }
}

impl Module for Activation {
    fn forward(&mut self, x: &Tensor) -> Result<Tensor, TensorError> {
        self.cache = Some(x.clone());
        Ok(ops::act_forward(x, self.kind))
    }

    fn backward(&mut self, gout: &Tensor) -> Result<Tensor, TensorError> {
        ops::act_backward(cached(&self.cache, "activation")?, self.kind, gout)
    }

    fn visit_params(&self, _: &str, _: &mut dyn FnMut(&str, &Tensor)) {}

    fn visit_params_mut(&mut self, _: &str, _: &mut dyn FnMut(&str, &mut Tensor)) {}
}

/// x + body(x).
#[derive(Debug, Clone, PartialEq)]
pub struct Residual {
    pub body: Sequential,
}

impl Module for Residual {
    fn forward(&mut self, x: &Tensor) -> Result<Tensor, TensorError> {
        self.body.forward(x)?.add(x)
    }

    fn backward(&mut self, gout: &Tensor) -> Result<Tensor, TensorError> {
        self.body.backward(gout)?.add(gout)
    }

    fn visit_params(&self, prefix: &str, f: &mut dyn FnMut(&str, &Tensor)) {
        self.body.visit_params(&format!("{prefix}body."), f);
    }

    fn visit_params_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Tensor)) {
        self.body.visit_params_mut(&format!("{prefix}body."), f);
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Layer {
    Conv(Conv2d),
    ConvT(ConvTranspose2d),
    Norm(InstanceNorm),
    Act(Activation),
    Residual(Residual),
}

impl Layer {
    fn inner(&self) -> &dyn Module {
        match self {
            Layer::Conv(l) => l,
            Layer::ConvT(l) => l,
            Layer::Norm(l) => l,
            Layer::Act(l) => l,
            Layer::Residual(l) => l,
        }
    }

    fn inner_mut(&mut self) -> &mut dyn Module {
        match self {
            Layer::Conv(l) => l,
            Layer::ConvT(l) => l,
            Layer::Norm(l) => l,
            Layer::Act(l) => l,
            Layer::Residual(l) => l,
        }
    }
}

impl Module for Layer {
    fn forward(&mut self, x: &Tensor) -> Result<Tensor, TensorError> {
        self.inner_mut().forward(x)
    }

    fn backward(&mut self, gout: &Tensor) -> Result<Tensor, TensorError> {
        self.inner_mut().backward(gout)
    }

    fn visit_params(&self, prefix: &str, f: &mut dyn FnMut(&str, &Tensor)) {
        self.inner().visit_params(prefix, f)
    }

    fn visit_params_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Tensor)) {
        self.inner_mut().visit_params_mut(prefix, f)
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Sequential {
    pub layers: Vec<Layer>,
}

impl Sequential {
    pub fn new(layers: Vec<Layer>) -> Self {
        Self { layers }
    }

    pub fn push(&mut self, layer: Layer) {
        self.layers.push(layer);
    }
}

impl Module for Sequential {
    fn forward(&mut self, x: &Tensor) -> Result<Tensor, TensorError> {
        let mut layers = self.layers.iter_mut();
        let Some(first) = layers.next() else { return Tensor::new(x.shape(), x.data().to_vec()) };
        let mut h = first.forward(x)?;
        for l in layers {
            h = l.forward(&h)?;
        }
        Ok(h)
    }

    fn backward(&mut self, gout: &Tensor) -> Result<Tensor, TensorError> {
        let mut g = Tensor::new(gout.shape(), gout.data().to_vec())?;
        for l in self.layers.iter_mut().rev() {
            g = l.backward(&g)?;
        }
        Ok(g)
    }

    fn visit_params(&self, prefix: &str, f: &mut dyn FnMut(&str, &Tensor)) {
        for (i, l) in self.layers.iter().enumerate() {
            l.visit_params(&format!("{prefix}{i}."), f);
        }
    }

    fn visit_params_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Tensor)) {
        for (i, l) in self.layers.iter_mut().enumerate() {
            l.visit_params_mut(&format!("{prefix}{i}."), f);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn residual_adds_skip() {
        let mut rng = SplitMix64::new(1);
        let mut r = Residual { body: Sequential::new(vec![Layer::Conv(Conv2d::new(2, 2, 3, 1, 1, PadMode::Reflect, &mut rng))]) };
        let x = Tensor::randn(&[1, 2, 4, 4], 1.0, &mut rng);
        let body = r.body.clone().forward(&x).unwrap();
        assert_eq!(r.forward(&x).unwrap(), body.add(&x).unwrap());
        assert_eq!(r.param_names(), vec!["body.0.weight", "body.0.bias"]);
    }

    #[test]
    fn backward_before_forward_is_an_error() {
        let mut a = Activation::new(ActKind::Relu);
        assert!(a.backward(&Tensor::zeros(&[1])).is_err());
    }

    #[test]
    fn grads_accumulate_until_zeroed() {
        let mut rng = SplitMix64::new(2);
        let mut c = Conv2d::new(1, 1, 3, 1, 1, PadMode::Zero, &mut rng);
        let x = Tensor::randn(&[1, 1, 5, 5], 1.0, &mut rng);
        let y = c.forward(&x).unwrap();
        c.backward(&Tensor::full(y.shape(), 1.0)).unwrap();
        let once = c.weight.grad.clone().unwrap();
        c.backward(&Tensor::full(y.shape(), 1.0)).unwrap();
        let twice = c.weight.grad.clone().unwrap();
        assert!(once.iter().zip(&twice).all(|(a, b)| (2.0 * a - b).abs() <= 1e-6 * a.abs().max(1.0)));
        c.zero_grad();
        assert!(c.weight.grad.as_ref().unwrap().iter().all(|v| *v == 0.0));
    }
}
