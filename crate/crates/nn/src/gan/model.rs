use tilesynth_core::rng::{mix64, SplitMix64};

use super::config::{receptive_field, DiscriminatorConfig, GeneratorConfig};
use super::GanError;
use crate::layers::{Activation, Conv2d, ConvTranspose2d, InstanceNorm, Layer, Module, PadMode, Residual, Sequential};
use crate::ops::ActKind;
use crate::tensor::{Tensor, TensorError};

/// Seed of the generator's initial weights for a training seed.
pub fn generator_seed(seed: u64) -> u64 {
    seed
}

/// Seed of the discriminator's initial weights for a training seed.
pub fn discriminator_seed(seed: u64) -> u64 {
    mix64(seed.wrapping_add(1))
}

/// Resnet-block encoder/decoder ending in tanh.
#[derive(Debug, Clone, PartialEq)]
pub struct Generator {
    pub config: GeneratorConfig,
    pub net: Sequential,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Discriminator {
    pub config: DiscriminatorConfig,
    pub net: Sequential,
}

fn conv(c_in: usize, c_out: usize, k: usize, stride: usize, pad: usize, mode: PadMode, rng: &mut SplitMix64) -> Layer {
    Layer::Conv(Conv2d::new(c_in, c_out, k, stride, pad, mode, rng))
}

fn norm(c: usize) -> Layer {
    Layer::Norm(InstanceNorm::new(c))
}

fn act(kind: ActKind) -> Layer {
    Layer::Act(Activation::new(kind))
}

/// c7s1-W, d2W, d4W, n×R4W, u2W, uW, c7s1-out, tanh.
pub fn build_generator(cfg: &GeneratorConfig, seed: u64) -> Result<Generator, GanError> {
    cfg.validate()?;
    let mut rng = SplitMix64::new(seed);
    let w = cfg.base_width;
    let mut net = Sequential::default();
    net.push(conv(cfg.in_channels, w, 7, 1, 3, PadMode::Reflect, &mut rng));
    net.push(norm(w));
    net.push(act(ActKind::Relu));
    for (c_in, c_out) in [(w, 2 * w), (2 * w, 4 * w)] {
        net.push(conv(c_in, c_out, 3, 2, 1, PadMode::Zero, &mut rng));
        net.push(norm(c_out));
        net.push(act(ActKind::Relu));
    }
    for _ in 0..cfg.n_res_blocks {
        let c = 4 * w;
        let body = Sequential::new(vec![
            conv(c, c, 3, 1, 1, PadMode::Reflect, &mut rng),
            norm(c),
            act(ActKind::Relu),
            conv(c, c, 3, 1, 1, PadMode::Reflect, &mut rng),
            norm(c),
        ]);
        net.push(Layer::Residual(Residual { body }));
    }
    for (c_in, c_out) in [(4 * w, 2 * w), (2 * w, w)] {
        net.push(Layer::ConvT(ConvTranspose2d::new(c_in, c_out, 4, 2, 1, &mut rng)));
        net.push(norm(c_out));
        net.push(act(ActKind::Relu));
    }
    net.push(conv(w, cfg.out_channels, 7, 1, 3, PadMode::Reflect, &mut rng));
    net.push(act(ActKind::Tanh));
    Ok(Generator { config: cfg.clone(), net })
}

/// C(w0) without norm, then C(wi) with instance norm, then a one-channel
/// classifier; all kernels k, padding 1, leaky ReLU 0.2.
pub fn build_discriminator(cfg: &DiscriminatorConfig, seed: u64) -> Result<Discriminator, GanError> {
    cfg.validate()?;
    if *cfg == DiscriminatorConfig::default() {
        assert_eq!(receptive_field(cfg), 70, "default discriminator must see 70x70 patches");
    }
    let mut rng = SplitMix64::new(seed);
    let mut net = Sequential::default();
    let mut c_in = cfg.in_channels();
    for (i, (&c_out, &stride)) in cfg.widths.iter().zip(&cfg.strides).enumerate() {
        net.push(conv(c_in, c_out, cfg.kernel, stride, 1, PadMode::Zero, &mut rng));
        if i > 0 {
            net.push(norm(c_out));
        }
        net.push(act(ActKind::LEAKY_DEFAULT));
        c_in = c_out;
    }
    net.push(conv(c_in, 1, cfg.kernel, 1, 1, PadMode::Zero, &mut rng));
    Ok(Discriminator { config: cfg.clone(), net })
}

impl Discriminator {
    /// Builds the network input from a conditioning tile and a target tile.
    pub fn pair(&self, input: &Tensor, target: &Tensor) -> Result<Tensor, TensorError> {
        if self.config.conditional {
            Tensor::concat_channels(input, target)
        } else {
            Ok(target.clone())
        }
    }

    /// Gradient with respect to the target part of a pair gradient.
    pub fn target_grad(&self, pair_grad: &Tensor) -> Result<Tensor, TensorError> {
        if self.config.conditional {
            let c = pair_grad.shape()[1];
            pair_grad.slice_channels(c - self.config.image_channels, c)
        } else {
            Ok(pair_grad.clone())
        }
    }

    /// Mean patch probability: the sigmoid of every logit, averaged.
    pub fn score(&mut self, input: &Tensor, target: &Tensor) -> Result<f64, TensorError> {
        let logits = self.forward(&self.pair(input, target)?)?;
        Ok(logits.data().iter().map(|&z| 1.0 / (1.0 + (-(z as f64)).exp())).sum::<f64>() / logits.len() as f64)
    }
}

macro_rules! delegate_module {
    ($t:ty) => {
        impl Module for $t {
            fn forward(&mut self, x: &Tensor) -> Result<Tensor, TensorError> {
                self.net.forward(x)
            }

            fn backward(&mut self, gout: &Tensor) -> Result<Tensor, TensorError> {
                self.net.backward(gout)
            }

            fn visit_params(&self, prefix: &str, f: &mut dyn FnMut(&str, &Tensor)) {
                self.net.visit_params(prefix, f)
            }

            fn visit_params_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Tensor)) {
                self.net.visit_params_mut(prefix, f)
            }
        }
    };
}

delegate_module!(Generator);
delegate_module!(Discriminator);

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tiny_shapes() {
        let mut g = build_generator(&GeneratorConfig::tiny(), 1).unwrap();
        let mut rng = SplitMix64::new(2);
        let x = Tensor::uniform(&[1, 3, 64, 64], -1.0, 1.0, &mut rng);
        let y = g.forward(&x).unwrap();
        assert_eq!(y.shape(), x.shape());
        assert!(y.data().iter().all(|v| *v > -1.0 && *v < 1.0));
        let mut d = build_discriminator(&DiscriminatorConfig::tiny(), 3).unwrap();
        let logits = d.forward(&d.pair(&x, &y).unwrap()).unwrap();
        assert_eq!(logits.shape(), &[1, 1, 6, 6]);
        let s = d.score(&x, &y).unwrap();
        assert!(s > 0.0 && s < 1.0);
    }

    #[test]
    fn unconditional_takes_three_channels() {
        let cfg = DiscriminatorConfig { conditional: false, ..DiscriminatorConfig::tiny() };
        let mut d = build_discriminator(&cfg, 0).unwrap();
        let y = Tensor::zeros(&[1, 3, 64, 64]);
        let p = d.pair(&Tensor::zeros(&[1, 3, 64, 64]), &y).unwrap();
        assert_eq!(p.shape()[1], 3);
        assert_eq!(d.forward(&p).unwrap().shape(), &[1, 1, 6, 6]);
    }

    #[test]
    fn seeds_differ_between_networks() {
        assert_ne!(generator_seed(5), discriminator_seed(5));
        let a = build_generator(&GeneratorConfig::tiny(), 5).unwrap();
        let b = build_generator(&GeneratorConfig::tiny(), 5).unwrap();
        assert_eq!(a, b);
    }
}
