//! Central-difference gradient checking for [`Module`] implementations.

use tilesynth_core::rng::SplitMix64;

use crate::layers::{Activation, Conv2d, ConvTranspose2d, InstanceNorm, Module, PadMode};
use crate::ops::ActKind;
use crate::tensor::{Tensor, TensorError};

/// Finite-difference step for f32 tensors.
pub const DEFAULT_STEP: f32 = 1e-3;

/// |a − n| / max(|a|, |n|, 1e-8).
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-8)
}

#[derive(Debug, Clone)]
pub struct GradcheckOptions {
    pub step: f32,
    /// Loss weights w in L = Σ w·y; all ones (a plain sum) when `None`.
    pub weights: Option<Vec<f64>>,
    pub check_params: bool,
}

impl Default for GradcheckOptions {
    fn default() -> Self {
        Self { step: DEFAULT_STEP, weights: None, check_params: true }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradcheckReport {
    pub input: f64,
    pub params: Vec<(String, f64)>,
}

impl GradcheckReport {
    pub fn max(&self) -> f64 {
        self.params.iter().map(|(_, e)| *e).fold(self.input, f64::max)
    }
}

fn weighted_loss(y: &Tensor, w: &[f64]) -> f64 {
    y.data().iter().zip(w).map(|(a, b)| *a as f64 * b).sum()
}

/// Sets element `j` of the `index`-th parameter and returns the value actually stored.
fn set_param<M: Module + ?Sized>(m: &mut M, index: usize, j: usize, value: f32) -> f32 {
    let mut k = 0;
    let mut stored = value;
    m.visit_params_mut("", &mut |_, p| {
        if k == index {
            p.data_mut()[j] = value;
            stored = p.data()[j];
        }
        k += 1;
    });
    stored
}

/// Compares the analytic gradient of L = Σ w·module(x) with central
/// differences, over every input element and (optionally) every parameter.
/// The difference quotient divides by the perturbation actually realised
/// in f32, not the nominal step.
pub fn gradcheck<M: Module + ?Sized>(module: &mut M, x: &Tensor, opts: &GradcheckOptions) -> Result<GradcheckReport, TensorError> {
    let y = module.forward(x)?;
    let w = match &opts.weights {
        Some(w) if w.len() != y.len() => {
            return Err(TensorError::Invalid { op: "gradcheck", message: format!("{} weights for {} outputs", w.len(), y.len()) })
        }
        Some(w) => w.clone(),
        None => vec![1.0; y.len()],
    };
    module.zero_grad();
    let gout = Tensor::new(y.shape(), w.iter().map(|v| *v as f32).collect())?;
    let gx = module.backward(&gout)?;
    let mut analytic_params = Vec::new();
    module.visit_params("", &mut |name, p| analytic_params.push((name.to_string(), p.grad.clone().unwrap_or_else(|| vec![0.0; p.len()]))));

    let eval = |module: &mut M, input: &Tensor| -> Result<f64, TensorError> { Ok(weighted_loss(&module.forward(input)?, &w)) };

    let mut worst_input = 0.0f64;
    let mut probe = x.clone();
    for i in 0..x.len() {
        let orig = x.data()[i];
        probe.data_mut()[i] = orig + opts.step;
        let up_x = probe.data()[i] as f64;
        let up = eval(module, &probe)?;
        probe.data_mut()[i] = orig - opts.step;
        let down_x = probe.data()[i] as f64;
        let down = eval(module, &probe)?;
        probe.data_mut()[i] = orig;
        let numeric = (up - down) / (up_x - down_x);
        worst_input = worst_input.max(relative_error(gx.data()[i] as f64, numeric));
    }

    let mut params = Vec::new();
    if opts.check_params {
        let mut values = Vec::new();
        module.visit_params("", &mut |_, p| values.push(p.data().to_vec()));
        for (index, ((name, analytic), orig)) in analytic_params.into_iter().zip(values).enumerate() {
            let mut worst = 0.0f64;
            for (j, &v) in orig.iter().enumerate() {
                let up_p = set_param(module, index, j, v + opts.step) as f64;
                let up = eval(module, x)?;
                let down_p = set_param(module, index, j, v - opts.step) as f64;
                let down = eval(module, x)?;
                set_param(module, index, j, v);
                let numeric = (up - down) / (up_p - down_p);
                worst = worst.max(relative_error(analytic[j] as f64, numeric));
            }
            params.push((name, worst));
        }
    }
    Ok(GradcheckReport { input: worst_input, params })
}

/// Wraps a module and scales its input gradient, to confirm the harness
/// notices a wrong backward pass.
#[derive(Debug, Clone)]
pub struct CorruptedBackward<M> {
    pub inner: M,
    pub factor: f32,
}

impl<M: Module> Module for CorruptedBackward<M> {
    fn forward(&mut self, x: &Tensor) -> Result<Tensor, TensorError> {
        self.inner.forward(x)
    }

    fn backward(&mut self, gout: &Tensor) -> Result<Tensor, TensorError> {
        Ok(self.inner.backward(gout)?.map(|v| v * self.factor))
    }

    fn visit_params(&self, prefix: &str, f: &mut dyn FnMut(&str, &Tensor)) {
        self.inner.visit_params(prefix, f)
    }

    fn visit_params_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Tensor)) {
        self.inner.visit_params_mut(prefix, f)
    }
}

/// Outcome of checking one operator on one randomly drawn configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct OpCheck {
    pub op: &'static str,
    pub input_shape: Vec<usize>,
    pub error: f64,
}

/// Operators covered by [`op_suite`].
pub const SUITE_OPS: [&str; 8] =
    ["conv2d_zero", "conv2d_reflect", "conv_transpose2d", "instance_norm", "relu", "leaky_relu", "tanh", "sigmoid"];

fn pick(rng: &mut SplitMix64, lo: usize, hi: usize) -> usize {
    lo + rng.below((hi - lo + 1) as u64) as usize
}

/// Positive data keeps every partial derivative of the sum-loss away from zero.
fn positive(shape: &[usize], rng: &mut SplitMix64) -> Tensor {
    Tensor::uniform(shape, 0.05, 0.15, rng)
}

/// Magnitudes in [0.1, 1] with random signs, clear of the kink at zero.
fn off_kink(shape: &[usize], rng: &mut SplitMix64) -> Tensor {
    let n: usize = shape.iter().product();
    let data = (0..n).map(|_| (rng.uniform(0.1, 1.0) * if rng.next_u64() & 1 == 0 { 1.0 } else { -1.0 }) as f32).collect();
    Tensor::new(shape, data).expect("sized")
}

fn check_instance_norm(rng: &mut SplitMix64) -> Result<(Vec<usize>, f64), TensorError> {
    let (n, c) = (pick(rng, 1, 2), pick(rng, 1, 3));
    let (h, w) = (2 * pick(rng, 2, 3), pick(rng, 3, 6));
    let shape = vec![n, c, h, w];
    let x = Tensor::randn(&shape, 0.5, rng);
    let mut norm = InstanceNorm::new(c);
    norm.scale = Tensor::uniform(&[c], 0.5, 1.5, rng);
    norm.shift = Tensor::uniform(&[c], -0.5, 0.5, rng);
    let m = h * w;
    let xhat = |plane: &[f32]| -> Vec<f64> {
        let mean = plane.iter().map(|v| *v as f64).sum::<f64>() / m as f64;
        let var = plane.iter().map(|v| (*v as f64 - mean).powi(2)).sum::<f64>() / m as f64;
        plane.iter().map(|v| (*v as f64 - mean) / (var + crate::ops::INSTANCE_NORM_EPS).sqrt()).collect()
    };
    // The input gradient is γ/σ times the projection of w off span{1, x̂}, so a
    // plain sum gives zero. A balanced ±1 pattern that is nearly orthogonal to
    // x̂ keeps every entry of that projection close to ±1: pair neighbours in
    // x̂ order and orient each pair against the running Σ w·x̂.
    let mut signs = Vec::with_capacity(x.len());
    for plane in x.data().chunks(m) {
        let xh = xhat(plane);
        let mut order: Vec<usize> = (0..m).collect();
        order.sort_by(|a, b| xh[*a].total_cmp(&xh[*b]));
        let mut w = vec![0.0; m];
        let mut running = 0.0;
        for pair in order.chunks_exact(2) {
            let d = xh[pair[1]] - xh[pair[0]];
            let flip = if running > 0.0 { -1.0 } else { 1.0 };
            w[pair[1]] = flip;
            w[pair[0]] = -flip;
            running += flip * d;
        }
        signs.extend(w);
    }
    let input = gradcheck(&mut norm, &x, &GradcheckOptions { weights: Some(signs), check_params: false, ..Default::default() })?.input;
    // w = 1 + x̂ makes both Σw and Σw·x̂ of order H·W.
    let w_params: Vec<f64> = x.data().chunks(m).flat_map(|plane| xhat(plane).into_iter().map(|v| 1.0 + v)).collect();
    let r = gradcheck(&mut norm, &x, &GradcheckOptions { weights: Some(w_params), check_params: true, ..Default::default() })?;
    let params = r.params.iter().map(|(_, e)| *e).fold(0.0, f64::max);
    Ok((shape, input.max(params)))
}

fn check_one(op: &'static str, rng: &mut SplitMix64) -> Result<(Vec<usize>, f64), TensorError> {
    match op {
        "conv2d_zero" | "conv2d_reflect" => {
            let (cin, cout) = (pick(rng, 1, 3), pick(rng, 1, 3));
            let k = [1, 2, 3, 4][rng.below(4) as usize];
            let stride = pick(rng, 1, 2);
            let (h, w) = (pick(rng, 4, 7), pick(rng, 4, 7));
            let pad = pick(rng, 0, (k / 2).min(h - 1).min(w - 1));
            let mode = if op == "conv2d_zero" { PadMode::Zero } else { PadMode::Reflect };
            let shape = vec![pick(rng, 1, 2), cin, h, w];
            let x = positive(&shape, rng);
            let mut conv = Conv2d::from_weights(positive(&[cout, cin, k, k], rng), Some(positive(&[cout], rng)), stride, pad, mode);
            Ok((shape, gradcheck(&mut conv, &x, &GradcheckOptions::default())?.max()))
        }
        "conv_transpose2d" => {
            let (cin, cout) = (pick(rng, 1, 3), pick(rng, 1, 3));
            let k = pick(rng, 2, 4);
            let stride = pick(rng, 1, 2);
            let pad = pick(rng, 0, (k - 1) / 2);
            let shape = vec![pick(rng, 1, 2), cin, pick(rng, 2, 5), pick(rng, 2, 5)];
            let x = positive(&shape, rng);
            let mut conv = ConvTranspose2d::from_weights(positive(&[cin, cout, k, k], rng), Some(positive(&[cout], rng)), stride, pad);
            Ok((shape, gradcheck(&mut conv, &x, &GradcheckOptions::default())?.max()))
        }
        "instance_norm" => check_instance_norm(rng),
        _ => {
            let kind = match op {
                "relu" => ActKind::Relu,
                "leaky_relu" => ActKind::LEAKY_DEFAULT,
                "tanh" => ActKind::Tanh,
                "sigmoid" => ActKind::Sigmoid,
                other => return Err(TensorError::Invalid { op: "gradcheck", message: format!("unknown operator {other}") }),
            };
            let shape = vec![pick(rng, 1, 2), pick(rng, 1, 3), pick(rng, 2, 6), pick(rng, 2, 6)];
            let x = match kind {
                ActKind::Relu | ActKind::LeakyRelu { .. } => off_kink(&shape, rng),
                _ => Tensor::uniform(&shape, -1.5, 1.5, rng),
            };
            Ok((shape, gradcheck(&mut Activation::new(kind), &x, &GradcheckOptions::default())?.max()))
        }
    }
}

/// Gradient-checks every operator on `shapes` randomly drawn configurations
/// per operator, seeded from `seed`.
pub fn op_suite(seed: u64, shapes: usize) -> Result<Vec<OpCheck>, TensorError> {
    let mut out = Vec::new();
    for (i, op) in SUITE_OPS.iter().enumerate() {
        for j in 0..shapes {
            let mut rng = SplitMix64::new(tilesynth_core::rng::mix64(seed ^ ((i as u64) << 32) ^ j as u64));
            let (input_shape, error) = check_one(op, &mut rng)?;
            out.push(OpCheck { op, input_shape, error });
        }
    }
    Ok(out)
}

/// Gradcheck of a convolution whose backward pass is deliberately scaled by 1.5.
pub fn corrupted_sentinel(seed: u64) -> Result<f64, TensorError> {
    let mut rng = SplitMix64::new(seed);
    let x = positive(&[1, 2, 5, 5], &mut rng);
    let conv = Conv2d::from_weights(positive(&[2, 2, 3, 3], &mut rng), None, 1, 1, PadMode::Zero);
    let mut bad = CorruptedBackward { inner: conv, factor: 1.5 };
    Ok(gradcheck(&mut bad, &x, &GradcheckOptions { check_params: false, ..Default::default() })?.max())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn linear_conv_is_tight() {
        let mut rng = SplitMix64::new(1);
        let w = Tensor::uniform(&[2, 2, 3, 3], 0.05, 0.15, &mut rng);
        let mut c = Conv2d::from_weights(w, None, 1, 1, PadMode::Zero);
        let x = Tensor::uniform(&[1, 2, 6, 6], 0.05, 0.15, &mut rng);
        let r = gradcheck(&mut c, &x, &GradcheckOptions { check_params: false, ..Default::default() }).unwrap();
        assert!(r.input <= 1e-4, "{r:?}");
    }

    #[test]
    fn relu_away_from_kink() {
        let mut rng = SplitMix64::new(2);
        let x = Tensor::uniform(&[1, 2, 4, 4], 0.1, 1.0, &mut rng).zip_map(&Tensor::uniform(&[1, 2, 4, 4], 0.0, 1.0, &mut rng), |v, s| if s < 0.5 { -v } else { v }).unwrap();
        let r = gradcheck(&mut Activation::new(ActKind::Relu), &x, &GradcheckOptions::default()).unwrap();
        assert!(r.input <= 1e-4, "{r:?}");
    }

    #[test]
    fn corrupted_backward_is_caught() {
        let mut rng = SplitMix64::new(3);
        let x = Tensor::uniform(&[1, 1, 4, 4], -2.0, 2.0, &mut rng);
        let mut m = CorruptedBackward { inner: Activation::new(ActKind::Tanh), factor: 1.5 };
        let r = gradcheck(&mut m, &x, &GradcheckOptions::default()).unwrap();
        assert!(r.max() > 0.1, "{r:?}");
    }

    #[test]
    fn relative_error_floor() {
        assert_eq!(relative_error(0.0, 0.0), 0.0);
        assert_eq!(relative_error(1.0, 0.5), 0.5);
    }
}
