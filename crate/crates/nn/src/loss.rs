use crate::tensor::{Tensor, TensorError};

#[inline]
fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

/// Mean binary cross-entropy of every logit against a constant label,
/// with its gradient.
pub fn bce_with_logits(logits: &Tensor, label: f32) -> (f64, Tensor) {
    let n = logits.len() as f64;
    let y = label as f64;
    let mut total = 0.0;
    let grad = logits.map(|z| {
        let z = z as f64;
        ((sigmoid(z) - y) / n) as f32
    });
    for z in logits.data() {
        let z = *z as f64;
        total += z.max(0.0) - z * y + (-z.abs()).exp().ln_1p();
    }
    (total / n, grad)
}

/// Cross-entropy of the mean logit against the label; every logit receives
/// the same share of the gradient.
pub fn bce_mean_logit(logits: &Tensor, label: f32) -> (f64, Tensor) {
    let n = logits.len() as f64;
    let z = logits.mean();
    let y = label as f64;
    let loss = z.max(0.0) - z * y + (-z.abs()).exp().ln_1p();
    let g = ((sigmoid(z) - y) / n) as f32;
    (loss, Tensor::full(logits.shape(), g))
}

/// Mean absolute difference and its (sub)gradient with respect to `pred`.
pub fn l1(pred: &Tensor, target: &Tensor) -> Result<(f64, Tensor), TensorError> {
    pred.same_shape(target, "l1")?;
    let n = pred.len() as f64;
    let loss = pred.data().iter().zip(target.data()).map(|(a, b)| (*a as f64 - *b as f64).abs()).sum::<f64>() / n;
    let grad = pred.zip_map(target, |a, b| {
        let d = a - b;
        if d > 0.0 {
            (1.0 / n) as f32
        } else if d < 0.0 {
            (-1.0 / n) as f32
        } else {
            0.0
        }
    })?;
    Ok((loss, grad))
}

/// Fraction of logits on the correct side of zero.
pub fn patch_accuracy(logits: &Tensor, real: bool) -> f64 {
    let hits = logits.data().iter().filter(|z| if real { **z > 0.0 } else { **z < 0.0 }).count();
    hits as f64 / logits.len().max(1) as f64
}
