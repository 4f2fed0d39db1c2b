use rayon::prelude::*;

use crate::tensor::{dim_err, Tensor, TensorError};

pub const INSTANCE_NORM_EPS: f64 = 1e-5;

fn plane_stats(p: &[f32]) -> (f64, f64) {
    let m = p.len() as f64;
    let mean = p.iter().map(|v| *v as f64).sum::<f64>() / m;
    let var = p.iter().map(|v| (*v as f64 - mean).powi(2)).sum::<f64>() / m;
    (mean, 1.0 / (var + INSTANCE_NORM_EPS).sqrt())
}

fn check(op: &'static str, x: &Tensor, gamma: &Tensor, beta: &Tensor) -> Result<(usize, usize, usize), TensorError> {
    let (n, c, h, w) = x.dims4(op)?;
    if gamma.len() != c {
        return Err(dim_err(op, "scale length", gamma.len(), c));
    }
    if beta.len() != c {
        return Err(dim_err(op, "shift length", beta.len(), c));
    }
    if h * w == 0 {
        return Err(dim_err(op, "H*W", 0, 1));
    }
    Ok((n, c, h * w))
}

/// Per (sample, channel): scale·(x − mean)/√(var + ε) + shift, biased variance.
pub fn instance_norm(x: &Tensor, gamma: &Tensor, beta: &Tensor) -> Result<Tensor, TensorError> {
    let (_, c, m) = check("instance_norm", x, gamma, beta)?;
    let mut out = vec![0.0f32; x.len()];
    out.par_chunks_mut(m).zip(x.data().par_chunks(m)).enumerate().for_each(|(idx, (dst, src))| {
        let (mean, inv) = plane_stats(src);
        let (g, b) = (gamma.data()[idx % c] as f64, beta.data()[idx % c] as f64);
        for (d, v) in dst.iter_mut().zip(src) {
            *d = (g * (*v as f64 - mean) * inv + b) as f32;
        }
    });
    Tensor::new(x.shape(), out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct NormGrads {
    pub input: Tensor,
    pub gamma: Vec<f32>,
    pub beta: Vec<f32>,
}

pub fn instance_norm_backward(x: &Tensor, gamma: &Tensor, beta: &Tensor, gout: &Tensor) -> Result<NormGrads, TensorError> {
    let (n, c, m) = check("instance_norm_backward", x, gamma, beta)?;
    x.same_shape(gout, "instance_norm_backward")?;
    let mut gx = vec![0.0f32; x.len()];
    let sums: Vec<(f64, f64)> = gx
        .par_chunks_mut(m)
        .zip(x.data().par_chunks(m).zip(gout.data().par_chunks(m)))
        .enumerate()
        .map(|(idx, (dst, (xs, gs)))| {
            let (mean, inv) = plane_stats(xs);
            let mut sg = 0.0f64;
            let mut sgx = 0.0f64;
            for (v, g) in xs.iter().zip(gs) {
                let xhat = (*v as f64 - mean) * inv;
                sg += *g as f64;
                sgx += *g as f64 * xhat;
            }
            let scale = gamma.data()[idx % c] as f64 * inv;
            let mf = m as f64;
            for ((d, v), g) in dst.iter_mut().zip(xs).zip(gs) {
                let xhat = (*v as f64 - mean) * inv;
                *d = (scale * (*g as f64 - sg / mf - xhat * sgx / mf)) as f32;
            }
            (sg, sgx)
        })
        .collect();
    let mut g_gamma = vec![0.0f64; c];
    let mut g_beta = vec![0.0f64; c];
    for i in 0..n {
        for ch in 0..c {
            let (sg, sgx) = sums[i * c + ch];
            g_beta[ch] += sg;
            g_gamma[ch] += sgx;
        }
    }
    Ok(NormGrads {
        input: Tensor::new(x.shape(), gx)?,
        gamma: g_gamma.into_iter().map(|v| v as f32).collect(),
        beta: g_beta.into_iter().map(|v| v as f32).collect(),
    })
}
