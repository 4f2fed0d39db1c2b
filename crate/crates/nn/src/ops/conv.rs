use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::tensor::{dim_err, Tensor, TensorError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PadMode {
    Zero,
    Reflect,
}

/// ⌊(size + 2·pad − k) / stride⌋ + 1.
pub fn conv_output_size(size: usize, k: usize, stride: usize, pad: usize) -> Option<usize> {
    (size + 2 * pad).checked_sub(k).map(|v| v / stride + 1)
}

/// (size − 1)·stride − 2·pad + k.
pub fn conv_transpose_output_size(size: usize, k: usize, stride: usize, pad: usize) -> Option<usize> {
    ((size.checked_sub(1)?) * stride + k).checked_sub(2 * pad).filter(|v| *v > 0)
}

#[inline]
fn reflect(i: isize, n: usize) -> usize {
    let n = n as isize;
    let r = if i < 0 { -i } else if i >= n { 2 * n - 2 - i } else { i };
    r as usize
}

pub fn pad2d(x: &Tensor, pad: usize, mode: PadMode) -> Result<Tensor, TensorError> {
    let (n, c, h, w) = x.dims4("pad")?;
    if pad == 0 {
        return Ok(Tensor::new(x.shape(), x.data().to_vec())?);
    }
    if mode == PadMode::Reflect && (pad >= h || pad >= w) {
        return Err(TensorError::Invalid { op: "pad", message: format!("reflect pad {pad} needs H and W above it, got {h}x{w}") });
    }
    let (hp, wp) = (h + 2 * pad, w + 2 * pad);
    let mut out = vec![0.0f32; n * c * hp * wp];
    let src = x.data();
    out.par_chunks_mut(hp * wp).enumerate().for_each(|(plane, dst)| {
        let s = &src[plane * h * w..(plane + 1) * h * w];
        for yy in 0..hp {
            let sy = yy as isize - pad as isize;
            let sy = match mode {
                PadMode::Zero if sy < 0 || sy >= h as isize => continue,
                PadMode::Zero => sy as usize,
                PadMode::Reflect => reflect(sy, h),
            };
            for xx in 0..wp {
                let sx = xx as isize - pad as isize;
                let sx = match mode {
                    PadMode::Zero if sx < 0 || sx >= w as isize => continue,
                    PadMode::Zero => sx as usize,
                    PadMode::Reflect => reflect(sx, w),
                };
                dst[yy * wp + xx] = s[sy * w + sx];
            }
        }
    });
    Tensor::new(&[n, c, hp, wp], out)
}

/// Gradient of [`pad2d`]: crops, folding reflected contributions back.
pub fn pad2d_backward(g: &Tensor, pad: usize, mode: PadMode) -> Result<Tensor, TensorError> {
    let (n, c, hp, wp) = g.dims4("pad_backward")?;
    if pad == 0 {
        return Tensor::new(g.shape(), g.data().to_vec());
    }
    let (h, w) = (hp - 2 * pad, wp - 2 * pad);
    let mut out = vec![0.0f32; n * c * h * w];
    let src = g.data();
    out.par_chunks_mut(h * w).enumerate().for_each(|(plane, dst)| {
        let s = &src[plane * hp * wp..(plane + 1) * hp * wp];
        let mut acc = vec![0.0f64; h * w];
        for yy in 0..hp {
            let sy = yy as isize - pad as isize;
            let ty = match mode {
                PadMode::Zero if sy < 0 || sy >= h as isize => continue,
                PadMode::Zero => sy as usize,
                PadMode::Reflect => reflect(sy, h),
            };
            for xx in 0..wp {
                let sx = xx as isize - pad as isize;
                let tx = match mode {
                    PadMode::Zero if sx < 0 || sx >= w as isize => continue,
                    PadMode::Zero => sx as usize,
                    PadMode::Reflect => reflect(sx, w),
                };
                acc[ty * w + tx] += s[yy * wp + xx] as f64;
            }
        }
        for (d, a) in dst.iter_mut().zip(acc) {
            *d = a as f32;
        }
    });
    Tensor::new(&[n, c, h, w], out)
}

struct Geom {
    n: usize,
    cin: usize,
    hp: usize,
    wp: usize,
    cout: usize,
    k: usize,
    s: usize,
    ho: usize,
    wo: usize,
}

/// out[n, co, oy, ox] = bias[co] + Σ_{ci, ky, kx} w[co, ci, ky, kx] · x[n, ci, oy·s + ky, ox·s + kx]
fn gather(x: &[f32], w: &[f32], bias: Option<&[f32]>, g: &Geom) -> Vec<f32> {
    let mut out = vec![0.0f32; g.n * g.cout * g.ho * g.wo];
    out.par_chunks_mut(g.ho * g.wo).enumerate().for_each(|(idx, dst)| {
        let (n, co) = (idx / g.cout, idx % g.cout);
        let b = bias.map_or(0.0, |b| b[co] as f64);
        let mut acc = vec![b; g.ho * g.wo];
        for ci in 0..g.cin {
            let xp = &x[(n * g.cin + ci) * g.hp * g.wp..(n * g.cin + ci + 1) * g.hp * g.wp];
            for ky in 0..g.k {
                for kx in 0..g.k {
                    let wv = w[((co * g.cin + ci) * g.k + ky) * g.k + kx] as f64;
                    for oy in 0..g.ho {
                        let row = &xp[(oy * g.s + ky) * g.wp + kx..];
                        let arow = &mut acc[oy * g.wo..(oy + 1) * g.wo];
                        if g.s == 1 {
                            for (a, v) in arow.iter_mut().zip(row) {
                                *a += wv * *v as f64;
                            }
                        } else {
                            for (ox, a) in arow.iter_mut().enumerate() {
                                *a += wv * row[ox * g.s] as f64;
                            }
                        }
                    }
                }
            }
        }
        for (d, a) in dst.iter_mut().zip(acc) {
            *d = a as f32;
        }
    });
    out
}

/// Adjoint of [`gather`] with respect to x: distributes `gout` back onto the
/// (padded) input grid.
fn scatter(gout: &[f32], w: &[f32], g: &Geom) -> Vec<f32> {
    let mut out = vec![0.0f32; g.n * g.cin * g.hp * g.wp];
    out.par_chunks_mut(g.hp * g.wp).enumerate().for_each(|(idx, dst)| {
        let (n, ci) = (idx / g.cin, idx % g.cin);
        let mut acc = vec![0.0f64; g.hp * g.wp];
        for co in 0..g.cout {
            let gp = &gout[(n * g.cout + co) * g.ho * g.wo..(n * g.cout + co + 1) * g.ho * g.wo];
            for ky in 0..g.k {
                for kx in 0..g.k {
                    let wv = w[((co * g.cin + ci) * g.k + ky) * g.k + kx] as f64;
                    for oy in 0..g.ho {
                        let grow = &gp[oy * g.wo..(oy + 1) * g.wo];
                        let base = (oy * g.s + ky) * g.wp + kx;
                        if g.s == 1 {
                            for (a, v) in acc[base..base + g.wo].iter_mut().zip(grow) {
                                *a += wv * *v as f64;
                            }
                        } else {
                            for (ox, v) in grow.iter().enumerate() {
                                acc[base + ox * g.s] += wv * *v as f64;
                            }
                        }
                    }
                }
            }
        }
        for (d, a) in dst.iter_mut().zip(acc) {
            *d = a as f32;
        }
    });
    out
}

/// gw[co, ci, ky, kx] = Σ_{n, oy, ox} gout[n, co, oy, ox] · x[n, ci, oy·s + ky, ox·s + kx]
fn weight_grad(gout: &[f32], x: &[f32], g: &Geom) -> Vec<f32> {
    let per_co = g.cin * g.k * g.k;
    let mut out = vec![0.0f32; g.cout * per_co];
    out.par_chunks_mut(per_co).enumerate().for_each(|(co, dst)| {
        for ci in 0..g.cin {
            for ky in 0..g.k {
                for kx in 0..g.k {
                    let mut lanes = [0.0f64; 4];
                    for n in 0..g.n {
                        let gp = &gout[(n * g.cout + co) * g.ho * g.wo..];
                        let xp = &x[(n * g.cin + ci) * g.hp * g.wp..];
                        for oy in 0..g.ho {
                            let grow = &gp[oy * g.wo..(oy + 1) * g.wo];
                            let xrow = &xp[(oy * g.s + ky) * g.wp + kx..];
                            for (ox, v) in grow.iter().enumerate() {
                                lanes[ox & 3] += *v as f64 * xrow[ox * g.s] as f64;
                            }
                        }
                    }
                    dst[(ci * g.k + ky) * g.k + kx] = ((lanes[0] + lanes[1]) + (lanes[2] + lanes[3])) as f32;
                }
            }
        }
    });
    out
}

fn bias_grad(gout: &[f32], n: usize, c: usize, plane: usize) -> Vec<f32> {
    (0..c)
        .map(|ch| {
            let mut acc = 0.0f64;
            for i in 0..n {
                acc += gout[(i * c + ch) * plane..(i * c + ch + 1) * plane].iter().map(|v| *v as f64).sum::<f64>();
            }
            acc as f32
        })
        .collect()
}

fn check_weight(op: &'static str, w: &Tensor, c_in: usize, weight_in_axis: usize) -> Result<usize, TensorError> {
    let (a, b, k, k2) = w.dims4(op)?;
    if k != k2 {
        return Err(dim_err(op, "kernel width", k2, k));
    }
    let found = if weight_in_axis == 0 { a } else { b };
    if found != c_in {
        return Err(dim_err(op, "input channels", c_in, found));
    }
    Ok(k)
}

fn check_bias(op: &'static str, b: Option<&Tensor>, c: usize) -> Result<(), TensorError> {
    match b {
        Some(b) if b.len() != c => Err(dim_err(op, "bias length", b.len(), c)),
        _ => Ok(()),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvGrads {
    pub input: Tensor,
    pub weight: Vec<f32>,
    pub bias: Vec<f32>,
}

fn conv_geom(op: &'static str, x: &Tensor, w: &Tensor, stride: usize, pad: usize) -> Result<Geom, TensorError> {
    let (n, cin, h, wd) = x.dims4(op)?;
    let k = check_weight(op, w, cin, 1)?;
    if stride == 0 {
        return Err(TensorError::Invalid { op, message: "stride must be positive".into() });
    }
    let (hp, wp) = (h + 2 * pad, wd + 2 * pad);
    if hp < k {
        return Err(dim_err(op, "padded height", hp, k));
    }
    if wp < k {
        return Err(dim_err(op, "padded width", wp, k));
    }
    Ok(Geom { n, cin, hp, wp, cout: w.shape()[0], k, s: stride, ho: (hp - k) / stride + 1, wo: (wp - k) / stride + 1 })
}

/// Cross-correlation with weight (C_out, C_in, k, k).
pub fn conv2d(x: &Tensor, w: &Tensor, b: Option<&Tensor>, stride: usize, pad: usize, mode: PadMode) -> Result<Tensor, TensorError> {
    let g = conv_geom("conv2d", x, w, stride, pad)?;
    check_bias("conv2d", b, g.cout)?;
    let xp = pad2d(x, pad, mode)?;
    let out = gather(xp.data(), w.data(), b.map(|b| b.data()), &g);
    Tensor::new(&[g.n, g.cout, g.ho, g.wo], out)
}

pub fn conv2d_backward(x: &Tensor, w: &Tensor, gout: &Tensor, stride: usize, pad: usize, mode: PadMode) -> Result<ConvGrads, TensorError> {
    let g = conv_geom("conv2d_backward", x, w, stride, pad)?;
    if gout.shape() != [g.n, g.cout, g.ho, g.wo] {
        return Err(TensorError::Invalid { op: "conv2d_backward", message: format!("gradient shape {:?}", gout.shape()) });
    }
    let xp = pad2d(x, pad, mode)?;
    let gxp = Tensor::new(&[g.n, g.cin, g.hp, g.wp], scatter(gout.data(), w.data(), &g))?;
    Ok(ConvGrads {
        input: pad2d_backward(&gxp, pad, mode)?,
        weight: weight_grad(gout.data(), xp.data(), &g),
        bias: bias_grad(gout.data(), g.n, g.cout, g.ho * g.wo),
    })
}

/// Geometry of the stride-s correlation that maps the full (uncropped)
/// transposed output back onto the input grid.
fn transpose_geom(op: &'static str, x: &Tensor, w: &Tensor, stride: usize, pad: usize) -> Result<Geom, TensorError> {
    let (n, cin, h, wd) = x.dims4(op)?;
    let k = check_weight(op, w, cin, 0)?;
    if stride == 0 {
        return Err(TensorError::Invalid { op, message: "stride must be positive".into() });
    }
    let (hf, wf) = ((h - 1) * stride + k, (wd - 1) * stride + k);
    if hf <= 2 * pad || wf <= 2 * pad {
        return Err(TensorError::Invalid { op, message: format!("padding {pad} consumes the whole {hf}x{wf} output") });
    }
    // Correlation view: "input" is the full output (C_out), "output" is x (C_in).
    Ok(Geom { n, cin: w.shape()[1], hp: hf, wp: wf, cout: cin, k, s: stride, ho: h, wo: wd })
}

fn crop(full: &[f32], n: usize, c: usize, hf: usize, wf: usize, pad: usize) -> Vec<f32> {
    let (h, w) = (hf - 2 * pad, wf - 2 * pad);
    let mut out = Vec::with_capacity(n * c * h * w);
    for plane in 0..n * c {
        for y in 0..h {
            let start = plane * hf * wf + (y + pad) * wf + pad;
            out.extend_from_slice(&full[start..start + w]);
        }
    }
    out
}

/// Transposed convolution with weight (C_in, C_out, k, k); output side
/// (H − 1)·stride − 2·pad + k.
pub fn conv_transpose2d(x: &Tensor, w: &Tensor, b: Option<&Tensor>, stride: usize, pad: usize) -> Result<Tensor, TensorError> {
    let g = transpose_geom("conv_transpose2d", x, w, stride, pad)?;
    check_bias("conv_transpose2d", b, g.cin)?;
    let full = scatter(x.data(), w.data(), &g);
    let mut out = crop(&full, g.n, g.cin, g.hp, g.wp, pad);
    let (h, wd) = (g.hp - 2 * pad, g.wp - 2 * pad);
    if let Some(b) = b {
        out.par_chunks_mut(h * wd).enumerate().for_each(|(idx, plane)| {
            let bv = b.data()[idx % g.cin];
            plane.iter_mut().for_each(|v| *v = (*v as f64 + bv as f64) as f32);
        });
    }
    Tensor::new(&[g.n, g.cin, h, wd], out)
}

pub fn conv_transpose2d_backward(x: &Tensor, w: &Tensor, gout: &Tensor, stride: usize, pad: usize) -> Result<ConvGrads, TensorError> {
    let g = transpose_geom("conv_transpose2d_backward", x, w, stride, pad)?;
    if gout.shape() != [g.n, g.cin, g.hp - 2 * pad, g.wp - 2 * pad] {
        return Err(TensorError::Invalid { op: "conv_transpose2d_backward", message: format!("gradient shape {:?}", gout.shape()) });
    }
    let gfull = pad2d(gout, pad, PadMode::Zero)?;
    let input = gather(gfull.data(), w.data(), None, &g);
    Ok(ConvGrads {
        input: Tensor::new(x.shape(), input)?,
        weight: weight_grad(x.data(), gfull.data(), &g),
        bias: bias_grad(gout.data(), g.n, g.cin, gout.shape()[2] * gout.shape()[3]),
    })
}
