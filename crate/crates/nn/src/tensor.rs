use thiserror::Error;

use tilesynth_core::rng::SplitMix64;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TensorError {
    #[error("{op}: {axis} is {found}, expected {expected}")]
    Dimension { op: &'static str, axis: String, found: usize, expected: usize },
    #[error("{op}: {message}")]
    Invalid { op: &'static str, message: String },
}

pub(crate) fn dim_err(op: &'static str, axis: impl Into<String>, found: usize, expected: usize) -> TensorError {
    TensorError::Dimension { op, axis: axis.into(), found, expected }
}

/// Dense row-major f32 array. Activations are (N, C, H, W); parameters may
/// carry a gradient buffer of the same length.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f32>,
    pub grad: Option<Vec<f32>>,
}

impl Tensor {
    pub fn new(shape: &[usize], data: Vec<f32>) -> Result<Self, TensorError> {
        let n: usize = shape.iter().product();
        if n != data.len() {
            return Err(TensorError::Invalid { op: "tensor", message: format!("shape {shape:?} holds {n} values, got {}", data.len()) });
        }
        Ok(Self { shape: shape.to_vec(), data, grad: None })
    }

    pub fn zeros(shape: &[usize]) -> Self {
        Self::full(shape, 0.0)
    }

    pub fn full(shape: &[usize], v: f32) -> Self {
        Self { shape: shape.to_vec(), data: vec![v; shape.iter().product()], grad: None }
    }

    /// Normal(0, std) entries from the given generator.
    pub fn randn(shape: &[usize], std: f64, rng: &mut SplitMix64) -> Self {
        let n = shape.iter().product();
        Self { shape: shape.to_vec(), data: (0..n).map(|_| (rng.normal() * std) as f32).collect(), grad: None }
    }

    pub fn uniform(shape: &[usize], lo: f64, hi: f64, rng: &mut SplitMix64) -> Self {
        let n = shape.iter().product();
        Self { shape: shape.to_vec(), data: (0..n).map(|_| rng.uniform(lo, hi) as f32).collect(), grad: None }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    /// (N, C, H, W) of a 4-d tensor.
    pub fn dims4(&self, op: &'static str) -> Result<(usize, usize, usize, usize), TensorError> {
        match self.shape[..] {
            [n, c, h, w] => Ok((n, c, h, w)),
            _ => Err(dim_err(op, "rank", self.shape.len(), 4)),
        }
    }

    pub fn reshape(mut self, shape: &[usize]) -> Result<Self, TensorError> {
        if shape.iter().product::<usize>() != self.data.len() {
            return Err(TensorError::Invalid { op: "reshape", message: format!("{:?} -> {shape:?}", self.shape) });
        }
        self.shape = shape.to_vec();
        Ok(self)
    }

    pub fn map(&self, f: impl Fn(f32) -> f32) -> Tensor {
        Tensor { shape: self.shape.clone(), data: self.data.iter().map(|v| f(*v)).collect(), grad: None }
    }

    pub fn zip_map(&self, other: &Tensor, f: impl Fn(f32, f32) -> f32) -> Result<Tensor, TensorError> {
        self.same_shape(other, "zip")?;
        Ok(Tensor { shape: self.shape.clone(), data: self.data.iter().zip(&other.data).map(|(a, b)| f(*a, *b)).collect(), grad: None })
    }

    pub fn add(&self, other: &Tensor) -> Result<Tensor, TensorError> {
        self.zip_map(other, |a, b| a + b)
    }

    pub fn same_shape(&self, other: &Tensor, op: &'static str) -> Result<(), TensorError> {
        if self.shape != other.shape {
            return Err(TensorError::Invalid { op, message: format!("shapes {:?} and {:?} differ", self.shape, other.shape) });
        }
        Ok(())
    }

    /// Inner product accumulated in f64.
    pub fn dot(&self, other: &Tensor) -> f64 {
        self.data.iter().zip(&other.data).map(|(a, b)| *a as f64 * *b as f64).sum()
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().map(|v| *v as f64).sum()
    }

    pub fn mean(&self) -> f64 {
        self.sum() / self.data.len().max(1) as f64
    }

    /// Concatenates 4-d tensors along the channel axis.
    pub fn concat_channels(a: &Tensor, b: &Tensor) -> Result<Tensor, TensorError> {
        let (na, ca, ha, wa) = a.dims4("concat")?;
        let (nb, cb, hb, wb) = b.dims4("concat")?;
        if na != nb {
            return Err(dim_err("concat", "N", nb, na));
        }
        if (ha, wa) != (hb, wb) {
            return Err(dim_err("concat", "H*W", hb * wb, ha * wa));
        }
        let plane = ha * wa;
        let mut data = Vec::with_capacity(a.len() + b.len());
        for n in 0..na {
            data.extend_from_slice(&a.data[n * ca * plane..(n + 1) * ca * plane]);
            data.extend_from_slice(&b.data[n * cb * plane..(n + 1) * cb * plane]);
        }
        Ok(Tensor { shape: vec![na, ca + cb, ha, wa], data, grad: None })
    }

    /// Channels `from..to` of a 4-d tensor.
    pub fn slice_channels(&self, from: usize, to: usize) -> Result<Tensor, TensorError> {
        let (n, c, h, w) = self.dims4("slice")?;
        if from > to || to > c {
            return Err(dim_err("slice", "C", to, c));
        }
        let plane = h * w;
        let mut data = Vec::with_capacity(n * (to - from) * plane);
        for i in 0..n {
            data.extend_from_slice(&self.data[(i * c + from) * plane..(i * c + to) * plane]);
        }
        Ok(Tensor { shape: vec![n, to - from, h, w], data, grad: None })
    }

    pub fn zero_grad(&mut self) {
        match &mut self.grad {
            Some(g) => g.iter_mut().for_each(|v| *v = 0.0),
            None => self.grad = Some(vec![0.0; self.data.len()]),
        }
    }

    /// Adds `g` into the gradient buffer, creating it if needed.
    pub fn accumulate_grad(&mut self, g: &[f32]) {
        let buf = self.grad.get_or_insert_with(|| vec![0.0; self.data.len()]);
        for (d, s) in buf.iter_mut().zip(g) {
            *d += s;
        }
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn construction_checks_length() {
        assert!(Tensor::new(&[2, 3], vec![0.0; 6]).is_ok());
        assert!(Tensor::new(&[2, 3], vec![0.0; 5]).is_err());
    }

    #[test]
    fn channel_concat_and_slice() {
        let a = Tensor::new(&[1, 1, 2, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let b = Tensor::new(&[1, 2, 2, 2], (5..13).map(|v| v as f32).collect()).unwrap();
        let c = Tensor::concat_channels(&a, &b).unwrap();
        assert_eq!(c.shape(), &[1, 3, 2, 2]);
        assert_eq!(c.slice_channels(0, 1).unwrap().data(), a.data());
        assert_eq!(c.slice_channels(1, 3).unwrap().data(), b.data());
    }
}
