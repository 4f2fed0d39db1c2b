//! Small dense f64 matrices and a cyclic Jacobi eigensolver.

use super::MetricsError;

#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    pub fn from_diag(d: &[f64]) -> Self {
        let mut m = Self::zeros(d.len(), d.len());
        for (i, v) in d.iter().enumerate() {
            m[(i, i)] = *v;
        }
        m
    }

    /// Row-major construction. Panics if `data.len() != rows * cols`.
    pub fn from_rows(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), rows * cols);
        Self { rows, cols, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn transpose(&self) -> Matrix {
        let mut t = Matrix::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                t[(j, i)] = self[(i, j)];
            }
        }
        t
    }

    pub fn matmul(&self, other: &Matrix) -> Matrix {
        assert_eq!(self.cols, other.rows, "inner dimensions differ");
        let mut out = Matrix::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            let dst = &mut out.data[i * other.cols..(i + 1) * other.cols];
            for k in 0..self.cols {
                let a = self.data[i * self.cols + k];
                if a == 0.0 {
                    continue;
                }
                for (d, b) in dst.iter_mut().zip(other.row(k)) {
                    *d += a * b;
                }
            }
        }
        out
    }

    pub fn add(&self, other: &Matrix) -> Matrix {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        Matrix { rows: self.rows, cols: self.cols, data: self.data.iter().zip(&other.data).map(|(a, b)| a + b).collect() }
    }

    pub fn sub(&self, other: &Matrix) -> Matrix {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        Matrix { rows: self.rows, cols: self.cols, data: self.data.iter().zip(&other.data).map(|(a, b)| a - b).collect() }
    }

    pub fn add_diagonal(&self, eps: f64) -> Matrix {
        let mut m = self.clone();
        for i in 0..self.rows.min(self.cols) {
            m[(i, i)] += eps;
        }
        m
    }

    pub fn trace(&self) -> f64 {
        (0..self.rows.min(self.cols)).map(|i| self[(i, i)]).sum()
    }

    pub fn frobenius(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn max_asymmetry(&self) -> f64 {
        let mut worst = 0.0f64;
        for i in 0..self.rows {
            for j in i + 1..self.cols {
                worst = worst.max((self[(i, j)] - self[(j, i)]).abs());
            }
        }
        worst
    }

    /// (A + Aᵀ) / 2.
    pub fn symmetrized(&self) -> Matrix {
        let mut m = self.clone();
        for i in 0..self.rows {
            for j in i + 1..self.cols {
                let v = 0.5 * (self[(i, j)] + self[(j, i)]);
                m[(i, j)] = v;
                m[(j, i)] = v;
            }
        }
        m
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

impl std::ops::Index<(usize, usize)> for Matrix {
    type Output = f64;

    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.data[i * self.cols + j]
    }
}

impl std::ops::IndexMut<(usize, usize)> for Matrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        &mut self.data[i * self.cols + j]
    }
}

pub const JACOBI_MAX_SWEEPS: usize = 100;

/// Eigendecomposition of a symmetric matrix by cyclic Jacobi rotations.
/// Returns eigenvalues and the matrix whose columns are the eigenvectors.
pub fn symmetric_eigen(m: &Matrix) -> Result<(Vec<f64>, Matrix), MetricsError> {
    assert_eq!(m.rows, m.cols, "eigendecomposition needs a square matrix");
    let n = m.rows;
    let mut a = m.symmetrized();
    let mut v = Matrix::identity(n);
    let scale = a.frobenius();
    if scale == 0.0 || n == 1 {
        return Ok(((0..n).map(|i| a[(i, i)]).collect(), v));
    }
    let tol = 1e-15 * scale;
    let mut converged = false;
    for _ in 0..JACOBI_MAX_SWEEPS {
        let off: f64 = (0..n).flat_map(|p| (p + 1..n).map(move |q| (p, q))).map(|(p, q)| a[(p, q)].powi(2)).sum::<f64>().sqrt();
        if off <= tol {
            converged = true;
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = a[(p, q)];
                if apq == 0.0 {
                    continue;
                }
                let theta = (a[(q, q)] - a[(p, p)]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a[(k, p)];
                    let akq = a[(k, q)];
                    a[(k, p)] = c * akp - s * akq;
                    a[(k, q)] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[(p, k)];
                    let aqk = a[(q, k)];
                    a[(p, k)] = c * apk - s * aqk;
                    a[(q, k)] = s * apk + c * aqk;
                }
                a[(p, q)] = 0.0;
                a[(q, p)] = 0.0;
                for k in 0..n {
                    let vkp = v[(k, p)];
                    let vkq = v[(k, q)];
                    v[(k, p)] = c * vkp - s * vkq;
                    v[(k, q)] = s * vkp + c * vkq;
                }
            }
        }
    }
    if !converged {
        return Err(MetricsError::NoConvergence { sweeps: JACOBI_MAX_SWEEPS });
    }
    Ok(((0..n).map(|i| a[(i, i)]).collect(), v))
}

/// Symmetric tolerance accepted by [`sqrtm_psd`], relative to max(1, max |m_ij|).
pub const SYMMETRY_TOLERANCE: f64 = 1e-9;
/// Most negative eigenvalue clipped to zero, relative to max(1, λ_max).
pub const NEGATIVE_EIGEN_FLOOR: f64 = 1e-8;

/// Principal square root of a symmetric positive semi-definite matrix.
pub fn sqrtm_psd(m: &Matrix) -> Result<Matrix, MetricsError> {
    if m.rows != m.cols {
        return Err(MetricsError::Dimension(format!("sqrtm of a {}x{} matrix", m.rows, m.cols)));
    }
    if !m.is_finite() {
        return Err(MetricsError::NonFinite("matrix passed to sqrtm".into()));
    }
    let magnitude = m.data.iter().fold(1.0f64, |acc, v| acc.max(v.abs()));
    let asym = m.max_asymmetry();
    if asym > SYMMETRY_TOLERANCE * magnitude {
        return Err(MetricsError::Asymmetric(asym));
    }
    let (values, vectors) = symmetric_eigen(m)?;
    let top = values.iter().fold(1.0f64, |acc, v| acc.max(*v));
    let mut roots = Vec::with_capacity(values.len());
    for &l in &values {
        if l < -NEGATIVE_EIGEN_FLOOR * top {
            return Err(MetricsError::NotPsd(l));
        }
        roots.push(l.max(0.0).sqrt());
    }
    let n = m.rows;
    let mut s = Matrix::zeros(n, n);
    for i in 0..n {
        for j in i..n {
            let v: f64 = (0..n).map(|k| vectors[(i, k)] * roots[k] * vectors[(j, k)]).sum();
            s[(i, j)] = v;
            s[(j, i)] = v;
        }
    }
    Ok(s)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SplitMix64;

    fn random_spd(n: usize, rng: &mut SplitMix64) -> Matrix {
        let a = Matrix::from_rows(n, n, (0..n * n).map(|_| rng.normal()).collect());
        a.matmul(&a.transpose()).add_diagonal(1e-3)
    }

    #[test]
    fn diagonal_and_identity() {
        let s = sqrtm_psd(&Matrix::from_diag(&[4.0, 9.0])).unwrap();
        assert!((s[(0, 0)] - 2.0).abs() < 1e-15 && (s[(1, 1)] - 3.0).abs() < 1e-15);
        assert_eq!(s[(0, 1)], 0.0);
        assert_eq!(sqrtm_psd(&Matrix::identity(5)).unwrap(), Matrix::identity(5));
    }

    #[test]
    fn eigen_reconstructs() {
        let mut rng = SplitMix64::new(5);
        let m = random_spd(12, &mut rng);
        let (vals, vecs) = symmetric_eigen(&m).unwrap();
        let back = vecs.matmul(&Matrix::from_diag(&vals)).matmul(&vecs.transpose());
        assert!(back.sub(&m).frobenius() / m.frobenius() < 1e-12);
        let orth = vecs.transpose().matmul(&vecs).sub(&Matrix::identity(12)).frobenius();
        assert!(orth < 1e-12);
    }

    #[test]
    fn sqrt_squares_back() {
        let mut rng = SplitMix64::new(6);
        for n in [2, 8, 30] {
            let m = random_spd(n, &mut rng);
            let s = sqrtm_psd(&m).unwrap();
            let err = s.matmul(&s).sub(&m).frobenius() / m.frobenius().max(1.0);
            assert!(err <= 1e-6, "n={n} err={err}");
        }
    }

    #[test]
    fn rejects_asymmetric_and_indefinite() {
        let m = Matrix::from_rows(2, 2, vec![1.0, 0.5, 0.0, 1.0]);
        assert!(matches!(sqrtm_psd(&m), Err(MetricsError::Asymmetric(_))));
        let m = Matrix::from_diag(&[1.0, -0.5]);
        assert!(matches!(sqrtm_psd(&m), Err(MetricsError::NotPsd(_))));
        let m = Matrix::from_diag(&[1.0, -1e-12]);
        assert!(sqrtm_psd(&m).is_ok());
    }
}
