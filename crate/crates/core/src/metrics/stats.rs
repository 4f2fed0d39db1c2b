use serde::{Deserialize, Serialize};

use super::linalg::{sqrtm_psd, Matrix};
use super::MetricsError;

/// Gaussian summary of a feature population.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureStats {
    pub mu: Vec<f64>,
    /// Sample covariance (n - 1 denominator), symmetric.
    pub sigma: Matrix,
    pub n: usize,
}

impl FeatureStats {
    pub fn dim(&self) -> usize {
        self.mu.len()
    }
}

/// Sample mean and covariance of the rows of an n x d feature matrix.
pub fn fit_stats(features: &Matrix) -> Result<FeatureStats, MetricsError> {
    let (n, d) = (features.rows(), features.cols());
    if n < 2 {
        return Err(MetricsError::TooFewSamples(n));
    }
    if !features.is_finite() {
        return Err(MetricsError::NonFinite("feature matrix".into()));
    }
    let mut mu = vec![0.0; d];
    for i in 0..n {
        for (m, v) in mu.iter_mut().zip(features.row(i)) {
            *m += v;
        }
    }
    mu.iter_mut().for_each(|m| *m /= n as f64);
    let mut sigma = Matrix::zeros(d, d);
    let mut centered = vec![0.0; d];
    for i in 0..n {
        for ((c, v), m) in centered.iter_mut().zip(features.row(i)).zip(&mu) {
            *c = v - m;
        }
        for a in 0..d {
            for b in a..d {
                sigma[(a, b)] += centered[a] * centered[b];
            }
        }
    }
    for a in 0..d {
        for b in a..d {
            let v = sigma[(a, b)] / (n - 1) as f64;
            sigma[(a, b)] = v;
            sigma[(b, a)] = v;
        }
    }
    Ok(FeatureStats { mu, sigma: sigma.symmetrized(), n })
}

/// When the εI offset is added to both covariances.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regularization {
    /// Only after the unregularized square root fails.
    OnFailure,
    Always,
    Never,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrechetOptions {
    pub epsilon: f64,
    pub regularization: Regularization,
}

impl Default for FrechetOptions {
    fn default() -> Self {
        Self { epsilon: 1e-6, regularization: Regularization::OnFailure }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrechetOutcome {
    pub distance: f64,
    pub regularized: bool,
}

/// Results more negative than this (relative to 1 + traces) are reported
/// instead of silently clamped.
pub const NEGATIVE_FLOOR: f64 = 1e-6;

fn trace_sqrt_product(a: &Matrix, b: &Matrix) -> Result<f64, MetricsError> {
    let root_a = sqrtm_psd(a)?;
    let inner = root_a.matmul(b).matmul(&root_a).symmetrized();
    Ok(sqrtm_psd(&inner)?.trace())
}

fn frechet_raw(a: &FeatureStats, b: &FeatureStats, eps: f64) -> Result<f64, MetricsError> {
    let (sa, sb) = if eps > 0.0 { (a.sigma.add_diagonal(eps), b.sigma.add_diagonal(eps)) } else { (a.sigma.clone(), b.sigma.clone()) };
    let mean_term: f64 = a.mu.iter().zip(&b.mu).map(|(x, y)| (x - y).powi(2)).sum();
    let cross = trace_sqrt_product(&sa, &sb)?;
    let value = mean_term + sa.trace() + sb.trace() - 2.0 * cross;
    if !value.is_finite() {
        return Err(MetricsError::NonFinite("frechet distance".into()));
    }
    let scale = 1.0 + sa.trace() + sb.trace();
    if value < -NEGATIVE_FLOOR * scale {
        return Err(MetricsError::Negative(value));
    }
    Ok(value.max(0.0))
}

/// ‖μa − μb‖² + Tr(Σa) + Tr(Σb) − 2·Tr(√(Σa^½ Σb Σa^½)).
pub fn frechet_distance_with(a: &FeatureStats, b: &FeatureStats, opts: FrechetOptions) -> Result<FrechetOutcome, MetricsError> {
    if a.dim() != b.dim() {
        return Err(MetricsError::Dimension(format!("feature dimensions {} and {}", a.dim(), b.dim())));
    }
    match opts.regularization {
        Regularization::Always => Ok(FrechetOutcome { distance: frechet_raw(a, b, opts.epsilon)?, regularized: true }),
        Regularization::Never => Ok(FrechetOutcome { distance: frechet_raw(a, b, 0.0)?, regularized: false }),
        Regularization::OnFailure => match frechet_raw(a, b, 0.0) {
            Ok(distance) => Ok(FrechetOutcome { distance, regularized: false }),
            Err(e) => {
                log::warn!("metric=frechet retry=regularized epsilon={} cause=\"{e}\"", opts.epsilon);
                Ok(FrechetOutcome { distance: frechet_raw(a, b, opts.epsilon)?, regularized: true })
            }
        },
    }
}

pub fn frechet_distance(a: &FeatureStats, b: &FeatureStats) -> Result<f64, MetricsError> {
    frechet_distance_with(a, b, FrechetOptions::default()).map(|o| o.distance)
}
