use nalgebra::{DMatrix, DVector, SymmetricEigen};

use super::{EvalError, Result};

/// Eigenvalues below this are treated as zero in matrix square roots.
pub const EIGEN_FLOOR: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSet {
    rows: Vec<Vec<f64>>,
    extractor_id: String,
}

impl FeatureSet {
    pub fn new(rows: Vec<Vec<f64>>, extractor_id: impl Into<String>) -> Result<Self> {
        if let Some(first) = rows.first() {
            if rows.iter().any(|r| r.len() != first.len()) {
                return Err(EvalError::DimMismatch("feature rows differ in length".into()));
            }
        }
        if rows.iter().flatten().any(|v| !v.is_finite()) {
            return Err(EvalError::NonFinite("feature value".into()));
        }
        Ok(Self {
            rows,
            extractor_id: extractor_id.into(),
        })
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.rows.first().map_or(0, Vec::len)
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.rows
    }

    pub fn extractor_id(&self) -> &str {
        &self.extractor_id
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GaussianStats {
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
}

impl GaussianStats {
    pub fn new(mean: DVector<f64>, cov: DMatrix<f64>) -> Result<Self> {
        let n = mean.len();
        if cov.shape() != (n, n) {
            return Err(EvalError::DimMismatch(format!("mean {n}, covariance {:?}", cov.shape())));
        }
        Ok(Self { mean, cov })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }
}

/// Sample mean and unbiased covariance.
pub fn gaussian_stats(fs: &FeatureSet) -> Result<GaussianStats> {
    let n = fs.len();
    if n < 2 {
        return Err(EvalError::TooFewSamples { needed: 2, got: n });
    }
    let d = fs.dim();
    let x = DMatrix::from_fn(n, d, |i, j| fs.rows[i][j]);
    let mean = x.row_mean().transpose();
    let centered = DMatrix::from_fn(n, d, |i, j| x[(i, j)] - mean[j]);
    let cov = centered.transpose() * &centered / (n - 1) as f64;
    let cov = (&cov + cov.transpose()) * 0.5;
    GaussianStats::new(mean, cov)
}

/// Square root of a symmetric positive semi-definite matrix, clamping
/// eigenvalues below [`EIGEN_FLOOR`] to zero.
pub fn sqrtm_psd(m: &DMatrix<f64>) -> DMatrix<f64> {
    let sym = (m + m.transpose()) * 0.5;
    let eig = SymmetricEigen::new(sym);
    let roots = eig.eigenvalues.map(|l| if l < EIGEN_FLOOR { 0.0 } else { l.sqrt() });
    &eig.eigenvectors * DMatrix::from_diagonal(&roots) * eig.eigenvectors.transpose()
}

/// `|mu_a - mu_b|^2 + Tr(S_a + S_b - 2 (S_a S_b)^(1/2))`.
///
/// The trace of `(S_a S_b)^(1/2)` is taken as the sum of square roots of the
/// eigenvalues of the symmetric `S_a^(1/2) S_b S_a^(1/2)`, which shares its
/// spectrum with `S_a S_b`.
pub fn frechet_distance(a: &GaussianStats, b: &GaussianStats) -> Result<f64> {
    if a.dim() != b.dim() {
        return Err(EvalError::DimMismatch(format!("{} vs {}", a.dim(), b.dim())));
    }
    let diff = &a.mean - &b.mean;
    let root_a = sqrtm_psd(&a.cov);
    let inner = &root_a * &b.cov * &root_a;
    let inner = (&inner + inner.transpose()) * 0.5;
    let cross: f64 = SymmetricEigen::new(inner)
        .eigenvalues
        .iter()
        .map(|&l| if l < EIGEN_FLOOR { 0.0 } else { l.sqrt() })
        .sum();
    let d = diff.dot(&diff) + a.cov.trace() + b.cov.trace() - 2.0 * cross;
    if !d.is_finite() {
        return Err(EvalError::NonFinite("Fréchet distance".into()));
    }
    Ok(d.max(0.0))
}
