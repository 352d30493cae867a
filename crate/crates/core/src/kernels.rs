//! Positive semi-definite kernels over encoded mixed points, Gram assembly
//! and Nyström test functions.
//!
//! Points reach the kernels already encoded by [`crate::measures::DomainSpec`]:
//! continuous coordinates first, then one-hot categorical blocks, then binary
//! bits as `0.0`/`1.0`. The RBF kernel carries one lengthscale per encoded
//! coordinate.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Result, SoberError};
use crate::points::Points;

/// Dense eigendecomposition is used up to this anchor count.
pub const EXACT_EIGEN_MAX: usize = 256;
/// Features with `λ_j <= EIGEN_CLAMP * λ_1` are dropped.
pub const EIGEN_CLAMP: f64 = 1e-10;
pub const DEFAULT_OVERSAMPLE: usize = 10;
const POWER_ITERATIONS: usize = 2;
const CHUNK: usize = 256;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelKind {
    RbfArd,
    Tanimoto,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KernelParams {
    pub variance: f64,
    /// Empty for Tanimoto.
    pub lengthscales: Vec<f64>,
    pub kind: KernelKind,
}

impl KernelParams {
    pub fn rbf(variance: f64, lengthscales: Vec<f64>) -> Result<Self> {
        let p = KernelParams {
            variance,
            lengthscales,
            kind: KernelKind::RbfArd,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn tanimoto(variance: f64) -> Result<Self> {
        let p = KernelParams {
            variance,
            lengthscales: Vec::new(),
            kind: KernelKind::Tanimoto,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.variance > 0.0 && self.variance.is_finite()) {
            return Err(SoberError::InvalidKernel(format!(
                "variance must be positive, got {}",
                self.variance
            )));
        }
        match self.kind {
            KernelKind::RbfArd => {
                if self.lengthscales.is_empty() {
                    return Err(SoberError::InvalidKernel("rbf needs lengthscales".into()));
                }
                if let Some(l) = self
                    .lengthscales
                    .iter()
                    .find(|l| !(**l > 0.0 && l.is_finite()))
                {
                    return Err(SoberError::InvalidKernel(format!(
                        "lengthscale must be positive, got {l}"
                    )));
                }
            }
            KernelKind::Tanimoto => {
                if !self.lengthscales.is_empty() {
                    return Err(SoberError::InvalidKernel(
                        "tanimoto takes no lengthscales".into(),
                    ));
                }
            }
        }
        Ok(())
    }

    /// Input dimension the parameters are tied to, if any.
    pub fn input_dim(&self) -> Option<usize> {
        match self.kind {
            KernelKind::RbfArd => Some(self.lengthscales.len()),
            KernelKind::Tanimoto => None,
        }
    }

    fn check_point(&self, x: &[f64]) -> Result<()> {
        match self.kind {
            KernelKind::RbfArd => {
                if x.len() != self.lengthscales.len() {
                    return Err(SoberError::DimensionMismatch {
                        expected: self.lengthscales.len(),
                        got: x.len(),
                    });
                }
            }
            KernelKind::Tanimoto => {
                if let Some(v) = x.iter().find(|v| **v != 0.0 && **v != 1.0) {
                    return Err(SoberError::NonBinaryInput(*v));
                }
            }
        }
        Ok(())
    }

    fn check_points(&self, x: &Points) -> Result<()> {
        if let Some(d) = self.input_dim() {
            if x.dim() != d && !x.is_empty() {
                return Err(SoberError::DimensionMismatch {
                    expected: d,
                    got: x.dim(),
                });
            }
        }
        if self.kind == KernelKind::Tanimoto {
            for r in x.rows() {
                self.check_point(r)?;
            }
        }
        Ok(())
    }

    #[inline]
    pub(crate) fn eval_unchecked(&self, x: &[f64], y: &[f64]) -> f64 {
        match self.kind {
            KernelKind::RbfArd => {
                let mut s = 0.0;
                for ((a, b), l) in x.iter().zip(y).zip(&self.lengthscales) {
                    let d = (a - b) / l;
                    s += d * d;
                }
                self.variance * (-0.5 * s).exp()
            }
            KernelKind::Tanimoto => {
                let (mut xy, mut xx, mut yy) = (0.0, 0.0, 0.0);
                for (a, b) in x.iter().zip(y) {
                    xy += a * b;
                    xx += a * a;
                    yy += b * b;
                }
                let denom = xx + yy - xy;
                if denom <= 0.0 {
                    // both all-zero
                    0.0
                } else {
                    self.variance * xy / denom
                }
            }
        }
    }

    fn gram_unchecked(&self, x: &Points, y: &Points) -> DMatrix<f64> {
        let (n, m) = (x.len(), y.len());
        match self.kind {
            KernelKind::RbfArd => {
                let inv: Vec<f64> = self.lengthscales.iter().map(|l| 1.0 / l).collect();
                let scale = |p: &Points| {
                    let mut out = p.as_flat().to_vec();
                    for row in out.chunks_exact_mut(inv.len()) {
                        for (v, s) in row.iter_mut().zip(&inv) {
                            *v *= s;
                        }
                    }
                    out
                };
                let (xs, ys) = (scale(x), scale(y));
                let d = inv.len();
                let mut g = DMatrix::zeros(n, m);
                for j in 0..m {
                    let yj = &ys[j * d..(j + 1) * d];
                    for i in 0..n {
                        let xi = &xs[i * d..(i + 1) * d];
                        let mut s = 0.0;
                        for k in 0..d {
                            let t = xi[k] - yj[k];
                            s += t * t;
                        }
                        g[(i, j)] = self.variance * (-0.5 * s).exp();
                    }
                }
                g
            }
            KernelKind::Tanimoto => {
                let norms = |p: &Points| p.rows().map(|r| r.iter().map(|v| v * v).sum()).collect::<Vec<f64>>();
                let (nx, ny) = (norms(x), norms(y));
                DMatrix::from_fn(n, m, |i, j| {
                    let xy: f64 = x.row(i).iter().zip(y.row(j)).map(|(a, b)| a * b).sum();
                    let denom = nx[i] + ny[j] - xy;
                    if denom <= 0.0 {
                        0.0
                    } else {
                        self.variance * xy / denom
                    }
                })
            }
        }
    }
}

/// Evaluates `k(x, y)` with full input validation.
pub fn eval_kernel(params: &KernelParams, x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(SoberError::DimensionMismatch {
            expected: x.len(),
            got: y.len(),
        });
    }
    params.validate()?;
    params.check_point(x)?;
    params.check_point(y)?;
    Ok(params.eval_unchecked(x, y))
}

/// Gram matrix `K(X, Y)` with input validation.
pub fn gram(params: &KernelParams, x: &Points, y: &Points) -> Result<DMatrix<f64>> {
    if x.is_empty() || y.is_empty() {
        return Err(SoberError::InvalidArgument("gram of empty point list".into()));
    }
    if x.dim() != y.dim() {
        return Err(SoberError::DimensionMismatch {
            expected: x.dim(),
            got: y.dim(),
        });
    }
    params.validate()?;
    params.check_points(x)?;
    params.check_points(y)?;
    Ok(params.gram_unchecked(x, y))
}

/// A covariance function usable for quadrature: prior kernels, GP posterior
/// covariances and their mixtures all implement it.
///
/// Inputs are assumed validated; implementations may panic on dimension
/// mismatch.
pub trait Covariance {
    fn gram(&self, x: &Points, y: &Points) -> DMatrix<f64>;

    fn diag(&self, x: &Points) -> DVector<f64> {
        DVector::from_iterator(
            x.len(),
            (0..x.len()).map(|i| {
                let p = x.select(&[i]);
                self.gram(&p, &p)[(0, 0)]
            }),
        )
    }

    /// `coeffs * K(anchors, x)`.
    fn project(&self, coeffs: &DMatrix<f64>, anchors: &Points, x: &Points) -> DMatrix<f64> {
        let mut out = DMatrix::zeros(coeffs.nrows(), x.len());
        for start in (0..x.len()).step_by(CHUNK) {
            let end = (start + CHUNK).min(x.len());
            let idx: Vec<usize> = (start..end).collect();
            let block = coeffs * self.gram(anchors, &x.select(&idx));
            out.columns_mut(start, end - start).copy_from(&block);
        }
        out
    }

    /// `K(x, support) * weights`.
    fn mean_embedding(&self, x: &Points, support: &Points, weights: &[f64]) -> DVector<f64> {
        let w = DVector::from_column_slice(weights);
        let mut out = DVector::zeros(x.len());
        for start in (0..x.len()).step_by(CHUNK) {
            let end = (start + CHUNK).min(x.len());
            let idx: Vec<usize> = (start..end).collect();
            let block = self.gram(&x.select(&idx), support) * &w;
            out.rows_mut(start, end - start).copy_from(&block);
        }
        out
    }

    /// `wᵀ K(support, support) w`.
    fn quadratic_form(&self, support: &Points, weights: &[f64]) -> f64 {
        let emb = self.mean_embedding(support, support, weights);
        emb.iter().zip(weights).map(|(e, w)| e * w).sum()
    }
}

impl Covariance for KernelParams {
    fn gram(&self, x: &Points, y: &Points) -> DMatrix<f64> {
        self.gram_unchecked(x, y)
    }

    fn diag(&self, x: &Points) -> DVector<f64> {
        match self.kind {
            KernelKind::RbfArd => DVector::from_element(x.len(), self.variance),
            KernelKind::Tanimoto => DVector::from_iterator(
                x.len(),
                x.rows().map(|r| self.eval_unchecked(r, r)),
            ),
        }
    }
}

impl<C: Covariance + ?Sized> Covariance for &C {
    fn gram(&self, x: &Points, y: &Points) -> DMatrix<f64> {
        (**self).gram(x, y)
    }
    fn diag(&self, x: &Points) -> DVector<f64> {
        (**self).diag(x)
    }
    fn project(&self, coeffs: &DMatrix<f64>, anchors: &Points, x: &Points) -> DMatrix<f64> {
        (**self).project(coeffs, anchors, x)
    }
    fn mean_embedding(&self, x: &Points, support: &Points, weights: &[f64]) -> DVector<f64> {
        (**self).mean_embedding(x, support, weights)
    }
    fn quadratic_form(&self, support: &Points, weights: &[f64]) -> f64 {
        (**self).quadratic_form(support, weights)
    }
}

/// Nyström eigenpairs of `K(X_nys, X_nys)`, used as test functions
/// `φ_j(x) = u_jᵀ K(X_nys, x)`.
#[derive(Clone, Debug)]
pub struct NystromFeatures {
    pub anchors: Points,
    /// Descending, strictly above the clamp threshold.
    pub eigenvalues: Vec<f64>,
    /// `M × r`, column `j` pairs with `eigenvalues[j]`.
    pub eigenvectors: DMatrix<f64>,
    /// Set when more features were requested than anchors exist.
    pub truncated: bool,
}

impl NystromFeatures {
    pub fn len(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn is_empty(&self) -> bool {
        self.eigenvalues.is_empty()
    }

    /// Test-function matrix, features × points.
    pub fn eval<K: Covariance + ?Sized>(&self, kernel: &K, x: &Points) -> DMatrix<f64> {
        if self.is_empty() {
            return DMatrix::zeros(0, x.len());
        }
        let coeffs = self.eigenvectors.transpose();
        kernel.project(&coeffs, &self.anchors, x)
    }

    /// `Σ_j λ_j⁻¹ φ_j(x) φ_j(y)` over the points in `x`.
    pub fn approx_gram<K: Covariance + ?Sized>(&self, kernel: &K, x: &Points) -> DMatrix<f64> {
        let phi = self.eval(kernel, x);
        let mut scaled = phi.clone();
        for (j, lam) in self.eigenvalues.iter().enumerate() {
            scaled.row_mut(j).scale_mut(1.0 / lam);
        }
        phi.transpose() * scaled
    }
}

/// Builds Nyström test functions from `n_features` leading eigenpairs.
///
/// Uses a dense eigendecomposition up to [`EXACT_EIGEN_MAX`] anchors and a
/// randomized range finder with `oversample` extra columns and two power
/// iterations beyond that.
pub fn fit_nystrom<K: Covariance + ?Sized>(
    kernel: &K,
    anchors: &Points,
    n_features: usize,
    oversample: usize,
    seed: u64,
) -> Result<NystromFeatures> {
    let m = anchors.len();
    if m == 0 {
        return Err(SoberError::InvalidArgument("nyström needs at least one anchor".into()));
    }
    if n_features == 0 {
        return Err(SoberError::InvalidArgument("n_features must be >= 1".into()));
    }
    let truncated = n_features > m;
    let k = n_features.min(m);
    let mut g = kernel.gram(anchors, anchors);
    symmetrize(&mut g);

    let (vals, vecs) = if m <= EXACT_EIGEN_MAX || k + oversample >= m {
        let eig = SymmetricEigen::new(g);
        (eig.eigenvalues, eig.eigenvectors)
    } else {
        randomized_eigen(&g, k + oversample, seed)
    };

    let mut order: Vec<usize> = (0..vals.len()).collect();
    order.sort_by(|&a, &b| vals[b].total_cmp(&vals[a]).then(a.cmp(&b)));
    let top = vals[order[0]].max(0.0);
    let keep: Vec<usize> = order
        .into_iter()
        .take(k)
        .filter(|&j| vals[j] > EIGEN_CLAMP * top && vals[j] > 0.0)
        .collect();

    let mut eigenvectors = DMatrix::zeros(m, keep.len());
    for (c, &j) in keep.iter().enumerate() {
        let mut v = vecs.column(j).clone_owned();
        // sign convention: largest-magnitude entry positive
        let (imax, _) = v.iter().enumerate().fold((0, 0.0), |acc, (i, x)| {
            if x.abs() > acc.1 {
                (i, x.abs())
            } else {
                acc
            }
        });
        if v[imax] < 0.0 {
            v.neg_mut();
        }
        eigenvectors.set_column(c, &v);
    }
    Ok(NystromFeatures {
        anchors: anchors.clone(),
        eigenvalues: keep.iter().map(|&j| vals[j]).collect(),
        eigenvectors,
        truncated,
    })
}

/// Test-function matrix `U^T K(X_nys, X)`.
pub fn eval_test_functions<K: Covariance + ?Sized>(
    nf: &NystromFeatures,
    kernel: &K,
    x: &Points,
) -> Result<DMatrix<f64>> {
    if !x.is_empty() && x.dim() != nf.anchors.dim() {
        return Err(SoberError::DimensionMismatch {
            expected: nf.anchors.dim(),
            got: x.dim(),
        });
    }
    Ok(nf.eval(kernel, x))
}

fn randomized_eigen(g: &DMatrix<f64>, sketch: usize, seed: u64) -> (DVector<f64>, DMatrix<f64>) {
    let m = g.nrows();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let omega = DMatrix::from_fn(m, sketch, |_, _| StandardNormal.sample(&mut rng));
    let mut q = (g * omega).qr().q();
    for _ in 0..POWER_ITERATIONS {
        q = (g * q).qr().q();
    }
    let mut b = q.transpose() * g * &q;
    symmetrize(&mut b);
    let eig = SymmetricEigen::new(b);
    (eig.eigenvalues, q * eig.eigenvectors)
}

pub(crate) fn symmetrize(m: &mut DMatrix<f64>) {
    let n = m.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            let v = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
}
