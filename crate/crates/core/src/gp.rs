//! Exact GP regression with a zero prior mean, type-II MLE and two warped
//! variants.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Result, SoberError};
use crate::kernels::{symmetrize, Covariance, KernelKind, KernelParams};
use crate::optim::{minimize, LbfgsOptions};
use crate::points::Points;

pub const LOG_LENGTHSCALE_BOUNDS: (f64, f64) = (-5.0, 5.0);
pub const LOG_VARIANCE_BOUNDS: (f64, f64) = (-5.0, 5.0);
pub const LOG_NOISE_BOUNDS: (f64, f64) = (-12.0, 2.0);
const JITTER_START: f64 = 1e-10;
const JITTER_MAX: f64 = 1e-4;
const CHUNK: usize = 512;

#[derive(Clone, Debug, Default)]
pub struct Dataset {
    pub x: Points,
    pub y: Vec<f64>,
}

impl Dataset {
    pub fn new(x: Points, y: Vec<f64>) -> Result<Self> {
        if x.len() != y.len() {
            return Err(SoberError::DimensionMismatch {
                expected: x.len(),
                got: y.len(),
            });
        }
        if let Some(v) = y.iter().find(|v| !v.is_finite()) {
            return Err(SoberError::InvalidArgument(format!("non-finite observation {v}")));
        }
        Ok(Dataset { x, y })
    }

    pub fn empty(dim: usize) -> Self {
        Dataset {
            x: Points::new(dim),
            y: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn with_y(&self, y: Vec<f64>) -> Result<Dataset> {
        Dataset::new(self.x.clone(), y)
    }
}

#[derive(Clone, Debug)]
pub struct GpModel {
    pub dataset: Dataset,
    pub kernel: KernelParams,
    pub noise: f64,
    /// Extra diagonal added to reach a successful factorisation.
    pub jitter: f64,
    /// Set by [`fit_mle`] when every restart failed.
    pub mle_failed: bool,
    chol: Option<Cholesky<f64, Dyn>>,
    alpha: DVector<f64>,
}

fn factor(mut k: DMatrix<f64>, scale: f64) -> Result<(Cholesky<f64, Dyn>, f64)> {
    if let Some(c) = Cholesky::new(k.clone()) {
        return Ok((c, 0.0));
    }
    let n = k.nrows();
    let mut added = 0.0;
    let mut jitter = JITTER_START * scale;
    while jitter <= JITTER_MAX * scale * (1.0 + 1e-12) {
        for i in 0..n {
            k[(i, i)] += jitter - added;
        }
        added = jitter;
        if let Some(c) = Cholesky::new(k.clone()) {
            return Ok((c, jitter));
        }
        jitter *= 10.0;
    }
    Err(SoberError::Cholesky {
        jitter: JITTER_MAX * scale,
    })
}

impl GpModel {
    pub fn new(dataset: Dataset, kernel: KernelParams, noise: f64) -> Result<Self> {
        kernel.validate()?;
        if !(noise >= 0.0 && noise.is_finite()) {
            return Err(SoberError::InvalidArgument(format!("noise must be >= 0, got {noise}")));
        }
        if !dataset.is_empty() {
            if let Some(d) = kernel.input_dim() {
                if d != dataset.x.dim() {
                    return Err(SoberError::DimensionMismatch {
                        expected: d,
                        got: dataset.x.dim(),
                    });
                }
            }
        }
        if dataset.is_empty() {
            return Ok(GpModel {
                dataset,
                kernel,
                noise,
                jitter: 0.0,
                mle_failed: false,
                chol: None,
                alpha: DVector::zeros(0),
            });
        }
        let mut k = kernel.gram(&dataset.x, &dataset.x);
        symmetrize(&mut k);
        for i in 0..k.nrows() {
            k[(i, i)] += noise;
        }
        let (chol, jitter) = factor(k, kernel.variance)?;
        let alpha = chol.solve(&DVector::from_column_slice(&dataset.y));
        Ok(GpModel {
            dataset,
            kernel,
            noise,
            jitter,
            mle_failed: false,
            chol: Some(chol),
            alpha,
        })
    }

    pub fn prior(kernel: KernelParams, noise: f64, dim: usize) -> Result<Self> {
        GpModel::new(Dataset::empty(dim), kernel, noise)
    }

    pub fn n_obs(&self) -> usize {
        self.dataset.len()
    }

    /// `(K + σ²I)⁻¹ y`.
    pub fn alpha(&self) -> &DVector<f64> {
        &self.alpha
    }

    /// `(K + σ²I)⁻¹ b`.
    pub fn solve(&self, b: &DMatrix<f64>) -> DMatrix<f64> {
        match &self.chol {
            Some(c) => c.solve(b),
            None => DMatrix::zeros(0, b.ncols()),
        }
    }

    fn check_query(&self, x: &Points) -> Result<()> {
        let d = self.kernel.input_dim().unwrap_or(self.dataset.x.dim());
        if !x.is_empty() && d != 0 && x.dim() != d {
            return Err(SoberError::DimensionMismatch {
                expected: d,
                got: x.dim(),
            });
        }
        if self.kernel.kind == KernelKind::Tanimoto {
            if let Some(v) = x.as_flat().iter().find(|v| **v != 0.0 && **v != 1.0) {
                return Err(SoberError::NonBinaryInput(*v));
            }
        }
        Ok(())
    }

    pub fn mean(&self, x: &Points) -> Result<DVector<f64>> {
        self.check_query(x)?;
        Ok(self.mean_unchecked(x))
    }

    pub(crate) fn mean_unchecked(&self, x: &Points) -> DVector<f64> {
        if self.chol.is_none() {
            return DVector::zeros(x.len());
        }
        let mut out = DVector::zeros(x.len());
        for start in (0..x.len()).step_by(CHUNK) {
            let end = (start + CHUNK).min(x.len());
            let idx: Vec<usize> = (start..end).collect();
            let k = self.kernel.gram(&x.select(&idx), &self.dataset.x);
            out.rows_mut(start, end - start).copy_from(&(k * &self.alpha));
        }
        out
    }

    /// Posterior mean and full covariance, symmetrized with a clamped diagonal.
    pub fn predict(&self, x: &Points) -> Result<(DVector<f64>, DMatrix<f64>)> {
        self.check_query(x)?;
        let mut cov = self.kernel.gram(x, x);
        let mean = match &self.chol {
            None => DVector::zeros(x.len()),
            Some(c) => {
                let kxo = self.kernel.gram(x, &self.dataset.x);
                let v = c.l().solve_lower_triangular(&kxo.transpose()).expect("triangular solve");
                cov -= v.transpose() * &v;
                &kxo * &self.alpha
            }
        };
        symmetrize(&mut cov);
        for i in 0..cov.nrows() {
            cov[(i, i)] = cov[(i, i)].max(0.0);
        }
        Ok((mean, cov))
    }

    /// Posterior mean and marginal variances.
    pub fn predict_diag(&self, x: &Points) -> Result<(DVector<f64>, DVector<f64>)> {
        self.check_query(x)?;
        Ok(self.predict_diag_unchecked(x))
    }

    pub(crate) fn predict_diag_unchecked(&self, x: &Points) -> (DVector<f64>, DVector<f64>) {
        let prior = self.kernel.diag(x);
        let Some(c) = &self.chol else {
            return (DVector::zeros(x.len()), prior);
        };
        let mut mean = DVector::zeros(x.len());
        let mut var = prior;
        for start in (0..x.len()).step_by(CHUNK) {
            let end = (start + CHUNK).min(x.len());
            let idx: Vec<usize> = (start..end).collect();
            let kxo = self.kernel.gram(&x.select(&idx), &self.dataset.x);
            let v = c.l().solve_lower_triangular(&kxo.transpose()).expect("triangular solve");
            let m = &kxo * &self.alpha;
            for (j, i) in (start..end).enumerate() {
                mean[i] = m[j];
                var[i] = (var[i] - v.column(j).norm_squared()).max(0.0);
            }
        }
        (mean, var)
    }

    pub fn log_marginal_likelihood(&self) -> f64 {
        let Some(c) = &self.chol else {
            return 0.0;
        };
        let n = self.n_obs() as f64;
        let y = DVector::from_column_slice(&self.dataset.y);
        let logdet: f64 = c.l_dirty().diagonal().iter().map(|d| d.ln()).sum();
        -0.5 * y.dot(&self.alpha) - logdet - 0.5 * n * (2.0 * std::f64::consts::PI).ln()
    }

    /// Log-parameters `[log ℓ.., log v, log σ²]` (Tanimoto: `[log v, log σ²]`).
    pub fn log_params(&self) -> Vec<f64> {
        to_log_params(&self.kernel, self.noise)
    }

    /// Gradient of the log marginal likelihood with respect to
    /// [`GpModel::log_params`].
    pub fn lml_gradient(&self) -> Vec<f64> {
        let np = self.log_params().len();
        let Some(c) = &self.chol else {
            return vec![0.0; np];
        };
        let n = self.n_obs();
        let kf = self.kernel.gram(&self.dataset.x, &self.dataset.x);
        let linv = lower_inverse(c.l_dirty());
        let mut q = &self.alpha * self.alpha.transpose() - linv.transpose() * &linv;
        symmetrize(&mut q);
        let mut grad = Vec::with_capacity(np);
        if self.kernel.kind == KernelKind::RbfArd {
            let pk = q.component_mul(&kf);
            let x = &self.dataset.x;
            for (d, l) in self.kernel.lengthscales.iter().enumerate() {
                let mut s = 0.0;
                for j in 0..n {
                    let xj = x.row(j)[d];
                    for i in 0..n {
                        let t = x.row(i)[d] - xj;
                        s += pk[(i, j)] * t * t;
                    }
                }
                grad.push(0.5 * s / (l * l));
            }
        }
        grad.push(0.5 * q.component_mul(&kf).sum());
        grad.push(0.5 * self.noise * q.trace());
        grad
    }

    /// Latent posterior covariance `C(·,·)` as a kernel.
    pub fn posterior_covariance(&self) -> PosteriorCovariance<'_> {
        PosteriorCovariance { gp: self }
    }

    /// Refits the same hyperparameters on a new dataset.
    pub fn refit(&self, dataset: Dataset) -> Result<GpModel> {
        GpModel::new(dataset, self.kernel.clone(), self.noise)
    }
}

/// `L⁻¹` for lower-triangular `L`, reading only the lower triangle.
fn lower_inverse(l: &DMatrix<f64>) -> DMatrix<f64> {
    let n = l.nrows();
    let mut inv = DMatrix::zeros(n, n);
    for j in 0..n {
        let mut col = inv.column_mut(j);
        col[j] = 1.0;
        for k in j..n {
            let xk = col[k] / l[(k, k)];
            col[k] = xk;
            if xk != 0.0 {
                let lk = l.column(k);
                for i in k + 1..n {
                    col[i] -= lk[i] * xk;
                }
            }
        }
    }
    inv
}

pub fn to_log_params(kernel: &KernelParams, noise: f64) -> Vec<f64> {
    let mut p: Vec<f64> = kernel.lengthscales.iter().map(|l| l.ln()).collect();
    p.push(kernel.variance.ln());
    p.push(noise.max(1e-300).ln());
    p
}

pub fn from_log_params(kind: KernelKind, p: &[f64]) -> Result<(KernelParams, f64)> {
    let k = p.len();
    if k < 2 {
        return Err(SoberError::InvalidArgument("too few log parameters".into()));
    }
    let kernel = match kind {
        KernelKind::RbfArd => KernelParams::rbf(p[k - 2].exp(), p[..k - 2].iter().map(|v| v.exp()).collect())?,
        KernelKind::Tanimoto => {
            if k != 2 {
                return Err(SoberError::InvalidArgument("tanimoto takes two log parameters".into()));
            }
            KernelParams::tanimoto(p[0].exp())?
        }
    };
    Ok((kernel, p[k - 1].exp()))
}

/// Box bounds on log-parameters for a kernel of the given shape.
pub fn log_param_bounds(kind: KernelKind, dim: usize) -> (Vec<f64>, Vec<f64>) {
    let n_ls = if kind == KernelKind::RbfArd { dim } else { 0 };
    let mut lo = vec![LOG_LENGTHSCALE_BOUNDS.0; n_ls];
    let mut hi = vec![LOG_LENGTHSCALE_BOUNDS.1; n_ls];
    lo.extend([LOG_VARIANCE_BOUNDS.0, LOG_NOISE_BOUNDS.0]);
    hi.extend([LOG_VARIANCE_BOUNDS.1, LOG_NOISE_BOUNDS.1]);
    (lo, hi)
}

/// `C(x, x') = k(x, x') − k(x, O)(K + σ²I)⁻¹k(O, x')`.
pub struct PosteriorCovariance<'a> {
    gp: &'a GpModel,
}

impl PosteriorCovariance<'_> {
    fn obs(&self) -> &Points {
        &self.gp.dataset.x
    }
}

impl Covariance for PosteriorCovariance<'_> {
    fn gram(&self, x: &Points, y: &Points) -> DMatrix<f64> {
        let k = &self.gp.kernel;
        let mut g = k.gram(x, y);
        if let Some(c) = &self.gp.chol {
            let kxo = k.gram(x, self.obs());
            let koy = k.gram(self.obs(), y);
            g -= kxo * c.solve(&koy);
        }
        g
    }

    fn diag(&self, x: &Points) -> DVector<f64> {
        self.gp.predict_diag_unchecked(x).1
    }

    fn project(&self, coeffs: &DMatrix<f64>, anchors: &Points, x: &Points) -> DMatrix<f64> {
        let k = &self.gp.kernel;
        let Some(c) = &self.gp.chol else {
            return k.project(coeffs, anchors, x);
        };
        // B = coeffs K(A,O) K⁻¹
        let b = c.solve(&(coeffs * k.gram(anchors, self.obs())).transpose()).transpose();
        let mut out = DMatrix::zeros(coeffs.nrows(), x.len());
        for start in (0..x.len()).step_by(CHUNK) {
            let end = (start + CHUNK).min(x.len());
            let idx: Vec<usize> = (start..end).collect();
            let xc = x.select(&idx);
            let block = coeffs * k.gram(anchors, &xc) - &b * k.gram(self.obs(), &xc);
            out.columns_mut(start, end - start).copy_from(&block);
        }
        out
    }

    fn mean_embedding(&self, x: &Points, support: &Points, weights: &[f64]) -> DVector<f64> {
        let k = &self.gp.kernel;
        let base = k.mean_embedding(x, support, weights);
        let Some(c) = &self.gp.chol else {
            return base;
        };
        let kos_w = k.mean_embedding(self.obs(), support, weights);
        let v = c.solve(&kos_w);
        base - k.mean_embedding(x, self.obs(), v.as_slice())
    }

    fn quadratic_form(&self, support: &Points, weights: &[f64]) -> f64 {
        let k = &self.gp.kernel;
        let base = k.quadratic_form(support, weights);
        let Some(c) = &self.gp.chol else {
            return base;
        };
        let kos_w = k.mean_embedding(self.obs(), support, weights);
        base - kos_w.dot(&c.solve(&kos_w))
    }
}

#[derive(Clone, Debug)]
pub struct MleOptions {
    /// Random restarts in addition to the supplied initial point.
    pub restarts: usize,
    pub seed: u64,
    pub max_iter: usize,
}

impl Default for MleOptions {
    fn default() -> Self {
        MleOptions {
            restarts: 8,
            seed: 0,
            max_iter: 100,
        }
    }
}

/// Type-II MLE over log-hyperparameters by multi-start box-constrained
/// L-BFGS. The first start is `init`; on total failure the model built from
/// `init` is returned with `mle_failed` set.
pub fn fit_mle(dataset: &Dataset, init: &KernelParams, init_noise: f64, opts: &MleOptions) -> Result<GpModel> {
    if dataset.len() < 2 {
        return Err(SoberError::InvalidArgument("MLE needs at least two observations".into()));
    }
    let kind = init.kind;
    let dim = dataset.x.dim();
    let (lo, hi) = log_param_bounds(kind, dim);
    let mut starts = vec![to_log_params(init, init_noise.max(LOG_NOISE_BOUNDS.0.exp()))];

    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let ranges: Vec<f64> = (0..dim)
        .map(|d| {
            let (mn, mx) = dataset
                .x
                .rows()
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), r| (a.min(r[d]), b.max(r[d])));
            let r = mx - mn;
            if r > 1e-9 { r } else { 1.0 }
        })
        .collect();
    let ymean = dataset.y.iter().sum::<f64>() / dataset.len() as f64;
    let yvar = (dataset.y.iter().map(|v| (v - ymean).powi(2)).sum::<f64>() / dataset.len() as f64).max(1e-6);
    for _ in 0..opts.restarts {
        let mut p = Vec::with_capacity(lo.len());
        if kind == KernelKind::RbfArd {
            for r in &ranges {
                p.push(rng.random_range((0.05 * r).ln()..(1.5 * r).ln()));
            }
        }
        p.push(rng.random_range((0.3 * yvar).ln()..(3.0 * yvar).ln()));
        p.push(rng.random_range(-11.0..-3.0));
        for (v, (l, h)) in p.iter_mut().zip(lo.iter().zip(&hi)) {
            *v = v.clamp(*l, *h);
        }
        starts.push(p);
    }

    let lbfgs = LbfgsOptions {
        max_iter: opts.max_iter,
        ..Default::default()
    };
    let objective = |p: &[f64]| -> Option<(f64, Vec<f64>)> {
        let (kernel, noise) = from_log_params(kind, p).ok()?;
        let gp = GpModel::new(dataset.clone(), kernel, noise).ok()?;
        let f = -gp.log_marginal_likelihood();
        let g = gp.lml_gradient().into_iter().map(|v| -v).collect();
        Some((f, g))
    };
    let mut best: Option<(f64, Vec<f64>)> = None;
    for s in &starts {
        if let Some(r) = minimize(objective, s, &lo, &hi, &lbfgs) {
            if r.f.is_finite() && best.as_ref().is_none_or(|(bf, _)| r.f < *bf) {
                best = Some((r.f, r.x));
            }
        }
    }
    match best {
        Some((_, p)) => {
            let (kernel, noise) = from_log_params(kind, &p)?;
            GpModel::new(dataset.clone(), kernel, noise)
        }
        None => {
            log::warn!("all MLE restarts failed; keeping initial hyperparameters");
            let mut gp = GpModel::new(dataset.clone(), init.clone(), init_noise)?;
            gp.mle_failed = true;
            Ok(gp)
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MmltVariant {
    /// `m_g(x) m_g(x') [C_g(x,x) − 1]`, evaluated literally.
    #[default]
    Printed,
    /// `m(x) m(x') [exp C_g(x,x') − 1]`, the log-normal moments.
    Standard,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum WarpKind {
    Parabolic { eta: f64 },
    Mmlt(MmltVariant),
}

/// GP `g` on warped observations with moment-matched predictions in the
/// original space.
#[derive(Clone, Debug)]
pub struct WarpedGp {
    pub base: GpModel,
    pub kind: WarpKind,
}

impl WarpedGp {
    /// Fits `g` on `√(2(η − y))`.
    pub fn parabolic(dataset: &Dataset, kernel: KernelParams, noise: f64, eta: f64) -> Result<Self> {
        let ymax = dataset.y.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        if eta < ymax {
            return Err(SoberError::InvalidArgument(format!(
                "parabolic warp needs eta >= max(y) = {ymax}, got {eta}"
            )));
        }
        let yg = dataset.y.iter().map(|y| (2.0 * (eta - y)).sqrt()).collect();
        Ok(WarpedGp {
            base: GpModel::new(dataset.with_y(yg)?, kernel, noise)?,
            kind: WarpKind::Parabolic { eta },
        })
    }

    /// Fits `g` on `log(y + 1)`.
    pub fn mmlt(dataset: &Dataset, kernel: KernelParams, noise: f64, variant: MmltVariant) -> Result<Self> {
        if let Some(y) = dataset.y.iter().find(|y| **y <= -1.0) {
            return Err(SoberError::InvalidArgument(format!("MMLT needs y > -1, got {y}")));
        }
        let yg = dataset.y.iter().map(|y| y.ln_1p()).collect();
        Ok(WarpedGp {
            base: GpModel::new(dataset.with_y(yg)?, kernel, noise)?,
            kind: WarpKind::Mmlt(variant),
        })
    }

    pub fn predict(&self, x: &Points) -> Result<(DVector<f64>, DMatrix<f64>)> {
        let (mg, cg) = self.base.predict(x)?;
        Ok(match self.kind {
            WarpKind::Parabolic { eta } => parabolic_moments(&mg, &cg, eta),
            WarpKind::Mmlt(v) => mmlt_moments(&mg, &cg, v),
        })
    }
}

/// `m = η − ½(m_g² + C_g(x,x))`, `C = ½C_g² + m_g C_g m_g'`.
pub fn parabolic_moments(mg: &DVector<f64>, cg: &DMatrix<f64>, eta: f64) -> (DVector<f64>, DMatrix<f64>) {
    let n = mg.len();
    let mean = DVector::from_fn(n, |i, _| eta - 0.5 * (mg[i] * mg[i] + cg[(i, i)]));
    let mut cov = DMatrix::from_fn(n, n, |i, j| 0.5 * cg[(i, j)] * cg[(i, j)] + mg[i] * cg[(i, j)] * mg[j]);
    for i in 0..n {
        cov[(i, i)] = cov[(i, i)].max(0.0);
    }
    (mean, cov)
}

pub fn mmlt_moments(mg: &DVector<f64>, cg: &DMatrix<f64>, variant: MmltVariant) -> (DVector<f64>, DMatrix<f64>) {
    let n = mg.len();
    let mean = DVector::from_fn(n, |i, _| (mg[i] + 0.5 * cg[(i, i)]).exp());
    let cov = match variant {
        MmltVariant::Printed => DMatrix::from_fn(n, n, |i, j| mg[i] * mg[j] * (cg[(i, i)] - 1.0)),
        MmltVariant::Standard => {
            let mut c = DMatrix::from_fn(n, n, |i, j| mean[i] * mean[j] * cg[(i, j)].exp_m1());
            for i in 0..n {
                c[(i, i)] = c[(i, i)].max(0.0);
            }
            c
        }
    };
    (mean, cov)
}

pub fn predict_parabolic(w: &WarpedGp, x: &Points) -> Result<(DVector<f64>, DMatrix<f64>)> {
    match w.kind {
        WarpKind::Parabolic { .. } => w.predict(x),
        _ => Err(SoberError::InvalidArgument("not a parabolic warp".into())),
    }
}

pub fn predict_mmlt(w: &WarpedGp, x: &Points) -> Result<(DVector<f64>, DMatrix<f64>)> {
    match w.kind {
        WarpKind::Mmlt(_) => w.predict(x),
        _ => Err(SoberError::InvalidArgument("not an MMLT warp".into())),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand_distr::{Distribution, StandardNormal};

    fn random_points(n: usize, d: usize, seed: u64) -> Points {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let data = (0..n * d).map(|_| rng.random_range(-1.0..1.0)).collect();
        Points::from_flat(d, data).unwrap()
    }

    fn toy(n: usize, seed: u64) -> Dataset {
        let x = random_points(n, 2, seed);
        let y = x.rows().map(|r| (3.0 * r[0]).sin() + r[1] * r[1]).collect();
        Dataset::new(x, y).unwrap()
    }

    #[test]
    fn empty_dataset_is_prior() {
        let k = KernelParams::rbf(1.7, vec![0.5, 0.5]).unwrap();
        let gp = GpModel::prior(k.clone(), 0.1, 2).unwrap();
        let x = random_points(5, 2, 1);
        let (m, c) = gp.predict(&x).unwrap();
        assert!(m.iter().all(|v| *v == 0.0));
        assert!((c - k.gram(&x, &x)).amax() < 1e-15);
    }

    #[test]
    fn noiseless_interpolation() {
        let k = KernelParams::rbf(1.0, vec![0.4, 0.4]).unwrap();
        let d = toy(30, 2);
        let gp = GpModel::new(d.clone(), k, 0.0).unwrap();
        assert!(gp.jitter <= 1e-10);
        let (m, v) = gp.predict_diag(&d.x).unwrap();
        for i in 0..d.len() {
            assert!((m[i] - d.y[i]).abs() <= 1e-8);
            assert!(v[i] <= 1e-8);
        }
    }

    #[test]
    fn three_point_dense_oracle() {
        let k = KernelParams::rbf(1.3, vec![0.7, 0.3]).unwrap();
        let d = toy(3, 3);
        let noise = 0.05;
        let gp = GpModel::new(d.clone(), k.clone(), noise).unwrap();
        let q = random_points(4, 2, 4);
        let (m, c) = gp.predict(&q).unwrap();
        let kinv = (k.gram(&d.x, &d.x) + DMatrix::identity(3, 3) * noise).try_inverse().unwrap();
        let kqo = k.gram(&q, &d.x);
        let m_ref = &kqo * &kinv * DVector::from_column_slice(&d.y);
        let c_ref = k.gram(&q, &q) - &kqo * &kinv * kqo.transpose();
        assert!((m - m_ref).amax() < 1e-10);
        assert!((c - c_ref).amax() < 1e-10);
    }

    #[test]
    fn scalar_lml() {
        let k = KernelParams::rbf(1.0, vec![1.0]).unwrap();
        let d = Dataset::new(Points::from_rows(&[[0.3]]).unwrap(), vec![0.0]).unwrap();
        let gp = GpModel::new(d, k, 0.0).unwrap();
        let expect = -0.5 * (2.0 * std::f64::consts::PI).ln();
        assert!((gp.log_marginal_likelihood() - expect).abs() < 1e-14);
    }

    #[test]
    fn lml_permutation_invariant() {
        let k = KernelParams::rbf(1.0, vec![0.5, 0.8]).unwrap();
        let d = toy(12, 5);
        let perm: Vec<usize> = (0..12).rev().collect();
        let d2 = Dataset::new(d.x.select(&perm), perm.iter().map(|&i| d.y[i]).collect()).unwrap();
        let a = GpModel::new(d, k.clone(), 0.01).unwrap().log_marginal_likelihood();
        let b = GpModel::new(d2, k, 0.01).unwrap().log_marginal_likelihood();
        assert!((a - b).abs() < 1e-10);
    }

    #[test]
    fn lower_inverse_gives_kernel_inverse() {
        let a = DMatrix::from_fn(30, 30, |i, j| ((i * 7 + j * 13) % 17) as f64 / 17.0);
        let k = &a * a.transpose() + DMatrix::identity(30, 30);
        let c = k.clone().cholesky().unwrap();
        let l = lower_inverse(c.l_dirty());
        assert!((l.transpose() * &l * &k - DMatrix::identity(30, 30)).amax() < 1e-10);
    }

    #[test]
    fn lml_gradient_matches_finite_differences() {
        let d = toy(15, 6);
        for (kernel, noise) in [
            (KernelParams::rbf(0.8, vec![0.6, 0.9]).unwrap(), 0.02),
            (KernelParams::rbf(2.0, vec![0.2, 1.5]).unwrap(), 0.3),
        ] {
            let gp = GpModel::new(d.clone(), kernel.clone(), noise).unwrap();
            let p = gp.log_params();
            let g = gp.lml_gradient();
            for i in 0..p.len() {
                let h = 1e-5;
                let f = |delta: f64| {
                    let mut q = p.clone();
                    q[i] += delta;
                    let (k, s) = from_log_params(KernelKind::RbfArd, &q).unwrap();
                    GpModel::new(d.clone(), k, s).unwrap().log_marginal_likelihood()
                };
                let fd = (f(h) - f(-h)) / (2.0 * h);
                assert!((fd - g[i]).abs() <= 1e-4 * fd.abs().max(1e-2), "param {i}: {fd} vs {}", g[i]);
            }
        }
    }

    #[test]
    fn tanimoto_gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let x = Points::from_flat(12, (0..20 * 12).map(|_| rng.random_range(0..2) as f64).collect()).unwrap();
        let y = (0..20).map(|_| rng.random_range(-1.0..1.0)).collect();
        let d = Dataset::new(x, y).unwrap();
        let gp = GpModel::new(d.clone(), KernelParams::tanimoto(0.7).unwrap(), 0.1).unwrap();
        let p = gp.log_params();
        let g = gp.lml_gradient();
        for i in 0..2 {
            let f = |delta: f64| {
                let mut q = p.clone();
                q[i] += delta;
                let (k, s) = from_log_params(KernelKind::Tanimoto, &q).unwrap();
                GpModel::new(d.clone(), k, s).unwrap().log_marginal_likelihood()
            };
            let fd = (f(1e-5) - f(-1e-5)) / 2e-5;
            assert!((fd - g[i]).abs() <= 1e-4 * fd.abs().max(1e-2));
        }
    }

    fn sample_gp(kernel: &KernelParams, x: &Points, noise: f64, seed: u64) -> Vec<f64> {
        let n = x.len();
        let k = kernel.gram(x, x) + DMatrix::identity(n, n) * (noise + 1e-8);
        let l = Cholesky::new(k).unwrap().l();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let z = DVector::from_fn(n, |_, _| StandardNormal.sample(&mut rng));
        (l * z).iter().cloned().collect()
    }

    #[test]
    fn mle_recovers_lengthscale() {
        let truth = KernelParams::rbf(1.0, vec![0.5]).unwrap();
        let x = random_points(200, 1, 10);
        let y = sample_gp(&truth, &x, 0.01, 11);
        let d = Dataset::new(x, y).unwrap();
        let init = KernelParams::rbf(1.0, vec![1.0]).unwrap();
        let gp = fit_mle(&d, &init, 0.1, &MleOptions { restarts: 4, seed: 1, max_iter: 100 }).unwrap();
        assert!((gp.kernel.lengthscales[0].ln() - 0.5f64.ln()).abs() <= 0.3, "{:?}", gp.kernel);
    }

    #[test]
    fn mle_deterministic_and_restart_zero() {
        let d = toy(20, 12);
        let init = KernelParams::rbf(1.0, vec![1.0, 1.0]).unwrap();
        let o = MleOptions { restarts: 2, seed: 3, max_iter: 50 };
        let a = fit_mle(&d, &init, 0.1, &o).unwrap();
        let b = fit_mle(&d, &init, 0.1, &o).unwrap();
        assert_eq!(a.log_params(), b.log_params());
        let z = fit_mle(&d, &init, 0.1, &MleOptions { restarts: 0, ..o }).unwrap();
        assert!(z.log_marginal_likelihood() >= GpModel::new(d, init, 0.1).unwrap().log_marginal_likelihood());
    }

    #[test]
    fn mle_variance_scales_quadratically() {
        let truth = KernelParams::rbf(1.0, vec![0.4]).unwrap();
        let x = random_points(60, 1, 13);
        let y = sample_gp(&truth, &x, 0.0, 14);
        let init = KernelParams::rbf(1.0, vec![0.5]).unwrap();
        let o = MleOptions { restarts: 3, seed: 0, max_iter: 200 };
        let a = fit_mle(&Dataset::new(x.clone(), y.clone()).unwrap(), &init, 1e-4, &o).unwrap();
        let y2 = y.iter().map(|v| 2.0 * v).collect();
        let b = fit_mle(&Dataset::new(x, y2).unwrap(), &init, 1e-4, &o).unwrap();
        let ratio = b.kernel.variance / a.kernel.variance;
        assert!((ratio / 4.0 - 1.0).abs() < 0.2, "ratio {ratio}");
    }

    #[test]
    fn mle_needs_two_points() {
        let d = toy(1, 0);
        let init = KernelParams::rbf(1.0, vec![1.0, 1.0]).unwrap();
        assert!(fit_mle(&d, &init, 0.1, &MleOptions::default()).is_err());
    }

    #[test]
    fn duplicate_points_use_jitter() {
        let x = Points::from_rows(&[[0.1, 0.2], [0.1, 0.2], [0.5, 0.5]]).unwrap();
        let d = Dataset::new(x, vec![1.0, 1.0, 0.0]).unwrap();
        let gp = GpModel::new(d, KernelParams::rbf(1.0, vec![0.5, 0.5]).unwrap(), 0.0).unwrap();
        assert!(gp.jitter > 0.0);
    }

    #[test]
    fn posterior_covariance_trait_matches_predict() {
        let k = KernelParams::rbf(1.0, vec![0.5, 0.5]).unwrap();
        let gp = GpModel::new(toy(10, 15), k, 0.01).unwrap();
        let pc = gp.posterior_covariance();
        let x = random_points(30, 2, 16);
        let s = random_points(25, 2, 17);
        let (_, c) = gp.predict(&x).unwrap();
        assert!((pc.gram(&x, &x) - &c).amax() < 1e-10);
        let w: Vec<f64> = (0..25).map(|i| (i + 1) as f64 / 325.0).collect();
        let wv = DVector::from_column_slice(&w);
        let emb = pc.mean_embedding(&x, &s, &w);
        assert!((emb - pc.gram(&x, &s) * &wv).amax() < 1e-10);
        let qf = pc.quadratic_form(&s, &w);
        assert!((qf - (wv.transpose() * pc.gram(&s, &s) * &wv)[0]).abs() < 1e-10);
        let coeffs = DMatrix::from_fn(3, 25, |i, j| ((i * 7 + j) % 5) as f64 - 2.0);
        let pr = pc.project(&coeffs, &s, &x);
        assert!((pr - &coeffs * pc.gram(&s, &x)).amax() < 1e-9);
        assert!((pc.diag(&x) - c.diagonal()).amax() < 1e-10);
    }

    #[test]
    fn parabolic_plug_in() {
        let mg = DVector::zeros(3);
        let cg = DMatrix::identity(3, 3) * 0.4;
        let (m, _) = parabolic_moments(&mg, &cg, 2.0);
        assert!(m.iter().all(|v| (*v - 1.8).abs() < 1e-15));
        let (_, c) = parabolic_moments(&DVector::from_element(3, 1.5), &DMatrix::zeros(3, 3), 1.0);
        assert!(c.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn parabolic_formula_oracle() {
        let d = toy(8, 18);
        let eta = d.y.iter().cloned().fold(f64::NEG_INFINITY, f64::max) + 0.3;
        let k = KernelParams::rbf(1.0, vec![0.6, 0.6]).unwrap();
        let w = WarpedGp::parabolic(&d, k.clone(), 1e-3, eta).unwrap();
        let x = random_points(5, 2, 19);
        let (m, c) = predict_parabolic(&w, &x).unwrap();
        let (mg, cg) = w.base.predict(&x).unwrap();
        for i in 0..5 {
            assert!((m[i] - (eta - 0.5 * (mg[i].powi(2) + cg[(i, i)]))).abs() < 1e-12);
            for j in 0..5 {
                let e = 0.5 * cg[(i, j)].powi(2) + mg[i] * cg[(i, j)] * mg[j];
                assert!((c[(i, j)] - e).abs() < 1e-12);
            }
        }
        assert!(WarpedGp::parabolic(&d, k, 1e-3, eta - 1.0).is_err());
    }

    #[test]
    fn mmlt_formulas() {
        let (m, _) = mmlt_moments(&DVector::zeros(2), &DMatrix::zeros(2, 2), MmltVariant::Printed);
        assert!(m.iter().all(|v| *v == 1.0));
        let cg = DMatrix::identity(2, 2) * 0.1;
        let (a, _) = mmlt_moments(&DVector::from_element(2, 0.2), &cg, MmltVariant::Standard);
        let (b, _) = mmlt_moments(&DVector::from_element(2, 0.5), &cg, MmltVariant::Standard);
        assert!(b[0] > a[0]);

        let d = Dataset::new(random_points(6, 2, 20), vec![0.1, 2.0, 0.5, 1.2, 0.0, 3.0]).unwrap();
        let w = WarpedGp::mmlt(&d, KernelParams::rbf(1.0, vec![0.5, 0.5]).unwrap(), 1e-3, MmltVariant::Printed).unwrap();
        let x = random_points(4, 2, 21);
        let (m, c) = predict_mmlt(&w, &x).unwrap();
        let (mg, cg) = w.base.predict(&x).unwrap();
        for i in 0..4 {
            assert!((m[i] - (mg[i] + 0.5 * cg[(i, i)]).exp()).abs() < 1e-12);
            for j in 0..4 {
                assert!((c[(i, j)] - mg[i] * mg[j] * (cg[(i, i)] - 1.0)).abs() < 1e-12);
            }
        }
        let bad = Dataset::new(random_points(2, 2, 0), vec![-1.0, 0.0]).unwrap();
        assert!(WarpedGp::mmlt(&bad, KernelParams::rbf(1.0, vec![1.0, 1.0]).unwrap(), 0.0, MmltVariant::Standard).is_err());
    }
}
