//! Quadrature distillation: compress hyperposterior samples into a few
//! weighted hypersamples and predict with the resulting GP mixture.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};

use crate::error::{Result, SoberError};
use crate::gp::{fit_mle, from_log_params, Dataset, GpModel, MleOptions, WarpedGp};
use crate::kernels::{fit_nystrom, Covariance, KernelKind, KernelParams, DEFAULT_OVERSAMPLE};
use crate::measures::{deweighted_subsample, normalize, EmpiricalMeasure};
use crate::points::Points;
use crate::recombination::{recombine, wce_estimate};
use crate::surrogate::{GpEnsemble, Surrogate};

pub const DEFAULT_H: usize = 50;
const MAX_ANCHORS: usize = 256;
const MIN_ACCEPTANCE: f64 = 0.01;
const HYPER_FIT_MAX: usize = 300;
/// Recombination seeds tried by [`distill`]; the lowest-MMD result is kept.
pub const DISTILL_RESTARTS: u64 = 8;
/// Hyper-kernel lengthscale in units of the weighted sample spread.
const HYPER_LS_FACTOR: f64 = 2.0;

/// Weighted hyperparameter samples in log space, `[log ℓ.., log v, log σ²]`
/// per row, with an optional threshold per sample for the parabolic warp.
#[derive(Clone, Debug, PartialEq)]
pub struct HyperMeasure {
    pub theta: Vec<Vec<f64>>,
    pub weights: Vec<f64>,
    pub kind: KernelKind,
    pub etas: Option<Vec<f64>>,
}

impl HyperMeasure {
    pub fn point(theta: Vec<f64>, kind: KernelKind) -> Self {
        HyperMeasure {
            theta: vec![theta],
            weights: vec![1.0],
            kind,
            etas: None,
        }
    }

    pub fn from_model(gp: &GpModel) -> Self {
        HyperMeasure::point(gp.log_params(), gp.kernel.kind)
    }

    pub fn len(&self) -> usize {
        self.theta.len()
    }

    pub fn is_empty(&self) -> bool {
        self.theta.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        if self.is_empty() || self.weights.len() != self.len() {
            return Err(SoberError::InvalidArgument("hypermeasure needs matching samples and weights".into()));
        }
        let s: f64 = self.weights.iter().sum();
        if self.weights.iter().any(|w| !(*w >= 0.0)) || (s - 1.0).abs() > 1e-9 {
            return Err(SoberError::InvalidArgument("hypermeasure weights must be a probability vector".into()));
        }
        if let Some(e) = &self.etas {
            if e.len() != self.len() {
                return Err(SoberError::InvalidArgument("one eta per hypersample".into()));
            }
        }
        Ok(())
    }

    /// Builds one surrogate per hypersample. Members whose factorisation
    /// fails are dropped and the rest renormalised; the count is returned.
    pub fn ensemble(&self, dataset: &Dataset) -> Result<(GpEnsemble, usize)> {
        self.validate()?;
        let mut members = Vec::new();
        let mut weights = Vec::new();
        for (i, (t, w)) in self.theta.iter().zip(&self.weights).enumerate() {
            if *w <= 0.0 {
                continue;
            }
            let (kernel, noise) = from_log_params(self.kind, t)?;
            let s = match &self.etas {
                Some(e) => WarpedGp::parabolic(dataset, kernel, noise, e[i]).map(Surrogate::Warped),
                None => GpModel::new(dataset.clone(), kernel, noise).map(Surrogate::Plain),
            };
            if let Ok(s) = s {
                members.push(s);
                weights.push(*w);
            }
        }
        let dropped = self.weights.iter().filter(|w| **w > 0.0).count() - members.len();
        if members.is_empty() {
            return Err(SoberError::Cholesky { jitter: f64::NAN });
        }
        Ok((GpEnsemble::new(members, weights)?, dropped))
    }
}

/// Multivariate normal over log-hyperparameters.
#[derive(Clone, Debug)]
pub struct HyperPrior {
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
}

impl HyperPrior {
    pub fn standard(dim: usize) -> Self {
        HyperPrior {
            mean: DVector::zeros(dim),
            cov: DMatrix::identity(dim, dim),
        }
    }

    /// Parameter count for a kernel over `input_dim` encoded inputs.
    pub fn dim_for(kind: KernelKind, input_dim: usize) -> usize {
        match kind {
            KernelKind::RbfArd => input_dim + 2,
            KernelKind::Tanimoto => 2,
        }
    }

    fn chol(&self) -> Result<nalgebra::Cholesky<f64, nalgebra::Dyn>> {
        nalgebra::Cholesky::new(self.cov.clone())
            .ok_or_else(|| SoberError::InvalidArgument("hyperprior covariance must be positive definite".into()))
    }

    pub fn log_density(&self, theta: &[f64]) -> Result<f64> {
        let c = self.chol()?;
        let d = DVector::from_column_slice(theta) - &self.mean;
        let z = c.l().solve_lower_triangular(&d).expect("non-singular factor");
        let logdet: f64 = c.l().diagonal().iter().map(|v| v.ln()).sum();
        Ok(-0.5 * z.norm_squared() - logdet - 0.5 * d.len() as f64 * (2.0 * std::f64::consts::PI).ln())
    }

    pub fn sample(&self, n: usize, seed: u64) -> Result<Vec<Vec<f64>>> {
        let l = self.chol()?.l();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = self.mean.len();
        Ok((0..n)
            .map(|_| {
                let z = DVector::from_fn(d, |_, _| StandardNormal.sample(&mut rng));
                (&self.mean + &l * z).iter().cloned().collect()
            })
            .collect())
    }
}

fn log_likelihood(dataset: &Dataset, kind: KernelKind, theta: &[f64]) -> f64 {
    from_log_params(kind, theta)
        .and_then(|(k, n)| GpModel::new(dataset.clone(), k, n))
        .map(|g| g.log_marginal_likelihood())
        .unwrap_or(f64::NEG_INFINITY)
}

#[derive(Clone, Debug)]
pub struct McmcOptions {
    pub burn_in: usize,
    pub thin: usize,
    pub target_accept: f64,
    /// Proposal scale relative to the hyperprior standard deviations.
    pub initial_scale: f64,
}

impl Default for McmcOptions {
    fn default() -> Self {
        McmcOptions {
            burn_in: 500,
            thin: 2,
            target_accept: 0.3,
            initial_scale: 0.5,
        }
    }
}

#[derive(Clone, Debug, Default)]
pub struct QdReport {
    pub acceptance: Option<f64>,
    /// Acceptance below 1%: the chain was thinned instead of distilled.
    pub low_acceptance: bool,
    /// The BQ path fell back to MCMC.
    pub fallback: bool,
}

/// Adaptive random-walk Metropolis on `L(θ)Π'(θ)`. Returns `m_samples`
/// states after burn-in and thinning, and the post-burn-in acceptance rate.
pub fn rwm_chain(
    dataset: &Dataset,
    prior: &HyperPrior,
    kind: KernelKind,
    m_samples: usize,
    opts: &McmcOptions,
    seed: u64,
) -> Result<(Vec<Vec<f64>>, f64)> {
    let d = prior.mean.len();
    let sd: Vec<f64> = (0..d).map(|i| prior.cov[(i, i)].sqrt()).collect();
    let target = |t: &[f64]| -> Result<f64> { Ok(log_likelihood(dataset, kind, t) + prior.log_density(t)?) };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut cur: Vec<f64> = prior.mean.iter().cloned().collect();
    let mut cur_lp = target(&cur)?;
    let mut scale = opts.initial_scale;
    let mut out = Vec::with_capacity(m_samples);
    let mut accepted = 0usize;
    let total = opts.burn_in + m_samples * opts.thin.max(1);
    for step in 0..total {
        let prop: Vec<f64> = cur
            .iter()
            .zip(&sd)
            .map(|(c, s)| c + scale * s * Distribution::<f64>::sample(&StandardNormal, &mut rng))
            .collect();
        let lp = target(&prop)?;
        let a = if lp.is_finite() { (lp - cur_lp).min(0.0).exp() } else { 0.0 };
        let acc = rng.random::<f64>() < a;
        if acc {
            cur = prop;
            cur_lp = lp;
        }
        if step < opts.burn_in {
            scale *= ((a - opts.target_accept) / ((step + 1) as f64).sqrt()).exp();
        } else {
            accepted += acc as usize;
            if (step - opts.burn_in + 1) % opts.thin.max(1) == 0 {
                out.push(cur.clone());
            }
        }
    }
    Ok((out, accepted as f64 / (total - opts.burn_in).max(1) as f64))
}

/// Merges exact duplicates, keeping first-occurrence order.
fn merge_duplicates(theta: Vec<Vec<f64>>, weights: Vec<f64>) -> (Vec<Vec<f64>>, Vec<f64>) {
    let mut keys: std::collections::HashMap<Vec<u64>, usize> = std::collections::HashMap::new();
    let mut t_out = Vec::new();
    let mut w_out: Vec<f64> = Vec::new();
    for (t, w) in theta.into_iter().zip(weights) {
        let key: Vec<u64> = t.iter().map(|v| v.to_bits()).collect();
        match keys.get(&key) {
            Some(&i) => w_out[i] += w,
            None => {
                keys.insert(key, t_out.len());
                t_out.push(t);
                w_out.push(w);
            }
        }
    }
    (t_out, w_out)
}

/// RBF over log-hyperparameters with lengthscales of twice the weighted
/// sample spread.
pub fn default_hyper_kernel(theta: &[Vec<f64>], weights: &[f64]) -> Result<KernelParams> {
    let d = theta[0].len();
    let ls = (0..d)
        .map(|j| {
            let mean: f64 = theta.iter().zip(weights).map(|(t, w)| w * t[j]).sum();
            let var: f64 = theta.iter().zip(weights).map(|(t, w)| w * (t[j] - mean).powi(2)).sum();
            HYPER_LS_FACTOR * var.sqrt().max(1e-3)
        })
        .collect();
    KernelParams::rbf(1.0, ls)
}

/// Recombines a weighted sample onto `h − 1` Nyström test functions of
/// `kernel`, leaving at most `h` points. Of [`DISTILL_RESTARTS`] elimination
/// orders the one closest to the sample in kernel MMD is returned.
pub fn distill<K: Covariance + ?Sized>(
    theta: Vec<Vec<f64>>,
    weights: Vec<f64>,
    kind: KernelKind,
    kernel: &K,
    h: usize,
    seed: u64,
) -> Result<HyperMeasure> {
    if h == 0 {
        return Err(SoberError::InvalidArgument("H must be >= 1".into()));
    }
    let (theta, weights) = merge_duplicates(theta, weights);
    let m = EmpiricalMeasure::from_unnormalized(Points::from_rows(&theta)?, weights)?;
    if m.n_positive() <= h {
        let keep: Vec<usize> = (0..m.len()).filter(|&i| m.weights[i] > 0.0).collect();
        return Ok(HyperMeasure {
            theta: keep.iter().map(|&i| theta[i].clone()).collect(),
            weights: normalize(keep.iter().map(|&i| m.weights[i]).collect()),
            kind,
            etas: None,
        });
    }
    let anchors = deweighted_subsample(&m, MAX_ANCHORS.min(m.len()), seed)?;
    let nf = fit_nystrom(kernel, &anchors.points, h - 1, DEFAULT_OVERSAMPLE, seed)?;
    let phi = nf.eval(kernel, &m.points);
    let mut best: Option<(f64, crate::recombination::Recombined)> = None;
    for t in 0..DISTILL_RESTARTS {
        let rec = recombine(&m, &phi, None, seed.wrapping_add(t))?;
        let mmd = wce_estimate(kernel, &m.points.select(&rec.indices), &rec.weights, &m, true);
        if best.as_ref().is_none_or(|(b, _)| mmd < *b) {
            best = Some((mmd, rec));
        }
    }
    let (_, rec) = best.expect("at least one restart");
    Ok(HyperMeasure {
        theta: rec.indices.iter().map(|&i| theta[i].clone()).collect(),
        weights: normalize(rec.weights),
        kind,
        etas: None,
    })
}

/// MCMC-based distillation. With `kernel_hyper = None` an RBF sized to the
/// chain spread is used.
pub fn qd_mcmc(
    dataset: &Dataset,
    prior: &HyperPrior,
    kind: KernelKind,
    m_samples: usize,
    h: usize,
    kernel_hyper: Option<&KernelParams>,
    opts: &McmcOptions,
    seed: u64,
) -> Result<(HyperMeasure, QdReport)> {
    if m_samples < h || h == 0 {
        return Err(SoberError::InvalidArgument(format!("need 1 <= H <= M, got H={h}, M={m_samples}")));
    }
    let (chain, acc) = rwm_chain(dataset, prior, kind, m_samples, opts, seed)?;
    let mut report = QdReport {
        acceptance: Some(acc),
        ..Default::default()
    };
    let w = vec![1.0 / chain.len() as f64; chain.len()];
    if acc < MIN_ACCEPTANCE && opts.initial_scale > 0.0 {
        log::warn!("MCMC acceptance {acc:.4} below 1%; returning thinned chain");
        report.low_acceptance = true;
        let step = (chain.len() / h).max(1);
        let theta: Vec<Vec<f64>> = chain.into_iter().step_by(step).take(h).collect();
        let (theta, weights) = merge_duplicates(theta.clone(), vec![1.0; theta.len()]);
        return Ok((
            HyperMeasure {
                theta,
                weights: normalize(weights),
                kind,
                etas: None,
            },
            report,
        ));
    }
    let hm = match kernel_hyper {
        Some(k) => distill(chain, w, kind, k, h, seed)?,
        None => {
            let k = default_hyper_kernel(&chain, &w)?;
            distill(chain, w, kind, &k, h, seed)?
        }
    };
    Ok((hm, report))
}

/// `z_i = ∫ K_hyper(θ, θ_i) dN(θ; μ, Σ) = v √|2πW| N(θ_i; μ, W + Σ)` for an
/// RBF `K_hyper` with `W = diag(ℓ²)`.
pub fn bq_kernel_mean(kernel: &KernelParams, prior: &HyperPrior, points: &Points) -> Result<DVector<f64>> {
    if kernel.kind != KernelKind::RbfArd {
        return Err(SoberError::InvalidKernel("closed-form kernel mean needs an RBF kernel".into()));
    }
    let d = prior.mean.len();
    if kernel.lengthscales.len() != d || points.dim() != d {
        return Err(SoberError::DimensionMismatch {
            expected: d,
            got: points.dim(),
        });
    }
    let w = DMatrix::from_diagonal(&DVector::from_iterator(d, kernel.lengthscales.iter().map(|l| l * l)));
    let s = &w + &prior.cov;
    let c = nalgebra::Cholesky::new(s.clone())
        .ok_or_else(|| SoberError::InvalidArgument("W + Σ not positive definite".into()))?;
    let logdet_s: f64 = 2.0 * c.l().diagonal().iter().map(|v| v.ln()).sum::<f64>();
    let logdet_w: f64 = kernel.lengthscales.iter().map(|l| 2.0 * l.ln()).sum();
    // v √|2πW| / √|2π(W+Σ)| = v √(|W| / |W+Σ|)
    let log_pref = kernel.variance.ln() + 0.5 * (logdet_w - logdet_s);
    Ok(DVector::from_iterator(
        points.len(),
        points.rows().map(|t| {
            let diff = DVector::from_column_slice(t) - &prior.mean;
            let z = c.l().solve_lower_triangular(&diff).expect("non-singular factor");
            (log_pref - 0.5 * z.norm_squared()).exp()
        }),
    ))
}

/// `w'_BQ = z (K + σ²I)⁻¹` for the hyper-GP `gp`.
pub fn bq_weights(gp: &GpModel, prior: &HyperPrior) -> Result<DVector<f64>> {
    let z = bq_kernel_mean(&gp.kernel, prior, &gp.dataset.x)?;
    let zm = DMatrix::from_column_slice(z.len(), 1, z.as_slice());
    Ok(gp.solve(&zm).column(0).into_owned())
}

#[derive(Clone, Debug)]
pub struct BqState {
    pub theta: Vec<Vec<f64>>,
    /// Likelihoods scaled by their maximum.
    pub l_obs: Vec<f64>,
    pub hyper_gp: GpModel,
    pub w_prime: DVector<f64>,
}

impl BqState {
    /// `w' ⊙ L / (w'ᵀL)`, or `None` when the denominator is not positive.
    pub fn composite_weights(&self) -> Option<Vec<f64>> {
        let den: f64 = self.w_prime.iter().zip(&self.l_obs).map(|(w, l)| w * l).sum();
        if !(den > 0.0) {
            return None;
        }
        Some(self.w_prime.iter().zip(&self.l_obs).map(|(w, l)| w * l / den).collect())
    }
}

/// Draws `θ_obs ~ Π'`, evaluates `L/max L`, and fits the hyper-GP.
pub fn bq_hyper_fit(dataset: &Dataset, prior: &HyperPrior, kind: KernelKind, m_samples: usize, seed: u64) -> Result<BqState> {
    let theta = prior.sample(m_samples, seed)?;
    let lml: Vec<f64> = theta.iter().map(|t| log_likelihood(dataset, kind, t)).collect();
    let top = lml.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !top.is_finite() {
        return Err(SoberError::DegenerateMeasure("no hypersample has finite likelihood".into()));
    }
    let l_obs: Vec<f64> = lml.iter().map(|v| (v - top).exp()).collect();
    let x = Points::from_rows(&theta)?;
    let d = x.dim();
    let fit_idx: Vec<usize> = (0..theta.len()).step_by(theta.len().div_ceil(HYPER_FIT_MAX)).collect();
    let fit_set = Dataset::new(x.select(&fit_idx), fit_idx.iter().map(|&i| l_obs[i]).collect())?;
    let sd: Vec<f64> = (0..d).map(|i| prior.cov[(i, i)].sqrt()).collect();
    let init = KernelParams::rbf(1.0, sd)?;
    let fitted = fit_mle(
        &fit_set,
        &init,
        1e-6,
        &MleOptions {
            restarts: 3,
            seed,
            max_iter: 60,
        },
    )?;
    let hyper_gp = GpModel::new(Dataset::new(x, l_obs.clone())?, fitted.kernel, fitted.noise)?;
    let w_prime = bq_weights(&hyper_gp, prior)?;
    Ok(BqState {
        theta,
        l_obs,
        hyper_gp,
        w_prime,
    })
}

/// BQ-based distillation. Negative composite weights are clipped before
/// recombination; a non-positive normaliser falls back to [`qd_mcmc`].
pub fn qd_bq(
    dataset: &Dataset,
    prior: &HyperPrior,
    kind: KernelKind,
    m_samples: usize,
    h: usize,
    seed: u64,
) -> Result<(HyperMeasure, QdReport)> {
    if m_samples < h || h == 0 {
        return Err(SoberError::InvalidArgument(format!("need 1 <= H <= M, got H={h}, M={m_samples}")));
    }
    let st = bq_hyper_fit(dataset, prior, kind, m_samples, seed)?;
    let w = st.composite_weights().map(|w| w.into_iter().map(|v| v.max(0.0)).collect::<Vec<_>>());
    match w {
        Some(w) if w.iter().any(|v| *v > 0.0) => {
            let hm = distill(st.theta, w, kind, &st.hyper_gp.kernel, h, seed)?;
            Ok((hm, QdReport::default()))
        }
        _ => {
            log::warn!("BQ weights degenerate; falling back to MCMC distillation");
            let (hm, mut r) = qd_mcmc(dataset, prior, kind, m_samples, h, None, &McmcOptions::default(), seed)?;
            r.fallback = true;
            Ok((hm, r))
        }
    }
}

#[derive(Clone, Debug)]
pub struct FbgpPrediction {
    pub mean: DVector<f64>,
    pub var: DVector<f64>,
    pub cov: DMatrix<f64>,
    /// Hypersamples dropped after a failed factorisation.
    pub dropped: usize,
}

/// Mixture moments: `m = Σ w m_h`, `V = Σ w (C_h + m_h²) − m²`, and the full
/// covariance `Σ w C_h(x,x') + Σ w (m_h(x) − m(x))(m_h(x') − m(x'))`.
pub fn fbgp_predict(hm: &HyperMeasure, dataset: &Dataset, x: &Points) -> Result<FbgpPrediction> {
    let (ens, dropped) = hm.ensemble(dataset)?;
    let pred = ens.predict(x);
    let mean = pred.mixture_mean();
    let w = DVector::from_column_slice(&pred.weights);
    let second = (&pred.vars + pred.means.component_mul(&pred.means)).transpose() * &w;
    let var = DVector::from_fn(mean.len(), |i, _| (second[i] - mean[i] * mean[i]).max(0.0));
    let cov = ens.gram(x, x);
    Ok(FbgpPrediction {
        mean,
        var,
        cov,
        dropped,
    })
}

/// `η_i = max(y) + |ε_i|`, `ε_i ~ N(0, (0.1·range(y))²)`.
pub fn eta_hypersamples(y: &[f64], h: usize, seed: u64) -> Result<Vec<f64>> {
    if y.is_empty() {
        return Err(SoberError::InvalidArgument("eta samples need observations".into()));
    }
    let hi = y.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lo = y.iter().cloned().fold(f64::INFINITY, f64::min);
    let sd = (0.1 * (hi - lo)).max(1e-6);
    let n = Normal::new(0.0, sd).expect("positive sd");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok((0..h).map(|_| hi + n.sample(&mut rng).abs()).collect())
}

/// Attaches threshold samples to a hypermeasure so its ensemble uses the
/// parabolic warp.
pub fn with_etas(mut hm: HyperMeasure, y: &[f64], seed: u64) -> Result<HyperMeasure> {
    hm.etas = Some(eta_hypersamples(y, hm.len(), seed)?);
    Ok(hm)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn five_points() -> Dataset {
        let x = Points::from_flat(1, vec![0.0, 0.25, 0.5, 0.75, 1.0]).unwrap();
        let y = x.rows().map(|r| (5.0 * r[0]).sin()).collect();
        Dataset::new(x, y).unwrap()
    }

    #[test]
    fn zero_scale_chain_is_point_mass() {
        let ds = five_points();
        let prior = HyperPrior::standard(3);
        let opts = McmcOptions {
            initial_scale: 0.0,
            ..Default::default()
        };
        let (hm, _) = qd_mcmc(&ds, &prior, KernelKind::RbfArd, 100, 10, None, &opts, 0).unwrap();
        assert_eq!(hm.len(), 1);
        assert_eq!(hm.weights, vec![1.0]);
        assert_eq!(hm.theta[0], vec![0.0; 3]);
    }

    #[test]
    fn distillation_preserves_test_function_moments() {
        let ds = five_points();
        let prior = HyperPrior::standard(3);
        let (chain, _) = rwm_chain(&ds, &prior, KernelKind::RbfArd, 400, &McmcOptions::default(), 1).unwrap();
        let w = vec![1.0 / chain.len() as f64; chain.len()];
        let k = default_hyper_kernel(&chain, &w).unwrap();
        let (merged, mw) = merge_duplicates(chain.clone(), w.clone());
        let m = EmpiricalMeasure::from_unnormalized(Points::from_rows(&merged).unwrap(), mw).unwrap();
        let anchors = deweighted_subsample(&m, MAX_ANCHORS.min(m.len()), 4).unwrap();
        let nf = fit_nystrom(&k, &anchors.points, 9, DEFAULT_OVERSAMPLE, 4).unwrap();
        let hm = distill(chain, w, KernelKind::RbfArd, &k, 10, 4).unwrap();
        assert!(hm.len() <= 10);
        let full = nf.eval(&k, &m.points) * DVector::from_column_slice(&m.weights);
        let sub = nf.eval(&k, &Points::from_rows(&hm.theta).unwrap()) * DVector::from_column_slice(&hm.weights);
        for (a, b) in full.iter().zip(sub.iter()) {
            assert!((a - b).abs() <= 1e-6 * a.abs().max(1.0), "{a} vs {b}");
        }
    }

    #[test]
    fn constant_likelihood_weights() {
        let st = BqState {
            theta: vec![vec![0.0], vec![1.0]],
            l_obs: vec![1.0, 1.0],
            hyper_gp: GpModel::prior(KernelParams::rbf(1.0, vec![1.0]).unwrap(), 0.0, 1).unwrap(),
            w_prime: DVector::from_vec(vec![0.3, 0.5]),
        };
        let w = st.composite_weights().unwrap();
        assert!((w[0] - 0.375).abs() < 1e-15 && (w[1] - 0.625).abs() < 1e-15);
    }

    #[test]
    fn single_hypersample_matches_gp() {
        let ds = five_points();
        let k = KernelParams::rbf(0.8, vec![0.3]).unwrap();
        let gp = GpModel::new(ds.clone(), k, 1e-4).unwrap();
        let x = Points::from_flat(1, vec![0.1, 0.6, 0.9]).unwrap();
        let p = fbgp_predict(&HyperMeasure::from_model(&gp), &ds, &x).unwrap();
        let (m, c) = gp.predict(&x).unwrap();
        assert!((p.mean - m).amax() < 1e-12);
        assert!((p.cov - &c).amax() < 1e-12);
        for i in 0..3 {
            assert!((p.var[i] - c[(i, i)]).abs() < 1e-12);
        }
    }

    #[test]
    fn identical_members_keep_common_variance() {
        let ds = five_points();
        let t = vec![0.3f64.ln(), 0.0, 1e-4f64.ln()];
        let hm = HyperMeasure {
            theta: vec![t.clone(), t.clone()],
            weights: vec![0.5, 0.5],
            kind: KernelKind::RbfArd,
            etas: None,
        };
        let x = Points::from_flat(1, vec![0.1, 0.6]).unwrap();
        let p = fbgp_predict(&hm, &ds, &x).unwrap();
        let (_, c) = fbgp_predict(&HyperMeasure::point(t, KernelKind::RbfArd), &ds, &x)
            .map(|q| (q.mean, q.var))
            .unwrap();
        assert!((p.var - c).amax() < 1e-12);
    }

    #[test]
    fn eta_samples_above_max() {
        let y = [0.1, -2.0, 0.7];
        let e = eta_hypersamples(&y, 50, 3).unwrap();
        assert!(e.iter().all(|v| *v >= 0.7));
        assert_eq!(e, eta_hypersamples(&y, 50, 3).unwrap());
    }
}
