//! The batch loop: fit a surrogate, build the belief measure, pick a
//! weighted batch by kernel quadrature, observe, repeat.

use web_time::Instant;

use serde::{Deserialize, Serialize};

use crate::acquisition::{eval_af, normalize_af, AfKind};
use crate::distillation::{qd_bq, qd_mcmc, with_etas, HyperMeasure, HyperPrior, McmcOptions, DEFAULT_H};
use crate::error::{Result, SoberError};
use crate::gp::{fit_mle, Dataset, GpModel, MleOptions};
use crate::kernels::{fit_nystrom, Covariance, KernelKind, KernelParams, DEFAULT_OVERSAMPLE};
use crate::measures::{deweighted_subsample, sample_prior, DomainSpec, EmpiricalMeasure, PriorModel};
use crate::pi::{ts_candidates, ts_measure, update_pi, PiConfig, PiState, PiVariant};
use crate::points::Points;
use crate::recombination::{auto_kq_select, objective_rchq, wce_estimate, AutoKqOptions, BatchSelection, KqMethod};
use crate::surrogate::{GpEnsemble, MeanWeighted};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    #[default]
    Optimize,
    Quadrature,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FbgpMethod {
    #[default]
    Mcmc,
    Bq,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FbgpConfig {
    pub h: usize,
    pub m_samples: usize,
    pub method: FbgpMethod,
    pub burn_in: usize,
}

impl Default for FbgpConfig {
    fn default() -> Self {
        FbgpConfig {
            h: DEFAULT_H,
            m_samples: 200,
            method: FbgpMethod::Mcmc,
            burn_in: 200,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SoberConfig {
    /// Size `N` of the empirical measure.
    pub n_rec: usize,
    /// Nyström anchor count `M`.
    pub n_nys: usize,
    pub batch_size: usize,
    pub variant: PiVariant,
    /// `None` picks MES when an ensemble is fitted and LFI otherwise.
    pub af: Option<AfKind>,
    pub fbgp: Option<FbgpConfig>,
    pub autokq: bool,
    pub thinning_pool: usize,
    pub seed: u64,
    pub mode: Mode,
    pub kernel: KernelKind,
    /// Weight the KQ kernel by the clamped posterior mean.
    pub mean_weighted: bool,
    /// Full MLE restarts every this many iterations; warm starts otherwise.
    pub refit_every: usize,
    pub mle_restarts: usize,
    pub mle_max_iter: usize,
    /// Posterior samples drawn by the TS variant.
    pub ts_samples: usize,
    pub initial_noise: f64,
}

impl Default for SoberConfig {
    fn default() -> Self {
        SoberConfig {
            n_rec: 20000,
            n_nys: 500,
            batch_size: 100,
            variant: PiVariant::Lfi,
            af: None,
            fbgp: None,
            autokq: false,
            thinning_pool: crate::recombination::DEFAULT_THINNING_POOL,
            seed: 0,
            mode: Mode::Optimize,
            kernel: KernelKind::RbfArd,
            mean_weighted: false,
            refit_every: 5,
            mle_restarts: 3,
            mle_max_iter: 60,
            ts_samples: 2000,
            initial_noise: 1e-4,
        }
    }
}

impl SoberConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(SoberError::Config(m.into()));
        if self.batch_size == 0 {
            return bad("batch size must be >= 1");
        }
        if self.batch_size > self.n_rec {
            return bad("batch size must not exceed N");
        }
        if self.n_nys == 0 || self.n_nys > self.n_rec {
            return bad("M must lie in [1, N]");
        }
        if self.refit_every == 0 {
            return bad("refit_every must be >= 1");
        }
        if let Some(af) = &self.af {
            af.validate()?;
        }
        if let Some(f) = &self.fbgp {
            if f.h == 0 || f.m_samples < f.h {
                return bad("FBGP needs 1 <= H <= samples");
            }
        }
        Ok(())
    }

    pub fn af_kind(&self) -> AfKind {
        match self.mode {
            Mode::Quadrature => AfKind::None,
            Mode::Optimize => self.af.unwrap_or(AfKind::default_for(self.fbgp.is_some())),
        }
    }
}

/// Everything produced by one ask/tell round.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    pub batch_points: Vec<Vec<f64>>,
    pub batch_weights: Vec<f64>,
    pub y_batch: Vec<f64>,
    pub wce: f64,
    pub objective: f64,
    pub method: KqMethod,
    /// Weighted mean of the belief measure.
    pub measure_mean: Vec<f64>,
    /// Weighted variance (trace) of the belief measure.
    pub measure_var: f64,
    pub evidence: Option<(f64, f64)>,
    /// Cumulative seconds since the state was created.
    pub elapsed_s: f64,
    pub reset: bool,
}

#[derive(Clone, Debug)]
struct Pending {
    batch: BatchSelection,
    measure: EmpiricalMeasure,
    reset: bool,
}

fn mix(seed: u64, a: u64, b: u64) -> u64 {
    let mut z = seed ^ a.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ b.wrapping_mul(0xC2B2_AE3D_27D4_EB4F);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Weighted mean and unbiased (reliability-weight) variance trace.
pub fn measure_moments(m: &EmpiricalMeasure) -> (Vec<f64>, f64) {
    let d = m.points.dim();
    let mut mean = vec![0.0; d];
    for (x, w) in m.points.rows().zip(&m.weights) {
        for k in 0..d {
            mean[k] += w * x[k];
        }
    }
    let ss: f64 = m
        .points
        .rows()
        .zip(&m.weights)
        .map(|(x, w)| w * x.iter().zip(&mean).map(|(a, b)| (a - b).powi(2)).sum::<f64>())
        .sum();
    let w2: f64 = m.weights.iter().map(|w| w * w).sum();
    let var = if w2 < 1.0 { ss / (1.0 - w2) } else { 0.0 };
    (mean, var)
}

/// Starting kernel: half the box width for continuous dims, 1 for encoded
/// discrete dims.
pub fn initial_kernel(kind: KernelKind, domain: &DomainSpec) -> Result<KernelParams> {
    match kind {
        KernelKind::Tanimoto => KernelParams::tanimoto(1.0),
        KernelKind::RbfArd => {
            let mut ls: Vec<f64> = domain.continuous.iter().map(|(a, b)| 0.5 * (b - a)).collect();
            ls.resize(domain.encoded_dim(), 1.0);
            KernelParams::rbf(1.0, ls)
        }
    }
}

/// Fits the MLE GP: full restarts when `full`, a warm start otherwise.
pub fn fit_surrogate(
    ds: &Dataset,
    prev: Option<&GpModel>,
    init: &KernelParams,
    cfg: &SoberConfig,
    full: bool,
    seed: u64,
) -> Result<GpModel> {
    if ds.len() < 2 {
        let (k, n) = prev.map(|g| (g.kernel.clone(), g.noise)).unwrap_or((init.clone(), cfg.initial_noise));
        return GpModel::new(ds.clone(), k, n);
    }
    let (k0, n0) = prev.map(|g| (g.kernel.clone(), g.noise)).unwrap_or((init.clone(), cfg.initial_noise));
    let opts = MleOptions {
        restarts: if full { cfg.mle_restarts } else { 0 },
        seed,
        max_iter: cfg.mle_max_iter,
    };
    fit_mle(ds, &k0, n0, &opts)
}

/// Observation standardisation `(y − μ)/s`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Standardizer {
    pub mean: f64,
    pub scale: f64,
}

impl Standardizer {
    pub fn fit(y: &[f64]) -> Self {
        if y.is_empty() {
            return Standardizer { mean: 0.0, scale: 1.0 };
        }
        let n = y.len() as f64;
        let mean = y.iter().sum::<f64>() / n;
        let sd = (y.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
        Standardizer {
            mean,
            scale: if sd > 1e-12 { sd } else { 1.0 },
        }
    }

    pub fn apply(&self, v: f64) -> f64 {
        (v - self.mean) / self.scale
    }

    pub fn invert(&self, v: f64) -> f64 {
        v * self.scale + self.mean
    }
}

pub struct SoberState {
    pub config: SoberConfig,
    pub domain: DomainSpec,
    pub pi: PiState,
    /// Observations in raw units.
    pub dataset: Dataset,
    pub gp: GpModel,
    pub ensemble: GpEnsemble,
    pub hypers: Option<HyperMeasure>,
    pub standardizer: Standardizer,
    pub records: Vec<IterationRecord>,
    init_kernel: KernelParams,
    pending: Option<Pending>,
    last: Option<Pending>,
    started: Instant,
}

impl SoberState {
    pub fn new(config: SoberConfig, domain: DomainSpec, prior: PriorModel) -> Result<Self> {
        config.validate()?;
        domain.validate()?;
        prior.validate(&domain)?;
        let init_kernel = initial_kernel(config.kernel, &domain)?;
        let dim = domain.encoded_dim();
        let gp = GpModel::prior(init_kernel.clone(), config.initial_noise, dim)?;
        Ok(SoberState {
            pi: PiState::new(prior, config.variant),
            ensemble: GpEnsemble::single(gp.clone()),
            gp,
            hypers: None,
            dataset: Dataset::empty(dim),
            standardizer: Standardizer::fit(&[]),
            records: Vec::new(),
            init_kernel,
            pending: None,
            last: None,
            started: Instant::now(),
            config,
            domain,
        })
    }

    pub fn iteration(&self) -> usize {
        self.records.len()
    }

    fn seed(&self, purpose: u64) -> u64 {
        mix(self.config.seed, self.iteration() as u64 + 1, purpose)
    }

    /// Best observation so far, `(x, y)`.
    pub fn best(&self) -> Option<(&[f64], f64)> {
        (0..self.dataset.len())
            .max_by(|&a, &b| self.dataset.y[a].total_cmp(&self.dataset.y[b]).then(b.cmp(&a)))
            .map(|i| (self.dataset.x.row(i), self.dataset.y[i]))
    }

    fn eta_std(&self) -> f64 {
        self.pi.eta.map(|e| self.standardizer.apply(e)).unwrap_or(0.0)
    }

    fn belief(&mut self) -> Result<(EmpiricalMeasure, bool)> {
        let cfg = &self.config;
        if cfg.mode == Mode::Quadrature {
            let x = sample_prior(self.pi.initial_prior(), &self.domain, cfg.n_rec, self.seed(1));
            return Ok((EmpiricalMeasure::uniform(x)?, false));
        }
        match cfg.variant {
            PiVariant::Lfi => {
                let pc = PiConfig {
                    n_rec: cfg.n_rec,
                    batch_size: cfg.batch_size,
                    seed: self.seed(1),
                };
                let eta = self.eta_std();
                let u = update_pi(&mut self.pi, &self.ensemble, &self.domain, eta, &pc)
                    .map_err(|e| SoberError::Config(format!("belief update failed: {e}")))?;
                Ok((u.measure, u.reset))
            }
            PiVariant::Ts => {
                let pool = sample_prior(self.pi.initial_prior(), &self.domain, cfg.n_rec, self.seed(1));
                let gp = self.ensemble.leading().base();
                let anchors = deweighted_subsample(&EmpiricalMeasure::uniform(pool.clone())?, cfg.n_nys.min(pool.len()), self.seed(2))?;
                let nf = fit_nystrom(&gp.kernel, &anchors.points, cfg.n_nys, DEFAULT_OVERSAMPLE, self.seed(3))?;
                let c = ts_candidates(gp, &nf, &pool, cfg.ts_samples, self.seed(4))?;
                Ok((ts_measure(&pool, &c)?, false))
            }
        }
    }

    /// Selects the next batch.
    pub fn ask(&mut self) -> Result<BatchSelection> {
        let (measure, reset) = self.belief()?;
        let cfg = self.config.clone();
        let n = cfg.batch_size;
        let af = cfg.af_kind();
        let af_vals = normalize_af(&eval_af(af, &self.ensemble.predict(&measure.points), self.eta_std())?);
        let offset = self.dataset.y.iter().map(|y| self.standardizer.apply(*y)).fold(f64::INFINITY, f64::min);
        let weighted = MeanWeighted {
            inner: &self.ensemble,
            offset: if offset.is_finite() { offset } else { 0.0 },
        };
        let batch = if cfg.mean_weighted && !self.dataset.is_empty() {
            select(&measure, &weighted, &af_vals, &cfg, self.seed(5))?
        } else {
            select(&measure, &self.ensemble, &af_vals, &cfg, self.seed(5))?
        };
        let batch = pad_batch(batch, &measure, n, &self.domain, self.pi.initial_prior(), self.seed(6))?;
        self.pending = Some(Pending {
            batch: batch.clone(),
            measure,
            reset,
        });
        Ok(batch)
    }

    /// Adds observations, refits the surrogate and closes the iteration.
    pub fn tell(&mut self, x: &Points, y: &[f64]) -> Result<()> {
        if x.len() != y.len() {
            return Err(SoberError::DimensionMismatch {
                expected: x.len(),
                got: y.len(),
            });
        }
        if x.dim() != self.domain.encoded_dim() {
            return Err(SoberError::DimensionMismatch {
                expected: self.domain.encoded_dim(),
                got: x.dim(),
            });
        }
        if let Some(v) = y.iter().find(|v| !v.is_finite()) {
            return Err(SoberError::InvalidArgument(format!("non-finite observation {v}")));
        }
        self.dataset.x.extend(x)?;
        self.dataset.y.extend_from_slice(y);
        if let Some(m) = y.iter().cloned().reduce(f64::max) {
            self.pi.observe_eta(m);
        }
        self.pi.promote();
        self.refit()?;

        let pending = self.pending.take();
        let rec = match &pending {
            Some(p) => {
                let (mean, var) = measure_moments(&p.measure);
                IterationRecord {
                    iteration: self.records.len(),
                    batch_points: p.batch.points.to_rows(),
                    batch_weights: p.batch.weights.clone(),
                    y_batch: y.to_vec(),
                    wce: p.batch.wce,
                    objective: p.batch.objective,
                    method: p.batch.method,
                    measure_mean: mean,
                    measure_var: var,
                    evidence: None,
                    elapsed_s: 0.0,
                    reset: p.reset,
                }
            }
            None => IterationRecord {
                iteration: self.records.len(),
                batch_points: x.to_rows(),
                batch_weights: vec![1.0 / x.len().max(1) as f64; x.len()],
                y_batch: y.to_vec(),
                wce: f64::NAN,
                objective: f64::NAN,
                method: KqMethod::Rchq,
                measure_mean: Vec::new(),
                measure_var: f64::NAN,
                evidence: None,
                elapsed_s: 0.0,
                reset: false,
            },
        };
        self.last = pending;
        self.records.push(rec);
        if self.config.mode == Mode::Quadrature {
            let ev = self.estimate_evidence();
            self.records.last_mut().expect("just pushed").evidence = ev;
        }
        self.records.last_mut().expect("just pushed").elapsed_s = self.started.elapsed().as_secs_f64().max(1e-9);
        Ok(())
    }

    fn refit(&mut self) -> Result<()> {
        self.standardizer = Standardizer::fit(&self.dataset.y);
        let ys: Vec<f64> = self.dataset.y.iter().map(|v| self.standardizer.apply(*v)).collect();
        let ds = self.dataset.with_y(ys)?;
        let it = self.iteration();
        let full = it % self.config.refit_every == 0;
        let gp = fit_surrogate(&ds, Some(&self.gp), &self.init_kernel, &self.config, full, self.seed(7))?;
        self.gp = gp;
        self.ensemble = GpEnsemble::single(self.gp.clone());
        self.hypers = None;
        if let (Some(fc), true) = (&self.config.fbgp, ds.len() >= 2) {
            let dim = HyperPrior::dim_for(self.config.kernel, ds.x.dim());
            let prior = HyperPrior::standard(dim);
            let (hm, _) = match fc.method {
                FbgpMethod::Mcmc => {
                    let opts = McmcOptions {
                        burn_in: fc.burn_in,
                        ..Default::default()
                    };
                    qd_mcmc(&ds, &prior, self.config.kernel, fc.m_samples, fc.h, None, &opts, self.seed(8))?
                }
                FbgpMethod::Bq => qd_bq(&ds, &prior, self.config.kernel, fc.m_samples, fc.h, self.seed(8))?,
            };
            let hm = if matches!(self.config.af_kind(), AfKind::Ei | AfKind::MesFitbo) {
                with_etas(hm, &ds.y, self.seed(9))?
            } else {
                hm
            };
            match hm.ensemble(&ds) {
                Ok((ens, _)) => {
                    self.ensemble = ens;
                    self.hypers = Some(hm);
                }
                Err(e) => log::warn!("FBGP ensemble failed ({e}); keeping MLE GP"),
            }
        }
        Ok(())
    }

    /// Evidence `w_bᵀ m(X_b)` with variance from the wce form under the
    /// posterior covariance, in observation units. Needs a completed
    /// iteration.
    pub fn estimate_evidence(&self) -> Option<(f64, f64)> {
        let p = self.last.as_ref()?;
        let m = self.ensemble.mean(&p.batch.points);
        let mean: f64 = m.iter().zip(&p.batch.weights).map(|(a, w)| a * w).sum();
        let var = wce_estimate(&self.ensemble, &p.batch.points, &p.batch.weights, &p.measure, false).max(0.0);
        let s = self.standardizer;
        Some((s.invert(mean), var * s.scale * s.scale))
    }

    /// The most recent belief measure (after a completed ask).
    pub fn last_measure(&self) -> Option<&EmpiricalMeasure> {
        self.last.as_ref().or(self.pending.as_ref()).map(|p| &p.measure)
    }
}

fn select<K: Covariance + ?Sized>(
    m: &EmpiricalMeasure,
    kernel: &K,
    af_vals: &[f64],
    cfg: &SoberConfig,
    seed: u64,
) -> Result<BatchSelection> {
    let n = cfg.batch_size;
    let anchors = deweighted_subsample(m, cfg.n_nys.min(m.len()), seed)?;
    let nf = fit_nystrom(kernel, &anchors.points, (n - 1).max(1), DEFAULT_OVERSAMPLE, seed.wrapping_add(1))?;
    if cfg.autokq {
        let opts = AutoKqOptions {
            thinning: true,
            pool: cfg.thinning_pool,
        };
        auto_kq_select(m, kernel, &nf, af_vals, n, seed.wrapping_add(2), &opts)
    } else {
        objective_rchq(m, kernel, &nf, af_vals, n, seed.wrapping_add(2))
    }
}

/// Tops a short batch up to `n` points with zero weight: first the heaviest
/// unused measure points, then prior draws.
fn pad_batch(
    mut b: BatchSelection,
    m: &EmpiricalMeasure,
    n: usize,
    domain: &DomainSpec,
    prior: &PriorModel,
    seed: u64,
) -> Result<BatchSelection> {
    if b.points.len() >= n {
        return Ok(b);
    }
    let mut order: Vec<usize> = (0..m.len()).filter(|i| !b.indices.contains(i)).collect();
    order.sort_by(|&a, &c| m.weights[c].total_cmp(&m.weights[a]).then(a.cmp(&c)));
    for i in order.into_iter().filter(|&i| m.weights[i] > 0.0) {
        if b.points.len() >= n {
            break;
        }
        b.points.push(m.points.row(i))?;
        b.indices.push(i);
        b.weights.push(0.0);
    }
    if b.points.len() < n {
        let extra = sample_prior(prior, domain, n - b.points.len(), seed);
        for r in extra.rows() {
            b.points.push(r)?;
            b.indices.push(usize::MAX);
            b.weights.push(0.0);
        }
    }
    Ok(b)
}

/// Black-box objective over encoded points.
pub trait Oracle {
    fn evaluate(&mut self, x: &Points) -> Result<Vec<f64>>;
}

impl<F: FnMut(&Points) -> Result<Vec<f64>>> Oracle for F {
    fn evaluate(&mut self, x: &Points) -> Result<Vec<f64>> {
        self(x)
    }
}

#[derive(Debug)]
pub struct RunOutput {
    pub records: Vec<IterationRecord>,
    pub best: Option<(Vec<f64>, f64)>,
    /// Set when the loop stopped early.
    pub error: Option<String>,
}

/// `iterations` rounds of ask → evaluate → tell. Oracle and solver errors
/// end the loop and are reported in the output.
pub fn run_loop<O: Oracle + ?Sized>(
    config: SoberConfig,
    domain: DomainSpec,
    prior: PriorModel,
    oracle: &mut O,
    iterations: usize,
) -> Result<(RunOutput, SoberState)> {
    let mut st = SoberState::new(config, domain, prior)?;
    let mut error = None;
    for _ in 0..iterations {
        let step = st.ask().and_then(|b| {
            let y = oracle.evaluate(&b.points)?;
            st.tell(&b.points, &y)
        });
        if let Err(e) = step {
            log::error!("stopping after {} iterations: {e}", st.iteration());
            error = Some(e.to_string());
            break;
        }
    }
    let out = RunOutput {
        records: st.records.clone(),
        best: st.best().map(|(x, y)| (x.to_vec(), y)),
        error,
    };
    Ok((out, st))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_cfg(n: usize) -> SoberConfig {
        SoberConfig {
            n_rec: 500,
            n_nys: 100,
            batch_size: n,
            seed: 3,
            ..Default::default()
        }
    }

    #[test]
    fn moments_of_symmetric_pair() {
        let m = EmpiricalMeasure::uniform(Points::from_rows(&[[-1.0], [1.0]]).unwrap()).unwrap();
        let (mean, var) = measure_moments(&m);
        assert_eq!(mean, vec![0.0]);
        assert!((var - 2.0).abs() < 1e-12);
    }

    #[test]
    fn zero_iterations_gives_no_records() {
        let d = DomainSpec::continuous_box(vec![(0.0, 1.0)]).unwrap();
        let mut f = |x: &Points| Ok(x.rows().map(|r| r[0]).collect());
        let (out, _) = run_loop(small_cfg(4), d.clone(), PriorModel::uniform(&d), &mut f, 0).unwrap();
        assert!(out.records.is_empty());
    }

    #[test]
    fn first_batch_is_spread_and_deterministic() {
        let d = DomainSpec::continuous_box(vec![(0.0, 1.0), (0.0, 1.0)]).unwrap();
        let mut a = SoberState::new(small_cfg(8), d.clone(), PriorModel::uniform(&d)).unwrap();
        let mut b = SoberState::new(small_cfg(8), d.clone(), PriorModel::uniform(&d)).unwrap();
        let ba = a.ask().unwrap();
        assert_eq!(ba.points, b.ask().unwrap().points);
        assert_eq!(ba.points.len(), 8);
        for i in 0..8 {
            for j in 0..i {
                let d2: f64 = ba.points.row(i).iter().zip(ba.points.row(j)).map(|(p, q)| (p - q).powi(2)).sum();
                assert!(d2 > 0.0);
            }
        }
    }

    #[test]
    fn oracle_error_halts_gracefully() {
        let d = DomainSpec::continuous_box(vec![(0.0, 1.0)]).unwrap();
        let mut calls = 0;
        let mut f = |x: &Points| {
            calls += 1;
            if calls > 1 {
                Err(SoberError::Oracle("boom".into()))
            } else {
                Ok(x.rows().map(|r| r[0]).collect())
            }
        };
        let (out, _) = run_loop(small_cfg(4), d.clone(), PriorModel::uniform(&d), &mut f, 3).unwrap();
        assert_eq!(out.records.len(), 1);
        assert!(out.error.unwrap().contains("boom"));
    }

    #[test]
    fn tell_rejects_nan_and_handles_duplicates() {
        let d = DomainSpec::continuous_box(vec![(0.0, 1.0)]).unwrap();
        let mut s = SoberState::new(small_cfg(4), d.clone(), PriorModel::uniform(&d)).unwrap();
        let x = Points::from_rows(&[[0.5], [0.5], [0.2]]).unwrap();
        assert!(s.tell(&x, &[1.0, f64::NAN, 0.0]).is_err());
        let mut s = SoberState::new(small_cfg(4), d.clone(), PriorModel::uniform(&d)).unwrap();
        s.tell(&x, &[1.0, 1.0, 0.0]).unwrap();
        assert_eq!(s.dataset.len(), 3);
    }
}
