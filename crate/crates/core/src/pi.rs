//! Belief over the maximiser: likelihood-free (LFI) and Thompson-sampling
//! constructions, and the sample / reweight / refit cycle for the prior.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Result, SoberError};
use crate::gp::GpModel;
use crate::kernels::{Covariance, KernelParams, NystromFeatures};
use crate::measures::{
    importance_weights_log, mle_update_discrete, normal_cdf, normalize, sample_prior, wkde_fit, ContinuousPrior,
    DomainSpec, EmpiricalMeasure, PriorModel,
};
use crate::points::Points;
use crate::surrogate::{EnsemblePrediction, GpEnsemble};

const VAR_FLOOR: f64 = 1e-12;
/// The prior is left unchanged when the importance weights are this close
/// to uniform (`N_eff / N`).
pub const REFIT_NEFF_RATIO: f64 = 0.9;
const TS_CHUNK: usize = 256;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PiVariant {
    #[default]
    Lfi,
    Ts,
}

#[derive(Clone, Debug)]
pub struct PiState {
    /// Current proposal `π'`.
    pub prior: PriorModel,
    initial: PriorModel,
    /// Refitted prior awaiting [`PiState::promote`].
    pub pending: Option<PriorModel>,
    /// Running maximum of the threshold, in observation units.
    pub eta: Option<f64>,
    pub variant: PiVariant,
    pub iteration: usize,
}

impl PiState {
    pub fn new(prior: PriorModel, variant: PiVariant) -> Self {
        PiState {
            initial: prior.clone(),
            prior,
            pending: None,
            eta: None,
            variant,
            iteration: 0,
        }
    }

    pub fn initial_prior(&self) -> &PriorModel {
        &self.initial
    }

    pub fn reset(&mut self) {
        self.prior = self.initial.clone();
        self.pending = None;
    }

    /// `π' ← π`.
    pub fn promote(&mut self) {
        if let Some(p) = self.pending.take() {
            self.prior = p;
        }
        self.iteration += 1;
    }

    /// Raises the running threshold to `candidate` when larger.
    pub fn observe_eta(&mut self, candidate: f64) -> f64 {
        let e = match self.eta {
            Some(e) if e >= candidate => e,
            _ => candidate,
        };
        self.eta = Some(e);
        e
    }
}

/// `Σ_h w_h Φ((m_h(x) − η_h) / √C_h(x,x))`; members without their own
/// threshold use `eta`.
pub fn lfi_likelihood(pred: &EnsemblePrediction, eta: f64) -> Vec<f64> {
    let n = pred.n_points();
    let mut out = vec![0.0; n];
    for h in 0..pred.n_members() {
        let w = pred.weights[h];
        if w <= 0.0 {
            continue;
        }
        let e = pred.etas[h].unwrap_or(eta);
        for (j, o) in out.iter_mut().enumerate() {
            let sd = pred.vars[(h, j)].max(VAR_FLOOR).sqrt();
            *o += w * normal_cdf((pred.means[(h, j)] - e) / sd);
        }
    }
    out
}

#[derive(Clone, Debug)]
pub struct PiConfig {
    /// Size `N` of the empirical measure.
    pub n_rec: usize,
    /// Batch size `n`; fewer positive weights than this triggers a reset.
    pub batch_size: usize,
    pub seed: u64,
}

#[derive(Clone, Debug)]
pub struct PiUpdate {
    pub measure: EmpiricalMeasure,
    /// The proposal was reset to the initial prior.
    pub reset: bool,
    /// The proposal was refitted (stored in `PiState::pending`).
    pub refitted: bool,
}

fn weigh(
    prior: &PriorModel,
    domain: &DomainSpec,
    ens: &GpEnsemble,
    eta: f64,
    n_rec: usize,
    seed: u64,
) -> (Points, Result<Vec<f64>>) {
    let x = sample_prior(prior, domain, n_rec, seed);
    let l = lfi_likelihood(&ens.predict(&x), eta);
    let lp = prior.log_density_all(domain, &x);
    let w = importance_weights_log(&l, &lp);
    (x, w)
}

fn enough(w: &Result<Vec<f64>>, n: usize) -> bool {
    matches!(w, Ok(w) if w.iter().filter(|v| **v > 0.0).count() >= n.min(w.len()))
}

/// One pass of the sampling cycle: draw from `π'`, weight by the LFI
/// likelihood, refit the proposal to the weighted sample, redraw and
/// reweight. Enumerable domains weight every candidate and keep the prior.
pub fn update_pi(state: &mut PiState, ens: &GpEnsemble, domain: &DomainSpec, eta: f64, cfg: &PiConfig) -> Result<PiUpdate> {
    if let Some(c) = &domain.candidates {
        let x = domain.encode_all(c);
        let mut l = lfi_likelihood(&ens.predict(&x), eta);
        let positive = l.iter().filter(|v| **v > 0.0).count();
        if positive < cfg.batch_size.min(l.len()) {
            let top = l.iter().cloned().fold(0.0, f64::max).max(1.0);
            l.iter_mut().for_each(|v| *v += 1e-12 * top);
        }
        return Ok(PiUpdate {
            measure: EmpiricalMeasure::new(x, normalize(l))?,
            reset: false,
            refitted: false,
        });
    }

    let mut reset = false;
    let (mut x, mut w) = weigh(&state.prior, domain, ens, eta, cfg.n_rec, cfg.seed);
    if !enough(&w, cfg.batch_size) {
        state.reset();
        reset = true;
        (x, w) = weigh(&state.prior, domain, ens, eta, cfg.n_rec, cfg.seed);
        if !enough(&w, cfg.batch_size) {
            return Err(SoberError::DegenerateMeasure(
                "too few positive weights even under the initial prior".into(),
            ));
        }
    }
    let m0 = EmpiricalMeasure::new(x, w?)?;
    if m0.effective_size() >= REFIT_NEFF_RATIO * m0.len() as f64 {
        state.pending = None;
        return Ok(PiUpdate {
            measure: m0,
            reset,
            refitted: false,
        });
    }

    let mut new_prior = if domain.categorical.is_empty() && domain.binary == 0 {
        state.prior.clone()
    } else {
        mle_update_discrete(&state.prior, &m0, domain)
    };
    if domain.n_continuous() > 0 {
        new_prior.continuous = ContinuousPrior::Kde(wkde_fit(&m0, domain, cfg.seed ^ 0x9e37)?);
    }
    let (x1, w1) = weigh(&new_prior, domain, ens, eta, cfg.n_rec, cfg.seed.wrapping_add(1));
    if !enough(&w1, cfg.batch_size) {
        state.pending = None;
        return Ok(PiUpdate {
            measure: m0,
            reset,
            refitted: false,
        });
    }
    state.pending = Some(new_prior);
    Ok(PiUpdate {
        measure: EmpiricalMeasure::new(x1, w1?)?,
        reset,
        refitted: true,
    })
}

/// Pool indices of the argmax of `n_functions` approximate posterior
/// samples. Samples are drawn pathwise: a prior draw from the Nyström
/// features of `kernel`, corrected through the exact data update.
pub fn ts_candidates(
    gp: &GpModel,
    nystrom: &NystromFeatures,
    pool: &Points,
    n_functions: usize,
    seed: u64,
) -> Result<Vec<usize>> {
    if pool.is_empty() {
        return Err(SoberError::InvalidArgument("empty candidate pool".into()));
    }
    let kernel: &KernelParams = &gp.kernel;
    let scale: Vec<f64> = nystrom.eigenvalues.iter().map(|l| 1.0 / l.sqrt()).collect();
    let features = |x: &Points| {
        let mut f = nystrom.eval(kernel, x);
        for (j, s) in scale.iter().enumerate() {
            f.row_mut(j).scale_mut(*s);
        }
        f
    };
    let phi_pool = features(pool);
    let obs = &gp.dataset.x;
    let n_obs = gp.n_obs();
    let (phi_obs, k_pool_obs) = if n_obs > 0 {
        (features(obs), kernel.gram(pool, obs))
    } else {
        (DMatrix::zeros(nystrom.len(), 0), DMatrix::zeros(pool.len(), 0))
    };
    let y = DVector::from_column_slice(&gp.dataset.y);
    let noise_sd = gp.noise.sqrt();
    let r = nystrom.len();

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(n_functions);
    let mut done = 0;
    while done < n_functions {
        let s = TS_CHUNK.min(n_functions - done);
        let xi = DMatrix::<f64>::from_fn(r, s, |_, _| StandardNormal.sample(&mut rng));
        let mut f = phi_pool.transpose() * &xi;
        if n_obs > 0 {
            let eps = DMatrix::from_fn(n_obs, s, |_, _| noise_sd * Distribution::<f64>::sample(&StandardNormal, &mut rng));
            let mut resid = phi_obs.transpose() * &xi + eps;
            for c in 0..s {
                let mut col = resid.column_mut(c);
                col.neg_mut();
                col += &y;
            }
            f += &k_pool_obs * gp.solve(&resid);
        }
        for c in 0..s {
            let col = f.column(c);
            let best = (0..col.len())
                .max_by(|&a, &b| col[a].total_cmp(&col[b]).then(b.cmp(&a)))
                .expect("non-empty pool");
            out.push(best);
        }
        done += s;
    }
    Ok(out)
}

/// Uniform measure over TS argmaxes, duplicates merged with summed weight.
pub fn ts_measure(pool: &Points, candidates: &[usize]) -> Result<EmpiricalMeasure> {
    if candidates.is_empty() {
        return Err(SoberError::DegenerateMeasure("no TS candidates".into()));
    }
    let mut counts: std::collections::BTreeMap<usize, usize> = std::collections::BTreeMap::new();
    for &c in candidates {
        *counts.entry(c).or_default() += 1;
    }
    let idx: Vec<usize> = counts.keys().cloned().collect();
    let w: Vec<f64> = counts.values().map(|&c| c as f64).collect();
    EmpiricalMeasure::from_unnormalized(pool.select(&idx), w)
}
