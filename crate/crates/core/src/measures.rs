//! Mixed domains, block-independent priors and weighted empirical measures.

use nalgebra::{DMatrix, DVector};
use rand::distr::weighted::WeightedIndex;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Result, SoberError};
use crate::points::Points;

pub mod ingest;

/// Cap on KDE centres; larger measures are systematically resampled.
pub const KDE_MAX_CENTERS: usize = 2000;
pub const DISCRETE_CLAMP: f64 = 1e-4;
const KDE_REJECTION_TRIES: usize = 20;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MixedPoint {
    pub continuous: Vec<f64>,
    pub categorical: Vec<usize>,
    pub binary: Vec<bool>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, Default)]
pub struct DomainSpec {
    /// `(lower, upper)` per continuous dimension.
    pub continuous: Vec<(f64, f64)>,
    /// Class count per categorical dimension.
    pub categorical: Vec<usize>,
    pub binary: usize,
    /// Present when every admissible point is known up front.
    #[serde(default)]
    pub candidates: Option<Vec<MixedPoint>>,
}

impl DomainSpec {
    pub fn new(continuous: Vec<(f64, f64)>, categorical: Vec<usize>, binary: usize) -> Result<Self> {
        let d = DomainSpec {
            continuous,
            categorical,
            binary,
            candidates: None,
        };
        d.validate()?;
        Ok(d)
    }

    pub fn continuous_box(bounds: Vec<(f64, f64)>) -> Result<Self> {
        DomainSpec::new(bounds, Vec::new(), 0)
    }

    pub fn with_candidates(mut self, candidates: Vec<MixedPoint>) -> Result<Self> {
        if candidates.is_empty() {
            return Err(SoberError::InvalidDomain("empty candidate list".into()));
        }
        for c in &candidates {
            self.check(c)?;
        }
        self.candidates = Some(candidates);
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        if self.continuous.is_empty() && self.categorical.is_empty() && self.binary == 0 {
            return Err(SoberError::InvalidDomain("domain has no dimensions".into()));
        }
        for (lo, hi) in &self.continuous {
            if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                return Err(SoberError::InvalidDomain(format!("bad bounds ({lo}, {hi})")));
            }
        }
        if self.categorical.iter().any(|&c| c < 1) {
            return Err(SoberError::InvalidDomain("categorical dimension with no classes".into()));
        }
        Ok(())
    }

    pub fn is_enumerable(&self) -> bool {
        self.candidates.is_some()
    }

    pub fn n_continuous(&self) -> usize {
        self.continuous.len()
    }

    pub fn encoded_dim(&self) -> usize {
        self.continuous.len() + self.categorical.iter().sum::<usize>() + self.binary
    }

    /// Offset of each categorical one-hot block in the encoding.
    pub fn categorical_offsets(&self) -> Vec<usize> {
        let mut off = self.continuous.len();
        self.categorical
            .iter()
            .map(|c| {
                let o = off;
                off += c;
                o
            })
            .collect()
    }

    pub fn binary_offset(&self) -> usize {
        self.continuous.len() + self.categorical.iter().sum::<usize>()
    }

    pub fn check(&self, p: &MixedPoint) -> Result<()> {
        if p.continuous.len() != self.continuous.len() {
            return Err(SoberError::DimensionMismatch {
                expected: self.continuous.len(),
                got: p.continuous.len(),
            });
        }
        if p.categorical.len() != self.categorical.len() {
            return Err(SoberError::DimensionMismatch {
                expected: self.categorical.len(),
                got: p.categorical.len(),
            });
        }
        if p.binary.len() != self.binary {
            return Err(SoberError::DimensionMismatch {
                expected: self.binary,
                got: p.binary.len(),
            });
        }
        for (x, (lo, hi)) in p.continuous.iter().zip(&self.continuous) {
            if !(x >= lo && x <= hi) {
                return Err(SoberError::InvalidDomain(format!("{x} outside [{lo}, {hi}]")));
            }
        }
        for (c, k) in p.categorical.iter().zip(&self.categorical) {
            if c >= k {
                return Err(SoberError::InvalidDomain(format!("class {c} >= {k}")));
            }
        }
        Ok(())
    }

    pub fn encode(&self, p: &MixedPoint) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.encoded_dim());
        out.extend_from_slice(&p.continuous);
        for (c, k) in p.categorical.iter().zip(&self.categorical) {
            out.extend((0..*k).map(|j| if j == *c { 1.0 } else { 0.0 }));
        }
        out.extend(p.binary.iter().map(|b| if *b { 1.0 } else { 0.0 }));
        out
    }

    pub fn encode_all(&self, ps: &[MixedPoint]) -> Points {
        let mut out = Points::with_capacity(self.encoded_dim(), ps.len());
        for p in ps {
            out.push(&self.encode(p)).expect("encoded width");
        }
        out
    }

    /// Inverse of [`DomainSpec::encode`]; one-hot blocks decode to their
    /// argmax and bits round at 0.5.
    pub fn decode(&self, x: &[f64]) -> Result<MixedPoint> {
        if x.len() != self.encoded_dim() {
            return Err(SoberError::DimensionMismatch {
                expected: self.encoded_dim(),
                got: x.len(),
            });
        }
        let nc = self.continuous.len();
        let categorical = self
            .categorical_offsets()
            .iter()
            .zip(&self.categorical)
            .map(|(&o, &k)| {
                (0..k)
                    .max_by(|&a, &b| x[o + a].total_cmp(&x[o + b]).then(b.cmp(&a)))
                    .unwrap_or(0)
            })
            .collect();
        let bo = self.binary_offset();
        Ok(MixedPoint {
            continuous: x[..nc].to_vec(),
            categorical,
            binary: x[bo..].iter().map(|v| *v >= 0.5).collect(),
        })
    }

    pub fn widths(&self) -> Vec<f64> {
        self.continuous.iter().map(|(l, h)| h - l).collect()
    }
}

/// Weighted point set; weights are non-negative and sum to one.
#[derive(Clone, Debug, PartialEq)]
pub struct EmpiricalMeasure {
    pub points: Points,
    pub weights: Vec<f64>,
}

impl EmpiricalMeasure {
    pub fn new(points: Points, weights: Vec<f64>) -> Result<Self> {
        if points.is_empty() {
            return Err(SoberError::DegenerateMeasure("no points".into()));
        }
        if points.len() != weights.len() {
            return Err(SoberError::DimensionMismatch {
                expected: points.len(),
                got: weights.len(),
            });
        }
        if weights.iter().any(|w| !(*w >= 0.0 && w.is_finite())) {
            return Err(SoberError::DegenerateMeasure("negative or non-finite weight".into()));
        }
        let s: f64 = weights.iter().sum();
        if (s - 1.0).abs() > 1e-12 {
            return Err(SoberError::DegenerateMeasure(format!("weights sum to {s}")));
        }
        Ok(EmpiricalMeasure { points, weights })
    }

    /// Normalizes `weights` before construction.
    pub fn from_unnormalized(points: Points, weights: Vec<f64>) -> Result<Self> {
        let s: f64 = weights.iter().sum();
        if !(s > 0.0 && s.is_finite()) {
            return Err(SoberError::DegenerateMeasure("weights have no positive mass".into()));
        }
        EmpiricalMeasure::new(points, normalize(weights))
    }

    pub fn uniform(points: Points) -> Result<Self> {
        let n = points.len();
        EmpiricalMeasure::from_unnormalized(points, vec![1.0; n])
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn n_positive(&self) -> usize {
        self.weights.iter().filter(|w| **w > 0.0).count()
    }

    pub fn effective_size(&self) -> f64 {
        1.0 / self.weights.iter().map(|w| w * w).sum::<f64>()
    }

    pub fn integrate(&self, values: &[f64]) -> f64 {
        self.weights.iter().zip(values).map(|(w, v)| w * v).sum()
    }
}

/// Divides by the sum; the result sums to one within round-off.
pub(crate) fn normalize(mut w: Vec<f64>) -> Vec<f64> {
    let s: f64 = w.iter().sum();
    w.iter_mut().for_each(|v| *v /= s);
    // absorb round-off so the sum-to-one check is tight
    let s2: f64 = w.iter().sum();
    if s2 != 1.0 {
        if let Some(i) = (0..w.len()).max_by(|&a, &b| w[a].total_cmp(&w[b])) {
            w[i] += 1.0 - s2;
        }
    }
    w
}

/// Diagonal-bandwidth Gaussian KDE over the continuous block.
#[derive(Clone, Debug, PartialEq)]
pub struct WeightedKde {
    pub centers: Points,
    pub weights: Vec<f64>,
    pub bandwidth: Vec<f64>,
    /// Log of the mixture mass inside the domain box; sampling is
    /// truncated to the box so the density is renormalized by it.
    pub log_mass: f64,
}

impl WeightedKde {
    pub fn log_density(&self, x: &[f64]) -> f64 {
        self.evaluator().eval(x, &mut Vec::new())
    }

    fn evaluator(&self) -> KdeEval<'_> {
        let log_norm: f64 = self
            .bandwidth
            .iter()
            .map(|h| -(h * (2.0 * std::f64::consts::PI).sqrt()).ln())
            .sum();
        let live: Vec<usize> = (0..self.weights.len()).filter(|&i| self.weights[i] > 0.0).collect();
        KdeEval {
            kde: self,
            log_w: live.iter().map(|&i| self.weights[i].ln()).collect(),
            live,
            inv: self.bandwidth.iter().map(|h| 1.0 / h).collect(),
            offset: log_norm - self.log_mass,
        }
    }

    pub fn mean(&self) -> Vec<f64> {
        let d = self.bandwidth.len();
        let mut m = vec![0.0; d];
        for (c, w) in self.centers.rows().zip(&self.weights) {
            for k in 0..d {
                m[k] += w * c[k];
            }
        }
        m
    }

    fn sample_one<R: Rng>(&self, bounds: &[(f64, f64)], index: &WeightedIndex<f64>, rng: &mut R) -> Vec<f64> {
        let d = self.bandwidth.len();
        let mut last = Vec::new();
        for _ in 0..KDE_REJECTION_TRIES {
            let c = self.centers.row(index.sample(rng));
            last = (0..d)
                .map(|k| {
                    let z: f64 = StandardNormal.sample(rng);
                    c[k] + self.bandwidth[k] * z
                })
                .collect();
            if last.iter().zip(bounds).all(|(v, (lo, hi))| v >= lo && v <= hi) {
                return last;
            }
        }
        last.iter().zip(bounds).map(|(v, (lo, hi))| v.clamp(*lo, *hi)).collect()
    }
}

/// Per-call constants of [`WeightedKde::log_density`], hoisted for batches.
struct KdeEval<'a> {
    kde: &'a WeightedKde,
    live: Vec<usize>,
    log_w: Vec<f64>,
    inv: Vec<f64>,
    offset: f64,
}

impl KdeEval<'_> {
    fn eval(&self, x: &[f64], terms: &mut Vec<f64>) -> f64 {
        terms.clear();
        for (&i, lw) in self.live.iter().zip(&self.log_w) {
            let c = self.kde.centers.row(i);
            let mut s = 0.0;
            for k in 0..self.inv.len() {
                let t = (x[k] - c[k]) * self.inv[k];
                s += t * t;
            }
            terms.push(lw - 0.5 * s);
        }
        log_sum_exp(terms) + self.offset
    }
}

fn box_log_mass(kde: &WeightedKde, bounds: &[(f64, f64)]) -> f64 {
    let mass: f64 = kde
        .centers
        .rows()
        .zip(&kde.weights)
        .map(|(c, w)| {
            w * bounds
                .iter()
                .zip(&kde.bandwidth)
                .enumerate()
                .map(|(k, ((lo, hi), h))| normal_cdf((hi - c[k]) / h) - normal_cdf((lo - c[k]) / h))
                .product::<f64>()
        })
        .sum();
    mass.max(f64::MIN_POSITIVE).ln()
}

pub fn normal_cdf(z: f64) -> f64 {
    0.5 * libm::erfc(-z / std::f64::consts::SQRT_2)
}

pub(crate) fn log_sum_exp(v: &[f64]) -> f64 {
    let m = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !m.is_finite() {
        return m;
    }
    m + v.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

#[derive(Clone, Debug, PartialEq)]
pub enum ContinuousPrior {
    Uniform,
    /// Independent Gaussians, not truncated to the bounds.
    Gaussian { mean: Vec<f64>, std: Vec<f64> },
    Kde(WeightedKde),
}

/// Independent continuous, categorical and Bernoulli blocks.
#[derive(Clone, Debug, PartialEq)]
pub struct PriorModel {
    pub continuous: ContinuousPrior,
    pub categorical: Vec<Vec<f64>>,
    pub bernoulli: Vec<f64>,
}

impl PriorModel {
    /// Uniform box, equal class weights, fair coins.
    pub fn uniform(domain: &DomainSpec) -> Self {
        PriorModel {
            continuous: ContinuousPrior::Uniform,
            categorical: domain.categorical.iter().map(|&k| vec![1.0 / k as f64; k]).collect(),
            bernoulli: vec![0.5; domain.binary],
        }
    }

    pub fn gaussian(domain: &DomainSpec, mean: Vec<f64>, std: Vec<f64>) -> Result<Self> {
        if mean.len() != domain.n_continuous() || std.len() != domain.n_continuous() {
            return Err(SoberError::DimensionMismatch {
                expected: domain.n_continuous(),
                got: mean.len(),
            });
        }
        if std.iter().any(|s| !(*s > 0.0)) {
            return Err(SoberError::InvalidArgument("gaussian std must be positive".into()));
        }
        Ok(PriorModel {
            continuous: ContinuousPrior::Gaussian { mean, std },
            ..PriorModel::uniform(domain)
        })
    }

    pub fn validate(&self, domain: &DomainSpec) -> Result<()> {
        if self.categorical.len() != domain.categorical.len() || self.bernoulli.len() != domain.binary {
            return Err(SoberError::InvalidArgument("prior does not match domain".into()));
        }
        for (p, k) in self.categorical.iter().zip(&domain.categorical) {
            let s: f64 = p.iter().sum();
            if p.len() != *k || p.iter().any(|v| *v < 0.0) || (s - 1.0).abs() > 1e-9 {
                return Err(SoberError::InvalidArgument("categorical weights not normalized".into()));
            }
        }
        if self.bernoulli.iter().any(|p| !(*p > 0.0 && *p < 1.0)) {
            return Err(SoberError::InvalidArgument("bernoulli weight outside (0, 1)".into()));
        }
        Ok(())
    }

    /// Log-density of an encoded point with respect to Lebesgue × counting
    /// measure.
    pub fn log_density(&self, domain: &DomainSpec, x: &[f64]) -> f64 {
        let nc = domain.n_continuous();
        let lp = match &self.continuous {
            ContinuousPrior::Uniform => -domain.widths().iter().map(|w| w.ln()).sum::<f64>(),
            ContinuousPrior::Gaussian { mean, std } => (0..nc)
                .map(|k| {
                    let z = (x[k] - mean[k]) / std[k];
                    -0.5 * z * z - (std[k] * (2.0 * std::f64::consts::PI).sqrt()).ln()
                })
                .sum(),
            ContinuousPrior::Kde(kde) => kde.log_density(&x[..nc]),
        };
        lp + self.discrete_log_density(domain, x)
    }

    fn discrete_log_density(&self, domain: &DomainSpec, x: &[f64]) -> f64 {
        let mut lp = 0.0;
        for ((o, k), p) in domain.categorical_offsets().iter().zip(&domain.categorical).zip(&self.categorical) {
            let c = (0..*k).find(|&j| x[o + j] >= 0.5).unwrap_or(0);
            lp += p[c].ln();
        }
        let bo = domain.binary_offset();
        for (j, p) in self.bernoulli.iter().enumerate() {
            lp += if x[bo + j] >= 0.5 { p.ln() } else { (1.0 - p).ln() };
        }
        lp
    }

    pub fn log_density_all(&self, domain: &DomainSpec, x: &Points) -> Vec<f64> {
        let ContinuousPrior::Kde(kde) = &self.continuous else {
            return x.rows().map(|r| self.log_density(domain, r)).collect();
        };
        let nc = domain.n_continuous();
        let ev = kde.evaluator();
        let mut terms = Vec::with_capacity(ev.live.len());
        x.rows()
            .map(|r| ev.eval(&r[..nc], &mut terms) + self.discrete_log_density(domain, r))
            .collect()
    }

    pub fn sample<R: Rng>(&self, domain: &DomainSpec, n: usize, rng: &mut R) -> Points {
        let nc = domain.n_continuous();
        let mut out = Points::with_capacity(domain.encoded_dim(), n);
        let kde_index = match &self.continuous {
            ContinuousPrior::Kde(k) => Some(WeightedIndex::new(&k.weights).expect("kde weights")),
            _ => None,
        };
        let cat_index: Vec<WeightedIndex<f64>> = self
            .categorical
            .iter()
            .map(|p| WeightedIndex::new(p).expect("categorical weights"))
            .collect();
        let mut row = vec![0.0; domain.encoded_dim()];
        for _ in 0..n {
            row.iter_mut().for_each(|v| *v = 0.0);
            match &self.continuous {
                ContinuousPrior::Uniform => {
                    for (k, (lo, hi)) in domain.continuous.iter().enumerate() {
                        row[k] = rng.random_range(*lo..*hi);
                    }
                }
                ContinuousPrior::Gaussian { mean, std } => {
                    for k in 0..nc {
                        let z: f64 = StandardNormal.sample(rng);
                        row[k] = mean[k] + std[k] * z;
                    }
                }
                ContinuousPrior::Kde(kde) => {
                    let s = kde.sample_one(&domain.continuous, kde_index.as_ref().unwrap(), rng);
                    row[..nc].copy_from_slice(&s);
                }
            }
            for ((o, _), idx) in domain.categorical_offsets().iter().zip(&domain.categorical).zip(&cat_index) {
                row[o + idx.sample(rng)] = 1.0;
            }
            let bo = domain.binary_offset();
            for (j, p) in self.bernoulli.iter().enumerate() {
                row[bo + j] = if rng.random::<f64>() < *p { 1.0 } else { 0.0 };
            }
            out.push(&row).expect("row width");
        }
        out
    }
}

/// `N` i.i.d. prior draws in the encoded space, or every candidate when the
/// domain is enumerable.
pub fn sample_prior(prior: &PriorModel, domain: &DomainSpec, n: usize, seed: u64) -> Points {
    if let Some(c) = &domain.candidates {
        return domain.encode_all(c);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    prior.sample(domain, n, &mut rng)
}

/// `w ∝ L / π'`, normalized.
pub fn importance_weights(l_vals: &[f64], prior_density: &[f64]) -> Result<Vec<f64>> {
    if l_vals.len() != prior_density.len() {
        return Err(SoberError::DimensionMismatch {
            expected: l_vals.len(),
            got: prior_density.len(),
        });
    }
    if l_vals.iter().any(|l| !(*l >= 0.0)) || prior_density.iter().any(|p| !(*p > 0.0)) {
        return Err(SoberError::InvalidArgument("likelihood must be >= 0 and density > 0".into()));
    }
    let log_pi: Vec<f64> = prior_density.iter().map(|p| p.ln()).collect();
    importance_weights_log(l_vals, &log_pi)
}

/// As [`importance_weights`] with the prior given as a log-density.
pub fn importance_weights_log(l_vals: &[f64], log_prior: &[f64]) -> Result<Vec<f64>> {
    if l_vals.iter().all(|l| *l <= 0.0) {
        return Err(SoberError::DegenerateMeasure("likelihood is zero everywhere".into()));
    }
    let logs: Vec<f64> = l_vals
        .iter()
        .zip(log_prior)
        .map(|(l, lp)| if *l > 0.0 { l.ln() - lp } else { f64::NEG_INFINITY })
        .collect();
    let m = logs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    Ok(normalize(logs.iter().map(|v| (v - m).exp()).collect()))
}

/// Weighted mean and unbiased weighted covariance `Σ w (x−μ)(x−μ)ᵀ / (1 − Σw²)`.
pub fn weighted_moments(m: &EmpiricalMeasure) -> Result<(DVector<f64>, DMatrix<f64>)> {
    let w2: f64 = m.weights.iter().map(|w| w * w).sum();
    if m.len() < 2 || w2 >= 1.0 - 1e-12 {
        return Err(SoberError::DegenerateMeasure("all mass on a single point".into()));
    }
    let d = m.points.dim();
    let mut mean = DVector::zeros(d);
    for (r, w) in m.points.rows().zip(&m.weights) {
        for k in 0..d {
            mean[k] += w * r[k];
        }
    }
    let mut cov = DMatrix::zeros(d, d);
    for (r, w) in m.points.rows().zip(&m.weights) {
        for a in 0..d {
            let da = r[a] - mean[a];
            for b in 0..d {
                cov[(a, b)] += w * da * (r[b] - mean[b]);
            }
        }
    }
    Ok((mean, cov / (1.0 - w2)))
}

/// Indices of `k` systematic-resampling draws proportional to `weights`.
pub fn systematic_resample<R: Rng>(weights: &[f64], k: usize, rng: &mut R) -> Vec<usize> {
    let total: f64 = weights.iter().sum();
    let u0: f64 = rng.random::<f64>() / k as f64;
    let mut out = Vec::with_capacity(k);
    let mut cum = 0.0;
    let mut i = 0;
    for j in 0..k {
        let target = (u0 + j as f64 / k as f64) * total;
        while i + 1 < weights.len() && cum + weights[i] < target {
            cum += weights[i];
            i += 1;
        }
        out.push(i);
    }
    out
}

/// Weighted Gaussian KDE over the continuous block with Scott's bandwidth
/// `N_eff^{-1/(d+4)} σ_k` per dimension.
pub fn wkde_fit(m: &EmpiricalMeasure, domain: &DomainSpec, seed: u64) -> Result<WeightedKde> {
    let nc = domain.n_continuous();
    if nc == 0 {
        return Err(SoberError::InvalidDomain("no continuous dimensions".into()));
    }
    let cont = m.points.leading_columns(nc);
    let n_eff = m.effective_size();
    let factor = n_eff.powf(-1.0 / (nc as f64 + 4.0));
    let mut mean = vec![0.0; nc];
    for (r, w) in cont.rows().zip(&m.weights) {
        for k in 0..nc {
            mean[k] += w * r[k];
        }
    }
    let w2: f64 = m.weights.iter().map(|w| w * w).sum();
    let denom = 1.0 - w2;
    let widths = domain.widths();
    let bandwidth = (0..nc)
        .map(|k| {
            let var = if denom > 1e-12 {
                cont.rows().zip(&m.weights).map(|(r, w)| w * (r[k] - mean[k]).powi(2)).sum::<f64>() / denom
            } else {
                0.0
            };
            let h = factor * var.sqrt();
            if h > 1e-9 * widths[k] && h.is_finite() {
                h
            } else {
                1e-3 * widths[k]
            }
        })
        .collect();

    let positive: Vec<usize> = (0..m.len()).filter(|&i| m.weights[i] > 0.0).collect();
    let (centers, weights) = if positive.len() > KDE_MAX_CENTERS {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let idx = systematic_resample(&m.weights, KDE_MAX_CENTERS, &mut rng);
        (cont.select(&idx), vec![1.0 / KDE_MAX_CENTERS as f64; KDE_MAX_CENTERS])
    } else {
        (cont.select(&positive), normalize(positive.iter().map(|&i| m.weights[i]).collect()))
    };
    let mut kde = WeightedKde {
        centers,
        weights,
        bandwidth,
        log_mass: 0.0,
    };
    kde.log_mass = box_log_mass(&kde, &domain.continuous);
    Ok(kde)
}

/// Weighted-frequency MLE of the categorical and Bernoulli blocks, clamped
/// to `[1e-4, 1 − 1e-4]`.
pub fn mle_update_discrete(prior: &PriorModel, m: &EmpiricalMeasure, domain: &DomainSpec) -> PriorModel {
    let clamp = |p: f64| p.clamp(DISCRETE_CLAMP, 1.0 - DISCRETE_CLAMP);
    let categorical = domain
        .categorical_offsets()
        .iter()
        .zip(&domain.categorical)
        .map(|(&o, &k)| {
            let mut f = vec![0.0; k];
            for (r, w) in m.points.rows().zip(&m.weights) {
                if let Some(c) = (0..k).find(|&j| r[o + j] >= 0.5) {
                    f[c] += w;
                }
            }
            if k == 1 {
                return vec![1.0];
            }
            normalize(f.into_iter().map(clamp).collect())
        })
        .collect();
    let bo = domain.binary_offset();
    let bernoulli = (0..domain.binary)
        .map(|j| {
            let p: f64 = m.points.rows().zip(&m.weights).filter(|(r, _)| r[bo + j] >= 0.5).map(|(_, w)| w).sum();
            clamp(p)
        })
        .collect();
    PriorModel {
        continuous: prior.continuous.clone(),
        categorical,
        bernoulli,
    }
}

#[derive(Clone, Debug)]
pub struct Subsample {
    pub indices: Vec<usize>,
    pub points: Points,
    /// Drawn with replacement because too few positive-weight points exist.
    pub with_replacement: bool,
}

/// `M` draws with probabilities `∝ 1/w` over positive-weight points, without
/// replacement (Efraimidis–Spirakis keys).
pub fn deweighted_subsample(m: &EmpiricalMeasure, count: usize, seed: u64) -> Result<Subsample> {
    if count == 0 {
        return Err(SoberError::InvalidArgument("subsample size must be >= 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let positive: Vec<usize> = (0..m.len()).filter(|&i| m.weights[i] > 0.0).collect();
    if positive.is_empty() {
        return Err(SoberError::DegenerateMeasure("no positive weights".into()));
    }
    let wmin = positive.iter().map(|&i| m.weights[i]).fold(f64::INFINITY, f64::min);
    if positive.len() < count {
        let inv: Vec<f64> = positive.iter().map(|&i| wmin / m.weights[i]).collect();
        let idx = WeightedIndex::new(&inv).map_err(|e| SoberError::DegenerateMeasure(e.to_string()))?;
        let indices: Vec<usize> = (0..count).map(|_| positive[idx.sample(&mut rng)]).collect();
        return Ok(Subsample {
            points: m.points.select(&indices),
            indices,
            with_replacement: true,
        });
    }
    // key = u^{1/p} with p ∝ 1/w, compared in log space as w·ln u
    let mut keyed: Vec<(f64, usize)> = positive
        .iter()
        .map(|&i| {
            let u: f64 = rng.random::<f64>().max(f64::MIN_POSITIVE);
            (u.ln() * m.weights[i] / wmin, i)
        })
        .collect();
    keyed.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
    let indices: Vec<usize> = keyed.into_iter().take(count).map(|(_, i)| i).collect();
    Ok(Subsample {
        points: m.points.select(&indices),
        indices,
        with_replacement: false,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mixed_domain() -> DomainSpec {
        DomainSpec::new(vec![(-1.0, 1.0), (0.0, 2.0)], vec![3, 2], 4).unwrap()
    }

    #[test]
    fn encode_decode_roundtrip() {
        let d = mixed_domain();
        let p = MixedPoint {
            continuous: vec![0.3, 1.5],
            categorical: vec![2, 0],
            binary: vec![true, false, false, true],
        };
        let e = d.encode(&p);
        assert_eq!(e.len(), d.encoded_dim());
        assert_eq!(e, vec![0.3, 1.5, 0.0, 0.0, 1.0, 1.0, 0.0, 1.0, 0.0, 0.0, 1.0]);
        assert_eq!(d.decode(&e).unwrap(), p);
    }

    #[test]
    fn domain_validation() {
        assert!(DomainSpec::new(vec![], vec![], 0).is_err());
        assert!(DomainSpec::new(vec![(1.0, 1.0)], vec![], 0).is_err());
        let d = mixed_domain();
        let bad = MixedPoint {
            continuous: vec![3.0, 1.0],
            categorical: vec![0, 0],
            binary: vec![false; 4],
        };
        assert!(d.check(&bad).is_err());
    }

    #[test]
    fn bernoulli_frequencies() {
        let d = DomainSpec::new(vec![], vec![], 6).unwrap();
        let x = sample_prior(&PriorModel::uniform(&d), &d, 10_000, 1);
        for j in 0..6 {
            let f = x.rows().filter(|r| r[j] == 1.0).count() as f64 / 10_000.0;
            assert!((0.45..=0.55).contains(&f));
        }
    }

    #[test]
    fn uniform_samples_in_bounds_and_deterministic() {
        let d = mixed_domain();
        let p = PriorModel::uniform(&d);
        let x = sample_prior(&p, &d, 500, 2);
        assert_eq!(x, sample_prior(&p, &d, 500, 2));
        for r in x.rows() {
            let mp = d.decode(r).unwrap();
            d.check(&mp).unwrap();
            assert_eq!(d.encode(&mp), r.to_vec());
        }
    }

    #[test]
    fn enumerable_returns_candidates() {
        let cands: Vec<MixedPoint> = (0..7)
            .map(|i| MixedPoint {
                continuous: vec![],
                categorical: vec![],
                binary: (0..3).map(|b| (i >> b) & 1 == 1).collect(),
            })
            .collect();
        let d = DomainSpec::new(vec![], vec![], 3).unwrap().with_candidates(cands).unwrap();
        assert_eq!(sample_prior(&PriorModel::uniform(&d), &d, 100, 0).len(), 7);
    }

    #[test]
    fn importance_weight_examples() {
        assert_eq!(importance_weights(&[1.0, 3.0], &[1.0, 1.0]).unwrap(), vec![0.25, 0.75]);
        let w = importance_weights(&[2.0; 4], &[0.1, 0.2, 0.3, 0.4]).unwrap();
        let u = importance_weights(&[0.1, 0.2, 0.3, 0.4], &[0.1, 0.2, 0.3, 0.4]).unwrap();
        assert!(u.iter().all(|v| (v - 0.25).abs() < 1e-15));
        assert!(w[3] < w[0]);
        assert!(matches!(importance_weights(&[0.0, 0.0], &[1.0, 1.0]), Err(SoberError::DegenerateMeasure(_))));
    }

    #[test]
    fn moments_examples() {
        let m = EmpiricalMeasure::new(Points::from_rows(&[[0.0], [2.0]]).unwrap(), vec![0.5, 0.5]).unwrap();
        let (mu, c) = weighted_moments(&m).unwrap();
        assert_eq!(mu[0], 1.0);
        assert_eq!(c[(0, 0)], 2.0);
        let one = EmpiricalMeasure::new(Points::from_rows(&[[0.0], [2.0]]).unwrap(), vec![1.0, 0.0]).unwrap();
        assert!(weighted_moments(&one).is_err());
    }

    #[test]
    fn moments_match_sample_covariance() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let n = 50;
        let x = Points::from_flat(3, (0..n * 3).map(|_| rng.random_range(-2.0..2.0)).collect()).unwrap();
        let m = EmpiricalMeasure::uniform(x.clone()).unwrap();
        let (mu, c) = weighted_moments(&m).unwrap();
        let mut mean = [0.0; 3];
        for r in x.rows() {
            for k in 0..3 {
                mean[k] += r[k] / n as f64;
            }
        }
        for a in 0..3 {
            assert!((mu[a] - mean[a]).abs() < 1e-12);
            for b in 0..3 {
                let s: f64 = x.rows().map(|r| (r[a] - mean[a]) * (r[b] - mean[b])).sum::<f64>() / (n - 1) as f64;
                assert!((c[(a, b)] - s).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn kde_integrates_to_one() {
        let d = DomainSpec::continuous_box(vec![(-5.0, 5.0), (-5.0, 5.0)]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let x = Points::from_flat(2, (0..400).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap();
        let w: Vec<f64> = (0..200).map(|i| 1.0 + (i % 3) as f64).collect();
        let kde = wkde_fit(&EmpiricalMeasure::from_unnormalized(x, w).unwrap(), &d, 0).unwrap();
        let n = 200_000;
        let s: f64 = (0..n)
            .map(|_| {
                let p = [rng.random_range(-5.0..5.0), rng.random_range(-5.0..5.0)];
                kde.log_density(&p).exp()
            })
            .sum::<f64>()
            * 100.0
            / n as f64;
        assert!((s - 1.0).abs() < 0.02, "integral {s}");
    }

    #[test]
    fn kde_tight_cluster_and_refit() {
        let d = DomainSpec::continuous_box(vec![(0.0, 1.0)]).unwrap();
        let x = Points::from_flat(1, (0..50).map(|i| 0.4 + 1e-4 * i as f64).collect()).unwrap();
        let kde = wkde_fit(&EmpiricalMeasure::uniform(x).unwrap(), &d, 0).unwrap();
        assert!((kde.mean()[0] - 0.4025).abs() < kde.bandwidth[0] + 1e-12);

        let y = Points::from_flat(1, (0..400).map(|i| 0.3 + 0.4 * (i as f64 / 400.0)).collect()).unwrap();
        let kde = wkde_fit(&EmpiricalMeasure::uniform(y).unwrap(), &d, 0).unwrap();
        let prior = PriorModel {
            continuous: ContinuousPrior::Kde(kde.clone()),
            categorical: vec![],
            bernoulli: vec![],
        };
        let s = sample_prior(&prior, &d, 4000, 7);
        let refit = wkde_fit(&EmpiricalMeasure::uniform(s.clone()).unwrap(), &d, 0).unwrap();
        let sd = (0.4f64.powi(2) / 12.0 + kde.bandwidth[0].powi(2)).sqrt();
        assert!((refit.mean()[0] - kde.mean()[0]).abs() < 3.0 * sd / (4000f64).sqrt());
    }

    #[test]
    fn discrete_mle_examples() {
        let d = DomainSpec::new(vec![], vec![3, 5], 1).unwrap();
        let rows: Vec<Vec<f64>> = (0..10)
            .map(|i| {
                let c = if i < 2 { 0 } else if i < 5 { 1 } else { 2 };
                let mut r = vec![0.0; 9];
                r[c] = 1.0;
                r[3 + 2] = 1.0;
                r[8] = if i < 3 { 1.0 } else { 0.0 };
                r
            })
            .collect();
        let m = EmpiricalMeasure::uniform(Points::from_rows(&rows).unwrap()).unwrap();
        let p = mle_update_discrete(&PriorModel::uniform(&d), &m, &d);
        for (a, b) in p.categorical[0].iter().zip([0.2, 0.3, 0.5]) {
            assert!((a - b).abs() < 1e-6);
        }
        assert!(p.categorical[1][2] >= 0.999);
        assert!((p.bernoulli[0] - 0.3).abs() < 1e-12);
        p.validate(&d).unwrap();
    }

    #[test]
    fn subsample_examples() {
        let x = Points::from_flat(1, (0..10).map(|i| i as f64).collect()).unwrap();
        let m = EmpiricalMeasure::uniform(x).unwrap();
        let s = deweighted_subsample(&m, 10, 3).unwrap();
        let mut idx = s.indices.clone();
        idx.sort();
        assert_eq!(idx, (0..10).collect::<Vec<_>>());

        let two = EmpiricalMeasure::new(Points::from_rows(&[[0.0], [1.0]]).unwrap(), vec![0.99, 0.01]).unwrap();
        let hits = (0..2000).filter(|s| deweighted_subsample(&two, 1, *s).unwrap().indices[0] == 1).count();
        let p = (1.0 / 0.01) / (1.0 / 0.99 + 1.0 / 0.01);
        assert!((hits as f64 / 2000.0 - p).abs() < 0.02);

        let sparse = EmpiricalMeasure::new(Points::from_rows(&[[0.0], [1.0], [2.0]]).unwrap(), vec![0.5, 0.5, 0.0]).unwrap();
        let s = deweighted_subsample(&sparse, 3, 0).unwrap();
        assert!(s.with_replacement);
        assert!(s.indices.iter().all(|&i| i < 2));
    }
}
