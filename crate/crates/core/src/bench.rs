//! Synthetic problems, baselines, metrics and the benchmark runner.

use std::collections::HashMap;
use std::io::Write;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Result, SoberError};
use crate::gp::{Dataset, GpModel};
use crate::kernels::{fit_nystrom, KernelKind, DEFAULT_OVERSAMPLE};
use crate::measures::ingest::{fingerprint_domain, read_fingerprints};
use crate::measures::{deweighted_subsample, sample_prior, DomainSpec, EmpiricalMeasure, PriorModel};
use crate::pi::{ts_candidates, PiVariant};
use crate::points::Points;
use crate::solver::{fit_surrogate, initial_kernel, Mode, SoberConfig, SoberState, Standardizer};

const HARTMANN_ALPHA: [f64; 4] = [1.0, 1.2, 3.0, 3.2];
const HARTMANN_A: [[f64; 6]; 4] = [
    [10.0, 3.0, 17.0, 3.5, 1.7, 8.0],
    [0.05, 10.0, 17.0, 0.1, 8.0, 14.0],
    [3.0, 3.5, 1.7, 10.0, 17.0, 8.0],
    [17.0, 8.0, 0.05, 10.0, 0.1, 14.0],
];
const HARTMANN_P: [[f64; 6]; 4] = [
    [1312.0, 1696.0, 5569.0, 124.0, 8283.0, 5886.0],
    [2329.0, 4135.0, 8307.0, 3736.0, 1004.0, 9991.0],
    [2348.0, 1451.0, 3522.0, 2883.0, 3047.0, 6650.0],
    [4047.0, 8828.0, 8732.0, 5743.0, 1091.0, 381.0],
];
/// Maximum of the (negated) Hartmann function with `P` scaled by 1e-4.
pub const HARTMANN_MAX: f64 = 3.3223680114155147;

const SHEKEL_BETA: [f64; 10] = [0.1, 0.2, 0.2, 0.4, 0.4, 0.6, 0.3, 0.7, 0.5, 0.5];
const SHEKEL_C: [[f64; 10]; 4] = [
    [4.0, 1.0, 8.0, 6.0, 3.0, 2.0, 5.0, 8.0, 6.0, 7.0],
    [4.0, 1.0, 8.0, 6.0, 7.0, 9.0, 3.0, 1.0, 2.0, 3.6],
    [4.0, 1.0, 8.0, 6.0, 3.0, 2.0, 5.0, 8.0, 6.0, 7.0],
    [4.0, 1.0, 8.0, 6.0, 7.0, 9.0, 3.0, 1.0, 2.0, 3.6],
];
/// Maximum of the reciprocal Shekel sum on `[0, 10]⁴`.
pub const SHEKEL_MAX: f64 = 10.53644315348353;

const ROSENBROCK_LEVELS: [f64; 4] = [-4.0, 1.0, 6.0, 11.0];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Problem {
    Ackley {
        #[serde(default = "three")]
        n_continuous: usize,
        #[serde(default = "twenty")]
        n_binary: usize,
    },
    Rosenbrock,
    Hartmann6,
    Shekel4 {
        #[serde(default)]
        as_printed: bool,
    },
    GaussianBq {
        #[serde(default = "two")]
        dim: usize,
        /// Integrand centre; defaults to `0.5` in every coordinate.
        #[serde(default)]
        center: Option<Vec<f64>>,
        #[serde(default = "one")]
        scale: f64,
        /// Standard deviation of the Gaussian prior (mean zero).
        #[serde(default = "one")]
        prior_std: f64,
    },
    FingerprintFile {
        path: PathBuf,
    },
}

fn one() -> f64 {
    1.0
}
fn two() -> usize {
    2
}
fn three() -> usize {
    3
}
fn twenty() -> usize {
    20
}

impl Problem {
    pub fn ackley(n_binary: usize) -> Self {
        Problem::Ackley {
            n_continuous: 3,
            n_binary,
        }
    }

    pub fn parse(name: &str) -> Result<Self> {
        Ok(match name.to_ascii_lowercase().as_str() {
            "ackley" | "ackley23" => Problem::ackley(20),
            "rosenbrock" | "rosenbrock7" => Problem::Rosenbrock,
            "hartmann" | "hartmann6" => Problem::Hartmann6,
            "shekel" | "shekel4" => Problem::Shekel4 { as_printed: false },
            "gaussian_bq" | "gaussianbq" => Problem::GaussianBq {
                dim: 2,
                center: None,
                scale: 1.0,
                prior_std: 1.0,
            },
            other => return Err(SoberError::Config(format!("unknown problem '{other}'"))),
        })
    }

    pub fn name(&self) -> &'static str {
        match self {
            Problem::Ackley { .. } => "ackley",
            Problem::Rosenbrock => "rosenbrock",
            Problem::Hartmann6 => "hartmann6",
            Problem::Shekel4 { .. } => "shekel4",
            Problem::GaussianBq { .. } => "gaussian_bq",
            Problem::FingerprintFile { .. } => "fingerprint_file",
        }
    }

    pub fn is_quadrature(&self) -> bool {
        matches!(self, Problem::GaussianBq { .. })
    }
}

/// A problem ready to evaluate: domain, prior, objective and ground truth.
#[derive(Clone, Debug)]
pub struct Instance {
    pub problem: Problem,
    pub domain: DomainSpec,
    pub prior: PriorModel,
    pub kernel: KernelKind,
    /// Known optimum value (maximisation) or integral value.
    pub truth: Option<f64>,
    /// Encoded maximiser, when known.
    pub argmax: Option<Vec<f64>>,
    lookup: Option<HashMap<Vec<u8>, f64>>,
}

pub fn ackley(x: &[f64]) -> f64 {
    let (a, b, c) = (20.0, 0.2, 2.0 * std::f64::consts::PI);
    let d = x.len() as f64;
    let s2 = x.iter().map(|v| v * v).sum::<f64>() / d;
    let sc = x.iter().map(|v| (c * v).cos()).sum::<f64>() / d;
    -a * (-b * s2.sqrt()).exp() - sc.exp() + a + std::f64::consts::E
}

pub fn rosenbrock(x: &[f64]) -> f64 {
    x.windows(2)
        .map(|w| 100.0 * (w[1] - w[0] * w[0]).powi(2) + (w[0] - 1.0).powi(2))
        .sum()
}

/// `Σ α_i exp(−Σ A_ij (x_j − 10⁻⁴P_ij)²)`, the negated Hartmann function.
pub fn neg_hartmann6(x: &[f64]) -> f64 {
    (0..4)
        .map(|i| {
            let s: f64 = (0..6).map(|j| HARTMANN_A[i][j] * (x[j] - 1e-4 * HARTMANN_P[i][j]).powi(2)).sum();
            HARTMANN_ALPHA[i] * (-s).exp()
        })
        .sum()
}

/// `Σ (‖x − C_i‖² + β_i)⁻¹`, or the sum without the reciprocal when
/// `as_printed`.
pub fn neg_shekel4(x: &[f64], as_printed: bool) -> f64 {
    (0..10)
        .map(|i| {
            let s: f64 = (0..4).map(|j| (x[j] - SHEKEL_C[j][i]).powi(2)).sum::<f64>() + SHEKEL_BETA[i];
            if as_printed {
                s
            } else {
                1.0 / s
            }
        })
        .sum()
}

/// `∫ exp(−‖x−c‖²/2s²) dN(x; 0, σ²I) = Π_k s/√(s²+σ²) exp(−c_k²/2(s²+σ²))`.
pub fn gaussian_integral(center: &[f64], scale: f64, prior_std: f64) -> f64 {
    let v = scale * scale + prior_std * prior_std;
    center
        .iter()
        .map(|c| scale / v.sqrt() * (-c * c / (2.0 * v)).exp())
        .product()
}

impl Instance {
    pub fn new(problem: Problem) -> Result<Self> {
        let mut inst = Instance {
            domain: DomainSpec::default(),
            prior: PriorModel::uniform(&DomainSpec::default()),
            kernel: KernelKind::RbfArd,
            truth: None,
            argmax: None,
            lookup: None,
            problem: problem.clone(),
        };
        match &problem {
            Problem::Ackley { n_continuous, n_binary } => {
                inst.domain = DomainSpec::new(vec![(-1.0, 1.0); *n_continuous], vec![], *n_binary)?;
                inst.truth = Some(0.0);
                inst.argmax = Some(vec![0.0; n_continuous + n_binary]);
            }
            Problem::Rosenbrock => {
                inst.domain = DomainSpec::new(vec![(-4.0, 11.0)], vec![4; 6], 0)?;
                inst.truth = Some(0.0);
                let mut a = vec![1.0];
                for _ in 0..6 {
                    a.extend([0.0, 1.0, 0.0, 0.0]);
                }
                inst.argmax = Some(a);
            }
            Problem::Hartmann6 => {
                inst.domain = DomainSpec::continuous_box(vec![(0.0, 1.0); 6])?;
                inst.truth = Some(HARTMANN_MAX);
                inst.argmax = Some(vec![0.2016895117, 0.1500106951, 0.4768739779, 0.2753324284, 0.3116516174, 0.6573005346]);
            }
            Problem::Shekel4 { as_printed } => {
                inst.domain = DomainSpec::continuous_box(vec![(0.0, 10.0); 4])?;
                if *as_printed {
                    let (v, x) = shekel_printed_max();
                    inst.truth = Some(v);
                    inst.argmax = Some(x);
                } else {
                    inst.truth = Some(SHEKEL_MAX);
                    inst.argmax = Some(vec![4.000746867, 3.999509481, 4.000746867, 3.999509482]);
                }
            }
            Problem::GaussianBq {
                dim,
                center,
                scale,
                prior_std,
            } => {
                let c = center.clone().unwrap_or(vec![0.5; *dim]);
                if c.len() != *dim || !(*scale > 0.0) || !(*prior_std > 0.0) {
                    return Err(SoberError::Config("gaussian_bq needs dim-length centre and positive scales".into()));
                }
                let half = 8.0 * prior_std;
                inst.domain = DomainSpec::continuous_box(vec![(-half, half); *dim])?;
                inst.prior = PriorModel::gaussian(&inst.domain, vec![0.0; *dim], vec![*prior_std; *dim])?;
                inst.truth = Some(gaussian_integral(&c, *scale, *prior_std));
                return Ok(inst);
            }
            Problem::FingerprintFile { path } => {
                let recs = read_fingerprints(path)?;
                let domain = fingerprint_domain(&recs)?;
                let mut lookup = HashMap::new();
                let mut best: Option<(f64, Vec<f64>)> = None;
                for r in &recs {
                    let y = r.y.ok_or_else(|| SoberError::Config("fingerprint records need a y value".into()))?;
                    lookup.insert(r.bits.clone(), y);
                    if best.as_ref().is_none_or(|(b, _)| y > *b) {
                        best = Some((y, r.bits.iter().map(|b| *b as f64).collect()));
                    }
                }
                inst.domain = domain;
                inst.kernel = KernelKind::Tanimoto;
                inst.truth = best.as_ref().map(|b| b.0);
                inst.argmax = best.map(|b| b.1);
                inst.lookup = Some(lookup);
            }
        }
        inst.prior = PriorModel::uniform(&inst.domain);
        Ok(inst)
    }

    /// Objective at an encoded point (maximisation).
    pub fn eval(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.domain.encoded_dim() {
            return Err(SoberError::DimensionMismatch {
                expected: self.domain.encoded_dim(),
                got: x.len(),
            });
        }
        let p = self.domain.decode(x)?;
        for (v, (lo, hi)) in p.continuous.iter().zip(&self.domain.continuous) {
            if *v < *lo || *v > *hi {
                return Err(SoberError::InvalidArgument(format!("{v} outside [{lo}, {hi}]")));
            }
        }
        Ok(match &self.problem {
            Problem::Ackley { .. } => {
                let mut v = p.continuous.clone();
                v.extend(p.binary.iter().map(|b| *b as u8 as f64));
                -ackley(&v)
            }
            Problem::Rosenbrock => {
                let mut v = p.continuous.clone();
                v.extend(p.categorical.iter().map(|c| ROSENBROCK_LEVELS[*c]));
                -rosenbrock(&v)
            }
            Problem::Hartmann6 => neg_hartmann6(&p.continuous),
            Problem::Shekel4 { as_printed } => neg_shekel4(&p.continuous, *as_printed),
            Problem::GaussianBq {
                dim, center, scale, ..
            } => {
                let c = center.clone().unwrap_or(vec![0.5; *dim]);
                let d2: f64 = p.continuous.iter().zip(&c).map(|(a, b)| (a - b).powi(2)).sum();
                (-d2 / (2.0 * scale * scale)).exp()
            }
            Problem::FingerprintFile { .. } => {
                let key: Vec<u8> = p.binary.iter().map(|b| *b as u8).collect();
                *self
                    .lookup
                    .as_ref()
                    .and_then(|l| l.get(&key))
                    .ok_or_else(|| SoberError::Oracle("fingerprint not in library".into()))?
            }
        })
    }

    pub fn eval_all(&self, x: &Points) -> Result<Vec<f64>> {
        x.rows().map(|r| self.eval(r)).collect()
    }
}

fn shekel_printed_max() -> (f64, Vec<f64>) {
    let mut best = (f64::NEG_INFINITY, vec![]);
    for mask in 0..16u32 {
        let x: Vec<f64> = (0..4).map(|j| if mask >> j & 1 == 1 { 10.0 } else { 0.0 }).collect();
        let v = neg_shekel4(&x, true);
        if v > best.0 {
            best = (v, x);
        }
    }
    best
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Method {
    #[serde(rename = "sober-lfi")]
    SoberLfi,
    #[serde(rename = "sober-ts")]
    SoberTs,
    #[serde(rename = "random")]
    Random,
    #[serde(rename = "plain_ts")]
    PlainTs,
}

impl Method {
    pub fn name(&self) -> &'static str {
        match self {
            Method::SoberLfi => "sober-lfi",
            Method::SoberTs => "sober-ts",
            Method::Random => "random",
            Method::PlainTs => "plain_ts",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Ok(match s {
            "sober-lfi" | "sober_lfi" | "lfi" => Method::SoberLfi,
            "sober-ts" | "sober_ts" => Method::SoberTs,
            "random" => Method::Random,
            "plain_ts" | "plain-ts" | "ts" => Method::PlainTs,
            other => return Err(SoberError::Config(format!("unknown method '{other}'"))),
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BaselineKind {
    Random,
    PlainTs,
}

/// Random: `n` prior draws (distinct candidates on enumerable domains).
/// Plain TS: argmaxes of `n` independent posterior samples over `pool`.
pub fn baseline_step(
    kind: BaselineKind,
    gp: &GpModel,
    pool: &EmpiricalMeasure,
    domain: &DomainSpec,
    prior: &PriorModel,
    n: usize,
    n_nys: usize,
    seed: u64,
) -> Result<Points> {
    match kind {
        BaselineKind::Random => {
            if domain.is_enumerable() {
                let mut idx: Vec<usize> = (0..pool.len()).collect();
                idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
                idx.truncate(n);
                Ok(pool.points.select(&idx))
            } else {
                Ok(sample_prior(prior, domain, n, seed))
            }
        }
        BaselineKind::PlainTs => {
            let anchors = deweighted_subsample(pool, n_nys.min(pool.len()), seed)?;
            let nf = fit_nystrom(&gp.kernel, &anchors.points, n_nys, DEFAULT_OVERSAMPLE, seed.wrapping_add(1))?;
            let idx = ts_candidates(gp, &nf, &pool.points, n, seed.wrapping_add(2))?;
            Ok(pool.points.select(&idx))
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub method: String,
    pub repeat: usize,
    pub iteration: usize,
    pub best_y: f64,
    pub simple_regret: Option<f64>,
    pub br: Option<f64>,
    pub mv: Option<f64>,
    pub md: Option<f64>,
    pub wce: Option<f64>,
    pub evidence_mean: Option<f64>,
    pub evidence_var: Option<f64>,
    pub elapsed_s: Option<f64>,
}

pub const CSV_HEADER: [&str; 12] = [
    "method",
    "repeat",
    "iteration",
    "best_y",
    "simple_regret",
    "BR",
    "MV",
    "MD",
    "wce",
    "evidence_mean",
    "evidence_var",
    "elapsed_s",
];

/// One iteration's raw material for [`compute_metrics`].
#[derive(Clone, Debug, Default)]
pub struct Trace {
    pub y_batch: Vec<f64>,
    pub batch_weights: Vec<f64>,
    pub measure_mean: Option<Vec<f64>>,
    pub measure_var: Option<f64>,
    pub wce: Option<f64>,
    pub evidence: Option<(f64, f64)>,
    pub elapsed_s: f64,
}

/// Per-iteration metrics. `truth` is the optimum (or the integral in
/// quadrature runs); without it regret-type fields stay empty.
pub fn compute_metrics(
    method: &str,
    repeat: usize,
    traces: &[Trace],
    truth: Option<f64>,
    argmax: Option<&[f64]>,
    quadrature: bool,
) -> Vec<MetricsRow> {
    let mut best = f64::NEG_INFINITY;
    traces
        .iter()
        .enumerate()
        .map(|(it, t)| {
            best = t.y_batch.iter().cloned().fold(best, f64::max);
            let opt = if quadrature { None } else { truth };
            let batch_val: f64 = t.y_batch.iter().zip(&t.batch_weights).map(|(y, w)| y * w).sum();
            MetricsRow {
                method: method.to_string(),
                repeat,
                iteration: it,
                best_y: best,
                simple_regret: opt.map(|y| y - best),
                br: opt.map(|y| (y - batch_val).abs()),
                mv: t.measure_var,
                md: match (&t.measure_mean, argmax, quadrature) {
                    (Some(m), Some(a), false) if m.len() == a.len() => {
                        Some(m.iter().zip(a).map(|(p, q)| (p - q).powi(2)).sum::<f64>().sqrt())
                    }
                    _ => None,
                },
                wce: t.wce,
                evidence_mean: t.evidence.map(|e| e.0),
                evidence_var: t.evidence.map(|e| e.1),
                elapsed_s: Some(t.elapsed_s),
            }
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BenchmarkSpec {
    pub problem: Problem,
    pub repeats: usize,
    pub iterations: usize,
    pub seed: u64,
    pub methods: Vec<Method>,
    pub sober: SoberConfig,
    /// Write wall-clock seconds into the CSV (breaks byte-identity).
    pub timing: bool,
}

impl Default for BenchmarkSpec {
    fn default() -> Self {
        BenchmarkSpec {
            problem: Problem::ackley(20),
            repeats: 1,
            iterations: 10,
            seed: 0,
            methods: vec![Method::SoberLfi, Method::Random],
            sober: SoberConfig::default(),
            timing: false,
        }
    }
}

impl BenchmarkSpec {
    pub fn validate(&self) -> Result<()> {
        if self.repeats == 0 {
            return Err(SoberError::Config("repeats must be >= 1".into()));
        }
        if self.methods.is_empty() {
            return Err(SoberError::Config("no methods selected".into()));
        }
        self.sober.validate()
    }

    pub fn from_json(path: &Path) -> Result<Self> {
        let s = std::fs::read_to_string(path)?;
        Ok(serde_json::from_str(&s)?)
    }
}

fn mix(seed: u64, r: u64) -> u64 {
    let mut z = seed.wrapping_add(r.wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed used for repeat `r` of a benchmark seeded with `seed`.
pub fn repeat_seed(seed: u64, r: usize) -> u64 {
    mix(seed, r as u64 + 1)
}

/// Runs one method for one repeat and returns its traces.
pub fn run_method(inst: &Instance, method: Method, cfg: &SoberConfig, iterations: usize) -> Result<Vec<Trace>> {
    let mut cfg = cfg.clone();
    cfg.kernel = inst.kernel;
    if inst.problem.is_quadrature() {
        cfg.mode = Mode::Quadrature;
    }
    if inst.domain.is_enumerable() {
        let n_cand = inst.domain.candidates.as_ref().map_or(0, |c| c.len());
        cfg.n_rec = cfg.n_rec.min(n_cand);
        cfg.n_nys = cfg.n_nys.min(n_cand);
    }
    match method {
        Method::SoberLfi | Method::SoberTs => {
            cfg.variant = if method == Method::SoberTs { PiVariant::Ts } else { PiVariant::Lfi };
            let mut st = SoberState::new(cfg, inst.domain.clone(), inst.prior.clone())?;
            let mut out = Vec::with_capacity(iterations);
            for _ in 0..iterations {
                let b = st.ask()?;
                let y = inst.eval_all(&b.points)?;
                st.tell(&b.points, &y)?;
                let r = st.records.last().expect("record after tell");
                out.push(Trace {
                    y_batch: y,
                    batch_weights: r.batch_weights.clone(),
                    measure_mean: Some(r.measure_mean.clone()),
                    measure_var: Some(r.measure_var),
                    wce: Some(r.wce),
                    evidence: r.evidence,
                    elapsed_s: r.elapsed_s,
                });
            }
            Ok(out)
        }
        Method::Random | Method::PlainTs => run_baseline(inst, method, &cfg, iterations),
    }
}

fn run_baseline(inst: &Instance, method: Method, cfg: &SoberConfig, iterations: usize) -> Result<Vec<Trace>> {
    let start = web_time::Instant::now();
    let kind = if method == Method::Random {
        BaselineKind::Random
    } else {
        BaselineKind::PlainTs
    };
    let init = initial_kernel(cfg.kernel, &inst.domain)?;
    let dim = inst.domain.encoded_dim();
    let mut ds = Dataset::empty(dim);
    let mut gp = GpModel::prior(init.clone(), cfg.initial_noise, dim)?;
    let mut out = Vec::with_capacity(iterations);
    for it in 0..iterations {
        let seed = mix(cfg.seed, 1000 + it as u64);
        let pool_x = sample_prior(&inst.prior, &inst.domain, cfg.n_rec, seed);
        let pool = EmpiricalMeasure::uniform(pool_x)?;
        let x = if kind == BaselineKind::PlainTs && ds.is_empty() {
            baseline_step(BaselineKind::Random, &gp, &pool, &inst.domain, &inst.prior, cfg.batch_size, cfg.n_nys, seed)?
        } else {
            baseline_step(kind, &gp, &pool, &inst.domain, &inst.prior, cfg.batch_size, cfg.n_nys, seed)?
        };
        let y = inst.eval_all(&x)?;
        ds.x.extend(&x)?;
        ds.y.extend_from_slice(&y);
        let mut evidence = None;
        if kind == BaselineKind::PlainTs {
            let s = Standardizer::fit(&ds.y);
            let std_ds = ds.with_y(ds.y.iter().map(|v| s.apply(*v)).collect())?;
            gp = fit_surrogate(&std_ds, Some(&gp), &init, cfg, it % cfg.refit_every == 0, seed)?;
        } else if inst.problem.is_quadrature() {
            let m = ds.y.iter().sum::<f64>() / ds.len() as f64;
            let v = ds.y.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (ds.len().max(2) - 1) as f64 / ds.len() as f64;
            evidence = Some((m, v));
        }
        out.push(Trace {
            batch_weights: vec![1.0 / y.len() as f64; y.len()],
            y_batch: y,
            measure_mean: None,
            measure_var: None,
            wce: None,
            evidence,
            elapsed_s: start.elapsed().as_secs_f64().max(1e-9),
        });
    }
    Ok(out)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Stat {
    pub median: f64,
    pub stderr: f64,
    pub n: usize,
}

pub fn median(v: &[f64]) -> f64 {
    let mut s: Vec<f64> = v.iter().cloned().filter(|x| !x.is_nan()).collect();
    if s.is_empty() {
        return f64::NAN;
    }
    s.sort_by(f64::total_cmp);
    let k = s.len();
    if k % 2 == 1 {
        s[k / 2]
    } else {
        0.5 * (s[k / 2 - 1] + s[k / 2])
    }
}

pub fn stat(v: &[f64]) -> Stat {
    let n = v.len();
    let mean = v.iter().sum::<f64>() / n.max(1) as f64;
    let sd = if n > 1 {
        (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
    } else {
        0.0
    };
    Stat {
        median: median(v),
        stderr: sd / (n.max(1) as f64).sqrt(),
        n,
    }
}

/// `log10` of a regret, floored at 1e-12.
pub fn log10_regret(r: f64) -> f64 {
    r.max(1e-12).log10()
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MethodSummary {
    pub method: String,
    pub final_best_y: Stat,
    pub final_log10_regret: Option<Stat>,
    pub final_evidence_rel_error: Option<Stat>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Summary {
    pub problem: String,
    pub repeats: usize,
    pub iterations: usize,
    pub truth: Option<f64>,
    pub methods: Vec<MethodSummary>,
}

pub fn summarize(spec: &BenchmarkSpec, truth: Option<f64>, rows: &[MetricsRow]) -> Summary {
    let last = spec.iterations.saturating_sub(1);
    let methods = spec
        .methods
        .iter()
        .map(|m| {
            let fin: Vec<&MetricsRow> = rows.iter().filter(|r| r.method == m.name() && r.iteration == last).collect();
            let best: Vec<f64> = fin.iter().map(|r| r.best_y).collect();
            let reg: Vec<f64> = fin.iter().filter_map(|r| r.simple_regret.map(log10_regret)).collect();
            let ev: Vec<f64> = match truth {
                Some(t) if spec.problem.is_quadrature() => {
                    fin.iter().filter_map(|r| r.evidence_mean.map(|e| ((e - t) / t).abs())).collect()
                }
                _ => vec![],
            };
            MethodSummary {
                method: m.name().to_string(),
                final_best_y: stat(&best),
                final_log10_regret: (!reg.is_empty()).then(|| stat(&reg)),
                final_evidence_rel_error: (!ev.is_empty()).then(|| stat(&ev)),
            }
        })
        .collect();
    Summary {
        problem: spec.problem.name().to_string(),
        repeats: spec.repeats,
        iterations: spec.iterations,
        truth,
        methods,
    }
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x}")).unwrap_or_default()
}

pub fn write_csv<W: Write>(w: W, rows: &[MetricsRow], timing: bool) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    wr.write_record(CSV_HEADER)?;
    for r in rows {
        wr.write_record([
            r.method.clone(),
            r.repeat.to_string(),
            r.iteration.to_string(),
            format!("{}", r.best_y),
            fmt_opt(r.simple_regret),
            fmt_opt(r.br),
            fmt_opt(r.mv),
            fmt_opt(r.md),
            fmt_opt(r.wce),
            fmt_opt(r.evidence_mean),
            fmt_opt(r.evidence_var),
            if timing { fmt_opt(r.elapsed_s) } else { String::new() },
        ])?;
    }
    wr.flush()?;
    Ok(())
}

/// Runs every method over every repeat; rows come back ordered by
/// (method, repeat, iteration).
pub fn run_rows(spec: &BenchmarkSpec) -> Result<(Instance, Vec<MetricsRow>)> {
    spec.validate()?;
    let inst = Instance::new(spec.problem.clone())?;
    let mut rows = Vec::new();
    let mut methods = spec.methods.clone();
    methods.sort();
    methods.dedup();
    for m in methods {
        if inst.problem.is_quadrature() && m == Method::PlainTs {
            log::warn!("plain_ts has no quadrature estimate; skipped");
            continue;
        }
        for r in 0..spec.repeats {
            let mut cfg = spec.sober.clone();
            cfg.seed = repeat_seed(spec.seed, r);
            let traces = run_method(&inst, m, &cfg, spec.iterations)?;
            rows.extend(compute_metrics(
                m.name(),
                r,
                &traces,
                inst.truth,
                inst.argmax.as_deref(),
                inst.problem.is_quadrature(),
            ));
        }
    }
    Ok((inst, rows))
}

/// Writes `<out>.csv` and `<out>.summary.json`; `out` may carry a `.csv`
/// extension.
pub fn run_benchmark(spec: &BenchmarkSpec, out: &Path) -> Result<Summary> {
    let (inst, rows) = run_rows(spec)?;
    let csv_path = if out.extension().is_some_and(|e| e == "csv") {
        out.to_path_buf()
    } else {
        out.with_extension("csv")
    };
    let json_path = csv_path.with_extension("summary.json");
    if let Some(dir) = csv_path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    write_csv(std::fs::File::create(&csv_path)?, &rows, spec.timing)?;
    let summary = summarize(spec, inst.truth, &rows);
    std::fs::write(&json_path, serde_json::to_string_pretty(&summary)?)?;
    Ok(summary)
}
