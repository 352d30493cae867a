//! Browser demo. Three operations are exported to JavaScript: recombination
//! batch selection on a 2D cloud, an interactive optimisation loop on a 2D
//! test function, and the Nyström spectrum of an RBF kernel. Results cross
//! the boundary as JSON strings.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use sober::kernels::{fit_nystrom, KernelParams, DEFAULT_OVERSAMPLE};
use sober::measures::{sample_prior, DomainSpec, EmpiricalMeasure, PriorModel};
use sober::recombination::{objective_rchq, wce_estimate};
use sober::solver::{SoberConfig, SoberState};
use sober::{Points, SoberError};
use wasm_bindgen::prelude::*;

const SHOWN_MEASURE: usize = 600;

fn unit_square() -> DomainSpec {
    DomainSpec::continuous_box(vec![(0.0, 1.0), (0.0, 1.0)]).expect("valid box")
}

fn pairs(p: &Points) -> Vec<[f64; 2]> {
    p.rows().map(|r| [r[0], r[1]]).collect()
}

fn js(e: SoberError) -> JsError {
    JsError::new(&e.to_string())
}

fn to_json<T: Serialize>(v: &T) -> String {
    serde_json::to_string(v).expect("plain data serialises")
}

#[derive(Serialize, Debug)]
pub struct BatchView {
    pub cloud: Vec<[f64; 2]>,
    pub batch: Vec<[f64; 2]>,
    pub weights: Vec<f64>,
    pub wce: f64,
    pub random_wce: f64,
}

/// Recombination batch of size `n` from `n_points` uniform points, with the
/// worst-case error of a uniform random subset of the same size alongside.
pub fn batch_view(n_points: usize, n: usize, lengthscale: f64, seed: u64) -> Result<BatchView, SoberError> {
    if n < 2 || n > n_points {
        return Err(SoberError::InvalidArgument(format!("need 2 <= n <= {n_points}")));
    }
    let dom = unit_square();
    let cloud = sample_prior(&PriorModel::uniform(&dom), &dom, n_points, seed);
    let m = EmpiricalMeasure::uniform(cloud)?;
    let k = KernelParams::rbf(1.0, vec![lengthscale; 2])?;
    let anchors = m.points.select(&(0..n_points.min(200)).collect::<Vec<_>>());
    let nf = fit_nystrom(&k, &anchors, n - 1, DEFAULT_OVERSAMPLE, seed)?;
    let b = objective_rchq(&m, &k, &nf, &vec![0.0; n_points], n, seed)?;

    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    let mut idx: Vec<usize> = (0..n_points).collect();
    for i in 0..n {
        let j = rng.random_range(i..n_points);
        idx.swap(i, j);
    }
    idx.truncate(n);
    let random_wce = wce_estimate(&k, &m.points.select(&idx), &vec![1.0 / n as f64; n], &m, false);
    Ok(BatchView {
        cloud: pairs(&m.points),
        batch: pairs(&b.points),
        weights: b.weights.clone(),
        wce: wce_estimate(&k, &b.points, &b.weights, &m, false),
        random_wce,
    })
}

#[wasm_bindgen]
pub fn select_batch(n_points: usize, n: usize, lengthscale: f64, seed: u32) -> Result<String, JsError> {
    batch_view(n_points, n, lengthscale, seed.into()).map(|v| to_json(&v)).map_err(js)
}

/// Normalised eigenvalues `λ_j / λ_1` of an RBF Gram matrix on `m` uniform
/// anchors.
pub fn spectrum(m: usize, lengthscale: f64, seed: u64) -> Result<Vec<f64>, SoberError> {
    let dom = unit_square();
    let anchors = sample_prior(&PriorModel::uniform(&dom), &dom, m, seed);
    let k = KernelParams::rbf(1.0, vec![lengthscale; 2])?;
    let nf = fit_nystrom(&k, &anchors, m, DEFAULT_OVERSAMPLE, seed)?;
    let top = nf.eigenvalues.first().copied().unwrap_or(1.0);
    Ok(nf.eigenvalues.iter().map(|l| l / top).collect())
}

#[wasm_bindgen]
pub fn nystrom_spectrum(m: usize, lengthscale: f64, seed: u32) -> Result<String, JsError> {
    spectrum(m, lengthscale, seed.into()).map(|v| to_json(&v)).map_err(js)
}

/// Built-in 2D objectives on the unit square, to be maximised.
pub fn objective(name: &str, x: &[f64]) -> Option<f64> {
    let (a, b) = (x[0], x[1]);
    Some(match name {
        "branin" => {
            let (u, v) = (15.0 * a - 5.0, 15.0 * b);
            let pi = std::f64::consts::PI;
            let t = v - 5.1 / (4.0 * pi * pi) * u * u + 5.0 / pi * u - 6.0;
            -(t * t + 10.0 * (1.0 - 1.0 / (8.0 * pi)) * u.cos() + 10.0) / 50.0
        }
        "peaks" => {
            let g = |cx: f64, cy: f64, s: f64| (-((a - cx).powi(2) + (b - cy).powi(2)) / (2.0 * s * s)).exp();
            g(0.2, 0.3, 0.08) + 0.8 * g(0.75, 0.7, 0.1) + 0.6 * g(0.6, 0.15, 0.05)
        }
        "waves" => (9.0 * a).sin() * (7.0 * b).cos() + 0.3 * a,
        _ => return None,
    })
}

#[derive(Serialize, Debug)]
pub struct StepView {
    pub iteration: usize,
    pub batch: Vec<[f64; 2]>,
    pub weights: Vec<f64>,
    pub y: Vec<f64>,
    pub best_x: [f64; 2],
    pub best_y: f64,
    pub measure: Vec<[f64; 3]>,
}

/// One optimisation run held across calls from the page.
#[wasm_bindgen]
pub struct SoberDemo {
    state: SoberState,
    function: String,
}

impl SoberDemo {
    pub fn create(function: &str, batch_size: usize, seed: u64) -> Result<SoberDemo, SoberError> {
        if objective(function, &[0.5, 0.5]).is_none() {
            return Err(SoberError::InvalidArgument(format!("unknown function '{function}'")));
        }
        let dom = unit_square();
        let cfg = SoberConfig {
            batch_size,
            n_rec: 2000,
            n_nys: 100,
            seed,
            ..Default::default()
        };
        Ok(SoberDemo {
            state: SoberState::new(cfg, dom.clone(), PriorModel::uniform(&dom))?,
            function: function.to_string(),
        })
    }

    pub fn advance(&mut self) -> Result<StepView, SoberError> {
        let b = self.state.ask()?;
        let y: Vec<f64> = b.points.rows().map(|r| objective(&self.function, r).expect("checked")).collect();
        self.state.tell(&b.points, &y)?;
        let (bx, by) = self.state.best().expect("observations exist");
        let measure = self
            .state
            .last_measure()
            .map(|m| {
                let stride = m.len().div_ceil(SHOWN_MEASURE).max(1);
                let top = m.weights.iter().cloned().fold(0.0, f64::max).max(f64::MIN_POSITIVE);
                (0..m.len()).step_by(stride).map(|i| [m.points.row(i)[0], m.points.row(i)[1], m.weights[i] / top]).collect()
            })
            .unwrap_or_default();
        Ok(StepView {
            iteration: self.state.iteration(),
            batch: pairs(&b.points),
            weights: b.weights,
            y,
            best_x: [bx[0], bx[1]],
            best_y: by,
            measure,
        })
    }
}

#[wasm_bindgen]
impl SoberDemo {
    #[wasm_bindgen(constructor)]
    pub fn new(function: &str, batch_size: usize, seed: u32) -> Result<SoberDemo, JsError> {
        SoberDemo::create(function, batch_size, seed.into()).map_err(js)
    }

    /// Runs one ask/evaluate/tell round.
    pub fn step(&mut self) -> Result<String, JsError> {
        self.advance().map(|v| to_json(&v)).map_err(js)
    }
}

/// Objective values on a `res × res` grid, row-major from `y = 0`.
#[wasm_bindgen]
pub fn surface(function: &str, res: usize) -> Result<Vec<f64>, JsError> {
    let mut out = Vec::with_capacity(res * res);
    for i in 0..res {
        for j in 0..res {
            let p = [(j as f64 + 0.5) / res as f64, (i as f64 + 0.5) / res as f64];
            out.push(objective(function, &p).ok_or_else(|| JsError::new("unknown function"))?);
        }
    }
    Ok(out)
}
