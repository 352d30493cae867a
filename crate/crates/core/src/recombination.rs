//! Measure reduction by Carathéodory recombination, objective-steered
//! quadrature, a greedy MMD subsampler and worst-case-error bookkeeping.

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Result, SoberError};
use crate::kernels::{Covariance, NystromFeatures};
use crate::measures::{normalize, EmpiricalMeasure};
use crate::points::Points;

/// Moment tolerance relative to each test function's scale.
pub const MOMENT_TOL: f64 = 1e-6;
pub const WEIGHT_CLAMP: f64 = -1e-12;
pub const DEFAULT_THINNING_POOL: usize = 1000;
const RANK_TOL: f64 = 1e-10;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KqMethod {
    Rchq,
    Thinning,
}

#[derive(Clone, Debug)]
pub struct BatchSelection {
    /// Indices into the source measure, distinct.
    pub indices: Vec<usize>,
    pub points: Points,
    pub weights: Vec<f64>,
    /// `Σ w α(x)` over the batch.
    pub objective: f64,
    /// Worst-case error without the batch-independent term.
    pub wce: f64,
    pub method: KqMethod,
}

/// Result of [`recombine`]: surviving indices (ascending) and their weights.
#[derive(Clone, Debug, PartialEq)]
pub struct Recombined {
    pub indices: Vec<usize>,
    pub weights: Vec<f64>,
}

/// Reduces `m` to at most `k + 1` points matching the `k` rows of
/// `test_fns` (`k × N`) and the total mass. When `alpha` is given each
/// elimination step moves in the direction that raises `Σ w α`.
pub fn recombine(m: &EmpiricalMeasure, test_fns: &DMatrix<f64>, alpha: Option<&[f64]>, seed: u64) -> Result<Recombined> {
    let n_pts = m.len();
    if test_fns.ncols() != n_pts {
        return Err(SoberError::DimensionMismatch {
            expected: n_pts,
            got: test_fns.ncols(),
        });
    }
    if let Some(a) = alpha {
        if a.len() != n_pts {
            return Err(SoberError::DimensionMismatch {
                expected: n_pts,
                got: a.len(),
            });
        }
        if a.iter().any(|v| !v.is_finite()) {
            return Err(SoberError::InvalidArgument("non-finite objective values".into()));
        }
    }
    if test_fns.iter().any(|v| !v.is_finite()) {
        return Err(SoberError::InvalidArgument("non-finite test functions".into()));
    }
    let k = test_fns.nrows();
    let r = k + 1;
    if n_pts <= r {
        return Ok(Recombined {
            indices: (0..n_pts).collect(),
            weights: m.weights.clone(),
        });
    }

    // rows scaled to unit max-abs, plus the mass row
    let mut a = DMatrix::zeros(r, n_pts);
    let mut scales = vec![1.0; r];
    for i in 0..k {
        let s = test_fns.row(i).amax();
        scales[i] = if s > 0.0 { s } else { 1.0 };
        for j in 0..n_pts {
            a[(i, j)] = test_fns[(i, j)] / scales[i];
        }
    }
    a.row_mut(k).fill(1.0);

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut live: Vec<usize> = (0..n_pts).filter(|&i| m.weights[i] > 0.0).collect();
    live.shuffle(&mut rng);
    let mut w: Vec<f64> = m.weights.clone();
    let alpha_of = |i: usize| alpha.map_or(0.0, |a| a[i]);

    while live.len() > 2 * r {
        let n_groups = 2 * r;
        let groups: Vec<&[usize]> = split_even(&live, n_groups);
        let mut bary = DMatrix::zeros(r, n_groups);
        let mut gw = vec![0.0; n_groups];
        let mut ga = vec![0.0; n_groups];
        for (g, members) in groups.iter().enumerate() {
            let total: f64 = members.iter().map(|&i| w[i]).sum();
            gw[g] = total;
            for &i in members.iter() {
                let f = w[i] / total;
                for row in 0..r {
                    bary[(row, g)] += f * a[(row, i)];
                }
                ga[g] += f * alpha_of(i);
            }
        }
        let new_gw = caratheodory(&bary, &gw, alpha.map(|_| ga.as_slice()));
        let mut next = Vec::with_capacity(live.len());
        for (g, members) in groups.iter().enumerate() {
            if new_gw[g] > 0.0 {
                let f = new_gw[g] / gw[g];
                for &i in members.iter() {
                    w[i] *= f;
                    if w[i] > 0.0 {
                        next.push(i);
                    }
                }
            } else {
                for &i in members.iter() {
                    w[i] = 0.0;
                }
            }
        }
        live = next;
    }

    let sub = a.select_columns(&live);
    let sw: Vec<f64> = live.iter().map(|&i| w[i]).collect();
    let sa: Vec<f64> = live.iter().map(|&i| alpha_of(i)).collect();
    let mut fw = caratheodory(&sub, &sw, alpha.map(|_| sa.as_slice()));
    // rank-deficient moment maps admit further elimination
    fw = reduce_rank_deficient(&sub, fw, alpha.map(|_| sa.as_slice()));

    let mut out: Vec<(usize, f64)> = live
        .iter()
        .zip(&fw)
        .filter(|(_, v)| **v > 0.0)
        .map(|(&i, &v)| (i, v))
        .collect();
    out.sort_by_key(|p| p.0);
    let indices: Vec<usize> = out.iter().map(|p| p.0).collect();
    let target = &a * DVector::from_column_slice(&m.weights);
    let weights = polish(&a.select_columns(&indices), &target, normalize(out.iter().map(|p| p.1).collect()));

    // verify moments on the normalized rows
    for row in 0..r {
        let after: f64 = indices.iter().zip(&weights).map(|(&j, wj)| a[(row, j)] * wj).sum();
        if (target[row] - after).abs() > MOMENT_TOL {
            return Err(SoberError::Recombination(format!(
                "moment {row} drifted by {:e}",
                (target[row] - after).abs()
            )));
        }
    }
    Ok(Recombined { indices, weights })
}

/// One least-squares correction of the support weights towards the exact
/// moments, kept only if it stays non-negative and reduces the residual.
fn polish(sub: &DMatrix<f64>, target: &DVector<f64>, w: Vec<f64>) -> Vec<f64> {
    let wv = DVector::from_column_slice(&w);
    let resid = target - sub * &wv;
    if resid.amax() == 0.0 {
        return w;
    }
    let Ok(delta) = sub.clone().svd(true, true).solve(&resid, RANK_TOL) else {
        return w;
    };
    let cand = wv + delta;
    if cand.iter().any(|v| *v < 0.0) || (target - sub * &cand).amax() >= resid.amax() {
        return w;
    }
    normalize(cand.iter().copied().collect())
}

fn split_even(v: &[usize], parts: usize) -> Vec<&[usize]> {
    let n = v.len();
    let mut out = Vec::with_capacity(parts);
    let mut start = 0;
    for p in 0..parts {
        let end = (n * (p + 1)) / parts;
        if end > start {
            out.push(&v[start..end]);
        }
        start = end;
    }
    out
}

/// Sequential elimination along null vectors of `a` (`r × P`) until at most
/// `r` weights remain positive.
fn caratheodory(a: &DMatrix<f64>, w: &[f64], alpha: Option<&[f64]>) -> Vec<f64> {
    let (r, p) = a.shape();
    let mut w = w.to_vec();
    if p <= r {
        return w;
    }
    // trailing columns of Q from the square, zero-padded [aᵀ | 0]
    let mut padded = DMatrix::zeros(p, p);
    padded.view_mut((0, 0), (p, r)).copy_from(&a.transpose());
    let q = padded.qr().q();
    let mut null: Vec<DVector<f64>> = (r..p).map(|j| q.column(j).clone_owned()).collect();

    for j in 0..null.len() {
        let v = null[j].clone();
        let dir_plus = alpha.is_some_and(|al| v.iter().zip(al).map(|(x, y)| x * y).sum::<f64>() > 0.0);
        // moving along s·v; entries with s·v_i < 0 bound the step
        let s = if dir_plus { 1.0 } else { -1.0 };
        let mut best: Option<(f64, usize)> = None;
        for i in 0..p {
            let d = s * v[i];
            if d < 0.0 {
                let t = w[i].max(0.0) / -d;
                if best.is_none_or(|(bt, _)| t < bt) {
                    best = Some((t, i));
                }
            }
        }
        let Some((t, i_star)) = best else {
            continue;
        };
        for i in 0..p {
            w[i] += t * s * v[i];
            if w[i] < 0.0 {
                w[i] = 0.0;
            }
        }
        w[i_star] = 0.0;
        let pivot = v[i_star];
        for u in null.iter_mut().skip(j + 1) {
            let f = u[i_star] / pivot;
            if f != 0.0 {
                u.axpy(-f, &v, 1.0);
            }
            u[i_star] = 0.0;
        }
    }
    w
}

/// Removes further points along exact null directions of the surviving
/// columns, found from the singular value decomposition.
fn reduce_rank_deficient(a: &DMatrix<f64>, mut w: Vec<f64>, alpha: Option<&[f64]>) -> Vec<f64> {
    loop {
        let live: Vec<usize> = (0..w.len()).filter(|&i| w[i] > 0.0).collect();
        if live.len() <= 1 {
            return w;
        }
        let sub = a.select_columns(&live);
        if live.len() > sub.nrows() {
            return w;
        }
        let svd = sub.svd(false, true);
        let vt = svd.v_t.expect("right singular vectors");
        let top = svd.singular_values.amax();
        let Some(j) = (0..svd.singular_values.len()).min_by(|&a, &b| svd.singular_values[a].total_cmp(&svd.singular_values[b])) else {
            return w;
        };
        if svd.singular_values[j] > RANK_TOL * top {
            return w;
        }
        let v = vt.row(j).transpose();
        let sw: Vec<f64> = live.iter().map(|&i| w[i]).collect();
        let sa: Option<Vec<f64>> = alpha.map(|al| live.iter().map(|&i| al[i]).collect());
        let dir_plus = sa.as_ref().is_some_and(|al| v.iter().zip(al).map(|(x, y)| x * y).sum::<f64>() > 0.0);
        let s = if dir_plus { 1.0 } else { -1.0 };
        let mut best: Option<(f64, usize)> = None;
        for i in 0..live.len() {
            let d = s * v[i];
            if d < 0.0 {
                let t = sw[i] / -d;
                if best.is_none_or(|(bt, _)| t < bt) {
                    best = Some((t, i));
                }
            }
        }
        let Some((t, i_star)) = best else {
            return w;
        };
        for (i, &gi) in live.iter().enumerate() {
            w[gi] = (sw[i] + t * s * v[i]).max(0.0);
        }
        w[live[i_star]] = 0.0;
    }
}

fn batch_from(m: &EmpiricalMeasure, indices: Vec<usize>, weights: Vec<f64>, af: &[f64], method: KqMethod) -> BatchSelection {
    let objective = indices.iter().zip(&weights).map(|(&i, w)| w * af[i]).sum();
    BatchSelection {
        points: m.points.select(&indices),
        indices,
        weights,
        objective,
        wce: f64::NAN,
        method,
    }
}

/// Recombination onto the leading `n − 1` Nyström test functions, steered
/// toward larger `Σ w α`.
pub fn objective_rchq<K: Covariance + ?Sized>(
    m: &EmpiricalMeasure,
    kernel: &K,
    nystrom: &NystromFeatures,
    af_vals: &[f64],
    n: usize,
    seed: u64,
) -> Result<BatchSelection> {
    if n < 1 {
        return Err(SoberError::InvalidArgument("batch size must be >= 1".into()));
    }
    if af_vals.len() != m.len() {
        return Err(SoberError::DimensionMismatch {
            expected: m.len(),
            got: af_vals.len(),
        });
    }
    let n_feat = nystrom.len().min(n - 1);
    let phi = if n_feat == 0 {
        DMatrix::zeros(0, m.len())
    } else {
        let mut trimmed = nystrom.clone();
        trimmed.eigenvalues.truncate(n_feat);
        trimmed.eigenvectors = nystrom.eigenvectors.columns(0, n_feat).into_owned();
        trimmed.eval(kernel, &m.points)
    };
    let rec = recombine(m, &phi, Some(af_vals), seed)?;
    let mut b = batch_from(m, rec.indices, rec.weights, af_vals, KqMethod::Rchq);
    if b.indices.len() > n {
        // only possible when the caller supplies fewer features than n − 1
        return Err(SoberError::Recombination("batch exceeds requested size".into()));
    }
    b.wce = wce_estimate(kernel, &b.points, &b.weights, m, true);
    Ok(b)
}

/// Greedy uniform-weight MMD minimisation over a pool of at most `pool`
/// candidates drawn `∝ w` without replacement. Ties go to larger `α`.
pub fn greedy_thinning<K: Covariance + ?Sized>(
    m: &EmpiricalMeasure,
    kernel: &K,
    af_vals: &[f64],
    n: usize,
    pool: usize,
    seed: u64,
) -> Result<BatchSelection> {
    let positive: Vec<usize> = (0..m.len()).filter(|&i| m.weights[i] > 0.0).collect();
    if n == 0 || n > positive.len() {
        return Err(SoberError::InvalidArgument(format!(
            "thinning needs 1 <= n <= {} positive-weight points, got {n}",
            positive.len()
        )));
    }
    let cand: Vec<usize> = if positive.len() <= pool {
        positive
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut keyed: Vec<(f64, usize)> = positive
            .iter()
            .map(|&i| {
                let u: f64 = rng.random::<f64>().max(f64::MIN_POSITIVE);
                (u.ln() / m.weights[i], i)
            })
            .collect();
        keyed.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
        let mut c: Vec<usize> = keyed.into_iter().take(pool.max(n)).map(|p| p.1).collect();
        c.sort_unstable();
        c
    };
    let cp = m.points.select(&cand);
    let z = kernel.mean_embedding(&cp, &m.points, &m.weights);
    let kcc = kernel.gram(&cp, &cp);
    let nc = cand.len();
    let mut taken = vec![false; nc];
    let mut cross = vec![0.0; nc];
    let (mut s_kk, mut s_z) = (0.0, 0.0);
    let mut chosen = Vec::with_capacity(n);
    for t in 0..n {
        let tt = (t + 1) as f64;
        let mut best: Option<(f64, usize)> = None;
        for c in 0..nc {
            if taken[c] {
                continue;
            }
            let score = (s_kk + 2.0 * cross[c] + kcc[(c, c)]) / (tt * tt) - 2.0 * (s_z + z[c]) / tt;
            best = match best {
                None => Some((score, c)),
                Some((bs, bc)) => {
                    let tol = 1e-12 * bs.abs().max(score.abs()).max(1e-300);
                    if score < bs - tol || ((score - bs).abs() <= tol && af_vals[cand[c]] > af_vals[cand[bc]]) {
                        Some((score, c))
                    } else {
                        Some((bs, bc))
                    }
                }
            };
        }
        let (_, c) = best.expect("candidate available");
        taken[c] = true;
        s_kk += 2.0 * cross[c] + kcc[(c, c)];
        s_z += z[c];
        for (o, x) in cross.iter_mut().enumerate() {
            *x += kcc[(o, c)];
        }
        chosen.push(cand[c]);
    }
    chosen.sort_unstable();
    let weights = vec![1.0 / n as f64; n];
    let mut b = batch_from(m, chosen, weights, af_vals, KqMethod::Thinning);
    b.wce = wce_estimate(kernel, &b.points, &b.weights, m, true);
    Ok(b)
}

/// `w_bᵀK(X_b,X_b)w_b − 2w_bᵀK(X_b,X)w`, plus `wᵀK(X,X)w` unless `skip_const`.
pub fn wce_estimate<K: Covariance + ?Sized>(
    kernel: &K,
    batch_points: &Points,
    batch_weights: &[f64],
    m: &EmpiricalMeasure,
    skip_const: bool,
) -> f64 {
    let bb = kernel.quadratic_form(batch_points, batch_weights);
    let cross: f64 = kernel
        .mean_embedding(batch_points, &m.points, &m.weights)
        .iter()
        .zip(batch_weights)
        .map(|(e, w)| e * w)
        .sum();
    let mut v = bb - 2.0 * cross;
    if !skip_const {
        v += kernel.quadratic_form(&m.points, &m.weights);
    }
    v
}

#[derive(Clone, Debug)]
pub struct AutoKqOptions {
    pub thinning: bool,
    pub pool: usize,
}

impl Default for AutoKqOptions {
    fn default() -> Self {
        AutoKqOptions {
            thinning: true,
            pool: DEFAULT_THINNING_POOL,
        }
    }
}

/// Runs both selectors and keeps the lower skip-constant wce; ties keep RCHQ.
pub fn auto_kq_select<K: Covariance + ?Sized>(
    m: &EmpiricalMeasure,
    kernel: &K,
    nystrom: &NystromFeatures,
    af_vals: &[f64],
    n: usize,
    seed: u64,
    opts: &AutoKqOptions,
) -> Result<BatchSelection> {
    let rchq = objective_rchq(m, kernel, nystrom, af_vals, n, seed)?;
    if !opts.thinning || m.n_positive() < n {
        return Ok(rchq);
    }
    let thin = greedy_thinning(m, kernel, af_vals, n, opts.pool, seed.wrapping_add(1))?;
    Ok(if thin.wce < rchq.wce { thin } else { rchq })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::{fit_nystrom, KernelParams};

    fn random_measure(n: usize, d: usize, seed: u64) -> EmpiricalMeasure {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = Points::from_flat(d, (0..n * d).map(|_| rng.random_range(0.0..1.0)).collect()).unwrap();
        let w = (0..n).map(|_| rng.random_range(0.01..1.0)).collect();
        EmpiricalMeasure::from_unnormalized(x, w).unwrap()
    }

    fn check_moments(m: &EmpiricalMeasure, phi: &DMatrix<f64>, r: &Recombined) {
        assert!(r.weights.iter().all(|w| *w >= 0.0));
        assert!((r.weights.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        for i in 0..phi.nrows() {
            let scale = phi.row(i).amax().max(1e-300);
            let a: f64 = (0..m.len()).map(|j| phi[(i, j)] * m.weights[j]).sum();
            let b: f64 = r.indices.iter().zip(&r.weights).map(|(&j, w)| phi[(i, j)] * w).sum();
            assert!((a - b).abs() <= 1e-6 * scale, "row {i}: {a} vs {b}");
        }
    }

    #[test]
    fn identity_when_small() {
        let m = random_measure(5, 2, 0);
        let phi = DMatrix::from_fn(4, 5, |i, j| (i + j) as f64);
        let r = recombine(&m, &phi, None, 0).unwrap();
        assert_eq!(r.indices, vec![0, 1, 2, 3, 4]);
        assert_eq!(r.weights, m.weights);
    }

    #[test]
    fn constant_test_function_gives_single_point() {
        let m = random_measure(100, 2, 1);
        let phi = DMatrix::from_element(1, 100, 1.0);
        let r = recombine(&m, &phi, None, 0).unwrap();
        assert_eq!(r.indices.len(), 1);
        assert_eq!(r.weights, vec![1.0]);
    }

    #[test]
    fn rbf_features_preserved() {
        let m = random_measure(1000, 2, 2);
        let k = KernelParams::rbf(1.0, vec![0.3, 0.3]).unwrap();
        let anchors = m.points.select(&(0..200).collect::<Vec<_>>());
        let nf = fit_nystrom(&k, &anchors, 31, 10, 0).unwrap();
        let phi = nf.eval(&k, &m.points);
        let r = recombine(&m, &phi, None, 3).unwrap();
        assert!(r.indices.len() <= 32);
        check_moments(&m, &phi, &r);
    }

    #[test]
    fn objective_picks_peak_candidate() {
        // exhaustive oracle: with one constant feature every single point is
        // feasible, so the best 1-point rule is the α maximiser
        let m = random_measure(12, 1, 3);
        let phi = DMatrix::from_element(1, 12, 1.0);
        let mut af = vec![0.0; 12];
        af[7] = 1.0;
        let r = recombine(&m, &phi, Some(&af), 0).unwrap();
        assert_eq!(r.indices, vec![7]);
    }

    #[test]
    fn objective_beats_plain_recombination() {
        let k = KernelParams::rbf(1.0, vec![0.4, 0.4]).unwrap();
        let mut wins = 0;
        for t in 0..50 {
            let m = random_measure(300, 2, 100 + t);
            let nf = fit_nystrom(&k, &m.points.select(&(0..60).collect::<Vec<_>>()), 9, 10, t).unwrap();
            let phi = nf.eval(&k, &m.points);
            let af: Vec<f64> = m.points.rows().map(|r| (-(r[0] - 0.8).powi(2) * 10.0).exp()).collect();
            let with = recombine(&m, &phi, Some(&af), t).unwrap();
            let without = recombine(&m, &phi, None, t).unwrap();
            let obj = |r: &Recombined| r.indices.iter().zip(&r.weights).map(|(&i, w)| w * af[i]).sum::<f64>();
            if obj(&with) >= obj(&without) {
                wins += 1;
            }
        }
        assert!(wins >= 40, "wins {wins}");
    }

    #[test]
    fn wce_small_instance_double_sum() {
        let m = random_measure(6, 2, 4);
        let k = KernelParams::rbf(1.0, vec![0.5, 0.5]).unwrap();
        let bp = m.points.select(&[1, 4]);
        let bw = [0.3, 0.7];
        let mut brute = 0.0;
        for i in 0..2 {
            for j in 0..2 {
                brute += bw[i] * bw[j] * k.eval_unchecked(bp.row(i), bp.row(j));
            }
            for j in 0..6 {
                brute -= 2.0 * bw[i] * m.weights[j] * k.eval_unchecked(bp.row(i), m.points.row(j));
            }
        }
        let skip = wce_estimate(&k, &bp, &bw, &m, true);
        assert!((skip - brute).abs() < 1e-12);
        for i in 0..6 {
            for j in 0..6 {
                brute += m.weights[i] * m.weights[j] * k.eval_unchecked(m.points.row(i), m.points.row(j));
            }
        }
        assert!((wce_estimate(&k, &bp, &bw, &m, false) - brute).abs() < 1e-12);
        assert!(wce_estimate(&k, &m.points, &m.weights, &m, false).abs() < 1e-12);
    }

    #[test]
    fn thinning_examples() {
        let k = KernelParams::rbf(1.0, vec![0.3]).unwrap();
        let m = EmpiricalMeasure::uniform(Points::from_flat(1, (0..20).map(|i| i as f64 / 20.0).collect()).unwrap()).unwrap();
        let af = vec![0.0; 20];
        let all = greedy_thinning(&m, &k, &af, 20, 1000, 0).unwrap();
        assert!(wce_estimate(&k, &all.points, &all.weights, &m, false).abs() < 1e-10);

        // symmetric two clusters, n = 1, against brute force
        let x: Vec<f64> = [0.0, 0.05, 0.1, 0.9, 0.95, 1.0].to_vec();
        let m = EmpiricalMeasure::uniform(Points::from_flat(1, x).unwrap()).unwrap();
        let af = vec![0.0; 6];
        let one = greedy_thinning(&m, &k, &af, 1, 1000, 0).unwrap();
        let best = (0..6)
            .map(|i| wce_estimate(&k, &m.points.select(&[i]), &[1.0], &m, true))
            .fold(f64::INFINITY, f64::min);
        assert!((one.wce - best).abs() < 1e-12);
    }

    #[test]
    fn thinning_beats_random_median() {
        let k = KernelParams::rbf(1.0, vec![0.2, 0.2]).unwrap();
        let m = random_measure(500, 2, 5);
        let af = vec![0.0; 500];
        let g = greedy_thinning(&m, &k, &af, 16, 1000, 0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let mut w: Vec<f64> = (0..100)
            .map(|_| {
                let idx: Vec<usize> = rand::seq::index::sample(&mut rng, 500, 16).into_vec();
                wce_estimate(&k, &m.points.select(&idx), &[1.0 / 16.0; 16], &m, true)
            })
            .collect();
        w.sort_by(|a, b| a.total_cmp(b));
        assert!(g.wce <= w[50]);
    }

    #[test]
    fn auto_kq_contract() {
        let k = KernelParams::rbf(1.0, vec![0.5, 0.5]).unwrap();
        let m = random_measure(400, 2, 7);
        let nf = fit_nystrom(&k, &m.points.select(&(0..100).collect::<Vec<_>>()), 15, 10, 0).unwrap();
        let af: Vec<f64> = m.points.rows().map(|r| r[0]).collect();
        let off = AutoKqOptions { thinning: false, pool: 1000 };
        let b = auto_kq_select(&m, &k, &nf, &af, 16, 1, &off).unwrap();
        assert_eq!(b.method, KqMethod::Rchq);
        let both = auto_kq_select(&m, &k, &nf, &af, 16, 1, &AutoKqOptions::default()).unwrap();
        let r = objective_rchq(&m, &k, &nf, &af, 16, 1).unwrap();
        let t = greedy_thinning(&m, &k, &af, 16, 1000, 2).unwrap();
        assert_eq!(both.wce, r.wce.min(t.wce));
    }
}
