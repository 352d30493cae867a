//! Acceptance harness: one PASS/FAIL line per criterion. Pass criterion
//! numbers as arguments to run a subset.

use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use sober::bench::{
    median, run_benchmark, run_rows, BenchmarkSpec, Method, MetricsRow, Problem,
};
use sober::distillation::{bq_weights, fbgp_predict, qd_mcmc, rwm_chain, HyperPrior, McmcOptions};
use sober::gp::{fit_mle, from_log_params, Dataset, GpModel, MleOptions};
use sober::kernels::{eval_kernel, fit_nystrom, Covariance, KernelKind, KernelParams, DEFAULT_OVERSAMPLE};
use sober::measures::EmpiricalMeasure;
use sober::recombination::{objective_rchq, recombine, wce_estimate, MOMENT_TOL};
use sober::solver::SoberConfig;
use sober::Points;

type Outcome = (bool, String);

fn uniform_points(n: usize, d: usize, rng: &mut ChaCha8Rng) -> Points {
    Points::from_flat(d, (0..n * d).map(|_| rng.random::<f64>()).collect()).unwrap()
}

fn binary_points(n: usize, d: usize, rng: &mut ChaCha8Rng) -> Points {
    let mut data = Vec::with_capacity(n * d);
    for _ in 0..n {
        let row: Vec<f64> = (0..d).map(|_| (rng.random::<f64>() < 0.3) as u8 as f64).collect();
        if row.iter().all(|v| *v == 0.0) {
            data.extend(std::iter::once(1.0).chain(row[1..].iter().cloned()));
        } else {
            data.extend(row);
        }
    }
    Points::from_flat(d, data).unwrap()
}

fn moments_ok(m: &EmpiricalMeasure, phi: &DMatrix<f64>, idx: &[usize], w: &[f64]) -> bool {
    let sum: f64 = w.iter().sum();
    if w.iter().any(|v| *v < 0.0) || (sum - 1.0).abs() > 1e-9 {
        return false;
    }
    (0..phi.nrows()).all(|r| {
        let full: f64 = (0..m.len()).map(|i| m.weights[i] * phi[(r, i)]).sum();
        let red: f64 = idx.iter().zip(w).map(|(&i, v)| v * phi[(r, i)]).sum();
        (full - red).abs() <= MOMENT_TOL * full.abs().max(1.0)
    })
}

fn c1_recombination() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut bad = 0;
    for t in 0..200u64 {
        let n_pts = rng.random_range(200..=2000);
        let n = rng.random_range(8..=64);
        let (x, k) = if t % 2 == 0 {
            let ls = rng.random_range(0.1..1.0);
            (uniform_points(n_pts, 3, &mut rng), KernelParams::rbf(1.0, vec![ls; 3]).unwrap())
        } else {
            (binary_points(n_pts, 24, &mut rng), KernelParams::tanimoto(1.0).unwrap())
        };
        let w: Vec<f64> = (0..n_pts).map(|_| rng.random_range(0.01..1.0)).collect();
        let m = EmpiricalMeasure::from_unnormalized(x, w).unwrap();
        let anchors = m.points.select(&(0..200.min(n_pts)).collect::<Vec<_>>());
        let nf = fit_nystrom(&k, &anchors, n - 1, DEFAULT_OVERSAMPLE, t).unwrap();
        let phi = nf.eval(&k, &m.points);
        match recombine(&m, &phi, None, t) {
            Ok(r) if r.indices.len() <= n && moments_ok(&m, &phi, &r.indices, &r.weights) => {}
            _ => bad += 1,
        }
    }
    let x = uniform_points(16000, 3, &mut rng);
    let m = EmpiricalMeasure::uniform(x).unwrap();
    let k = KernelParams::rbf(1.0, vec![0.3; 3]).unwrap();
    let anchors = m.points.select(&(0..500).collect::<Vec<_>>());
    let nf = fit_nystrom(&k, &anchors, 63, DEFAULT_OVERSAMPLE, 0).unwrap();
    let phi = nf.eval(&k, &m.points);
    let start = Instant::now();
    let big = recombine(&m, &phi, None, 0);
    let secs = start.elapsed().as_secs_f64();
    let big_ok = big.map(|r| moments_ok(&m, &phi, &r.indices, &r.weights)).unwrap_or(false);
    (
        bad == 0 && big_ok && secs < 10.0,
        format!("{bad}/200 instances violated; N=16000 n=64 in {secs:.2}s (contract held: {big_ok})"),
    )
}

fn c2_wce_dominance() -> Outcome {
    let mut wins = 0;
    for t in 0..50u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(100 + t);
        let m = EmpiricalMeasure::uniform(uniform_points(1000, 2, &mut rng)).unwrap();
        let k = KernelParams::rbf(1.0, vec![0.2, 0.2]).unwrap();
        let anchors = m.points.select(&(0..300).collect::<Vec<_>>());
        let nf = fit_nystrom(&k, &anchors, 31, DEFAULT_OVERSAMPLE, t).unwrap();
        let b = objective_rchq(&m, &k, &nf, &vec![0.0; 1000], 32, t).unwrap();
        let rand_wce: Vec<f64> = (0..100)
            .map(|_| {
                let mut idx: Vec<usize> = (0..1000).collect();
                for i in 0..32 {
                    let j = rng.random_range(i..1000);
                    idx.swap(i, j);
                }
                idx.truncate(32);
                wce_estimate(&k, &m.points.select(&idx), &[1.0 / 32.0; 32], &m, true)
            })
            .collect();
        wins += (b.wce <= median(&rand_wce)) as usize;
    }
    (wins >= 45, format!("SOBER wce below random-subset median in {wins}/50 trials"))
}

fn sample_gp(k: &KernelParams, x: &Points, noise: f64, seed: u64) -> Vec<f64> {
    let mut g = k.gram(x, x);
    for i in 0..x.len() {
        g[(i, i)] += noise + 1e-10;
    }
    let l = g.cholesky().unwrap().l();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let z = DVector::from_fn(x.len(), |_, _| Distribution::<f64>::sample(&StandardNormal, &mut rng));
    (l * z).iter().cloned().collect()
}

fn c3_gp() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let x = uniform_points(30, 2, &mut rng);
    let y: Vec<f64> = x.rows().map(|r| (3.0 * r[0]).sin() + r[1] * r[1]).collect();
    let k = KernelParams::rbf(1.0, vec![0.4, 0.6]).unwrap();
    let gp = GpModel::new(Dataset::new(x.clone(), y.clone()).unwrap(), k, 0.0).unwrap();
    let resid = gp.mean(&x).unwrap().iter().zip(&y).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);

    let noisy = Dataset::new(x.clone(), y.iter().map(|v| v + 0.05 * rng.random::<f64>()).collect()).unwrap();
    let gp = GpModel::new(noisy.clone(), KernelParams::rbf(0.8, vec![0.5, 0.9]).unwrap(), 0.03).unwrap();
    let p = gp.log_params();
    let g = gp.lml_gradient();
    let mut worst: f64 = 0.0;
    for i in 0..p.len() {
        let f = |d: f64| {
            let mut q = p.clone();
            q[i] += d;
            let (k, s) = from_log_params(KernelKind::RbfArd, &q).unwrap();
            GpModel::new(noisy.clone(), k, s).unwrap().log_marginal_likelihood()
        };
        let fd = (f(1e-5) - f(-1e-5)) / 2e-5;
        worst = worst.max((fd - g[i]).abs() / fd.abs().max(1e-2));
    }

    let truth = KernelParams::rbf(1.0, vec![0.5]).unwrap();
    let xs = uniform_points(200, 1, &mut rng);
    let ys = sample_gp(&truth, &xs, 0.01, 4);
    let init = KernelParams::rbf(1.0, vec![1.0]).unwrap();
    let fit = fit_mle(&Dataset::new(xs, ys).unwrap(), &init, 0.1, &MleOptions { restarts: 4, seed: 1, max_iter: 100 }).unwrap();
    let dl = (fit.kernel.lengthscales[0].ln() - 0.5f64.ln()).abs();
    (
        resid <= 1e-8 && worst <= 1e-4 && dl <= 0.3,
        format!("interpolation residual {resid:.1e}; gradient rel. error {worst:.1e}; log-lengthscale error {dl:.3}"),
    )
}

fn sci(v: &[f64]) -> String {
    let parts: Vec<String> = v.iter().map(|x| format!("{x:.1e}")).collect();
    format!("[{}]", parts.join(", "))
}

fn c4_nystrom() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let anchors = uniform_points(120, 2, &mut rng);
    let k = KernelParams::rbf(1.0, vec![0.5, 0.5]).unwrap();
    let g = k.gram(&anchors, &anchors);
    let err = |f: usize| {
        let nf = fit_nystrom(&k, &anchors, f, DEFAULT_OVERSAMPLE, 0).unwrap();
        (nf.approx_gram(&k, &anchors) - &g).norm() / g.norm()
    };
    let full = err(120);
    let seq: Vec<f64> = [1, 2, 4, 8, 16, 32, 64, 120].iter().map(|&f| err(f)).collect();
    let monotone = seq.windows(2).all(|w| w[1] <= w[0] + 1e-12);
    (full <= 1e-6 && monotone, format!("full-rank rel. error {full:.1e}; errors by rank {}", sci(&seq)))
}

fn final_rows<'a>(rows: &'a [MetricsRow], method: Method, last: usize) -> Vec<&'a MetricsRow> {
    rows.iter().filter(|r| r.method == method.name() && r.iteration == last).collect()
}

fn desk_config(n: usize) -> SoberConfig {
    SoberConfig {
        batch_size: n,
        n_rec: 4000,
        n_nys: 200,
        ..Default::default()
    }
}

fn ackley_rows() -> (Vec<MetricsRow>, f64) {
    let spec = BenchmarkSpec {
        problem: Problem::ackley(8),
        repeats: 10,
        iterations: 10,
        seed: 2024,
        methods: vec![Method::SoberLfi, Method::Random, Method::PlainTs],
        sober: desk_config(50),
        timing: false,
    };
    let start = Instant::now();
    let (_, rows) = run_rows(&spec).unwrap();
    (rows, start.elapsed().as_secs_f64())
}

fn c5_ackley(rows: &[MetricsRow], secs: f64) -> Outcome {
    let reg = |m| median(&final_rows(rows, m, 9).iter().map(|r| r.simple_regret.unwrap().max(1e-12).log10()).collect::<Vec<_>>());
    let (s, r, t) = (reg(Method::SoberLfi), reg(Method::Random), reg(Method::PlainTs));
    (
        s <= r - 0.5 && s < t && secs <= 600.0,
        format!("median log10 regret: sober-lfi {s:.3}, random {r:.3}, plain_ts {t:.3}; {secs:.0}s"),
    )
}

fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let (ma, mb) = (a.iter().sum::<f64>() / n, b.iter().sum::<f64>() / n);
    let cov: f64 = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum();
    let va: f64 = a.iter().map(|x| (x - ma).powi(2)).sum();
    let vb: f64 = b.iter().map(|y| (y - mb).powi(2)).sum();
    cov / (va * vb).sqrt()
}

fn c8_correlations(rows: &[MetricsRow]) -> Outcome {
    let pooled: Vec<&MetricsRow> = rows.iter().filter(|r| r.br.is_some() && r.mv.is_some() && r.md.is_some()).collect();
    let br: Vec<f64> = pooled.iter().map(|r| r.br.unwrap()).collect();
    let mv: Vec<f64> = pooled.iter().map(|r| r.mv.unwrap()).collect();
    let md: Vec<f64> = pooled.iter().map(|r| r.md.unwrap()).collect();
    let (a, b) = (pearson(&br, &mv), pearson(&br, &md));
    (a >= 0.7 && b >= 0.7, format!("Pearson(BR,MV) {a:.3}, Pearson(BR,MD) {b:.3} over {} rows", br.len()))
}

fn c6_synthetic() -> Outcome {
    let mut msgs = Vec::new();
    let mut ok = true;
    for problem in [Problem::Hartmann6, Problem::Shekel4 { as_printed: false }] {
        let spec = BenchmarkSpec {
            problem,
            repeats: 10,
            iterations: 10,
            seed: 77,
            methods: vec![Method::SoberLfi, Method::Random],
            sober: desk_config(32),
            timing: false,
        };
        let name = spec.problem.name();
        let (_, rows) = run_rows(&spec).unwrap();
        let s = final_rows(&rows, Method::SoberLfi, 9);
        let r = final_rows(&rows, Method::Random, 9);
        let wins = s.iter().zip(&r).filter(|(a, b)| a.repeat == b.repeat && a.best_y >= b.best_y).count();
        ok &= wins >= 8;
        msgs.push(format!("{name} {wins}/10"));
    }
    (ok, format!("SOBER-LFI best >= random in paired seeds: {}", msgs.join(", ")))
}

fn c7_quadrature() -> Outcome {
    let spec = BenchmarkSpec {
        problem: Problem::parse("gaussian_bq").unwrap(),
        repeats: 5,
        iterations: 5,
        seed: 5,
        methods: vec![Method::SoberLfi],
        sober: desk_config(50),
        timing: false,
    };
    let (inst, rows) = run_rows(&spec).unwrap();
    let truth = inst.truth.unwrap();
    let err = median(&final_rows(&rows, Method::SoberLfi, 4).iter().map(|r| ((r.evidence_mean.unwrap() - truth) / truth).abs()).collect::<Vec<_>>());
    let nonneg = rows.iter().all(|r| r.evidence_var.is_some_and(|v| v >= 0.0));
    let med_var: Vec<f64> = (0..5)
        .map(|it| median(&final_rows(&rows, Method::SoberLfi, it).iter().map(|r| r.evidence_var.unwrap()).collect::<Vec<_>>()))
        .collect();
    let decreasing = med_var[4] < med_var[0] && med_var.windows(2).filter(|w| w[1] < w[0]).count() >= 3;
    (
        err <= 0.05 && nonneg && decreasing,
        format!("median evidence rel. error {err:.4}; median variance by iteration {}", sci(&med_var)),
    )
}

// evenly spread hypersamples keep every weight, and so the MC oracle, well resolved
fn ring(n: usize) -> Points {
    let rows: Vec<[f64; 2]> = (0..n)
        .map(|i| {
            let a = std::f64::consts::TAU * i as f64 / n as f64;
            [a.cos(), a.sin()]
        })
        .collect();
    Points::from_rows(&rows).unwrap()
}

fn c9_distillation() -> Outcome {
    let x = Points::from_flat(1, vec![0.05, 0.3, 0.5, 0.72, 0.95]).unwrap();
    let y = x.rows().map(|r| (6.0 * r[0]).sin()).collect();
    let ds = Dataset::new(x, y).unwrap();
    let prior = HyperPrior::standard(3);
    let opts = McmcOptions::default();
    let (hm, _) = qd_mcmc(&ds, &prior, KernelKind::RbfArd, 2000, 20, None, &opts, 21).unwrap();
    let (chain, _) = rwm_chain(&ds, &prior, KernelKind::RbfArd, 2000, &opts, 21).unwrap();
    let grid = Points::from_flat(1, (0..50).map(|i| i as f64 / 49.0).collect()).unwrap();
    let mut oracle = DVector::zeros(grid.len());
    for t in &chain {
        let (k, s2) = from_log_params(KernelKind::RbfArd, t).unwrap();
        oracle += GpModel::new(ds.clone(), k, s2).unwrap().mean(&grid).unwrap();
    }
    oracle /= chain.len() as f64;
    let qd = fbgp_predict(&hm, &ds, &grid).unwrap().mean;
    let rel_rmse = ((&qd - &oracle).norm_squared() / grid.len() as f64).sqrt() / (oracle.max() - oracle.min());

    let theta = ring(5);
    let k = KernelParams::rbf(1.0, vec![1.0, 1.3]).unwrap();
    let gp = GpModel::new(Dataset::new(theta.clone(), vec![1.0, 0.6, 0.3, 0.5, 0.2]).unwrap(), k.clone(), 0.05).unwrap();
    let w = bq_weights(&gp, &HyperPrior::standard(2)).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let n = 1_000_000;
    let mut z = vec![0.0; theta.len()];
    for _ in 0..n {
        let s: [f64; 2] = [StandardNormal.sample(&mut rng), StandardNormal.sample(&mut rng)];
        for (i, zi) in z.iter_mut().enumerate() {
            *zi += eval_kernel(&k, &s, theta.row(i)).unwrap();
        }
    }
    let w_mc = gp.solve(&DMatrix::from_iterator(theta.len(), 1, z.iter().map(|v| v / n as f64)));
    let bq_err = (0..theta.len()).map(|i| ((w[i] - w_mc[(i, 0)]) / w_mc[(i, 0)]).abs()).fold(0.0, f64::max);
    (
        rel_rmse <= 0.02 && bq_err <= 0.01,
        format!("H=20 predictive-mean RMSE {:.2}% of range; BQ weights max rel. error {:.3}%", 100.0 * rel_rmse, 100.0 * bq_err),
    )
}

fn c10_determinism() -> Outcome {
    let spec = BenchmarkSpec {
        problem: Problem::ackley(4),
        repeats: 2,
        iterations: 3,
        seed: 10,
        methods: vec![Method::SoberLfi, Method::SoberTs, Method::Random, Method::PlainTs],
        sober: SoberConfig {
            batch_size: 10,
            n_rec: 800,
            n_nys: 80,
            ..Default::default()
        },
        timing: false,
    };
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a.csv"), dir.path().join("b.csv"));
    run_benchmark(&spec, &a).unwrap();
    run_benchmark(&spec, &b).unwrap();
    let same = std::fs::read(&a).unwrap() == std::fs::read(&b).unwrap();
    (same, format!("two seeded runs byte-identical: {same}"))
}

fn main() {
    let selected: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let want = |i: usize| selected.is_empty() || selected.contains(&i);
    let mut results: Vec<(usize, &str, Outcome)> = Vec::new();
    let mut run = |i: usize, name: &'static str, f: &mut dyn FnMut() -> Outcome| {
        if want(i) {
            let o = f();
            println!("criterion {i:>2} {} {name}: {}", if o.0 { "PASS" } else { "FAIL" }, o.1);
            results.push((i, name, o));
        }
    };
    run(1, "recombination contract", &mut c1_recombination);
    run(2, "wce dominance", &mut c2_wce_dominance);
    run(3, "GP correctness", &mut c3_gp);
    run(4, "Nystrom", &mut c4_nystrom);
    let ackley = (want(5) || want(8)).then(ackley_rows);
    if let Some((rows, secs)) = &ackley {
        run(5, "desk-scale Ackley", &mut || c5_ackley(rows, *secs));
    }
    run(6, "Hartmann6 and Shekel4", &mut c6_synthetic);
    run(7, "quadrature mode", &mut c7_quadrature);
    if let Some((rows, _)) = &ackley {
        let sober: Vec<MetricsRow> = rows.iter().filter(|r| r.method == Method::SoberLfi.name()).cloned().collect();
        run(8, "metric correlations", &mut || c8_correlations(&sober));
    }
    run(9, "quadrature distillation", &mut c9_distillation);
    run(10, "determinism", &mut c10_determinism);
    let failed = results.iter().filter(|r| !r.2 .0).count();
    println!("{} passed, {failed} failed", results.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
