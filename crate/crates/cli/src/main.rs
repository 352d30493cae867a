use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use sober::acquisition::AfKind;
use sober::bench::{run_benchmark, BenchmarkSpec, Method, Problem, Summary};
use sober::pi::PiVariant;
use sober::solver::{FbgpConfig, Mode};

/// Batch Bayesian optimisation and quadrature by kernel recombination.
///
/// Hartmann6 uses the standard 1e-4 scaling of the P matrix. Shekel4 uses
/// the reciprocal form; `--shekel-as-printed` switches to the plain sum.
#[derive(Parser)]
#[command(name = "sober", version)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run SOBER on a synthetic problem (single repeat).
    Optimize(Common),
    /// Estimate an integral under the prior (Gaussian BQ task by default).
    Quadrature(Common),
    /// Run SOBER and baselines over repeats; writes CSV and summary JSON.
    Bench(Common),
}

#[derive(Clone, Copy, ValueEnum)]
enum VariantArg {
    Lfi,
    Ts,
}

#[derive(Args)]
struct Common {
    /// JSON benchmark spec; flags below override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output CSV path; the summary goes next to it as `.summary.json`.
    #[arg(long, default_value = "results.csv")]
    out: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    /// ackley | rosenbrock | hartmann6 | shekel4 | gaussian_bq
    #[arg(long)]
    problem: Option<String>,
    /// Fingerprint library (JSONL or CSV with a y column) used as the problem.
    #[arg(long)]
    fingerprints: Option<PathBuf>,
    /// Binary dimensions of the Ackley problem.
    #[arg(long)]
    n_binary: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    iterations: Option<usize>,
    #[arg(long)]
    repeats: Option<usize>,
    #[arg(long, value_enum)]
    variant: Option<VariantArg>,
    /// Comma-separated: sober-lfi, sober-ts, random, plain_ts.
    #[arg(long, value_delimiter = ',')]
    methods: Option<Vec<String>>,
    /// lfi | ei | ucb | mes | bqbc | qbmgp | none
    #[arg(long)]
    af: Option<String>,
    /// Empirical measure size N.
    #[arg(long)]
    n_rec: Option<usize>,
    /// Nyström anchors M.
    #[arg(long)]
    n_nys: Option<usize>,
    /// Fully Bayesian GP via quadrature distillation.
    #[arg(long)]
    fbgp: bool,
    /// Distilled hypersample count.
    #[arg(long)]
    fbgp_h: Option<usize>,
    /// Choose between recombination and greedy thinning per batch.
    #[arg(long)]
    autokq: bool,
    #[arg(long)]
    shekel_as_printed: bool,
    /// Write wall-clock seconds into the CSV.
    #[arg(long)]
    timing: bool,
}

fn build_spec(c: &Common, cmd: &Cmd) -> Result<BenchmarkSpec> {
    let mut spec = match &c.config {
        Some(p) => BenchmarkSpec::from_json(p).with_context(|| format!("reading {}", p.display()))?,
        None => {
            let mut s = BenchmarkSpec::default();
            s.sober.n_rec = 4000;
            s.sober.n_nys = 200;
            s.sober.batch_size = 50;
            if matches!(cmd, Cmd::Quadrature(_)) {
                s.problem = Problem::parse("gaussian_bq")?;
                s.iterations = 5;
            }
            s
        }
    };
    if let Some(p) = &c.problem {
        spec.problem = Problem::parse(p)?;
    }
    if let Some(p) = &c.fingerprints {
        spec.problem = Problem::FingerprintFile { path: p.clone() };
    }
    if let Some(nb) = c.n_binary {
        match &mut spec.problem {
            Problem::Ackley { n_binary, .. } => *n_binary = nb,
            _ => bail!("--n-binary applies to the ackley problem only"),
        }
    }
    if c.shekel_as_printed {
        match &mut spec.problem {
            Problem::Shekel4 { as_printed } => *as_printed = true,
            _ => bail!("--shekel-as-printed applies to the shekel4 problem only"),
        }
    }
    if let Some(v) = c.seed {
        spec.seed = v;
    }
    if let Some(v) = c.batch_size {
        spec.sober.batch_size = v;
    }
    if let Some(v) = c.iterations {
        spec.iterations = v;
    }
    if let Some(v) = c.repeats {
        spec.repeats = v;
    }
    if let Some(v) = c.n_rec {
        spec.sober.n_rec = v;
    }
    if let Some(v) = c.n_nys {
        spec.sober.n_nys = v;
    }
    if let Some(a) = &c.af {
        spec.sober.af = Some(AfKind::parse(a)?);
    }
    if c.fbgp || c.fbgp_h.is_some() {
        let mut f = spec.sober.fbgp.clone().unwrap_or_default();
        if let Some(h) = c.fbgp_h {
            f.h = h;
            f.m_samples = f.m_samples.max(h);
        }
        spec.sober.fbgp = Some(FbgpConfig { ..f });
    }
    if c.autokq {
        spec.sober.autokq = true;
    }
    if c.timing {
        spec.timing = true;
    }
    if let Some(v) = c.variant {
        spec.sober.variant = match v {
            VariantArg::Lfi => PiVariant::Lfi,
            VariantArg::Ts => PiVariant::Ts,
        };
    }
    if let Some(ms) = &c.methods {
        spec.methods = ms.iter().map(|m| Method::parse(m.trim())).collect::<std::result::Result<_, _>>()?;
    }
    match cmd {
        Cmd::Optimize(_) | Cmd::Quadrature(_) => {
            if c.methods.is_none() {
                spec.methods = vec![match spec.sober.variant {
                    PiVariant::Lfi => Method::SoberLfi,
                    PiVariant::Ts => Method::SoberTs,
                }];
            }
            if c.repeats.is_none() {
                spec.repeats = 1;
            }
            if matches!(cmd, Cmd::Quadrature(_)) {
                if !spec.problem.is_quadrature() {
                    bail!("quadrature needs an integration problem (gaussian_bq)");
                }
                spec.sober.mode = Mode::Quadrature;
            }
        }
        Cmd::Bench(_) => {}
    }
    Ok(spec)
}

fn report(s: &Summary) {
    for m in &s.methods {
        let mut line = format!(
            "{:<10} best_y median {:.6} ± {:.2e}",
            m.method, m.final_best_y.median, m.final_best_y.stderr
        );
        if let Some(r) = &m.final_log10_regret {
            line += &format!("  log10 regret {:.3} ± {:.3}", r.median, r.stderr);
        }
        if let Some(e) = &m.final_evidence_rel_error {
            line += &format!("  evidence rel. error {:.4}", e.median);
        }
        println!("{line}");
    }
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let common = match &cli.cmd {
        Cmd::Optimize(c) | Cmd::Quadrature(c) | Cmd::Bench(c) => c,
    };
    let spec = build_spec(common, &cli.cmd)?;
    let summary = run_benchmark(&spec, &common.out)?;
    println!("{} ({} repeats, {} iterations) -> {}", summary.problem, summary.repeats, summary.iterations, common.out.display());
    report(&summary);
    Ok(())
}
