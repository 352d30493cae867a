//! Acquisition functions marginalised over a weighted hypersample ensemble.

use std::f64::consts::{E, PI};

use serde::{Deserialize, Serialize};

use crate::error::{Result, SoberError};
use crate::pi::lfi_likelihood;
use crate::surrogate::EnsemblePrediction;

const SD_FLOOR: f64 = 1e-12;

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum AfKind {
    #[default]
    Lfi,
    Ei,
    Ucb {
        beta: f64,
    },
    MesFitbo,
    Bqbc,
    Qbmgp,
    None,
}

impl AfKind {
    /// UCB with the customary `β = 0.2`.
    pub fn ucb() -> Self {
        AfKind::Ucb { beta: 0.2 }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            AfKind::Ucb { beta } if !(*beta >= 0.0) => {
                Err(SoberError::InvalidArgument(format!("UCB beta must be >= 0, got {beta}")))
            }
            _ => Ok(()),
        }
    }

    pub fn default_for(ensemble: bool) -> Self {
        if ensemble {
            AfKind::MesFitbo
        } else {
            AfKind::Lfi
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Ok(match s.to_ascii_lowercase().as_str() {
            "lfi" => AfKind::Lfi,
            "ei" => AfKind::Ei,
            "ucb" => AfKind::ucb(),
            "mes" | "fitbo" | "mes_fitbo" => AfKind::MesFitbo,
            "bqbc" => AfKind::Bqbc,
            "qbmgp" | "qb-mgp" => AfKind::Qbmgp,
            "none" => AfKind::None,
            other => return Err(SoberError::InvalidArgument(format!("unknown acquisition '{other}'"))),
        })
    }
}

fn normal_pdf(z: f64) -> f64 {
    (-0.5 * z * z).exp() / (2.0 * PI).sqrt()
}

/// Raw AF values at the predicted points. `eta` is used by members that do
/// not carry their own threshold.
pub fn eval_af(kind: AfKind, pred: &EnsemblePrediction, eta: f64) -> Result<Vec<f64>> {
    kind.validate()?;
    let p = pred.n_points();
    let hs = 0..pred.n_members();
    let w = &pred.weights;
    Ok(match kind {
        AfKind::None => vec![0.0; p],
        AfKind::Lfi => lfi_likelihood(pred, eta),
        AfKind::Ei => (0..p)
            .map(|j| {
                hs.clone()
                    .map(|h| {
                        let e = pred.etas[h].unwrap_or(eta);
                        let d = pred.means[(h, j)] - e;
                        let sd = pred.vars[(h, j)].max(0.0).sqrt();
                        let v = if sd <= SD_FLOOR {
                            d.max(0.0)
                        } else {
                            let z = d / sd;
                            d * crate::measures::normal_cdf(z) + sd * normal_pdf(z)
                        };
                        w[h] * v
                    })
                    .sum()
            })
            .collect(),
        AfKind::Ucb { beta } => {
            let sb = beta.sqrt();
            (0..p)
                .map(|j| {
                    hs.clone()
                        .map(|h| w[h] * (pred.means[(h, j)] + sb * pred.vars[(h, j)].max(0.0).sqrt()))
                        .sum()
                })
                .collect()
        }
        AfKind::MesFitbo => {
            let total = pred.total_variance();
            let wn: f64 = hs.clone().map(|h| w[h] * pred.noise[h]).sum();
            (0..p)
                .map(|j| {
                    let first = 0.5 * (2.0 * PI * E * (total[j].max(0.0) + wn)).max(f64::MIN_POSITIVE).ln();
                    let second: f64 = hs
                        .clone()
                        .map(|h| {
                            let c = pred.vars[(h, j)].max(0.0) + pred.noise[h];
                            w[h] * 0.5 * (2.0 * PI * E * c).max(f64::MIN_POSITIVE).ln()
                        })
                        .sum();
                    first - second
                })
                .collect()
        }
        AfKind::Bqbc => pred.between_variance().iter().cloned().collect(),
        AfKind::Qbmgp => pred.total_variance().iter().cloned().collect(),
    })
}

/// Min-max scales to `[0, 1]`; a constant vector maps to zeros.
pub fn normalize_af(vals: &[f64]) -> Vec<f64> {
    let lo = vals.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = vals.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let span = hi - lo;
    if !(span > 0.0) || !span.is_finite() {
        return vec![0.0; vals.len()];
    }
    vals.iter().map(|v| (v - lo) / span).collect()
}
