//! Gate statistics and the training objective on plain values.

use serde::{Deserialize, Serialize};

use super::model::{argmax, CE_EPS, N_EXPERTS};
use crate::error::{bail, Result};

/// Router output for a batch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GateOutput {
    pub probs: Vec<[f64; N_EXPERTS]>,
    pub argmax: Vec<usize>,
    /// Fraction of samples whose argmax is each expert.
    pub fraction: [f64; N_EXPERTS],
    /// Mean router probability of each expert.
    pub mean_prob: [f64; N_EXPERTS],
}

impl GateOutput {
    pub fn from_probs(probs: Vec<[f64; N_EXPERTS]>) -> Result<Self> {
        if probs.is_empty() {
            bail!(Input, "gate statistics need at least one sample");
        }
        let b = probs.len() as f64;
        let argmax: Vec<usize> = probs.iter().map(|r| argmax(r)).collect();
        let mut fraction = [0.0; N_EXPERTS];
        let mut mean_prob = [0.0; N_EXPERTS];
        for (row, &e) in probs.iter().zip(&argmax) {
            fraction[e] += 1.0 / b;
            for (m, p) in mean_prob.iter_mut().zip(row) {
                *m += p / b;
            }
        }
        Ok(Self { probs, argmax, fraction, mean_prob })
    }
}

/// `N_E · Σ_e f_e · ḡ_e`.
pub fn load_balance_loss(gate: &GateOutput) -> f64 {
    N_EXPERTS as f64 * gate.fraction.iter().zip(&gate.mean_prob).map(|(f, g)| f * g).sum::<f64>()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub ce: f64,
    pub aux: f64,
    pub total: f64,
    pub lambda: f64,
}

/// Batch-mean `−ln(p[y] + ε)` plus `λ·aux`.
pub fn total_loss(probs: &[Vec<f64>], labels: &[usize], aux: f64, lambda: f64) -> Result<LossBreakdown> {
    if probs.len() != labels.len() || probs.is_empty() {
        bail!(Input, "{} probability rows for {} labels", probs.len(), labels.len());
    }
    let mut ce = 0.0;
    for (row, &y) in probs.iter().zip(labels) {
        if y >= row.len() {
            bail!(Input, "label {y} outside {} classes", row.len());
        }
        ce -= (row[y] + CE_EPS).ln();
    }
    ce /= labels.len() as f64;
    Ok(LossBreakdown { ce, aux, total: ce + lambda * aux, lambda })
}
