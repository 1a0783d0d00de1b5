use serde::{Deserialize, Serialize};

use crate::error::{bail, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum HannKind {
    /// `sin²(πn/(N−1))`, zero at both ends.
    Symmetric,
    /// `sin²(πn/N)`, one period of a length-`N` cosine; the spectral-analysis default.
    #[default]
    Periodic,
}

pub fn hann_window(n_win: usize, kind: HannKind) -> Result<Vec<f64>> {
    if n_win < 2 {
        bail!(Parameter, "Hann window needs at least 2 points, got {n_win}");
    }
    let denom = match kind {
        HannKind::Symmetric => (n_win - 1) as f64,
        HannKind::Periodic => n_win as f64,
    };
    Ok((0..n_win)
        .map(|n| (std::f64::consts::PI * n as f64 / denom).sin().powi(2))
        .collect())
}
