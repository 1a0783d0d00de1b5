//! Discrete prolate spheroidal (Slepian) sequences.
//!
//! The tapers are eigenvectors of the symmetric tridiagonal matrix that
//! commutes with the time-bandwidth concentration operator:
//!
//! ```text
//! d_i = ((n − 1 − 2i) / 2)² · cos(2πW),   e_i = i(n − i) / 2,   W = nw / n
//! ```
//!
//! Its largest eigenvalues are found by Sturm-sequence bisection and the
//! matching eigenvectors by inverse iteration, so memory stays `O(n·k)` even
//! for 20 000-sample records. The concentration ratio of each taper,
//! `∫_{−W}^{W} |V(f)|² df`, is evaluated in closed form from the taper's
//! autocorrelation.

use std::collections::HashMap;
use std::sync::{Arc, OnceLock, RwLock};

use num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{bail, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DpssTapers {
    pub n: usize,
    pub nw: f64,
    /// `tapers[p]` is the `p`-th sequence, unit norm.
    pub tapers: Vec<Vec<f64>>,
    /// In-band energy concentration of each taper, strictly decreasing.
    pub eigenvalues: Vec<f64>,
}

impl DpssTapers {
    pub fn k(&self) -> usize {
        self.tapers.len()
    }
}

/// Symmetric tridiagonal matrix: `diag[i]`, and `off[i]` couples `i` and `i + 1`.
#[derive(Debug, Clone)]
pub struct Tridiagonal {
    pub diag: Vec<f64>,
    pub off: Vec<f64>,
}

impl Tridiagonal {
    pub fn slepian(n: usize, w: f64) -> Self {
        let c = (std::f64::consts::TAU * w).cos();
        let diag = (0..n)
            .map(|i| {
                let h = (n as f64 - 1.0 - 2.0 * i as f64) / 2.0;
                h * h * c
            })
            .collect();
        let off = (1..n).map(|i| (i * (n - i)) as f64 / 2.0).collect();
        Self { diag, off }
    }

    pub fn len(&self) -> usize {
        self.diag.len()
    }

    pub fn is_empty(&self) -> bool {
        self.diag.is_empty()
    }

    /// Number of eigenvalues strictly less than `x` (Sturm count).
    pub fn count_below(&self, x: f64) -> usize {
        let tiny = f64::MIN_POSITIVE.sqrt();
        let mut count = 0;
        let mut q = self.diag[0] - x;
        if q < 0.0 {
            count += 1;
        }
        for i in 1..self.len() {
            let denom = if q == 0.0 { tiny } else { q };
            q = self.diag[i] - x - self.off[i - 1] * self.off[i - 1] / denom;
            if q < 0.0 {
                count += 1;
            }
        }
        count
    }

    fn gershgorin(&self) -> (f64, f64) {
        let n = self.len();
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for i in 0..n {
            let r = if i > 0 { self.off[i - 1].abs() } else { 0.0 }
                + if i + 1 < n { self.off[i].abs() } else { 0.0 };
            lo = lo.min(self.diag[i] - r);
            hi = hi.max(self.diag[i] + r);
        }
        (lo, hi)
    }

    /// The `j`-th smallest eigenvalue (0-based) by bisection.
    pub fn eigenvalue(&self, j: usize) -> f64 {
        let (mut lo, mut hi) = self.gershgorin();
        let scale = lo.abs().max(hi.abs()).max(1.0);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi || hi - lo <= 4.0 * f64::EPSILON * scale {
                break;
            }
            if self.count_below(mid) > j {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        0.5 * (lo + hi)
    }

    /// Solves `(T − shift·I) y = b` by Gaussian elimination with partial
    /// pivoting; near-zero pivots are nudged so the solve always completes.
    fn solve_shifted(&self, shift: f64, b: &[f64]) -> Vec<f64> {
        let n = self.len();
        let norm = self.diag.iter().map(|d| d.abs()).fold(0.0, f64::max)
            + self.off.iter().map(|e| e.abs()).fold(0.0, f64::max);
        let guard = (f64::EPSILON * norm).max(f64::MIN_POSITIVE);
        // row i holds (a[i], b[i], c[i], fill[i]) for columns i, i+1, i+2
        let mut d: Vec<f64> = self.diag.iter().map(|v| v - shift).collect();
        let mut du: Vec<f64> = self.off.clone();
        let mut dl: Vec<f64> = self.off.clone();
        let mut du2 = vec![0.0; n.saturating_sub(2)];
        let mut rhs = b.to_vec();
        for i in 0..n.saturating_sub(1) {
            if d[i].abs() >= dl[i].abs() {
                if d[i].abs() < guard {
                    d[i] = guard;
                }
                let f = dl[i] / d[i];
                d[i + 1] -= f * du[i];
                rhs[i + 1] -= f * rhs[i];
                dl[i] = 0.0;
            } else {
                let f = d[i] / dl[i];
                d[i] = dl[i];
                let tmp = d[i + 1];
                d[i + 1] = du[i] - f * tmp;
                if i + 2 < n {
                    du2[i] = du[i + 1];
                    du[i + 1] = -f * du2[i];
                }
                du[i] = tmp;
                rhs.swap(i, i + 1);
                rhs[i + 1] -= f * rhs[i];
            }
        }
        if d[n - 1].abs() < guard {
            d[n - 1] = guard;
        }
        let mut y = vec![0.0; n];
        y[n - 1] = rhs[n - 1] / d[n - 1];
        if n >= 2 {
            y[n - 2] = (rhs[n - 2] - du[n - 2] * y[n - 1]) / d[n - 2];
        }
        for i in (0..n.saturating_sub(2)).rev() {
            y[i] = (rhs[i] - du[i] * y[i + 1] - du2[i] * y[i + 2]) / d[i];
        }
        y
    }

    /// Eigenvector for `lambda` by inverse iteration, orthogonalized against
    /// `previous`.
    pub fn eigenvector(&self, lambda: f64, previous: &[Vec<f64>]) -> Result<Vec<f64>> {
        let n = self.len();
        // deterministic, non-degenerate start vector
        let mut v: Vec<f64> = (0..n)
            .map(|i| 1.0 + 0.5 * ((i as f64 + 1.0) * 0.618_033_988_749_895).fract())
            .collect();
        normalize(&mut v);
        for _ in 0..6 {
            let mut y = self.solve_shifted(lambda, &v);
            orthogonalize(&mut y, previous);
            let norm = normalize(&mut y);
            if !norm.is_finite() || norm == 0.0 {
                bail!(Numeric, "inverse iteration broke down at eigenvalue {lambda:e} (n = {n})");
            }
            v = y;
        }
        let residual = self.residual(&v, lambda);
        let scale = self.diag.iter().map(|d| d.abs()).fold(0.0, f64::max).max(1.0);
        if residual > 1e-6 * scale {
            bail!(
                Numeric,
                "eigenvector residual {residual:e} too large for eigenvalue {lambda:e} (n = {n})"
            );
        }
        Ok(v)
    }

    /// `‖T v − λ v‖₂`.
    pub fn residual(&self, v: &[f64], lambda: f64) -> f64 {
        let n = self.len();
        (0..n)
            .map(|i| {
                let mut t = (self.diag[i] - lambda) * v[i];
                if i > 0 {
                    t += self.off[i - 1] * v[i - 1];
                }
                if i + 1 < n {
                    t += self.off[i] * v[i + 1];
                }
                t * t
            })
            .sum::<f64>()
            .sqrt()
    }
}

fn normalize(v: &mut [f64]) -> f64 {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm > 0.0 {
        v.iter_mut().for_each(|x| *x /= norm);
    }
    norm
}

fn orthogonalize(v: &mut [f64], basis: &[Vec<f64>]) {
    // two passes of modified Gram-Schmidt
    for _ in 0..2 {
        for b in basis {
            let dot: f64 = v.iter().zip(b).map(|(x, y)| x * y).sum();
            v.iter_mut().zip(b).for_each(|(x, y)| *x -= dot * y);
        }
    }
}

/// `∫_{−W}^{W} |V(f)|² df` for a unit-norm taper, via
/// `Σ_l r[l]·sin(2πWl)/(πl)` over its autocorrelation `r`.
pub fn concentration(taper: &[f64], w: f64) -> f64 {
    let n = taper.len();
    let size = (2 * n).next_power_of_two();
    let mut planner = FftPlanner::new();
    let fwd = planner.plan_fft_forward(size);
    let inv = planner.plan_fft_inverse(size);
    let mut buf: Vec<Complex64> = taper.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    buf.resize(size, Complex64::new(0.0, 0.0));
    fwd.process(&mut buf);
    buf.iter_mut().for_each(|z| *z = Complex64::new(z.norm_sqr(), 0.0));
    inv.process(&mut buf);
    let scale = 1.0 / size as f64;
    let mut total = 2.0 * w * buf[0].re * scale;
    for lag in 1..n {
        let l = lag as f64;
        let kernel = (std::f64::consts::TAU * w * l).sin() / (std::f64::consts::PI * l);
        total += 2.0 * kernel * buf[lag].re * scale;
    }
    total
}

fn fix_sign(p: usize, v: &mut [f64]) {
    let flip = if p % 2 == 0 {
        v.iter().sum::<f64>() < 0.0
    } else {
        let thresh = (1.0 / v.len() as f64).max(1e-7);
        v.iter().find(|x| *x * *x > thresh).is_some_and(|x| *x < 0.0)
    };
    if flip {
        v.iter_mut().for_each(|x| *x = -*x);
    }
}

/// The `k` leading Slepian tapers of length `n` and time-bandwidth `nw`.
pub fn dpss_tapers(n: usize, nw: f64, k: usize) -> Result<DpssTapers> {
    if n < 2 {
        bail!(Parameter, "taper length must be at least 2, got {n}");
    }
    if !(nw.is_finite() && nw > 0.0 && nw < n as f64 / 2.0) {
        bail!(Parameter, "time-bandwidth {nw} must lie in (0, n/2)");
    }
    if k == 0 || k > n {
        bail!(Parameter, "taper count {k} must lie in 1..={n}");
    }
    let w = nw / n as f64;
    let t = Tridiagonal::slepian(n, w);
    let mut tapers: Vec<Vec<f64>> = Vec::with_capacity(k);
    for p in 0..k {
        let lambda = t.eigenvalue(n - 1 - p);
        let mut v = t.eigenvector(lambda, &tapers)?;
        fix_sign(p, &mut v);
        tapers.push(v);
    }
    let eigenvalues: Vec<f64> = tapers.iter().map(|v| concentration(v, w)).collect();
    for (p, lam) in eigenvalues.iter().enumerate() {
        if !(*lam > 0.0 && *lam < 1.0 + 1e-9) {
            bail!(Numeric, "taper {p} has concentration {lam} outside (0, 1)");
        }
    }
    Ok(DpssTapers { n, nw, tapers, eigenvalues: eigenvalues.into_iter().map(|l| l.min(1.0)).collect() })
}

type CacheKey = (usize, u64, usize);

fn cache() -> &'static RwLock<HashMap<CacheKey, Arc<DpssTapers>>> {
    static CACHE: OnceLock<RwLock<HashMap<CacheKey, Arc<DpssTapers>>>> = OnceLock::new();
    CACHE.get_or_init(Default::default)
}

/// Memoized [`dpss_tapers`], shared across threads.
pub fn dpss_cached(n: usize, nw: f64, k: usize) -> Result<Arc<DpssTapers>> {
    let key = (n, nw.to_bits(), k);
    if let Some(t) = cache().read().expect("dpss cache poisoned").get(&key) {
        return Ok(Arc::clone(t));
    }
    let mut guard = cache().write().expect("dpss cache poisoned");
    if let Some(t) = guard.get(&key) {
        return Ok(Arc::clone(t));
    }
    let tapers = Arc::new(dpss_tapers(n, nw, k)?);
    guard.insert(key, Arc::clone(&tapers));
    Ok(tapers)
}
