use rand::seq::index::sample;

use super::graph::{Graph, Var};
use super::param::{ParamId, ParamStore};
use crate::error::{bail, Result};
use crate::rng::rng_from_seed;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheckOptions {
    /// Central-difference step.
    pub step: f64,
    /// Gradients smaller than this are compared in absolute terms:
    /// `|a − n| / max(|a|, |n|, floor)`.
    pub floor: f64,
    /// Elements checked per parameter tensor; larger tensors are sampled.
    pub max_per_param: usize,
    pub seed: u64,
}

impl Default for GradCheckOptions {
    fn default() -> Self {
        Self { step: 1e-5, floor: 1e-4, max_per_param: usize::MAX, seed: 0 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradReport {
    pub max_rel_error: f64,
    pub worst_param: String,
    pub worst_index: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub checked: usize,
}

fn scalar(g: &Graph<'_, f64>, v: Var) -> Result<f64> {
    let t = g.value(v);
    if t.len() != 1 {
        bail!(Shape, "gradient check needs a scalar loss, got {:?}", t.shape);
    }
    Ok(t.data[0])
}

/// Compares reverse-mode gradients of `loss` with central differences.
pub fn grad_check<F>(store: &ParamStore<f64>, loss: F, opts: GradCheckOptions) -> Result<GradReport>
where
    F: Fn(&mut Graph<'_, f64>) -> Result<Var>,
{
    let analytic = {
        let mut g = Graph::new(store);
        let l = loss(&mut g)?;
        scalar(&g, l)?;
        g.backward(l)?
    };
    let mut rng = rng_from_seed(opts.seed);
    let mut work = store.clone();
    let mut report = GradReport {
        max_rel_error: 0.0,
        worst_param: String::new(),
        worst_index: 0,
        analytic: 0.0,
        numeric: 0.0,
        checked: 0,
    };
    let ids: Vec<ParamId> = store.iter().map(|(id, _, _)| id).collect();
    let eval = |work: &ParamStore<f64>| -> Result<f64> {
        let mut g = Graph::new(work);
        let l = loss(&mut g)?;
        scalar(&g, l)
    };
    for id in ids {
        let n = store.get(id).len();
        let picks: Vec<usize> = if n <= opts.max_per_param {
            (0..n).collect()
        } else {
            let mut v = sample(&mut rng, n, opts.max_per_param).into_vec();
            v.sort_unstable();
            v
        };
        for j in picks {
            let orig = store.get(id).data[j];
            work.get_mut(id).data[j] = orig + opts.step;
            let up = eval(&work)?;
            work.get_mut(id).data[j] = orig - opts.step;
            let down = eval(&work)?;
            work.get_mut(id).data[j] = orig;
            let numeric = (up - down) / (2.0 * opts.step);
            let a = analytic.get(id).data[j];
            let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(opts.floor);
            report.checked += 1;
            if rel > report.max_rel_error || report.worst_param.is_empty() {
                report = GradReport {
                    max_rel_error: rel.max(report.max_rel_error),
                    worst_param: store.name(id).to_string(),
                    worst_index: j,
                    analytic: a,
                    numeric,
                    checked: report.checked,
                };
            }
        }
    }
    Ok(report)
}
