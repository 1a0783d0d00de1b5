use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{bail, Result};

/// Counts indexed `[truth][prediction]` over 0-based class indices.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub counts: Vec<Vec<u64>>,
}

pub fn confusion(truths: &[usize], preds: &[usize], classes: usize) -> Result<ConfusionMatrix> {
    if truths.len() != preds.len() {
        bail!(Input, "{} truths for {} predictions", truths.len(), preds.len());
    }
    if classes == 0 {
        bail!(Input, "confusion matrix needs at least one class");
    }
    let mut counts = vec![vec![0; classes]; classes];
    for (&t, &p) in truths.iter().zip(preds) {
        if t >= classes || p >= classes {
            bail!(Input, "label pair ({t}, {p}) outside {classes} classes");
        }
        counts[t][p] += 1;
    }
    Ok(ConfusionMatrix { counts })
}

/// Precision, recall and F1 of one class; zero when a denominator is zero.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassScores {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

pub fn scores_from_counts(tp: u64, fp: u64, fn_: u64) -> ClassScores {
    let ratio = |num: u64, den: u64| if den == 0 { 0.0 } else { num as f64 / den as f64 };
    let precision = ratio(tp, tp + fp);
    let recall = ratio(tp, tp + fn_);
    let f1 = if precision + recall == 0.0 { 0.0 } else { 2.0 * precision * recall / (precision + recall) };
    ClassScores { precision, recall, f1 }
}

impl ConfusionMatrix {
    pub fn classes(&self) -> usize {
        self.counts.len()
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn trace(&self) -> u64 {
        (0..self.classes()).map(|i| self.counts[i][i]).sum()
    }

    /// Entrywise sum with a matrix over the same classes.
    pub fn merge(&self, other: &ConfusionMatrix) -> Result<ConfusionMatrix> {
        if self.classes() != other.classes() {
            bail!(Input, "cannot merge {} and {} class matrices", self.classes(), other.classes());
        }
        let counts = self
            .counts
            .iter()
            .zip(&other.counts)
            .map(|(a, b)| a.iter().zip(b).map(|(x, y)| x + y).collect())
            .collect();
        Ok(ConfusionMatrix { counts })
    }

    /// Overall accuracy in percent.
    pub fn oa(&self) -> Result<f64> {
        let total = self.total();
        if total == 0 {
            bail!(Input, "overall accuracy of an empty confusion matrix");
        }
        Ok(100.0 * self.trace() as f64 / total as f64)
    }

    pub fn class_scores(&self) -> Result<Vec<ClassScores>> {
        if self.total() == 0 {
            bail!(Input, "scores of an empty confusion matrix");
        }
        let c = self.classes();
        Ok((0..c)
            .map(|k| {
                let tp = self.counts[k][k];
                let fp = (0..c).map(|i| self.counts[i][k]).sum::<u64>() - tp;
                let fn_ = self.counts[k].iter().sum::<u64>() - tp;
                scores_from_counts(tp, fp, fn_)
            })
            .collect())
    }

    /// Recall pooled over all classes.
    pub fn micro_recall(&self) -> Result<f64> {
        Ok(self.oa()? / 100.0)
    }

    /// Rows are true classes, columns predictions, with a header row.
    pub fn to_csv(&self, names: &[String]) -> String {
        let label = |i: usize| names.get(i).cloned().unwrap_or_else(|| i.to_string());
        let mut out = String::from("truth");
        for j in 0..self.classes() {
            let _ = write!(out, ",{}", label(j));
        }
        out.push('\n');
        for (i, row) in self.counts.iter().enumerate() {
            out.push_str(&label(i));
            for v in row {
                let _ = write!(out, ",{v}");
            }
            out.push('\n');
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<ConfusionMatrix> {
        let mut lines = text.lines();
        let header = lines.next().ok_or_else(|| crate::Error::Format("empty confusion CSV".into()))?;
        let c = header.split(',').count().saturating_sub(1);
        let mut counts = Vec::with_capacity(c);
        for line in lines.filter(|l| !l.is_empty()) {
            let row: std::result::Result<Vec<u64>, _> = line.split(',').skip(1).map(str::parse).collect();
            let row = row.map_err(|e| crate::Error::Format(format!("confusion CSV: {e}")))?;
            if row.len() != c {
                bail!(Format, "confusion CSV row has {} entries, expected {c}", row.len());
            }
            counts.push(row);
        }
        if counts.len() != c {
            bail!(Format, "confusion CSV has {} rows, expected {c}", counts.len());
        }
        Ok(ConfusionMatrix { counts })
    }
}

/// Share of samples routed to each expert, per complexity tier (1, 2 or 3
/// superposed primitives).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UsageTable {
    /// `fractions[tier - 1][expert]`; a tier without samples has a zero row.
    pub fractions: Vec<Vec<f64>>,
    pub counts: Vec<u64>,
}

/// `records` are `(tier, expert)` pairs.
pub fn usage_histogram(records: &[(usize, usize)], experts: usize) -> Result<UsageTable> {
    let mut tally = vec![vec![0u64; experts]; 3];
    for &(tier, e) in records {
        if !(1..=3).contains(&tier) || e >= experts {
            bail!(Input, "usage record (tier {tier}, expert {e}) out of range");
        }
        tally[tier - 1][e] += 1;
    }
    let counts: Vec<u64> = tally.iter().map(|r| r.iter().sum()).collect();
    let fractions = tally
        .iter()
        .zip(&counts)
        .map(|(row, &n)| row.iter().map(|&k| if n == 0 { 0.0 } else { k as f64 / n as f64 }).collect())
        .collect();
    Ok(UsageTable { fractions, counts })
}

impl UsageTable {
    pub fn to_csv(&self, expert_names: &[&str]) -> String {
        let mut out = String::from("tier,samples");
        for n in expert_names {
            let _ = write!(out, ",{n}");
        }
        out.push('\n');
        for (t, row) in self.fractions.iter().enumerate() {
            let _ = write!(out, "{},{}", t + 1, self.counts[t]);
            for v in row {
                let _ = write!(out, ",{v:.6}");
            }
            out.push('\n');
        }
        out
    }
}

/// Nearest-rank percentile of `values`, `q ∈ [0, 100]`.
pub fn percentile(values: &[u64], q: f64) -> Option<u64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_unstable();
    let rank = ((q / 100.0) * v.len() as f64).ceil().max(1.0) as usize;
    Some(v[rank.min(v.len()) - 1])
}

/// Everything reported for one evaluation run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub samples: usize,
    pub oa: f64,
    pub class_names: Vec<String>,
    pub precision: Vec<f64>,
    pub recall: Vec<f64>,
    pub f1: Vec<f64>,
    pub confusion: ConfusionMatrix,
    pub flops_mean: f64,
    pub flops_p50: u64,
    pub flops_p95: u64,
    pub usage: UsageTable,
}

/// Per-sample outcome consumed by [`EvalReport::build`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Outcome {
    pub truth: usize,
    pub predicted: usize,
    pub tier: usize,
    pub expert: usize,
    pub flops: u64,
}

impl EvalReport {
    pub fn build(outcomes: &[Outcome], class_names: Vec<String>, experts: usize) -> Result<Self> {
        if outcomes.is_empty() {
            bail!(Input, "evaluation needs at least one sample");
        }
        let truths: Vec<usize> = outcomes.iter().map(|o| o.truth).collect();
        let preds: Vec<usize> = outcomes.iter().map(|o| o.predicted).collect();
        let confusion = confusion(&truths, &preds, class_names.len())?;
        let scores = confusion.class_scores()?;
        let flops: Vec<u64> = outcomes.iter().map(|o| o.flops).collect();
        let usage = usage_histogram(&outcomes.iter().map(|o| (o.tier, o.expert)).collect::<Vec<_>>(), experts)?;
        Ok(Self {
            samples: outcomes.len(),
            oa: confusion.oa()?,
            class_names,
            precision: scores.iter().map(|s| s.precision).collect(),
            recall: scores.iter().map(|s| s.recall).collect(),
            f1: scores.iter().map(|s| s.f1).collect(),
            confusion,
            flops_mean: flops.iter().map(|&f| f as f64).sum::<f64>() / flops.len() as f64,
            flops_p50: percentile(&flops, 50.0).unwrap_or(0),
            flops_p95: percentile(&flops, 95.0).unwrap_or(0),
            usage,
        })
    }
}
