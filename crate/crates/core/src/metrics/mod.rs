//! Classification metrics, FLOPs accounting and routing statistics.

mod classify;
mod flops;

pub use classify::{
    confusion, percentile, scores_from_counts, usage_histogram, ClassScores, ConfusionMatrix, EvalReport, Outcome,
    UsageTable,
};
pub use flops::{conv_flops, dense_flops, FlopsLedger, LayerKind, LayerRecord};
