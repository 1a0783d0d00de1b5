//! Physics-guided mixture of experts.
//!
//! A PSD encoder feeds a linear router over three experts of decreasing
//! capacity. Training mixes the experts' class distributions with the
//! router probabilities; inference runs only the top-1 expert.

mod layers;
mod loss;
mod model;
mod train;

pub use layers::{
    from_tokens, global_avg_pool, to_tokens, AggTrace, AggregatedAttention, CoordAttGlu, CoordAttTrace, Conv,
    GhostModule, Init, Linear, MobileMqa, MqaTrace, PsdEncoder, SeFusion, SkSelect, SkTrace,
};
pub use loss::{load_balance_loss, total_loss, GateOutput, LossBreakdown};
pub use model::{
    argmax, gather, Architecture, CostTable, Expert, GateMode, HardOutput, HeavyExpert, LightExpert, LossVars,
    MidExpert, ModelSpec, MoeModel, Router, SoftOutput, CE_EPS, EXPERT_NAMES, HEAVY, LIGHT, MID, N_EXPERTS,
};
pub use train::{
    fit, gate_statistics, predict_dataset, standardize_image, Batch, Dataset, EpochRecord, FitOptions, FitResult,
    Sample,
};
