//! Parameter and FLOPs report of a checkpoint.

use std::path::Path;

use jamlab::moe::{EXPERT_NAMES, N_EXPERTS};
use serde::{Deserialize, Serialize};

use crate::checkpoint::load_checkpoint;
use crate::error::{write_file, CliError, Result};

pub const LEDGER_FILE: &str = "ledger.csv";
pub const SUMMARY_FILE: &str = "flops.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FlopsSummary {
    /// Every trainable value, biases included.
    pub total_params: usize,
    pub router_params: usize,
    pub expert_params: [usize; N_EXPERTS],
    /// Weight parameters counted by the ledger.
    pub ledger_params: u64,
    pub router_flops: u64,
    pub router_head_flops: u64,
    pub expert_flops: [u64; N_EXPERTS],
    /// Router plus one expert, per expert.
    pub hard_route_flops: [u64; N_EXPERTS],
    pub usage: [f64; N_EXPERTS],
    pub expected_flops: f64,
    /// Routing head over the expected cost.
    pub router_head_share: f64,
}

/// Parses `a,b,c` into a usage distribution over the experts.
pub fn parse_usage(s: &str) -> Result<[f64; N_EXPERTS]> {
    let parts: Vec<f64> = s
        .split(',')
        .map(|p| p.trim().parse::<f64>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|e| CliError::Config(format!("usage {s:?}: {e}")))?;
    let usage: [f64; N_EXPERTS] =
        parts.try_into().map_err(|_| CliError::Config(format!("usage needs {N_EXPERTS} comma-separated values")))?;
    if usage.iter().any(|&u| !(u >= 0.0 && u.is_finite())) || (usage.iter().sum::<f64>() - 1.0).abs() > 1e-6 {
        return Err(CliError::Config(format!("usage {usage:?} is not a distribution")));
    }
    Ok(usage)
}

/// Writes the per-layer ledger and the summary to `out_dir`.
pub fn cmd_flops(checkpoint: &Path, usage: Option<[f64; N_EXPERTS]>, out_dir: &Path) -> Result<FlopsSummary> {
    let (model, _) = load_checkpoint(checkpoint)?;
    let ledger = model.ledger()?;
    let costs = model.costs()?;
    let usage = usage.unwrap_or([1.0 / N_EXPERTS as f64; N_EXPERTS]);
    let hard_route_flops: [u64; N_EXPERTS] = std::array::from_fn(|e| costs.hard_route(e));
    let expected_flops = usage.iter().zip(&hard_route_flops).map(|(u, &f)| u * f as f64).sum::<f64>();
    let summary = FlopsSummary {
        total_params: model.params.total_params(),
        router_params: model.param_count("router"),
        expert_params: std::array::from_fn(|e| model.param_count(EXPERT_NAMES[e])),
        ledger_params: ledger.total_params(),
        router_flops: costs.router,
        router_head_flops: costs.router_head,
        expert_flops: costs.experts,
        hard_route_flops,
        usage,
        expected_flops,
        router_head_share: costs.router_head as f64 / expected_flops,
    };
    write_file(out_dir.join(LEDGER_FILE), ledger.to_csv().as_bytes())?;
    let path = out_dir.join(SUMMARY_FILE);
    let mut text = serde_json::to_string_pretty(&summary).map_err(|e| CliError::format(&path, e.to_string()))?;
    text.push('\n');
    write_file(&path, text.as_bytes())?;
    Ok(summary)
}
