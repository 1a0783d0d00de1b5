use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LayerKind {
    Conv,
    Dense,
    /// Product of two activations (attention scores or weighted values).
    Attention,
    Softmax,
}

impl LayerKind {
    pub fn name(self) -> &'static str {
        match self {
            LayerKind::Conv => "conv",
            LayerKind::Dense => "dense",
            LayerKind::Attention => "attention",
            LayerKind::Softmax => "softmax",
        }
    }
}

/// One row of the ledger. Conv layers fill `h, w, kh, kw, c_in, c_out`;
/// dense and attention products fill `h` (rows), `n_in` and `n_out`;
/// softmax fills `h` (rows) and `n_in` (row length).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerRecord {
    pub name: String,
    pub kind: LayerKind,
    pub h: usize,
    pub w: usize,
    pub kh: usize,
    pub kw: usize,
    pub c_in: usize,
    pub c_out: usize,
    pub n_in: usize,
    pub n_out: usize,
    pub flops: u64,
    pub params: u64,
}

/// `2·H·W·k_h·k_w·C_in·C_out` with `C_in` counted per group.
pub fn conv_flops(h: usize, w: usize, kh: usize, kw: usize, c_in: usize, c_out: usize) -> u64 {
    2 * (h * w * kh * kw * c_in * c_out) as u64
}

/// `2·N_in·N_out`
pub fn dense_flops(n_in: usize, n_out: usize) -> u64 {
    2 * (n_in * n_out) as u64
}

impl LayerRecord {
    pub fn conv(name: &str, h: usize, w: usize, kh: usize, kw: usize, c_in: usize, c_out: usize, params: u64) -> Self {
        Self {
            name: name.to_string(),
            kind: LayerKind::Conv,
            h,
            w,
            kh,
            kw,
            c_in,
            c_out,
            n_in: 0,
            n_out: 0,
            flops: conv_flops(h, w, kh, kw, c_in, c_out),
            params,
        }
    }

    /// `rows` independent dense products, or attention products when the
    /// right operand is an activation.
    pub fn dense(name: &str, kind: LayerKind, rows: usize, n_in: usize, n_out: usize, params: u64) -> Self {
        Self {
            name: name.to_string(),
            kind,
            h: rows,
            w: 1,
            kh: 0,
            kw: 0,
            c_in: 0,
            c_out: 0,
            n_in,
            n_out,
            flops: rows as u64 * dense_flops(n_in, n_out),
            params,
        }
    }

    /// Exponentiation and normalization, two operations per element.
    pub fn softmax(name: &str, rows: usize, len: usize) -> Self {
        Self {
            name: name.to_string(),
            kind: LayerKind::Softmax,
            h: rows,
            w: 1,
            kh: 0,
            kw: 0,
            c_in: 0,
            c_out: 0,
            n_in: len,
            n_out: len,
            flops: 2 * (rows * len) as u64,
            params: 0,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct FlopsLedger {
    pub records: Vec<LayerRecord>,
}

impl FlopsLedger {
    pub fn new(records: Vec<LayerRecord>) -> Self {
        Self { records }
    }

    pub fn total_flops(&self) -> u64 {
        self.records.iter().map(|r| r.flops).sum()
    }

    pub fn total_params(&self) -> u64 {
        self.records.iter().map(|r| r.params).sum()
    }

    /// Total over records whose name starts with `prefix`.
    pub fn flops_of(&self, prefix: &str) -> u64 {
        self.records.iter().filter(|r| r.name.starts_with(prefix)).map(|r| r.flops).sum()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("name,kind,h,w,kh,kw,c_in,c_out,n_in,n_out,flops,params\n");
        for r in &self.records {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{},{},{},{},{}",
                r.name,
                r.kind.name(),
                r.h,
                r.w,
                r.kh,
                r.kw,
                r.c_in,
                r.c_out,
                r.n_in,
                r.n_out,
                r.flops,
                r.params
            );
        }
        out
    }
}
