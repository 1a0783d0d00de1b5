//! Building blocks of the experts and the router.
//!
//! Layers hold only parameter ids, so the same layer runs on an `f32`
//! training store or an `f64` copy of it.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{bail, Result};
use crate::nn::{Graph, ParamId, ParamStore, Real, Tensor, Var};

/// Parameter factory with a shared name prefix.
pub struct Init<'a, T: Real, R: Rng> {
    pub store: &'a mut ParamStore<T>,
    pub rng: &'a mut R,
}

impl<T: Real, R: Rng> Init<'_, T, R> {
    pub fn weight(&mut self, name: &str, shape: &[usize], fan_in: usize) -> Result<ParamId> {
        self.store.fan_in_uniform(name, shape, fan_in, self.rng)
    }

    pub fn zeros(&mut self, name: &str, shape: &[usize]) -> Result<ParamId> {
        self.store.zeros(name, shape)
    }

    pub fn value(&mut self, name: &str, value: Tensor<T>) -> Result<ParamId> {
        self.store.add(name, value)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Conv {
    pub w: ParamId,
    pub b: ParamId,
    pub stride: (usize, usize),
    pub pad: (usize, usize),
    pub groups: usize,
}

impl Conv {
    #[allow(clippy::too_many_arguments)]
    pub fn new<T: Real, R: Rng>(
        init: &mut Init<'_, T, R>,
        name: &str,
        c_in: usize,
        c_out: usize,
        k: (usize, usize),
        stride: (usize, usize),
        pad: (usize, usize),
        groups: usize,
    ) -> Result<Self> {
        if groups == 0 || c_in % groups != 0 || c_out % groups != 0 {
            bail!(Shape, "{name}: {c_in} -> {c_out} channels do not split into {groups} groups");
        }
        let fan_in = c_in / groups * k.0 * k.1;
        let w = init.weight(&format!("{name}.w"), &[c_out, c_in / groups, k.0, k.1], fan_in)?;
        let b = init.zeros(&format!("{name}.b"), &[1, c_out, 1, 1])?;
        Ok(Self { w, b, stride, pad, groups })
    }

    /// Square `k × k` convolution with "same" padding for stride 1.
    pub fn square<T: Real, R: Rng>(
        init: &mut Init<'_, T, R>,
        name: &str,
        c_in: usize,
        c_out: usize,
        k: usize,
        stride: usize,
        groups: usize,
    ) -> Result<Self> {
        Self::new(init, name, c_in, c_out, (k, k), (stride, stride), (k / 2, k / 2), groups)
    }

    pub fn forward<T: Real>(&self, g: &mut Graph<'_, T>, x: Var) -> Result<Var> {
        let w = g.param(self.w);
        let y = g.conv2d(x, w, self.stride, self.pad, self.groups)?;
        let b = g.param(self.b);
        g.add(y, b)
    }
}

/// `x[..., n_in] · W + b`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Linear {
    pub w: ParamId,
    pub b: ParamId,
}

impl Linear {
    pub fn new<T: Real, R: Rng>(init: &mut Init<'_, T, R>, name: &str, n_in: usize, n_out: usize) -> Result<Self> {
        let w = init.weight(&format!("{name}.w"), &[n_in, n_out], n_in)?;
        let b = init.zeros(&format!("{name}.b"), &[n_out])?;
        Ok(Self { w, b })
    }

    pub fn zeroed<T: Real, R: Rng>(init: &mut Init<'_, T, R>, name: &str, n_in: usize, n_out: usize) -> Result<Self> {
        let w = init.zeros(&format!("{name}.w"), &[n_in, n_out])?;
        let b = init.zeros(&format!("{name}.b"), &[n_out])?;
        Ok(Self { w, b })
    }

    pub fn forward<T: Real>(&self, g: &mut Graph<'_, T>, x: Var) -> Result<Var> {
        let w = g.param(self.w);
        let y = g.matmul(x, w)?;
        let b = g.param(self.b);
        g.add(y, b)
    }
}


/// Global average over the spatial axes: `[B, C, H, W] → [B, C]`.
pub fn global_avg_pool<T: Real>(g: &mut Graph<'_, T>, x: Var) -> Result<Var> {
    let s = g.shape(x).to_vec();
    let flat = g.reshape(x, &[s[0], s[1], s[2] * s[3]])?;
    let m = g.mean(flat, 2)?;
    g.reshape(m, &[s[0], s[1]])
}

/// `[B, C, H, W] → [B, H·W, C]`
pub fn to_tokens<T: Real>(g: &mut Graph<'_, T>, x: Var) -> Result<Var> {
    let s = g.shape(x).to_vec();
    let flat = g.reshape(x, &[s[0], s[1], s[2] * s[3]])?;
    g.permute(flat, &[0, 2, 1])
}

/// `[B, H·W, C] → [B, C, H, W]`
pub fn from_tokens<T: Real>(g: &mut Graph<'_, T>, x: Var, h: usize, w: usize) -> Result<Var> {
    let s = g.shape(x).to_vec();
    let t = g.permute(x, &[0, 2, 1])?;
    g.reshape(t, &[s[0], s[2], h, w])
}

/// Coordinate-attention gated linear unit.
///
/// The input is projected and split into `Z₁, Z₂`; `Z₁` is pooled along each
/// spatial axis, passed through a shared 1×1 reduction with ReLU, and mapped
/// to sigmoid gates `gʰ, gʷ`. The output is `Linear(GELU(Z₁·gʰ·gʷ) ⊙ Z₂)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoordAttGlu {
    pub proj: Conv,
    pub reduce: Conv,
    pub f_h: Conv,
    pub f_w: Conv,
    pub out: Conv,
    pub channels: usize,
}

/// Intermediate values of [`CoordAttGlu::forward_trace`].
#[derive(Debug, Clone, Copy)]
pub struct CoordAttTrace {
    pub z1: Var,
    pub g_h: Var,
    pub g_w: Var,
    pub y_att: Var,
    pub out: Var,
}

impl CoordAttGlu {
    pub fn new<T: Real, R: Rng>(init: &mut Init<'_, T, R>, name: &str, channels: usize, reduced: usize) -> Result<Self> {
        if channels % 2 != 0 {
            bail!(Shape, "{name}: CoordAttGLU needs an even channel count, got {channels}");
        }
        let half = channels / 2;
        Ok(Self {
            proj: Conv::square(init, &format!("{name}.proj"), channels, channels, 1, 1, 1)?,
            reduce: Conv::square(init, &format!("{name}.reduce"), half, reduced, 1, 1, 1)?,
            f_h: Conv::square(init, &format!("{name}.f_h"), reduced, half, 1, 1, 1)?,
            f_w: Conv::square(init, &format!("{name}.f_w"), reduced, half, 1, 1, 1)?,
            out: Conv::square(init, &format!("{name}.out"), half, channels, 1, 1, 1)?,
            channels,
        })
    }

    pub fn forward_trace<T: Real>(&self, g: &mut Graph<'_, T>, z: Var) -> Result<CoordAttTrace> {
        let s = g.shape(z).to_vec();
        if s.len() != 4 || s[1] != self.channels {
            bail!(Shape, "CoordAttGLU expects [B, {}, H, W], got {s:?}", self.channels);
        }
        let (b, half, h, w) = (s[0], self.channels / 2, s[2], s[3]);
        let p = self.proj.forward(g, z)?;
        let z1 = g.slice(p, 1, 0, half)?;
        let z2 = g.slice(p, 1, half, half)?;
        let zh = g.mean(z1, 3)?;
        let zw = g.mean(z1, 2)?;
        let zw = g.reshape(zw, &[b, half, w, 1])?;
        let cat = g.concat(&[zh, zw], 2)?;
        let f = self.reduce.forward(g, cat)?;
        let f = g.relu(f)?;
        let fh = g.slice(f, 2, 0, h)?;
        let fw = g.slice(f, 2, h, w)?;
        let gh = self.f_h.forward(g, fh)?;
        let g_h = g.sigmoid(gh)?;
        let gw = self.f_w.forward(g, fw)?;
        let gw = g.sigmoid(gw)?;
        let r = g.shape(gw)[1];
        let g_w = g.reshape(gw, &[b, r, 1, w])?;
        let y = g.mul(z1, g_h)?;
        let y_att = g.mul(y, g_w)?;
        let act = g.gelu(y_att)?;
        let gated = g.mul(act, z2)?;
        let out = self.out.forward(g, gated)?;
        Ok(CoordAttTrace { z1, g_h, g_w, y_att, out })
    }

    pub fn forward<T: Real>(&self, g: &mut Graph<'_, T>, z: Var) -> Result<Var> {
        Ok(self.forward_trace(g, z)?.out)
    }
}

/// Selective-kernel fusion over parallel grouped-conv branches of
/// different kernel sizes, each followed by ReLU.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkSelect {
    pub branches: Vec<Conv>,
    /// `W_q` per branch, `[C, C]`.
    pub select: Vec<Linear>,
    pub channels: usize,
}

#[derive(Debug, Clone)]
pub struct SkTrace {
    pub u: Vec<Var>,
    /// Branch attention `[B, C, Q]`.
    pub attention: Var,
    pub out: Var,
}

impl SkSelect {
    pub fn new<T: Real, R: Rng>(
        init: &mut Init<'_, T, R>,
        name: &str,
        channels: usize,
        kernels: &[usize],
        groups: usize,
    ) -> Result<Self> {
        if kernels.len() < 2 {
            bail!(Shape, "{name}: selective kernel needs at least two branches");
        }
        let mut branches = Vec::new();
        let mut select = Vec::new();
        for (q, &k) in kernels.iter().enumerate() {
            branches.push(Conv::square(init, &format!("{name}.branch{q}"), channels, channels, k, 1, groups)?);
            select.push(Linear::new(init, &format!("{name}.select{q}"), channels, channels)?);
        }
        Ok(Self { branches, select, channels })
    }

    pub fn forward_branches<T: Real>(&self, g: &mut Graph<'_, T>, u: &[Var]) -> Result<SkTrace> {
        if u.len() != self.select.len() {
            bail!(Shape, "expected {} branch outputs, got {}", self.select.len(), u.len());
        }
        let s = g.shape(u[0]).to_vec();
        if u.iter().any(|v| g.shape(*v) != s.as_slice()) {
            bail!(Shape, "selective-kernel branch shapes differ");
        }
        let (b, ch) = (s[0], s[1]);
        let mut total = u[0];
        for v in &u[1..] {
            total = g.add(total, *v)?;
        }
        let z = global_avg_pool(g, total)?;
        let mut logits = Vec::new();
        for lin in &self.select {
            let l = lin.forward(g, z)?;
            logits.push(g.reshape(l, &[b, ch, 1])?);
        }
        let stacked = g.concat(&logits, 2)?;
        let attention = g.softmax(stacked)?;
        let mut out = None;
        for (q, uq) in u.iter().enumerate() {
            let a = g.slice(attention, 2, q, 1)?;
            let a = g.reshape(a, &[b, ch, 1, 1])?;
            let term = g.mul(a, *uq)?;
            out = Some(match out {
                None => term,
                Some(acc) => g.add(acc, term)?,
            });
        }
        let out = out.expect("at least two branches");
        Ok(SkTrace { u: u.to_vec(), attention, out })
    }

    pub fn forward_trace<T: Real>(&self, g: &mut Graph<'_, T>, x: Var) -> Result<SkTrace> {
        let mut u = Vec::new();
        for br in &self.branches {
            let y = br.forward(g, x)?;
            u.push(g.relu(y)?);
        }
        self.forward_branches(g, &u)
    }

    pub fn forward<T: Real>(&self, g: &mut Graph<'_, T>, x: Var) -> Result<Var> {
        Ok(self.forward_trace(g, x)?.out)
    }
}

/// Primary convolution followed by a cheap depthwise 3×3 on its output,
/// concatenated along channels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GhostModule {
    pub primary: Conv,
    pub cheap: Conv,
}

impl GhostModule {
    pub fn new<T: Real, R: Rng>(init: &mut Init<'_, T, R>, name: &str, c_in: usize, c_out: usize) -> Result<Self> {
        if c_out % 2 != 0 {
            bail!(Shape, "{name}: ghost module needs an even output channel count, got {c_out}");
        }
        let m = c_out / 2;
        Ok(Self {
            primary: Conv::square(init, &format!("{name}.primary"), c_in, m, 3, 1, 1)?,
            cheap: Conv::square(init, &format!("{name}.cheap"), m, m, 3, 1, m)?,
        })
    }

    /// `(Y', Y_ghost)`
    pub fn forward_parts<T: Real>(&self, g: &mut Graph<'_, T>, x: Var) -> Result<(Var, Var)> {
        let y = self.primary.forward(g, x)?;
        let phi = self.cheap.forward(g, y)?;
        let out = g.concat(&[y, phi], 1)?;
        Ok((y, out))
    }

    pub fn forward<T: Real>(&self, g: &mut Graph<'_, T>, x: Var) -> Result<Var> {
        Ok(self.forward_parts(g, x)?.1)
    }
}

/// Multi-query attention: `heads` query projections share one key and one
/// value head computed from a stride-2 depthwise reduction of the map.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MobileMqa {
    pub q: Conv,
    pub sr: Conv,
    pub k: Conv,
    pub v: Conv,
    pub out: Conv,
    pub heads: usize,
    pub d_k: usize,
}

#[derive(Debug, Clone, Copy)]
pub struct MqaTrace {
    /// `[B, H·W·heads, S]`
    pub attention: Var,
    /// Attended values before the output projection, `[B, heads·d_k, H, W]`.
    pub attended: Var,
    pub out: Var,
}

impl MobileMqa {
    pub fn new<T: Real, R: Rng>(
        init: &mut Init<'_, T, R>,
        name: &str,
        channels: usize,
        heads: usize,
        d_k: usize,
    ) -> Result<Self> {
        if heads == 0 || d_k == 0 {
            bail!(Shape, "{name}: heads and key dimension must be positive");
        }
        Ok(Self {
            q: Conv::square(init, &format!("{name}.q"), channels, heads * d_k, 1, 1, 1)?,
            sr: Conv::square(init, &format!("{name}.sr"), channels, channels, 3, 2, channels)?,
            k: Conv::square(init, &format!("{name}.k"), channels, d_k, 1, 1, 1)?,
            v: Conv::square(init, &format!("{name}.v"), channels, d_k, 1, 1, 1)?,
            out: Conv::square(init, &format!("{name}.out"), heads * d_k, channels, 1, 1, 1)?,
            heads,
            d_k,
        })
    }

    pub fn forward_trace<T: Real>(&self, g: &mut Graph<'_, T>, x: Var) -> Result<MqaTrace> {
        let s = g.shape(x).to_vec();
        let (b, h, w) = (s[0], s[2], s[3]);
        let q = self.q.forward(g, x)?;
        let q = to_tokens(g, q)?;
        let q = g.reshape(q, &[b, h * w * self.heads, self.d_k])?;
        let r = self.sr.forward(g, x)?;
        let k = self.k.forward(g, r)?;
        let k = to_tokens(g, k)?;
        let v = self.v.forward(g, r)?;
        let v = to_tokens(g, v)?;
        let scores = g.matmul_t(q, k)?;
        let scores = g.scale(scores, 1.0 / (self.d_k as f64).sqrt())?;
        let attention = g.softmax(scores)?;
        let o = g.matmul(attention, v)?;
        let o = g.reshape(o, &[b, h * w, self.heads * self.d_k])?;
        let attended = from_tokens(g, o, h, w)?;
        let out = self.out.forward(g, attended)?;
        Ok(MqaTrace { attention, attended, out })
    }

    pub fn forward<T: Real>(&self, g: &mut Graph<'_, T>, x: Var) -> Result<Var> {
        Ok(self.forward_trace(g, x)?.out)
    }
}

/// Single-head attention over a 3×3 local window plus keys from a 2×2
/// average-pooled copy of the map, with a learnable query embedding,
/// temperature `α·ln N_token` and positional bias.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AggregatedAttention {
    pub qkv: Conv,
    pub query_embed: ParamId,
    pub alpha: ParamId,
    pub bias_local: ParamId,
    pub bias_global: ParamId,
    pub out: Conv,
    pub dim: usize,
    pub window: usize,
    pub global_tokens: usize,
}

#[derive(Debug, Clone, Copy)]
pub struct AggTrace {
    /// `[B, H·W, window² + N_global]`
    pub attention: Var,
    /// Attended values before the output projection, `[B, H·W, d]`.
    pub attended: Var,
    pub out: Var,
}

const MASKED: f64 = -1e9;

impl AggregatedAttention {
    /// `map` is the `(H, W)` of the feature maps this block will see and
    /// `window` the odd side of the local neighbourhood.
    pub fn new<T: Real, R: Rng>(
        init: &mut Init<'_, T, R>,
        name: &str,
        dim: usize,
        map: (usize, usize),
        window: usize,
    ) -> Result<Self> {
        if window % 2 == 0 {
            bail!(Shape, "{name}: local window must be odd, got {window}");
        }
        let global_tokens = map.0.div_ceil(2) * map.1.div_ceil(2);
        Ok(Self {
            qkv: Conv::square(init, &format!("{name}.qkv"), dim, 3 * dim, 1, 1, 1)?,
            query_embed: init.zeros(&format!("{name}.query_embed"), &[dim])?,
            alpha: init.value(&format!("{name}.alpha"), Tensor::scalar(T::from_f64(1.0 / (dim as f64).sqrt())))?,
            bias_local: init.zeros(&format!("{name}.bias_local"), &[window * window])?,
            bias_global: init.zeros(&format!("{name}.bias_global"), &[global_tokens])?,
            out: Conv::square(init, &format!("{name}.out"), dim, dim, 1, 1, 1)?,
            dim,
            window,
            global_tokens,
        })
    }

    fn mask<T: Real>(&self, h: usize, w: usize) -> Tensor<T> {
        let k = self.window;
        let r = (k / 2) as isize;
        let n = k * k + self.global_tokens;
        let mut data = vec![T::zero(); h * w * n];
        for py in 0..h {
            for px in 0..w {
                for j in 0..k * k {
                    let iy = py as isize + (j / k) as isize - r;
                    let ix = px as isize + (j % k) as isize - r;
                    if iy < 0 || ix < 0 || iy as usize >= h || ix as usize >= w {
                        data[(py * w + px) * n + j] = T::from_f64(MASKED);
                    }
                }
            }
        }
        Tensor { shape: vec![1, h * w, n], data }
    }

    pub fn forward_trace<T: Real>(&self, g: &mut Graph<'_, T>, x: Var) -> Result<AggTrace> {
        let s = g.shape(x).to_vec();
        if s.len() != 4 || s[1] != self.dim {
            bail!(Shape, "aggregated attention expects [B, {}, H, W], got {s:?}", self.dim);
        }
        let (b, d, h, w) = (s[0], self.dim, s[2], s[3]);
        let kk = self.window * self.window;
        if h.div_ceil(2) * w.div_ceil(2) != self.global_tokens {
            bail!(Shape, "aggregated attention built for {} global keys, map {h}x{w} gives another count", self.global_tokens);
        }
        if self.window / 2 > h.max(w) {
            bail!(Shape, "window {} larger than the {h}x{w} map", self.window);
        }
        let t = h * w;
        let qkv = self.qkv.forward(g, x)?;
        let q_map = g.slice(qkv, 1, 0, d)?;
        let k_map = g.slice(qkv, 1, d, d)?;
        let v_map = g.slice(qkv, 1, 2 * d, d)?;
        let q = to_tokens(g, q_map)?;
        let qe = g.param(self.query_embed);
        let q = g.add(q, qe)?;
        // local path
        let k_loc = g.unfold(k_map, self.window)?;
        let v_loc = g.unfold(v_map, self.window)?;
        let q4 = g.reshape(q, &[b, t, 1, d])?;
        let prod = g.mul(q4, k_loc)?;
        let s_loc = g.sum(prod, 3)?;
        let s_loc = g.reshape(s_loc, &[b, t, kk])?;
        // global path
        let k_glob = g.avg_pool2d(k_map, 2, 2)?;
        let k_glob = to_tokens(g, k_glob)?;
        let v_glob = g.avg_pool2d(v_map, 2, 2)?;
        let v_glob = to_tokens(g, v_glob)?;
        let s_glob = g.matmul_t(q, k_glob)?;
        let scores = g.concat(&[s_loc, s_glob], 2)?;
        let n_token = (kk + self.global_tokens) as f64;
        let alpha = g.param(self.alpha);
        let scores = g.mul(scores, alpha)?;
        let scores = g.scale(scores, n_token.ln())?;
        let bl = g.param(self.bias_local);
        let bg = g.param(self.bias_global);
        let bias = g.concat(&[bl, bg], 0)?;
        let scores = g.add(scores, bias)?;
        let mask = g.input(self.mask(h, w));
        let scores = g.add(scores, mask)?;
        let attention = g.softmax(scores)?;
        let a_loc = g.slice(attention, 2, 0, kk)?;
        let a_loc = g.reshape(a_loc, &[b, t, kk, 1])?;
        let weighted = g.mul(a_loc, v_loc)?;
        let o_loc = g.sum(weighted, 2)?;
        let o_loc = g.reshape(o_loc, &[b, t, d])?;
        let a_glob = g.slice(attention, 2, kk, self.global_tokens)?;
        let o_glob = g.matmul(a_glob, v_glob)?;
        let attended = g.add(o_loc, o_glob)?;
        let map = from_tokens(g, attended, h, w)?;
        let out = self.out.forward(g, map)?;
        Ok(AggTrace { attention, attended, out })
    }

    pub fn forward<T: Real>(&self, g: &mut Graph<'_, T>, x: Var) -> Result<Var> {
        Ok(self.forward_trace(g, x)?.out)
    }
}

/// Channel gate `σ(W·e + b)` from the PSD embedding `e`, applied to pooled
/// expert features.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SeFusion {
    pub gate: Linear,
}

impl SeFusion {
    pub fn new<T: Real, R: Rng>(init: &mut Init<'_, T, R>, name: &str, embed: usize, channels: usize) -> Result<Self> {
        Ok(Self { gate: Linear::new(init, &format!("{name}.gate"), embed, channels)? })
    }

    /// `embedding[B, E]`, `features[B, C]`.
    pub fn forward<T: Real>(&self, g: &mut Graph<'_, T>, embedding: Var, features: Var) -> Result<Var> {
        let z = self.gate.forward(g, embedding)?;
        let s = g.sigmoid(z)?;
        g.mul(features, s)
    }
}

/// Two 1-D conv (kernel 3) + ReLU + max-pool(2) blocks over the PSD vector;
/// the embedding concatenates the mean and the max over length.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PsdEncoder {
    pub conv1: Conv,
    pub conv2: Conv,
    pub channels: usize,
}

impl PsdEncoder {
    pub fn new<T: Real, R: Rng>(init: &mut Init<'_, T, R>, name: &str, c1: usize, c2: usize) -> Result<Self> {
        Ok(Self {
            conv1: Conv::new(init, &format!("{name}.conv1"), 1, c1, (1, 3), (1, 1), (0, 1), 1)?,
            conv2: Conv::new(init, &format!("{name}.conv2"), c1, c2, (1, 3), (1, 1), (0, 1), 1)?,
            channels: c2,
        })
    }

    pub fn embed_dim(&self) -> usize {
        2 * self.channels
    }

    /// `psd[B, L] → [B, 2·C₂]`.
    pub fn forward<T: Real>(&self, g: &mut Graph<'_, T>, psd: Var) -> Result<Var> {
        let s = g.shape(psd).to_vec();
        if s.len() != 2 {
            bail!(Shape, "PSD batch must be [B, L], got {s:?}");
        }
        let x = g.reshape(psd, &[s[0], 1, 1, s[1]])?;
        let mut x = x;
        for conv in [&self.conv1, &self.conv2] {
            let y = conv.forward(g, x)?;
            let y = g.relu(y)?;
            x = g.max_pool2d(y, 1, 2)?;
        }
        let l = g.shape(x)[3];
        let flat = g.reshape(x, &[s[0], self.channels, l])?;
        let mean = g.mean(flat, 2)?;
        let max = g.max(flat, 2)?;
        let e = g.concat(&[mean, max], 1)?;
        g.reshape(e, &[s[0], self.embed_dim()])
    }
}
