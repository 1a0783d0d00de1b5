//! Router, experts and the gated mixture.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::layers::{
    global_avg_pool, AggregatedAttention, CoordAttGlu, Conv, GhostModule, Init, Linear, MobileMqa, PsdEncoder,
    SeFusion, SkSelect,
};
use crate::error::{bail, Result};
use crate::metrics::FlopsLedger;
use crate::nn::{Graph, ParamStore, Real, Tensor, Var};
use crate::rng::rng_from_seed;

pub const N_EXPERTS: usize = 3;
pub const HEAVY: usize = 0;
pub const MID: usize = 1;
pub const LIGHT: usize = 2;
pub const EXPERT_NAMES: [&str; N_EXPERTS] = ["heavy", "mid", "light"];
pub const CE_EPS: f64 = 1e-9;

/// Architecture hyperparameters, stored in checkpoint headers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    pub classes: usize,
    pub image_h: usize,
    pub image_w: usize,
    pub psd_len: usize,
    /// Channels of the two PSD encoder blocks.
    pub psd_channels: [usize; 2],
    /// Final channel width of each expert, in expert order.
    pub widths: [usize; N_EXPERTS],
    pub mqa_heads: usize,
    pub mqa_dk: usize,
}

impl ModelSpec {
    /// 64×64 spectrograms, 128-bin PSD vectors, 21 classes.
    pub fn desk() -> Self {
        Self {
            classes: 21,
            image_h: 64,
            image_w: 64,
            psd_len: 128,
            psd_channels: [4, 8],
            widths: [54, 28, 16],
            mqa_heads: 2,
            mqa_dk: 8,
        }
    }

    /// Small instance for gradient checks.
    pub fn tiny() -> Self {
        Self {
            classes: 5,
            image_h: 16,
            image_w: 16,
            psd_len: 16,
            psd_channels: [2, 3],
            widths: [6, 8, 4],
            mqa_heads: 2,
            mqa_dk: 3,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.classes < 2 {
            bail!(Model, "need at least two classes, got {}", self.classes);
        }
        if self.image_h < 8 || self.image_w < 8 || self.image_h % 8 != 0 || self.image_w % 8 != 0 {
            bail!(Model, "image {}x{} must be a positive multiple of 8 on each side", self.image_h, self.image_w);
        }
        if self.psd_len < 4 || self.psd_len % 4 != 0 {
            bail!(Model, "PSD length {} must be a positive multiple of 4", self.psd_len);
        }
        if self.psd_channels.contains(&0) || self.mqa_heads == 0 || self.mqa_dk == 0 {
            bail!(Model, "channel counts must be positive");
        }
        let [heavy, mid, light] = self.widths;
        if heavy % 6 != 0 || heavy == 0 {
            bail!(Model, "heavy width {heavy} must be a positive multiple of 6");
        }
        if mid % 4 != 0 || mid == 0 {
            bail!(Model, "mid width {mid} must be a positive multiple of 4");
        }
        if light % 2 != 0 || light == 0 {
            bail!(Model, "light width {light} must be a positive even number");
        }
        Ok(())
    }

    /// Side lengths of the maps the attention blocks see.
    pub fn inner_map(&self) -> (usize, usize) {
        (self.image_h / 8, self.image_w / 8)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Router {
    pub encoder: PsdEncoder,
    pub head: Linear,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeavyExpert {
    pub stem: Conv,
    pub conv: Conv,
    pub attention: AggregatedAttention,
    pub glu: CoordAttGlu,
    pub fuse: SeFusion,
    pub head: Linear,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MidExpert {
    pub stem: Conv,
    pub ghost: GhostModule,
    pub sk: SkSelect,
    pub fuse: SeFusion,
    pub head: Linear,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LightExpert {
    pub conv1: Conv,
    pub conv2: Conv,
    pub mqa: MobileMqa,
    pub fuse: SeFusion,
    pub head: Linear,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Expert {
    Heavy(HeavyExpert),
    Mid(MidExpert),
    Light(LightExpert),
}

fn conv_relu_pool<T: Real>(g: &mut Graph<'_, T>, conv: &Conv, x: Var) -> Result<Var> {
    let y = conv.forward(g, x)?;
    let y = g.relu(y)?;
    g.max_pool2d(y, 2, 2)
}

impl Expert {
    /// Pooled features `[B, C]` of an image batch `[B, 1, H, W]`.
    pub fn features<T: Real>(&self, g: &mut Graph<'_, T>, x: Var) -> Result<Var> {
        match self {
            Expert::Heavy(e) => {
                let y = conv_relu_pool(g, &e.stem, x)?;
                let y = conv_relu_pool(g, &e.conv, y)?;
                let a = g.scope("attention", |g| e.attention.forward(g, y))?;
                let y = g.add(y, a)?;
                let c = g.scope("glu", |g| e.glu.forward(g, y))?;
                let y = g.add(y, c)?;
                global_avg_pool(g, y)
            }
            Expert::Mid(e) => {
                let y = conv_relu_pool(g, &e.stem, x)?;
                let y = g.scope("ghost", |g| e.ghost.forward(g, y))?;
                let y = g.relu(y)?;
                let y = g.max_pool2d(y, 2, 2)?;
                let s = g.scope("sk", |g| e.sk.forward(g, y))?;
                global_avg_pool(g, s)
            }
            Expert::Light(e) => {
                let y = conv_relu_pool(g, &e.conv1, x)?;
                let y = conv_relu_pool(g, &e.conv2, y)?;
                let a = g.scope("mqa", |g| e.mqa.forward(g, y))?;
                let y = g.add(y, a)?;
                global_avg_pool(g, y)
            }
        }
    }

    fn fuse_head(&self) -> (&SeFusion, &Linear) {
        match self {
            Expert::Heavy(e) => (&e.fuse, &e.head),
            Expert::Mid(e) => (&e.fuse, &e.head),
            Expert::Light(e) => (&e.fuse, &e.head),
        }
    }

    /// Class probabilities `[B, classes]`.
    pub fn forward<T: Real>(&self, g: &mut Graph<'_, T>, x: Var, embedding: Var) -> Result<Var> {
        let f = self.features(g, x)?;
        let (fuse, head) = self.fuse_head();
        let f = g.scope("fuse", |g| fuse.forward(g, embedding, f))?;
        let logits = g.scope("head", |g| head.forward(g, f))?;
        g.softmax(logits)
    }
}

/// Parameter ids of the whole mixture.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Architecture {
    pub spec: ModelSpec,
    pub router: Router,
    pub experts: Vec<Expert>,
}

/// How the expert outputs are weighted in the soft forward pass.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum GateMode {
    /// Router probabilities.
    Learned,
    /// Externally supplied weights, one row per sample.
    Fixed(Vec<[f64; N_EXPERTS]>),
    /// One-hot on a single expert; the others are not evaluated.
    Forced(usize),
}

/// Graph handles of one soft forward pass.
#[derive(Debug, Clone)]
pub struct SoftOutput {
    pub embedding: Var,
    /// Router probabilities `[B, N_E]`.
    pub router_probs: Var,
    /// Per-expert class probabilities; `None` for experts that were skipped.
    pub experts: Vec<Option<Var>>,
    /// Mixture class probabilities `[B, classes]`.
    pub probs: Var,
}

#[derive(Debug, Clone, Copy)]
pub struct LossVars {
    pub ce: Var,
    pub aux: Var,
    pub total: Var,
}

/// Index of the largest entry; the lowest index wins ties.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate() {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

fn expert_scope(e: usize) -> &'static str {
    EXPERT_NAMES[e]
}

impl Architecture {
    pub fn build<T: Real, R: Rng>(spec: ModelSpec, store: &mut ParamStore<T>, rng: &mut R) -> Result<Self> {
        spec.validate()?;
        let mut init = Init { store, rng };
        let [c1, c2] = spec.psd_channels;
        let encoder = PsdEncoder::new(&mut init, "router.encoder", c1, c2)?;
        let embed = encoder.embed_dim();
        let head = Linear::zeroed(&mut init, "router.head", embed, N_EXPERTS)?;
        let router = Router { encoder, head };
        let map = spec.inner_map();
        let [wh, wm, wl] = spec.widths;

        let heavy = {
            let stem_c = wh / 3;
            HeavyExpert {
                stem: Conv::square(&mut init, "heavy.stem", 1, stem_c, 3, 2, 1)?,
                conv: Conv::square(&mut init, "heavy.conv", stem_c, wh, 3, 1, 1)?,
                attention: AggregatedAttention::new(&mut init, "heavy.attention", wh, map, 3)?,
                glu: CoordAttGlu::new(&mut init, "heavy.glu", wh, (wh / 6).max(2))?,
                fuse: SeFusion::new(&mut init, "heavy.fuse", embed, wh)?,
                head: Linear::new(&mut init, "heavy.head", wh, spec.classes)?,
            }
        };
        let mid = {
            let stem_c = wm / 2;
            MidExpert {
                stem: Conv::square(&mut init, "mid.stem", 1, stem_c, 3, 2, 1)?,
                ghost: GhostModule::new(&mut init, "mid.ghost", stem_c, wm)?,
                sk: SkSelect::new(&mut init, "mid.sk", wm, &[3, 5], wm / 4)?,
                fuse: SeFusion::new(&mut init, "mid.fuse", embed, wm)?,
                head: Linear::new(&mut init, "mid.head", wm, spec.classes)?,
            }
        };
        let light = {
            let stem_c = wl / 2;
            LightExpert {
                conv1: Conv::square(&mut init, "light.conv1", 1, stem_c, 3, 2, 1)?,
                conv2: Conv::square(&mut init, "light.conv2", stem_c, wl, 3, 1, 1)?,
                mqa: MobileMqa::new(&mut init, "light.mqa", wl, spec.mqa_heads, spec.mqa_dk)?,
                fuse: SeFusion::new(&mut init, "light.fuse", embed, wl)?,
                head: Linear::new(&mut init, "light.head", wl, spec.classes)?,
            }
        };
        Ok(Self { spec, router, experts: vec![Expert::Heavy(heavy), Expert::Mid(mid), Expert::Light(light)] })
    }

    fn check_inputs<T: Real>(&self, g: &Graph<'_, T>, image: Var, psd: Var) -> Result<usize> {
        let s = &self.spec;
        let is = g.shape(image);
        let ps = g.shape(psd);
        if is.len() != 4 || is[1] != 1 || is[2] != s.image_h || is[3] != s.image_w {
            bail!(Model, "spectrogram batch {is:?} does not match [B, 1, {}, {}]", s.image_h, s.image_w);
        }
        if ps.len() != 2 || ps[1] != s.psd_len || ps[0] != is[0] {
            bail!(Model, "PSD batch {ps:?} does not match [{}, {}]", is[0], s.psd_len);
        }
        Ok(is[0])
    }

    /// PSD embedding and router probabilities.
    pub fn route<T: Real>(&self, g: &mut Graph<'_, T>, psd: Var) -> Result<(Var, Var)> {
        let s = g.shape(psd);
        if s.len() != 2 || s[1] != self.spec.psd_len {
            bail!(Model, "PSD batch {s:?} does not match [B, {}]", self.spec.psd_len);
        }
        g.scope("router", |g| {
            let emb = g.scope("encoder", |g| self.router.encoder.forward(g, psd))?;
            let logits = g.scope("head", |g| self.router.head.forward(g, emb))?;
            let probs = g.softmax(logits)?;
            Ok((emb, probs))
        })
    }

    /// Class probabilities of expert `e` alone, including its PSD fusion.
    pub fn expert_probs<T: Real>(&self, g: &mut Graph<'_, T>, e: usize, image: Var, psd: Var) -> Result<Var> {
        self.check_inputs(g, image, psd)?;
        let expert = self.experts.get(e).ok_or_else(|| crate::Error::Model(format!("no expert {e}")))?;
        let emb = g.scope("router", |g| g.scope("encoder", |g| self.router.encoder.forward(g, psd)))?;
        g.scope(expert_scope(e), |g| expert.forward(g, image, emb))
    }

    pub fn forward_soft<T: Real>(
        &self,
        g: &mut Graph<'_, T>,
        image: Var,
        psd: Var,
        gate: &GateMode,
    ) -> Result<SoftOutput> {
        let b = self.check_inputs(g, image, psd)?;
        let (embedding, router_probs) = self.route(g, psd)?;
        let mut experts = vec![None; N_EXPERTS];
        let probs = match gate {
            GateMode::Forced(e) => {
                let expert = self.experts.get(*e).ok_or_else(|| crate::Error::Model(format!("no expert {e}")))?;
                let p = g.scope(expert_scope(*e), |g| expert.forward(g, image, embedding))?;
                experts[*e] = Some(p);
                p
            }
            GateMode::Learned | GateMode::Fixed(_) => {
                let weights = match gate {
                    GateMode::Fixed(rows) => {
                        if rows.len() != b {
                            bail!(Model, "{} gate rows for a batch of {b}", rows.len());
                        }
                        let flat: Vec<f64> = rows.iter().flatten().copied().collect();
                        g.input(Tensor::from_f64(&[b, N_EXPERTS], &flat)?)
                    }
                    _ => router_probs,
                };
                let mut mix: Option<Var> = None;
                for (e, expert) in self.experts.iter().enumerate() {
                    let p = g.scope(expert_scope(e), |g| expert.forward(g, image, embedding))?;
                    experts[e] = Some(p);
                    let w = g.slice(weights, 1, e, 1)?;
                    let term = g.mul(w, p)?;
                    mix = Some(match mix {
                        None => term,
                        Some(acc) => g.add(acc, term)?,
                    });
                }
                mix.expect("three experts")
            }
        };
        Ok(SoftOutput { embedding, router_probs, experts, probs })
    }

    /// Cross-entropy of the mixture, load-balancing term on the router
    /// probabilities, and their weighted sum.
    pub fn loss<T: Real>(&self, g: &mut Graph<'_, T>, out: &SoftOutput, labels: &[usize], lambda: f64) -> Result<LossVars> {
        let ce = g.cross_entropy_from_probs(out.probs, labels, CE_EPS)?;
        let rows = g.value(out.router_probs).to_f64_vec();
        let b = labels.len();
        let mut f = [0.0; N_EXPERTS];
        for row in rows.chunks(N_EXPERTS) {
            f[argmax(row)] += 1.0 / b as f64;
        }
        let f = g.input(Tensor::from_f64(&[N_EXPERTS], &f)?);
        let mean = g.mean(out.router_probs, 0)?;
        let prod = g.mul(mean, f)?;
        let s = g.sum_all(prod)?;
        let aux = g.scale(s, N_EXPERTS as f64)?;
        let weighted = g.scale(aux, lambda)?;
        let total = g.add(ce, weighted)?;
        Ok(LossVars { ce, aux, total })
    }

    /// Per-layer FLOPs and parameters of the router and every expert for one
    /// sample.
    pub fn ledger<T: Real>(&self, store: &ParamStore<T>) -> Result<FlopsLedger> {
        let s = &self.spec;
        let mut g = Graph::new(store).profiled();
        let image = g.input(Tensor::zeros(&[1, 1, s.image_h, s.image_w]));
        let psd = g.input(Tensor::zeros(&[1, s.psd_len]));
        self.forward_soft(&mut g, image, psd, &GateMode::Learned)?;
        Ok(FlopsLedger::new(g.take_records()))
    }
}

/// A mixture with its parameter values.
#[derive(Debug, Clone, PartialEq)]
pub struct MoeModel<T: Real = f32> {
    pub arch: Architecture,
    pub params: ParamStore<T>,
}

/// Hard-gated prediction for one sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HardOutput {
    pub probs: Vec<f64>,
    pub predicted: usize,
    pub expert: usize,
    pub gate: [f64; N_EXPERTS],
    pub flops: u64,
}

/// Routing-head and per-expert inference cost of one sample.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CostTable {
    /// PSD encoder plus routing head.
    pub router: u64,
    /// Routing head alone.
    pub router_head: u64,
    pub experts: [u64; N_EXPERTS],
}

impl CostTable {
    pub fn from_ledger(ledger: &FlopsLedger) -> Self {
        let mut experts = [0; N_EXPERTS];
        for (e, name) in EXPERT_NAMES.iter().enumerate() {
            experts[e] = ledger.flops_of(name);
        }
        Self { router: ledger.flops_of("router"), router_head: ledger.flops_of("router.head"), experts }
    }

    /// Router plus expert `e`.
    pub fn hard_route(&self, e: usize) -> u64 {
        self.router + self.experts[e]
    }
}

impl MoeModel<f32> {
    pub fn new(spec: ModelSpec, seed: u64) -> Result<Self> {
        let mut params = ParamStore::new();
        let mut rng = rng_from_seed(seed);
        let arch = Architecture::build(spec, &mut params, &mut rng)?;
        Ok(Self { arch, params })
    }
}

impl<T: Real> MoeModel<T> {
    pub fn spec(&self) -> &ModelSpec {
        &self.arch.spec
    }

    pub fn cast<U: Real>(&self) -> MoeModel<U> {
        MoeModel { arch: self.arch.clone(), params: self.params.cast() }
    }

    pub fn ledger(&self) -> Result<FlopsLedger> {
        self.arch.ledger(&self.params)
    }

    pub fn costs(&self) -> Result<CostTable> {
        Ok(CostTable::from_ledger(&self.ledger()?))
    }

    /// Trainable parameters of the router (`"router"`) or an expert.
    pub fn param_count(&self, part: &str) -> usize {
        self.params.count_with_prefix(&format!("{part}."))
    }

    /// Router probabilities for a PSD batch `[B, L]`.
    pub fn route(&self, psd: &Tensor<T>) -> Result<Vec<[f64; N_EXPERTS]>> {
        let mut g = Graph::new(&self.params);
        let p = g.input(psd.clone());
        let (_, probs) = self.arch.route(&mut g, p)?;
        Ok(rows(g.value(probs)))
    }

    /// Mixture probabilities `[B, classes]` as rows.
    pub fn predict_soft(&self, image: &Tensor<T>, psd: &Tensor<T>, gate: &GateMode) -> Result<Vec<Vec<f64>>> {
        let mut g = Graph::new(&self.params);
        let i = g.input(image.clone());
        let p = g.input(psd.clone());
        let out = self.arch.forward_soft(&mut g, i, p, gate)?;
        Ok(g.value(out.probs).to_f64_vec().chunks(self.arch.spec.classes).map(<[f64]>::to_vec).collect())
    }

    /// Class probabilities of expert `e` alone.
    pub fn expert_probs(&self, e: usize, image: &Tensor<T>, psd: &Tensor<T>) -> Result<Vec<Vec<f64>>> {
        let mut g = Graph::new(&self.params);
        let i = g.input(image.clone());
        let p = g.input(psd.clone());
        let out = self.arch.expert_probs(&mut g, e, i, p)?;
        Ok(g.value(out).to_f64_vec().chunks(self.arch.spec.classes).map(<[f64]>::to_vec).collect())
    }

    /// Top-1 inference: each sample runs only its argmax expert.
    pub fn predict_hard(&self, image: &Tensor<T>, psd: &Tensor<T>) -> Result<Vec<HardOutput>> {
        let costs = self.costs()?;
        self.predict_hard_with(image, psd, &costs)
    }

    pub fn predict_hard_with(&self, image: &Tensor<T>, psd: &Tensor<T>, costs: &CostTable) -> Result<Vec<HardOutput>> {
        let s = self.arch.spec;
        if image.shape.len() != 4 || image.shape[1..] != [1, s.image_h, s.image_w] {
            bail!(Model, "spectrogram batch {:?} does not match [B, 1, {}, {}]", image.shape, s.image_h, s.image_w);
        }
        let gates = self.route(psd)?;
        let b = gates.len();
        if image.shape[0] != b {
            bail!(Model, "{} spectrograms for {b} PSD vectors", image.shape[0]);
        }
        let chosen: Vec<usize> = gates.iter().map(|r| argmax(r)).collect();
        let mut out: Vec<Option<HardOutput>> = vec![None; b];
        let img_len = s.image_h * s.image_w;
        for e in 0..N_EXPERTS {
            let idx: Vec<usize> = (0..b).filter(|&i| chosen[i] == e).collect();
            if idx.is_empty() {
                continue;
            }
            let sub_img = gather(image, &idx, img_len, &[idx.len(), 1, s.image_h, s.image_w])?;
            let sub_psd = gather(psd, &idx, s.psd_len, &[idx.len(), s.psd_len])?;
            let probs = self.expert_probs(e, &sub_img, &sub_psd)?;
            for (k, &i) in idx.iter().enumerate() {
                let p = probs[k].clone();
                out[i] = Some(HardOutput {
                    predicted: argmax(&p),
                    probs: p,
                    expert: e,
                    gate: gates[i],
                    flops: costs.hard_route(e),
                });
            }
        }
        Ok(out.into_iter().map(|o| o.expect("every sample routed")).collect())
    }
}

fn rows<T: Real>(t: &Tensor<T>) -> Vec<[f64; N_EXPERTS]> {
    t.to_f64_vec().chunks(N_EXPERTS).map(|r| [r[0], r[1], r[2]]).collect()
}

/// Rows `idx` of a batch tensor whose items are `item` values long.
pub fn gather<T: Real>(t: &Tensor<T>, idx: &[usize], item: usize, shape: &[usize]) -> Result<Tensor<T>> {
    let mut data = Vec::with_capacity(idx.len() * item);
    for &i in idx {
        data.extend_from_slice(&t.data[i * item..(i + 1) * item]);
    }
    Tensor::new(shape.to_vec(), data)
}
