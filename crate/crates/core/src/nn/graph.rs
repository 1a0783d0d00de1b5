//! Tape-based reverse-mode differentiation.
//!
//! Every operation appends a node holding its forward value; `backward`
//! walks the tape in reverse and accumulates gradients into the parameters
//! that were read through [`Graph::param`].

use super::kernels::{col2im, gemm_nn, gemm_nt, gemm_tn, im2col, ConvGeom};
use super::param::{Gradients, ParamId, ParamStore};
use super::tensor::{broadcast_shape, broadcast_strides, c, for_each_broadcast, numel, strides, Real, Tensor};
use crate::error::{bail, Result};
use crate::metrics::{LayerKind, LayerRecord};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug)]
enum Op<T> {
    Leaf,
    Param(ParamId),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, T),
    AddScalar(Var),
    MatMul { a: Var, b: Var, trans_b: bool, batch: usize, m: usize, k: usize, n: usize, shared_b: bool },
    Conv { x: Var, w: Var, geom: ConvGeom, batch: usize, cols: Vec<T> },
    MaxPool { x: Var, argmax: Vec<usize> },
    AvgPool { x: Var, kh: usize, kw: usize },
    Reshape(Var),
    Permute(Var, Vec<usize>),
    Concat(Vec<Var>, usize),
    Slice { x: Var, axis: usize, start: usize },
    Sum { x: Var, axis: usize },
    Mean { x: Var, axis: usize },
    Max { x: Var, argmax: Vec<usize> },
    SumAll(Var),
    Softmax(Var),
    Sigmoid(Var),
    Gelu(Var),
    Relu(Var),
    Log(Var),
    Exp(Var),
    Unfold { x: Var, k: usize },
    CrossEntropy { p: Var, labels: Vec<usize>, eps: T },
}

#[derive(Debug)]
struct Node<T> {
    value: Tensor<T>,
    op: Op<T>,
    needs_grad: bool,
}

pub struct Graph<'p, T: Real> {
    store: &'p ParamStore<T>,
    nodes: Vec<Node<T>>,
    strict: bool,
    scopes: Vec<String>,
    records: Option<Vec<LayerRecord>>,
}

const GELU_K: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)
const GELU_A: f64 = 0.044_715;

fn gelu<T: Real>(x: T) -> T {
    let (k, a) = (c::<T>(GELU_K), c::<T>(GELU_A));
    let half = c::<T>(0.5);
    half * x * (T::one() + (k * (x + a * x * x * x)).tanh())
}

fn gelu_grad<T: Real>(x: T) -> T {
    let (k, a) = (c::<T>(GELU_K), c::<T>(GELU_A));
    let half = c::<T>(0.5);
    let t = (k * (x + a * x * x * x)).tanh();
    half * (T::one() + t) + half * x * (T::one() - t * t) * k * (T::one() + c::<T>(3.0) * a * x * x)
}

/// `(outer, n, inner)` split of `shape` around `axis`.
fn split_axis(shape: &[usize], axis: usize) -> (usize, usize, usize) {
    (numel(&shape[..axis]), shape[axis], numel(&shape[axis + 1..]))
}

impl<'p, T: Real> Graph<'p, T> {
    pub fn new(store: &'p ParamStore<T>) -> Self {
        Self { store, nodes: Vec::new(), strict: false, scopes: Vec::new(), records: None }
    }

    /// Fails any operation whose output is not finite.
    pub fn strict(mut self, on: bool) -> Self {
        self.strict = on;
        self
    }

    /// Records a FLOPs entry for every conv, dense, attention and softmax op.
    pub fn profiled(mut self) -> Self {
        self.records = Some(Vec::new());
        self
    }

    pub fn take_records(&mut self) -> Vec<LayerRecord> {
        self.records.take().unwrap_or_default()
    }

    pub fn store(&self) -> &'p ParamStore<T> {
        self.store
    }

    /// Runs `f` with `name` appended to the record prefix.
    pub fn scope<R>(&mut self, name: &str, f: impl FnOnce(&mut Self) -> R) -> R {
        self.scopes.push(name.to_string());
        let out = f(self);
        self.scopes.pop();
        out
    }

    fn record(&mut self, make: impl FnOnce(String) -> LayerRecord) {
        if let Some(records) = self.records.as_mut() {
            let name = format!("{}#{}", self.scopes.join("."), records.len());
            records.push(make(name));
        }
    }

    fn push(&mut self, value: Tensor<T>, op: Op<T>) -> Result<Var> {
        if self.strict && !value.is_finite() {
            bail!(Numeric, "non-finite output from {:?}", std::mem::discriminant(&op));
        }
        let needs_grad = match &op {
            Op::Leaf => false,
            Op::Param(_) => true,
            other => self.inputs(other).iter().any(|v| self.nodes[v.0].needs_grad),
        };
        self.nodes.push(Node { value, op, needs_grad });
        Ok(Var(self.nodes.len() - 1))
    }

    fn inputs(&self, op: &Op<T>) -> Vec<Var> {
        match op {
            Op::Leaf | Op::Param(_) => vec![],
            Op::Add(a, b) | Op::Sub(a, b) | Op::Mul(a, b) => vec![*a, *b],
            Op::MatMul { a, b, .. } => vec![*a, *b],
            Op::Conv { x, w, .. } => vec![*x, *w],
            Op::Concat(vs, _) => vs.clone(),
            Op::Scale(x, _)
            | Op::AddScalar(x)
            | Op::MaxPool { x, .. }
            | Op::AvgPool { x, .. }
            | Op::Reshape(x)
            | Op::Permute(x, _)
            | Op::Slice { x, .. }
            | Op::Sum { x, .. }
            | Op::Mean { x, .. }
            | Op::Max { x, .. }
            | Op::SumAll(x)
            | Op::Softmax(x)
            | Op::Sigmoid(x)
            | Op::Gelu(x)
            | Op::Relu(x)
            | Op::Log(x)
            | Op::Exp(x)
            | Op::Unfold { x, .. } => vec![*x],
            Op::CrossEntropy { p, .. } => vec![*p],
        }
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        &self.nodes[v.0].value.shape
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn input(&mut self, t: Tensor<T>) -> Var {
        self.nodes.push(Node { value: t, op: Op::Leaf, needs_grad: false });
        Var(self.nodes.len() - 1)
    }

    pub fn constant(&mut self, shape: &[usize], v: f64) -> Var {
        self.input(Tensor::full(shape, c(v)))
    }

    pub fn param(&mut self, id: ParamId) -> Var {
        let value = self.store.get(id).clone();
        self.nodes.push(Node { value, op: Op::Param(id), needs_grad: true });
        Var(self.nodes.len() - 1)
    }

    fn param_size(&self, v: Var) -> u64 {
        match self.nodes[v.0].op {
            Op::Param(_) => self.nodes[v.0].value.len() as u64,
            _ => 0,
        }
    }

    fn binary(&mut self, a: Var, b: Var, f: impl Fn(T, T) -> T) -> Result<Tensor<T>> {
        let (sa, sb) = (self.shape(a).to_vec(), self.shape(b).to_vec());
        let out = broadcast_shape(&sa, &sb)?;
        let (va, vb) = (&self.value(a).data, &self.value(b).data);
        let data = if sa == sb {
            va.iter().zip(vb).map(|(x, y)| f(*x, *y)).collect()
        } else {
            let mut d = vec![T::zero(); numel(&out)];
            let (ta, tb) = (broadcast_strides(&sa, &out), broadcast_strides(&sb, &out));
            for_each_broadcast(&out, &ta, &tb, |o, i, j| d[o] = f(va[i], vb[j]));
            d
        };
        Ok(Tensor { shape: out, data })
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let t = self.binary(a, b, |x, y| x + y)?;
        self.push(t, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let t = self.binary(a, b, |x, y| x - y)?;
        self.push(t, Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let t = self.binary(a, b, |x, y| x * y)?;
        self.push(t, Op::Mul(a, b))
    }

    pub fn scale(&mut self, x: Var, s: f64) -> Result<Var> {
        let s = c::<T>(s);
        let v = self.value(x);
        let t = Tensor { shape: v.shape.clone(), data: v.data.iter().map(|e| *e * s).collect() };
        self.push(t, Op::Scale(x, s))
    }

    pub fn add_scalar(&mut self, x: Var, s: f64) -> Result<Var> {
        let s = c::<T>(s);
        let v = self.value(x);
        let t = Tensor { shape: v.shape.clone(), data: v.data.iter().map(|e| *e + s).collect() };
        self.push(t, Op::AddScalar(x))
    }

    fn map(&mut self, x: Var, f: impl Fn(T) -> T, op: Op<T>) -> Result<Var> {
        let v = self.value(x);
        let t = Tensor { shape: v.shape.clone(), data: v.data.iter().map(|e| f(*e)).collect() };
        self.push(t, op)
    }

    pub fn sigmoid(&mut self, x: Var) -> Result<Var> {
        self.map(x, |v| T::one() / (T::one() + (-v).exp()), Op::Sigmoid(x))
    }

    pub fn gelu(&mut self, x: Var) -> Result<Var> {
        self.map(x, gelu, Op::Gelu(x))
    }

    pub fn relu(&mut self, x: Var) -> Result<Var> {
        self.map(x, |v| if v > T::zero() { v } else { T::zero() }, Op::Relu(x))
    }

    pub fn log(&mut self, x: Var) -> Result<Var> {
        self.map(x, |v| v.ln(), Op::Log(x))
    }

    pub fn exp(&mut self, x: Var) -> Result<Var> {
        self.map(x, |v| v.exp(), Op::Exp(x))
    }

    fn matmul_impl(&mut self, a: Var, b: Var, trans_b: bool) -> Result<Var> {
        let sa = self.shape(a).to_vec();
        let sb = self.shape(b).to_vec();
        if sa.len() < 2 || sb.len() < 2 {
            bail!(Shape, "matmul needs rank >= 2, got {sa:?} and {sb:?}");
        }
        let (m, k) = (sa[sa.len() - 2], sa[sa.len() - 1]);
        let (kb, n) = if trans_b {
            (sb[sb.len() - 1], sb[sb.len() - 2])
        } else {
            (sb[sb.len() - 2], sb[sb.len() - 1])
        };
        let shared_b = sb.len() == 2;
        if kb != k || (!shared_b && sb[..sb.len() - 2] != sa[..sa.len() - 2]) {
            bail!(Shape, "matmul shapes {sa:?} and {sb:?} (transposed: {trans_b}) are incompatible");
        }
        let batch = numel(&sa[..sa.len() - 2]);
        let mut out = sa.clone();
        let last = out.len() - 1;
        out[last] = n;
        let mut data = vec![T::zero(); batch * m * n];
        {
            let (va, vb) = (&self.value(a).data, &self.value(b).data);
            for bi in 0..batch {
                let ab = &va[bi * m * k..(bi + 1) * m * k];
                let bb = if shared_b { &vb[..] } else { &vb[bi * k * n..(bi + 1) * k * n] };
                let cb = &mut data[bi * m * n..(bi + 1) * m * n];
                if trans_b {
                    gemm_nt(ab, bb, cb, m, k, n);
                } else {
                    gemm_nn(ab, bb, cb, m, k, n);
                }
            }
        }
        let params = self.param_size(b);
        let kind = if params > 0 { LayerKind::Dense } else { LayerKind::Attention };
        self.record(|name| LayerRecord::dense(&name, kind, batch * m, k, n, params));
        self.push(Tensor { shape: out, data }, Op::MatMul { a, b, trans_b, batch, m, k, n, shared_b })
    }

    /// `a[..., m, k] · b[k, n]` or batched `a[..., m, k] · b[..., k, n]`.
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.matmul_impl(a, b, false)
    }

    /// `a[..., m, k] · b[..., n, k]ᵀ`.
    pub fn matmul_t(&mut self, a: Var, b: Var) -> Result<Var> {
        self.matmul_impl(a, b, true)
    }

    /// `x[B, C_in, H, W]` with weights `w[C_out, C_in/groups, kh, kw]`.
    pub fn conv2d(&mut self, x: Var, w: Var, stride: (usize, usize), pad: (usize, usize), groups: usize) -> Result<Var> {
        let sx = self.shape(x).to_vec();
        let sw = self.shape(w).to_vec();
        if sx.len() != 4 || sw.len() != 4 {
            bail!(Shape, "conv2d needs rank-4 input and weight, got {sx:?} and {sw:?}");
        }
        let geom = ConvGeom {
            c_in: sx[1],
            h: sx[2],
            w: sx[3],
            c_out: sw[0],
            kh: sw[2],
            kw: sw[3],
            stride,
            pad,
            groups,
        };
        if groups == 0
            || geom.c_in % groups != 0
            || geom.c_out % groups != 0
            || sw[1] != geom.c_in / groups
            || stride.0 == 0
            || stride.1 == 0
            || geom.h + 2 * pad.0 < geom.kh
            || geom.w + 2 * pad.1 < geom.kw
        {
            bail!(Shape, "conv2d input {sx:?}, weight {sw:?}, groups {groups} are incompatible");
        }
        let batch = sx[0];
        let (rows, cols_n) = (geom.col_rows(), geom.col_cols());
        let cout_g = geom.cout_g();
        let mut cols = vec![T::zero(); batch * groups * rows * cols_n];
        let mut out = vec![T::zero(); batch * geom.c_out * cols_n];
        {
            let (vx, vw) = (&self.value(x).data, &self.value(w).data);
            let img = geom.c_in * geom.h * geom.w;
            for b in 0..batch {
                for g in 0..groups {
                    let cb = &mut cols[(b * groups + g) * rows * cols_n..][..rows * cols_n];
                    im2col(&vx[b * img..(b + 1) * img], &geom, g, cb);
                    let wg = &vw[g * cout_g * rows..(g + 1) * cout_g * rows];
                    let ob = &mut out[(b * geom.c_out + g * cout_g) * cols_n..][..cout_g * cols_n];
                    gemm_nn(wg, cb, ob, cout_g, rows, cols_n);
                }
            }
        }
        let params = self.param_size(w);
        self.record(|name| {
            LayerRecord::conv(&name, geom.out_h(), geom.out_w(), geom.kh, geom.kw, geom.cin_g(), geom.c_out, params)
        });
        let shape = vec![batch, geom.c_out, geom.out_h(), geom.out_w()];
        self.push(Tensor { shape, data: out }, Op::Conv { x, w, geom, batch, cols })
    }

    /// Non-overlapping max pooling over `kh × kw` windows; trailing rows and
    /// columns that do not fill a window are dropped.
    pub fn max_pool2d(&mut self, x: Var, kh: usize, kw: usize) -> Result<Var> {
        let s = self.shape(x).to_vec();
        if s.len() != 4 || kh == 0 || kw == 0 || s[2] < kh || s[3] < kw {
            bail!(Shape, "cannot max-pool {s:?} with a {kh}x{kw} window");
        }
        let (oh, ow) = (s[2] / kh, s[3] / kw);
        let planes = s[0] * s[1];
        let mut data = Vec::with_capacity(planes * oh * ow);
        let mut argmax = Vec::with_capacity(planes * oh * ow);
        let v = &self.value(x).data;
        for p in 0..planes {
            let base = p * s[2] * s[3];
            for oy in 0..oh {
                for ox in 0..ow {
                    let mut best = base + oy * kh * s[3] + ox * kw;
                    for dy in 0..kh {
                        for dx in 0..kw {
                            let i = base + (oy * kh + dy) * s[3] + ox * kw + dx;
                            if v[i] > v[best] {
                                best = i;
                            }
                        }
                    }
                    data.push(v[best]);
                    argmax.push(best);
                }
            }
        }
        self.push(Tensor { shape: vec![s[0], s[1], oh, ow], data }, Op::MaxPool { x, argmax })
    }

    /// Non-overlapping average pooling; partial windows at the far edges are
    /// kept and averaged over their valid entries.
    pub fn avg_pool2d(&mut self, x: Var, kh: usize, kw: usize) -> Result<Var> {
        let s = self.shape(x).to_vec();
        if s.len() != 4 || kh == 0 || kw == 0 {
            bail!(Shape, "cannot average-pool {s:?} with a {kh}x{kw} window");
        }
        let (oh, ow) = (s[2].div_ceil(kh), s[3].div_ceil(kw));
        let planes = s[0] * s[1];
        let mut data = Vec::with_capacity(planes * oh * ow);
        let v = &self.value(x).data;
        for p in 0..planes {
            let base = p * s[2] * s[3];
            for oy in 0..oh {
                for ox in 0..ow {
                    let (y1, x1) = ((oy * kh + kh).min(s[2]), (ox * kw + kw).min(s[3]));
                    let mut acc = T::zero();
                    for iy in oy * kh..y1 {
                        for ix in ox * kw..x1 {
                            acc += v[base + iy * s[3] + ix];
                        }
                    }
                    data.push(acc / c::<T>(((y1 - oy * kh) * (x1 - ox * kw)) as f64));
                }
            }
        }
        self.push(Tensor { shape: vec![s[0], s[1], oh, ow], data }, Op::AvgPool { x, kh, kw })
    }

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Result<Var> {
        let t = self.value(x).clone().reshaped(shape)?;
        self.push(t, Op::Reshape(x))
    }

    pub fn permute(&mut self, x: Var, perm: &[usize]) -> Result<Var> {
        let s = self.shape(x).to_vec();
        let mut seen = vec![false; s.len()];
        if perm.len() != s.len() || perm.iter().any(|&p| p >= s.len() || std::mem::replace(&mut seen[p], true)) {
            bail!(Shape, "invalid permutation {perm:?} for shape {s:?}");
        }
        let out: Vec<usize> = perm.iter().map(|&p| s[p]).collect();
        let st = strides(&s);
        let src: Vec<usize> = perm.iter().map(|&p| st[p]).collect();
        let zero = vec![0; out.len()];
        let v = &self.value(x).data;
        let mut data = vec![T::zero(); v.len()];
        for_each_broadcast(&out, &src, &zero, |o, i, _| data[o] = v[i]);
        self.push(Tensor { shape: out, data }, Op::Permute(x, perm.to_vec()))
    }

    pub fn concat(&mut self, xs: &[Var], axis: usize) -> Result<Var> {
        let Some(first) = xs.first() else { bail!(Shape, "concat of nothing") };
        let base = self.shape(*first).to_vec();
        if axis >= base.len() {
            bail!(Shape, "concat axis {axis} out of range for {base:?}");
        }
        let mut total = 0;
        for v in xs {
            let s = self.shape(*v);
            if s.len() != base.len() || (0..s.len()).any(|d| d != axis && s[d] != base[d]) {
                bail!(Shape, "cannot concat {s:?} with {base:?} along {axis}");
            }
            total += s[axis];
        }
        let (outer, _, inner) = split_axis(&base, axis);
        let mut out = base.clone();
        out[axis] = total;
        let mut data = Vec::with_capacity(numel(&out));
        for o in 0..outer {
            for v in xs {
                let n = self.shape(*v)[axis];
                data.extend_from_slice(&self.value(*v).data[o * n * inner..(o + 1) * n * inner]);
            }
        }
        self.push(Tensor { shape: out, data }, Op::Concat(xs.to_vec(), axis))
    }

    pub fn slice(&mut self, x: Var, axis: usize, start: usize, len: usize) -> Result<Var> {
        let s = self.shape(x).to_vec();
        if axis >= s.len() || start + len > s[axis] || len == 0 {
            bail!(Shape, "slice {start}..{} of axis {axis} out of range for {s:?}", start + len);
        }
        let (outer, n, inner) = split_axis(&s, axis);
        let v = &self.value(x).data;
        let mut data = Vec::with_capacity(outer * len * inner);
        for o in 0..outer {
            data.extend_from_slice(&v[(o * n + start) * inner..(o * n + start + len) * inner]);
        }
        let mut out = s;
        out[axis] = len;
        self.push(Tensor { shape: out, data }, Op::Slice { x, axis, start })
    }

    fn reduce(&mut self, x: Var, axis: usize) -> Result<(Vec<usize>, usize, usize, usize)> {
        let s = self.shape(x).to_vec();
        if axis >= s.len() {
            bail!(Shape, "axis {axis} out of range for {s:?}");
        }
        let (outer, n, inner) = split_axis(&s, axis);
        let mut out = s;
        out[axis] = 1;
        Ok((out, outer, n, inner))
    }

    /// Sum over `axis`, kept as a size-1 dimension.
    pub fn sum(&mut self, x: Var, axis: usize) -> Result<Var> {
        let (out, outer, n, inner) = self.reduce(x, axis)?;
        let v = &self.value(x).data;
        let mut data = vec![T::zero(); outer * inner];
        for o in 0..outer {
            for j in 0..n {
                for i in 0..inner {
                    data[o * inner + i] += v[(o * n + j) * inner + i];
                }
            }
        }
        self.push(Tensor { shape: out, data }, Op::Sum { x, axis })
    }

    /// Mean over `axis`, kept as a size-1 dimension.
    pub fn mean(&mut self, x: Var, axis: usize) -> Result<Var> {
        let (out, outer, n, inner) = self.reduce(x, axis)?;
        let v = &self.value(x).data;
        let mut data = vec![T::zero(); outer * inner];
        for o in 0..outer {
            for j in 0..n {
                for i in 0..inner {
                    data[o * inner + i] += v[(o * n + j) * inner + i];
                }
            }
        }
        let inv = c::<T>(1.0 / n as f64);
        data.iter_mut().for_each(|d| *d *= inv);
        self.push(Tensor { shape: out, data }, Op::Mean { x, axis })
    }

    /// Max over `axis`, kept as a size-1 dimension; ties go to the lowest index.
    pub fn max(&mut self, x: Var, axis: usize) -> Result<Var> {
        let (out, outer, n, inner) = self.reduce(x, axis)?;
        let v = &self.value(x).data;
        let mut data = Vec::with_capacity(outer * inner);
        let mut argmax = Vec::with_capacity(outer * inner);
        for o in 0..outer {
            for i in 0..inner {
                let mut best = o * n * inner + i;
                for j in 1..n {
                    let idx = (o * n + j) * inner + i;
                    if v[idx] > v[best] {
                        best = idx;
                    }
                }
                data.push(v[best]);
                argmax.push(best);
            }
        }
        self.push(Tensor { shape: out, data }, Op::Max { x, argmax })
    }

    pub fn sum_all(&mut self, x: Var) -> Result<Var> {
        let s: T = self.value(x).data.iter().copied().sum();
        self.push(Tensor::scalar(s), Op::SumAll(x))
    }

    pub fn mean_all(&mut self, x: Var) -> Result<Var> {
        let n = self.value(x).len();
        let s = self.sum_all(x)?;
        self.scale(s, 1.0 / n as f64)
    }

    /// Softmax over the last axis.
    pub fn softmax(&mut self, x: Var) -> Result<Var> {
        let s = self.shape(x).to_vec();
        let Some(&n) = s.last() else { bail!(Shape, "softmax of a scalar") };
        let rows = numel(&s) / n.max(1);
        self.record(|name| LayerRecord::softmax(&name, rows, n));
        let v = &self.value(x).data;
        let mut data = vec![T::zero(); v.len()];
        for r in 0..rows {
            let row = &v[r * n..(r + 1) * n];
            let m = row.iter().copied().fold(T::neg_infinity(), T::max);
            let out = &mut data[r * n..(r + 1) * n];
            let mut z = T::zero();
            for (o, x) in out.iter_mut().zip(row) {
                *o = (*x - m).exp();
                z += *o;
            }
            out.iter_mut().for_each(|o| *o = *o / z);
        }
        self.push(Tensor { shape: s, data }, Op::Softmax(x))
    }

    /// `k × k` neighbourhoods of `x[B, C, H, W]` as `[B, H·W, k·k, C]`, zero
    /// outside the map. Neighbour `j` of a pixel sits at row offset
    /// `j / k − k/2` and column offset `j % k − k/2`.
    pub fn unfold(&mut self, x: Var, k: usize) -> Result<Var> {
        let s = self.shape(x).to_vec();
        if s.len() != 4 || k % 2 == 0 || k > s[2].max(s[3]) * 2 + 1 {
            bail!(Shape, "cannot unfold {s:?} with window {k}");
        }
        let (b, ch, h, w) = (s[0], s[1], s[2], s[3]);
        let r = (k / 2) as isize;
        let v = &self.value(x).data;
        let mut data = vec![T::zero(); b * h * w * k * k * ch];
        for bi in 0..b {
            for py in 0..h {
                for px in 0..w {
                    for j in 0..k * k {
                        let iy = py as isize + (j / k) as isize - r;
                        let ix = px as isize + (j % k) as isize - r;
                        if iy < 0 || ix < 0 || iy as usize >= h || ix as usize >= w {
                            continue;
                        }
                        let dst = (((bi * h + py) * w + px) * k * k + j) * ch;
                        for ci in 0..ch {
                            data[dst + ci] = v[((bi * ch + ci) * h + iy as usize) * w + ix as usize];
                        }
                    }
                }
            }
        }
        self.push(Tensor { shape: vec![b, h * w, k * k, ch], data }, Op::Unfold { x, k })
    }

    /// `−mean_b log(p[b, y_b] + eps)` for a batch of probability rows.
    pub fn cross_entropy_from_probs(&mut self, p: Var, labels: &[usize], eps: f64) -> Result<Var> {
        let s = self.shape(p).to_vec();
        if s.len() != 2 || s[0] != labels.len() || labels.iter().any(|&y| y >= s[1]) {
            bail!(Shape, "probabilities {s:?} do not match {} labels", labels.len());
        }
        let eps = c::<T>(eps);
        let v = &self.value(p).data;
        let total: T = labels.iter().enumerate().map(|(b, &y)| -(v[b * s[1] + y] + eps).ln()).sum();
        let loss = total / c::<T>(labels.len() as f64);
        self.push(Tensor::scalar(loss), Op::CrossEntropy { p, labels: labels.to_vec(), eps })
    }

    /// Gradients of the scalar `loss` with respect to every parameter.
    pub fn backward(&self, loss: Var) -> Result<Gradients<T>> {
        if self.value(loss).len() != 1 {
            bail!(Shape, "backward needs a scalar loss, got shape {:?}", self.shape(loss));
        }
        let mut out = Gradients::zeros_like(self.store);
        let mut grads: Vec<Option<Vec<T>>> = vec![None; loss.0 + 1];
        grads[loss.0] = Some(vec![T::one()]);
        for idx in (0..=loss.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            let node = &self.nodes[idx];
            if !node.needs_grad {
                continue;
            }
            self.propagate(idx, &g, &mut grads, &mut out);
        }
        if self.strict && !out.is_finite() {
            bail!(Numeric, "non-finite gradient");
        }
        Ok(out)
    }

    fn propagate(&self, idx: usize, g: &[T], grads: &mut [Option<Vec<T>>], out: &mut Gradients<T>) {
        let node = &self.nodes[idx];
        let y = &node.value;
        let wants = |v: &Var| self.nodes[v.0].needs_grad;
        let mut acc = |v: Var, f: &mut dyn FnMut(&mut [T])| {
            if !self.nodes[v.0].needs_grad {
                return;
            }
            let slot = grads[v.0].get_or_insert_with(|| vec![T::zero(); self.nodes[v.0].value.len()]);
            f(slot);
        };
        match &node.op {
            Op::Leaf => {}
            Op::Param(id) => {
                out.grads[id.0].data.iter_mut().zip(g).for_each(|(a, b)| *a += *b);
            }
            Op::Add(a, b) | Op::Sub(a, b) => {
                let neg = matches!(node.op, Op::Sub(..));
                let (sa, sb) = (&self.nodes[a.0].value.shape, &self.nodes[b.0].value.shape);
                let ta = broadcast_strides(sa, &y.shape);
                let tb = broadcast_strides(sb, &y.shape);
                let zero = vec![0; y.shape.len()];
                acc(*a, &mut |d| for_each_broadcast(&y.shape, &ta, &zero, |o, i, _| d[i] += g[o]));
                acc(*b, &mut |d| {
                    for_each_broadcast(&y.shape, &tb, &zero, |o, i, _| {
                        if neg {
                            d[i] -= g[o]
                        } else {
                            d[i] += g[o]
                        }
                    })
                });
            }
            Op::Mul(a, b) => {
                let (va, vb) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
                let ta = broadcast_strides(&va.shape, &y.shape);
                let tb = broadcast_strides(&vb.shape, &y.shape);
                acc(*a, &mut |d| for_each_broadcast(&y.shape, &ta, &tb, |o, i, j| d[i] += g[o] * vb.data[j]));
                acc(*b, &mut |d| for_each_broadcast(&y.shape, &ta, &tb, |o, i, j| d[j] += g[o] * va.data[i]));
            }
            Op::Scale(x, s) => acc(*x, &mut |d| d.iter_mut().zip(g).for_each(|(a, b)| *a += *b * *s)),
            Op::AddScalar(x) | Op::Reshape(x) => acc(*x, &mut |d| d.iter_mut().zip(g).for_each(|(a, b)| *a += *b)),
            Op::MatMul { a, b, trans_b, batch, m, k, n, shared_b } => {
                let (m, k, n) = (*m, *k, *n);
                let (va, vb) = (&self.nodes[a.0].value.data, &self.nodes[b.0].value.data);
                acc(*a, &mut |d| {
                    for bi in 0..*batch {
                        let gb = &g[bi * m * n..(bi + 1) * m * n];
                        let bb = if *shared_b { &vb[..] } else { &vb[bi * k * n..(bi + 1) * k * n] };
                        let db = &mut d[bi * m * k..(bi + 1) * m * k];
                        if *trans_b {
                            gemm_nn(gb, bb, db, m, n, k);
                        } else {
                            gemm_nt(gb, bb, db, m, n, k);
                        }
                    }
                });
                acc(*b, &mut |d| {
                    for bi in 0..*batch {
                        let gb = &g[bi * m * n..(bi + 1) * m * n];
                        let ab = &va[bi * m * k..(bi + 1) * m * k];
                        let db = if *shared_b { &mut d[..] } else { &mut d[bi * k * n..(bi + 1) * k * n] };
                        if *trans_b {
                            gemm_tn(gb, ab, db, n, m, k);
                        } else {
                            gemm_tn(ab, gb, db, k, m, n);
                        }
                    }
                });
            }
            Op::Conv { x, w, geom, batch, cols } => {
                let (rows, ncol) = (geom.col_rows(), geom.col_cols());
                let cout_g = geom.cout_g();
                let groups = geom.groups;
                acc(*w, &mut |d| {
                    for b in 0..*batch {
                        for gi in 0..groups {
                            let cb = &cols[(b * groups + gi) * rows * ncol..][..rows * ncol];
                            let gy = &g[(b * geom.c_out + gi * cout_g) * ncol..][..cout_g * ncol];
                            gemm_nt(gy, cb, &mut d[gi * cout_g * rows..(gi + 1) * cout_g * rows], cout_g, ncol, rows);
                        }
                    }
                });
                if wants(x) {
                    let vw = &self.nodes[w.0].value.data;
                    let img = geom.c_in * geom.h * geom.w;
                    let mut dcols = vec![T::zero(); rows * ncol];
                    acc(*x, &mut |d| {
                        for b in 0..*batch {
                            for gi in 0..groups {
                                dcols.iter_mut().for_each(|v| *v = T::zero());
                                let gy = &g[(b * geom.c_out + gi * cout_g) * ncol..][..cout_g * ncol];
                                let wg = &vw[gi * cout_g * rows..(gi + 1) * cout_g * rows];
                                gemm_tn(wg, gy, &mut dcols, rows, cout_g, ncol);
                                col2im(&dcols, geom, gi, &mut d[b * img..(b + 1) * img]);
                            }
                        }
                    });
                }
            }
            Op::MaxPool { x, argmax } | Op::Max { x, argmax } => {
                acc(*x, &mut |d| argmax.iter().zip(g).for_each(|(&i, v)| d[i] += *v))
            }
            Op::AvgPool { x, kh, kw } => {
                let s = &self.nodes[x.0].value.shape;
                let (oh, ow) = (y.shape[2], y.shape[3]);
                acc(*x, &mut |d| {
                    for p in 0..s[0] * s[1] {
                        let base = p * s[2] * s[3];
                        for oy in 0..oh {
                            for ox in 0..ow {
                                let (y1, x1) = ((oy * kh + kh).min(s[2]), (ox * kw + kw).min(s[3]));
                                let cnt = c::<T>(((y1 - oy * kh) * (x1 - ox * kw)) as f64);
                                let gv = g[(p * oh + oy) * ow + ox] / cnt;
                                for iy in oy * kh..y1 {
                                    for ix in ox * kw..x1 {
                                        d[base + iy * s[3] + ix] += gv;
                                    }
                                }
                            }
                        }
                    }
                });
            }
            Op::Permute(x, perm) => {
                let s = &self.nodes[x.0].value.shape;
                let st = strides(s);
                let src: Vec<usize> = perm.iter().map(|&p| st[p]).collect();
                let zero = vec![0; s.len()];
                acc(*x, &mut |d| for_each_broadcast(&y.shape, &src, &zero, |o, i, _| d[i] += g[o]));
            }
            Op::Concat(xs, axis) => {
                let (outer, total, inner) = split_axis(&y.shape, *axis);
                let mut offset = 0;
                for v in xs {
                    let n = self.nodes[v.0].value.shape[*axis];
                    acc(*v, &mut |d| {
                        for o in 0..outer {
                            let src = &g[(o * total + offset) * inner..(o * total + offset + n) * inner];
                            d[o * n * inner..(o + 1) * n * inner].iter_mut().zip(src).for_each(|(a, b)| *a += *b);
                        }
                    });
                    offset += n;
                }
            }
            Op::Slice { x, axis, start } => {
                let (outer, n, inner) = split_axis(&self.nodes[x.0].value.shape, *axis);
                let len = y.shape[*axis];
                acc(*x, &mut |d| {
                    for o in 0..outer {
                        let dst = &mut d[(o * n + start) * inner..(o * n + start + len) * inner];
                        dst.iter_mut().zip(&g[o * len * inner..(o + 1) * len * inner]).for_each(|(a, b)| *a += *b);
                    }
                });
            }
            Op::Sum { x, axis } | Op::Mean { x, axis } => {
                let (outer, n, inner) = split_axis(&self.nodes[x.0].value.shape, *axis);
                let f = if matches!(node.op, Op::Mean { .. }) { c::<T>(1.0 / n as f64) } else { T::one() };
                acc(*x, &mut |d| {
                    for o in 0..outer {
                        for j in 0..n {
                            for i in 0..inner {
                                d[(o * n + j) * inner + i] += g[o * inner + i] * f;
                            }
                        }
                    }
                });
            }
            Op::SumAll(x) => acc(*x, &mut |d| d.iter_mut().for_each(|a| *a += g[0])),
            Op::Softmax(x) => {
                let n = *y.shape.last().unwrap_or(&1);
                acc(*x, &mut |d| {
                    for ((dr, yr), gr) in d.chunks_mut(n).zip(y.data.chunks(n)).zip(g.chunks(n)) {
                        let dot: T = yr.iter().zip(gr).map(|(a, b)| *a * *b).sum();
                        for ((dv, yv), gv) in dr.iter_mut().zip(yr).zip(gr) {
                            *dv += *yv * (*gv - dot);
                        }
                    }
                });
            }
            Op::Sigmoid(x) => acc(*x, &mut |d| {
                for ((dv, yv), gv) in d.iter_mut().zip(&y.data).zip(g) {
                    *dv += *gv * *yv * (T::one() - *yv);
                }
            }),
            Op::Exp(x) => acc(*x, &mut |d| {
                for ((dv, yv), gv) in d.iter_mut().zip(&y.data).zip(g) {
                    *dv += *gv * *yv;
                }
            }),
            Op::Gelu(x) | Op::Relu(x) | Op::Log(x) => {
                let vx = &self.nodes[x.0].value.data;
                let kind = &node.op;
                acc(*x, &mut |d| {
                    for ((dv, xv), gv) in d.iter_mut().zip(vx).zip(g) {
                        *dv += *gv
                            * match kind {
                                Op::Gelu(_) => gelu_grad(*xv),
                                Op::Relu(_) => {
                                    if *xv > T::zero() {
                                        T::one()
                                    } else {
                                        T::zero()
                                    }
                                }
                                _ => T::one() / *xv,
                            };
                    }
                });
            }
            Op::Unfold { x, k } => {
                let s = &self.nodes[x.0].value.shape;
                let (b, ch, h, w) = (s[0], s[1], s[2], s[3]);
                let r = (k / 2) as isize;
                acc(*x, &mut |d| {
                    for bi in 0..b {
                        for py in 0..h {
                            for px in 0..w {
                                for j in 0..k * k {
                                    let iy = py as isize + (j / k) as isize - r;
                                    let ix = px as isize + (j % k) as isize - r;
                                    if iy < 0 || ix < 0 || iy as usize >= h || ix as usize >= w {
                                        continue;
                                    }
                                    let src = (((bi * h + py) * w + px) * k * k + j) * ch;
                                    for ci in 0..ch {
                                        d[((bi * ch + ci) * h + iy as usize) * w + ix as usize] += g[src + ci];
                                    }
                                }
                            }
                        }
                    }
                });
            }
            Op::CrossEntropy { p, labels, eps } => {
                let vp = &self.nodes[p.0].value;
                let n = vp.shape[1];
                let scale = g[0] / c::<T>(labels.len() as f64);
                acc(*p, &mut |d| {
                    for (b, &lab) in labels.iter().enumerate() {
                        d[b * n + lab] -= scale / (vp.data[b * n + lab] + *eps);
                    }
                });
            }
        }
    }
}
