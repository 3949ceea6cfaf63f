//! GCN towers, the fusion heads that combine them, and their analytic
//! gradients.
//!
//! Parameters are exposed to optimizers as one flat vector in a fixed order:
//! towers in order, each layer's weights (row-major) then bias, then the
//! head parameters.

use std::fmt;
use std::str::FromStr;

use ndarray::{concatenate, s, Array1, Array2, ArrayView2, Axis, Zip};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graphs::{early_fuse, normalize, NormalizedOperator, WeightedGraph};
use crate::linalg::cosine_view;

pub const CHECKPOINT_FORMAT: &str = "talentgraph-checkpoint";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FusionKind {
    SingleStr,
    SingleSsim,
    EarlyConcat,
    LateConcat,
    WeightedSum,
    Attention,
    Gating,
}

impl FusionKind {
    pub const ALL: [FusionKind; 7] = [
        FusionKind::SingleStr,
        FusionKind::SingleSsim,
        FusionKind::EarlyConcat,
        FusionKind::LateConcat,
        FusionKind::WeightedSum,
        FusionKind::Attention,
        FusionKind::Gating,
    ];

    pub fn name(self) -> &'static str {
        match self {
            FusionKind::SingleStr => "single_str",
            FusionKind::SingleSsim => "single_ssim",
            FusionKind::EarlyConcat => "early_concat",
            FusionKind::LateConcat => "late_concat",
            FusionKind::WeightedSum => "weighted_sum",
            FusionKind::Attention => "attention",
            FusionKind::Gating => "gating",
        }
    }

    /// Graph each tower propagates over.
    pub fn views(self) -> &'static [GraphView] {
        match self {
            FusionKind::SingleStr => &[GraphView::Structure],
            FusionKind::SingleSsim => &[GraphView::Semantic],
            FusionKind::EarlyConcat => &[GraphView::Early],
            _ => &[GraphView::Structure, GraphView::Semantic],
        }
    }

    pub fn has_gate(self) -> bool {
        matches!(self, FusionKind::Attention | FusionKind::Gating)
    }
}

impl fmt::Display for FusionKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for FusionKind {
    type Err = Error;

    /// Accepts the snake-case names and the command-line spellings
    /// (`single-str`, `weighted`, ...).
    fn from_str(s: &str) -> Result<Self> {
        let norm = s.trim().to_ascii_lowercase().replace('-', "_");
        let kind = match norm.as_str() {
            "weighted" => FusionKind::WeightedSum,
            other => FusionKind::ALL
                .into_iter()
                .find(|k| k.name() == other)
                .ok_or_else(|| Error::Config(format!("unknown model kind `{s}`")))?,
        };
        Ok(kind)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GraphView {
    Structure,
    Semantic,
    Early,
}

/// Normalized operators of the structure, semantic and early-fused graphs.
#[derive(Debug, Clone, PartialEq)]
pub struct GraphOperators {
    pub structure: NormalizedOperator,
    pub semantic: NormalizedOperator,
    pub early: NormalizedOperator,
}

impl GraphOperators {
    pub fn build(g_str: &WeightedGraph, g_ssim: &WeightedGraph) -> Result<Self> {
        Ok(Self {
            structure: normalize(g_str),
            semantic: normalize(g_ssim),
            early: normalize(&early_fuse(g_str, g_ssim)?),
        })
    }

    pub fn n(&self) -> usize {
        self.structure.n()
    }

    pub fn get(&self, v: GraphView) -> &NormalizedOperator {
        match v {
            GraphView::Structure => &self.structure,
            GraphView::Semantic => &self.semantic,
            GraphView::Early => &self.early,
        }
    }

    pub fn permuted(&self, perm: &[usize]) -> Self {
        Self {
            structure: self.structure.permuted(perm),
            semantic: self.semantic.permuted(perm),
            early: self.early.permuted(perm),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    /// `in × out`.
    pub w: Array2<f64>,
    pub b: Array1<f64>,
}

impl Layer {
    fn glorot(fan_in: usize, fan_out: usize, rng: &mut ChaCha8Rng) -> Self {
        let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
        Self {
            w: Array2::from_shape_fn((fan_in, fan_out), |_| rng.random_range(-limit..limit)),
            b: Array1::zeros(fan_out),
        }
    }

    fn zeros_like(&self) -> Self {
        Self {
            w: Array2::zeros(self.w.raw_dim()),
            b: Array1::zeros(self.b.len()),
        }
    }
}

/// Stack of `H <- relu(A H W + b)` layers; the last layer is linear.
#[derive(Debug, Clone, PartialEq)]
pub struct GcnTower {
    pub view: GraphView,
    pub layers: Vec<Layer>,
}

struct TowerCache {
    /// `A H_{l-1}` for each layer.
    propagated: Vec<Array2<f64>>,
    /// Pre-activations `A H_{l-1} W + b`.
    pre: Vec<Array2<f64>>,
}

impl GcnTower {
    pub fn init(view: GraphView, dims: &[usize], rng: &mut ChaCha8Rng) -> Self {
        Self {
            view,
            layers: dims.windows(2).map(|d| Layer::glorot(d[0], d[1], rng)).collect(),
        }
    }

    pub fn in_dim(&self) -> usize {
        self.layers[0].w.nrows()
    }

    pub fn out_dim(&self) -> usize {
        self.layers.last().unwrap().w.ncols()
    }

    pub fn forward(&self, op: &NormalizedOperator, x: ArrayView2<f64>) -> Result<Array2<f64>> {
        Ok(self.forward_cached(op, x)?.0)
    }

    fn forward_cached(&self, op: &NormalizedOperator, x: ArrayView2<f64>) -> Result<(Array2<f64>, TowerCache)> {
        if x.nrows() != op.n() || x.ncols() != self.in_dim() {
            return Err(Error::Shape(format!(
                "tower expects {} x {} input, got {} x {}",
                op.n(),
                self.in_dim(),
                x.nrows(),
                x.ncols()
            )));
        }
        let mut cache = TowerCache {
            propagated: Vec::with_capacity(self.layers.len()),
            pre: Vec::with_capacity(self.layers.len()),
        };
        let mut h = x.to_owned();
        for (l, layer) in self.layers.iter().enumerate() {
            let p = op.matrix.matmul(h.view());
            let z = p.dot(&layer.w) + &layer.b;
            h = if l + 1 < self.layers.len() {
                z.mapv(|v| v.max(0.0))
            } else {
                z.clone()
            };
            cache.propagated.push(p);
            cache.pre.push(z);
        }
        Ok((h, cache))
    }

    fn backward(&self, op: &NormalizedOperator, cache: &TowerCache, d_out: Array2<f64>) -> Vec<Layer> {
        let mut grads: Vec<Layer> = self.layers.iter().map(Layer::zeros_like).collect();
        let mut dz = d_out;
        for l in (0..self.layers.len()).rev() {
            grads[l].w = cache.propagated[l].t().dot(&dz);
            grads[l].b = dz.sum_axis(Axis(0));
            if l == 0 {
                break;
            }
            // The operator is symmetric, so its transpose is itself.
            let dp = dz.dot(&self.layers[l].w.t());
            let mut dh = op.matrix.matmul(dp.view());
            Zip::from(&mut dh).and(&cache.pre[l - 1]).for_each(|d, &z| {
                if z <= 0.0 {
                    *d = 0.0;
                }
            });
            dz = dh;
        }
        grads
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Head {
    /// One tower, output used directly.
    Single,
    Concat,
    Weighted { alpha: f64 },
    /// `a_i = sigmoid(w_a . [h_str | h_ssim] + b_a)`.
    Attention { w_a: Array1<f64>, b_a: f64 },
    /// `g_i = sigmoid(W_g [h_str | h_ssim] + b_g)`, `W_g` is `out × 2 out`.
    Gating { w_g: Array2<f64>, b_g: Array1<f64> },
}

/// Mixing weights on the structural tower.
#[derive(Debug, Clone, PartialEq)]
pub enum GateValues {
    Node(Array1<f64>),
    Elementwise(Array2<f64>),
}

impl GateValues {
    /// Per-node mean weight on `h_str`.
    pub fn structural_share(&self) -> Vec<f64> {
        match self {
            GateValues::Node(a) => a.to_vec(),
            GateValues::Elementwise(g) => g.rows().into_iter().map(|r| r.mean().unwrap_or(0.5)).collect(),
        }
    }

    pub fn values(&self) -> Vec<f64> {
        match self {
            GateValues::Node(a) => a.to_vec(),
            GateValues::Elementwise(g) => g.iter().copied().collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FusedEmbeddings {
    pub h: Array2<f64>,
    pub gate: Option<GateValues>,
}

impl FusedEmbeddings {
    pub fn n(&self) -> usize {
        self.h.nrows()
    }

    /// Cosine of rows `i` and `j`; 0 if either row is zero.
    pub fn score(&self, i: usize, j: usize) -> f64 {
        score_pair(self.h.view(), i, j)
    }
}

pub fn score_pair(h: ArrayView2<f64>, i: usize, j: usize) -> f64 {
    cosine_view(h.row(i), h.row(j))
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub struct ForwardCache {
    towers: Vec<(Array2<f64>, TowerCache)>,
    concat: Option<Array2<f64>>,
    gate: Option<GateValues>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FusionModel {
    pub kind: FusionKind,
    pub dims: Vec<usize>,
    pub seed: u64,
    pub towers: Vec<GcnTower>,
    pub head: Head,
}

impl FusionModel {
    /// Glorot-uniform towers and head, zero biases. `alpha` is only used by
    /// the weighted-sum kind.
    pub fn new(kind: FusionKind, dims: &[usize], seed: u64, alpha: f64) -> Result<Self> {
        if dims.len() < 2 || dims.contains(&0) {
            return Err(Error::Config(format!("invalid tower dims {dims:?}")));
        }
        if !(0.0..=1.0).contains(&alpha) {
            return Err(Error::Config(format!("alpha must lie in [0, 1], got {alpha}")));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let towers: Vec<GcnTower> = kind.views().iter().map(|&v| GcnTower::init(v, dims, &mut rng)).collect();
        let out = *dims.last().unwrap();
        let head = match kind {
            FusionKind::SingleStr | FusionKind::SingleSsim | FusionKind::EarlyConcat => Head::Single,
            FusionKind::LateConcat => Head::Concat,
            FusionKind::WeightedSum => Head::Weighted { alpha },
            FusionKind::Attention => {
                let limit = (6.0 / (2 * out + 1) as f64).sqrt();
                Head::Attention {
                    w_a: Array1::from_shape_fn(2 * out, |_| rng.random_range(-limit..limit)),
                    b_a: 0.0,
                }
            }
            FusionKind::Gating => {
                let limit = (6.0 / (3 * out) as f64).sqrt();
                Head::Gating {
                    w_g: Array2::from_shape_fn((out, 2 * out), |_| rng.random_range(-limit..limit)),
                    b_g: Array1::zeros(out),
                }
            }
        };
        Ok(Self {
            kind,
            dims: dims.to_vec(),
            seed,
            towers,
            head,
        })
    }

    pub fn out_dim(&self) -> usize {
        let out = *self.dims.last().unwrap();
        if self.kind == FusionKind::LateConcat {
            2 * out
        } else {
            out
        }
    }

    pub fn forward(&self, ops: &GraphOperators, x: ArrayView2<f64>) -> Result<FusedEmbeddings> {
        Ok(self.forward_train(ops, x)?.0)
    }

    pub fn forward_train(&self, ops: &GraphOperators, x: ArrayView2<f64>) -> Result<(FusedEmbeddings, ForwardCache)> {
        let mut towers = Vec::with_capacity(self.towers.len());
        for t in &self.towers {
            towers.push(t.forward_cached(ops.get(t.view), x)?);
        }
        let mut cache = ForwardCache {
            towers,
            concat: None,
            gate: None,
        };
        let h = match &self.head {
            Head::Single => cache.towers[0].0.clone(),
            Head::Concat => concatenate![Axis(1), cache.towers[0].0, cache.towers[1].0],
            Head::Weighted { alpha } => &cache.towers[0].0 * *alpha + &cache.towers[1].0 * (1.0 - alpha),
            Head::Attention { w_a, b_a } => {
                let (hs, hm) = (&cache.towers[0].0, &cache.towers[1].0);
                let c = concatenate![Axis(1), *hs, *hm];
                let a = c.dot(w_a).mapv(|v| sigmoid(v + b_a));
                let mut h = hm.clone();
                for (i, mut row) in h.rows_mut().into_iter().enumerate() {
                    row.zip_mut_with(&hs.row(i), |m, &s| *m = a[i] * s + (1.0 - a[i]) * *m);
                }
                cache.concat = Some(c);
                cache.gate = Some(GateValues::Node(a));
                h
            }
            Head::Gating { w_g, b_g } => {
                let (hs, hm) = (&cache.towers[0].0, &cache.towers[1].0);
                let c = concatenate![Axis(1), *hs, *hm];
                let g = (c.dot(&w_g.t()) + b_g).mapv(sigmoid);
                let mut h = hm.clone();
                Zip::from(&mut h).and(hs).and(&g).for_each(|m, &s, &gv| *m = gv * s + (1.0 - gv) * *m);
                cache.concat = Some(c);
                cache.gate = Some(GateValues::Elementwise(g));
                h
            }
        };
        if h.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric("non-finite embedding in forward pass".into()));
        }
        let fused = FusedEmbeddings {
            h,
            gate: cache.gate.clone(),
        };
        Ok((fused, cache))
    }

    /// Flat gradient of a loss with respect to every parameter, given the
    /// loss gradient at the fused embeddings.
    pub fn backward(&self, ops: &GraphOperators, cache: &ForwardCache, dh: ArrayView2<f64>) -> Vec<f64> {
        let out = *self.dims.last().unwrap();
        let mut head_grads: Vec<f64> = Vec::new();
        let tower_upstream: Vec<Array2<f64>> = match &self.head {
            Head::Single => vec![dh.to_owned()],
            Head::Concat => vec![dh.slice(s![.., ..out]).to_owned(), dh.slice(s![.., out..]).to_owned()],
            Head::Weighted { alpha } => vec![&dh * *alpha, &dh * (1.0 - alpha)],
            Head::Attention { w_a, .. } => {
                let (hs, hm) = (&cache.towers[0].0, &cache.towers[1].0);
                let a = match &cache.gate {
                    Some(GateValues::Node(a)) => a,
                    _ => unreachable!("attention cache without node gate"),
                };
                let c = cache.concat.as_ref().unwrap();
                let n = hs.nrows();
                let mut dpre = Array1::zeros(n);
                for i in 0..n {
                    let da: f64 = dh.row(i).iter().zip(hs.row(i)).zip(hm.row(i)).map(|((d, s), m)| d * (s - m)).sum();
                    dpre[i] = da * a[i] * (1.0 - a[i]);
                }
                let dw = c.t().dot(&dpre);
                head_grads.extend(dw.iter());
                head_grads.push(dpre.sum());
                let mut dhs = Array2::zeros(hs.raw_dim());
                let mut dhm = Array2::zeros(hm.raw_dim());
                for i in 0..n {
                    for k in 0..out {
                        dhs[[i, k]] = a[i] * dh[[i, k]] + dpre[i] * w_a[k];
                        dhm[[i, k]] = (1.0 - a[i]) * dh[[i, k]] + dpre[i] * w_a[out + k];
                    }
                }
                vec![dhs, dhm]
            }
            Head::Gating { w_g, .. } => {
                let (hs, hm) = (&cache.towers[0].0, &cache.towers[1].0);
                let g = match &cache.gate {
                    Some(GateValues::Elementwise(g)) => g,
                    _ => unreachable!("gating cache without element gate"),
                };
                let c = cache.concat.as_ref().unwrap();
                let mut dpre = Array2::zeros(g.raw_dim());
                Zip::from(&mut dpre)
                    .and(&dh)
                    .and(hs)
                    .and(hm)
                    .and(g)
                    .for_each(|p, &d, &s, &m, &gv| *p = d * (s - m) * gv * (1.0 - gv));
                let dw = dpre.t().dot(c);
                head_grads.extend(dw.iter());
                head_grads.extend(dpre.sum_axis(Axis(0)).iter());
                let dc = dpre.dot(w_g);
                let dhs = &dh * g + dc.slice(s![.., ..out]);
                let dhm = &dh * &g.mapv(|v| 1.0 - v) + dc.slice(s![.., out..]);
                vec![dhs, dhm]
            }
        };
        let mut flat = Vec::with_capacity(self.n_params());
        for ((tower, (_, tcache)), up) in self.towers.iter().zip(&cache.towers).zip(tower_upstream) {
            for layer in tower.backward(ops.get(tower.view), tcache, up) {
                flat.extend(layer.w.iter());
                flat.extend(layer.b.iter());
            }
        }
        flat.extend(head_grads);
        flat
    }

    pub fn n_params(&self) -> usize {
        let towers: usize = self.towers.iter().flat_map(|t| &t.layers).map(|l| l.w.len() + l.b.len()).sum();
        towers
            + match &self.head {
                Head::Attention { w_a, .. } => w_a.len() + 1,
                Head::Gating { w_g, b_g } => w_g.len() + b_g.len(),
                _ => 0,
            }
    }

    pub fn flat_params(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.n_params());
        for l in self.towers.iter().flat_map(|t| &t.layers) {
            v.extend(l.w.iter());
            v.extend(l.b.iter());
        }
        match &self.head {
            Head::Attention { w_a, b_a } => {
                v.extend(w_a.iter());
                v.push(*b_a);
            }
            Head::Gating { w_g, b_g } => {
                v.extend(w_g.iter());
                v.extend(b_g.iter());
            }
            _ => {}
        }
        v
    }

    pub fn set_flat_params(&mut self, p: &[f64]) -> Result<()> {
        if p.len() != self.n_params() {
            return Err(Error::Shape(format!("expected {} parameters, got {}", self.n_params(), p.len())));
        }
        let mut it = p.iter().copied();
        for l in self.towers.iter_mut().flat_map(|t| &mut t.layers) {
            l.w.iter_mut().for_each(|w| *w = it.next().unwrap());
            l.b.iter_mut().for_each(|b| *b = it.next().unwrap());
        }
        match &mut self.head {
            Head::Attention { w_a, b_a } => {
                w_a.iter_mut().for_each(|w| *w = it.next().unwrap());
                *b_a = it.next().unwrap();
            }
            Head::Gating { w_g, b_g } => {
                w_g.iter_mut().for_each(|w| *w = it.next().unwrap());
                b_g.iter_mut().for_each(|b| *b = it.next().unwrap());
            }
            _ => {}
        }
        Ok(())
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        let mat = |m: &Array2<f64>| m.rows().into_iter().map(|r| r.to_vec()).collect::<Vec<_>>();
        Checkpoint {
            format: CHECKPOINT_FORMAT.into(),
            version: CHECKPOINT_VERSION,
            kind: self.kind,
            dims: self.dims.clone(),
            seed: self.seed,
            towers: self
                .towers
                .iter()
                .map(|t| TowerRecord {
                    graph: t.view,
                    layers: t
                        .layers
                        .iter()
                        .map(|l| LayerRecord {
                            weights: mat(&l.w),
                            bias: l.b.to_vec(),
                        })
                        .collect(),
                })
                .collect(),
            head: match &self.head {
                Head::Single => HeadRecord::Single,
                Head::Concat => HeadRecord::Concat,
                Head::Weighted { alpha } => HeadRecord::WeightedSum { alpha: *alpha },
                Head::Attention { w_a, b_a } => HeadRecord::Attention {
                    w_a: w_a.to_vec(),
                    b_a: *b_a,
                },
                Head::Gating { w_g, b_g } => HeadRecord::Gating {
                    w_g: mat(w_g),
                    b_g: b_g.to_vec(),
                },
            },
        }
    }

    pub fn from_checkpoint(c: &Checkpoint) -> Result<Self> {
        if c.format != CHECKPOINT_FORMAT || c.version != CHECKPOINT_VERSION {
            return Err(Error::Data(format!(
                "unsupported checkpoint {} v{} (expected {CHECKPOINT_FORMAT} v{CHECKPOINT_VERSION})",
                c.format, c.version
            )));
        }
        let mat = |rows: &[Vec<f64>]| -> Result<Array2<f64>> {
            let r = rows.len();
            let k = rows.first().map_or(0, Vec::len);
            if rows.iter().any(|row| row.len() != k) {
                return Err(Error::Shape("ragged matrix in checkpoint".into()));
            }
            Array2::from_shape_vec((r, k), rows.concat()).map_err(|e| Error::Shape(e.to_string()))
        };
        // Rebuild the skeleton, then overwrite every parameter.
        let alpha = match c.head {
            HeadRecord::WeightedSum { alpha } => alpha,
            _ => 0.8,
        };
        let mut m = Self::new(c.kind, &c.dims, c.seed, alpha)?;
        if c.towers.len() != m.towers.len() {
            return Err(Error::Shape("checkpoint tower count does not match its kind".into()));
        }
        for (t, rec) in m.towers.iter_mut().zip(&c.towers) {
            if rec.graph != t.view || rec.layers.len() != t.layers.len() {
                return Err(Error::Shape("checkpoint tower layout does not match its kind".into()));
            }
            for (l, lr) in t.layers.iter_mut().zip(&rec.layers) {
                let w = mat(&lr.weights)?;
                if w.raw_dim() != l.w.raw_dim() || lr.bias.len() != l.b.len() {
                    return Err(Error::Shape("checkpoint layer shape mismatch".into()));
                }
                l.w = w;
                l.b = Array1::from(lr.bias.clone());
            }
        }
        m.head = match (&m.head, &c.head) {
            (Head::Single, HeadRecord::Single) => Head::Single,
            (Head::Concat, HeadRecord::Concat) => Head::Concat,
            (Head::Weighted { .. }, HeadRecord::WeightedSum { alpha }) => Head::Weighted { alpha: *alpha },
            (Head::Attention { w_a, .. }, HeadRecord::Attention { w_a: rw, b_a }) if rw.len() == w_a.len() => Head::Attention {
                w_a: Array1::from(rw.clone()),
                b_a: *b_a,
            },
            (Head::Gating { w_g, b_g }, HeadRecord::Gating { w_g: rw, b_g: rb }) => {
                let rw = mat(rw)?;
                if rw.raw_dim() != w_g.raw_dim() || rb.len() != b_g.len() {
                    return Err(Error::Shape("checkpoint gate shape mismatch".into()));
                }
                Head::Gating {
                    w_g: rw,
                    b_g: Array1::from(rb.clone()),
                }
            }
            _ => return Err(Error::Shape("checkpoint head does not match its kind".into())),
        };
        if m.flat_params().iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric("non-finite parameter in checkpoint".into()));
        }
        Ok(m)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerRecord {
    pub weights: Vec<Vec<f64>>,
    pub bias: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TowerRecord {
    pub graph: GraphView,
    pub layers: Vec<LayerRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum HeadRecord {
    Single,
    Concat,
    WeightedSum { alpha: f64 },
    Attention { w_a: Vec<f64>, b_a: f64 },
    Gating { w_g: Vec<Vec<f64>>, b_g: Vec<f64> },
}

/// Portable model parameters, as stored in `checkpoint.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub version: u32,
    pub kind: FusionKind,
    pub dims: Vec<usize>,
    pub seed: u64,
    pub towers: Vec<TowerRecord>,
    pub head: HeadRecord,
}
