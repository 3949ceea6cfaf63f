//! Query/candidate splitting, weak-label triple sampling, the margin ranking
//! loss and the full-batch Adam loop.
//!
//! Query nodes stay in the graphs during training; only their label pairs
//! are withheld. Nothing in [`train`] reads the labels of query nodes.

use std::collections::BTreeMap;

use ndarray::{Array2, ArrayView2};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::NodeFeatures;
use crate::model::{FusionKind, FusionModel, GraphOperators};
use crate::orgdata::OrgRoster;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub margin: f64,
    pub negatives_per_positive: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub seed: u64,
    pub query_holdout_fraction: f64,
    pub hidden_dim: usize,
    pub out_dim: usize,
    /// Mixing weight of the weighted-sum head.
    pub alpha: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            margin: 0.5,
            negatives_per_positive: 5,
            epochs: 200,
            learning_rate: 0.01,
            seed: 0,
            query_holdout_fraction: 0.2,
            hidden_dim: 64,
            out_dim: 64,
            alpha: 0.8,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if !(self.margin > 0.0) {
            return bad("margin must be positive");
        }
        if self.negatives_per_positive == 0 {
            return bad("negatives_per_positive must be at least 1");
        }
        if !(self.query_holdout_fraction > 0.0 && self.query_holdout_fraction < 1.0) {
            return bad("query_holdout_fraction must lie in (0, 1)");
        }
        if !(self.learning_rate > 0.0) || !self.learning_rate.is_finite() {
            return bad("learning_rate must be positive");
        }
        if self.hidden_dim == 0 || self.out_dim == 0 {
            return bad("model dimensions must be positive");
        }
        if !(0.0..=1.0).contains(&self.alpha) {
            return bad("alpha must lie in [0, 1]");
        }
        Ok(())
    }

    pub fn dims(&self, in_dim: usize) -> Vec<usize> {
        vec![in_dim, self.hidden_dim, self.out_dim]
    }
}

/// Held-out query nodes; the candidate pool is every node.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Split {
    pub n_nodes: usize,
    /// Sorted roster indices.
    pub query_nodes: Vec<usize>,
}

impl Split {
    pub fn is_query(&self, i: usize) -> bool {
        self.query_nodes.binary_search(&i).is_ok()
    }

    /// Nodes whose labels training may read.
    pub fn training_nodes(&self) -> Vec<usize> {
        (0..self.n_nodes).filter(|&i| !self.is_query(i)).collect()
    }

    /// Every node except `query`.
    pub fn pool_for(&self, query: usize) -> Vec<usize> {
        (0..self.n_nodes).filter(|&i| i != query).collect()
    }
}

/// (family, role) cell index per node.
pub fn cell_labels(roster: &OrgRoster) -> Vec<usize> {
    let mut cells = BTreeMap::new();
    roster
        .employees()
        .iter()
        .map(|e| {
            let next = cells.len();
            *cells.entry((e.job_family.clone(), e.role.clone())).or_insert(next)
        })
        .collect()
}

/// Seeded sample of `fraction` of each family's eligible nodes; nodes alone
/// in their (family, role) cell are never queries.
pub fn make_split(roster: &OrgRoster, fraction: f64, seed: u64) -> Result<Split> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::Config("query holdout fraction must lie in (0, 1)".into()));
    }
    let cells = cell_labels(roster);
    let mut cell_size: BTreeMap<usize, usize> = BTreeMap::new();
    cells.iter().for_each(|&c| *cell_size.entry(c).or_default() += 1);
    let fam = roster.family_labels();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut queries = Vec::new();
    for f in 0..roster.families().len() {
        let mut eligible: Vec<usize> = (0..roster.len()).filter(|&i| fam[i] == f && cell_size[&cells[i]] >= 2).collect();
        eligible.shuffle(&mut rng);
        let take = (fraction * eligible.len() as f64).round() as usize;
        queries.extend_from_slice(&eligible[..take]);
    }
    if queries.is_empty() {
        return Err(Error::Data("no eligible query node: every (family, role) cell is a singleton".into()));
    }
    queries.sort_unstable();
    Ok(Split {
        n_nodes: roster.len(),
        query_nodes: queries,
    })
}

/// Unordered positive pairs among the training nodes.
pub fn training_positives(cells: &[usize], split: &Split) -> Vec<(usize, usize)> {
    let nodes = split.training_nodes();
    let mut out = Vec::new();
    for (a, &i) in nodes.iter().enumerate() {
        for &j in &nodes[a + 1..] {
            if cells[i] == cells[j] {
                out.push((i, j));
            }
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Triple {
    pub anchor: usize,
    pub positive: usize,
    pub negative: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TripleSample {
    pub triples: Vec<Triple>,
    /// Some anchor had fewer than `k` valid negatives, so its negatives were
    /// drawn with replacement.
    pub with_replacement: bool,
}

/// For each positive pair, in both orientations, draws `k` negatives from
/// `universe` that differ from the anchor and sit in a different cell.
pub fn sample_triples(
    positives: &[(usize, usize)],
    cells: &[usize],
    universe: &[usize],
    k: usize,
    rng: &mut ChaCha8Rng,
) -> Result<TripleSample> {
    if positives.is_empty() {
        return Err(Error::Data("no positive training pairs".into()));
    }
    let mut per_cell: BTreeMap<usize, usize> = BTreeMap::new();
    universe.iter().for_each(|&u| *per_cell.entry(cells[u]).or_default() += 1);
    let mut triples = Vec::with_capacity(2 * positives.len() * k);
    let mut with_replacement = false;
    let mut drawn = Vec::with_capacity(k);
    for &(i, j) in positives {
        for (a, p) in [(i, j), (j, i)] {
            let valid = universe.len() - per_cell.get(&cells[a]).copied().unwrap_or(0);
            if valid == 0 {
                return Err(Error::Data(format!("node {a} has no valid negative")));
            }
            let replace = valid < k;
            with_replacement |= replace;
            drawn.clear();
            while drawn.len() < k {
                let n = universe[rng.random_range(0..universe.len())];
                if cells[n] == cells[a] || (!replace && drawn.contains(&n)) {
                    continue;
                }
                drawn.push(n);
            }
            triples.extend(drawn.iter().map(|&n| Triple {
                anchor: a,
                positive: p,
                negative: n,
            }));
        }
    }
    Ok(TripleSample {
        triples,
        with_replacement,
    })
}

/// Mean hinge `max(0, margin - cos(a, p) + cos(a, n))` and its gradient with
/// respect to `h`. Zero rows score 0 and receive no gradient; the hinge kink
/// gets subgradient 0.
pub fn ranking_loss(h: ArrayView2<f64>, triples: &[Triple], margin: f64) -> (f64, Array2<f64>) {
    let (n, d) = h.dim();
    let norms: Vec<f64> = h.rows().into_iter().map(|r| r.dot(&r).sqrt()).collect();
    let mut unit = h.to_owned();
    for (i, mut row) in unit.rows_mut().into_iter().enumerate() {
        if norms[i] > 0.0 {
            row /= norms[i];
        }
    }
    let mut d_unit = Array2::<f64>::zeros((n, d));
    let mut loss = 0.0;
    if triples.is_empty() {
        return (0.0, d_unit);
    }
    let scale = 1.0 / triples.len() as f64;
    for t in triples {
        let (ua, up, un) = (unit.row(t.anchor), unit.row(t.positive), unit.row(t.negative));
        let sp = ua.dot(&up);
        let sn = ua.dot(&un);
        let l = margin - sp + sn;
        if l <= 0.0 {
            continue;
        }
        loss += l;
        for k in 0..d {
            d_unit[[t.anchor, k]] += scale * (un[k] - up[k]);
            d_unit[[t.positive, k]] -= scale * ua[k];
            d_unit[[t.negative, k]] += scale * ua[k];
        }
    }
    // Back through the row normalization: du = (dû - (dû . û) û) / |u|.
    for i in 0..n {
        if norms[i] == 0.0 {
            d_unit.row_mut(i).fill(0.0);
            continue;
        }
        let proj = d_unit.row(i).dot(&unit.row(i));
        for k in 0..d {
            d_unit[[i, k]] = (d_unit[[i, k]] - proj * unit[[i, k]]) / norms[i];
        }
    }
    (loss * scale, d_unit)
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: FusionModel,
    /// Loss at the start of each epoch, before that epoch's update.
    pub loss_curve: Vec<f64>,
    pub negatives_with_replacement: bool,
}

struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    fn step(&mut self, params: &mut [f64], grad: &[f64], cfg: &TrainConfig) {
        self.t += 1;
        let c1 = 1.0 - cfg.beta1.powi(self.t);
        let c2 = 1.0 - cfg.beta2.powi(self.t);
        for k in 0..params.len() {
            self.m[k] = cfg.beta1 * self.m[k] + (1.0 - cfg.beta1) * grad[k];
            self.v[k] = cfg.beta2 * self.v[k] + (1.0 - cfg.beta2) * grad[k] * grad[k];
            params[k] -= cfg.learning_rate * (self.m[k] / c1) / ((self.v[k] / c2).sqrt() + cfg.epsilon);
        }
    }
}

/// Trains one fusion model. Negatives are resampled every epoch from the
/// training nodes.
pub fn train(
    kind: FusionKind,
    ops: &GraphOperators,
    features: &NodeFeatures,
    roster: &OrgRoster,
    split: &Split,
    cfg: &TrainConfig,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    if features.n() != roster.len() || ops.n() != roster.len() || split.n_nodes != roster.len() {
        return Err(Error::Shape("graphs, features, roster and split disagree on node count".into()));
    }
    let mut model = FusionModel::new(kind, &cfg.dims(features.dim()), cfg.seed, cfg.alpha)?;
    let training_nodes = split.training_nodes();
    // Only training-node labels are read; query cells are left as sentinels.
    let all_cells = cell_labels(roster);
    let mut cells = vec![usize::MAX; roster.len()];
    for &i in &training_nodes {
        cells[i] = all_cells[i];
    }
    let positives = training_positives(&cells, split);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x7261_6e6b);
    let mut params = model.flat_params();
    let mut adam = Adam {
        m: vec![0.0; params.len()],
        v: vec![0.0; params.len()],
        t: 0,
    };
    let mut curve = Vec::with_capacity(cfg.epochs);
    let mut replaced = false;
    for epoch in 0..cfg.epochs {
        let sample = sample_triples(&positives, &cells, &training_nodes, cfg.negatives_per_positive, &mut rng)?;
        replaced |= sample.with_replacement;
        let (fused, cache) = model.forward_train(ops, features.matrix.view())?;
        let (loss, dh) = ranking_loss(fused.h.view(), &sample.triples, cfg.margin);
        if !loss.is_finite() {
            return Err(Error::Numeric(format!(
                "{kind}: non-finite loss at epoch {epoch} (previous {:?})",
                curve.last()
            )));
        }
        curve.push(loss);
        let grad = model.backward(ops, &cache, dh.view());
        if grad.iter().any(|g| !g.is_finite()) {
            return Err(Error::Numeric(format!("{kind}: non-finite gradient at epoch {epoch}")));
        }
        adam.step(&mut params, &grad, cfg);
        model.set_flat_params(&params)?;
        log::debug!("{kind} epoch {epoch}: loss {loss:.6}");
    }
    if replaced {
        log::warn!("{kind}: some anchors had fewer than {} negatives; sampled with replacement", cfg.negatives_per_positive);
    }
    Ok(TrainOutcome {
        model,
        loss_curve: curve,
        negatives_with_replacement: replaced,
    })
}
