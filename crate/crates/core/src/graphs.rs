//! The structure and semantic-similarity networks and their GCN propagation
//! operators.

use std::collections::BTreeMap;
use std::io::{Read, Write};

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::embed::NodeSemantics;
use crate::error::{Error, Result};
use crate::linalg::{cosine_view, CsrMatrix};
use crate::orgdata::{EmailRecord, OrgRoster};

/// Undirected weighted graph over a fixed, ordered node set.
///
/// Adjacency lists are symmetric, sorted by neighbor and carry no self-loops.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightedGraph {
    ids: Vec<String>,
    adj: Vec<Vec<(usize, f64)>>,
}

impl WeightedGraph {
    /// Builds from undirected edges `(i, j, w)`; repeated pairs accumulate.
    pub fn from_edges(ids: Vec<String>, edges: &[(usize, usize, f64)]) -> Result<Self> {
        let n = ids.len();
        let mut acc: BTreeMap<(usize, usize), f64> = BTreeMap::new();
        for &(i, j, w) in edges {
            if i >= n || j >= n {
                return Err(Error::Data(format!("edge ({i},{j}) out of range for {n} nodes")));
            }
            if i == j {
                return Err(Error::Data(format!("self-loop on node {i}")));
            }
            if !(w > 0.0 && w.is_finite()) {
                return Err(Error::Data(format!("edge ({i},{j}) has invalid weight {w}")));
            }
            *acc.entry((i.min(j), i.max(j))).or_insert(0.0) += w;
        }
        let mut adj = vec![Vec::new(); n];
        for (&(i, j), &w) in &acc {
            adj[i].push((j, w));
            adj[j].push((i, w));
        }
        for row in &mut adj {
            row.sort_by_key(|&(j, _)| j);
        }
        Ok(Self { ids, adj })
    }

    pub fn empty(ids: Vec<String>) -> Self {
        let n = ids.len();
        Self {
            ids,
            adj: vec![Vec::new(); n],
        }
    }

    pub fn n(&self) -> usize {
        self.ids.len()
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn neighbors(&self, i: usize) -> &[(usize, f64)] {
        &self.adj[i]
    }

    pub fn weight(&self, i: usize, j: usize) -> f64 {
        match self.adj[i].binary_search_by_key(&j, |&(k, _)| k) {
            Ok(k) => self.adj[i][k].1,
            Err(_) => 0.0,
        }
    }

    /// Each undirected edge once, as `(i, j, w)` with `i < j`, sorted.
    pub fn edges(&self) -> Vec<(usize, usize, f64)> {
        let mut out = Vec::new();
        for (i, row) in self.adj.iter().enumerate() {
            for &(j, w) in row {
                if i < j {
                    out.push((i, j, w));
                }
            }
        }
        out
    }

    pub fn n_edges(&self) -> usize {
        self.adj.iter().map(Vec::len).sum::<usize>() / 2
    }

    pub fn degree(&self, i: usize) -> usize {
        self.adj[i].len()
    }

    pub fn weighted_degree(&self, i: usize) -> f64 {
        self.adj[i].iter().map(|&(_, w)| w).sum()
    }

    pub fn max_weight(&self) -> f64 {
        self.adj.iter().flatten().map(|&(_, w)| w).fold(0.0, f64::max)
    }

    pub fn to_dense(&self) -> Array2<f64> {
        let n = self.n();
        let mut a = Array2::zeros((n, n));
        for (i, row) in self.adj.iter().enumerate() {
            for &(j, w) in row {
                a[[i, j]] = w;
            }
        }
        a
    }

    /// Same graph with every weight mapped through `f` (which must keep it positive).
    pub fn map_weights(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            ids: self.ids.clone(),
            adj: self
                .adj
                .iter()
                .map(|row| row.iter().map(|&(j, w)| (j, f(w))).collect())
                .collect(),
        }
    }

    /// Relabels nodes: node `i` of `self` becomes node `perm[i]`.
    pub fn permuted(&self, perm: &[usize]) -> Self {
        let n = self.n();
        let mut ids = vec![String::new(); n];
        for i in 0..n {
            ids[perm[i]] = self.ids[i].clone();
        }
        let edges: Vec<_> = self.edges().into_iter().map(|(i, j, w)| (perm[i], perm[j], w)).collect();
        Self::from_edges(ids, &edges).expect("permutation preserves validity")
    }

    pub fn write_edges<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["i", "j", "weight"])?;
        for (i, j, wt) in self.edges() {
            w.write_record([i.to_string(), j.to_string(), format!("{wt:e}")])?;
        }
        w.flush().map_err(|e| Error::io("<edges>", e))?;
        Ok(())
    }

    pub fn header_json(&self) -> Result<String> {
        let header = GraphHeader {
            n: self.n(),
            node_index: self.ids.iter().enumerate().map(|(i, id)| (id.clone(), i)).collect(),
        };
        Ok(serde_json::to_string_pretty(&header)?)
    }

    pub fn read<R: Read>(header_json: &str, edges: R) -> Result<Self> {
        let header: GraphHeader = serde_json::from_str(header_json)?;
        let mut ids = vec![String::new(); header.n];
        for (id, i) in header.node_index {
            if i >= header.n {
                return Err(Error::Data(format!("node index {i} out of range")));
            }
            ids[i] = id;
        }
        let mut rdr = csv::Reader::from_reader(edges);
        let mut list = Vec::new();
        for rec in rdr.deserialize::<(usize, usize, f64)>() {
            list.push(rec?);
        }
        Self::from_edges(ids, &list)
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct GraphHeader {
    n: usize,
    node_index: BTreeMap<String, usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StructureWeighting {
    /// Raw bidirectional email counts.
    #[default]
    Count,
    /// `ln(1 + count)`.
    LogCount,
}

/// Structure network: weight = emails i→j plus emails j→i. Every roster
/// employee is a node.
pub fn build_structure_network(
    records: &[EmailRecord],
    roster: &OrgRoster,
    weighting: StructureWeighting,
) -> Result<WeightedGraph> {
    let mut edges = Vec::with_capacity(records.len());
    for r in records {
        let (Some(i), Some(j)) = (roster.index_of(&r.sender), roster.index_of(&r.recipient)) else {
            return Err(Error::Data(format!(
                "email {} -> {} references an unknown employee",
                r.sender, r.recipient
            )));
        };
        if i != j {
            edges.push((i, j, 1.0));
        }
    }
    let g = WeightedGraph::from_edges(roster.ids(), &edges)?;
    Ok(match weighting {
        StructureWeighting::Count => g,
        StructureWeighting::LogCount => g.map_weights(f64::ln_1p),
    })
}

/// Affine rescale of a cosine in `[tau, 1]` onto `[0.5, 1]`.
pub fn rescale_similarity(cos: f64, tau: f64) -> f64 {
    0.5 + 0.5 * (cos - tau) / (1.0 - tau)
}

/// Semantic similarity network: edge iff `cos(s_i, s_j) >= tau` and both
/// employees have coverage, weighted by the rescaled cosine.
pub fn build_semantic_network(sem: &NodeSemantics, tau: f64) -> Result<WeightedGraph> {
    if !(tau > 0.0 && tau < 1.0) {
        return Err(Error::Config(format!("similarity threshold {tau} outside (0,1)")));
    }
    let n = sem.len();
    let mut edges = Vec::new();
    for i in 0..n {
        if sem.coverage[i] == 0 {
            continue;
        }
        for j in (i + 1)..n {
            if sem.coverage[j] == 0 {
                continue;
            }
            let c = cosine_view(sem.centroid(i), sem.centroid(j));
            if c >= tau {
                edges.push((i, j, rescale_similarity(c, tau)));
            }
        }
    }
    WeightedGraph::from_edges(sem.ids.clone(), &edges)
}

/// Cosine threshold at the given quantile (0..=1) of all covered-pair
/// similarities, clamped into (0, 1).
pub fn quantile_threshold(sem: &NodeSemantics, q: f64) -> f64 {
    let covered: Vec<usize> = (0..sem.len()).filter(|&i| sem.coverage[i] > 0).collect();
    let mut sims = Vec::new();
    for (a, &i) in covered.iter().enumerate() {
        for &j in &covered[a + 1..] {
            sims.push(cosine_view(sem.centroid(i), sem.centroid(j)));
        }
    }
    if sims.is_empty() {
        return 0.75;
    }
    sims.sort_by(f64::total_cmp);
    let k = ((q.clamp(0.0, 1.0) * (sims.len() - 1) as f64).round()) as usize;
    sims[k].clamp(1e-6, 1.0 - 1e-6)
}

/// Symmetrically normalized adjacency with self-loops,
/// `D^{-1/2} (A + I) D^{-1/2}` where `D` is the weighted degree of `A + I`.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalizedOperator {
    pub matrix: CsrMatrix,
}

impl NormalizedOperator {
    pub fn n(&self) -> usize {
        self.matrix.n_rows
    }

    pub fn identity(n: usize) -> Self {
        Self {
            matrix: CsrMatrix::identity(n),
        }
    }

    /// Relabels nodes: node `i` becomes node `perm[i]`.
    pub fn permuted(&self, perm: &[usize]) -> Self {
        let mut trip = Vec::with_capacity(self.matrix.nnz());
        for i in 0..self.n() {
            for (j, v) in self.matrix.row(i) {
                trip.push((perm[i], perm[j], v));
            }
        }
        Self {
            matrix: CsrMatrix::from_triplets(self.n(), self.n(), &trip),
        }
    }
}

pub fn normalize(g: &WeightedGraph) -> NormalizedOperator {
    let n = g.n();
    let deg: Vec<f64> = (0..n).map(|i| g.weighted_degree(i) + 1.0).collect();
    let mut trip = Vec::with_capacity(2 * g.n_edges() + n);
    for i in 0..n {
        trip.push((i, i, 1.0 / deg[i]));
        for &(j, w) in g.neighbors(i) {
            trip.push((i, j, w / (deg[i] * deg[j]).sqrt()));
        }
    }
    NormalizedOperator {
        matrix: CsrMatrix::from_triplets(n, n, &trip),
    }
}

/// Single-operator fusion of two views: each graph's weights are divided
/// by its maximum, then edge weights are summed over the union of edges.
pub fn early_fuse(g1: &WeightedGraph, g2: &WeightedGraph) -> Result<WeightedGraph> {
    if g1.ids() != g2.ids() {
        return Err(Error::Shape("early fusion needs identical node sets".into()));
    }
    let mut edges = Vec::with_capacity(g1.n_edges() + g2.n_edges());
    for g in [g1, g2] {
        let m = g.max_weight();
        if m > 0.0 {
            edges.extend(g.edges().into_iter().map(|(i, j, w)| (i, j, w / m)));
        }
    }
    WeightedGraph::from_edges(g1.ids().to_vec(), &edges)
}
