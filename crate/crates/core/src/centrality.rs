//! Degree, closeness, betweenness and eigenvector centrality of the
//! structure network.
//!
//! Degree, closeness and betweenness use the unweighted skeleton (hop
//! distances and shortest-path counts). Eigenvector centrality uses the edge
//! weights.

use std::collections::VecDeque;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graphs::WeightedGraph;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CentralityVector {
    pub ids: Vec<String>,
    pub degree: Vec<f64>,
    pub closeness: Vec<f64>,
    pub betweenness: Vec<f64>,
    pub eigenvector: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EigenConfig {
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for EigenConfig {
    fn default() -> Self {
        Self {
            tol: 1e-9,
            max_iter: 10_000,
        }
    }
}

impl CentralityVector {
    pub fn compute(g: &WeightedGraph, eig: EigenConfig) -> Result<Self> {
        Ok(Self {
            ids: g.ids().to_vec(),
            degree: degree_centrality(g),
            closeness: closeness_centrality(g),
            betweenness: betweenness_centrality(g),
            eigenvector: eigenvector_centrality(g, eig.tol, eig.max_iter)?,
        })
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    /// Columns in the fixed order degree, closeness, betweenness, eigenvector.
    pub fn columns(&self) -> [&[f64]; 4] {
        [&self.degree, &self.closeness, &self.betweenness, &self.eigenvector]
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["employee_id", "degree", "closeness", "betweenness", "eigenvector"])?;
        for i in 0..self.len() {
            w.write_record([
                self.ids[i].clone(),
                format!("{:e}", self.degree[i]),
                format!("{:e}", self.closeness[i]),
                format!("{:e}", self.betweenness[i]),
                format!("{:e}", self.eigenvector[i]),
            ])?;
        }
        w.flush().map_err(|e| Error::io("<centrality>", e))?;
        Ok(())
    }

    pub fn read_csv<R: std::io::Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(reader);
        let mut out = Self {
            ids: Vec::new(),
            degree: Vec::new(),
            closeness: Vec::new(),
            betweenness: Vec::new(),
            eigenvector: Vec::new(),
        };
        for row in rdr.deserialize::<(String, f64, f64, f64, f64)>() {
            let (id, d, c, b, e) = row?;
            out.ids.push(id);
            out.degree.push(d);
            out.closeness.push(c);
            out.betweenness.push(b);
            out.eigenvector.push(e);
        }
        Ok(out)
    }
}

pub fn degree_centrality(g: &WeightedGraph) -> Vec<f64> {
    (0..g.n()).map(|i| g.degree(i) as f64).collect()
}

fn bfs_distances(g: &WeightedGraph, s: usize) -> Vec<Option<usize>> {
    let mut dist = vec![None; g.n()];
    dist[s] = Some(0);
    let mut q = VecDeque::from([s]);
    while let Some(v) = q.pop_front() {
        let dv = dist[v].unwrap();
        for &(w, _) in g.neighbors(v) {
            if dist[w].is_none() {
                dist[w] = Some(dv + 1);
                q.push_back(w);
            }
        }
    }
    dist
}

/// `1 / Σ d(v,u)` over the node's component, scaled by
/// `(|component| - 1) / (n - 1)`; isolated nodes get 0.
pub fn closeness_centrality(g: &WeightedGraph) -> Vec<f64> {
    let n = g.n();
    (0..n)
        .map(|v| {
            let dist = bfs_distances(g, v);
            let (reach, total) = dist
                .iter()
                .flatten()
                .fold((0usize, 0usize), |(r, t), &d| (r + 1, t + d));
            if reach <= 1 || n <= 1 {
                return 0.0;
            }
            (1.0 / total as f64) * ((reach - 1) as f64 / (n - 1) as f64)
        })
        .collect()
}

/// Brandes accumulation over unweighted shortest paths; every unordered
/// source/target pair is counted once.
pub fn betweenness_centrality(g: &WeightedGraph) -> Vec<f64> {
    let n = g.n();
    let mut bc = vec![0.0; n];
    let mut stack = Vec::with_capacity(n);
    let mut preds: Vec<Vec<usize>> = vec![Vec::new(); n];
    let mut sigma = vec![0.0f64; n];
    let mut dist = vec![-1i64; n];
    let mut delta = vec![0.0f64; n];
    let mut queue = VecDeque::with_capacity(n);
    for s in 0..n {
        stack.clear();
        for v in 0..n {
            preds[v].clear();
            sigma[v] = 0.0;
            dist[v] = -1;
            delta[v] = 0.0;
        }
        sigma[s] = 1.0;
        dist[s] = 0;
        queue.push_back(s);
        while let Some(v) = queue.pop_front() {
            stack.push(v);
            for &(w, _) in g.neighbors(v) {
                if dist[w] < 0 {
                    dist[w] = dist[v] + 1;
                    queue.push_back(w);
                }
                if dist[w] == dist[v] + 1 {
                    sigma[w] += sigma[v];
                    preds[w].push(v);
                }
            }
        }
        while let Some(w) = stack.pop() {
            for &v in &preds[w] {
                delta[v] += sigma[v] / sigma[w] * (1.0 + delta[w]);
            }
            if w != s {
                bc[w] += delta[w];
            }
        }
    }
    bc.iter_mut().for_each(|b| *b /= 2.0);
    bc
}

fn components(g: &WeightedGraph) -> Vec<Vec<usize>> {
    let n = g.n();
    let mut seen = vec![false; n];
    let mut out = Vec::new();
    for s in 0..n {
        if seen[s] {
            continue;
        }
        let dist = bfs_distances(g, s);
        let comp: Vec<usize> = (0..n).filter(|&v| dist[v].is_some()).collect();
        for &v in &comp {
            seen[v] = true;
        }
        out.push(comp);
    }
    out
}

/// Weighted eigenvector centrality by power iteration, computed per
/// connected component and scaled to unit max-norm within each component.
/// Isolated nodes get 0.
///
/// Iterates on `A + I`, which has the same leading eigenvector as `A` but
/// no oscillation on bipartite components.
pub fn eigenvector_centrality(g: &WeightedGraph, tol: f64, max_iter: usize) -> Result<Vec<f64>> {
    let mut out = vec![0.0; g.n()];
    for comp in components(g) {
        if comp.len() < 2 {
            continue;
        }
        let mut x: Vec<f64> = vec![1.0; g.n()];
        let mut next = vec![0.0; g.n()];
        let mut residual = f64::INFINITY;
        let mut converged = false;
        for _ in 0..max_iter {
            for &v in &comp {
                next[v] = x[v] + g.neighbors(v).iter().map(|&(u, w)| w * x[u]).sum::<f64>();
            }
            let m = comp.iter().map(|&v| next[v].abs()).fold(0.0, f64::max);
            if m == 0.0 || !m.is_finite() {
                return Err(Error::Numeric("eigenvector iterate vanished".into()));
            }
            residual = 0.0;
            for &v in &comp {
                let nv = next[v] / m;
                residual = f64::max(residual, (nv - x[v]).abs());
                x[v] = nv;
            }
            if residual < tol {
                converged = true;
                break;
            }
        }
        if !converged {
            return Err(Error::NonConvergence {
                iterations: max_iter,
                residual,
            });
        }
        for &v in &comp {
            out[v] = x[v].max(0.0);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ids(n: usize) -> Vec<String> {
        (0..n).map(|i| format!("v{i}")).collect()
    }

    fn unit(n: usize, edges: &[(usize, usize)]) -> WeightedGraph {
        let e: Vec<_> = edges.iter().map(|&(i, j)| (i, j, 1.0)).collect();
        WeightedGraph::from_edges(ids(n), &e).unwrap()
    }

    fn star(k: usize) -> WeightedGraph {
        unit(k + 1, &(1..=k).map(|l| (0, l)).collect::<Vec<_>>())
    }

    #[test]
    fn degree_examples() {
        assert_eq!(degree_centrality(&unit(3, &[(0, 1), (1, 2), (0, 2)])), vec![2.0; 3]);
        assert_eq!(degree_centrality(&star(5)), vec![5.0, 1.0, 1.0, 1.0, 1.0, 1.0]);
    }

    #[test]
    fn closeness_on_a_path() {
        let c = closeness_centrality(&unit(3, &[(0, 1), (1, 2)]));
        assert_eq!(c, vec![1.0 / 3.0, 0.5, 1.0 / 3.0]);
    }

    #[test]
    fn closeness_of_isolated_node_and_component_scaling() {
        // Path 0-1-2 plus isolated node 3: scale (3-1)/(4-1).
        let c = closeness_centrality(&unit(4, &[(0, 1), (1, 2)]));
        assert_eq!(c[3], 0.0);
        assert!((c[1] - 0.5 * 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn betweenness_examples() {
        let b = betweenness_centrality(&star(4));
        assert_eq!(b[0], 6.0);
        assert!(b[1..].iter().all(|&x| x == 0.0));
        assert_eq!(betweenness_centrality(&unit(3, &[(0, 1), (1, 2), (0, 2)])), vec![0.0; 3]);
    }

    #[test]
    fn eigenvector_examples() {
        let k4 = unit(4, &[(0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3)]);
        let e = eigenvector_centrality(&k4, 1e-9, 10_000).unwrap();
        assert!(e.iter().all(|&x| (x - 1.0).abs() < 1e-9));
        let p = eigenvector_centrality(&unit(3, &[(0, 1), (1, 2)]), 1e-12, 10_000).unwrap();
        assert!((p[1] - 1.0).abs() < 1e-9);
        assert!((p[0] - 0.5f64.sqrt()).abs() < 1e-9);
        assert!((p[2] - 0.5f64.sqrt()).abs() < 1e-9);
    }

    #[test]
    fn eigenvector_isolates_are_zero_and_non_convergence_reports_residual() {
        let g = unit(4, &[(0, 1), (1, 2)]);
        let e = eigenvector_centrality(&g, 1e-9, 10_000).unwrap();
        assert_eq!(e[3], 0.0);
        match eigenvector_centrality(&g, 1e-300, 3) {
            Err(Error::NonConvergence { iterations: 3, residual }) => assert!(residual > 0.0),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn weight_scaling_invariance() {
        let g = WeightedGraph::from_edges(ids(4), &[(0, 1, 2.0), (1, 2, 0.5), (2, 3, 1.0), (0, 2, 3.0)]).unwrap();
        let scaled = g.map_weights(|w| 7.5 * w);
        let a = CentralityVector::compute(&g, EigenConfig::default()).unwrap();
        let b = CentralityVector::compute(&scaled, EigenConfig::default()).unwrap();
        assert_eq!(a.degree, b.degree);
        assert_eq!(a.closeness, b.closeness);
        assert_eq!(a.betweenness, b.betweenness);
        // A + I shifts differently after scaling, so compare to tolerance.
        for (x, y) in a.eigenvector.iter().zip(&b.eigenvector) {
            assert!((x - y).abs() < 1e-7);
        }
    }

    #[test]
    fn csv_round_trip() {
        let c = CentralityVector::compute(&star(3), EigenConfig::default()).unwrap();
        let mut buf = Vec::new();
        c.write_csv(&mut buf).unwrap();
        assert_eq!(CentralityVector::read_csv(buf.as_slice()).unwrap(), c);
    }
}
