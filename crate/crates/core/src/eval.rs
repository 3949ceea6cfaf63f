//! Hit@K retrieval evaluation, recommendation lists and gate analysis.

use std::collections::BTreeMap;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::baseline::sort_ranked;
use crate::error::{Error, Result};
use crate::model::{FusedEmbeddings, FusionKind, FusionModel, GraphOperators};
use crate::orgdata::OrgRoster;
use crate::trainer::Split;

pub const DEFAULT_KS: [usize; 2] = [30, 100];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryRanking {
    pub query: String,
    pub n_positives: usize,
    /// 1-based rank of the best-ranked positive.
    pub first_positive_rank: Option<usize>,
    /// Leading candidates as `(id, score)`, truncated to the largest K.
    pub candidates: Vec<(String, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankingReport {
    pub model_kind: String,
    pub seed: u64,
    pub n_queries: usize,
    pub hit_at: BTreeMap<usize, f64>,
    pub per_query: Vec<QueryRanking>,
    /// Queries without any positive in their pool.
    pub excluded: Vec<String>,
}

/// Full ranking of `pool` against `query`: descending score, ascending id.
pub fn rank_pool(query: usize, pool: &[usize], ids: &[String], scorer: &dyn Fn(usize, usize) -> f64) -> Vec<(usize, f64)> {
    let mut scored: Vec<(usize, f64)> = pool.iter().filter(|&&c| c != query).map(|&c| (c, scorer(query, c))).collect();
    sort_ranked(&mut scored, ids);
    scored
}

/// Fraction of queries with at least one same-cell candidate in the top K,
/// for every K in `ks`. The pool of each query is every other node.
pub fn hit_at_k(
    scorer: &dyn Fn(usize, usize) -> f64,
    roster: &OrgRoster,
    split: &Split,
    ks: &[usize],
    model_kind: &str,
    seed: u64,
) -> RankingReport {
    let ids = roster.ids();
    let keep = ks.iter().copied().max().unwrap_or(0);
    let mut hits: BTreeMap<usize, usize> = ks.iter().map(|&k| (k, 0)).collect();
    let mut per_query = Vec::new();
    let mut excluded = Vec::new();
    for &q in &split.query_nodes {
        let ranked = rank_pool(q, &split.pool_for(q), &ids, scorer);
        let n_pos = ranked.iter().filter(|(c, _)| roster.same_cell(q, *c)).count();
        if n_pos == 0 {
            log::warn!("query `{}` has no positive candidate; excluded", ids[q]);
            excluded.push(ids[q].clone());
            continue;
        }
        let first = ranked.iter().position(|(c, _)| roster.same_cell(q, *c)).map(|p| p + 1);
        for (&k, h) in hits.iter_mut() {
            if first.is_some_and(|r| r <= k) {
                *h += 1;
            }
        }
        per_query.push(QueryRanking {
            query: ids[q].clone(),
            n_positives: n_pos,
            first_positive_rank: first,
            candidates: ranked.iter().take(keep).map(|&(c, s)| (ids[c].clone(), s)).collect(),
        });
    }
    let n = per_query.len();
    RankingReport {
        model_kind: model_kind.to_string(),
        seed,
        n_queries: n,
        hit_at: hits
            .into_iter()
            .map(|(k, h)| (k, if n == 0 { 0.0 } else { h as f64 / n as f64 }))
            .collect(),
        per_query,
        excluded,
    }
}

impl RankingReport {
    pub fn write_rankings_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["query", "candidate", "rank", "score"])?;
        for q in &self.per_query {
            for (r, (c, s)) in q.candidates.iter().enumerate() {
                w.write_record([q.query.as_str(), c.as_str(), &(r + 1).to_string(), &format!("{s:.12}")])?;
            }
        }
        w.flush().map_err(|e| Error::io("<rankings>", e))?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GateSummary {
    pub mean: f64,
    pub min: f64,
    pub max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Recommendation {
    pub query: String,
    pub candidates: Vec<(String, f64)>,
    /// Present for gated models: the query's weights on the structural tower.
    pub gate: Option<GateSummary>,
}

/// Top `top_k` of every other node by fused-embedding cosine.
pub fn recommend_from_embeddings(fused: &FusedEmbeddings, ids: &[String], query: &str, top_k: usize) -> Result<Recommendation> {
    let q = ids
        .iter()
        .position(|i| i == query)
        .ok_or_else(|| Error::Data(format!("unknown query id `{query}`")))?;
    let pool: Vec<usize> = (0..ids.len()).collect();
    let ranked = rank_pool(q, &pool, ids, &|a, b| fused.score(a, b));
    let gate = fused.gate.as_ref().map(|g| {
        let vals: Vec<f64> = match g {
            crate::model::GateValues::Node(a) => vec![a[q]],
            crate::model::GateValues::Elementwise(m) => m.row(q).to_vec(),
        };
        GateSummary {
            mean: vals.iter().sum::<f64>() / vals.len() as f64,
            min: vals.iter().copied().fold(f64::INFINITY, f64::min),
            max: vals.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        }
    });
    Ok(Recommendation {
        query: query.to_string(),
        candidates: ranked.into_iter().take(top_k).map(|(c, s)| (ids[c].clone(), s)).collect(),
        gate,
    })
}

pub fn recommend(
    query: &str,
    model: &FusionModel,
    ops: &GraphOperators,
    features: &crate::features::NodeFeatures,
    top_k: usize,
) -> Result<Recommendation> {
    let fused = model.forward(ops, features.matrix.view())?;
    recommend_from_embeddings(&fused, &features.ids, query, top_k)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GateReport {
    /// Mean over a family's nodes of each node's mean gate (weight on the
    /// structural tower).
    pub per_family_mean_gate: BTreeMap<String, f64>,
    pub per_role_mean_gate: BTreeMap<String, f64>,
    /// Population variance of node-mean gates within each role.
    pub per_role_gate_variance: BTreeMap<String, f64>,
}

/// Aggregates per-node structural shares by family and role.
pub fn gate_report_from_shares(shares: &[f64], roster: &OrgRoster) -> GateReport {
    let mut by_family: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    let mut by_role: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    for (e, &s) in roster.employees().iter().zip(shares) {
        by_family.entry(e.job_family.clone()).or_default().push(s);
        by_role.entry(e.role.clone()).or_default().push(s);
    }
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    GateReport {
        per_family_mean_gate: by_family.iter().map(|(k, v)| (k.clone(), mean(v))).collect(),
        per_role_mean_gate: by_role.iter().map(|(k, v)| (k.clone(), mean(v))).collect(),
        per_role_gate_variance: by_role
            .iter()
            .map(|(k, v)| {
                let m = mean(v);
                (k.clone(), v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / v.len() as f64)
            })
            .collect(),
    }
}

pub fn gate_analysis(
    model: &FusionModel,
    ops: &GraphOperators,
    features: &crate::features::NodeFeatures,
    roster: &OrgRoster,
) -> Result<GateReport> {
    if model.kind != FusionKind::Gating {
        return Err(Error::Config(format!("gate analysis needs a gating checkpoint, got {}", model.kind)));
    }
    let fused = model.forward(ops, features.matrix.view())?;
    let shares = fused.gate.expect("gating forward always yields gates").structural_share();
    Ok(gate_report_from_shares(&shares, roster))
}

/// One row of the model comparison table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompareRow {
    pub model: String,
    pub hit_at: BTreeMap<usize, f64>,
}

/// Rows in the order gating, attention, weighted sum, late concat, early
/// concat, single GCNs, heuristic.
pub fn compare_order(model: &str) -> usize {
    ["gating", "attention", "weighted_sum", "late_concat", "early_concat", "single_str", "single_ssim", "heuristic"]
        .iter()
        .position(|&m| m == model)
        .unwrap_or(usize::MAX)
}

pub fn write_compare_csv<W: Write>(rows: &[CompareRow], ks: &[usize], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let mut header = vec!["model".to_string()];
    header.extend(ks.iter().map(|k| format!("hit@{k}")));
    w.write_record(&header)?;
    for r in rows {
        let mut rec = vec![r.model.clone()];
        rec.extend(ks.iter().map(|k| format!("{:.4}", r.hit_at.get(k).copied().unwrap_or(f64::NAN))));
        w.write_record(&rec)?;
    }
    w.flush().map_err(|e| Error::io("<compare>", e))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Head;
    use crate::orgdata::Employee;
    use ndarray::{Array1, Array2};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn roster_with_cells(cells: &[usize]) -> OrgRoster {
        OrgRoster::new(
            cells
                .iter()
                .enumerate()
                .map(|(i, &c)| Employee {
                    id: format!("e{i:03}"),
                    job_family: format!("f{}", c / 3),
                    role: format!("r{}", c % 3),
                    level: "L1".into(),
                })
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn positive_at_rank_one_and_rank_31() {
        // Node 0 and node 40 share a cell; everyone else is unique-ish.
        let cells: Vec<usize> = (0..150).map(|i| if i == 0 || i == 40 { 0 } else { 1 + i % 50 }).collect();
        let r = roster_with_cells(&cells);
        let split = Split {
            n_nodes: 150,
            query_nodes: vec![0],
        };
        let first = |_: usize, c: usize| if c == 40 { 10.0 } else { 0.0 };
        assert_eq!(hit_at_k(&first, &r, &split, &[30], "t", 0).hit_at[&30], 1.0);

        // 30 decoys outrank the positive, which lands at rank 31.
        let decoys = |_: usize, c: usize| if c == 40 { 5.0 } else if (100..130).contains(&c) { 9.0 } else { 0.0 };
        let rep = hit_at_k(&decoys, &r, &split, &[30, 100], "t", 0);
        assert_eq!(rep.per_query[0].first_positive_rank, Some(31));
        assert_eq!(rep.hit_at[&30], 0.0);
        assert_eq!(rep.hit_at[&100], 1.0);
    }

    fn brute_force_hits(scores: &Array2<f64>, cells: &[usize], queries: &[usize], k: usize) -> f64 {
        let n = cells.len();
        let mut hits = 0;
        let mut counted = 0;
        for &q in queries {
            if !(0..n).any(|c| c != q && cells[c] == cells[q]) {
                continue;
            }
            counted += 1;
            let mut all: Vec<(f64, usize)> = (0..n).filter(|&c| c != q).map(|c| (scores[[q, c]], c)).collect();
            // ids are zero-padded, so index order is id order.
            all.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap().then(a.1.cmp(&b.1)));
            if all[..k.min(all.len())].iter().any(|&(_, c)| cells[c] == cells[q]) {
                hits += 1;
            }
        }
        hits as f64 / counted as f64
    }

    #[test]
    fn matches_full_sort_oracle_on_random_instances() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..20 {
            let n = 40;
            let cells: Vec<usize> = (0..n).map(|_| rng.random_range(0..8)).collect();
            let r = roster_with_cells(&cells);
            // Coarse scores so ties exercise the id tie-break.
            let scores = Array2::from_shape_fn((n, n), |_| rng.random_range(0..5) as f64);
            let queries: Vec<usize> = (0..n).filter(|_| rng.random_bool(0.3)).collect();
            let split = Split {
                n_nodes: n,
                query_nodes: queries.clone(),
            };
            for k in [1, 3, 10] {
                let rep = hit_at_k(&|a, b| scores[[a, b]], &r, &split, &[k], "t", 0);
                if rep.n_queries > 0 {
                    assert_eq!(rep.hit_at[&k], brute_force_hits(&scores, &cells, &queries, k));
                }
            }
        }
    }

    #[test]
    fn queries_without_positives_are_excluded() {
        let r = roster_with_cells(&[0, 1, 1]);
        let split = Split {
            n_nodes: 3,
            query_nodes: vec![0, 1],
        };
        let rep = hit_at_k(&|_, _| 0.0, &r, &split, &[1], "t", 0);
        assert_eq!(rep.excluded, vec!["e000".to_string()]);
        assert_eq!(rep.n_queries, 1);
    }

    fn fused(h: Array2<f64>) -> FusedEmbeddings {
        FusedEmbeddings { h, gate: None }
    }

    #[test]
    fn clone_ranks_first_and_top_k_is_capped() {
        let ids: Vec<String> = (0..4).map(|i| format!("e{i}")).collect();
        let f = fused(ndarray::array![[1.0, 2.0], [0.0, 1.0], [2.0, 4.0], [-1.0, 0.0]]);
        let rec = recommend_from_embeddings(&f, &ids, "e0", 10).unwrap();
        assert_eq!(rec.candidates.len(), 3);
        assert_eq!(rec.candidates[0].0, "e2");
        assert!((rec.candidates[0].1 - 1.0).abs() < 1e-15);
        for (c, s) in &rec.candidates {
            let j = ids.iter().position(|i| i == c).unwrap();
            assert_eq!(*s, f.score(0, j));
        }
        assert!(recommend_from_embeddings(&f, &ids, "nobody", 3).is_err());
    }

    #[test]
    fn zero_gate_checkpoint_gives_half_everywhere() {
        use crate::graphs::WeightedGraph;
        let r = roster_with_cells(&[0, 0, 1, 4, 4, 5]);
        let g = WeightedGraph::from_edges(r.ids(), &[(0, 1, 1.0), (2, 3, 2.0)]).unwrap();
        let ops = GraphOperators::build(&g, &g).unwrap();
        let mut m = FusionModel::new(FusionKind::Gating, &[3, 4, 2], 0, 0.8).unwrap();
        m.head = Head::Gating {
            w_g: Array2::zeros((2, 4)),
            b_g: Array1::zeros(2),
        };
        let feats = crate::features::NodeFeatures {
            ids: r.ids(),
            matrix: Array2::from_shape_fn((6, 3), |(i, k)| (i * 3 + k) as f64 * 0.1),
        };
        let rep = gate_analysis(&m, &ops, &feats, &r).unwrap();
        assert!(rep.per_family_mean_gate.values().all(|&v| v == 0.5));
        assert!(rep.per_role_gate_variance.values().all(|&v| v == 0.0));
        let other = FusionModel::new(FusionKind::Attention, &[3, 4, 2], 0, 0.8).unwrap();
        assert!(gate_analysis(&other, &ops, &feats, &r).is_err());
    }

    #[test]
    fn role_variance_matches_direct_computation() {
        let r = roster_with_cells(&[0, 0, 1, 3, 4, 6]);
        let shares = [0.1, 0.9, 0.4, 0.6, 0.5, 0.3];
        let rep = gate_report_from_shares(&shares, &r);
        // Role r0 holds cells 0, 0, 3, 6.
        let v = [0.1, 0.9, 0.6, 0.3];
        let m = v.iter().sum::<f64>() / 4.0;
        let var = v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / 4.0;
        assert!((rep.per_role_gate_variance["r0"] - var).abs() < 1e-15);
        assert!(rep.per_role_gate_variance.values().all(|&v| v >= 0.0));
        assert!((rep.per_family_mean_gate["f0"] - (0.1 + 0.9 + 0.4) / 3.0).abs() < 1e-15);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(100))]

        #[test]
        fn hit_rate_is_monotone_in_k_and_full_pool_always_hits(seed in 0u64..100_000) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let n = 25;
            let cells: Vec<usize> = (0..n).map(|_| rng.random_range(0..4)).collect();
            let r = roster_with_cells(&cells);
            let scores = Array2::from_shape_fn((n, n), |_| rng.random::<f64>());
            let queries: Vec<usize> = (0..n).filter(|&q| (0..n).any(|c| c != q && cells[c] == cells[q])).collect();
            prop_assume!(!queries.is_empty());
            let split = Split { n_nodes: n, query_nodes: queries };
            let rep = hit_at_k(&|a, b| scores[[a, b]], &r, &split, &[1, 5, 10, 24], "t", 0);
            let h: Vec<f64> = rep.hit_at.values().copied().collect();
            prop_assert!(h.windows(2).all(|w| w[0] <= w[1]));
            prop_assert_eq!(rep.hit_at[&24], 1.0);
        }

        #[test]
        fn recommendations_ignore_pool_order(seed in 0u64..100_000) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let n = 12;
            let ids: Vec<String> = (0..n).map(|i| format!("e{i:02}")).collect();
            let scores = Array2::from_shape_fn((n, n), |_| rng.random_range(0..3) as f64);
            let mut pool: Vec<usize> = (1..n).collect();
            let a = rank_pool(0, &pool, &ids, &|q, c| scores[[q, c]]);
            rand::seq::SliceRandom::shuffle(pool.as_mut_slice(), &mut rng);
            let b = rank_pool(0, &pool, &ids, &|q, c| scores[[q, c]]);
            prop_assert_eq!(a, b);
        }
    }
}
