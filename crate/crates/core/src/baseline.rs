//! Score-based heuristic recommender: semantic similarity minus weighted
//! centrality gaps.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::NodeFeatures;
use crate::linalg::cosine_view;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BaselineWeights {
    pub alpha_s: f64,
    pub alpha_d: f64,
    pub alpha_c: f64,
    pub alpha_b: f64,
    pub alpha_e: f64,
}

impl Default for BaselineWeights {
    fn default() -> Self {
        Self {
            alpha_s: 0.8,
            alpha_d: 0.05,
            alpha_c: 0.05,
            alpha_b: 0.05,
            alpha_e: 0.05,
        }
    }
}

impl BaselineWeights {
    pub fn validate(&self) -> Result<()> {
        let all = [self.alpha_s, self.alpha_d, self.alpha_c, self.alpha_b, self.alpha_e];
        if all.iter().any(|a| !a.is_finite() || *a < 0.0) {
            return Err(Error::Config("baseline weights must be finite and non-negative".into()));
        }
        Ok(())
    }

    fn penalties(&self) -> [f64; 4] {
        [self.alpha_d, self.alpha_c, self.alpha_b, self.alpha_e]
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HeuristicScore {
    pub score: f64,
    /// One of the two nodes has no semantic centroid, so similarity was 0.
    pub zero_coverage: bool,
}

/// `alpha_s * cos(s_i, s_j) - sum_k alpha_k |x_ik - x_jk|` over the
/// normalized centrality columns of `features`.
pub fn heuristic_score(i: usize, j: usize, features: &NodeFeatures, covered: &[bool], w: &BaselineWeights) -> HeuristicScore {
    let sem = features.semantic();
    let zero_coverage = !covered[i] || !covered[j];
    let sim = if zero_coverage {
        0.0
    } else {
        cosine_view(sem.row(i), sem.row(j))
    };
    let base = features.semantic_dim();
    let penalty: f64 = w
        .penalties()
        .iter()
        .enumerate()
        .map(|(k, a)| a * (features.matrix[[i, base + k]] - features.matrix[[j, base + k]]).abs())
        .sum();
    HeuristicScore {
        score: w.alpha_s * sim - penalty,
        zero_coverage,
    }
}

/// Orders `pool` by descending score against `query`; ties go to the
/// smaller employee id.
pub fn heuristic_rank(
    query: usize,
    pool: &[usize],
    features: &NodeFeatures,
    covered: &[bool],
    w: &BaselineWeights,
) -> Result<Vec<(usize, f64)>> {
    if pool.is_empty() {
        return Err(Error::Data(format!("empty candidate pool for `{}`", features.ids[query])));
    }
    if pool.contains(&query) {
        return Err(Error::Data(format!("candidate pool contains the query `{}`", features.ids[query])));
    }
    let mut flagged = 0;
    let mut scored: Vec<(usize, f64)> = pool
        .iter()
        .map(|&j| {
            let s = heuristic_score(query, j, features, covered, w);
            flagged += usize::from(s.zero_coverage);
            (j, s.score)
        })
        .collect();
    if flagged > 0 {
        log::debug!("{}: {flagged} candidate pairs scored without semantic coverage", features.ids[query]);
    }
    sort_ranked(&mut scored, &features.ids);
    Ok(scored)
}

/// Descending score, ascending id on ties.
pub fn sort_ranked(scored: &mut [(usize, f64)], ids: &[String]) {
    scored.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| ids[a.0].cmp(&ids[b.0])));
}
