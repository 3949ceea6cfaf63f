//! Properties of the planted organization and of features built on it.

use talentgraph::features::Feature;
use talentgraph::orgdata::{generate_synthetic_org, synthetic_cells, SyntheticOrgConfig};
use talentgraph::pipeline::{prepare_synthetic, PipelineConfig};

#[test]
fn email_volume_matches_the_planted_rates() {
    for seed in 1..=3 {
        let cfg = SyntheticOrgConfig {
            rng_seed: seed,
            ..Default::default()
        };
        let (roster, records) = generate_synthetic_org(&cfg).unwrap();
        let cells = synthetic_cells(&cfg, &roster);
        let n = cells.len();
        let planted = |a: (usize, usize), b: (usize, usize)| {
            if a == b {
                cfg.intra_role_email_rate
            } else if a.0 == b.0 {
                cfg.intra_family_email_rate
            } else {
                cfg.cross_family_email_rate
            }
        };
        let pairs: Vec<(usize, usize)> = (0..n).flat_map(|i| ((i + 1)..n).map(move |j| (i, j))).collect();
        let mean = pairs.iter().map(|&(i, j)| planted(cells[i], cells[j])).sum::<f64>() / pairs.len() as f64;
        let expected: f64 = pairs
            .iter()
            .map(|&(i, j)| {
                let s = cfg.structure_informativeness[cells[i].0].min(cfg.structure_informativeness[cells[j].0]);
                let leaders = [cells[i].1, cells[j].1].iter().filter(|&&r| r == 0).count() as i32;
                (s * planted(cells[i], cells[j]) + (1.0 - s) * mean) * cfg.leader_activity.powi(leaders)
            })
            .sum();
        let got = records.len() as f64;
        assert!((got - expected).abs() <= 0.2 * expected, "seed {seed}: {got} emails, expected {expected:.0}");
    }
}

#[test]
fn semantic_combinations_lead_family_prediction() {
    let cfg = PipelineConfig {
        seed: 2,
        ..Default::default()
    };
    let prep = prepare_synthetic(&cfg).unwrap();
    let report = prep.validation(&cfg.resolved().validation).unwrap();
    let best = |with: bool| {
        report
            .f1_table
            .iter()
            .filter(|r| r.features.contains(&Feature::Semantic) == with)
            .map(|r| r.f1_family)
            .fold(f64::NEG_INFINITY, f64::max)
    };
    assert!(best(true) > best(false), "with s_i {:.3}, without {:.3}", best(true), best(false));
}
