//! Drives the binary on a small synthetic organization.

use std::path::Path;
use std::process::{Command, Output};

use talentgraph::embed::SkipGramConfig;
use talentgraph::eval::RankingReport;
use talentgraph::features::{ClassifierConfig, ValidationConfig};
use talentgraph::model::FusionKind;
use talentgraph::orgdata::SyntheticOrgConfig;
use talentgraph::pipeline::{report_path, PathsConfig, PipelineConfig};
use talentgraph::trainer::TrainConfig;

fn small_config(workdir: &Path) -> PipelineConfig {
    PipelineConfig {
        paths: PathsConfig {
            workdir: workdir.to_path_buf(),
            ..Default::default()
        },
        seed: 5,
        synthetic: Some(SyntheticOrgConfig {
            n_employees: 60,
            ..Default::default()
        }),
        embedding: SkipGramConfig {
            dim: 16,
            epochs: 2,
            ..Default::default()
        },
        train: TrainConfig {
            epochs: 3,
            hidden_dim: 8,
            out_dim: 8,
            ..Default::default()
        },
        validation: ValidationConfig {
            classifier: ClassifierConfig {
                epochs: 20,
                folds: 2,
                ..Default::default()
            },
            kmeans_restarts: 2,
            ..Default::default()
        },
        ..Default::default()
    }
}

fn write_config(dir: &Path, cfg: &PipelineConfig) -> std::path::PathBuf {
    let path = dir.join("config.json");
    std::fs::write(&path, serde_json::to_string_pretty(cfg).unwrap()).unwrap();
    path
}

fn run(config: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_talentgraph"))
        .arg("--config")
        .arg(config)
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .unwrap()
}

#[test]
fn evaluate_before_train_names_the_missing_stage() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &small_config(&dir.path().join("work")));
    assert!(run(&cfg, &["features", "--from-scratch"]).status.success());
    let out = run(&cfg, &["evaluate", "--model", "late_concat"]);
    assert_eq!(out.status.code(), Some(3));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("`train`"), "{err}");
}

#[test]
fn bad_threshold_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let mut c = small_config(&dir.path().join("work"));
    c.graphs.tau = 1.5;
    let cfg = write_config(dir.path(), &c);
    let out = run(&cfg, &["graphs", "--from-scratch"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn unknown_model_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &small_config(&dir.path().join("work")));
    let out = run(&cfg, &["train", "--model", "transformer"]);
    assert!(!out.status.success());
}

#[test]
fn compare_all_lists_every_model_with_its_report() {
    let dir = tempfile::tempdir().unwrap();
    let work = dir.path().join("work");
    let cfg = write_config(dir.path(), &small_config(&work));
    let out = run(&cfg, &["compare", "--models", "all", "--from-scratch"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let table = std::fs::read_to_string(work.join("compare/compare.csv")).unwrap();
    let mut rdr = csv::Reader::from_reader(table.as_bytes());
    let headers = rdr.headers().unwrap().clone();
    let rows: Vec<csv::StringRecord> = rdr.records().map(Result::unwrap).collect();
    for kind in FusionKind::ALL {
        let row = rows
            .iter()
            .find(|r| r.get(0) == Some(&kind.to_string()))
            .unwrap_or_else(|| panic!("{kind} missing from {table}"));
        let rep: RankingReport =
            serde_json::from_str(&std::fs::read_to_string(work.join(report_path(kind))).unwrap()).unwrap();
        for (k, h) in &rep.hit_at {
            let col = headers.iter().position(|c| c == format!("hit@{k}")).unwrap();
            let got: f64 = row[col].parse().unwrap();
            // The table rounds to four places.
            assert!((got - h).abs() <= 5e-5, "{kind} hit@{k}: {got} vs {h}");
        }
    }
}

#[test]
fn recommend_prints_ranked_candidates() {
    let dir = tempfile::tempdir().unwrap();
    let work = dir.path().join("work");
    let cfg = write_config(dir.path(), &small_config(&work));
    assert!(run(&cfg, &["train", "--model", "gating", "--from-scratch"]).status.success());
    let roster = std::fs::read_to_string(work.join("data/roster.csv")).unwrap();
    let query = roster.lines().nth(1).unwrap().split(',').next().unwrap().to_string();
    let out = run(&cfg, &["recommend", "--query", &query, "--top-k", "5"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = String::from_utf8_lossy(&out.stdout);
    let ranks: Vec<&str> = text.lines().filter(|l| !l.starts_with("gate")).collect();
    assert_eq!(ranks.len(), 5);
    assert!(ranks.iter().all(|l| !l.contains(&format!("\t{query}\t"))));
    assert!(text.contains("gate mean"));
}
