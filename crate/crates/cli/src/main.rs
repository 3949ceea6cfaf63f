//! Command-line front end for the talentgraph pipeline.
//!
//! Exit codes: 0 success, 2 configuration error, 3 data error, 4 numeric
//! failure.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use talentgraph::eval::recommend;
use talentgraph::model::FusionKind;
use talentgraph::orgdata::SyntheticOrgConfig;
use talentgraph::pipeline::{Pipeline, PipelineConfig, Stage};
use talentgraph::{Error, Result};

#[derive(Parser, Debug)]
#[command(name = "talentgraph", version, about = "Multi-view GCN talent recommendation from email logs")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct Global {
    /// JSON configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Work directory for artifacts (overrides the config).
    #[arg(long, global = true)]
    workdir: Option<PathBuf>,
    /// Master seed for generation, embeddings, split, models and classifiers.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Run missing or outdated upstream stages first.
    #[arg(long, global = true)]
    from_scratch: bool,
    /// Override the number of training epochs.
    #[arg(long, global = true)]
    epochs: Option<usize>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Load the email log and roster into the work directory.
    Ingest {
        #[arg(long)]
        emails: Option<PathBuf>,
        #[arg(long)]
        roster: Option<PathBuf>,
        #[arg(long)]
        blocklist: Option<PathBuf>,
    },
    /// Generate the planted synthetic organization.
    Synth,
    /// Prune subjects, train word vectors and pool node centroids.
    Embed,
    /// Build the structure and semantic networks.
    Graphs,
    /// Centralities, the node feature matrix and the query split.
    Features,
    /// Silhouette, role AUC, combination F1, family similarity and k-means.
    Validate,
    /// Evaluate the heuristic score baseline.
    Baseline,
    /// Train one fusion model (`heuristic` needs no training).
    Train {
        #[arg(long, default_value = "gating")]
        model: ModelArg,
    },
    /// Hit@K of a trained model or of the heuristic baseline.
    Evaluate {
        #[arg(long, default_value = "gating")]
        model: ModelArg,
    },
    /// Tabulate Hit@K over models (`all` or a comma-separated list).
    Compare {
        #[arg(long, default_value = "all")]
        models: String,
    },
    /// Structural gate shares per family and role.
    Gates,
    /// Top candidates for one employee.
    Recommend {
        #[arg(long)]
        query: String,
        #[arg(long, default_value = "gating")]
        model: FusionKind,
        #[arg(long, default_value_t = 10)]
        top_k: usize,
    },
    /// Run every stage.
    Pipeline {
        #[command(subcommand)]
        what: PipelineCommand,
    },
}

#[derive(Subcommand, Debug)]
enum PipelineCommand {
    All {
        /// Use the synthetic organization instead of ingested files.
        #[arg(long)]
        synthetic: bool,
    },
}

/// A fusion kind or the score-based baseline.
#[derive(Debug, Clone, Copy)]
enum ModelArg {
    Heuristic,
    Fusion(FusionKind),
}

impl std::str::FromStr for ModelArg {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s.trim().eq_ignore_ascii_case("heuristic") {
            Ok(ModelArg::Heuristic)
        } else {
            s.parse().map(ModelArg::Fusion)
        }
    }
}

fn load_config(g: &Global) -> Result<PipelineConfig> {
    let mut cfg = match &g.config {
        Some(p) => PipelineConfig::load(p)?,
        None => PipelineConfig::default(),
    };
    if let Some(w) = &g.workdir {
        cfg.paths.workdir = w.clone();
    }
    if let Some(s) = g.seed {
        cfg.seed = s;
    }
    if let Some(e) = g.epochs {
        cfg.train.epochs = e;
    }
    Ok(cfg)
}

fn parse_models(s: &str) -> Result<Vec<FusionKind>> {
    if s.trim().eq_ignore_ascii_case("all") {
        return Ok(FusionKind::ALL.to_vec());
    }
    s.split(',').map(str::parse).collect()
}

fn run(cli: Cli) -> Result<()> {
    let mut cfg = load_config(&cli.global)?;
    let fs = cli.global.from_scratch;
    match cli.command {
        Command::Ingest {
            emails,
            roster,
            blocklist,
        } => {
            cfg.paths.emails = emails.or(cfg.paths.emails);
            cfg.paths.roster = roster.or(cfg.paths.roster);
            cfg.paths.blocklist = blocklist.or(cfg.paths.blocklist);
            Pipeline::new(cfg)?.run(Stage::Ingest, fs)
        }
        Command::Synth => Pipeline::new(cfg)?.run(Stage::Synth, fs),
        Command::Embed => Pipeline::new(cfg)?.run(Stage::Embed, fs),
        Command::Graphs => Pipeline::new(cfg)?.run(Stage::Graphs, fs),
        Command::Features => Pipeline::new(cfg)?.run(Stage::Features, fs),
        Command::Validate => {
            let p = Pipeline::new(cfg)?;
            p.run(Stage::Validate, fs)?;
            println!("{}", p.path("validate/f1_table.csv").display());
            Ok(())
        }
        Command::Baseline => report_hits(&Pipeline::new(cfg)?, Stage::Baseline, fs, "baseline/report.json"),
        Command::Train { model } => match model {
            ModelArg::Heuristic => {
                log::info!("the heuristic baseline has no parameters to train");
                Ok(())
            }
            ModelArg::Fusion(kind) => Pipeline::new(cfg)?.run(Stage::Train(kind), fs),
        },
        Command::Evaluate {
            model: ModelArg::Heuristic,
        } => report_hits(&Pipeline::new(cfg)?, Stage::Baseline, fs, "baseline/report.json"),
        Command::Evaluate {
            model: ModelArg::Fusion(kind),
        } => {
            let rel = talentgraph::pipeline::report_path(kind);
            report_hits(&Pipeline::new(cfg)?, Stage::Evaluate(kind), fs, &rel)
        }
        Command::Compare { models } => {
            cfg.models = parse_models(&models)?;
            let p = Pipeline::new(cfg)?;
            p.run(Stage::Compare, fs)?;
            print_file(&p.path("compare/compare.csv"))
        }
        Command::Gates => {
            let p = Pipeline::new(cfg)?;
            p.run(Stage::Gates, fs)?;
            print_file(&p.path("gates/gates.json"))
        }
        Command::Recommend { query, model, top_k } => {
            let p = Pipeline::new(cfg)?;
            if fs {
                p.run(Stage::Train(model), true)?;
            }
            let (m, ops, features) = p.load_for_inference(model)?;
            let rec = recommend(&query, &m, &ops, &features, top_k)?;
            for (rank, (id, score)) in rec.candidates.iter().enumerate() {
                println!("{}\t{id}\t{score:.6}", rank + 1);
            }
            if let Some(g) = rec.gate {
                println!("gate mean {:.4} min {:.4} max {:.4}", g.mean, g.min, g.max);
            }
            Ok(())
        }
        Command::Pipeline {
            what: PipelineCommand::All { synthetic },
        } => {
            if synthetic && cfg.synthetic.is_none() {
                cfg.synthetic = Some(SyntheticOrgConfig::default());
            }
            if !synthetic && cfg.synthetic.is_none() && cfg.paths.emails.is_none() {
                return Err(Error::Config("no data source: pass --synthetic or set paths.emails".into()));
            }
            let p = Pipeline::new(cfg)?;
            p.run_all()?;
            print_file(&p.path("compare/compare.csv"))
        }
    }
}

fn report_hits(p: &Pipeline, stage: Stage, fs: bool, rel: &str) -> Result<()> {
    p.run(stage, fs)?;
    let path = p.path(rel);
    let text = std::fs::read_to_string(&path).map_err(|e| Error::Io { path, source: e })?;
    let report: talentgraph::eval::RankingReport = serde_json::from_str(&text)?;
    for (k, h) in &report.hit_at {
        println!("{}\thit@{k}\t{h:.4}", report.model_kind);
    }
    Ok(())
}

fn print_file(path: &std::path::Path) -> Result<()> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })?;
    print!("{text}");
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            log::error!("{e}");
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
