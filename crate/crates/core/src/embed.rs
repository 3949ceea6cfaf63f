//! Skip-gram word embeddings with negative sampling, subject pooling and
//! per-employee semantic centroids.

use std::collections::{BTreeSet, HashMap};
use std::io::Write;

use ndarray::{Array1, Array2, ArrayView1};
use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::orgdata::{EmailRecord, OrgRoster};

pub const EMBEDDING_DIM: usize = 100;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SkipGramConfig {
    pub dim: usize,
    pub window: usize,
    pub negatives: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub min_learning_rate: f64,
    pub seed: u64,
}

impl Default for SkipGramConfig {
    fn default() -> Self {
        Self {
            dim: EMBEDDING_DIM,
            window: 5,
            negatives: 5,
            epochs: 10,
            learning_rate: 0.025,
            min_learning_rate: 1e-4,
            seed: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WordEmbeddings {
    pub vocab: Vec<String>,
    pub vectors: Array2<f64>,
    index: HashMap<String, usize>,
}

#[derive(Serialize, Deserialize)]
struct EmbeddingsFile {
    dim: usize,
    vocab: Vec<String>,
    vectors: Vec<Vec<f64>>,
}

impl WordEmbeddings {
    pub fn new(vocab: Vec<String>, vectors: Array2<f64>) -> Result<Self> {
        if vocab.len() != vectors.nrows() {
            return Err(Error::Shape(format!(
                "{} vocabulary entries but {} vectors",
                vocab.len(),
                vectors.nrows()
            )));
        }
        if vectors.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric("non-finite embedding component".into()));
        }
        let mut index = HashMap::with_capacity(vocab.len());
        for (i, t) in vocab.iter().enumerate() {
            if index.insert(t.clone(), i).is_some() {
                return Err(Error::Data(format!("duplicate vocabulary token `{t}`")));
            }
        }
        Ok(Self { vocab, vectors, index })
    }

    pub fn dim(&self) -> usize {
        self.vectors.ncols()
    }

    pub fn get(&self, token: &str) -> Option<ArrayView1<'_, f64>> {
        self.index.get(token).map(|&i| self.vectors.row(i))
    }

    pub fn to_json(&self) -> Result<String> {
        let file = EmbeddingsFile {
            dim: self.dim(),
            vocab: self.vocab.clone(),
            vectors: self.vectors.rows().into_iter().map(|r| r.to_vec()).collect(),
        };
        Ok(serde_json::to_string(&file)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let f: EmbeddingsFile = serde_json::from_str(s)?;
        let rows = f.vectors.len();
        if f.vectors.iter().any(|r| r.len() != f.dim) {
            return Err(Error::Shape("embedding row length differs from dim".into()));
        }
        let flat: Vec<f64> = f.vectors.into_iter().flatten().collect();
        let vectors = Array2::from_shape_vec((rows, f.dim), flat)
            .map_err(|e| Error::Shape(e.to_string()))?;
        Self::new(f.vocab, vectors)
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Subject token lists of `records`, followed by any supplementary sentences
/// (job-description nouns), which also extend the vocabulary.
pub fn training_sentences(records: &[EmailRecord], supplementary: &[Vec<String>]) -> Vec<Vec<String>> {
    records
        .iter()
        .map(|r| r.subject_tokens.clone())
        .chain(supplementary.iter().cloned())
        .collect()
}

/// Trains skip-gram embeddings. Returns the embeddings and the mean
/// per-pair loss of every epoch.
///
/// Single-threaded and fully determined by `cfg.seed`.
pub fn train_skipgram(sentences: &[Vec<String>], cfg: &SkipGramConfig) -> Result<(WordEmbeddings, Vec<f64>)> {
    let vocab: Vec<String> = sentences
        .iter()
        .flatten()
        .cloned()
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    if vocab.len() < 2 {
        return Err(Error::Data(format!(
            "skip-gram needs at least 2 distinct tokens, found {}",
            vocab.len()
        )));
    }
    if cfg.dim == 0 || cfg.window == 0 {
        return Err(Error::Config("skip-gram dim and window must be positive".into()));
    }
    let index: HashMap<&str, usize> = vocab.iter().enumerate().map(|(i, t)| (t.as_str(), i)).collect();
    let corpus: Vec<Vec<usize>> = sentences
        .iter()
        .map(|s| s.iter().map(|t| index[t.as_str()]).collect())
        .collect();

    let v = vocab.len();
    let dim = cfg.dim;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let half = 0.5 / dim as f64;
    let mut input = Array2::from_shape_fn((v, dim), |_| rng.random_range(-half..half));
    let mut output = Array2::<f64>::zeros((v, dim));

    let mut counts = vec![0usize; v];
    for s in &corpus {
        for &w in s {
            counts[w] += 1;
        }
    }
    let noise = WeightedIndex::new(counts.iter().map(|&c| (c as f64).powf(0.75)))
        .map_err(|e| Error::Data(format!("noise distribution: {e}")))?;

    let total_steps = (cfg.epochs * corpus.len()).max(1) as f64;
    let mut step = 0usize;
    let mut losses = Vec::with_capacity(cfg.epochs);
    let mut grad_in = vec![0.0; dim];
    let mut center_vec = vec![0.0; dim];
    for _ in 0..cfg.epochs {
        let mut epoch_loss = 0.0;
        let mut pairs = 0usize;
        for s in &corpus {
            let progress = step as f64 / total_steps;
            let lr = (cfg.learning_rate * (1.0 - progress)).max(cfg.min_learning_rate);
            step += 1;
            for (pos, &center) in s.iter().enumerate() {
                let lo = pos.saturating_sub(cfg.window);
                let hi = (pos + cfg.window + 1).min(s.len());
                for (cpos, &context) in s.iter().enumerate().take(hi).skip(lo) {
                    if cpos == pos {
                        continue;
                    }
                    grad_in.iter_mut().for_each(|g| *g = 0.0);
                    center_vec.copy_from_slice(input.row(center).as_slice().unwrap());
                    // One positive target, then `negatives` noise targets.
                    for k in 0..=cfg.negatives {
                        let (target, label) = if k == 0 {
                            (context, 1.0)
                        } else {
                            let t = noise.sample(&mut rng);
                            if t == context {
                                continue;
                            }
                            (t, 0.0)
                        };
                        let out_row = output.row_mut(target).into_slice().unwrap();
                        let score: f64 = center_vec.iter().zip(out_row.iter()).map(|(a, b)| a * b).sum();
                        let p = sigmoid(score);
                        epoch_loss -= if label == 1.0 {
                            p.max(1e-300).ln()
                        } else {
                            (1.0 - p).max(1e-300).ln()
                        };
                        let g = lr * (label - p);
                        for d in 0..dim {
                            grad_in[d] += g * out_row[d];
                            out_row[d] += g * center_vec[d];
                        }
                    }
                    let in_row = input.row_mut(center).into_slice().unwrap();
                    for d in 0..dim {
                        in_row[d] += grad_in[d];
                    }
                    pairs += 1;
                }
            }
        }
        losses.push(if pairs > 0 { epoch_loss / pairs as f64 } else { 0.0 });
    }
    Ok((WordEmbeddings::new(vocab, input)?, losses))
}

/// Mean of the in-vocabulary token vectors. The flag is `true` when no
/// token was in vocabulary and the zero vector was returned.
pub fn pool_subject(tokens: &[String], emb: &WordEmbeddings) -> (Array1<f64>, bool) {
    let mut acc = Array1::zeros(emb.dim());
    let mut hits = 0usize;
    for t in tokens {
        if let Some(v) = emb.get(t) {
            acc += &v;
            hits += 1;
        }
    }
    if hits == 0 {
        return (acc, true);
    }
    acc /= hits as f64;
    (acc, false)
}

/// Per-employee semantic centroid `s_i` in roster order.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeSemantics {
    pub ids: Vec<String>,
    pub centroids: Array2<f64>,
    /// Number of pooled emails per employee.
    pub coverage: Vec<usize>,
}

impl NodeSemantics {
    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.centroids.ncols()
    }

    pub fn centroid(&self, i: usize) -> ArrayView1<'_, f64> {
        self.centroids.row(i)
    }

    /// Employees with no pooled email (zero centroid).
    pub fn uncovered(&self) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.coverage[i] == 0).collect()
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header = vec!["employee_id".to_string(), "coverage".to_string()];
        header.extend((0..self.dim()).map(|d| format!("v{d}")));
        w.write_record(&header)?;
        for i in 0..self.len() {
            let mut row = vec![self.ids[i].clone(), self.coverage[i].to_string()];
            row.extend(self.centroids.row(i).iter().map(|x| format!("{x:e}")));
            w.write_record(&row)?;
        }
        w.flush().map_err(|e| Error::io("<centroids>", e))?;
        Ok(())
    }

    pub fn read_csv<R: std::io::Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(reader);
        let dim = rdr.headers()?.len().saturating_sub(2);
        let (mut ids, mut coverage, mut flat) = (Vec::new(), Vec::new(), Vec::new());
        for rec in rdr.records() {
            let rec = rec?;
            let line = rec.position().map(|p| p.line()).unwrap_or(0);
            let bad = |m: String| Error::Parse {
                path: "centroids.csv".into(),
                line,
                message: m,
            };
            ids.push(rec[0].to_string());
            coverage.push(rec[1].parse().map_err(|e| bad(format!("coverage: {e}")))?);
            for x in rec.iter().skip(2) {
                flat.push(x.parse::<f64>().map_err(|e| bad(format!("component: {e}")))?);
            }
        }
        let centroids =
            Array2::from_shape_vec((ids.len(), dim), flat).map_err(|e| Error::Shape(e.to_string()))?;
        Ok(Self {
            ids,
            centroids,
            coverage,
        })
    }
}

/// Averages pooled subject vectors over every email where the employee is
/// sender or recipient.
pub fn node_centroids(records: &[EmailRecord], emb: &WordEmbeddings, roster: &OrgRoster) -> Result<NodeSemantics> {
    let n = roster.len();
    let mut sums = Array2::<f64>::zeros((n, emb.dim()));
    let mut coverage = vec![0usize; n];
    for r in records {
        let (pooled, all_oov) = pool_subject(&r.subject_tokens, emb);
        if all_oov {
            continue;
        }
        for id in [&r.sender, &r.recipient] {
            let i = roster
                .index_of(id)
                .ok_or_else(|| Error::Data(format!("email endpoint `{id}` missing from roster")))?;
            sums.row_mut(i).scaled_add(1.0, &pooled);
            coverage[i] += 1;
        }
    }
    for i in 0..n {
        if coverage[i] > 0 {
            let c = coverage[i] as f64;
            sums.row_mut(i).mapv_inplace(|x| x / c);
        }
    }
    let uncovered = coverage.iter().filter(|&&c| c == 0).count();
    if uncovered > 0 {
        log::warn!("{uncovered} employees have no pooled email and carry a zero centroid");
    }
    Ok(NodeSemantics {
        ids: roster.ids(),
        centroids: sums,
        coverage,
    })
}
