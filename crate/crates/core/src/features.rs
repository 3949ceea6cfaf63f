//! Node feature assembly and the validation analytics run on it:
//! silhouette, leader AUC, macro-F1 over feature combinations, k-means and
//! the cross-family similarity matrix.

use std::collections::BTreeMap;
use std::io::Write;

use ndarray::{s, Array1, Array2, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::centrality::CentralityVector;
use crate::embed::NodeSemantics;
use crate::error::{Error, Result};
use crate::linalg::{cosine_view, pca};
use crate::orgdata::OrgRoster;

pub const N_CENTRALITIES: usize = 4;

/// `x_i = [s_i | d_i c_i b_i e_i]` with the centrality columns min-max
/// normalized over nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeFeatures {
    pub ids: Vec<String>,
    pub matrix: Array2<f64>,
}

impl NodeFeatures {
    pub fn n(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn dim(&self) -> usize {
        self.matrix.ncols()
    }

    pub fn semantic_dim(&self) -> usize {
        self.dim() - N_CENTRALITIES
    }

    pub fn semantic(&self) -> ArrayView2<'_, f64> {
        self.matrix.slice(s![.., ..self.semantic_dim()])
    }

    /// Column index of a centrality in the fixed layout.
    pub fn column_of(&self, f: Feature) -> Option<usize> {
        let base = self.semantic_dim();
        match f {
            Feature::Semantic => None,
            Feature::Degree => Some(base),
            Feature::Closeness => Some(base + 1),
            Feature::Betweenness => Some(base + 2),
            Feature::Eigenvector => Some(base + 3),
        }
    }

    /// Columns belonging to `combo`, in layout order.
    pub fn combo_columns(&self, combo: Combo) -> Vec<usize> {
        let mut cols = Vec::new();
        for f in Feature::ALL {
            if combo.contains(f) {
                match self.column_of(f) {
                    None => cols.extend(0..self.semantic_dim()),
                    Some(c) => cols.push(c),
                }
            }
        }
        cols
    }

    pub fn select(&self, rows: &[usize], cols: &[usize]) -> Array2<f64> {
        Array2::from_shape_fn((rows.len(), cols.len()), |(r, c)| self.matrix[[rows[r], cols[c]]])
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header = vec!["employee_id".to_string()];
        header.extend((0..self.dim()).map(|k| format!("x{k}")));
        w.write_record(&header)?;
        for (i, id) in self.ids.iter().enumerate() {
            let mut row = vec![id.clone()];
            row.extend(self.matrix.row(i).iter().map(|v| format!("{v:e}")));
            w.write_record(&row)?;
        }
        w.flush().map_err(|e| Error::io("<features>", e))?;
        Ok(())
    }

    pub fn read_csv<R: std::io::Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(reader);
        let dim = rdr.headers()?.len().saturating_sub(1);
        let mut ids = Vec::new();
        let mut data = Vec::new();
        for row in rdr.records() {
            let row = row?;
            ids.push(row[0].to_string());
            for k in 1..=dim {
                data.push(row[k].parse::<f64>().map_err(|e| Error::Data(format!("features.csv: {e}")))?);
            }
        }
        let matrix = Array2::from_shape_vec((ids.len(), dim), data).map_err(|e| Error::Shape(e.to_string()))?;
        Ok(Self { ids, matrix })
    }
}

fn min_max(values: &[f64]) -> Vec<f64> {
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !(hi > lo) {
        return vec![0.0; values.len()];
    }
    values.iter().map(|v| (v - lo) / (hi - lo)).collect()
}

pub fn assemble_features(sem: &NodeSemantics, cent: &CentralityVector) -> Result<NodeFeatures> {
    if sem.ids != cent.ids {
        return Err(Error::Data(
            "semantic centroids and centralities cover different node sets".into(),
        ));
    }
    let (n, d) = sem.centroids.dim();
    let mut matrix = Array2::zeros((n, d + N_CENTRALITIES));
    matrix.slice_mut(s![.., ..d]).assign(&sem.centroids);
    for (k, col) in cent.columns().into_iter().enumerate() {
        for (i, v) in min_max(col).into_iter().enumerate() {
            matrix[[i, d + k]] = v;
        }
    }
    if matrix.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numeric("non-finite node feature".into()));
    }
    Ok(NodeFeatures {
        ids: sem.ids.clone(),
        matrix,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Feature {
    Semantic,
    Degree,
    Closeness,
    Betweenness,
    Eigenvector,
}

impl Feature {
    pub const ALL: [Feature; 5] = [
        Feature::Semantic,
        Feature::Degree,
        Feature::Closeness,
        Feature::Betweenness,
        Feature::Eigenvector,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Feature::Semantic => "s_i",
            Feature::Degree => "d_i",
            Feature::Closeness => "c_i",
            Feature::Betweenness => "b_i",
            Feature::Eigenvector => "e_i",
        }
    }

    fn bit(self) -> u8 {
        1 << (self as u8)
    }
}

/// Non-empty subset of the five feature groups.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Combo(u8);

impl Combo {
    pub fn new(features: &[Feature]) -> Self {
        Self(features.iter().fold(0, |m, f| m | f.bit()))
    }

    pub fn contains(self, f: Feature) -> bool {
        self.0 & f.bit() != 0
    }

    pub fn len(self) -> usize {
        self.0.count_ones() as usize
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    pub fn label(self) -> String {
        Feature::ALL
            .iter()
            .filter(|&&f| self.contains(f))
            .map(|f| f.name())
            .collect::<Vec<_>>()
            .join("+")
    }

    /// All 31 combinations: those with `s_i` first, then by size descending.
    pub fn all() -> Vec<Combo> {
        let mut v: Vec<Combo> = (1u8..32).map(Combo).collect();
        v.sort_by_key(|c| (!c.contains(Feature::Semantic), std::cmp::Reverse(c.len()), c.0.reverse_bits()));
        v
    }
}

fn euclid(a: ndarray::ArrayView1<f64>, b: ndarray::ArrayView1<f64>) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Mean silhouette with Euclidean distance; members of singleton clusters
/// contribute 0.
pub fn silhouette(x: ArrayView2<f64>, labels: &[usize]) -> Result<f64> {
    let n = x.nrows();
    if labels.len() != n {
        return Err(Error::Shape("silhouette: label count differs from rows".into()));
    }
    let k = labels.iter().copied().max().map_or(0, |m| m + 1);
    let mut sizes = vec![0usize; k];
    labels.iter().for_each(|&l| sizes[l] += 1);
    if n < 2 || sizes.iter().filter(|&&s| s > 0).count() < 2 {
        return Err(Error::Data("silhouette needs at least two non-empty labels".into()));
    }
    let mut total = 0.0;
    let mut sums = vec![0.0; k];
    for i in 0..n {
        sums.iter_mut().for_each(|v| *v = 0.0);
        for j in 0..n {
            if i != j {
                sums[labels[j]] += euclid(x.row(i), x.row(j));
            }
        }
        let own = labels[i];
        if sizes[own] < 2 {
            continue;
        }
        let a = sums[own] / (sizes[own] - 1) as f64;
        let b = (0..k)
            .filter(|&c| c != own && sizes[c] > 0)
            .map(|c| sums[c] / sizes[c] as f64)
            .fold(f64::INFINITY, f64::min);
        let m = a.max(b);
        if m > 0.0 {
            total += (b - a) / m;
        }
    }
    Ok(total / n as f64)
}

/// Average ranks, 1-based, with ties sharing their mean rank.
pub fn midranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &o in &order[i..=j] {
            ranks[o] = r;
        }
        i = j + 1;
    }
    ranks
}

/// Mann-Whitney AUC of `score` for `positive` against the rest.
pub fn role_auc(score: &[f64], positive: &[bool]) -> Result<f64> {
    if score.len() != positive.len() {
        return Err(Error::Shape("role_auc: length mismatch".into()));
    }
    let n_pos = positive.iter().filter(|&&p| p).count();
    let n_neg = positive.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::Data("role_auc needs both leaders and non-leaders".into()));
    }
    let ranks = midranks(score);
    let r_pos: f64 = ranks.iter().zip(positive).filter(|(_, &p)| p).map(|(r, _)| r).sum();
    let u = r_pos - (n_pos * (n_pos + 1)) as f64 / 2.0;
    Ok(u / (n_pos * n_neg) as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ClassifierConfig {
    pub epochs: usize,
    pub lr: f64,
    pub l2: f64,
    pub folds: usize,
}

impl Default for ClassifierConfig {
    fn default() -> Self {
        Self {
            epochs: 500,
            lr: 0.1,
            l2: 1e-4,
            folds: 5,
        }
    }
}

/// Fold index per sample; every class is spread round-robin over the folds
/// after a seeded shuffle.
pub fn stratified_folds(labels: &[usize], folds: usize, seed: u64) -> Result<Vec<usize>> {
    let k = labels.iter().copied().max().map_or(0, |m| m + 1);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = vec![0; labels.len()];
    for c in 0..k {
        let mut members: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == c).collect();
        if members.is_empty() {
            continue;
        }
        if members.len() < folds {
            return Err(Error::Data(format!(
                "class {c} has {} members, fewer than {folds} folds",
                members.len()
            )));
        }
        members.shuffle(&mut rng);
        for (r, &i) in members.iter().enumerate() {
            out[i] = r % folds;
        }
    }
    Ok(out)
}

/// Multinomial logistic regression trained by full-batch gradient descent.
#[derive(Debug, Clone)]
pub struct SoftmaxClassifier {
    /// `d × k` weights.
    pub weights: Array2<f64>,
    pub bias: Array1<f64>,
}

fn softmax_rows(z: &mut Array2<f64>) {
    for mut row in z.rows_mut() {
        let m = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        row.mapv_inplace(|v| (v - m).exp());
        let s = row.sum();
        row /= s;
    }
}

impl SoftmaxClassifier {
    pub fn fit(x: ArrayView2<f64>, y: &[usize], k: usize, cfg: &ClassifierConfig) -> Self {
        let (n, d) = x.dim();
        let mut weights = Array2::zeros((d, k));
        let mut bias = Array1::zeros(k);
        let mut onehot = Array2::zeros((n, k));
        for (i, &c) in y.iter().enumerate() {
            onehot[[i, c]] = 1.0;
        }
        for _ in 0..cfg.epochs {
            let mut p = x.dot(&weights) + &bias;
            softmax_rows(&mut p);
            p -= &onehot;
            p /= n as f64;
            let gw = x.t().dot(&p) + &weights * cfg.l2;
            let gb = p.sum_axis(Axis(0));
            weights.scaled_add(-cfg.lr, &gw);
            bias.scaled_add(-cfg.lr, &gb);
        }
        Self { weights, bias }
    }

    /// Arg-max class per row; ties go to the lowest class index.
    pub fn predict(&self, x: ArrayView2<f64>) -> Vec<usize> {
        let z = x.dot(&self.weights) + &self.bias;
        z.rows()
            .into_iter()
            .map(|r| {
                let mut best = 0;
                for c in 1..r.len() {
                    if r[c] > r[best] {
                        best = c;
                    }
                }
                best
            })
            .collect()
    }
}

/// Unweighted mean of per-class F1 over the classes present in `truth`.
pub fn macro_f1(truth: &[usize], pred: &[usize], k: usize) -> f64 {
    let mut tp = vec![0usize; k];
    let mut fp = vec![0usize; k];
    let mut fn_ = vec![0usize; k];
    for (&t, &p) in truth.iter().zip(pred) {
        if t == p {
            tp[t] += 1;
        } else {
            fp[p] += 1;
            fn_[t] += 1;
        }
    }
    let present: Vec<usize> = (0..k).filter(|&c| tp[c] + fn_[c] > 0).collect();
    if present.is_empty() {
        return 0.0;
    }
    present
        .iter()
        .map(|&c| 2.0 * tp[c] as f64 / (2 * tp[c] + fp[c] + fn_[c]) as f64)
        .sum::<f64>()
        / present.len() as f64
}

fn standardize(train: &mut Array2<f64>, test: &mut Array2<f64>) {
    let mean = train.mean_axis(Axis(0)).unwrap();
    let std = train.std_axis(Axis(0), 0.0).mapv(|s| if s > 0.0 { s } else { 1.0 });
    *train -= &mean;
    *train /= &std;
    *test -= &mean;
    *test /= &std;
}

/// Stratified k-fold macro-F1 of a softmax classifier on `x`, averaged over
/// folds. `folds` comes from [`stratified_folds`].
pub fn cross_validated_f1(x: ArrayView2<f64>, labels: &[usize], folds: &[usize], cfg: &ClassifierConfig) -> f64 {
    let k = labels.iter().copied().max().map_or(0, |m| m + 1);
    let mut total = 0.0;
    for f in 0..cfg.folds {
        let train: Vec<usize> = (0..labels.len()).filter(|&i| folds[i] != f).collect();
        let test: Vec<usize> = (0..labels.len()).filter(|&i| folds[i] == f).collect();
        let mut xtr = x.select(Axis(0), &train);
        let mut xte = x.select(Axis(0), &test);
        standardize(&mut xtr, &mut xte);
        let ytr: Vec<usize> = train.iter().map(|&i| labels[i]).collect();
        let yte: Vec<usize> = test.iter().map(|&i| labels[i]).collect();
        let clf = SoftmaxClassifier::fit(xtr.view(), &ytr, k, cfg);
        total += macro_f1(&yte, &clf.predict(xte.view()), k);
    }
    total / cfg.folds as f64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComboF1 {
    pub combo: String,
    pub features: Vec<Feature>,
    pub f1_family: f64,
    pub f1_role: f64,
}

/// Macro-F1 for job family and role over all 31 combinations, restricted to
/// `rows`. Combinations are evaluated on parallel threads.
pub fn combo_f1(
    features: &NodeFeatures,
    rows: &[usize],
    family: &[usize],
    role: &[usize],
    cfg: &ClassifierConfig,
    seed: u64,
) -> Result<Vec<ComboF1>> {
    let fam: Vec<usize> = rows.iter().map(|&i| family[i]).collect();
    let rol: Vec<usize> = rows.iter().map(|&i| role[i]).collect();
    let fam_folds = stratified_folds(&fam, cfg.folds, seed)?;
    let rol_folds = stratified_folds(&rol, cfg.folds, seed.wrapping_add(1))?;
    let combos = Combo::all();
    let threads = std::thread::available_parallelism().map_or(1, |n| n.get()).min(combos.len());
    let mut out: Vec<Option<ComboF1>> = vec![None; combos.len()];
    std::thread::scope(|scope| {
        for (t, chunk) in out.chunks_mut(combos.len().div_ceil(threads)).enumerate() {
            let start = t * combos.len().div_ceil(threads);
            let (combos, fam, rol, fam_folds, rol_folds) = (&combos, &fam, &rol, &fam_folds, &rol_folds);
            scope.spawn(move || {
                for (o, slot) in chunk.iter_mut().enumerate() {
                    let combo = combos[start + o];
                    let x = features.select(rows, &features.combo_columns(combo));
                    *slot = Some(ComboF1 {
                        combo: combo.label(),
                        features: Feature::ALL.into_iter().filter(|&f| combo.contains(f)).collect(),
                        f1_family: cross_validated_f1(x.view(), fam, fam_folds, cfg),
                        f1_role: cross_validated_f1(x.view(), rol, rol_folds, cfg),
                    });
                }
            });
        }
    });
    Ok(out.into_iter().map(Option::unwrap).collect())
}

/// Mean pairwise centroid cosine between families; the diagonal averages
/// over distinct intra-family pairs (1.0 for a single-member family).
pub fn family_similarity_matrix(centroids: ArrayView2<f64>, labels: &[usize], k: usize) -> Result<Array2<f64>> {
    let n = centroids.nrows();
    let mut sum = Array2::<f64>::zeros((k, k));
    let mut cnt = Array2::<f64>::zeros((k, k));
    for i in 0..n {
        for j in (i + 1)..n {
            let c = cosine_view(centroids.row(i), centroids.row(j));
            let (a, b) = (labels[i], labels[j]);
            sum[[a, b]] += c;
            cnt[[a, b]] += 1.0;
            if a != b {
                sum[[b, a]] += c;
                cnt[[b, a]] += 1.0;
            }
        }
    }
    let mut sizes = vec![0usize; k];
    labels.iter().for_each(|&l| sizes[l] += 1);
    if let Some(f) = sizes.iter().position(|&s| s == 0) {
        return Err(Error::Data(format!("family {f} has no covered node")));
    }
    Ok(Array2::from_shape_fn((k, k), |(a, b)| {
        if cnt[[a, b]] == 0.0 {
            1.0
        } else {
            sum[[a, b]] / cnt[[a, b]]
        }
    }))
}

#[derive(Debug, Clone, PartialEq)]
pub struct KMeansResult {
    pub labels: Vec<usize>,
    pub centers: Array2<f64>,
    pub inertia: f64,
}

fn sq_dist(a: ndarray::ArrayView1<f64>, b: ndarray::ArrayView1<f64>) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn kmeans_once(x: ArrayView2<f64>, k: usize, rng: &mut ChaCha8Rng, max_iter: usize) -> KMeansResult {
    let (n, d) = x.dim();
    let mut centers = Array2::zeros((k, d));
    centers.row_mut(0).assign(&x.row(rng.random_range(0..n)));
    let mut best_d: Vec<f64> = (0..n).map(|i| sq_dist(x.row(i), centers.row(0))).collect();
    for c in 1..k {
        let total: f64 = best_d.iter().sum();
        let pick = if total > 0.0 {
            let mut r = rng.random::<f64>() * total;
            let mut p = n - 1;
            for (i, &w) in best_d.iter().enumerate() {
                if r < w {
                    p = i;
                    break;
                }
                r -= w;
            }
            p
        } else {
            rng.random_range(0..n)
        };
        centers.row_mut(c).assign(&x.row(pick));
        for i in 0..n {
            best_d[i] = best_d[i].min(sq_dist(x.row(i), centers.row(c)));
        }
    }
    let mut labels = vec![usize::MAX; n];
    for _ in 0..max_iter {
        let mut changed = false;
        for i in 0..n {
            let mut best = 0;
            let mut bd = f64::INFINITY;
            for c in 0..k {
                let dd = sq_dist(x.row(i), centers.row(c));
                if dd < bd {
                    bd = dd;
                    best = c;
                }
            }
            if labels[i] != best {
                labels[i] = best;
                changed = true;
            }
        }
        if !changed {
            break;
        }
        let mut sums = Array2::<f64>::zeros((k, d));
        let mut counts = vec![0usize; k];
        for i in 0..n {
            sums.row_mut(labels[i]).scaled_add(1.0, &x.row(i));
            counts[labels[i]] += 1;
        }
        for c in 0..k {
            if counts[c] > 0 {
                centers.row_mut(c).assign(&(&sums.row(c) / counts[c] as f64));
            } else {
                // Empty cluster: move it onto the point farthest from its center.
                let far = (0..n)
                    .max_by(|&a, &b| {
                        sq_dist(x.row(a), centers.row(labels[a])).total_cmp(&sq_dist(x.row(b), centers.row(labels[b])))
                    })
                    .unwrap();
                centers.row_mut(c).assign(&x.row(far));
            }
        }
    }
    let inertia = (0..n).map(|i| sq_dist(x.row(i), centers.row(labels[i]))).sum();
    KMeansResult {
        labels,
        centers,
        inertia,
    }
}

/// Lloyd's algorithm with k-means++ seeding; the restart with the lowest
/// inertia is kept.
pub fn kmeans(x: ArrayView2<f64>, k: usize, restarts: usize, seed: u64) -> Result<KMeansResult> {
    if k == 0 || k > x.nrows() {
        return Err(Error::Config(format!("k-means needs 1 <= k <= {}, got {k}", x.nrows())));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best: Option<KMeansResult> = None;
    for _ in 0..restarts.max(1) {
        let r = kmeans_once(x, k, &mut rng, 300);
        if best.as_ref().is_none_or(|b| r.inertia < b.inertia) {
            best = Some(r);
        }
    }
    Ok(best.unwrap())
}

/// Rows are clusters, columns are reference labels.
pub fn contingency(clusters: &[usize], labels: &[usize], k_clusters: usize, k_labels: usize) -> Vec<Vec<usize>> {
    let mut t = vec![vec![0; k_labels]; k_clusters];
    for (&c, &l) in clusters.iter().zip(labels) {
        t[c][l] += 1;
    }
    t
}

pub fn adjusted_rand_index(table: &[Vec<usize>]) -> f64 {
    let c2 = |x: usize| (x * x.saturating_sub(1)) as f64 / 2.0;
    let n: usize = table.iter().flatten().sum();
    let sum_ij: f64 = table.iter().flatten().map(|&x| c2(x)).sum();
    let a: f64 = table.iter().map(|r| c2(r.iter().sum())).sum();
    let cols = table.first().map_or(0, Vec::len);
    let b: f64 = (0..cols).map(|j| c2(table.iter().map(|r| r[j]).sum())).sum();
    let expected = a * b / c2(n);
    let max = (a + b) / 2.0;
    if max == expected {
        return 1.0;
    }
    (sum_ij - expected) / (max - expected)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ValidationConfig {
    pub classifier: ClassifierConfig,
    pub kmeans_k: usize,
    pub kmeans_restarts: usize,
    pub seed: u64,
}

impl Default for ValidationConfig {
    fn default() -> Self {
        Self {
            classifier: ClassifierConfig::default(),
            kmeans_k: 5,
            kmeans_restarts: 10,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimilarityMatrix {
    pub families: Vec<String>,
    pub matrix: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KMeansAlignment {
    pub k: usize,
    pub inertia: f64,
    pub families: Vec<String>,
    /// Rows are clusters, columns follow `families`.
    pub contingency: Vec<Vec<usize>>,
    pub adjusted_rand: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub n_nodes: usize,
    pub silhouette_by_feature: BTreeMap<String, f64>,
    pub auc_by_feature: BTreeMap<String, f64>,
    pub f1_table: Vec<ComboF1>,
    pub family_similarity: SimilarityMatrix,
    pub kmeans_alignment: KMeansAlignment,
}

impl ValidationReport {
    pub fn write_f1_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["no", "s_i", "d_i", "c_i", "b_i", "e_i", "f1_job_family", "f1_role"])?;
        for (k, row) in self.f1_table.iter().enumerate() {
            let mut rec = vec![(k + 1).to_string()];
            rec.extend(Feature::ALL.iter().map(|f| u8::from(row.features.contains(f)).to_string()));
            rec.push(format!("{:.4}", row.f1_family));
            rec.push(format!("{:.4}", row.f1_role));
            w.write_record(&rec)?;
        }
        w.flush().map_err(|e| Error::io("<f1_table>", e))?;
        Ok(())
    }
}

/// Covered nodes (those with at least one in-vocabulary email).
pub fn covered_rows(sem: &NodeSemantics) -> Vec<usize> {
    (0..sem.ids.len()).filter(|&i| sem.coverage[i] > 0).collect()
}

/// Family silhouette and leader-vs-rest AUC of each feature group over the
/// covered nodes. The semantic block is scored by its first principal
/// component for the AUC.
pub fn feature_separation(
    features: &NodeFeatures,
    sem: &NodeSemantics,
    roster: &OrgRoster,
) -> Result<(BTreeMap<String, f64>, BTreeMap<String, f64>)> {
    let rows = covered_rows(sem);
    if rows.len() < 2 {
        return Err(Error::Data("fewer than two covered nodes".into()));
    }
    let fam_all = roster.family_labels();
    let leaders_all: Vec<bool> = roster.employees().iter().map(|e| e.is_leader()).collect();
    let fam: Vec<usize> = rows.iter().map(|&i| fam_all[i]).collect();
    let leaders: Vec<bool> = rows.iter().map(|&i| leaders_all[i]).collect();

    let semantic = features.select(&rows, &(0..features.semantic_dim()).collect::<Vec<_>>());
    let mut silhouette_by_feature = BTreeMap::new();
    let mut auc_by_feature = BTreeMap::new();
    silhouette_by_feature.insert(Feature::Semantic.name().into(), silhouette(semantic.view(), &fam)?);
    let (_, scores) = pca(semantic.view(), 1);
    auc_by_feature.insert(
        Feature::Semantic.name().into(),
        role_auc(&scores.column(0).to_vec(), &leaders)?,
    );
    for f in &Feature::ALL[1..] {
        let col = features.select(&rows, &[features.column_of(*f).unwrap()]);
        silhouette_by_feature.insert(f.name().into(), silhouette(col.view(), &fam)?);
        auc_by_feature.insert(f.name().into(), role_auc(&col.column(0).to_vec(), &leaders)?);
    }
    Ok((silhouette_by_feature, auc_by_feature))
}

/// Runs every analytic on the covered nodes.
pub fn validate(
    features: &NodeFeatures,
    sem: &NodeSemantics,
    roster: &OrgRoster,
    cfg: &ValidationConfig,
) -> Result<ValidationReport> {
    let rows = covered_rows(sem);
    let (silhouette_by_feature, auc_by_feature) = feature_separation(features, sem, roster)?;
    let families = roster.families();
    let fam_all = roster.family_labels();
    let role_all = roster.role_labels();
    let fam: Vec<usize> = rows.iter().map(|&i| fam_all[i]).collect();
    let semantic = features.select(&rows, &(0..features.semantic_dim()).collect::<Vec<_>>());

    let f1_table = combo_f1(features, &rows, &fam_all, &role_all, &cfg.classifier, cfg.seed)?;

    let sim = family_similarity_matrix(semantic.view(), &fam, families.len())?;
    let km = kmeans(semantic.view(), cfg.kmeans_k, cfg.kmeans_restarts, cfg.seed)?;
    let table = contingency(&km.labels, &fam, cfg.kmeans_k, families.len());
    Ok(ValidationReport {
        n_nodes: rows.len(),
        silhouette_by_feature,
        auc_by_feature,
        f1_table,
        family_similarity: SimilarityMatrix {
            families: families.clone(),
            matrix: sim.rows().into_iter().map(|r| r.to_vec()).collect(),
        },
        kmeans_alignment: KMeansAlignment {
            k: cfg.kmeans_k,
            inertia: km.inertia,
            families,
            adjusted_rand: adjusted_rand_index(&table),
            contingency: table,
        },
    })
}

/// Two-component PCA of the covered semantic centroids, for plotting.
pub fn write_pca_csv<W: Write>(sem: &NodeSemantics, roster: &OrgRoster, clusters: Option<&[usize]>, writer: W) -> Result<()> {
    let rows = covered_rows(sem);
    let x = sem.centroids.select(Axis(0), &rows);
    let (_, scores) = pca(x.view(), 2.min(x.ncols()));
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["employee_id", "job_family", "role", "pc1", "pc2", "cluster"])?;
    for (r, &i) in rows.iter().enumerate() {
        let e = roster.get(i);
        w.write_record([
            e.id.clone(),
            e.job_family.clone(),
            e.role.clone(),
            format!("{:e}", scores[[r, 0]]),
            format!("{:e}", scores.get([r, 1]).copied().unwrap_or(0.0)),
            clusters.map_or(String::new(), |c| c[r].to_string()),
        ])?;
    }
    w.flush().map_err(|e| Error::io("<pca>", e))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use proptest::prelude::*;
    use rand::Rng;
    use rand_distr::{Distribution, Normal};

    fn sem_of(centroids: Array2<f64>) -> NodeSemantics {
        let n = centroids.nrows();
        NodeSemantics {
            ids: (0..n).map(|i| format!("n{i}")).collect(),
            centroids,
            coverage: vec![1; n],
        }
    }

    fn cent_of(n: usize, cols: [Vec<f64>; 4]) -> CentralityVector {
        let [degree, closeness, betweenness, eigenvector] = cols;
        CentralityVector {
            ids: (0..n).map(|i| format!("n{i}")).collect(),
            degree,
            closeness,
            betweenness,
            eigenvector,
        }
    }

    #[test]
    fn assembly_layout_and_normalization() {
        let sem = sem_of(array![[1.0, -2.0], [3.0, 4.0], [0.5, 0.5]]);
        let cent = cent_of(
            3,
            [vec![2.0, 4.0, 3.0], vec![0.2; 3], vec![0.0, 10.0, 5.0], vec![1.0, 0.5, 0.0]],
        );
        let f = assemble_features(&sem, &cent).unwrap();
        assert_eq!(f.dim(), 6);
        assert_eq!(f.matrix.slice(s![.., ..2]), sem.centroids);
        assert_eq!(f.matrix[[1, 2]], 1.0);
        assert_eq!(f.matrix.column(3).to_vec(), vec![0.0; 3]);
        assert_eq!(f.matrix.column(4).to_vec(), vec![0.0, 1.0, 0.5]);
        assert_eq!(f.matrix.column(5).to_vec(), vec![1.0, 0.5, 0.0]);
    }

    #[test]
    fn assembly_rejects_mismatched_nodes() {
        let sem = sem_of(array![[1.0], [2.0]]);
        let mut cent = cent_of(2, [vec![0.0; 2], vec![0.0; 2], vec![0.0; 2], vec![0.0; 2]]);
        cent.ids[1] = "other".into();
        assert!(assemble_features(&sem, &cent).is_err());
    }

    #[test]
    fn feature_csv_round_trip() {
        let sem = sem_of(array![[1.0, -2.0], [3.0, 4.0]]);
        let cent = cent_of(2, [vec![1.0, 2.0], vec![0.1, 0.3], vec![0.0, 1.0], vec![0.7, 1.0]]);
        let f = assemble_features(&sem, &cent).unwrap();
        let mut buf = Vec::new();
        f.write_csv(&mut buf).unwrap();
        assert_eq!(NodeFeatures::read_csv(buf.as_slice()).unwrap(), f);
    }

    #[test]
    fn there_are_31_distinct_combos_semantic_first() {
        let all = Combo::all();
        assert_eq!(all.len(), 31);
        let labels: std::collections::HashSet<String> = all.iter().map(|c| c.label()).collect();
        assert_eq!(labels.len(), 31);
        assert!(all[..16].iter().all(|c| c.contains(Feature::Semantic)));
        assert_eq!(all[0].len(), 5);
        assert_eq!(all[15].label(), "s_i");
        assert_eq!(all[16].label(), "d_i+c_i+b_i+e_i");
    }

    #[test]
    fn silhouette_of_six_points_by_hand() {
        // Per-point values 19/22, 9/10, 5/6, mirrored for the second cluster.
        let x = array![[0.0], [1.0], [2.0], [10.0], [11.0], [12.0]];
        let s = silhouette(x.view(), &[0, 0, 0, 1, 1, 1]).unwrap();
        assert!((s - 857.0 / 990.0).abs() < 1e-12);
    }

    #[test]
    fn silhouette_blobs_and_random_labels() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let noise = Normal::new(0.0, 0.1).unwrap();
        let x = Array2::from_shape_fn((40, 3), |(i, _)| if i < 20 { 0.0 } else { 10.0 } + noise.sample(&mut rng));
        let labels: Vec<usize> = (0..40).map(|i| usize::from(i >= 20)).collect();
        assert!(silhouette(x.view(), &labels).unwrap() > 0.9);

        let mut mean = 0.0;
        for seed in 0..10 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let blob = Array2::from_shape_fn((60, 2), |_| noise.sample(&mut rng));
            let random: Vec<usize> = (0..60).map(|_| rng.random_range(0..3)).collect();
            mean += silhouette(blob.view(), &random).unwrap() / 10.0;
        }
        assert!(mean.abs() < 0.1, "{mean}");
    }

    #[test]
    fn silhouette_errors_and_singletons() {
        let x = array![[0.0], [1.0], [5.0]];
        assert!(silhouette(x.view(), &[0, 0, 0]).is_err());
        // The singleton point contributes 0.
        let s = silhouette(x.view(), &[0, 0, 1]).unwrap();
        let p0 = 1.0 - 1.0 / 5.0;
        let p1 = 1.0 - 1.0 / 4.0;
        assert!((s - (p0 + p1) / 3.0).abs() < 1e-12);
    }

    fn auc_brute(score: &[f64], pos: &[bool]) -> f64 {
        let mut wins = 0.0;
        let mut pairs = 0.0;
        for i in 0..score.len() {
            for j in 0..score.len() {
                if pos[i] && !pos[j] {
                    pairs += 1.0;
                    if score[i] > score[j] {
                        wins += 1.0;
                    } else if score[i] == score[j] {
                        wins += 0.5;
                    }
                }
            }
        }
        wins / pairs
    }

    #[test]
    fn auc_examples() {
        assert_eq!(role_auc(&[0.1, 0.2, 0.8, 0.9], &[false, false, true, true]).unwrap(), 1.0);
        assert_eq!(role_auc(&[1.0; 4], &[false, true, false, true]).unwrap(), 0.5);
        assert!(role_auc(&[1.0, 2.0], &[true, true]).is_err());
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..20 {
            // Coarse values so ties occur.
            let score: Vec<f64> = (0..20).map(|_| rng.random_range(0..6) as f64).collect();
            let mut pos: Vec<bool> = (0..20).map(|_| rng.random_bool(0.3)).collect();
            pos[0] = true;
            pos[1] = false;
            assert!((role_auc(&score, &pos).unwrap() - auc_brute(&score, &pos)).abs() < 1e-12);
        }
    }

    #[test]
    fn macro_f1_examples() {
        assert_eq!(macro_f1(&[0, 1, 2], &[0, 1, 2], 3), 1.0);
        // Class 0: tp 1 fp 1 fn 0 -> 2/3; class 1: tp 0 fn 1 -> 0.
        assert!((macro_f1(&[0, 1], &[0, 0], 2) - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn folds_are_stratified() {
        let labels: Vec<usize> = (0..53).map(|i| i % 3).collect();
        let folds = stratified_folds(&labels, 5, 1).unwrap();
        for f in 0..5 {
            for c in 0..3 {
                assert!((0..53).any(|i| folds[i] == f && labels[i] == c));
            }
        }
        assert!(stratified_folds(&[0, 0, 0, 0, 0, 1, 1], 5, 1).is_err());
    }

    fn planted_features(n: usize, rng: &mut ChaCha8Rng) -> (NodeFeatures, Vec<usize>) {
        let labels: Vec<usize> = (0..n).map(|i| i % 2).collect();
        let mut m = Array2::from_shape_fn((n, 7), |_| rng.random::<f64>());
        for i in 0..n {
            // Degree column (index 3) separates the classes with a gap.
            m[[i, 3]] = if labels[i] == 0 { 0.4 * rng.random::<f64>() } else { 0.6 + 0.4 * rng.random::<f64>() };
        }
        let ids = (0..n).map(|i| format!("n{i}")).collect();
        (NodeFeatures { ids, matrix: m }, labels)
    }

    #[test]
    fn planted_column_is_learned() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let (f, labels) = planted_features(100, &mut rng);
        let x = f.select(&(0..100).collect::<Vec<_>>(), &f.combo_columns(Combo::new(&[Feature::Degree])));
        let folds = stratified_folds(&labels, 5, 0).unwrap();
        let f1 = cross_validated_f1(x.view(), &labels, &folds, &ClassifierConfig::default());
        assert!(f1 > 0.95, "{f1}");
    }

    #[test]
    fn random_labels_score_near_chance() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let x = Array2::from_shape_fn((300, 4), |_| rng.random::<f64>());
        let labels: Vec<usize> = (0..300).map(|i| i % 3).collect();
        let folds = stratified_folds(&labels, 5, 0).unwrap();
        let f1 = cross_validated_f1(x.view(), &labels, &folds, &ClassifierConfig::default());
        assert!((f1 - 1.0 / 3.0).abs() < 0.1, "{f1}");
    }

    #[test]
    fn family_similarity_examples() {
        let same = Array2::from_elem((4, 3), 1.0);
        let m = family_similarity_matrix(same.view(), &[0, 0, 1, 1], 2).unwrap();
        assert!(m.iter().all(|&v| (v - 1.0).abs() < 1e-12));
        let orth = array![[1.0, 0.0], [2.0, 0.0], [0.0, 1.0], [0.0, 3.0]];
        let m = family_similarity_matrix(orth.view(), &[0, 0, 1, 1], 2).unwrap();
        assert_eq!(m[[0, 1]], 0.0);
        assert_eq!(m[[1, 0]], 0.0);
        assert!(family_similarity_matrix(orth.view(), &[0, 0, 0, 0], 2).is_err());
    }

    #[test]
    fn kmeans_recovers_blobs_and_is_deterministic() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let noise = Normal::new(0.0, 0.3).unwrap();
        let plant: Vec<usize> = (0..100).map(|i| i % 5).collect();
        let x = Array2::from_shape_fn((100, 4), |(i, d)| if d == plant[i] % 4 { 10.0 * (1 + plant[i] / 4) as f64 } else { 0.0 } + noise.sample(&mut rng));
        let a = kmeans(x.view(), 5, 10, 1).unwrap();
        let ari = adjusted_rand_index(&contingency(&a.labels, &plant, 5, 5));
        assert!(ari > 0.9, "{ari}");
        assert_eq!(kmeans(x.view(), 5, 10, 1).unwrap(), a);

        let small = x.slice(s![..6, ..]).to_owned();
        assert!(kmeans(small.view(), 6, 3, 0).unwrap().inertia.abs() < 1e-20);
        assert!(kmeans(small.view(), 7, 3, 0).is_err());
    }

    #[test]
    fn ari_of_identical_partitions_is_one() {
        let t = contingency(&[0, 0, 1, 1, 2], &[1, 1, 0, 0, 2], 3, 3);
        assert!((adjusted_rand_index(&t) - 1.0).abs() < 1e-12);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(100))]

        #[test]
        fn auc_invariant_under_increasing_transform(
            vals in prop::collection::vec(-5.0f64..5.0, 4..30),
            flags in prop::collection::vec(any::<bool>(), 30),
        ) {
            let mut pos: Vec<bool> = flags[..vals.len()].to_vec();
            pos[0] = true;
            pos[1] = false;
            let a = role_auc(&vals, &pos).unwrap();
            let t: Vec<f64> = vals.iter().map(|v| (0.7 * v).exp() + 3.0).collect();
            prop_assert!((a - role_auc(&t, &pos).unwrap()).abs() < 1e-12);
            prop_assert!((0.0..=1.0).contains(&a));
        }

        #[test]
        fn silhouette_invariant_under_isometry(
            pts in prop::collection::vec((-3.0f64..3.0, -3.0f64..3.0), 6..20),
            theta in 0.0f64..6.28,
            shift in (-10.0f64..10.0, -10.0f64..10.0),
        ) {
            let n = pts.len();
            let x = Array2::from_shape_fn((n, 2), |(i, d)| if d == 0 { pts[i].0 } else { pts[i].1 });
            let (c, s) = (theta.cos(), theta.sin());
            let y = Array2::from_shape_fn((n, 2), |(i, d)| {
                let (a, b) = pts[i];
                if d == 0 { c * a - s * b + shift.0 } else { s * a + c * b + shift.1 }
            });
            let labels: Vec<usize> = (0..n).map(|i| i % 3).collect();
            let sx = silhouette(x.view(), &labels).unwrap();
            prop_assert!((-1.0..=1.0).contains(&sx));
            prop_assert!((sx - silhouette(y.view(), &labels).unwrap()).abs() < 1e-9);
        }

        #[test]
        fn similarity_matrix_is_symmetric_and_bounded(
            vals in prop::collection::vec(-1.0f64..1.0, 30),
        ) {
            let x = Array2::from_shape_vec((10, 3), vals).unwrap();
            let labels: Vec<usize> = (0..10).map(|i| i % 3).collect();
            let m = family_similarity_matrix(x.view(), &labels, 3).unwrap();
            for a in 0..3 {
                for b in 0..3 {
                    prop_assert_eq!(m[[a, b]], m[[b, a]]);
                    prop_assert!(m[[a, b]].abs() <= 1.0);
                }
            }
        }

        #[test]
        fn assembled_centralities_lie_in_unit_interval(
            vals in prop::collection::vec(0.0f64..50.0, 32),
        ) {
            let sem = sem_of(Array2::zeros((8, 2)));
            let col = |k: usize| vals[k * 8..(k + 1) * 8].to_vec();
            let f = assemble_features(&sem, &cent_of(8, [col(0), col(1), col(2), col(3)])).unwrap();
            prop_assert!(f.matrix.slice(s![.., 2..]).iter().all(|v| (0.0..=1.0).contains(v)));
        }
    }
}
