//! Small dense and sparse helpers shared by the graph, model and analytics code.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Cosine similarity; 0 when either vector is zero.
pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let (na, nb) = (norm(a), norm(b));
    if na == 0.0 || nb == 0.0 {
        return 0.0;
    }
    (dot(a, b) / (na * nb)).clamp(-1.0, 1.0)
}

pub fn cosine_view(a: ArrayView1<f64>, b: ArrayView1<f64>) -> f64 {
    let (na, nb) = (a.dot(&a).sqrt(), b.dot(&b).sqrt());
    if na == 0.0 || nb == 0.0 {
        return 0.0;
    }
    (a.dot(&b) / (na * nb)).clamp(-1.0, 1.0)
}

/// Compressed sparse row matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    pub n_rows: usize,
    pub n_cols: usize,
    pub row_ptr: Vec<usize>,
    pub col_idx: Vec<usize>,
    pub values: Vec<f64>,
}

impl CsrMatrix {
    /// Builds from triplets; duplicate coordinates are summed and columns
    /// within each row are sorted.
    pub fn from_triplets(n_rows: usize, n_cols: usize, triplets: &[(usize, usize, f64)]) -> Self {
        let mut rows: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n_rows];
        for &(i, j, v) in triplets {
            rows[i].push((j, v));
        }
        let mut row_ptr = Vec::with_capacity(n_rows + 1);
        let mut col_idx = Vec::new();
        let mut values = Vec::new();
        row_ptr.push(0);
        for mut r in rows {
            r.sort_by_key(|&(j, _)| j);
            let mut k = 0;
            while k < r.len() {
                let j = r[k].0;
                let mut v = 0.0;
                while k < r.len() && r[k].0 == j {
                    v += r[k].1;
                    k += 1;
                }
                col_idx.push(j);
                values.push(v);
            }
            row_ptr.push(col_idx.len());
        }
        Self {
            n_rows,
            n_cols,
            row_ptr,
            col_idx,
            values,
        }
    }

    pub fn identity(n: usize) -> Self {
        Self {
            n_rows: n,
            n_cols: n,
            row_ptr: (0..=n).collect(),
            col_idx: (0..n).collect(),
            values: vec![1.0; n],
        }
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let (a, b) = (self.row_ptr[i], self.row_ptr[i + 1]);
        self.col_idx[a..b].iter().copied().zip(self.values[a..b].iter().copied())
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (a, b) = (self.row_ptr[i], self.row_ptr[i + 1]);
        match self.col_idx[a..b].binary_search(&j) {
            Ok(k) => self.values[a + k],
            Err(_) => 0.0,
        }
    }

    /// `self · x` for a dense right-hand side.
    pub fn matmul(&self, x: ArrayView2<f64>) -> Array2<f64> {
        assert_eq!(self.n_cols, x.nrows(), "sparse matmul shape mismatch");
        let mut out = Array2::zeros((self.n_rows, x.ncols()));
        for i in 0..self.n_rows {
            let mut out_row = out.row_mut(i);
            for (j, v) in self.row(i) {
                out_row.scaled_add(v, &x.row(j));
            }
        }
        out
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        (0..self.n_rows)
            .map(|i| self.row(i).map(|(j, v)| v * x[j]).sum())
            .collect()
    }

    pub fn to_dense(&self) -> Array2<f64> {
        let mut d = Array2::zeros((self.n_rows, self.n_cols));
        for i in 0..self.n_rows {
            for (j, v) in self.row(i) {
                d[[i, j]] += v;
            }
        }
        d
    }
}

/// Leading principal components of the rows of `x` by power iteration with
/// deflation. Returns `(components, scores)`; each component is sign-fixed so
/// its largest-magnitude entry is positive.
pub fn pca(x: ArrayView2<f64>, k: usize) -> (Array2<f64>, Array2<f64>) {
    let (n, d) = x.dim();
    let mean = x.mean_axis(ndarray::Axis(0)).unwrap_or_else(|| Array1::zeros(d));
    let centered = &x - &mean;
    let mut cov = centered.t().dot(&centered);
    if n > 1 {
        cov /= (n - 1) as f64;
    }
    let mut comps = Array2::zeros((k, d));
    for c in 0..k {
        let v = top_eigenvector(&cov, 1e-12, 10_000);
        let lambda = v.dot(&cov.dot(&v));
        for a in 0..d {
            for b in 0..d {
                cov[[a, b]] -= lambda * v[a] * v[b];
            }
        }
        comps.row_mut(c).assign(&v);
    }
    let scores = centered.dot(&comps.t());
    (comps, scores)
}

fn top_eigenvector(m: &Array2<f64>, tol: f64, max_iter: usize) -> Array1<f64> {
    let d = m.nrows();
    // Deterministic start that is not orthogonal to typical leading vectors.
    let mut v = Array1::from_iter((0..d).map(|i| 1.0 + (i as f64 * 0.618_033_988_75).fract()));
    let n0 = v.dot(&v).sqrt();
    v /= n0;
    for _ in 0..max_iter {
        let mut w = m.dot(&v);
        let nw = w.dot(&w).sqrt();
        if nw == 0.0 {
            break;
        }
        w /= nw;
        let diff = (&w - &v).mapv(f64::abs).fold(0.0f64, |a, &b| a.max(b));
        v = w;
        if diff < tol {
            break;
        }
    }
    let pivot = v.iter().copied().fold(0.0f64, |a, b| if b.abs() > a.abs() { b } else { a });
    if pivot < 0.0 {
        v.mapv_inplace(|x| -x);
    }
    v
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn cosine_edge_cases() {
        assert_eq!(cosine(&[1.0, 0.0], &[0.0, 1.0]), 0.0);
        assert_eq!(cosine(&[0.0, 0.0], &[1.0, 1.0]), 0.0);
        assert!((cosine(&[1.0, 2.0], &[2.0, 4.0]) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn csr_sums_duplicates_and_multiplies() {
        let m = CsrMatrix::from_triplets(2, 2, &[(0, 1, 1.0), (0, 1, 2.0), (1, 0, 4.0)]);
        assert_eq!(m.get(0, 1), 3.0);
        assert_eq!(m.nnz(), 2);
        let x = array![[1.0, 2.0], [3.0, 4.0]];
        assert_eq!(m.matmul(x.view()), m.to_dense().dot(&x));
    }

    #[test]
    fn pca_finds_dominant_axis() {
        let x = array![[-2.0, 0.1], [-1.0, -0.1], [1.0, 0.1], [2.0, -0.1]];
        let (comps, scores) = pca(x.view(), 1);
        assert!((comps[[0, 0]].abs() - 1.0).abs() < 1e-3);
        assert!(scores[[0, 0]] < scores[[3, 0]]);
    }
}
