use std::collections::VecDeque;
use std::fmt::Write as _;

use crate::error::FemError;

/// Square matrix in compressed sparse row storage with sorted column indices.
#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    n: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
}

impl CsrMatrix {
    /// Sums duplicate entries.
    pub fn from_triplets(n: usize, triplets: &[(usize, usize, f64)]) -> Self {
        let mut rows: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
        for &(i, j, v) in triplets {
            assert!(i < n && j < n, "triplet ({i}, {j}) out of range for n = {n}");
            rows[i].push((j, v));
        }
        let mut row_ptr = Vec::with_capacity(n + 1);
        let mut col_idx = Vec::new();
        let mut values = Vec::new();
        row_ptr.push(0);
        for mut row in rows {
            row.sort_by_key(|e| e.0);
            for (j, v) in row {
                if col_idx.len() > *row_ptr.last().unwrap() && *col_idx.last().unwrap() == j {
                    *values.last_mut().unwrap() += v;
                } else {
                    col_idx.push(j);
                    values.push(v);
                }
            }
            row_ptr.push(col_idx.len());
        }
        CsrMatrix {
            n,
            row_ptr,
            col_idx,
            values,
        }
    }

    pub(crate) fn from_raw(n: usize, row_ptr: Vec<usize>, col_idx: Vec<usize>, values: Vec<f64>) -> Self {
        debug_assert_eq!(row_ptr.len(), n + 1);
        debug_assert_eq!(col_idx.len(), values.len());
        CsrMatrix {
            n,
            row_ptr,
            col_idx,
            values,
        }
    }

    pub fn identity(n: usize) -> Self {
        CsrMatrix {
            n,
            row_ptr: (0..=n).collect(),
            col_idx: (0..n).collect(),
            values: vec![1.0; n],
        }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        self.col_idx[r.clone()].iter().copied().zip(self.values[r].iter().copied())
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        match self.col_idx[r.clone()].binary_search(&j) {
            Ok(k) => self.values[r.start + k],
            Err(_) => 0.0,
        }
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.n];
        self.mul_vec_into(x, &mut y);
        y
    }

    pub fn mul_vec_into(&self, x: &[f64], y: &mut [f64]) {
        for (i, yi) in y.iter_mut().enumerate() {
            let r = self.row_ptr[i]..self.row_ptr[i + 1];
            *yi = self.col_idx[r.clone()]
                .iter()
                .zip(&self.values[r])
                .map(|(&j, &v)| v * x[j])
                .sum();
        }
    }

    /// `x^T A y`
    pub fn bilinear(&self, x: &[f64], y: &[f64]) -> f64 {
        (0..self.n).map(|i| x[i] * self.row(i).map(|(j, v)| v * y[j]).sum::<f64>()).sum()
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.get(i, i)).collect()
    }

    /// Largest `|A_ij - A_ji|`.
    pub fn asymmetry(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for i in 0..self.n {
            for (j, v) in self.row(i) {
                worst = worst.max((v - self.get(j, i)).abs());
            }
        }
        worst
    }

    pub fn scaled(&self, s: f64) -> Self {
        let mut m = self.clone();
        m.values.iter_mut().for_each(|v| *v *= s);
        m
    }

    /// `self + s * other` for matrices sharing the same sparsity pattern.
    pub fn add_scaled_same_pattern(&self, s: f64, other: &CsrMatrix) -> Self {
        assert!(
            self.row_ptr == other.row_ptr && self.col_idx == other.col_idx,
            "sparsity patterns differ"
        );
        let mut m = self.clone();
        for (a, b) in m.values.iter_mut().zip(&other.values) {
            *a += s * b;
        }
        m
    }

    /// Replaces the rows and columns of every flagged index by the identity.
    pub fn eliminate_symmetric(&self, fixed: &[bool]) -> Self {
        let mut m = self.clone();
        for i in 0..self.n {
            let r = m.row_ptr[i]..m.row_ptr[i + 1];
            for k in r {
                let j = m.col_idx[k];
                if fixed[i] || fixed[j] {
                    m.values[k] = if i == j { 1.0 } else { 0.0 };
                }
            }
        }
        m
    }

    /// Coordinate text dump, one `i j value` line per stored entry.
    pub fn to_coordinate_text(&self) -> String {
        let mut s = String::new();
        for i in 0..self.n {
            for (j, v) in self.row(i) {
                let _ = writeln!(s, "{i} {j} {v:.16e}");
            }
        }
        s
    }

    /// Reverse Cuthill-McKee ordering of the symmetric sparsity graph.
    /// `perm[k]` is the original index placed at position `k`.
    pub fn reverse_cuthill_mckee(&self) -> Vec<usize> {
        let n = self.n;
        let degree: Vec<usize> = (0..n).map(|i| self.row(i).filter(|&(j, _)| j != i).count()).collect();
        let mut visited = vec![false; n];
        let mut order = Vec::with_capacity(n);
        while order.len() < n {
            let seed = (0..n)
                .filter(|&i| !visited[i])
                .min_by_key(|&i| (degree[i], i))
                .expect("unvisited vertex exists");
            let start = self.pseudo_peripheral(seed, &degree);
            visited[start] = true;
            let mut queue = VecDeque::from([start]);
            while let Some(v) = queue.pop_front() {
                order.push(v);
                let mut nbrs: Vec<usize> = self
                    .row(v)
                    .map(|(j, _)| j)
                    .filter(|&j| j != v && !visited[j])
                    .collect();
                nbrs.sort_by_key(|&j| (degree[j], j));
                for j in nbrs {
                    visited[j] = true;
                    queue.push_back(j);
                }
            }
        }
        order.reverse();
        order
    }

    fn pseudo_peripheral(&self, seed: usize, degree: &[usize]) -> usize {
        let mut root = seed;
        let mut best_depth = 0;
        for _ in 0..8 {
            let (depth, last_level) = self.bfs_levels(root);
            if depth <= best_depth && best_depth > 0 {
                break;
            }
            best_depth = depth;
            let candidate = *last_level
                .iter()
                .min_by_key(|&&j| (degree[j], j))
                .expect("last level is non-empty");
            if candidate == root {
                break;
            }
            root = candidate;
        }
        root
    }

    fn bfs_levels(&self, root: usize) -> (usize, Vec<usize>) {
        let mut level = vec![usize::MAX; self.n];
        level[root] = 0;
        let mut frontier = vec![root];
        let mut depth = 0;
        loop {
            let mut next = Vec::new();
            for &v in &frontier {
                for (j, _) in self.row(v) {
                    if level[j] == usize::MAX {
                        level[j] = depth + 1;
                        next.push(j);
                    }
                }
            }
            if next.is_empty() {
                return (depth, frontier);
            }
            depth += 1;
            frontier = next;
        }
    }
}

/// Envelope (profile) Cholesky factorization `P A P^T = L L^T` under an RCM ordering.
#[derive(Debug, Clone)]
pub struct EnvelopeCholesky {
    perm: Vec<usize>,
    /// First stored column of each row of `L` (permuted numbering).
    first: Vec<usize>,
    /// Offset of row `i` in `data`; row `i` holds columns `first[i]..=i`.
    start: Vec<usize>,
    data: Vec<f64>,
}

impl EnvelopeCholesky {
    pub fn factor(a: &CsrMatrix) -> Result<Self, FemError> {
        let n = a.dim();
        let perm = a.reverse_cuthill_mckee();
        let mut inv = vec![0; n];
        for (k, &p) in perm.iter().enumerate() {
            inv[p] = k;
        }
        let mut first: Vec<usize> = (0..n).collect();
        for (orig_i, &i) in inv.iter().enumerate() {
            for (orig_j, _) in a.row(orig_i) {
                let j = inv[orig_j];
                if j < i {
                    first[i] = first[i].min(j);
                }
            }
        }
        let mut start = Vec::with_capacity(n + 1);
        start.push(0);
        for i in 0..n {
            start.push(start[i] + (i - first[i] + 1));
        }
        let mut data = vec![0.0; start[n]];
        for (orig_i, &i) in inv.iter().enumerate() {
            for (orig_j, v) in a.row(orig_i) {
                let j = inv[orig_j];
                if j <= i {
                    data[start[i] + j - first[i]] += v;
                }
            }
        }

        for i in 0..n {
            let fi = first[i];
            for j in fi..i {
                let fj = first[j];
                let k0 = fi.max(fj);
                let (head, row_i) = data.split_at_mut(start[i]);
                let row_j = &head[start[j]..start[j + 1]];
                let li = &row_i[..i - fi + 1];
                let dot: f64 = li[k0 - fi..j - fi]
                    .iter()
                    .zip(&row_j[k0 - fj..j - fj])
                    .map(|(x, y)| x * y)
                    .sum();
                let ljj = row_j[j - fj];
                row_i[j - fi] = (row_i[j - fi] - dot) / ljj;
            }
            let row_i = &mut data[start[i]..start[i + 1]];
            let len = i - fi;
            let sq: f64 = row_i[..len].iter().map(|x| x * x).sum();
            let pivot = row_i[len] - sq;
            if !(pivot > 0.0) {
                return Err(FemError::NotPositiveDefinite {
                    row: perm[i],
                    pivot,
                });
            }
            row_i[len] = pivot.sqrt();
        }
        Ok(EnvelopeCholesky {
            perm,
            first,
            start,
            data,
        })
    }

    pub fn dim(&self) -> usize {
        self.perm.len()
    }

    /// Number of stored factor entries.
    pub fn profile_size(&self) -> usize {
        self.data.len()
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let n = self.dim();
        let mut y: Vec<f64> = self.perm.iter().map(|&p| b[p]).collect();
        for i in 0..n {
            let fi = self.first[i];
            let row = &self.data[self.start[i]..self.start[i + 1]];
            let dot: f64 = row[..i - fi].iter().zip(&y[fi..i]).map(|(l, x)| l * x).sum();
            y[i] = (y[i] - dot) / row[i - fi];
        }
        for i in (0..n).rev() {
            let fi = self.first[i];
            let row = &self.data[self.start[i]..self.start[i + 1]];
            y[i] /= row[i - fi];
            let xi = y[i];
            for (yk, l) in y[fi..i].iter_mut().zip(&row[..i - fi]) {
                *yk -= l * xi;
            }
        }
        let mut x = vec![0.0; n];
        for (k, &p) in self.perm.iter().enumerate() {
            x[p] = y[k];
        }
        x
    }
}

/// Outcome of a conjugate-gradient run.
#[derive(Debug, Clone, PartialEq)]
pub struct CgReport {
    pub iterations: usize,
    pub relative_residual: f64,
}

/// Jacobi-preconditioned conjugate gradients from a zero initial guess.
/// Convergence means `||b - A x|| <= tol * ||b||`.
pub fn pcg(a: &CsrMatrix, b: &[f64], tol: f64, max_iter: usize) -> Result<(Vec<f64>, CgReport), FemError> {
    let n = a.dim();
    if b.len() != n {
        return Err(FemError::DimensionMismatch {
            expected: n,
            found: b.len(),
        });
    }
    let bnorm = dot(b, b).sqrt();
    let mut x = vec![0.0; n];
    if bnorm == 0.0 {
        return Ok((
            x,
            CgReport {
                iterations: 0,
                relative_residual: 0.0,
            },
        ));
    }
    let inv_diag: Vec<f64> = a
        .diagonal()
        .into_iter()
        .map(|d| if d > 0.0 { 1.0 / d } else { 1.0 })
        .collect();
    let mut r = b.to_vec();
    let mut z: Vec<f64> = r.iter().zip(&inv_diag).map(|(r, d)| r * d).collect();
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    let mut ap = vec![0.0; n];
    let mut rel = 1.0;
    for it in 0..max_iter {
        a.mul_vec_into(&p, &mut ap);
        let pap = dot(&p, &ap);
        if pap <= 0.0 {
            return Err(FemError::NotConverged {
                iterations: it,
                residual: rel,
            });
        }
        let alpha = rz / pap;
        for k in 0..n {
            x[k] += alpha * p[k];
            r[k] -= alpha * ap[k];
        }
        rel = dot(&r, &r).sqrt() / bnorm;
        if rel <= tol {
            // Confirm with the true residual.
            let ax = a.mul_vec(&x);
            let true_rel = ax.iter().zip(b).map(|(u, v)| (v - u) * (v - u)).sum::<f64>().sqrt() / bnorm;
            if true_rel <= tol {
                return Ok((
                    x,
                    CgReport {
                        iterations: it + 1,
                        relative_residual: true_rel,
                    },
                ));
            }
        }
        for k in 0..n {
            z[k] = r[k] * inv_diag[k];
        }
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for k in 0..n {
            p[k] = z[k] + beta * p[k];
        }
    }
    Err(FemError::NotConverged {
        iterations: max_iter,
        residual: rel,
    })
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}
