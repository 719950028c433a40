//! Symmetric sparse matrices and an envelope (skyline) Cholesky factorization.

use std::collections::VecDeque;

/// Symmetric matrix in compressed sparse row form, both triangles stored,
/// column indices sorted within each row.
#[derive(Debug, Clone, PartialEq)]
pub struct SymmetricCsr {
    n: usize,
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<f64>,
}

impl SymmetricCsr {
    /// Sums duplicate `(row, col, value)` entries. The caller supplies both triangles.
    pub fn from_triplets(n: usize, mut triplets: Vec<(usize, usize, f64)>) -> Self {
        triplets.sort_by_key(|&(i, j, _)| (i, j));
        let mut row_ptr = vec![0usize; n + 1];
        let mut cols = Vec::with_capacity(triplets.len());
        let mut vals: Vec<f64> = Vec::with_capacity(triplets.len());
        let mut last: Option<(usize, usize)> = None;
        for (i, j, v) in triplets {
            if last == Some((i, j)) {
                *vals.last_mut().unwrap() += v;
            } else {
                cols.push(j);
                vals.push(v);
                row_ptr[i + 1] += 1;
                last = Some((i, j));
            }
        }
        for i in 0..n {
            row_ptr[i + 1] += row_ptr[i];
        }
        Self { n, row_ptr, cols, vals }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let range = self.row_ptr[i]..self.row_ptr[i + 1];
        self.cols[range.clone()].iter().copied().zip(self.vals[range].iter().copied())
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let range = self.row_ptr[i]..self.row_ptr[i + 1];
        match self.cols[range.clone()].binary_search(&j) {
            Ok(k) => self.vals[range.start + k],
            Err(_) => 0.0,
        }
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.get(i, i)).collect()
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        (0..self.n).map(|i| self.row(i).map(|(j, v)| v * x[j]).sum()).collect()
    }

    /// `x^T A x`.
    pub fn quadratic_form(&self, x: &[f64]) -> f64 {
        self.mul_vec(x).iter().zip(x).map(|(a, b)| a * b).sum()
    }

    /// Reverse Cuthill-McKee ordering; `perm[new] = old`.
    pub fn reverse_cuthill_mckee(&self) -> Vec<usize> {
        let degree: Vec<usize> = (0..self.n).map(|i| self.row_ptr[i + 1] - self.row_ptr[i]).collect();
        let mut visited = vec![false; self.n];
        let mut order = Vec::with_capacity(self.n);
        while order.len() < self.n {
            let start = (0..self.n).filter(|&i| !visited[i]).min_by_key(|&i| (degree[i], i)).unwrap();
            visited[start] = true;
            let mut queue = VecDeque::from([start]);
            while let Some(v) = queue.pop_front() {
                order.push(v);
                let mut next: Vec<usize> = self.row(v).map(|(j, _)| j).filter(|&j| !visited[j]).collect();
                next.sort_by_key(|&j| (degree[j], j));
                for j in next {
                    visited[j] = true;
                    queue.push_back(j);
                }
            }
        }
        order.reverse();
        order
    }
}

/// Cholesky factor of a symmetric positive definite matrix in envelope storage,
/// computed under a symmetric permutation.
#[derive(Debug, Clone)]
pub struct EnvelopeCholesky {
    perm: Vec<usize>,
    first: Vec<usize>,
    offsets: Vec<usize>,
    values: Vec<f64>,
}

impl EnvelopeCholesky {
    /// Factors `A + shift * diag(d)`. Returns `None` if a pivot is not positive.
    pub fn factor_shifted(a: &SymmetricCsr, shift: f64, d: &[f64], perm: Vec<usize>) -> Option<Self> {
        let n = a.dim();
        let mut inverse = vec![0usize; n];
        for (new, &old) in perm.iter().enumerate() {
            inverse[old] = new;
        }
        let mut first: Vec<usize> = (0..n).collect();
        for (new, &old) in perm.iter().enumerate() {
            for (j, _) in a.row(old) {
                let jn = inverse[j];
                if jn < first[new] {
                    first[new] = jn;
                }
            }
        }
        let mut offsets = vec![0usize; n + 1];
        for i in 0..n {
            offsets[i + 1] = offsets[i] + (i - first[i] + 1);
        }
        let mut values = vec![0.0; offsets[n]];
        for (new, &old) in perm.iter().enumerate() {
            for (j, v) in a.row(old) {
                let jn = inverse[j];
                if jn <= new {
                    values[offsets[new] + jn - first[new]] += v;
                }
            }
            values[offsets[new] + new - first[new]] += shift * d[old];
        }

        for i in 0..n {
            let fi = first[i];
            for j in fi..i {
                let fj = first[j];
                let start = fi.max(fj);
                let mut sum = values[offsets[i] + j - fi];
                for k in start..j {
                    sum -= values[offsets[i] + k - fi] * values[offsets[j] + k - fj];
                }
                values[offsets[i] + j - fi] = sum / values[offsets[j] + j - fj];
            }
            let mut diag = values[offsets[i] + i - fi];
            for k in fi..i {
                let l = values[offsets[i] + k - fi];
                diag -= l * l;
            }
            if !(diag > 0.0) {
                return None;
            }
            values[offsets[i] + i - fi] = diag.sqrt();
        }
        Some(Self { perm, first, offsets, values })
    }

    /// Solves `(A + shift D) x = b`.
    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let n = self.perm.len();
        let mut y: Vec<f64> = self.perm.iter().map(|&old| b[old]).collect();
        for i in 0..n {
            let fi = self.first[i];
            let row = &self.values[self.offsets[i]..self.offsets[i + 1]];
            let mut sum = y[i];
            for k in fi..i {
                sum -= row[k - fi] * y[k];
            }
            y[i] = sum / row[i - fi];
        }
        for i in (0..n).rev() {
            let fi = self.first[i];
            let row = &self.values[self.offsets[i]..self.offsets[i + 1]];
            y[i] /= row[i - fi];
            let xi = y[i];
            for k in fi..i {
                y[k] -= row[k - fi] * xi;
            }
        }
        let mut x = vec![0.0; n];
        for (new, &old) in self.perm.iter().enumerate() {
            x[old] = y[new];
        }
        x
    }

    /// Number of stored factor entries.
    pub fn envelope_size(&self) -> usize {
        self.values.len()
    }
}
