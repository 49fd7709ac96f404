use thiserror::Error;

use crate::scalar::Scalar;

#[derive(Debug, Error, PartialEq)]
pub enum SparseError {
    #[error("dimension mismatch: matrix is {rows}x{cols}, vector has {len} entries")]
    DimensionMismatch { rows: usize, cols: usize, len: usize },
    #[error("entry ({row}, {col}) outside a {n}x{n} matrix")]
    OutOfBounds { row: usize, col: usize, n: usize },
    #[error("entry ({row}, {col}) is not in the sparsity pattern")]
    NotInPattern { row: usize, col: usize },
}

/// Square matrix in compressed sparse row format. Column indices are sorted
/// and unique within each row.
#[derive(Clone, Debug, PartialEq)]
pub struct SparseMatrix<T> {
    n: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<T>,
}

impl<T: Scalar> SparseMatrix<T> {
    pub fn identity(n: usize) -> Self {
        SparseMatrix { n, row_ptr: (0..=n).collect(), col_idx: (0..n).collect(), values: vec![T::one(); n] }
    }

    pub fn from_diagonal(d: &[T]) -> Self {
        let mut m = Self::identity(d.len());
        m.values.copy_from_slice(d);
        m
    }

    /// Builds from `(row, col, value)` triplets; duplicates are summed in
    /// input order.
    pub fn from_triplets(n: usize, triplets: &[(usize, usize, T)]) -> Result<Self, SparseError> {
        let mut counts = vec![0usize; n + 1];
        for &(r, c, _) in triplets {
            if r >= n || c >= n {
                return Err(SparseError::OutOfBounds { row: r, col: c, n });
            }
            counts[r + 1] += 1;
        }
        for i in 0..n {
            counts[i + 1] += counts[i];
        }
        let mut next = counts.clone();
        let mut cols = vec![0usize; triplets.len()];
        let mut vals = vec![T::zero(); triplets.len()];
        for &(r, c, v) in triplets {
            cols[next[r]] = c;
            vals[next[r]] = v;
            next[r] += 1;
        }
        let mut row_ptr = Vec::with_capacity(n + 1);
        let mut col_idx = Vec::with_capacity(triplets.len());
        let mut values = Vec::with_capacity(triplets.len());
        row_ptr.push(0);
        let mut order: Vec<usize> = Vec::new();
        for r in 0..n {
            let (s, e) = (counts[r], counts[r + 1]);
            order.clear();
            order.extend(s..e);
            // stable: duplicates keep input order, so sums are reproducible
            order.sort_by_key(|&k| cols[k]);
            for &k in &order {
                if col_idx.len() > row_ptr[r] && *col_idx.last().unwrap() == cols[k] {
                    *values.last_mut().unwrap() += vals[k];
                } else {
                    col_idx.push(cols[k]);
                    values.push(vals[k]);
                }
            }
            row_ptr.push(col_idx.len());
        }
        Ok(SparseMatrix { n, row_ptr, col_idx, values })
    }

    pub fn from_dense(n: usize, dense: &[T]) -> Self {
        let mut t = Vec::new();
        for r in 0..n {
            for c in 0..n {
                let v = dense[r * n + c];
                if v != T::zero() {
                    t.push((r, c, v));
                }
            }
        }
        Self::from_triplets(n, &t).expect("indices in range")
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row_ptr(&self) -> &[usize] {
        &self.row_ptr
    }

    pub fn col_idx(&self) -> &[usize] {
        &self.col_idx
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [T] {
        &mut self.values
    }

    pub fn row(&self, r: usize) -> impl Iterator<Item = (usize, T)> + '_ {
        let span = self.row_ptr[r]..self.row_ptr[r + 1];
        self.col_idx[span.clone()].iter().copied().zip(self.values[span].iter().copied())
    }

    /// Position of `(r, c)` in the value array.
    pub fn index_of(&self, r: usize, c: usize) -> Option<usize> {
        let s = self.row_ptr[r];
        self.col_idx[s..self.row_ptr[r + 1]].binary_search(&c).ok().map(|k| s + k)
    }

    pub fn get(&self, r: usize, c: usize) -> T {
        self.index_of(r, c).map_or(T::zero(), |k| self.values[k])
    }

    pub fn same_pattern(&self, other: &Self) -> bool {
        self.n == other.n && self.row_ptr == other.row_ptr && self.col_idx == other.col_idx
    }

    pub fn spmv(&self, x: &[T]) -> Result<Vec<T>, SparseError> {
        let mut y = vec![T::zero(); self.n];
        self.spmv_into(x, &mut y)?;
        Ok(y)
    }

    pub fn spmv_into(&self, x: &[T], y: &mut [T]) -> Result<(), SparseError> {
        if x.len() != self.n || y.len() != self.n {
            return Err(SparseError::DimensionMismatch { rows: self.n, cols: self.n, len: x.len().min(y.len()) });
        }
        for (r, yr) in y.iter_mut().enumerate() {
            let mut s = T::zero();
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                s += self.values[k] * x[self.col_idx[k]];
            }
            *yr = s;
        }
        Ok(())
    }

    /// `y += alpha * A x`, dimensions assumed to match.
    pub fn add_spmv(&self, alpha: T, x: &[T], y: &mut [T]) {
        debug_assert!(x.len() == self.n && y.len() == self.n);
        for (r, yr) in y.iter_mut().enumerate() {
            let mut s = T::zero();
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                s += self.values[k] * x[self.col_idx[k]];
            }
            *yr += alpha * s;
        }
    }

    pub fn quadratic_form(&self, x: &[T]) -> T {
        let mut acc = T::zero();
        for (r, &xr) in x.iter().enumerate() {
            let mut s = T::zero();
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                s += self.values[k] * x[self.col_idx[k]];
            }
            acc += xr * s;
        }
        acc
    }

    pub fn scale(&mut self, alpha: T) {
        self.values.iter_mut().for_each(|v| *v *= alpha);
    }

    /// `self += alpha * other`, where `other`'s pattern must be contained in
    /// `self`'s.
    pub fn add_scaled(&mut self, alpha: T, other: &Self) -> Result<(), SparseError> {
        if self.same_pattern(other) {
            for (a, &b) in self.values.iter_mut().zip(&other.values) {
                *a += alpha * b;
            }
            return Ok(());
        }
        if self.n != other.n {
            return Err(SparseError::DimensionMismatch { rows: self.n, cols: self.n, len: other.n });
        }
        for r in 0..other.n {
            for (c, v) in other.row(r) {
                let k = self.index_of(r, c).ok_or(SparseError::NotInPattern { row: r, col: c })?;
                self.values[k] += alpha * v;
            }
        }
        Ok(())
    }

    /// `alpha * self + beta * other` over the union of both patterns.
    pub fn linear_combination(&self, alpha: T, other: &Self, beta: T) -> Self {
        assert_eq!(self.n, other.n, "dimension mismatch");
        if self.same_pattern(other) {
            let values = self.values.iter().zip(&other.values).map(|(&a, &b)| alpha * a + beta * b).collect();
            return SparseMatrix { values, ..self.clone_pattern() };
        }
        let cap = self.nnz() + other.nnz();
        let (mut row_ptr, mut col_idx, mut values) =
            (Vec::with_capacity(self.n + 1), Vec::with_capacity(cap), Vec::with_capacity(cap));
        row_ptr.push(0);
        for r in 0..self.n {
            // Merge two sorted rows.
            let (mut i, ie) = (self.row_ptr[r], self.row_ptr[r + 1]);
            let (mut j, je) = (other.row_ptr[r], other.row_ptr[r + 1]);
            while i < ie || j < je {
                let ci = if i < ie { self.col_idx[i] } else { usize::MAX };
                let cj = if j < je { other.col_idx[j] } else { usize::MAX };
                if ci < cj {
                    col_idx.push(ci);
                    values.push(alpha * self.values[i]);
                    i += 1;
                } else if cj < ci {
                    col_idx.push(cj);
                    values.push(beta * other.values[j]);
                    j += 1;
                } else {
                    col_idx.push(ci);
                    values.push(alpha * self.values[i] + beta * other.values[j]);
                    i += 1;
                    j += 1;
                }
            }
            row_ptr.push(col_idx.len());
        }
        SparseMatrix { n: self.n, row_ptr, col_idx, values }
    }

    fn clone_pattern(&self) -> Self {
        SparseMatrix { n: self.n, row_ptr: self.row_ptr.clone(), col_idx: self.col_idx.clone(), values: Vec::new() }
    }

    /// Adds dense `bs x bs` diagonal blocks (row-major, concatenated):
    /// block `k` covers rows and columns `k*bs .. (k+1)*bs`.
    pub fn add_block_diagonal(&mut self, alpha: T, bs: usize, blocks: &[T]) -> Result<(), SparseError> {
        assert_eq!(blocks.len(), self.n * bs, "block array size");
        for k in 0..self.n / bs {
            for i in 0..bs {
                let r = k * bs + i;
                for j in 0..bs {
                    let c = k * bs + j;
                    let idx = self.index_of(r, c).ok_or(SparseError::NotInPattern { row: r, col: c })?;
                    self.values[idx] += alpha * blocks[(k * bs + i) * bs + j];
                }
            }
        }
        Ok(())
    }

    pub fn transpose(&self) -> Self {
        let mut t = Vec::with_capacity(self.nnz());
        for r in 0..self.n {
            t.extend(self.row(r).map(|(c, v)| (c, r, v)));
        }
        Self::from_triplets(self.n, &t).expect("indices in range")
    }

    /// Largest `|A_ij - A_ji|`.
    pub fn asymmetry(&self) -> T {
        let mut worst = T::zero();
        for r in 0..self.n {
            for (c, v) in self.row(r) {
                worst = worst.max((v - self.get(c, r)).abs());
            }
        }
        worst
    }

    pub fn max_abs(&self) -> T {
        self.values.iter().fold(T::zero(), |m, v| m.max(v.abs()))
    }

    pub fn to_dense(&self) -> Vec<T> {
        let mut d = vec![T::zero(); self.n * self.n];
        for r in 0..self.n {
            for (c, v) in self.row(r) {
                d[r * self.n + c] = v;
            }
        }
        d
    }

    /// Coordinate text dump, one `row col value` line per stored entry.
    pub fn write_coordinate<W: std::io::Write>(&self, mut w: W) -> std::io::Result<()> {
        for r in 0..self.n {
            for (c, v) in self.row(r) {
                writeln!(w, "{r} {c} {v:e}")?;
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn triplets_sum_duplicates_and_sort() {
        let m = SparseMatrix::from_triplets(3, &[(0, 2, 1.0), (0, 0, 2.0), (0, 2, 3.0), (2, 1, -1.0)]).unwrap();
        assert_eq!(m.row_ptr(), &[0, 2, 2, 3]);
        assert_eq!(m.col_idx(), &[0, 2, 1]);
        assert_eq!(m.values(), &[2.0, 4.0, -1.0]);
        assert!(matches!(SparseMatrix::from_triplets(2, &[(2, 0, 1.0)]), Err(SparseError::OutOfBounds { .. })));
    }

    #[test]
    fn spmv_examples() {
        let x = vec![1.0, -2.0, 3.5];
        assert_eq!(SparseMatrix::<f64>::identity(3).spmv(&x).unwrap(), x);
        let a = SparseMatrix::from_triplets(3, &[(0, 1, 2.0), (2, 2, 1.0)]).unwrap();
        assert_eq!(a.spmv(&[0.0; 3]).unwrap(), vec![0.0; 3]);
        assert!(matches!(a.spmv(&[1.0; 2]), Err(SparseError::DimensionMismatch { .. })));
    }

    #[test]
    fn spmv_matches_dense_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let n = 5;
        let mut dense = vec![0.0; n * n];
        for v in dense.iter_mut() {
            if rng.gen_bool(0.5) {
                *v = rng.gen_range(-1.0..1.0);
            }
        }
        let a = SparseMatrix::from_dense(n, &dense);
        let x: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let y = a.spmv(&x).unwrap();
        for r in 0..n {
            let expect: f64 = (0..n).map(|c| dense[r * n + c] * x[c]).sum();
            assert!((y[r] - expect).abs() < 1e-14);
        }
    }

    #[test]
    fn pattern_arithmetic() {
        let mut a = SparseMatrix::from_triplets(2, &[(0, 0, 1.0), (0, 1, 1.0), (1, 0, 1.0), (1, 1, 1.0)]).unwrap();
        let d = SparseMatrix::from_diagonal(&[2.0, 3.0]);
        a.add_scaled(0.5, &d).unwrap();
        assert_eq!(a.values(), &[2.0, 1.0, 1.0, 2.5]);
        let mut d2 = d.clone();
        assert_eq!(d2.add_scaled(1.0, &a), Err(SparseError::NotInPattern { row: 0, col: 1 }));
        let c = d.linear_combination(2.0, &a, -1.0);
        assert_eq!(c.to_dense(), vec![2.0, -1.0, -1.0, 3.5]);
        assert_eq!(a.asymmetry(), 0.0);
        let t = SparseMatrix::from_triplets(2, &[(0, 1, 1.0)]).unwrap();
        assert_eq!(t.transpose().get(1, 0), 1.0);
        assert_eq!(t.asymmetry(), 1.0);
    }
}
