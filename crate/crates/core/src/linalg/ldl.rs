//! Sparse LDL^T factorization of symmetric matrices, up-looking by rows with
//! the elimination tree driving the sparse triangular solves. No numerical
//! pivoting: the ordering is fixed by the symbolic analysis.

use super::{ordering, SparseMatrix};
use crate::scalar::Scalar;

/// Ordering and elimination tree for one sparsity pattern.
#[derive(Clone, Debug)]
pub struct SymbolicLdl {
    n: usize,
    perm: Vec<usize>,
    pinv: Vec<usize>,
    parent: Vec<Option<usize>>,
    col_ptr: Vec<usize>,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
}

#[derive(Clone, Debug)]
pub struct NumericLdl<T> {
    row_idx: Vec<usize>,
    l: Vec<T>,
    d: Vec<T>,
}

impl SymbolicLdl {
    pub fn analyze<T: Scalar>(a: &SparseMatrix<T>, block: usize) -> Self {
        let n = a.dim();
        let perm = ordering::minimum_degree(a, block);
        let mut pinv = vec![0; n];
        for (new, &old) in perm.iter().enumerate() {
            pinv[old] = new;
        }
        let mut parent = vec![None; n];
        let mut flag = vec![usize::MAX; n];
        let mut counts = vec![0usize; n];
        for k in 0..n {
            flag[k] = k;
            let old = perm[k];
            for &c in &a.col_idx()[a.row_ptr()[old]..a.row_ptr()[old + 1]] {
                let mut i = pinv[c];
                if i >= k {
                    continue;
                }
                while flag[i] != k {
                    if parent[i].is_none() {
                        parent[i] = Some(k);
                    }
                    counts[i] += 1;
                    flag[i] = k;
                    i = parent[i].expect("set above");
                }
            }
        }
        let mut col_ptr = vec![0; n + 1];
        for k in 0..n {
            col_ptr[k + 1] = col_ptr[k] + counts[k];
        }
        SymbolicLdl { n, perm, pinv, parent, col_ptr, row_ptr: a.row_ptr().to_vec(), col_idx: a.col_idx().to_vec() }
    }

    pub fn matches<T: Scalar>(&self, a: &SparseMatrix<T>) -> bool {
        a.dim() == self.n && a.row_ptr() == self.row_ptr.as_slice() && a.col_idx() == self.col_idx.as_slice()
    }

    pub fn factor_nnz(&self) -> usize {
        self.col_ptr[self.n]
    }

    /// Numeric factorization. Returns the permuted index of the first pivot
    /// whose magnitude falls below `pivot_floor`.
    pub fn factor<T: Scalar>(&self, a: &SparseMatrix<T>, pivot_floor: T) -> Result<NumericLdl<T>, usize> {
        debug_assert!(self.matches(a));
        let n = self.n;
        let nnz = self.factor_nnz();
        let mut row_idx = vec![0usize; nnz];
        let mut l = vec![T::zero(); nnz];
        let mut d = vec![T::zero(); n];
        let mut y = vec![T::zero(); n];
        let mut pattern = vec![0usize; n];
        let mut flag = vec![usize::MAX; n];
        let mut filled = vec![0usize; n];
        for k in 0..n {
            let mut top = n;
            flag[k] = k;
            let old = self.perm[k];
            for idx in a.row_ptr()[old]..a.row_ptr()[old + 1] {
                let mut i = self.pinv[a.col_idx()[idx]];
                if i > k {
                    continue;
                }
                y[i] += a.values()[idx];
                let mut len = 0;
                while flag[i] != k {
                    pattern[len] = i;
                    len += 1;
                    flag[i] = k;
                    i = self.parent[i].expect("etree path ends at k");
                }
                while len > 0 {
                    len -= 1;
                    top -= 1;
                    pattern[top] = pattern[len];
                }
            }
            d[k] = y[k];
            y[k] = T::zero();
            for &i in &pattern[top..n] {
                let yi = y[i];
                y[i] = T::zero();
                let start = self.col_ptr[i];
                let end = start + filled[i];
                for p in start..end {
                    y[row_idx[p]] -= l[p] * yi;
                }
                let lki = yi / d[i];
                d[k] -= lki * yi;
                row_idx[end] = k;
                l[end] = lki;
                filled[i] += 1;
            }
            if !(d[k].abs() > pivot_floor) {
                return Err(k);
            }
        }
        Ok(NumericLdl { row_idx, l, d })
    }

    pub fn solve<T: Scalar>(&self, f: &NumericLdl<T>, b: &[T]) -> Vec<T> {
        let n = self.n;
        let mut x: Vec<T> = self.perm.iter().map(|&old| b[old]).collect();
        for j in 0..n {
            let xj = x[j];
            for p in self.col_ptr[j]..self.col_ptr[j + 1] {
                x[f.row_idx[p]] -= f.l[p] * xj;
            }
        }
        for j in 0..n {
            x[j] /= f.d[j];
        }
        for j in (0..n).rev() {
            let mut s = x[j];
            for p in self.col_ptr[j]..self.col_ptr[j + 1] {
                s -= f.l[p] * x[f.row_idx[p]];
            }
            x[j] = s;
        }
        let mut out = vec![T::zero(); n];
        for (k, &old) in self.perm.iter().enumerate() {
            out[old] = x[k];
        }
        out
    }
}
