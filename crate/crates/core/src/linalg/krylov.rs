//! Conjugate gradients preconditioned by the inverses of the diagonal
//! blocks. Meant for the well-conditioned mass-dominated systems of short
//! time steps; callers verify the residual and fall back to a factorization.

use super::SparseMatrix;
use crate::scalar::{dot, norm2, Scalar};

/// Inverses of the `bs x bs` diagonal blocks, row-major and concatenated.
/// `None` if a block is singular or `bs` does not divide the dimension.
pub fn block_jacobi<T: Scalar>(a: &SparseMatrix<T>, bs: usize) -> Option<Vec<T>> {
    let n = a.dim();
    if bs == 0 || n % bs != 0 {
        return None;
    }
    let mut inv = vec![T::zero(); n * bs];
    let mut m = vec![T::zero(); bs * 2 * bs];
    for k in 0..n / bs {
        // Gauss-Jordan on [B | I] with partial pivoting.
        m.iter_mut().for_each(|v| *v = T::zero());
        for i in 0..bs {
            for j in 0..bs {
                m[i * 2 * bs + j] = a.get(k * bs + i, k * bs + j);
            }
            m[i * 2 * bs + bs + i] = T::one();
        }
        for c in 0..bs {
            let p = (c..bs).max_by(|&x, &y| {
                m[x * 2 * bs + c].abs().partial_cmp(&m[y * 2 * bs + c].abs()).unwrap_or(std::cmp::Ordering::Equal)
            })?;
            let piv = m[p * 2 * bs + c];
            if piv == T::zero() || !piv.is_finite() {
                return None;
            }
            if p != c {
                for j in 0..2 * bs {
                    m.swap(p * 2 * bs + j, c * 2 * bs + j);
                }
            }
            for j in 0..2 * bs {
                m[c * 2 * bs + j] /= piv;
            }
            for r in 0..bs {
                if r != c {
                    let f = m[r * 2 * bs + c];
                    if f != T::zero() {
                        for j in 0..2 * bs {
                            let v = m[c * 2 * bs + j];
                            m[r * 2 * bs + j] -= f * v;
                        }
                    }
                }
            }
        }
        for i in 0..bs {
            for j in 0..bs {
                inv[(k * bs + i) * bs + j] = m[i * 2 * bs + bs + j];
            }
        }
    }
    Some(inv)
}

fn apply_blocks<T: Scalar>(inv: &[T], bs: usize, r: &[T], z: &mut [T]) {
    for (k, (zk, rk)) in z.chunks_mut(bs).zip(r.chunks(bs)).enumerate() {
        let b = &inv[k * bs * bs..(k + 1) * bs * bs];
        for i in 0..bs {
            zk[i] = dot(&b[i * bs..(i + 1) * bs], rk);
        }
    }
}

/// Preconditioned CG from a zero initial guess. Returns the iterate once
/// the relative residual drops to `tol`, or `None` on breakdown (a
/// non-positive curvature) or when `max_iter` is exhausted.
pub fn pcg<T: Scalar>(a: &SparseMatrix<T>, b: &[T], inv: &[T], bs: usize, tol: T, max_iter: usize) -> Option<Vec<T>> {
    let n = a.dim();
    let bnorm = norm2(b);
    let mut x = vec![T::zero(); n];
    if bnorm == T::zero() {
        return Some(x);
    }
    let mut r = b.to_vec();
    let mut z = vec![T::zero(); n];
    apply_blocks(inv, bs, &r, &mut z);
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    let mut ap = vec![T::zero(); n];
    for _ in 0..max_iter {
        a.spmv_into(&p, &mut ap).ok()?;
        let curv = dot(&p, &ap);
        if !(curv > T::zero()) {
            return None;
        }
        let alpha = rz / curv;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        if norm2(&r) <= tol * bnorm {
            return Some(x);
        }
        apply_blocks(inv, bs, &r, &mut z);
        let rz_next = dot(&r, &z);
        let beta = rz_next / rz;
        rz = rz_next;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    None
}
