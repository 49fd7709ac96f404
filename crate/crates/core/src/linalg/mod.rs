//! Sparse matrices and linear solves for the Newton systems.
//!
//! Large symmetric systems first try block-Jacobi preconditioned CG, which
//! wins for the mass-dominated matrices of short time steps. Symmetric
//! systems otherwise go through a sparse LDL^T factorization with a
//! minimum-degree ordering; anything else, or a symmetric system whose
//! unpivoted factorization breaks down, falls back to dense LU with partial
//! pivoting when small enough. Every solve is checked against the residual
//! contract after at most a few steps of iterative refinement.

mod krylov;
mod ldl;
mod ordering;
mod sparse;

use thiserror::Error;

pub use krylov::{block_jacobi, pcg};
pub use ldl::{NumericLdl, SymbolicLdl};
pub use ordering::minimum_degree;
pub use sparse::{SparseError, SparseMatrix};

use crate::scalar::{norm2, Scalar};

/// Relative residual every successful solve must meet (in `f64`).
pub const RESIDUAL_TOLERANCE: f64 = 1e-12;

/// Largest system the dense fallback will take on.
const DENSE_FALLBACK_LIMIT: usize = 4096;

const REFINEMENT_STEPS: usize = 4;

/// Smallest system for which CG is tried before factorizing.
const KRYLOV_MIN_DIM: usize = 1024;

const KRYLOV_MAX_ITERATIONS: usize = 60;

/// Solves skipping CG after it failed once.
const KRYLOV_BACKOFF: usize = 16;

#[derive(Debug, Error, PartialEq)]
pub enum LinalgError {
    #[error(transparent)]
    Sparse(#[from] SparseError),
    #[error("linear solve failed: relative residual {residual:e} exceeds {tolerance:e}")]
    Inaccurate { residual: f64, tolerance: f64 },
    #[error("matrix is numerically singular (zero pivot at position {pivot})")]
    Singular { pivot: usize },
}

/// Reusable solver that keeps the symbolic analysis across matrices sharing a
/// sparsity pattern (the Jacobians of one Newton run).
#[derive(Clone, Debug, Default)]
pub struct LinearSolver {
    symbolic: Option<SymbolicLdl>,
    block: usize,
    krylov_skip: usize,
}

impl LinearSolver {
    /// `block` groups consecutive unknowns for the ordering; use the element
    /// block size for DG matrices or 1 otherwise.
    pub fn new(block: usize) -> Self {
        LinearSolver { symbolic: None, block: block.max(1), krylov_skip: 0 }
    }

    pub fn block(&self) -> usize {
        self.block
    }

    pub fn solve<T: Scalar>(&mut self, a: &SparseMatrix<T>, b: &[T]) -> Result<Vec<T>, LinalgError> {
        let n = a.dim();
        if b.len() != n {
            return Err(SparseError::DimensionMismatch { rows: n, cols: n, len: b.len() }.into());
        }
        let bnorm = norm2(b);
        if bnorm == T::zero() {
            return Ok(vec![T::zero(); n]);
        }
        let tol = T::tolerance(RESIDUAL_TOLERANCE);
        let scale = a.max_abs();
        let symmetric = a.asymmetry() <= T::epsilon() * T::lit(16.0) * scale;

        let mut last = f64::INFINITY;
        if symmetric && n >= KRYLOV_MIN_DIM {
            if self.krylov_skip > 0 {
                self.krylov_skip -= 1;
            } else {
                let x = block_jacobi(a, self.block)
                    .and_then(|inv| pcg(a, b, &inv, self.block, tol, KRYLOV_MAX_ITERATIONS))
                    .filter(|x| relative_residual(a, x, b) <= tol);
                match x {
                    Some(x) => return Ok(x),
                    None => self.krylov_skip = KRYLOV_BACKOFF,
                }
            }
        }
        if symmetric {
            if !self.symbolic.as_ref().is_some_and(|s| s.matches(a)) {
                self.symbolic = Some(SymbolicLdl::analyze(a, self.block));
            }
            let sym = self.symbolic.as_ref().expect("analyzed above");
            let floor = scale * T::epsilon() * T::from_count(n);
            match sym.factor(a, floor) {
                Ok(f) => {
                    let (x, r) = refine(a, b, bnorm, tol, |rhs| sym.solve(&f, rhs));
                    if r <= tol {
                        return Ok(x);
                    }
                    last = r.as_f64();
                }
                Err(pivot) if n > DENSE_FALLBACK_LIMIT => return Err(LinalgError::Singular { pivot }),
                Err(_) => {}
            }
        }
        if n <= DENSE_FALLBACK_LIMIT {
            let lu = DenseLu::factor(a).map_err(|pivot| LinalgError::Singular { pivot })?;
            let (x, r) = refine(a, b, bnorm, tol, |rhs| lu.solve(rhs));
            if r <= tol {
                return Ok(x);
            }
            last = last.min(r.as_f64());
        }
        Err(LinalgError::Inaccurate { residual: last, tolerance: tol.as_f64() })
    }
}

/// Solves `A x = b` to relative residual `1e-12` (or the precision floor of
/// `T`), or reports the residual achieved.
pub fn solve_linear<T: Scalar>(a: &SparseMatrix<T>, b: &[T]) -> Result<Vec<T>, LinalgError> {
    LinearSolver::new(1).solve(a, b)
}

pub fn spmv<T: Scalar>(a: &SparseMatrix<T>, x: &[T]) -> Result<Vec<T>, LinalgError> {
    Ok(a.spmv(x)?)
}

pub fn relative_residual<T: Scalar>(a: &SparseMatrix<T>, x: &[T], b: &[T]) -> T {
    let mut r = b.to_vec();
    a.add_spmv(-T::one(), x, &mut r);
    norm2(&r) / norm2(b)
}

fn refine<T: Scalar, F: Fn(&[T]) -> Vec<T>>(a: &SparseMatrix<T>, b: &[T], bnorm: T, tol: T, solve: F) -> (Vec<T>, T) {
    let mut x = solve(b);
    let mut r = b.to_vec();
    a.add_spmv(-T::one(), &x, &mut r);
    let mut rel = norm2(&r) / bnorm;
    for _ in 0..REFINEMENT_STEPS {
        if rel <= tol || !rel.is_finite() {
            break;
        }
        let dx = solve(&r);
        let trial: Vec<T> = x.iter().zip(&dx).map(|(&a, &b)| a + b).collect();
        let mut rt = b.to_vec();
        a.add_spmv(-T::one(), &trial, &mut rt);
        let rel_t = norm2(&rt) / bnorm;
        if !(rel_t < rel) {
            break;
        }
        x = trial;
        r = rt;
        rel = rel_t;
    }
    (x, if rel.is_finite() { rel } else { T::infinity() })
}

struct DenseLu<T> {
    n: usize,
    lu: Vec<T>,
    piv: Vec<usize>,
}

impl<T: Scalar> DenseLu<T> {
    fn factor(a: &SparseMatrix<T>) -> Result<Self, usize> {
        let n = a.dim();
        let mut lu = a.to_dense();
        let mut piv: Vec<usize> = (0..n).collect();
        let floor = a.max_abs() * T::epsilon();
        for k in 0..n {
            let p = (k..n)
                .max_by(|&i, &j| {
                    lu[i * n + k].abs().partial_cmp(&lu[j * n + k].abs()).unwrap_or(std::cmp::Ordering::Equal)
                })
                .expect("non-empty range");
            if !(lu[p * n + k].abs() > floor) {
                return Err(k);
            }
            if p != k {
                for c in 0..n {
                    lu.swap(k * n + c, p * n + c);
                }
                piv.swap(k, p);
            }
            let pivot = lu[k * n + k];
            for i in k + 1..n {
                let m = lu[i * n + k] / pivot;
                lu[i * n + k] = m;
                if m != T::zero() {
                    for c in k + 1..n {
                        let v = lu[k * n + c];
                        lu[i * n + c] -= m * v;
                    }
                }
            }
        }
        Ok(DenseLu { n, lu, piv })
    }

    fn solve(&self, b: &[T]) -> Vec<T> {
        let n = self.n;
        let mut x: Vec<T> = self.piv.iter().map(|&p| b[p]).collect();
        for i in 0..n {
            let mut s = x[i];
            for k in 0..i {
                s -= self.lu[i * n + k] * x[k];
            }
            x[i] = s;
        }
        for i in (0..n).rev() {
            let mut s = x[i];
            for k in i + 1..n {
                s -= self.lu[i * n + k] * x[k];
            }
            x[i] = s / self.lu[i * n + i];
        }
        x
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_spd(n: usize, seed: u64) -> SparseMatrix<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let b: Vec<f64> = (0..n * n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let mut d = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                d[i * n + j] = (0..n).map(|k| b[k * n + i] * b[k * n + j]).sum::<f64>();
            }
            d[i * n + i] += 1.0;
        }
        SparseMatrix::from_dense(n, &d)
    }

    #[test]
    fn diagonal_solve_divides() {
        let a = SparseMatrix::from_diagonal(&[2.0, 4.0, -5.0]);
        let x = solve_linear(&a, &[1.0, 1.0, 10.0]).unwrap();
        assert_eq!(x, vec![0.5, 0.25, -2.0]);
    }

    #[test]
    fn random_spd_meets_residual_contract() {
        let a = random_spd(50, 3);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let b: Vec<f64> = (0..50).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let x = solve_linear(&a, &b).unwrap();
        assert!(relative_residual(&a, &x, &b) <= 1e-12);
    }

    #[test]
    fn sparse_indefinite_symmetric() {
        // periodic 1D Helmholtz-like operator, indefinite but nonsingular
        let n = 40;
        let mut t = Vec::new();
        for i in 0..n {
            t.push((i, i, 2.0 - 0.5));
            t.push((i, (i + 1) % n, -1.0));
            t.push(((i + 1) % n, i, -1.0));
        }
        let a = SparseMatrix::from_triplets(n, &t).unwrap();
        let x0: Vec<f64> = (0..n).map(|i| (i as f64 * 0.3).sin()).collect();
        let b = a.spmv(&x0).unwrap();
        let x = solve_linear(&a, &b).unwrap();
        for (u, v) in x.iter().zip(&x0) {
            assert!((u - v).abs() < 1e-10);
        }
    }

    #[test]
    fn nonsymmetric_uses_dense_fallback() {
        let a = SparseMatrix::from_dense(3, &[0.0, 1.0, 0.0, 2.0, 0.0, 1.0, 0.0, 3.0, 1.0]);
        let b = [1.0, 2.0, 3.0];
        let x = solve_linear(&a, &b).unwrap();
        assert!(relative_residual(&a, &x, &b) <= 1e-12);
    }

    #[test]
    fn singular_reports_failure() {
        let a = SparseMatrix::from_dense(2, &[1.0, 1.0, 1.0, 1.0]);
        let err = solve_linear(&a, &[1.0, 0.0]).unwrap_err();
        assert!(matches!(err, LinalgError::Singular { .. } | LinalgError::Inaccurate { .. }));
    }

    #[test]
    fn solver_reuses_symbolic_analysis() {
        let a = random_spd(12, 9);
        let mut solver = LinearSolver::new(3);
        let b = vec![1.0; 12];
        let x1 = solver.solve(&a, &b).unwrap();
        let mut a2 = a.clone();
        a2.scale(2.0);
        let x2 = solver.solve(&a2, &b).unwrap();
        for (u, v) in x1.iter().zip(&x2) {
            assert!((u - 2.0 * v).abs() < 1e-10);
        }
    }

    #[test]
    fn large_systems_take_the_krylov_path_or_fall_back() {
        let n = 3000;
        let mut t = Vec::new();
        for i in 0..n {
            t.push((i, i, 4.0));
            t.push((i, (i + 1) % n, -1.0));
            t.push(((i + 1) % n, i, -1.0));
        }
        let a = SparseMatrix::from_triplets(n, &t).unwrap();
        let b: Vec<f64> = (0..n).map(|i| (i as f64 * 0.01).cos()).collect();
        let mut solver = LinearSolver::new(3);
        let x = solver.solve(&a, &b).unwrap();
        assert!(relative_residual(&a, &x, &b) <= 1e-12);
        assert!(solver.symbolic.is_none(), "CG should have sufficed");
        // Indefinite: CG breaks down and the factorization takes over.
        let c = a.linear_combination(1.0, &SparseMatrix::identity(n), -3.5);
        let x = solver.solve(&c, &b).unwrap();
        assert!(relative_residual(&c, &x, &b) <= 1e-12);
        assert!(solver.symbolic.is_some());
    }

    #[test]
    fn single_precision_solves_to_its_own_floor() {
        let a = SparseMatrix::<f32>::from_dense(2, &[4.0, 1.0, 1.0, 3.0]);
        let x = solve_linear(&a, &[1.0, 2.0]).unwrap();
        assert!(relative_residual(&a, &x, &[1.0, 2.0]) <= f32::tolerance(1e-12));
    }

    #[test]
    fn dimension_mismatch() {
        let a = SparseMatrix::<f64>::identity(3);
        assert!(matches!(solve_linear(&a, &[1.0]), Err(LinalgError::Sparse(_))));
    }
}
