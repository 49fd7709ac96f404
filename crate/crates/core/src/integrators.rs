//! One implicit step of the average vector field (AVF) method and of
//! backward Euler for semi-discrete gradient systems
//!
//! ```text
//! M xi' = -A xi - r(xi)
//! ```
//!
//! Both are solved by full Newton iteration with the analytic Jacobian,
//! starting from the previous state.

use crate::linalg::{LinearSolver, SparseMatrix};
use crate::scalar::{norm_inf, Scalar};
use crate::space::quadrature::QuadratureRule;

/// A gradient system with symmetric `M` (positive definite) and `A`, and a
/// reaction term `r` that is the gradient of a potential.
pub trait GradientSystem<T: Scalar>: Sync {
    fn dim(&self) -> usize;
    fn mass(&self) -> &SparseMatrix<T>;
    fn linear(&self) -> &SparseMatrix<T>;
    /// `out += scale * r(xi)`.
    fn add_reaction(&self, xi: &[T], scale: T, out: &mut [T]);
    /// `jac += scale * J_r(xi)`. The pattern of `jac` is that of `M + A`.
    fn add_reaction_jacobian(&self, xi: &[T], scale: T, jac: &mut SparseMatrix<T>);
    /// `out += sum_g scale_g * r(xi_g)`; override when the states can share
    /// work.
    fn add_reaction_sum(&self, states: &[(&[T], T)], out: &mut [T]) {
        for &(xi, scale) in states {
            self.add_reaction(xi, scale, out);
        }
    }
    /// `jac += sum_g scale_g * J_r(xi_g)`.
    fn add_reaction_jacobian_sum(&self, states: &[(&[T], T)], jac: &mut SparseMatrix<T>) {
        for &(xi, scale) in states {
            self.add_reaction_jacobian(xi, scale, jac);
        }
    }
    /// Unknowns grouped together by the sparse ordering.
    fn block_size(&self) -> usize {
        1
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NewtonSettings {
    pub abs_tolerance: f64,
    /// Relative to the infinity norm of the initial residual.
    pub rel_tolerance: f64,
    pub max_iterations: usize,
    /// Gauss-Legendre points for the integral over `tau` in the AVF step.
    pub tau_nodes: usize,
}

impl Default for NewtonSettings {
    fn default() -> Self {
        NewtonSettings { abs_tolerance: 1e-10, rel_tolerance: 1e-10, max_iterations: 50, tau_nodes: 4 }
    }
}

impl NewtonSettings {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.abs_tolerance > 0.0 && self.rel_tolerance >= 0.0) {
            return Err("Newton tolerances must be positive".into());
        }
        if self.max_iterations == 0 || self.tau_nodes == 0 {
            return Err("Newton iteration and tau node counts must be at least 1".into());
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct StepResult<T> {
    pub xi_next: Vec<T>,
    pub newton_iterations: usize,
    pub final_residual_norm: T,
    pub converged: bool,
}

/// AVF residual
/// `M(xi - xi_n) + dt/2 A(xi_n + xi) + dt sum_g w_g r(tau_g xi + (1 - tau_g) xi_n)`.
pub fn avf_residual<T: Scalar, S: GradientSystem<T> + ?Sized>(
    system: &S,
    xi: &[T],
    xi_n: &[T],
    dt: T,
    tau_rule: &QuadratureRule<T>,
) -> Vec<T> {
    let n = system.dim();
    let diff: Vec<T> = xi.iter().zip(xi_n).map(|(&a, &b)| a - b).collect();
    let sum: Vec<T> = xi.iter().zip(xi_n).map(|(&a, &b)| a + b).collect();
    let mut r = vec![T::zero(); n];
    system.mass().add_spmv(T::one(), &diff, &mut r);
    system.linear().add_spmv(dt / T::lit(2.0), &sum, &mut r);
    let hats = tau_states(xi, xi_n, tau_rule);
    let states: Vec<(&[T], T)> = hats.iter().zip(&tau_rule.weights).map(|(h, &w)| (h.as_slice(), dt * w)).collect();
    system.add_reaction_sum(&states, &mut r);
    r
}

/// Jacobian of [`avf_residual`] with respect to `xi`.
pub fn avf_jacobian<T: Scalar, S: GradientSystem<T> + ?Sized>(
    system: &S,
    xi: &[T],
    xi_n: &[T],
    dt: T,
    tau_rule: &QuadratureRule<T>,
) -> SparseMatrix<T> {
    let mut jac = system.mass().linear_combination(T::one(), system.linear(), dt / T::lit(2.0));
    let hats = tau_states(xi, xi_n, tau_rule);
    let states: Vec<(&[T], T)> = hats
        .iter()
        .zip(tau_rule.points.iter().zip(&tau_rule.weights))
        .map(|(h, (p, &w))| (h.as_slice(), dt * w * p[0]))
        .collect();
    system.add_reaction_jacobian_sum(&states, &mut jac);
    jac
}

/// Backward Euler residual `M(xi - xi_n) + dt A xi + dt r(xi)`.
pub fn backward_euler_residual<T: Scalar, S: GradientSystem<T> + ?Sized>(
    system: &S,
    xi: &[T],
    xi_n: &[T],
    dt: T,
) -> Vec<T> {
    let diff: Vec<T> = xi.iter().zip(xi_n).map(|(&a, &b)| a - b).collect();
    let mut r = vec![T::zero(); system.dim()];
    system.mass().add_spmv(T::one(), &diff, &mut r);
    system.linear().add_spmv(dt, xi, &mut r);
    system.add_reaction(xi, dt, &mut r);
    r
}

fn backward_euler_jacobian<T: Scalar, S: GradientSystem<T> + ?Sized>(system: &S, xi: &[T], dt: T) -> SparseMatrix<T> {
    let mut jac = system.mass().linear_combination(T::one(), system.linear(), dt);
    system.add_reaction_jacobian(xi, dt, &mut jac);
    jac
}

/// `tau_g xi + (1 - tau_g) xi_n` for each node of the rule.
fn tau_states<T: Scalar>(xi: &[T], xi_n: &[T], tau_rule: &QuadratureRule<T>) -> Vec<Vec<T>> {
    let blend = |tau: T| xi.iter().zip(xi_n).map(|(&a, &b)| tau * a + (T::one() - tau) * b).collect();
    tau_rule.points.iter().map(|p| blend(p[0])).collect()
}

pub fn avf_step<T: Scalar, S: GradientSystem<T> + ?Sized>(
    system: &S,
    xi_n: &[T],
    dt: T,
    settings: &NewtonSettings,
    solver: &mut LinearSolver,
) -> StepResult<T> {
    let rule = QuadratureRule::interval(settings.tau_nodes);
    newton(
        system,
        xi_n,
        settings,
        solver,
        |x| avf_residual(system, x, xi_n, dt, &rule),
        |x| avf_jacobian(system, x, xi_n, dt, &rule),
    )
}

pub fn backward_euler_step<T: Scalar, S: GradientSystem<T> + ?Sized>(
    system: &S,
    xi_n: &[T],
    dt: T,
    settings: &NewtonSettings,
    solver: &mut LinearSolver,
) -> StepResult<T> {
    newton(
        system,
        xi_n,
        settings,
        solver,
        |x| backward_euler_residual(system, x, xi_n, dt),
        |x| backward_euler_jacobian(system, x, dt),
    )
}

fn newton<T, S, R, J>(
    system: &S,
    xi_n: &[T],
    settings: &NewtonSettings,
    solver: &mut LinearSolver,
    residual: R,
    jacobian: J,
) -> StepResult<T>
where
    T: Scalar,
    S: GradientSystem<T> + ?Sized,
    R: Fn(&[T]) -> Vec<T>,
    J: Fn(&[T]) -> SparseMatrix<T>,
{
    let mut x = xi_n.to_vec();
    let mut r = residual(&x);
    let r0 = norm_inf(&r);
    // Keeps the test attainable in low precision; negligible for f64.
    let scale = norm_inf(&system.mass().spmv(xi_n).expect("state sized for the system"));
    let floor = T::epsilon() * T::lit(64.0) * (T::one() + scale);
    let tol = (T::lit(settings.abs_tolerance) + T::lit(settings.rel_tolerance) * r0).max(floor);
    let mut norm = r0;
    let mut iterations = 0;
    loop {
        if !norm.is_finite() {
            break;
        }
        if norm <= tol {
            return StepResult {
                xi_next: x,
                newton_iterations: iterations,
                final_residual_norm: norm,
                converged: true,
            };
        }
        if iterations == settings.max_iterations {
            break;
        }
        let jac = jacobian(&x);
        let Ok(dx) = solver.solve(&jac, &r) else { break };
        for (xi, d) in x.iter_mut().zip(&dx) {
            *xi -= *d;
        }
        iterations += 1;
        r = residual(&x);
        norm = norm_inf(&r);
    }
    StepResult { xi_next: x, newton_iterations: iterations, final_residual_norm: norm, converged: false }
}

/// A system with `r_i(xi) = w_i f(xi_i)`: each unknown carries its own copy
/// of a scalar potential with weight `w_i`. Small test problems and
/// examples are built from it.
pub struct SeparableSystem<T> {
    mass: SparseMatrix<T>,
    linear: SparseMatrix<T>,
    weights: Vec<T>,
    f: Box<dyn Fn(T) -> T + Send + Sync>,
    df: Box<dyn Fn(T) -> T + Send + Sync>,
}

impl<T: Scalar> SeparableSystem<T> {
    /// Panics if the dimensions of `mass`, `linear` and `weights` differ.
    pub fn new(
        mass: SparseMatrix<T>,
        linear: SparseMatrix<T>,
        weights: Vec<T>,
        f: impl Fn(T) -> T + Send + Sync + 'static,
        df: impl Fn(T) -> T + Send + Sync + 'static,
    ) -> Self {
        assert!(mass.dim() == linear.dim() && mass.dim() == weights.len(), "dimension mismatch");
        // Make sure the Jacobian pattern covers the diagonal.
        let zero = SparseMatrix::from_diagonal(&vec![T::zero(); weights.len()]);
        let mass = mass.linear_combination(T::one(), &zero, T::one());
        SeparableSystem { mass, linear, weights, f: Box::new(f), df: Box::new(df) }
    }
}

impl<T: Scalar> GradientSystem<T> for SeparableSystem<T> {
    fn dim(&self) -> usize {
        self.weights.len()
    }

    fn mass(&self) -> &SparseMatrix<T> {
        &self.mass
    }

    fn linear(&self) -> &SparseMatrix<T> {
        &self.linear
    }

    fn add_reaction(&self, xi: &[T], scale: T, out: &mut [T]) {
        for ((o, &x), &w) in out.iter_mut().zip(xi).zip(&self.weights) {
            *o += scale * w * (self.f)(x);
        }
    }

    fn add_reaction_jacobian(&self, xi: &[T], scale: T, jac: &mut SparseMatrix<T>) {
        for (i, (&x, &w)) in xi.iter().zip(&self.weights).enumerate() {
            let k = jac.index_of(i, i).expect("diagonal in pattern");
            jac.values_mut()[k] += scale * w * (self.df)(x);
        }
    }
}
