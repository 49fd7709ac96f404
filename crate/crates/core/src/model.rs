//! The DG Allen-Cahn problem as a gradient system.
//!
//! With mobility frozen at the start of a step the semi-discrete equation
//! reads `M xi' = -A xi - r(xi)`, where `A` is the SIPG operator for the
//! coefficient `eps^2 mu(u_n)` and `r_i = (mu(u_n) f(u_h), phi_i)`.

use std::borrow::Cow;
use std::sync::Arc;

use crate::assembly::{
    add_reaction, add_reaction_jacobian_blocks_sum, add_reaction_sum, assemble_mass, assemble_stiffness, default_sigma,
    reassemble_stiffness, AssemblyError, CoefficientField, EdgeSet, EnergyFunctional,
};
use crate::driver::Evolution;
use crate::integrators::GradientSystem;
use crate::linalg::SparseMatrix;
use crate::physics::{Mobility, Potential};
use crate::scalar::Scalar;
use crate::space::DgSpace;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ModelParams<T> {
    pub epsilon: T,
    pub potential: Potential<T>,
    pub mobility: Mobility<T>,
    /// Penalty parameter; `None` picks [`default_sigma`].
    pub sigma: Option<T>,
    /// Edges included in the reported energy.
    pub energy_edges: EdgeSet,
}

impl<T: Scalar> ModelParams<T> {
    pub fn new(epsilon: T, potential: Potential<T>, mobility: Mobility<T>) -> Self {
        ModelParams { epsilon, potential, mobility, sigma: None, energy_edges: EdgeSet::All }
    }
}

pub struct AllenCahnModel<T> {
    space: Arc<DgSpace<T>>,
    params: ModelParams<T>,
    sigma: T,
    mass: SparseMatrix<T>,
    /// `A` for constant mobility, assembled once.
    fixed_linear: Option<SparseMatrix<T>>,
    /// Pattern of `A`, refilled every step for variable mobility.
    linear_pattern: SparseMatrix<T>,
    fixed_mobility: Option<Vec<T>>,
    energy: EnergyFunctional<T>,
}

impl<T: Scalar> AllenCahnModel<T> {
    pub fn new(space: Arc<DgSpace<T>>, params: ModelParams<T>) -> Result<Self, AssemblyError> {
        let sigma = params.sigma.unwrap_or_else(|| T::lit(default_sigma(space.mesh().dimension(), space.degree())));
        let mass = assemble_mass(&space).matrix;
        let energy = EnergyFunctional::new(&space, params.potential, params.epsilon, sigma, params.energy_edges)?;
        let (fixed_linear, fixed_mobility) = match params.mobility {
            Mobility::Constant(beta) => {
                let eps2 = params.epsilon * params.epsilon;
                let kappa = CoefficientField::constant(&space, eps2 * beta);
                let a = assemble_stiffness(&space, &kappa, sigma)?.matrix;
                (Some(a), Some(kappa.volume.iter().map(|_| beta).collect()))
            }
            Mobility::Degenerate(_) => (None, None),
        };
        let linear_pattern = match &fixed_linear {
            Some(a) => a.clone(),
            None => assemble_stiffness(&space, &CoefficientField::constant(&space, T::one()), sigma)?.matrix,
        };
        Ok(AllenCahnModel { space, params, sigma, mass, fixed_linear, linear_pattern, fixed_mobility, energy })
    }

    pub fn space(&self) -> &Arc<DgSpace<T>> {
        &self.space
    }

    pub fn params(&self) -> &ModelParams<T> {
        &self.params
    }

    pub fn sigma(&self) -> T {
        self.sigma
    }

    /// The gradient system with mobility evaluated at `xi_n`.
    pub fn frozen_at(&self, xi_n: &[T]) -> Result<FrozenSystem<'_, T>, AssemblyError> {
        if let (Some(a), Some(m)) = (&self.fixed_linear, &self.fixed_mobility) {
            return Ok(FrozenSystem { model: self, linear: Cow::Borrowed(a), mobility: Cow::Borrowed(m) });
        }
        let mu = self.params.mobility;
        let eps2 = self.params.epsilon * self.params.epsilon;
        let kappa = CoefficientField::from_state(&self.space, xi_n, |u| eps2 * mu.eval(u));
        let mut linear = self.linear_pattern.clone();
        reassemble_stiffness(&self.space, &kappa, self.sigma, &mut linear)?;
        let mobility = kappa.volume.iter().map(|&k| k / eps2).collect();
        Ok(FrozenSystem { model: self, linear: Cow::Owned(linear), mobility: Cow::Owned(mobility) })
    }

    pub fn energy(&self, xi: &[T]) -> T {
        self.energy.eval(&self.space, xi)
    }
}

/// Operators of one time step.
pub struct FrozenSystem<'a, T: Clone> {
    model: &'a AllenCahnModel<T>,
    linear: Cow<'a, SparseMatrix<T>>,
    mobility: Cow<'a, [T]>,
}

impl<T: Scalar> GradientSystem<T> for FrozenSystem<'_, T> {
    fn dim(&self) -> usize {
        self.model.space.n_dofs()
    }

    fn mass(&self) -> &SparseMatrix<T> {
        &self.model.mass
    }

    fn linear(&self) -> &SparseMatrix<T> {
        &self.linear
    }

    fn add_reaction(&self, xi: &[T], scale: T, out: &mut [T]) {
        add_reaction(&self.model.space, xi, &self.model.params.potential, &self.mobility, scale, out);
    }

    fn add_reaction_jacobian(&self, xi: &[T], scale: T, jac: &mut SparseMatrix<T>) {
        self.add_reaction_jacobian_sum(&[(xi, scale)], jac);
    }

    fn add_reaction_sum(&self, states: &[(&[T], T)], out: &mut [T]) {
        add_reaction_sum(&self.model.space, states, &self.model.params.potential, &self.mobility, out);
    }

    fn add_reaction_jacobian_sum(&self, states: &[(&[T], T)], jac: &mut SparseMatrix<T>) {
        let space = &self.model.space;
        let n = space.n_local();
        let mut blocks = vec![T::zero(); space.n_elements() * n * n];
        add_reaction_jacobian_blocks_sum(space, states, &self.model.params.potential, &self.mobility, &mut blocks);
        jac.add_block_diagonal(T::one(), n, &blocks).expect("element blocks lie in the operator pattern");
    }

    fn block_size(&self) -> usize {
        self.model.space.n_local()
    }
}

impl<T: Scalar> Evolution<T> for AllenCahnModel<T> {
    type System<'a> = FrozenSystem<'a, T>;

    fn freeze(&self, xi_n: &[T]) -> Result<FrozenSystem<'_, T>, AssemblyError> {
        self.frozen_at(xi_n)
    }

    fn energy(&self, xi: &[T]) -> T {
        AllenCahnModel::energy(self, xi)
    }

    fn extrema(&self, xi: &[T]) -> (T, T) {
        DgSpace::nodal_extrema(xi)
    }

    fn mass(&self) -> &SparseMatrix<T> {
        &self.mass
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::integrators::{avf_jacobian, avf_residual, avf_step, NewtonSettings};
    use crate::linalg::LinearSolver;
    use crate::mesh::{build_mesh_1d, build_mesh_2d};
    use crate::space::QuadratureRule;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn model_1d(n: usize, mobility: Mobility<f64>, potential: Potential<f64>) -> AllenCahnModel<f64> {
        let space = Arc::new(DgSpace::new(Arc::new(build_mesh_1d(2.0 * PI, n).unwrap()), 1).unwrap());
        AllenCahnModel::new(space, ModelParams::new(0.3, potential, mobility)).unwrap()
    }

    #[test]
    fn uniform_equilibrium_has_zero_residual() {
        let m = model_1d(8, Mobility::Constant(1.0), Potential::DoubleWell);
        let xi = vec![1.0; m.space().n_dofs()];
        let sys = m.frozen_at(&xi).unwrap();
        let r = avf_residual(&sys, &xi, &xi, 0.7, &QuadratureRule::interval(4));
        assert!(r.iter().all(|v| v.abs() < 1e-14));
        assert!(m.energy(&xi).abs() < 1e-13);
    }

    #[test]
    fn jacobian_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for (mobility, potential) in [
            (Mobility::Constant(1.0), Potential::DoubleWell),
            (Mobility::Degenerate(2.0), Potential::logarithmic(0.5, 0.95)),
        ] {
            let m = model_1d(6, mobility, potential);
            let n = m.space().n_dofs();
            let xn: Vec<f64> = (0..n).map(|_| rng.gen_range(-0.9..0.9)).collect();
            let xi: Vec<f64> = xn.iter().map(|x| x + rng.gen_range(-0.05..0.05)).collect();
            let v: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let sys = m.frozen_at(&xn).unwrap();
            let rule = QuadratureRule::interval(4);
            let jv = avf_jacobian(&sys, &xi, &xn, 0.3, &rule).spmv(&v).unwrap();
            let h = 1e-6;
            let at = |c: f64| xi.iter().zip(&v).map(|(x, d)| x + c * d).collect::<Vec<_>>();
            let rp = avf_residual(&sys, &at(h), &xn, 0.3, &rule);
            let rm = avf_residual(&sys, &at(-h), &xn, 0.3, &rule);
            let err = rp.iter().zip(&rm).zip(&jv).map(|((a, b), j)| ((a - b) / (2.0 * h) - j).powi(2)).sum::<f64>();
            let scale = jv.iter().map(|j| j * j).sum::<f64>();
            assert!(err.sqrt() <= 1e-6 * scale.sqrt());
        }
    }

    #[test]
    fn degenerate_mobility_freezes_the_operator() {
        let m = model_1d(6, Mobility::Degenerate(2.0), Potential::DoubleWell);
        let ones = vec![1.0; m.space().n_dofs()];
        let sys = m.frozen_at(&ones).unwrap();
        assert!(sys.linear().max_abs() == 0.0);
        let half = vec![0.5; m.space().n_dofs()];
        assert!(m.frozen_at(&half).unwrap().linear().max_abs() > 0.0);
    }

    #[test]
    fn avf_steps_decrease_the_energy_in_2d() {
        let space = Arc::new(DgSpace::new(Arc::new(build_mesh_2d(2.0 * PI, 2.0 * PI, 6, 6).unwrap()), 1).unwrap());
        let m =
            AllenCahnModel::new(space.clone(), ModelParams::new(0.4, Potential::DoubleWell, Mobility::Constant(1.0)))
                .unwrap();
        let mut xi = space.l2_project(|p| 0.5 * p[0].sin() * p[1].cos() + 0.1);
        let mut solver = LinearSolver::new(space.n_local());
        for dt in [0.05, 0.2, 1.0, 3.0] {
            let sys = m.frozen_at(&xi).unwrap();
            let next = avf_step(&sys, &xi, dt, &NewtonSettings::default(), &mut solver);
            assert!(next.converged);
            let (e0, e1) = (m.energy(&xi), m.energy(&next.xi_next));
            assert!(e1 <= e0 + 1e-8 * (1.0 + e0.abs()), "{e0} -> {e1}");
            xi = next.xi_next;
        }
    }
}
