//! Global SIPG operators, the reaction vector and its Jacobian, and the
//! discrete energy.
//!
//! The stiffness form for a coefficient `kappa` is
//!
//! ```text
//! a(u, v) = sum_K int_K kappa grad u . grad v
//!         - sum_E int_E {kappa grad u} . [v] + {kappa grad v} . [u]
//!         + sum_E sigma kappa / h_E int_E [u] . [v]
//! ```
//!
//! where `E` runs over interior edges and periodic pairs alike. On an edge
//! `kappa` is the mean of its two one-sided values.

use std::collections::hash_map::DefaultHasher;
use std::hash::{Hash, Hasher};

use rayon::prelude::*;
use thiserror::Error;

use crate::linalg::SparseMatrix;
use crate::physics::Potential;
use crate::scalar::Scalar;
use crate::space::DgSpace;

/// Element count above which per-element loops run on the rayon pool.
const PARALLEL_THRESHOLD: usize = 2048;

#[derive(Debug, Error, PartialEq)]
pub enum AssemblyError {
    #[error("diffusion coefficient is negative ({value}) at {location}")]
    NegativeCoefficient { value: f64, location: String },
    #[error("penalty parameter must be positive, got {0}")]
    BadPenalty(f64),
    #[error("non-finite reaction value in element {element}")]
    NonFinite { element: usize },
    #[error("coefficient field sized for a different space")]
    FieldMismatch,
}

/// Which interfaces contribute edge terms.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum EdgeSet {
    #[default]
    All,
    InteriorOnly,
}

/// Selects the pieces of the SIPG form to assemble.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SipgTerms {
    pub volume: bool,
    pub consistency: bool,
    pub penalty: bool,
}

impl SipgTerms {
    pub const ALL: SipgTerms = SipgTerms { volume: true, consistency: true, penalty: true };
    pub const PENALTY: SipgTerms = SipgTerms { volume: false, consistency: false, penalty: true };
}

/// Penalty default: `2.5 (q+1)^2` in 1D, `(q+1)(q+2)` in 2D.
pub fn default_sigma(dimension: usize, degree: usize) -> f64 {
    let q = degree as f64;
    if dimension == 1 {
        2.5 * (q + 1.0) * (q + 1.0)
    } else {
        (q + 1.0) * (q + 2.0)
    }
}

/// A scalar coefficient sampled at every volume quadrature point
/// (`[k * nq + qp]`) and, averaged over both sides, at every edge
/// quadrature point (`[trace * ne + qp]`).
#[derive(Clone, Debug, PartialEq)]
pub struct CoefficientField<T> {
    pub volume: Vec<T>,
    pub edge: Vec<T>,
}

impl<T: Scalar> CoefficientField<T> {
    pub fn constant(space: &DgSpace<T>, c: T) -> Self {
        let nv = space.n_elements() * space.volume_rule().len();
        let ne: usize = space.traces().iter().map(|t| t.n_points()).sum();
        CoefficientField { volume: vec![c; nv], edge: vec![c; ne] }
    }

    /// `g(u_h)` for the field with coefficients `xi`.
    pub fn from_state<G: Fn(T) -> T>(space: &DgSpace<T>, xi: &[T], g: G) -> Self {
        let volume = space.volume_values(xi).into_iter().map(&g).collect();
        let n = space.n_local();
        let mut edge = Vec::new();
        for t in space.traces() {
            let (cm, cp) = (space.block(xi, t.minus), space.block(xi, t.plus));
            for qp in 0..t.n_points() {
                let um = crate::scalar::dot(&t.phi_minus[qp * n..(qp + 1) * n], cm);
                let up = crate::scalar::dot(&t.phi_plus[qp * n..(qp + 1) * n], cp);
                edge.push((g(um) + g(up)) / T::lit(2.0));
            }
        }
        CoefficientField { volume, edge }
    }

    pub fn map<G: Fn(T) -> T>(&self, g: G) -> Self {
        CoefficientField {
            volume: self.volume.iter().map(|&v| g(v)).collect(),
            edge: self.edge.iter().map(|&v| g(v)).collect(),
        }
    }

    fn fits(&self, space: &DgSpace<T>) -> bool {
        let ne: usize = space.traces().iter().map(|t| t.n_points()).sum();
        self.volume.len() == space.n_elements() * space.volume_rule().len() && self.edge.len() == ne
    }

    /// Hash of the coefficient bit patterns, for cache invalidation.
    pub fn fingerprint(&self) -> u64 {
        let mut h = DefaultHasher::new();
        for v in self.volume.iter().chain(&self.edge) {
            v.as_f64().to_bits().hash(&mut h);
        }
        h.finish()
    }
}

#[derive(Clone, Debug)]
pub struct AssembledOperator<T> {
    pub matrix: SparseMatrix<T>,
    pub fingerprint: u64,
}

/// Block-diagonal mass matrix.
pub fn assemble_mass<T: Scalar>(space: &DgSpace<T>) -> AssembledOperator<T> {
    let n = space.n_local();
    let refm = space.ref_mass();
    let mut t = Vec::with_capacity(space.n_elements() * n * n);
    for k in 0..space.n_elements() {
        let det = space.map(k).det;
        for i in 0..n {
            for j in 0..n {
                t.push((k * n + i, k * n + j, det * refm[i * n + j]));
            }
        }
    }
    AssembledOperator {
        matrix: SparseMatrix::from_triplets(space.n_dofs(), &t).expect("indices in range"),
        fingerprint: 0,
    }
}

pub fn assemble_stiffness<T: Scalar>(
    space: &DgSpace<T>,
    kappa: &CoefficientField<T>,
    sigma: T,
) -> Result<AssembledOperator<T>, AssemblyError> {
    assemble_stiffness_parts(space, kappa, sigma, SipgTerms::ALL, EdgeSet::All)
}

pub fn assemble_stiffness_parts<T: Scalar>(
    space: &DgSpace<T>,
    kappa: &CoefficientField<T>,
    sigma: T,
    terms: SipgTerms,
    edges: EdgeSet,
) -> Result<AssembledOperator<T>, AssemblyError> {
    check_stiffness_input(space, kappa, sigma)?;
    let n = space.n_local();
    let mut t = Vec::with_capacity(space.n_elements() * n * n + space.traces().len() * 4 * n * n);
    stiffness_blocks(space, kappa, sigma, terms, edges, |ea, eb, local| {
        for i in 0..n {
            for j in 0..n {
                t.push((ea * n + i, eb * n + j, local[i * n + j]));
            }
        }
    });
    Ok(AssembledOperator {
        matrix: SparseMatrix::from_triplets(space.n_dofs(), &t).expect("indices in range"),
        fingerprint: kappa.fingerprint() ^ sigma.as_f64().to_bits(),
    })
}

/// Overwrites the values of `matrix`, whose pattern must come from an
/// earlier full assembly on `space`, with the SIPG operator for `kappa`.
pub fn reassemble_stiffness<T: Scalar>(
    space: &DgSpace<T>,
    kappa: &CoefficientField<T>,
    sigma: T,
    matrix: &mut SparseMatrix<T>,
) -> Result<(), AssemblyError> {
    check_stiffness_input(space, kappa, sigma)?;
    if matrix.dim() != space.n_dofs() {
        return Err(AssemblyError::FieldMismatch);
    }
    let n = space.n_local();
    matrix.values_mut().iter_mut().for_each(|v| *v = T::zero());
    stiffness_blocks(space, kappa, sigma, SipgTerms::ALL, EdgeSet::All, |ea, eb, local| {
        for i in 0..n {
            // A block's columns are consecutive in the sorted row.
            let start = matrix.index_of(ea * n + i, eb * n).expect("block in pattern");
            let row = &mut matrix.values_mut()[start..start + n];
            for (v, &l) in row.iter_mut().zip(&local[i * n..(i + 1) * n]) {
                *v += l;
            }
        }
    });
    Ok(())
}

fn check_stiffness_input<T: Scalar>(
    space: &DgSpace<T>,
    kappa: &CoefficientField<T>,
    sigma: T,
) -> Result<(), AssemblyError> {
    if !(sigma > T::zero()) {
        return Err(AssemblyError::BadPenalty(sigma.as_f64()));
    }
    if !kappa.fits(space) {
        return Err(AssemblyError::FieldMismatch);
    }
    if let Some(i) = kappa.volume.iter().position(|&v| !(v >= T::zero())) {
        return Err(AssemblyError::NegativeCoefficient {
            value: kappa.volume[i].as_f64(),
            location: format!("volume point {i}"),
        });
    }
    if let Some(i) = kappa.edge.iter().position(|&v| !(v >= T::zero())) {
        return Err(AssemblyError::NegativeCoefficient {
            value: kappa.edge[i].as_f64(),
            location: format!("edge point {i}"),
        });
    }
    Ok(())
}

/// Calls `emit(row_element, col_element, block)` for every local
/// `n_local x n_local` contribution. Blocks may repeat and must be summed.
fn stiffness_blocks<T: Scalar, F: FnMut(usize, usize, &[T])>(
    space: &DgSpace<T>,
    kappa: &CoefficientField<T>,
    sigma: T,
    terms: SipgTerms,
    edges: EdgeSet,
    mut emit: F,
) {
    let n = space.n_local();
    let nq = space.volume_rule().len();
    let half = T::lit(0.5);
    let mut grads = vec![[T::zero(); 2]; n];
    let mut local = vec![T::zero(); n * n];
    for k in 0..space.n_elements() {
        let map = space.map(k);
        local.iter_mut().for_each(|v| *v = T::zero());
        if terms.volume {
            for qp in 0..nq {
                let c = kappa.volume[k * nq + qp] * space.jxw(k, qp);
                for (g, &r) in grads.iter_mut().zip(space.ref_grad(qp)) {
                    *g = map.push_gradient(r);
                }
                for i in 0..n {
                    for j in 0..n {
                        local[i * n + j] += c * (grads[i][0] * grads[j][0] + grads[i][1] * grads[j][1]);
                    }
                }
            }
        }
        emit(k, k, &local);
    }

    let mut offset = 0;
    for tr in space.traces() {
        let np = tr.n_points();
        let base = offset;
        offset += np;
        if edges == EdgeSet::InteriorOnly && tr.periodic {
            continue;
        }
        let sides =
            [(tr.minus, &tr.phi_minus, &tr.dn_minus, T::one()), (tr.plus, &tr.phi_plus, &tr.dn_plus, -T::one())];
        let penalty = sigma / tr.measure;
        for &(ea, phi_a, dn_a, sa) in &sides {
            for &(eb, phi_b, dn_b, sb) in &sides {
                local.iter_mut().for_each(|v| *v = T::zero());
                for qp in 0..np {
                    let c = kappa.edge[base + qp] * tr.weights[qp];
                    for i in 0..n {
                        let jump_i = sa * phi_a[qp * n + i];
                        let avg_i = half * dn_a[qp * n + i];
                        for j in 0..n {
                            let jump_j = sb * phi_b[qp * n + j];
                            let avg_j = half * dn_b[qp * n + j];
                            let mut v = T::zero();
                            if terms.consistency {
                                v -= avg_j * jump_i + avg_i * jump_j;
                            }
                            if terms.penalty {
                                v += penalty * jump_i * jump_j;
                            }
                            local[i * n + j] += c * v;
                        }
                    }
                }
                emit(ea, eb, &local);
            }
        }
    }
}

fn for_each_element<T: Scalar, F>(space: &DgSpace<T>, out: &mut [T], chunk: usize, f: F)
where
    F: Fn(usize, &mut [T]) + Sync + Send,
{
    if space.n_elements() >= PARALLEL_THRESHOLD {
        out.par_chunks_mut(chunk).enumerate().for_each(|(k, c)| f(k, c));
    } else {
        out.chunks_mut(chunk).enumerate().for_each(|(k, c)| f(k, c));
    }
}

/// `out += scale * r(xi)` with `r_i = (mu f(u_h), phi_i)`.
pub fn add_reaction<T: Scalar>(
    space: &DgSpace<T>,
    xi: &[T],
    potential: &Potential<T>,
    mobility: &[T],
    scale: T,
    out: &mut [T],
) {
    add_reaction_sum(space, &[(xi, scale)], potential, mobility, out);
}

/// `out += sum_g scale_g * r(xi_g)` over `(xi_g, scale_g)` pairs, sharing the
/// test-function sums across states.
pub fn add_reaction_sum<T: Scalar>(
    space: &DgSpace<T>,
    states: &[(&[T], T)],
    potential: &Potential<T>,
    mobility: &[T],
    out: &mut [T],
) {
    let n = space.n_local();
    let nq = space.volume_rule().len();
    for_each_element(space, out, n, |k, r| {
        for qp in 0..nq {
            let phi = space.ref_phi(qp);
            let mut fsum = T::zero();
            for &(xi, scale) in states {
                fsum += scale * potential.reaction(crate::scalar::dot(phi, space.block(xi, k)));
            }
            let w = space.jxw(k, qp) * mobility[k * nq + qp] * fsum;
            for i in 0..n {
                r[i] += w * phi[i];
            }
        }
    });
}

pub fn assemble_reaction<T: Scalar>(
    space: &DgSpace<T>,
    xi: &[T],
    potential: &Potential<T>,
    mobility: &[T],
) -> Result<Vec<T>, AssemblyError> {
    if mobility.len() != space.n_elements() * space.volume_rule().len() {
        return Err(AssemblyError::FieldMismatch);
    }
    let mut r = vec![T::zero(); space.n_dofs()];
    add_reaction(space, xi, potential, mobility, T::one(), &mut r);
    if let Some(i) = r.iter().position(|v| !v.is_finite()) {
        return Err(AssemblyError::NonFinite { element: i / space.n_local() });
    }
    Ok(r)
}

/// `blocks += scale * J_r(xi)` where `blocks` holds one dense row-major
/// `n_local x n_local` block per element.
pub fn add_reaction_jacobian_blocks<T: Scalar>(
    space: &DgSpace<T>,
    xi: &[T],
    potential: &Potential<T>,
    mobility: &[T],
    scale: T,
    blocks: &mut [T],
) {
    add_reaction_jacobian_blocks_sum(space, &[(xi, scale)], potential, mobility, blocks);
}

/// `blocks += sum_g scale_g * J_r(xi_g)`, one outer product per quadrature
/// point for all states.
pub fn add_reaction_jacobian_blocks_sum<T: Scalar>(
    space: &DgSpace<T>,
    states: &[(&[T], T)],
    potential: &Potential<T>,
    mobility: &[T],
    blocks: &mut [T],
) {
    let n = space.n_local();
    let nq = space.volume_rule().len();
    for_each_element(space, blocks, n * n, |k, b| {
        for qp in 0..nq {
            let phi = space.ref_phi(qp);
            let mut dsum = T::zero();
            for &(xi, scale) in states {
                dsum += scale * potential.reaction_derivative(crate::scalar::dot(phi, space.block(xi, k)));
            }
            let w = space.jxw(k, qp) * mobility[k * nq + qp] * dsum;
            for i in 0..n {
                let wi = w * phi[i];
                for j in 0..n {
                    b[i * n + j] += wi * phi[j];
                }
            }
        }
    });
}

/// Block-diagonal `(J_r)_ij = int mu f'(u_h) phi_j phi_i`.
pub fn assemble_reaction_jacobian<T: Scalar>(
    space: &DgSpace<T>,
    xi_hat: &[T],
    potential: &Potential<T>,
    mobility: &[T],
) -> Result<SparseMatrix<T>, AssemblyError> {
    if mobility.len() != space.n_elements() * space.volume_rule().len() {
        return Err(AssemblyError::FieldMismatch);
    }
    let n = space.n_local();
    let mut blocks = vec![T::zero(); space.n_elements() * n * n];
    add_reaction_jacobian_blocks(space, xi_hat, potential, mobility, T::one(), &mut blocks);
    let mut t = Vec::with_capacity(blocks.len());
    for k in 0..space.n_elements() {
        for i in 0..n {
            for j in 0..n {
                t.push((k * n + i, k * n + j, blocks[(k * n + i) * n + j]));
            }
        }
    }
    Ok(SparseMatrix::from_triplets(space.n_dofs(), &t).expect("indices in range"))
}

/// `(F(u_h), 1)` by volume quadrature.
pub fn potential_energy<T: Scalar>(space: &DgSpace<T>, xi: &[T], potential: &Potential<T>) -> T {
    let nq = space.volume_rule().len();
    let vals = space.volume_values(xi);
    let mut e = T::zero();
    for k in 0..space.n_elements() {
        for qp in 0..nq {
            e += space.jxw(k, qp) * potential.energy_density(vals[k * nq + qp]);
        }
    }
    e
}

/// Discrete energy `1/2 a(eps^2; u, u) + (F(u), 1)` with the stiffness
/// assembled once and reused for every evaluation.
#[derive(Clone, Debug)]
pub struct EnergyFunctional<T> {
    stiffness: SparseMatrix<T>,
    potential: Potential<T>,
}

impl<T: Scalar> EnergyFunctional<T> {
    pub fn new(
        space: &DgSpace<T>,
        potential: Potential<T>,
        epsilon: T,
        sigma: T,
        edges: EdgeSet,
    ) -> Result<Self, AssemblyError> {
        let kappa = CoefficientField::constant(space, epsilon * epsilon);
        let stiffness = assemble_stiffness_parts(space, &kappa, sigma, SipgTerms::ALL, edges)?.matrix;
        Ok(EnergyFunctional { stiffness, potential })
    }

    pub fn eval(&self, space: &DgSpace<T>, xi: &[T]) -> T {
        self.stiffness.quadratic_form(xi) / T::lit(2.0) + potential_energy(space, xi, &self.potential)
    }
}

pub fn discrete_energy<T: Scalar>(
    space: &DgSpace<T>,
    xi: &[T],
    potential: &Potential<T>,
    epsilon: T,
    sigma: T,
    edges: EdgeSet,
) -> Result<T, AssemblyError> {
    Ok(EnergyFunctional::new(space, *potential, epsilon, sigma, edges)?.eval(space, xi))
}
