//! Discontinuous piecewise-polynomial space on a [`Mesh`].
//!
//! Degrees of freedom are blocked per element: entries
//! `k * n_local .. (k + 1) * n_local` belong to element `k` and are the
//! values of the field at that element's Lagrange nodes.

pub mod basis;
pub mod quadrature;

use std::sync::Arc;

use thiserror::Error;

use crate::mesh::{AffineMap, Interface, Mesh, Point};
use crate::scalar::Scalar;

pub use basis::LagrangeBasis;
pub use quadrature::QuadratureRule;

#[derive(Debug, Error, PartialEq)]
pub enum SpaceError {
    #[error("unsupported polynomial degree {0} (expected 1 or 2)")]
    UnsupportedDegree(usize),
    #[error("element {element} out of range (mesh has {count})")]
    ElementOutOfRange { element: usize, count: usize },
    #[error("coefficient vector has length {got}, expected {expected}")]
    LengthMismatch { got: usize, expected: usize },
}

/// Basis traces on both sides of one interface, at the edge quadrature
/// points. Arrays are indexed `[qp * n_local + i]`.
#[derive(Clone, Debug)]
pub struct InterfaceTrace<T> {
    pub minus: usize,
    pub plus: usize,
    /// Physical quadrature weights (unit for 1D point faces).
    pub weights: Vec<T>,
    pub phi_minus: Vec<T>,
    pub phi_plus: Vec<T>,
    /// Normal derivatives `grad(phi) . n`, with `n` the interface normal.
    pub dn_minus: Vec<T>,
    pub dn_plus: Vec<T>,
    pub measure: T,
    pub periodic: bool,
}

impl<T> InterfaceTrace<T> {
    pub fn n_points(&self) -> usize {
        self.weights.len()
    }
}

#[derive(Clone, Debug)]
pub struct DgSpace<T> {
    mesh: Arc<Mesh<T>>,
    basis: LagrangeBasis,
    volume_rule: QuadratureRule<T>,
    edge_rule: QuadratureRule<T>,
    maps: Vec<AffineMap<T>>,
    /// Reference basis values at volume points, `[qp * n_local + i]`.
    ref_phi: Vec<T>,
    ref_grad: Vec<Point<T>>,
    /// Reference mass matrix, `n_local x n_local` row-major.
    ref_mass: Vec<T>,
    traces: Vec<InterfaceTrace<T>>,
}

impl<T: Scalar> DgSpace<T> {
    pub fn new(mesh: Arc<Mesh<T>>, degree: usize) -> Result<Self, SpaceError> {
        let dim = mesh.dimension();
        let basis = LagrangeBasis::new(dim, degree).ok_or(SpaceError::UnsupportedDegree(degree))?;
        let (volume_rule, edge_rule) = if dim == 1 {
            (QuadratureRule::interval(7), QuadratureRule::point())
        } else {
            (QuadratureRule::triangle(6), QuadratureRule::interval(degree + 2))
        };
        let n = basis.n_local();
        let nq = volume_rule.len();
        let mut ref_phi = vec![T::zero(); nq * n];
        let mut ref_grad = vec![[T::zero(); 2]; nq * n];
        for (qp, &r) in volume_rule.points.iter().enumerate() {
            basis.eval(r, &mut ref_phi[qp * n..(qp + 1) * n]);
            basis.grad(r, &mut ref_grad[qp * n..(qp + 1) * n]);
        }
        let mut ref_mass = vec![T::zero(); n * n];
        for (qp, &w) in volume_rule.weights.iter().enumerate() {
            let phi = &ref_phi[qp * n..(qp + 1) * n];
            for i in 0..n {
                for j in 0..n {
                    ref_mass[i * n + j] += w * phi[i] * phi[j];
                }
            }
        }
        let maps = (0..mesh.n_elements()).map(|k| mesh.affine_map(k)).collect();
        let mut space =
            DgSpace { mesh, basis, volume_rule, edge_rule, maps, ref_phi, ref_grad, ref_mass, traces: Vec::new() };
        space.traces = space.mesh.interfaces().map(|e| space.build_trace(e)).collect();
        Ok(space)
    }

    fn build_trace(&self, e: &Interface<T>) -> InterfaceTrace<T> {
        let mesh = &self.mesh;
        let n = self.n_local();
        let face = mesh.face_vertices(e.minus.element, e.minus.face);
        let points: Vec<(Point<T>, T)> = if mesh.dimension() == 1 {
            vec![(face[0], T::one())]
        } else {
            let (a, b) = (face[0], face[1]);
            self.edge_rule
                .points
                .iter()
                .zip(&self.edge_rule.weights)
                .map(|(s, &w)| {
                    let s = s[0];
                    ([a[0] + s * (b[0] - a[0]), a[1] + s * (b[1] - a[1])], w * e.measure)
                })
                .collect()
        };
        let np = points.len();
        let mut trace = InterfaceTrace {
            minus: e.minus.element,
            plus: e.plus.element,
            weights: points.iter().map(|p| p.1).collect(),
            phi_minus: vec![T::zero(); np * n],
            phi_plus: vec![T::zero(); np * n],
            dn_minus: vec![T::zero(); np * n],
            dn_plus: vec![T::zero(); np * n],
            measure: e.measure,
            periodic: e.is_periodic(),
        };
        let mut grads = vec![[T::zero(); 2]; n];
        for (qp, &(x, _)) in points.iter().enumerate() {
            let xp = [x[0] + e.shift[0], x[1] + e.shift[1]];
            for (elem, phys, phi, dn) in [
                (e.minus.element, x, &mut trace.phi_minus, &mut trace.dn_minus),
                (e.plus.element, xp, &mut trace.phi_plus, &mut trace.dn_plus),
            ] {
                let map = &self.maps[elem];
                let r = map.pull_back(phys);
                self.basis.eval(r, &mut phi[qp * n..(qp + 1) * n]);
                self.basis.grad(r, &mut grads);
                for i in 0..n {
                    let g = map.push_gradient(grads[i]);
                    dn[qp * n + i] = g[0] * e.normal[0] + g[1] * e.normal[1];
                }
            }
        }
        trace
    }

    pub fn mesh(&self) -> &Arc<Mesh<T>> {
        &self.mesh
    }

    pub fn basis(&self) -> LagrangeBasis {
        self.basis
    }

    pub fn degree(&self) -> usize {
        self.basis.degree()
    }

    pub fn n_local(&self) -> usize {
        self.basis.n_local()
    }

    pub fn n_elements(&self) -> usize {
        self.mesh.n_elements()
    }

    pub fn n_dofs(&self) -> usize {
        self.n_local() * self.n_elements()
    }

    pub fn volume_rule(&self) -> &QuadratureRule<T> {
        &self.volume_rule
    }

    pub fn edge_rule(&self) -> &QuadratureRule<T> {
        &self.edge_rule
    }

    pub fn map(&self, k: usize) -> &AffineMap<T> {
        &self.maps[k]
    }

    /// Reference basis values at volume point `qp`.
    pub fn ref_phi(&self, qp: usize) -> &[T] {
        let n = self.n_local();
        &self.ref_phi[qp * n..(qp + 1) * n]
    }

    pub fn ref_grad(&self, qp: usize) -> &[Point<T>] {
        let n = self.n_local();
        &self.ref_grad[qp * n..(qp + 1) * n]
    }

    /// Reference-element mass matrix, row-major.
    pub fn ref_mass(&self) -> &[T] {
        &self.ref_mass
    }

    /// Volume weight of point `qp` on element `k` in physical measure.
    #[inline]
    pub fn jxw(&self, k: usize, qp: usize) -> T {
        self.volume_rule.weights[qp] * self.maps[k].det
    }

    /// Interface traces: interior edges first, then periodic pairs.
    pub fn traces(&self) -> &[InterfaceTrace<T>] {
        &self.traces
    }

    pub fn check_len(&self, xi: &[T]) -> Result<(), SpaceError> {
        if xi.len() == self.n_dofs() {
            Ok(())
        } else {
            Err(SpaceError::LengthMismatch { got: xi.len(), expected: self.n_dofs() })
        }
    }

    pub fn block<'a>(&self, xi: &'a [T], k: usize) -> &'a [T] {
        let n = self.n_local();
        &xi[k * n..(k + 1) * n]
    }

    /// `sum_j xi_j^k phi_j(ref_point)` on element `k`.
    pub fn eval_field(&self, xi: &[T], element: usize, ref_point: Point<T>) -> Result<T, SpaceError> {
        self.check_len(xi)?;
        if element >= self.n_elements() {
            return Err(SpaceError::ElementOutOfRange { element, count: self.n_elements() });
        }
        let mut phi = vec![T::zero(); self.n_local()];
        self.basis.eval(ref_point, &mut phi);
        Ok(crate::scalar::dot(&phi, self.block(xi, element)))
    }

    /// Evaluates the field at a physical point (wrapped periodically).
    pub fn eval_at(&self, xi: &[T], x: Point<T>) -> Result<T, SpaceError> {
        let (k, r) = self.mesh.locate(x);
        self.eval_field(xi, k, r)
    }

    pub fn physical_point(&self, k: usize, qp: usize) -> Point<T> {
        self.maps[k].map(self.volume_rule.points[qp])
    }

    /// Physical coordinates of the Lagrange nodes of element `k`.
    pub fn nodal_points(&self, k: usize) -> Vec<Point<T>> {
        self.basis.nodes().into_iter().map(|r| self.maps[k].map(r)).collect()
    }

    /// Field values at every volume quadrature point, `[k * nq + qp]`.
    pub fn volume_values(&self, xi: &[T]) -> Vec<T> {
        let n = self.n_local();
        let nq = self.volume_rule.len();
        let mut out = Vec::with_capacity(self.n_elements() * nq);
        for k in 0..self.n_elements() {
            let c = self.block(xi, k);
            for qp in 0..nq {
                let phi = &self.ref_phi[qp * n..(qp + 1) * n];
                out.push(crate::scalar::dot(phi, c));
            }
        }
        out
    }

    /// Orthogonal L2 projection, solved element by element.
    pub fn l2_project<F: Fn(Point<T>) -> T>(&self, f: F) -> Vec<T> {
        let n = self.n_local();
        let factor = cholesky(&self.ref_mass, n).expect("reference mass matrix is SPD");
        let mut xi = vec![T::zero(); self.n_dofs()];
        for k in 0..self.n_elements() {
            let b = &mut xi[k * n..(k + 1) * n];
            for (qp, &w) in self.volume_rule.weights.iter().enumerate() {
                let fx = f(self.physical_point(k, qp));
                let phi = self.ref_phi(qp);
                for i in 0..n {
                    b[i] += w * fx * phi[i];
                }
            }
            // the element Jacobian cancels between (f, phi_i) and M_K
            cholesky_solve(&factor, n, b);
        }
        xi
    }

    /// Nodal interpolation: coefficients are `f` at each element's nodes.
    pub fn interpolate<F: Fn(Point<T>) -> T>(&self, f: F) -> Vec<T> {
        (0..self.n_elements()).flat_map(|k| self.nodal_points(k)).map(f).collect()
    }

    /// Smallest and largest nodal value.
    pub fn nodal_extrema(xi: &[T]) -> (T, T) {
        xi.iter().fold((T::infinity(), T::neg_infinity()), |(lo, hi), &v| (lo.min(v), hi.max(v)))
    }
}

fn cholesky<T: Scalar>(a: &[T], n: usize) -> Option<Vec<T>> {
    let mut l = vec![T::zero(); n * n];
    for i in 0..n {
        for j in 0..=i {
            let mut s = a[i * n + j];
            for k in 0..j {
                s -= l[i * n + k] * l[j * n + k];
            }
            if i == j {
                if s <= T::zero() {
                    return None;
                }
                l[i * n + i] = s.sqrt();
            } else {
                l[i * n + j] = s / l[j * n + j];
            }
        }
    }
    Some(l)
}

fn cholesky_solve<T: Scalar>(l: &[T], n: usize, b: &mut [T]) {
    for i in 0..n {
        let mut s = b[i];
        for k in 0..i {
            s -= l[i * n + k] * b[k];
        }
        b[i] = s / l[i * n + i];
    }
    for i in (0..n).rev() {
        let mut s = b[i];
        for k in i + 1..n {
            s -= l[k * n + i] * b[k];
        }
        b[i] = s / l[i * n + i];
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{build_mesh_1d, build_mesh_2d};
    use std::f64::consts::PI;

    fn space_1d(n: usize, q: usize) -> DgSpace<f64> {
        DgSpace::new(Arc::new(build_mesh_1d(2.0 * PI, n).unwrap()), q).unwrap()
    }

    fn space_2d(n: usize, q: usize) -> DgSpace<f64> {
        DgSpace::new(Arc::new(build_mesh_2d(1.0, 2.0, n, n).unwrap()), q).unwrap()
    }

    /// L2 norm of the difference between the field and `f`, by the volume rule.
    fn l2_error(s: &DgSpace<f64>, xi: &[f64], f: impl Fn(Point<f64>) -> f64) -> f64 {
        let vals = s.volume_values(xi);
        let nq = s.volume_rule().len();
        let mut e = 0.0;
        for k in 0..s.n_elements() {
            for qp in 0..nq {
                let d = vals[k * nq + qp] - f(s.physical_point(k, qp));
                e += s.jxw(k, qp) * d * d;
            }
        }
        e.sqrt()
    }

    #[test]
    fn dimensions() {
        assert_eq!(space_1d(10, 1).n_dofs(), 20);
        assert_eq!(space_1d(10, 2).n_local(), 3);
        assert_eq!(space_2d(3, 1).n_local(), 3);
        assert_eq!(space_2d(3, 2).n_dofs(), 6 * 18);
        assert_eq!(
            DgSpace::new(Arc::new(build_mesh_1d(1.0, 4).unwrap()), 3).unwrap_err(),
            SpaceError::UnsupportedDegree(3)
        );
    }

    #[test]
    fn eval_field_examples() {
        let s = space_1d(8, 1);
        let ones = vec![1.0; s.n_dofs()];
        assert!((s.eval_field(&ones, 3, [0.37, 0.0]).unwrap() - 1.0).abs() < 1e-15);
        let x = s.interpolate(|p| p[0]);
        let k = 5;
        let r = [0.3, 0.0];
        let expect = s.map(k).map(r)[0];
        assert!((s.eval_field(&x, k, r).unwrap() - expect).abs() < 1e-14);
        let mut e = vec![0.0; s.n_dofs()];
        e[2 * k + 1] = 1.0;
        assert!((s.eval_field(&e, k, [1.0, 0.0]).unwrap() - 1.0).abs() < 1e-15);
        assert!(s.eval_field(&e, k, [0.0, 0.0]).unwrap().abs() < 1e-15);
        assert_eq!(s.eval_field(&e, 8, r).unwrap_err(), SpaceError::ElementOutOfRange { element: 8, count: 8 });
    }

    #[test]
    fn projection_reproduces_polynomials() {
        for (s, f) in [
            (space_1d(6, 1), Box::new(|p: Point<f64>| 2.0 - 0.5 * p[0]) as Box<dyn Fn(Point<f64>) -> f64>),
            (space_1d(6, 2), Box::new(|p: Point<f64>| p[0] * p[0] - 3.0 * p[0])),
            (space_2d(3, 1), Box::new(|p: Point<f64>| 1.0 + p[0] - 2.0 * p[1])),
            (space_2d(3, 2), Box::new(|p: Point<f64>| p[0] * p[1] + p[1] * p[1])),
        ] {
            let xi = s.l2_project(&f);
            assert!(l2_error(&s, &xi, &f) < 1e-12);
            let back = s.l2_project(|x| s.eval_at(&xi, x).unwrap());
            let diff = xi.iter().zip(&back).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            assert!(diff < 1e-9, "idempotence {diff}");
        }
        let s = space_2d(4, 2);
        let xi = s.l2_project(|_| 0.7);
        assert!(xi.iter().all(|v| (v - 0.7).abs() < 1e-13));
    }

    #[test]
    fn projection_converges_at_second_order() {
        let f = |p: Point<f64>| 0.8 + p[0].sin();
        let errs: Vec<f64> = [50, 100, 200]
            .iter()
            .map(|&n| {
                let s = space_1d(n, 1);
                l2_error(&s, &s.l2_project(f), f)
            })
            .collect();
        for w in errs.windows(2) {
            let slope = (w[0] / w[1]).log2();
            assert!((slope - 2.0).abs() < 0.2, "slope {slope}");
        }
    }

    #[test]
    fn traces_agree_for_continuous_fields() {
        let s = space_2d(4, 2);
        let f = |p: Point<f64>| (2.0 * PI * p[0]).sin() + (PI * p[1]).cos();
        let xi = s.interpolate(f);
        let n = s.n_local();
        for t in s.traces() {
            for qp in 0..t.n_points() {
                let um: f64 = (0..n).map(|i| t.phi_minus[qp * n + i] * xi[t.minus * n + i]).sum();
                let up: f64 = (0..n).map(|i| t.phi_plus[qp * n + i] * xi[t.plus * n + i]).sum();
                assert!((um - up).abs() < 1e-12);
            }
        }
    }
}
