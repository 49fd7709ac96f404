//! Nodal Lagrange bases on the reference interval and triangle.
//!
//! Node order: interval `0, 1` then the midpoint for `q = 2`; triangle
//! vertices `(0,0), (1,0), (0,1)` then edge midpoints `m01, m12, m20`.

use crate::mesh::Point;
use crate::scalar::Scalar;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct LagrangeBasis {
    dimension: usize,
    degree: usize,
}

impl LagrangeBasis {
    /// Supported: `dimension` in `{1, 2}`, `degree` in `{1, 2}`.
    pub fn new(dimension: usize, degree: usize) -> Option<Self> {
        ((1..=2).contains(&dimension) && (1..=2).contains(&degree)).then_some(LagrangeBasis { dimension, degree })
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn n_local(&self) -> usize {
        let q = self.degree;
        if self.dimension == 1 {
            q + 1
        } else {
            (q + 1) * (q + 2) / 2
        }
    }

    pub fn nodes<T: Scalar>(&self) -> Vec<Point<T>> {
        let (z, h, o) = (T::zero(), T::lit(0.5), T::one());
        match (self.dimension, self.degree) {
            (1, 1) => vec![[z, z], [o, z]],
            (1, _) => vec![[z, z], [o, z], [h, z]],
            (_, 1) => vec![[z, z], [o, z], [z, o]],
            _ => vec![[z, z], [o, z], [z, o], [h, z], [h, h], [z, h]],
        }
    }

    pub fn eval<T: Scalar>(&self, r: Point<T>, out: &mut [T]) {
        let (one, two, four) = (T::one(), T::lit(2.0), T::lit(4.0));
        match (self.dimension, self.degree) {
            (1, 1) => {
                out[0] = one - r[0];
                out[1] = r[0];
            }
            (1, _) => {
                let x = r[0];
                out[0] = (two * x - one) * (x - one);
                out[1] = x * (two * x - one);
                out[2] = four * x * (one - x);
            }
            (_, 1) => {
                out[0] = one - r[0] - r[1];
                out[1] = r[0];
                out[2] = r[1];
            }
            _ => {
                let l = [one - r[0] - r[1], r[0], r[1]];
                for i in 0..3 {
                    out[i] = l[i] * (two * l[i] - one);
                }
                out[3] = four * l[0] * l[1];
                out[4] = four * l[1] * l[2];
                out[5] = four * l[2] * l[0];
            }
        }
    }

    /// Reference gradients; the second component is zero in 1D.
    pub fn grad<T: Scalar>(&self, r: Point<T>, out: &mut [Point<T>]) {
        let (z, one, four) = (T::zero(), T::one(), T::lit(4.0));
        match (self.dimension, self.degree) {
            (1, 1) => {
                out[0] = [-one, z];
                out[1] = [one, z];
            }
            (1, _) => {
                let x = r[0];
                out[0] = [four * x - T::lit(3.0), z];
                out[1] = [four * x - one, z];
                out[2] = [four - T::lit(8.0) * x, z];
            }
            (_, 1) => {
                out[0] = [-one, -one];
                out[1] = [one, z];
                out[2] = [z, one];
            }
            _ => {
                let l = [one - r[0] - r[1], r[0], r[1]];
                let dl = [[-one, -one], [one, z], [z, one]];
                let scale = |c: T, g: [T; 2]| [c * g[0], c * g[1]];
                for i in 0..3 {
                    out[i] = scale(four * l[i] - one, dl[i]);
                }
                let pair = |a: usize, b: usize| {
                    [four * (dl[a][0] * l[b] + l[a] * dl[b][0]), four * (dl[a][1] * l[b] + l[a] * dl[b][1])]
                };
                out[3] = pair(0, 1);
                out[4] = pair(1, 2);
                out[5] = pair(2, 0);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn all() -> Vec<LagrangeBasis> {
        let mut v = Vec::new();
        for d in 1..=2 {
            for q in 1..=2 {
                v.push(LagrangeBasis::new(d, q).unwrap());
            }
        }
        v
    }

    #[test]
    fn nodal_duality() {
        for b in all() {
            let n = b.n_local();
            let mut phi = vec![0.0; n];
            for (k, node) in b.nodes::<f64>().into_iter().enumerate() {
                b.eval(node, &mut phi);
                for (j, &v) in phi.iter().enumerate() {
                    let expect = if j == k { 1.0 } else { 0.0 };
                    assert!((v - expect).abs() < 1e-15, "{b:?} node {k} basis {j}");
                }
            }
        }
    }

    #[test]
    fn gradients_match_finite_differences() {
        let h = 1e-6;
        for b in all() {
            let n = b.n_local();
            let r = [0.23, if b.dimension() == 2 { 0.31 } else { 0.0 }];
            let mut g = vec![[0.0f64; 2]; n];
            b.grad(r, &mut g);
            let (mut p, mut m) = (vec![0.0; n], vec![0.0; n]);
            for axis in 0..b.dimension() {
                let mut rp = r;
                let mut rm = r;
                rp[axis] += h;
                rm[axis] -= h;
                b.eval(rp, &mut p);
                b.eval(rm, &mut m);
                for j in 0..n {
                    assert!(((p[j] - m[j]) / (2.0 * h) - g[j][axis]).abs() < 1e-8);
                }
            }
        }
    }

    #[test]
    fn rejects_unsupported() {
        assert!(LagrangeBasis::new(3, 1).is_none());
        assert!(LagrangeBasis::new(1, 3).is_none());
    }
}
