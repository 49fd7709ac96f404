//! Reference-element quadrature rules.

use crate::mesh::Point;
use crate::scalar::Scalar;

#[derive(Clone, Debug)]
pub struct QuadratureRule<T> {
    pub points: Vec<Point<T>>,
    pub weights: Vec<T>,
}

impl<T: Scalar> QuadratureRule<T> {
    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    /// `n`-point Gauss-Legendre rule on `[0, 1]`, exact to degree `2n - 1`.
    pub fn interval(n: usize) -> Self {
        let (x, w) = gauss_legendre_unit(n);
        QuadratureRule {
            points: x.iter().map(|&s| [T::lit(s), T::zero()]).collect(),
            weights: w.iter().map(|&v| T::lit(v)).collect(),
        }
    }

    /// Collapsed (Duffy) tensor rule on the reference triangle with `n * n`
    /// points, exact to total degree `2n - 2`.
    pub fn triangle(n: usize) -> Self {
        let (x, w) = gauss_legendre_unit(n);
        let mut points = Vec::with_capacity(n * n);
        let mut weights = Vec::with_capacity(n * n);
        for i in 0..n {
            for j in 0..n {
                let s = x[i];
                let t = x[j] * (1.0 - s);
                points.push([T::lit(s), T::lit(t)]);
                weights.push(T::lit(w[i] * w[j] * (1.0 - s)));
            }
        }
        QuadratureRule { points, weights }
    }

    /// A single unit-weight point, the "integral" over a 0-dimensional face.
    pub fn point() -> Self {
        QuadratureRule { points: vec![[T::zero(), T::zero()]], weights: vec![T::one()] }
    }
}

/// Gauss-Legendre nodes and weights on `[0, 1]`, computed in `f64` by Newton
/// iteration on the Legendre polynomial.
pub fn gauss_legendre_unit(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1, "Gauss-Legendre rule needs at least one point");
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let nf = n as f64;
    for i in 0..n.div_ceil(2) {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre_with_derivative(n, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre_with_derivative(n, x);
        dp = if d != 0.0 { d } else { dp };
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        // map [-1, 1] -> [0, 1]
        nodes[i] = 0.5 * (1.0 - x);
        nodes[n - 1 - i] = 0.5 * (1.0 + x);
        weights[i] = 0.5 * w;
        weights[n - 1 - i] = 0.5 * w;
    }
    (nodes, weights)
}

fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let (mut p0, mut p1) = (1.0, x);
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let nf = n as f64;
    (p1, nf * (x * p1 - p0) / (x * x - 1.0))
}
