//! Free energies, their derivatives and mobility functions.

use crate::scalar::Scalar;

/// Default distance from `+-1` inside which logarithmic terms are clamped.
pub const DEFAULT_LOG_CLAMP: f64 = 1e-8;

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Potential<T> {
    /// `F(u) = (1 - u^2)^2 / 4`.
    DoubleWell,
    /// `F(u) = theta/2 [(1+u) ln(1+u) + (1-u) ln(1-u)] - theta_c/2 u^2`,
    /// evaluated with `u` clamped into `[-1 + clamp, 1 - clamp]`.
    Logarithmic { theta: T, theta_c: T, clamp: T },
}

impl<T: Scalar> Potential<T> {
    pub fn logarithmic(theta: T, theta_c: T) -> Self {
        Potential::Logarithmic { theta, theta_c, clamp: T::lit(DEFAULT_LOG_CLAMP) }
    }

    /// Checks `0 < theta <= theta_c` and `0 < clamp <= 1e-4`.
    pub fn validate(&self) -> Result<(), String> {
        match *self {
            Potential::DoubleWell => Ok(()),
            Potential::Logarithmic { theta, theta_c, clamp } => {
                if !(theta > T::zero() && theta <= theta_c) {
                    return Err(format!("need 0 < theta <= theta_c, got theta={theta}, theta_c={theta_c}"));
                }
                if !(clamp > T::zero() && clamp <= T::lit(1e-4)) {
                    return Err(format!("log clamp must lie in (0, 1e-4], got {clamp}"));
                }
                Ok(())
            }
        }
    }

    #[inline]
    fn clamped(clamp: T, u: T) -> T {
        let bound = T::one() - clamp;
        u.max(-bound).min(bound)
    }

    /// `F(u)`.
    pub fn energy_density(&self, u: T) -> T {
        match *self {
            Potential::DoubleWell => {
                let s = T::one() - u * u;
                s * s / T::lit(4.0)
            }
            Potential::Logarithmic { theta, theta_c, clamp } => {
                let v = Self::clamped(clamp, u);
                let (p, m) = (T::one() + v, T::one() - v);
                theta / T::lit(2.0) * (p * p.ln() + m * m.ln()) - theta_c / T::lit(2.0) * u * u
            }
        }
    }

    /// `f(u) = F'(u)`.
    pub fn reaction(&self, u: T) -> T {
        match *self {
            Potential::DoubleWell => u * u * u - u,
            Potential::Logarithmic { theta, theta_c, clamp } => {
                let v = Self::clamped(clamp, u);
                theta / T::lit(2.0) * ((T::one() + v) / (T::one() - v)).ln() - theta_c * u
            }
        }
    }

    /// `f'(u)`.
    pub fn reaction_derivative(&self, u: T) -> T {
        match *self {
            Potential::DoubleWell => T::lit(3.0) * u * u - T::one(),
            Potential::Logarithmic { theta, theta_c, clamp } => {
                let v = Self::clamped(clamp, u);
                theta / (T::one() - v * v) - theta_c
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Mobility<T> {
    Constant(T),
    /// `max(0, beta (1 - u^2))`.
    Degenerate(T),
}

impl<T: Scalar> Mobility<T> {
    pub fn eval(&self, u: T) -> T {
        match *self {
            Mobility::Constant(beta) => beta,
            Mobility::Degenerate(beta) => (beta * (T::one() - u * u)).max(T::zero()),
        }
    }

    pub fn is_constant(&self) -> bool {
        matches!(self, Mobility::Constant(_))
    }

    pub fn beta(&self) -> T {
        match *self {
            Mobility::Constant(b) | Mobility::Degenerate(b) => b,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn log(theta: f64, theta_c: f64) -> Potential<f64> {
        Potential::logarithmic(theta, theta_c)
    }

    #[test]
    fn double_well_values() {
        let p = Potential::<f64>::DoubleWell;
        assert_eq!(p.energy_density(1.0), 0.0);
        assert_eq!(p.energy_density(0.0), 0.25);
        assert_eq!(p.reaction(0.5), -0.375);
        for u in [-1.0, 0.0, 1.0] {
            assert_eq!(p.reaction(u), 0.0);
        }
        assert_eq!(p.reaction_derivative(0.0), -1.0);
        assert_eq!(p.reaction_derivative(1.0), 2.0);
    }

    #[test]
    fn logarithmic_values() {
        assert_eq!(log(0.15, 0.30).energy_density(0.0), 0.0);
        let f = log(0.5, 0.95).reaction(0.5);
        assert!((f - (0.25 * 3f64.ln() - 0.475)).abs() < 1e-15);
        assert!((f + 0.200_346_927_833).abs() < 1e-11);
        assert!((log(0.5, 0.95).reaction_derivative(0.0) + 0.45).abs() < 1e-15);
    }

    #[test]
    fn logarithmic_is_finite_at_and_beyond_the_poles() {
        let p = log(0.5, 0.95);
        for u in [-1.5, -1.0, 1.0, 1.0 + 1e-12, 2.0] {
            assert!(p.energy_density(u).is_finite());
            assert!(p.reaction(u).is_finite());
            assert!(p.reaction_derivative(u).is_finite());
        }
        assert!(Potential::Logarithmic { theta: 0.5, theta_c: 0.4, clamp: 1e-8 }.validate().is_err());
        assert!(Potential::Logarithmic { theta: 0.1, theta_c: 0.4, clamp: 1e-3 }.validate().is_err());
        assert!(p.validate().is_ok());
    }

    #[test]
    fn derivatives_match_central_differences() {
        let h = 1e-6;
        for p in [Potential::DoubleWell, log(0.15, 0.30), log(0.5, 0.95)] {
            for i in 0..=190 {
                let u = -0.95 + 0.01 * f64::from(i);
                let fd = (p.energy_density(u + h) - p.energy_density(u - h)) / (2.0 * h);
                let f = p.reaction(u);
                assert!((fd - f).abs() <= 1e-6 * f.abs().max(1e-3), "{p:?} u={u}");
                let fd = (p.reaction(u + h) - p.reaction(u - h)) / (2.0 * h);
                let df = p.reaction_derivative(u);
                assert!((fd - df).abs() <= 1e-6 * df.abs().max(1e-3), "{p:?} u={u}");
            }
        }
    }

    #[test]
    fn double_well_symmetry() {
        let p = Potential::<f64>::DoubleWell;
        for i in 0..50 {
            let u = -2.0 + 0.08 * f64::from(i);
            assert_eq!(p.energy_density(u), p.energy_density(-u));
            assert_eq!(p.reaction(u), -p.reaction(-u));
        }
    }

    #[test]
    fn mobility_values() {
        assert_eq!(Mobility::Constant(1.0).eval(0.3), 1.0);
        assert_eq!(Mobility::Degenerate(2.0).eval(0.0), 2.0);
        assert_eq!(Mobility::Degenerate(2.0).eval(1.0), 0.0);
        assert_eq!(Mobility::Degenerate(2.0).eval(-1.0), 0.0);
        for i in 0..=400 {
            let u = -2.0 + 0.01 * f64::from(i);
            assert!(Mobility::Degenerate(2.0).eval(u) >= 0.0);
            assert!(Mobility::Constant(2.0).eval(u) >= 0.0);
        }
    }
}
