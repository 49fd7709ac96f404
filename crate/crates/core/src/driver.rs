//! Adaptive time loop built on the backward Euler / AVF pair.
//!
//! Each attempt advances the same state with both methods. Their distance
//! estimates the local error of the first order method, and the step is
//! rescaled by `sqrt(rho * tol / err)`. Accepted steps continue from the
//! AVF solution.

use std::str::FromStr;

use thiserror::Error;

use crate::assembly::AssemblyError;
use crate::integrators::{avf_step, backward_euler_step, GradientSystem, NewtonSettings};
use crate::linalg::{LinearSolver, SparseMatrix};
use crate::scalar::{norm2, Scalar};

/// A problem the adaptive loop can advance.
pub trait Evolution<T: Scalar>: Sync {
    type System<'a>: GradientSystem<T>
    where
        Self: 'a;

    /// The gradient system for a step starting at `xi_n`.
    fn freeze(&self, xi_n: &[T]) -> Result<Self::System<'_>, AssemblyError>;
    fn energy(&self, xi: &[T]) -> T;
    /// Spatial minimum and maximum of the field.
    fn extrema(&self, xi: &[T]) -> (T, T);
    fn mass(&self) -> &SparseMatrix<T>;
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum ErrorNorm {
    /// Euclidean norm of the coefficient difference.
    #[default]
    Euclidean,
    /// `sqrt(d^T M d)`, the L2 norm of the field difference.
    Mass,
}

impl FromStr for ErrorNorm {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "euclidean" => Ok(ErrorNorm::Euclidean),
            "mass" => Ok(ErrorNorm::Mass),
            _ => Err(format!("expected euclidean or mass, got {s:?}")),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdaptiveSettings {
    pub tolerance: f64,
    pub safety: f64,
    pub initial_step: f64,
    /// Bounds on the ratio of consecutive step proposals.
    pub min_factor: f64,
    pub max_factor: f64,
    pub end_time: f64,
    /// The run aborts when a step this small still fails.
    pub min_step: f64,
    pub norm: ErrorNorm,
    pub newton: NewtonSettings,
}

impl AdaptiveSettings {
    pub fn new(tolerance: f64, end_time: f64) -> Self {
        AdaptiveSettings {
            tolerance,
            safety: 0.9,
            initial_step: 0.05,
            min_factor: 0.1,
            max_factor: 5.0,
            end_time,
            min_step: 1e-12,
            norm: ErrorNorm::Euclidean,
            newton: NewtonSettings::default(),
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        if !(self.tolerance > 0.0 && self.tolerance.is_finite()) {
            return Err(format!("tolerance must be positive, got {}", self.tolerance));
        }
        if !(self.safety > 0.0 && self.safety < 1.0) {
            return Err(format!("safety factor must lie in (0, 1), got {}", self.safety));
        }
        if !(self.initial_step > 0.0 && self.min_step > 0.0) {
            return Err("step sizes must be positive".into());
        }
        if !(self.min_factor > 0.0 && self.min_factor <= 1.0 && self.max_factor >= 1.0) {
            return Err("step factor clamp must satisfy 0 < min <= 1 <= max".into());
        }
        if !(self.end_time > 0.0 && self.end_time.is_finite()) {
            return Err(format!("end time must be positive, got {}", self.end_time));
        }
        self.newton.validate()
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepRecord {
    pub t: f64,
    /// Step that led here; zero for the initial record.
    pub dt: f64,
    pub energy: f64,
    pub min_u: f64,
    pub max_u: f64,
    pub newton_iterations: usize,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct RunTrace {
    /// The initial state followed by every accepted step.
    pub records: Vec<StepRecord>,
    pub accepted: usize,
    /// Attempts that did not advance time, including Newton failures.
    pub rejected: usize,
    pub newton_failures: usize,
    /// Accepted steps whose energy rose by more than `1e-8 (1 + |E|)`.
    pub energy_violations: usize,
    pub ripening_time: Option<f64>,
}

impl RunTrace {
    pub fn final_time(&self) -> f64 {
        self.records.last().map_or(0.0, |r| r.t)
    }
}

#[derive(Debug)]
pub struct RunOutcome<T> {
    pub trace: RunTrace,
    pub state: Vec<T>,
}

#[derive(Debug, Error)]
pub enum DriverError {
    #[error("invalid adaptive settings: {0}")]
    Settings(String),
    #[error("initial state has {got} entries, expected {expected}")]
    StateLength { got: usize, expected: usize },
    #[error(transparent)]
    Assembly(#[from] AssemblyError),
    #[error("step size {dt:e} fell below the minimum at t = {t}")]
    StepTooSmall { t: f64, dt: f64, trace: Box<RunTrace> },
}

/// Relative energy increase tolerated before a step counts as a violation.
pub const ENERGY_SLACK: f64 = 1e-8;

pub fn energy_increased(before: f64, after: f64) -> bool {
    after > before + ENERGY_SLACK * (1.0 + before.abs())
}

pub fn estimate_error<T: Scalar>(xi_avf: &[T], xi_be: &[T], norm: ErrorNorm, mass: &SparseMatrix<T>) -> T {
    let d: Vec<T> = xi_avf.iter().zip(xi_be).map(|(&a, &b)| a - b).collect();
    match norm {
        ErrorNorm::Euclidean => norm2(&d),
        ErrorNorm::Mass => mass.quadratic_form(&d).max(T::zero()).sqrt(),
    }
}

/// `tau * sqrt(rho tol / err)`, clamped to `[min_factor, max_factor] * tau`
/// and to the `remaining` time.
pub fn propose_step(tau: f64, error: f64, remaining: f64, settings: &AdaptiveSettings) -> f64 {
    let err = error.max(1e-300);
    let factor = (settings.safety * settings.tolerance / err).sqrt();
    let factor = factor.clamp(settings.min_factor, settings.max_factor);
    (tau * factor).min(remaining)
}

/// Runs from `xi0` to `settings.end_time`. `observer` sees the initial state
/// and every accepted state together with its trace record.
pub fn run_adaptive<T, P, O>(
    problem: &P,
    xi0: &[T],
    settings: &AdaptiveSettings,
    mut observer: O,
) -> Result<RunOutcome<T>, DriverError>
where
    T: Scalar,
    P: Evolution<T>,
    O: FnMut(&StepRecord, &[T]),
{
    settings.validate().map_err(DriverError::Settings)?;
    let n = problem.mass().dim();
    if xi0.len() != n {
        return Err(DriverError::StateLength { got: xi0.len(), expected: n });
    }
    let end = settings.end_time;
    // Times this close to the end count as having reached it.
    let slack = 1e-12 * end.max(1.0);

    let mut trace = RunTrace::default();
    let mut xi = xi0.to_vec();
    let mut t = 0.0;
    let mut energy = problem.energy(&xi).as_f64();
    let (lo, hi) = problem.extrema(&xi);
    let first = StepRecord { t, dt: 0.0, energy, min_u: lo.as_f64(), max_u: hi.as_f64(), newton_iterations: 0 };
    observer(&first, &xi);
    trace.records.push(first);

    let mut solvers = (LinearSolver::new(1), LinearSolver::new(1));
    let mut tau = settings.initial_step;
    while end - t > slack {
        tau = tau.min(end - t);
        if tau < settings.min_step {
            return Err(DriverError::StepTooSmall { t, dt: tau, trace: Box::new(trace) });
        }
        let system = problem.freeze(&xi)?;
        let block = system.block_size();
        for s in [&mut solvers.0, &mut solvers.1] {
            if s.block() != block {
                *s = LinearSolver::new(block);
            }
        }
        let dt = T::lit(tau);
        let (s_avf, s_be) = (&mut solvers.0, &mut solvers.1);
        let (avf, be) = rayon::join(
            || avf_step(&system, &xi, dt, &settings.newton, s_avf),
            || backward_euler_step(&system, &xi, dt, &settings.newton, s_be),
        );
        drop(system);
        if !(avf.converged && be.converged) {
            trace.rejected += 1;
            trace.newton_failures += 1;
            tau /= 2.0;
            continue;
        }
        let err = estimate_error(&avf.xi_next, &be.xi_next, settings.norm, problem.mass()).as_f64();
        let next_tau = propose_step(tau, err, f64::INFINITY, settings);
        if err <= settings.tolerance {
            t = if end - (t + tau) <= slack { end } else { t + tau };
            xi = avf.xi_next;
            let e = problem.energy(&xi).as_f64();
            if energy_increased(energy, e) {
                trace.energy_violations += 1;
            }
            energy = e;
            let (lo, hi) = problem.extrema(&xi);
            let rec = StepRecord {
                t,
                dt: tau,
                energy,
                min_u: lo.as_f64(),
                max_u: hi.as_f64(),
                newton_iterations: avf.newton_iterations,
            };
            observer(&rec, &xi);
            trace.records.push(rec);
            trace.accepted += 1;
        } else {
            trace.rejected += 1;
        }
        tau = next_tau;
    }
    Ok(RunOutcome { trace, state: xi })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum RipeningMode {
    /// The spatial minimum rises through zero.
    Min,
    /// The spatial maximum falls through zero.
    Max,
    /// Whichever of the two happens first.
    #[default]
    Auto,
}

impl FromStr for RipeningMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "min" => Ok(RipeningMode::Min),
            "max" => Ok(RipeningMode::Max),
            "auto" => Ok(RipeningMode::Auto),
            _ => Err(format!("expected min, max or auto, got {s:?}")),
        }
    }
}

/// First sign change of the tracked extremum, linearly interpolated between
/// the bracketing records.
pub fn detect_ripening(trace: &RunTrace, mode: RipeningMode) -> Option<f64> {
    let min = || crossing(&trace.records, |r| r.min_u, true);
    let max = || crossing(&trace.records, |r| r.max_u, false);
    match mode {
        RipeningMode::Min => min(),
        RipeningMode::Max => max(),
        RipeningMode::Auto => match (min(), max()) {
            (Some(a), Some(b)) => Some(a.min(b)),
            (a, b) => a.or(b),
        },
    }
}

fn crossing(records: &[StepRecord], value: impl Fn(&StepRecord) -> f64, upward: bool) -> Option<f64> {
    records.windows(2).find_map(|w| {
        let (a, b) = (value(&w[0]), value(&w[1]));
        let crosses = if upward { a < 0.0 && b >= 0.0 } else { a > 0.0 && b <= 0.0 };
        crosses.then(|| w[0].t + (w[1].t - w[0].t) * a / (a - b))
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::build_mesh_1d;
    use crate::model::{AllenCahnModel, ModelParams};
    use crate::physics::{Mobility, Potential};
    use crate::space::DgSpace;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::sync::Arc;

    fn record(t: f64, min_u: f64, max_u: f64) -> StepRecord {
        StepRecord { t, dt: 0.0, energy: 0.0, min_u, max_u, newton_iterations: 0 }
    }

    #[test]
    fn error_estimate_examples() {
        let m = SparseMatrix::<f64>::identity(4);
        let a: [f64; 4] = [0.3, -1.0, 2.0, 0.5];
        assert_eq!(estimate_error(&a, &a, ErrorNorm::Euclidean, &m), 0.0);
        let mut b = a;
        b[2] += 0.25;
        assert!((estimate_error(&a, &b, ErrorNorm::Euclidean, &m) - 0.25).abs() < 1e-15);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x: Vec<f64> = (0..50).map(|_| rng.gen()).collect();
        let y: Vec<f64> = (0..50).map(|_| rng.gen()).collect();
        let mut s = 0.0;
        for i in 0..50 {
            s += (x[i] - y[i]) * (x[i] - y[i]);
        }
        let m = SparseMatrix::identity(50);
        assert!((estimate_error(&x, &y, ErrorNorm::Euclidean, &m) - s.sqrt()).abs() < 1e-14);
        assert!((estimate_error(&x, &y, ErrorNorm::Mass, &m) - s.sqrt()).abs() < 1e-14);
    }

    #[test]
    fn step_proposal_examples() {
        let s = AdaptiveSettings::new(1e-4, 100.0);
        let inf = f64::INFINITY;
        assert!((propose_step(0.2, 0.9e-4, inf, &s) - 0.2).abs() < 1e-15);
        assert!((propose_step(1.0, 1e-4, inf, &s) - 0.9f64.sqrt()).abs() < 1e-15);
        assert!((propose_step(1.0, 4e-4, inf, &s) - 0.225f64.sqrt()).abs() < 1e-15);
        assert_eq!(propose_step(1.0, 0.0, inf, &s), 5.0);
        assert_eq!(propose_step(1.0, 1.0, inf, &s), 0.1);
        assert_eq!(propose_step(1.0, 0.0, 0.3, &s), 0.3);
    }

    #[test]
    fn ripening_by_interpolation() {
        let trace = RunTrace {
            records: vec![record(0.0, -0.5, 1.0), record(10.0, -0.1, 1.0), record(12.0, 0.1, 1.0)],
            ..RunTrace::default()
        };
        assert_eq!(detect_ripening(&trace, RipeningMode::Min), Some(11.0));
        assert_eq!(detect_ripening(&trace, RipeningMode::Auto), Some(11.0));
        assert_eq!(detect_ripening(&trace, RipeningMode::Max), None);
        let trace = RunTrace {
            records: vec![record(0.0, -1.0, 0.5), record(2.0, -1.0, 0.25), record(3.0, -1.0, -0.25)],
            ..RunTrace::default()
        };
        assert_eq!(detect_ripening(&trace, RipeningMode::Auto), Some(2.5));
        assert_eq!(detect_ripening(&RunTrace::default(), RipeningMode::Auto), None);
    }

    #[test]
    fn equilibrium_run_accepts_everything() {
        let space = Arc::new(DgSpace::new(Arc::new(build_mesh_1d(1.0, 6).unwrap()), 1).unwrap());
        let model =
            AllenCahnModel::new(space.clone(), ModelParams::new(0.1, Potential::DoubleWell, Mobility::Constant(1.0)))
                .unwrap();
        let xi = vec![1.0; space.n_dofs()];
        let settings = AdaptiveSettings::new(1e-4, 100.0);
        let mut seen = 0;
        let out = run_adaptive(&model, &xi, &settings, |_, _| seen += 1).unwrap();
        let tr = &out.trace;
        assert_eq!(tr.rejected, 0);
        assert_eq!(seen, tr.records.len());
        assert_eq!(tr.final_time(), 100.0);
        assert!(tr.records.iter().all(|r| r.energy.abs() < 1e-13));
        for w in tr.records[1..].windows(2) {
            assert!(w[1].t > w[0].t);
            if w[1].t < 100.0 {
                assert!((w[1].dt / w[0].dt - 5.0).abs() < 1e-12);
            }
        }
        assert_eq!(out.state, xi);
    }

    #[test]
    fn bad_settings_are_rejected() {
        let space = Arc::new(DgSpace::new(Arc::new(build_mesh_1d(1.0, 4).unwrap()), 1).unwrap());
        let model =
            AllenCahnModel::new(space.clone(), ModelParams::new(0.1, Potential::DoubleWell, Mobility::Constant(1.0)))
                .unwrap();
        let xi = vec![0.0; space.n_dofs()];
        let bad = AdaptiveSettings { safety: 1.5, ..AdaptiveSettings::new(1e-4, 1.0) };
        assert!(matches!(run_adaptive(&model, &xi, &bad, |_, _| ()), Err(DriverError::Settings(_))));
        let ok = AdaptiveSettings::new(1e-4, 1.0);
        assert!(matches!(run_adaptive(&model, &xi[1..], &ok, |_, _| ()), Err(DriverError::StateLength { .. })));
    }
}
