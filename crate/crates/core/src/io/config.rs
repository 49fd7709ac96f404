//! Flat `key = value` run configuration.
//!
//! Lines are `key = value`; `#` starts a comment. Numbers may be written
//! as products and quotients of literals and `pi`, e.g. `2*pi` or `pi/50`.
//! Lists are comma separated.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use thiserror::Error;

use crate::assembly::{default_sigma, EdgeSet};
use crate::driver::{AdaptiveSettings, ErrorNorm, RipeningMode};
use crate::integrators::NewtonSettings;
use crate::physics::{Mobility, Potential, DEFAULT_LOG_CLAMP};

/// Where a value came from, for diagnostics.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Origin {
    Line(usize),
    Override,
}

impl fmt::Display for Origin {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Origin::Line(n) => write!(f, "line {n}"),
            Origin::Override => f.write_str("command line"),
        }
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum ConfigError {
    #[error("cannot read config: {0}")]
    Read(String),
    #[error("{origin}: expected `key = value`, got {text:?}")]
    Syntax { origin: Origin, text: String },
    #[error("{origin}: unknown key `{key}`")]
    UnknownKey { key: String, origin: Origin },
    #[error("{origin}: key `{key}` given twice")]
    Duplicate { key: String, origin: Origin },
    #[error("missing required key `{0}`")]
    Missing(&'static str),
    #[error("{origin}: bad value for `{key}`: {message}")]
    Value { key: String, origin: Origin, message: String },
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum InitialCondition {
    /// `offset + sin(x)` in 1D, `offset + sin(x) sin(y)` in 2D.
    Sine {
        offset: f64,
    },
    /// `2 exp(sin x + sin y - 2) + 2.2 exp(-sin x - sin y - 2) - 1`.
    TwoBumps,
    /// Uniform values in `[-amplitude, amplitude]` at the nodes.
    Random {
        seed: u64,
        amplitude: f64,
    },
    Constant(f64),
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum MeshSpec {
    Interval { length: f64, n: usize },
    Rectangle { width: f64, height: f64, nx: usize, ny: usize },
}

impl MeshSpec {
    pub fn dimension(&self) -> usize {
        match self {
            MeshSpec::Interval { .. } => 1,
            MeshSpec::Rectangle { .. } => 2,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub epsilon: f64,
    pub potential: Potential<f64>,
    pub mobility: Mobility<f64>,
    pub sigma: Option<f64>,
    pub degree: usize,
    pub mesh: MeshSpec,
    pub initial: InitialCondition,
    pub adaptive: AdaptiveSettings,
    pub energy_edges: EdgeSet,
    pub ripening: RipeningMode,
    pub snapshot_times: Vec<f64>,
    /// Sample points per direction in snapshot files.
    pub snapshot_resolution: usize,
    pub output: Option<String>,
}

impl RunConfig {
    pub fn sigma_or_default(&self) -> f64 {
        self.sigma.unwrap_or_else(|| default_sigma(self.mesh.dimension(), self.degree))
    }
}

const KEYS: &[&str] = &[
    "dimension",
    "length",
    "width",
    "height",
    "n",
    "nx",
    "ny",
    "degree",
    "epsilon",
    "potential",
    "theta",
    "theta_c",
    "log_clamp",
    "mobility",
    "beta",
    "sigma",
    "initial",
    "initial_offset",
    "initial_value",
    "seed",
    "amplitude",
    "tolerance",
    "initial_step",
    "safety",
    "end_time",
    "min_step",
    "error_norm",
    "newton_tolerance",
    "newton_max_iterations",
    "tau_nodes",
    "energy_edges",
    "ripening",
    "snapshot_times",
    "snapshot_resolution",
    "output",
];

/// Raw entries before typing, keyed by name.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct RawConfig {
    entries: BTreeMap<String, (String, Origin)>,
}

impl RawConfig {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut raw = RawConfig::default();
        for (i, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let origin = Origin::Line(i + 1);
            let Some((key, value)) = line.split_once('=') else {
                return Err(ConfigError::Syntax { origin, text: line.to_string() });
            };
            let key = key.trim();
            if raw.entries.contains_key(key) {
                return Err(ConfigError::Duplicate { key: key.to_string(), origin });
            }
            raw.insert(key, value.trim(), origin)?;
        }
        Ok(raw)
    }

    /// Applies `key=value`, replacing any earlier value.
    pub fn set(&mut self, assignment: &str) -> Result<(), ConfigError> {
        let Some((key, value)) = assignment.split_once('=') else {
            return Err(ConfigError::Syntax { origin: Origin::Override, text: assignment.to_string() });
        };
        self.insert(key.trim(), value.trim(), Origin::Override)
    }

    fn insert(&mut self, key: &str, value: &str, origin: Origin) -> Result<(), ConfigError> {
        if !KEYS.contains(&key) {
            return Err(ConfigError::UnknownKey { key: key.to_string(), origin });
        }
        self.entries.insert(key.to_string(), (value.to_string(), origin));
        Ok(())
    }

    fn get(&self, key: &str) -> Option<&(String, Origin)> {
        self.entries.get(key)
    }

    fn parsed<V>(&self, key: &str, parse: impl Fn(&str) -> Result<V, String>) -> Result<Option<V>, ConfigError> {
        match self.get(key) {
            None => Ok(None),
            Some((v, origin)) => parse(v).map(Some).map_err(|message| ConfigError::Value {
                key: key.to_string(),
                origin: origin.clone(),
                message,
            }),
        }
    }

    fn number(&self, key: &str) -> Result<Option<f64>, ConfigError> {
        self.parsed(key, parse_number)
    }

    fn count(&self, key: &str) -> Result<Option<usize>, ConfigError> {
        self.parsed(key, |s| s.parse::<usize>().map_err(|e| e.to_string()))
    }

    fn word<V: FromStr<Err = String>>(&self, key: &str) -> Result<Option<V>, ConfigError> {
        self.parsed(key, V::from_str)
    }

    /// Error for a value that parsed but violates a constraint.
    fn invalid(&self, key: &str, message: impl Into<String>) -> ConfigError {
        let origin = self.get(key).map_or(Origin::Override, |(_, o)| o.clone());
        ConfigError::Value { key: key.to_string(), origin, message: message.into() }
    }

    fn positive(&self, key: &'static str, required: bool, default: f64) -> Result<f64, ConfigError> {
        let v = match self.number(key)? {
            Some(v) => v,
            None if required => return Err(ConfigError::Missing(key)),
            None => default,
        };
        if !(v > 0.0 && v.is_finite()) {
            return Err(self.invalid(key, format!("must be positive, got {v}")));
        }
        Ok(v)
    }

    pub fn build(&self) -> Result<RunConfig, ConfigError> {
        let dimension = require("dimension", self.count("dimension")?)?;
        let resolution = |key: &'static str| -> Result<usize, ConfigError> {
            let n = require(key, self.count(key)?)?;
            if n < 2 {
                return Err(self.invalid(key, format!("need at least 2 elements, got {n}")));
            }
            Ok(n)
        };
        let two_pi = 2.0 * std::f64::consts::PI;
        let mesh = match dimension {
            1 => MeshSpec::Interval { length: self.positive("length", false, two_pi)?, n: resolution("n")? },
            2 => MeshSpec::Rectangle {
                width: self.positive("width", false, two_pi)?,
                height: self.positive("height", false, two_pi)?,
                nx: resolution("nx")?,
                ny: resolution("ny")?,
            },
            d => return Err(self.invalid("dimension", format!("must be 1 or 2, got {d}"))),
        };
        let degree = self.count("degree")?.unwrap_or(1);
        if !(1..=2).contains(&degree) {
            return Err(self.invalid("degree", format!("must be 1 or 2, got {degree}")));
        }
        let epsilon = self.positive("epsilon", true, 0.0)?;

        let potential = match require("potential", self.get("potential"))?.0.as_str() {
            "double_well" => Potential::DoubleWell,
            "logarithmic" => {
                let p = Potential::Logarithmic {
                    theta: self.positive("theta", true, 0.0)?,
                    theta_c: self.positive("theta_c", true, 0.0)?,
                    clamp: self.positive("log_clamp", false, DEFAULT_LOG_CLAMP)?,
                };
                p.validate().map_err(|m| self.invalid("theta", m))?;
                p
            }
            other => {
                return Err(self.invalid("potential", format!("expected double_well or logarithmic, got {other:?}")))
            }
        };
        let beta = self.positive("beta", false, 1.0)?;
        let mobility = match require("mobility", self.get("mobility"))?.0.as_str() {
            "constant" => Mobility::Constant(beta),
            "degenerate" => Mobility::Degenerate(beta),
            other => return Err(self.invalid("mobility", format!("expected constant or degenerate, got {other:?}"))),
        };
        let sigma = match self.number("sigma")? {
            Some(s) if !(s > 0.0) => return Err(self.invalid("sigma", format!("must be positive, got {s}"))),
            s => s,
        };

        let initial = match require("initial", self.get("initial"))?.0.as_str() {
            "sine" => InitialCondition::Sine { offset: self.number("initial_offset")?.unwrap_or(0.0) },
            "two_bumps" => InitialCondition::TwoBumps,
            "random" => {
                let amplitude = self.number("amplitude")?.unwrap_or(0.05);
                if !(0.0..1.0).contains(&amplitude) {
                    return Err(self.invalid("amplitude", format!("must lie in [0, 1), got {amplitude}")));
                }
                let seed = self.parsed("seed", |s| s.parse::<u64>().map_err(|e| e.to_string()))?.unwrap_or(0);
                InitialCondition::Random { seed, amplitude }
            }
            "constant" => InitialCondition::Constant(require("initial_value", self.number("initial_value")?)?),
            other => {
                return Err(
                    self.invalid("initial", format!("expected sine, two_bumps, random or constant, got {other:?}"))
                )
            }
        };

        let mut adaptive =
            AdaptiveSettings::new(self.positive("tolerance", true, 0.0)?, self.positive("end_time", true, 0.0)?);
        adaptive.initial_step = self.positive("initial_step", false, adaptive.initial_step)?;
        adaptive.safety = self.number("safety")?.unwrap_or(adaptive.safety);
        adaptive.min_step = self.positive("min_step", false, adaptive.min_step)?;
        adaptive.norm = self.word::<ErrorNorm>("error_norm")?.unwrap_or_default();
        let defaults = NewtonSettings::default();
        let newton_tol = self.positive("newton_tolerance", false, defaults.abs_tolerance)?;
        adaptive.newton = NewtonSettings {
            abs_tolerance: newton_tol,
            rel_tolerance: newton_tol,
            max_iterations: self.count("newton_max_iterations")?.unwrap_or(defaults.max_iterations),
            tau_nodes: self.count("tau_nodes")?.unwrap_or(defaults.tau_nodes),
        };
        if let Err(m) = adaptive.newton.validate() {
            return Err(self.invalid("newton_max_iterations", m));
        }
        if let Err(m) = adaptive.validate() {
            return Err(self.invalid("safety", m));
        }

        let energy_edges = match self.get("energy_edges").map(|(v, _)| v.as_str()) {
            None | Some("all") => EdgeSet::All,
            Some("interior_only") => EdgeSet::InteriorOnly,
            Some(other) => {
                return Err(self.invalid("energy_edges", format!("expected all or interior_only, got {other:?}")))
            }
        };
        let ripening = self.word::<RipeningMode>("ripening")?.unwrap_or_default();
        let snapshot_times = self.parsed("snapshot_times", parse_list)?.unwrap_or_default();
        if let Some(t) = snapshot_times.iter().find(|&&t| !(0.0..=adaptive.end_time).contains(&t)) {
            return Err(self.invalid("snapshot_times", format!("{t} lies outside [0, end_time]")));
        }
        let snapshot_resolution = self.count("snapshot_resolution")?.unwrap_or(128);
        if snapshot_resolution == 0 {
            return Err(self.invalid("snapshot_resolution", "must be at least 1"));
        }
        let output = self.get("output").map(|(v, _)| v.clone());

        Ok(RunConfig {
            epsilon,
            potential,
            mobility,
            sigma,
            degree,
            mesh,
            initial,
            adaptive,
            energy_edges,
            ripening,
            snapshot_times,
            snapshot_resolution,
            output,
        })
    }
}

impl FromStr for RunConfig {
    type Err = ConfigError;

    fn from_str(text: &str) -> Result<Self, ConfigError> {
        RawConfig::parse(text)?.build()
    }
}

pub fn load_config(path: &Path) -> Result<RunConfig, ConfigError> {
    load_config_with(path, &[])
}

/// Loads `path` and applies `key=value` overrides on top.
pub fn load_config_with(path: &Path, overrides: &[String]) -> Result<RunConfig, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Read(format!("{}: {e}", path.display())))?;
    let mut raw = RawConfig::parse(&text)?;
    for o in overrides {
        raw.set(o)?;
    }
    raw.build()
}

fn require<V>(key: &'static str, v: Option<V>) -> Result<V, ConfigError> {
    v.ok_or(ConfigError::Missing(key))
}

/// A product or quotient of decimal literals and `pi`.
pub fn parse_number(s: &str) -> Result<f64, String> {
    let s = s.trim();
    if s.is_empty() {
        return Err("empty value".into());
    }
    let mut value = 1.0;
    let mut divide = false;
    let mut rest = s;
    loop {
        let end = rest.find(['*', '/']).unwrap_or(rest.len());
        let token = rest[..end].trim();
        let factor = match token {
            "pi" => std::f64::consts::PI,
            t => t.parse::<f64>().map_err(|_| format!("cannot read {s:?} as a number"))?,
        };
        if divide {
            value /= factor;
        } else {
            value *= factor;
        }
        if end == rest.len() {
            break;
        }
        divide = rest.as_bytes()[end] == b'/';
        rest = &rest[end + 1..];
    }
    if value.is_finite() {
        Ok(value)
    } else {
        Err(format!("{s:?} is not finite"))
    }
}

pub fn parse_list(s: &str) -> Result<Vec<f64>, String> {
    s.split(',').filter(|t| !t.trim().is_empty()).map(parse_number).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    const MINIMAL: &str = "dimension = 1\nn = 10\nepsilon = 0.1\npotential = double_well\n\
                           mobility = constant\ninitial = sine\ntolerance = 1e-4\nend_time = 1\n";

    #[test]
    fn numbers() {
        assert_eq!(parse_number("2*pi").unwrap(), 2.0 * PI);
        assert_eq!(parse_number("pi / 50").unwrap(), PI / 50.0);
        assert_eq!(parse_number("1e-4").unwrap(), 1e-4);
        assert!(parse_number("two").is_err());
        assert!(parse_number("1/0").is_err());
        assert_eq!(parse_list("0, 1.5,pi").unwrap(), vec![0.0, 1.5, PI]);
    }

    #[test]
    fn minimal_config_and_defaults() {
        let c: RunConfig = MINIMAL.parse().unwrap();
        assert_eq!(c.mesh, MeshSpec::Interval { length: 2.0 * PI, n: 10 });
        assert_eq!(c.degree, 1);
        assert_eq!(c.mobility, Mobility::Constant(1.0));
        assert_eq!(c.adaptive.initial_step, 0.05);
        assert_eq!(c.adaptive.safety, 0.9);
        assert_eq!(c.sigma_or_default(), 10.0);
        assert_eq!(c.ripening, RipeningMode::Auto);
    }

    #[test]
    fn negative_epsilon_names_the_key_and_line() {
        let text = MINIMAL.replace("epsilon = 0.1", "epsilon = -1");
        match text.parse::<RunConfig>() {
            Err(ConfigError::Value { key, origin, .. }) => {
                assert_eq!(key, "epsilon");
                assert_eq!(origin, Origin::Line(3));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn unknown_and_missing_keys() {
        let text = format!("{MINIMAL}# comment\nepsilom = 3 # typo\n");
        assert_eq!(
            text.parse::<RunConfig>(),
            Err(ConfigError::UnknownKey { key: "epsilom".into(), origin: Origin::Line(10) })
        );
        let text = MINIMAL.replace("end_time = 1\n", "");
        assert_eq!(text.parse::<RunConfig>(), Err(ConfigError::Missing("end_time")));
        let text = format!("{MINIMAL}n = 4\n");
        assert!(matches!(text.parse::<RunConfig>(), Err(ConfigError::Duplicate { .. })));
        assert!(matches!("just words".parse::<RunConfig>(), Err(ConfigError::Syntax { .. })));
    }

    #[test]
    fn overrides_replace_values() {
        let mut raw = RawConfig::parse(MINIMAL).unwrap();
        raw.set("tolerance=1e-6").unwrap();
        assert_eq!(raw.build().unwrap().adaptive.tolerance, 1e-6);
        assert!(matches!(raw.set("bogus=1"), Err(ConfigError::UnknownKey { origin: Origin::Override, .. })));
    }

    #[test]
    fn constraint_violations() {
        for (from, to) in [
            ("n = 10", "n = 1"),
            ("potential = double_well", "potential = logarithmic\ntheta = 0.5\ntheta_c = 0.4"),
            ("initial = sine", "initial = random\namplitude = 2"),
            ("end_time = 1", "end_time = 1\nsnapshot_times = 0, 2"),
            ("mobility = constant", "mobility = sticky"),
        ] {
            assert!(matches!(MINIMAL.replace(from, to).parse::<RunConfig>(), Err(ConfigError::Value { .. })), "{to}");
        }
    }
}
