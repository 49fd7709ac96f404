//! Configuration, presets, initial data, and result files.

pub mod config;
pub mod presets;

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use rayon::prelude::*;
use thiserror::Error;

pub use config::{load_config, load_config_with, ConfigError, InitialCondition, MeshSpec, RawConfig, RunConfig};

use crate::assembly::AssemblyError;
use crate::driver::{detect_ripening, run_adaptive, DriverError, RunTrace};
use crate::mesh::{build_mesh_1d, build_mesh_2d, MeshError, Point};
use crate::model::{AllenCahnModel, ModelParams};
use crate::space::{DgSpace, SpaceError};

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Mesh(#[from] MeshError),
    #[error(transparent)]
    Space(#[from] SpaceError),
    #[error(transparent)]
    Assembly(#[from] AssemblyError),
    #[error(transparent)]
    Driver(#[from] DriverError),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |source| Error::Io { path: path.to_path_buf(), source }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// A field of independent uniform values in `[-amplitude, amplitude]`,
/// one per point. The value at a point is a splitmix64 hash of the seed and
/// the point's coordinates rounded to multiples of `2^-20`, so the same
/// point always gets the same value and nodes shared by neighbouring
/// elements agree.
pub fn random_initial_field(seed: u64, amplitude: f64) -> impl Fn(Point<f64>) -> f64 {
    move |p| {
        let q = |x: f64| (x * 1_048_576.0).round() as i64 as u64;
        let h = splitmix64(seed ^ splitmix64(q(p[0]) ^ splitmix64(q(p[1]).rotate_left(32))));
        let unit = (h >> 11) as f64 / (1u64 << 53) as f64;
        amplitude * (2.0 * unit - 1.0)
    }
}

pub fn build_space(cfg: &RunConfig) -> Result<Arc<DgSpace<f64>>, Error> {
    let mesh = match cfg.mesh {
        MeshSpec::Interval { length, n } => build_mesh_1d(length, n)?,
        MeshSpec::Rectangle { width, height, nx, ny } => build_mesh_2d(width, height, nx, ny)?,
    };
    Ok(Arc::new(DgSpace::new(Arc::new(mesh), cfg.degree)?))
}

/// Smooth data is L2-projected; random data is interpolated at the nodes so
/// nodal values keep the stated bounds.
pub fn initial_state(cfg: &RunConfig, space: &DgSpace<f64>) -> Vec<f64> {
    let dim = space.mesh().dimension();
    match cfg.initial {
        InitialCondition::Sine { offset } if dim == 1 => space.l2_project(|p| offset + p[0].sin()),
        InitialCondition::Sine { offset } => space.l2_project(|p| offset + p[0].sin() * p[1].sin()),
        InitialCondition::TwoBumps => space.l2_project(|p| {
            let s = p[0].sin() + p[1].sin();
            2.0 * (s - 2.0).exp() + 2.2 * (-s - 2.0).exp() - 1.0
        }),
        InitialCondition::Random { seed, amplitude } => space.interpolate(random_initial_field(seed, amplitude)),
        InitialCondition::Constant(c) => vec![c; space.n_dofs()],
    }
}

pub fn build_model(cfg: &RunConfig, space: Arc<DgSpace<f64>>) -> Result<AllenCahnModel<f64>, Error> {
    let params = ModelParams {
        epsilon: cfg.epsilon,
        potential: cfg.potential,
        mobility: cfg.mobility,
        sigma: Some(cfg.sigma_or_default()),
        energy_edges: cfg.energy_edges,
    };
    Ok(AllenCahnModel::new(space, params)?)
}

#[derive(Debug)]
pub struct Simulation {
    pub space: Arc<DgSpace<f64>>,
    pub trace: RunTrace,
    pub state: Vec<f64>,
    /// States at the requested snapshot times, interpolated linearly in time
    /// between accepted steps.
    pub snapshots: Vec<(f64, Vec<f64>)>,
    pub wall_time: f64,
}

/// Runs `cfg` to its end time, calling `observer` on the initial state and
/// every accepted state.
pub fn simulate_with(cfg: &RunConfig, mut observer: impl FnMut(f64, &[f64])) -> Result<Simulation, Error> {
    let start = Instant::now();
    let space = build_space(cfg)?;
    let model = build_model(cfg, space.clone())?;
    let xi0 = initial_state(cfg, &space);

    let mut pending: Vec<f64> = cfg.snapshot_times.clone();
    pending.sort_by(f64::total_cmp);
    pending.dedup();
    let mut pending = pending.into_iter().peekable();
    let mut snapshots = Vec::new();
    let mut prev: Option<(f64, Vec<f64>)> = None;
    let outcome = run_adaptive(&model, &xi0, &cfg.adaptive, |rec, xi| {
        observer(rec.t, xi);
        while let Some(&s) = pending.peek() {
            if s > rec.t {
                break;
            }
            let state = match &prev {
                Some((t0, x0)) if s > *t0 => {
                    let w = (s - t0) / (rec.t - t0);
                    x0.iter().zip(xi).map(|(a, b)| a + w * (b - a)).collect()
                }
                _ => xi.to_vec(),
            };
            snapshots.push((s, state));
            pending.next();
        }
        prev = Some((rec.t, xi.to_vec()));
    })?;
    let mut trace = outcome.trace;
    trace.ripening_time = detect_ripening(&trace, cfg.ripening);
    Ok(Simulation { space, trace, state: outcome.state, snapshots, wall_time: start.elapsed().as_secs_f64() })
}

pub fn simulate(cfg: &RunConfig) -> Result<Simulation, Error> {
    simulate_with(cfg, |_, _| ())
}

fn create(path: &Path) -> Result<BufWriter<fs::File>, Error> {
    Ok(BufWriter::new(fs::File::create(path).map_err(io_err(path))?))
}

pub fn write_energy_csv(path: &Path, trace: &RunTrace) -> Result<(), Error> {
    let mut w = create(path)?;
    let mut body = String::from("t,dt,energy,min_u,max_u,newton_iters\n");
    for r in &trace.records {
        body += &format!("{},{},{},{},{},{}\n", r.t, r.dt, r.energy, r.min_u, r.max_u, r.newton_iterations);
    }
    w.write_all(body.as_bytes()).and_then(|_| w.flush()).map_err(io_err(path))
}

/// Samples the field on a uniform grid of `resolution` points per
/// direction: columns `x,u` in 1D and `x,y,u` in 2D.
pub fn write_snapshot_csv(path: &Path, space: &DgSpace<f64>, xi: &[f64], resolution: usize) -> Result<(), Error> {
    let mesh = space.mesh();
    let ext = mesh.extent();
    let coord = |i: usize, len: f64| len * i as f64 / resolution as f64;
    let mut body = String::new();
    if mesh.dimension() == 1 {
        body += "x,u\n";
        for i in 0..resolution {
            let x = coord(i, ext[0]);
            body += &format!("{},{}\n", x, space.eval_at(xi, [x, 0.0])?);
        }
    } else {
        body += "x,y,u\n";
        for j in 0..resolution {
            let y = coord(j, ext[1]);
            for i in 0..resolution {
                let x = coord(i, ext[0]);
                body += &format!("{},{},{}\n", x, y, space.eval_at(xi, [x, y])?);
            }
        }
    }
    let mut w = create(path)?;
    w.write_all(body.as_bytes()).and_then(|_| w.flush()).map_err(io_err(path))
}

pub fn summary_text(cfg: &RunConfig, sim: &Simulation) -> String {
    let tr = &sim.trace;
    let mesh = match cfg.mesh {
        MeshSpec::Interval { length, n } => format!("interval length={length} n={n}"),
        MeshSpec::Rectangle { width, height, nx, ny } => format!("rectangle {width}x{height} nx={nx} ny={ny}"),
    };
    let ripening = tr.ripening_time.map_or_else(|| "none".to_string(), |t| t.to_string());
    let last = tr.records.last().expect("trace has an initial record");
    [
        format!("mesh = {mesh}"),
        format!("degree = {}", cfg.degree),
        format!("dofs = {}", sim.space.n_dofs()),
        format!("sigma = {}", cfg.sigma_or_default()),
        format!("tolerance = {}", cfg.adaptive.tolerance),
        format!("accepted_steps = {}", tr.accepted),
        format!("rejected_steps = {}", tr.rejected),
        format!("newton_failures = {}", tr.newton_failures),
        format!("energy_violations = {}", tr.energy_violations),
        format!("ripening_time = {ripening}"),
        format!("final_time = {}", last.t),
        format!("final_energy = {}", last.energy),
        format!("wall_time_s = {:.3}", sim.wall_time),
    ]
    .join("\n")
        + "\n"
}

pub fn write_outputs(dir: &Path, cfg: &RunConfig, sim: &Simulation) -> Result<(), Error> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    write_energy_csv(&dir.join("energy.csv"), &sim.trace)?;
    if !sim.snapshots.is_empty() {
        let snap_dir = dir.join("snapshots");
        fs::create_dir_all(&snap_dir).map_err(io_err(&snap_dir))?;
        for (t, xi) in &sim.snapshots {
            write_snapshot_csv(&snap_dir.join(format!("t_{t}.csv")), &sim.space, xi, cfg.snapshot_resolution)?;
        }
    }
    let path = dir.join("summary.txt");
    fs::write(&path, summary_text(cfg, sim)).map_err(io_err(&path))
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepRow {
    pub tolerance: f64,
    pub ripening_time: Option<f64>,
    pub steps: usize,
    /// Step count relative to the previous row.
    pub ratio: Option<f64>,
}

/// Runs `cfg` once per tolerance, in parallel. Snapshots are skipped.
pub fn sweep(cfg: &RunConfig, tolerances: &[f64]) -> Result<Vec<SweepRow>, Error> {
    let runs: Vec<Result<RunTrace, Error>> = tolerances
        .par_iter()
        .map(|&tol| {
            let mut c = cfg.clone();
            c.adaptive.tolerance = tol;
            c.snapshot_times.clear();
            Ok(simulate(&c)?.trace)
        })
        .collect();
    let mut rows: Vec<SweepRow> = Vec::with_capacity(runs.len());
    for (&tolerance, run) in tolerances.iter().zip(runs) {
        let trace = run?;
        let ratio = rows.last().map(|p| trace.accepted as f64 / p.steps as f64);
        rows.push(SweepRow { tolerance, ripening_time: trace.ripening_time, steps: trace.accepted, ratio });
    }
    Ok(rows)
}

pub fn write_sweep_csv(path: &Path, rows: &[SweepRow]) -> Result<(), Error> {
    let opt = |v: Option<f64>| v.map_or_else(String::new, |x| x.to_string());
    let mut body = String::from("tol,ripening_time,steps,ratio\n");
    for r in rows {
        body += &format!("{},{},{},{}\n", r.tolerance, opt(r.ripening_time), r.steps, opt(r.ratio));
    }
    let mut w = create(path)?;
    w.write_all(body.as_bytes()).and_then(|_| w.flush()).map_err(io_err(path))
}

#[cfg(test)]
mod tests {
    use super::*;

    const SMALL: &str = "dimension = 1\nn = 16\nepsilon = 0.3\npotential = double_well\n\
                         mobility = constant\ninitial = sine\ninitial_offset = 0.2\ntolerance = 1e-3\nend_time = 2\n";

    #[test]
    fn random_field_is_bounded_and_deterministic() {
        let f = random_initial_field(7, 0.05);
        let g = random_initial_field(7, 0.05);
        let h = random_initial_field(8, 0.05);
        let mut differs = false;
        for i in 0..500 {
            let p = [0.013 * i as f64, 0.7 * (i % 11) as f64];
            assert!(f(p).abs() <= 0.05);
            assert_eq!(f(p).to_bits(), g(p).to_bits());
            differs |= f(p) != h(p);
        }
        assert!(differs);
        assert_eq!(random_initial_field(3, 0.0)([1.0, 2.0]), 0.0);
    }

    #[test]
    fn random_state_keeps_nodal_bounds() {
        let cfg: RunConfig =
            SMALL.replace("initial = sine", "initial = random\nseed = 4\namplitude = 0.05").parse().unwrap();
        let space = build_space(&cfg).unwrap();
        let xi = initial_state(&cfg, &space);
        assert_eq!(xi, initial_state(&cfg, &space));
        assert!(xi.iter().all(|v| v.abs() <= 0.05));
        assert!(xi.iter().any(|v| v.abs() > 0.01));
    }

    #[test]
    fn snapshots_and_files() {
        let mut cfg: RunConfig = SMALL.parse().unwrap();
        cfg.snapshot_times = vec![0.0, 0.5, 2.0];
        cfg.snapshot_resolution = 20;
        let sim = simulate(&cfg).unwrap();
        assert_eq!(sim.snapshots.iter().map(|s| s.0).collect::<Vec<_>>(), vec![0.0, 0.5, 2.0]);
        assert_eq!(sim.snapshots[2].1, sim.state);
        let dir = tempfile::tempdir().unwrap();
        write_outputs(dir.path(), &cfg, &sim).unwrap();
        let energy = fs::read_to_string(dir.path().join("energy.csv")).unwrap();
        assert!(energy.starts_with("t,dt,energy,min_u,max_u,newton_iters\n"));
        assert_eq!(energy.lines().count(), sim.trace.records.len() + 1);
        let snap = fs::read_to_string(dir.path().join("snapshots/t_0.5.csv")).unwrap();
        assert_eq!(snap.lines().count(), 21);
        assert!(fs::read_to_string(dir.path().join("summary.txt")).unwrap().contains("accepted_steps = "));
    }

    #[test]
    fn constant_snapshot() {
        let cfg: RunConfig = SMALL.replace("initial = sine", "initial = constant\ninitial_value = 1").parse().unwrap();
        let space = build_space(&cfg).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.csv");
        write_snapshot_csv(&path, &space, &initial_state(&cfg, &space), 10).unwrap();
        let text = fs::read_to_string(path).unwrap();
        assert!(text.lines().skip(1).all(|l| l.ends_with(",1")));
    }

    #[test]
    fn sweep_rows() {
        let cfg: RunConfig = SMALL.parse().unwrap();
        let rows = sweep(&cfg, &[1e-2, 1e-3]).unwrap();
        assert_eq!(rows[0].ratio, None);
        assert_eq!(rows[1].ratio, Some(rows[1].steps as f64 / rows[0].steps as f64));
        let dir = tempfile::tempdir().unwrap();
        write_sweep_csv(&dir.path().join("sweep.csv"), &rows).unwrap();
        let text = fs::read_to_string(dir.path().join("sweep.csv")).unwrap();
        assert!(text.starts_with("tol,ripening_time,steps,ratio\n0.01,,"));
    }
}
