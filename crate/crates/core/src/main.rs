use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use acdg::io::{self, presets, RawConfig, RunConfig};

#[derive(Parser)]
#[command(name = "acdg", version, about = "Adaptive SIPG/AVF Allen-Cahn solver")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one simulation from a config file.
    Run {
        config: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Run a config at several tolerances and tabulate ripening times.
    Sweep {
        config: PathBuf,
        /// Comma-separated tolerances, e.g. 1e-4,1e-5,1e-6.
        #[arg(long, value_delimiter = ',', required = true)]
        tols: Vec<f64>,
        #[command(flatten)]
        common: Common,
    },
    /// Run a built-in experiment (ex_1d_dw, ex_2d_dw, ex_2d_log, ex_2d_logdeg).
    Preset {
        name: String,
        /// Print the preset config instead of running it.
        #[arg(long)]
        print: bool,
        #[command(flatten)]
        common: Common,
    },
}

#[derive(Args)]
struct Common {
    /// Override a config key, e.g. --set tolerance=1e-5. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Output directory; defaults to the config's `output` key or out/<name>.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn configure(text: &str, overrides: &[String]) -> Result<RunConfig, io::Error> {
    let mut raw = RawConfig::parse(text)?;
    for o in overrides {
        raw.set(o)?;
    }
    Ok(raw.build()?)
}

fn read(path: &Path) -> Result<String, io::Error> {
    std::fs::read_to_string(path).map_err(|source| io::Error::Io { path: path.to_path_buf(), source })
}

fn out_dir(common: &Common, cfg: &RunConfig, name: &str) -> PathBuf {
    common.out.clone().or_else(|| cfg.output.as_ref().map(PathBuf::from)).unwrap_or_else(|| Path::new("out").join(name))
}

fn stem(path: &Path) -> String {
    path.file_stem().map_or_else(|| "run".to_string(), |s| s.to_string_lossy().into_owned())
}

fn run(cfg: &RunConfig, dir: &Path) -> Result<(), io::Error> {
    let sim = io::simulate(cfg)?;
    io::write_outputs(dir, cfg, &sim)?;
    print!("{}", io::summary_text(cfg, &sim));
    println!("output = {}", dir.display());
    Ok(())
}

fn execute(cli: Cli) -> Result<(), io::Error> {
    match cli.command {
        Command::Run { config, common } => {
            let cfg = configure(&read(&config)?, &common.overrides)?;
            run(&cfg, &out_dir(&common, &cfg, &stem(&config)))
        }
        Command::Sweep { config, tols, common } => {
            let cfg = configure(&read(&config)?, &common.overrides)?;
            let dir = out_dir(&common, &cfg, &format!("{}_sweep", stem(&config)));
            let rows = io::sweep(&cfg, &tols)?;
            std::fs::create_dir_all(&dir).map_err(|source| io::Error::Io { path: dir.clone(), source })?;
            io::write_sweep_csv(&dir.join("sweep.csv"), &rows)?;
            println!("tol,ripening_time,steps,ratio");
            for r in &rows {
                let opt = |v: Option<f64>| v.map_or_else(|| "-".to_string(), |x| format!("{x:.4}"));
                println!("{:e},{},{},{}", r.tolerance, opt(r.ripening_time), r.steps, opt(r.ratio));
            }
            Ok(())
        }
        Command::Preset { name, print, common } => {
            let Some(text) = presets::preset_text(&name) else {
                let known: Vec<_> = presets::preset_names().collect();
                return Err(
                    io::ConfigError::Read(format!("unknown preset {name:?}; known: {}", known.join(", "))).into()
                );
            };
            if print {
                print!("{text}");
                return Ok(());
            }
            let cfg = configure(text, &common.overrides)?;
            run(&cfg, &out_dir(&common, &cfg, &name))
        }
    }
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
