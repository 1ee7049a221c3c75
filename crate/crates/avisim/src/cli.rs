//! Command-line front end.
//!
//! Two subcommands: `simulate` runs a scene file, `experiment` runs a named
//! built-in scene. Both emit the diagnostic series as CSV, to stdout or to
//! `--out`. Exit codes: 0 on success, 1 for usage problems (bad flags,
//! unreadable or invalid scenes, unknown experiments), 2 when a simulation
//! itself fails.

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::diagnostics::write_csv;
use crate::error::SimError;
use crate::scene::{builtin_scene, parse_scene, BuiltinScene, SceneConfig};
use crate::scheduler::Simulation;

#[derive(Parser, Debug)]
#[command(name = "avisim", version, about = "Event-driven contact simulation")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Simulate a scene file
    Simulate {
        /// Path to a scene description
        scene: PathBuf,
        #[command(flatten)]
        opts: RunOpts,
    },
    /// Run a built-in experiment: spring, box, or restitution-sweep
    Experiment {
        /// Experiment name
        name: String,
        #[command(flatten)]
        opts: RunOpts,
    },
}

#[derive(Args, Debug, Default)]
pub struct RunOpts {
    /// Write the CSV here instead of stdout (a sweep derives one file per run)
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Override the run duration
    #[arg(long, allow_negative_numbers = true)]
    pub duration: Option<f64>,
    /// Override the seed of seeded experiments
    #[arg(long)]
    pub seed: Option<u64>,
    /// Start activated penalty layers at the activation moment instead of on
    /// their global step grid (demonstrates the resulting energy drift)
    #[arg(long)]
    pub broken_clocks: bool,
    /// Disc count, for experiments with a variable cast
    #[arg(long)]
    pub spheres: Option<usize>,
    /// Override the coefficient of restitution
    #[arg(long, allow_negative_numbers = true)]
    pub e: Option<f64>,
}

enum Failure {
    Usage(String),
    Sim(SimError),
}

/// Executes a parsed command line and returns the process exit code.
pub fn run(cli: Cli) -> i32 {
    match dispatch(cli) {
        Ok(()) => 0,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            1
        }
        Err(Failure::Sim(err)) => {
            eprintln!("error: {err}");
            2
        }
    }
}

fn dispatch(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Simulate { scene, opts } => {
            if opts.spheres.is_some() {
                return Err(Failure::Usage(
                    "scene files fix their own cast; --spheres does not apply".into(),
                ));
            }
            let text = fs::read_to_string(&scene).map_err(|e| {
                Failure::Usage(format!("cannot read scene '{}': {e}", scene.display()))
            })?;
            let mut config =
                parse_scene(&text).map_err(|e| Failure::Usage(format!("{}: {e}", scene.display())))?;
            apply_overrides(&mut config, &opts)?;
            run_single(&config, opts.out.as_deref())
        }
        Command::Experiment { name, opts } => {
            let built = builtin_scene(&name, opts.spheres, opts.seed)
                .map_err(|e| Failure::Usage(e.to_string()))?;
            match built {
                BuiltinScene::Single(mut config) => {
                    apply_overrides(&mut config, &opts)?;
                    run_single(&config, opts.out.as_deref())
                }
                BuiltinScene::Sweep(runs) => {
                    if opts.e.is_some() {
                        return Err(Failure::Usage(
                            "the sweep sets the restitution itself; --e does not apply".into(),
                        ));
                    }
                    let Some(out) = opts.out.as_deref() else {
                        return Err(Failure::Usage(
                            "a sweep writes one file per run; give --out".into(),
                        ));
                    };
                    for (e, mut config) in runs {
                        apply_overrides(&mut config, &opts)?;
                        run_single(&config, Some(&sweep_path(out, e)))?;
                    }
                    Ok(())
                }
            }
        }
    }
}

fn apply_overrides(config: &mut SceneConfig, opts: &RunOpts) -> Result<(), Failure> {
    if let Some(d) = opts.duration {
        config.duration = d;
    }
    if let Some(s) = opts.seed {
        config.seed = s;
    }
    config.broken_clocks |= opts.broken_clocks;
    if let Some(e) = opts.e {
        match &mut config.contact {
            Some(c) => c.e = e,
            None => {
                return Err(Failure::Usage(
                    "--e needs a scene with a contact section".into(),
                ))
            }
        }
    }
    config.validate().map_err(|e| Failure::Usage(e.to_string()))
}

fn run_single(config: &SceneConfig, out: Option<&Path>) -> Result<(), Failure> {
    let mut sim = Simulation::new(config).map_err(Failure::Sim)?;
    sim.run().map_err(Failure::Sim)?;
    write_output(sim, out).map_err(|e| Failure::Sim(e.into()))
}

fn write_output(sim: Simulation, out: Option<&Path>) -> io::Result<()> {
    match out {
        Some(path) => {
            let mut w = io::BufWriter::new(fs::File::create(path)?);
            write_csv(&mut w, sim.snapshots(), sim.dim())?;
            w.flush()
        }
        None => {
            let stdout = io::stdout();
            let mut lock = stdout.lock();
            write_csv(&mut lock, sim.snapshots(), sim.dim())
        }
    }
}

/// Derives the per-run output path of a sweep: `pile.csv` becomes
/// `pile_e0.8.csv`.
fn sweep_path(out: &Path, e: f64) -> PathBuf {
    let stem = out.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    let ext = out
        .extension()
        .map(|s| format!(".{}", s.to_string_lossy()))
        .unwrap_or_default();
    out.with_file_name(format!("{stem}_e{e:.1}{ext}"))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(args: &[&str]) -> Cli {
        Cli::try_parse_from(args).expect("arguments must parse")
    }

    #[test]
    fn sweep_paths_embed_the_restitution() {
        assert_eq!(sweep_path(Path::new("pile.csv"), 0.8), Path::new("pile_e0.8.csv"));
        assert_eq!(sweep_path(Path::new("out/pile.csv"), 1.0), Path::new("out/pile_e1.0.csv"));
        assert_eq!(sweep_path(Path::new("pile"), 0.0), Path::new("pile_e0.0"));
    }

    #[test]
    fn flags_parse_into_options() {
        let cli = parse(&[
            "avisim",
            "experiment",
            "box",
            "--spheres",
            "7",
            "--seed",
            "3",
            "--duration",
            "2.5",
            "--broken-clocks",
            "--e",
            "0.5",
        ]);
        let Command::Experiment { name, opts } = cli.command else {
            panic!("expected the experiment subcommand");
        };
        assert_eq!(name, "box");
        assert_eq!(opts.spheres, Some(7));
        assert_eq!(opts.seed, Some(3));
        assert_eq!(opts.duration, Some(2.5));
        assert!(opts.broken_clocks);
        assert_eq!(opts.e, Some(0.5));
    }

    #[test]
    fn missing_scene_file_is_a_usage_error() {
        let cli = parse(&["avisim", "simulate", "/nonexistent/scene.txt"]);
        assert_eq!(run(cli), 1);
    }

    #[test]
    fn invalid_scene_file_is_a_usage_error() {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        writeln!(f, "body particle id=0 pos=0,0").unwrap(); // no run line
        let cli = parse(&["avisim", "simulate", f.path().to_str().unwrap()]);
        assert_eq!(run(cli), 1);
    }

    #[test]
    fn unknown_experiment_is_a_usage_error() {
        let cli = parse(&["avisim", "experiment", "carousel"]);
        assert_eq!(run(cli), 1);
    }

    #[test]
    fn spheres_does_not_apply_to_scene_files_or_spring() {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        writeln!(f, "body particle id=0 pos=0,0\nrun duration=0.1").unwrap();
        let cli = parse(&["avisim", "simulate", f.path().to_str().unwrap(), "--spheres", "3"]);
        assert_eq!(run(cli), 1);
        let cli = parse(&["avisim", "experiment", "spring", "--spheres", "3"]);
        assert_eq!(run(cli), 1);
    }

    #[test]
    fn sweep_requires_out_and_rejects_e() {
        let cli = parse(&["avisim", "experiment", "restitution-sweep"]);
        assert_eq!(run(cli), 1);
        let cli = parse(&[
            "avisim",
            "experiment",
            "restitution-sweep",
            "--out",
            "x.csv",
            "--e",
            "0.5",
        ]);
        assert_eq!(run(cli), 1);
    }

    #[test]
    fn a_small_scene_runs_to_csv() {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        writeln!(
            f,
            "body particle id=0 pos=0,1 vel=1,0\nforce gravity g=0,-1 h=0.05\nrun duration=1 logdt=0.5"
        )
        .unwrap();
        let out = tempfile::NamedTempFile::new().unwrap();
        let cli = parse(&[
            "avisim",
            "simulate",
            f.path().to_str().unwrap(),
            "--out",
            out.path().to_str().unwrap(),
        ]);
        assert_eq!(run(cli), 0);
        let text = fs::read_to_string(out.path()).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "t,E_kin,E_mat,E_pen,E_total,px,py,min_gap");
        assert_eq!(lines.len(), 4); // header + t = 0.0, 0.5, 1.0
    }

    #[test]
    fn e_requires_a_contact_section() {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        writeln!(f, "body particle id=0 pos=0,0\nrun duration=0.1").unwrap();
        let cli =
            parse(&["avisim", "simulate", f.path().to_str().unwrap(), "--e", "0.5"]);
        assert_eq!(run(cli), 1);
    }

    #[test]
    fn duration_override_must_stay_valid() {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        writeln!(f, "body particle id=0 pos=0,0\nrun duration=1").unwrap();
        let cli = parse(&[
            "avisim",
            "simulate",
            f.path().to_str().unwrap(),
            "--duration",
            "-2",
        ]);
        assert_eq!(run(cli), 1);
    }
}
