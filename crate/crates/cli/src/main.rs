//! `hexapod`: runs experiments and inspects the control stack.
//!
//! Exit codes: 0 success, 1 failed check or I/O error, 2 config or input
//! error, 3 simulation divergence.

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand};
use hexapod_core::checks::{dynamics_suite, kinematics_suite};
use hexapod_core::config::{config_to_text, Config};
use hexapod_core::experiment::{self, comparison_csv, ExperimentError, PRESETS};
use hexapod_core::gait::{classify, GaitMode};
use hexapod_core::kinematics::ik;
use hexapod_core::metrics::compute_metrics;
use hexapod_core::model::{max_kinematic_speed, LegId};
use hexapod_core::sim::EpisodeLog;
use hexapod_core::trajectory::{build_trajectory, sample_cycle, PlanarTwist, DEFAULT_CLEARANCE};
use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "hexapod", version, about = "Hexapod locomotion experiments and model checks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment from a spec file or a named preset.
    Run(RunArgs),
    /// Compute metrics from an episode log.
    Metrics(MetricsArgs),
    /// Robot model commands.
    Model {
        #[command(subcommand)]
        command: ModelCommand,
    },
    /// Gait commands.
    Gait {
        #[command(subcommand)]
        command: GaitCommand,
    },
    /// Trajectory commands.
    Traj {
        #[command(subcommand)]
        command: TrajCommand,
    },
    /// Kinematics commands.
    Kin {
        #[command(subcommand)]
        command: CheckCommand,
    },
    /// Dynamics commands.
    Dyn {
        #[command(subcommand)]
        command: CheckCommand,
    },
}

#[derive(Args)]
struct ConfigArg {
    /// Robot and controller config (TOML); built-in defaults if omitted.
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Args)]
struct RunArgs {
    /// Experiment spec (TOML).
    spec: Option<PathBuf>,
    /// Named preset instead of a spec file.
    #[arg(long, conflicts_with = "spec")]
    preset: Option<String>,
    /// Output directory; defaults to the spec's `output` or `out/<name>`.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Override the episode duration (s).
    #[arg(long)]
    duration: Option<f64>,
    /// Config for presets, or to override the spec's config.
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Args)]
struct MetricsArgs {
    log: PathBuf,
    /// Directory to write metrics.csv and summary.txt into.
    #[arg(long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    config: ConfigArg,
}

#[derive(Subcommand)]
enum ModelCommand {
    /// Validate a config and print the resolved model.
    Validate {
        #[command(flatten)]
        config: ConfigArg,
        /// Also print the fully resolved config as TOML.
        #[arg(long)]
        dump: bool,
    },
}

#[derive(Subcommand)]
enum GaitCommand {
    /// Print each leg's mode over one cycle as CSV.
    Inspect {
        #[arg(long, default_value = "tripod")]
        gait: String,
        /// Phase samples over the cycle.
        #[arg(long, default_value_t = 24)]
        samples: usize,
        #[command(flatten)]
        config: ConfigArg,
    },
}

#[derive(Subcommand)]
enum TrajCommand {
    /// Sample one leg's step cycle as CSV.
    Dump(TrajArgs),
}

#[derive(Args)]
struct TrajArgs {
    #[arg(long, default_value = "tripod")]
    gait: String,
    /// Leg tag: fl, ml, rl, fr, mr or rr.
    #[arg(long, default_value = "fl")]
    leg: String,
    /// Forward velocity (m/s).
    #[arg(long, default_value_t = 0.3)]
    velocity: f64,
    #[arg(long, default_value_t = 0.0)]
    lateral: f64,
    #[arg(long, default_value_t = 0.0)]
    yaw_rate: f64,
    /// Step frequency (Hz).
    #[arg(long, default_value_t = 1.0)]
    frequency: f64,
    /// Swing apex height above the foothold plane (m).
    #[arg(long, default_value_t = DEFAULT_CLEARANCE)]
    clearance: f64,
    /// Samples per segment.
    #[arg(long, default_value_t = 50)]
    samples: usize,
    /// Write to a file instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    config: ConfigArg,
}

#[derive(Subcommand)]
enum CheckCommand {
    /// Run the numerical oracle suite against the model.
    Check {
        #[arg(long, default_value_t = 10_000)]
        samples: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[command(flatten)]
        config: ConfigArg,
    },
}

/// An error carrying the process exit code it maps to.
struct Failure {
    code: u8,
    error: anyhow::Error,
}

type CliResult = Result<(), Failure>;

fn config_error(e: impl Into<anyhow::Error>) -> Failure {
    Failure { code: 2, error: e.into() }
}

fn other(e: impl Into<anyhow::Error>) -> Failure {
    Failure { code: 1, error: e.into() }
}

impl From<ExperimentError> for Failure {
    fn from(e: ExperimentError) -> Self {
        let code = if e.is_divergence() {
            3
        } else if e.is_config() {
            2
        } else {
            1
        };
        Failure { code, error: e.into() }
    }
}

fn load_config(arg: &ConfigArg) -> Result<Config, Failure> {
    load_config_path(arg.config.as_deref())
}

fn load_config_path(path: Option<&Path>) -> Result<Config, Failure> {
    match path {
        Some(p) => experiment::load_config_file(p).map_err(|e| match e {
            ExperimentError::Io { .. } => config_error(e),
            e => e.into(),
        }),
        None => Ok(Config::default()),
    }
}

fn emit(text: &str, out: Option<&Path>) -> CliResult {
    match out {
        Some(p) => fs::write(p, text)
            .with_context(|| format!("writing {}", p.display()))
            .map_err(other),
        None => std::io::stdout().write_all(text.as_bytes()).map_err(other),
    }
}

fn run(args: RunArgs) -> CliResult {
    let mut specs = match (&args.spec, &args.preset) {
        (Some(path), None) => vec![experiment::load_spec(path).map_err(|e| match e {
            ExperimentError::Io { .. } => config_error(e),
            e => e.into(),
        })?],
        (None, Some(name)) => {
            experiment::preset(name).ok_or_else(|| config_error(anyhow!("unknown preset `{name}` (known: {})", PRESETS.join(", "))))?
        }
        _ => return Err(config_error(anyhow!("give a spec file or --preset <name>"))),
    };
    for s in &mut specs {
        if let Some(seed) = args.seed {
            s.seed = seed;
        }
        if let Some(d) = args.duration {
            s.duration = d;
        }
        if let Some(c) = &args.config {
            s.config = Some(c.clone());
        }
    }
    // Resolve everything before the first tick so config errors never cost a run.
    let mut resolved = Vec::with_capacity(specs.len());
    for s in specs {
        let config = experiment::resolve_config(&s)?;
        experiment::episode_setup(&s, &config)?;
        resolved.push((s, config));
    }
    let base = match (&args.out, &args.preset, resolved.first().and_then(|(s, _)| s.output.clone())) {
        (Some(o), _, _) => o.clone(),
        (None, None, Some(o)) => o,
        (None, Some(name), _) => PathBuf::from("out").join(name),
        (None, None, None) => PathBuf::from("out").join(&resolved[0].0.name),
    };
    let multi = resolved.len() > 1;
    let mut outcomes = Vec::new();
    for (spec, config) in &resolved {
        let dir = if multi { base.join(&spec.name) } else { base.clone() };
        log::info!("running {} for {} s into {}", spec.name, spec.duration, dir.display());
        let o = experiment::run_experiment(spec, config, Some(&dir))?;
        println!("== {} ({})", spec.name, dir.display());
        print!("{}", o.metrics.summary());
        if o.stats.singular_events > 0 {
            println!("singular force-map ticks: {}", o.stats.singular_events);
        }
        outcomes.push(o);
    }
    if multi {
        let csv = comparison_csv(&outcomes);
        let path = base.join("comparison.csv");
        fs::write(&path, &csv)
            .with_context(|| format!("writing {}", path.display()))
            .map_err(other)?;
        println!("== comparison ({})", path.display());
        print!("{csv}");
    }
    Ok(())
}

fn metrics(args: MetricsArgs) -> CliResult {
    let config = load_config(&args.config)?;
    let file = fs::File::open(&args.log)
        .with_context(|| format!("opening {}", args.log.display()))
        .map_err(config_error)?;
    let log = EpisodeLog::read_csv(std::io::BufReader::new(file))
        .with_context(|| format!("reading {}", args.log.display()))
        .map_err(config_error)?;
    let report = compute_metrics(&log, &config.model);
    match &args.out {
        Some(dir) => {
            fs::create_dir_all(dir)
                .with_context(|| format!("creating {}", dir.display()))
                .map_err(other)?;
            emit(&report.to_csv(), Some(&dir.join("metrics.csv")))?;
            emit(&report.summary(), Some(&dir.join("summary.txt")))?;
            print!("{}", report.summary());
        }
        None => print!("{}", report.to_csv()),
    }
    Ok(())
}

fn model_validate(arg: &ConfigArg, dump: bool) -> CliResult {
    let config = load_config(arg)?;
    let m = &config.model;
    let mut s = String::new();
    let b = &m.body;
    let _ = writeln!(s, "model ok");
    let _ = writeln!(
        s,
        "body        {} x {} m, stance height {} m, mass {} kg",
        b.length, b.width, b.stance_height, b.mass
    );
    let l = &m.legs[0];
    let _ = writeln!(
        s,
        "leg links   coxa {} femur {} tibia {} m, masses {:.3?} kg",
        l.coxa, l.femur, l.tibia, l.link_masses
    );
    let _ = writeln!(
        s,
        "envelope    peak {:?} continuous {:?} N·m",
        m.envelope.peak_torque, m.envelope.continuous_torque
    );
    let _ = writeln!(
        s,
        "workspace   {} m, spacing {} m, buffer {} m",
        m.workspace.length, m.workspace.foothold_spacing, m.workspace.safety_buffer
    );
    for (name, gait) in &config.gaits {
        let speeds: Vec<String> = [0.5, 0.75, 1.0, 1.4]
            .iter()
            .filter_map(|f| {
                max_kinematic_speed(m, gait.duty_factor, *f)
                    .ok()
                    .map(|v| format!("{v:.3} m/s @ {f} Hz"))
            })
            .collect();
        let _ = writeln!(s, "gait {name:<7} duty {:.3}, max speed {}", gait.duty_factor, speeds.join(", "));
    }
    for leg in LegId::ALL {
        let p = m.default_foothold(leg);
        let local = m.mount(leg).point_to_leg(&p);
        let q = ik(m.leg(leg), &local)
            .with_context(|| format!("default foothold of {leg}"))
            .map_err(config_error)?;
        let _ = writeln!(
            s,
            "foothold {leg}  ({:+.3}, {:+.3}, {:+.3}) m, q = ({:+.4}, {:+.4}, {:+.4}) rad",
            p.x, p.y, p.z, q[0], q[1], q[2]
        );
    }
    if dump {
        s.push('\n');
        s.push_str(&config_to_text(&config));
    }
    emit(&s, None)
}

fn gait_inspect(gait_name: &str, samples: usize, arg: &ConfigArg) -> CliResult {
    let config = load_config(arg)?;
    let gait = config.gait(gait_name).map_err(config_error)?;
    let mut s = String::from("global_phase");
    for leg in LegId::ALL {
        let _ = write!(s, ",{leg}_mode,{leg}_progress");
    }
    s.push_str(",stance_count\n");
    let n = samples.max(1);
    for k in 0..n {
        let phase = k as f64 / n as f64;
        let _ = write!(s, "{phase:.6}");
        let mut stance = 0;
        for leg in LegId::ALL {
            let (mode, progress) = classify(gait.leg_phase(phase, leg), gait);
            stance += usize::from(mode == GaitMode::Stance);
            let _ = write!(s, ",{},{progress:.6}", mode.name());
        }
        let _ = writeln!(s, ",{stance}");
    }
    emit(&s, None)
}

fn traj_dump(a: &TrajArgs) -> CliResult {
    let config = load_config(&a.config)?;
    let gait = config.gait(&a.gait).map_err(config_error)?;
    let leg = LegId::from_tag(&a.leg).ok_or_else(|| config_error(anyhow!("unknown leg `{}` (use fl ml rl fr mr rr)", a.leg)))?;
    let twist = PlanarTwist::new(a.velocity, a.lateral, a.yaw_rate);
    let t = build_trajectory(&config.model, leg, gait, twist, a.frequency, a.clearance).map_err(config_error)?;
    let mut s = String::from("time,mode,x,y,z,vx,vy,vz,ax,ay,az\n");
    let n = a.samples.max(1);
    let samples = sample_cycle(&t, n);
    for (k, (time, c)) in samples.iter().enumerate() {
        let mode = GaitMode::ALL[(k / n).min(3)];
        let mode = if k == samples.len() - 1 { GaitMode::Stance } else { mode };
        let _ = write!(s, "{time:.6},{}", mode.name());
        for v in [c.position, c.velocity, c.acceleration] {
            let _ = write!(s, ",{:.9},{:.9},{:.9}", v.x, v.y, v.z);
        }
        s.push('\n');
    }
    emit(&s, a.out.as_deref())
}

fn kin_check(samples: usize, seed: u64, arg: &ConfigArg) -> CliResult {
    let config = load_config(arg)?;
    let r = kinematics_suite(&config.model, samples, seed);
    println!("{r}");
    let ok = r.fk_vs_chain <= 1e-12 && r.ik_round_trip <= 1e-9 && r.jacobian_vs_fd <= 1e-6 && r.ik_failures == 0;
    verdict(ok)
}

fn dyn_check(samples: usize, seed: u64, arg: &ConfigArg) -> CliResult {
    let config = load_config(arg)?;
    let r = dynamics_suite(&config.model, samples, seed);
    println!("{r}");
    let ok = r.gravity_vs_potential <= 1e-9
        && r.power_balance_relative <= 1e-6
        && r.hexapod_residual <= 1e-9
        && r.tripod_residual <= 1e-9
        && r.hexapod_share_error <= 1e-9;
    verdict(ok)
}

fn verdict(ok: bool) -> CliResult {
    if ok {
        println!("PASS");
        Ok(())
    } else {
        println!("FAIL");
        Err(other(anyhow!("check exceeded its tolerance")))
    }
}

fn dispatch(cli: Cli) -> CliResult {
    match cli.command {
        Command::Run(a) => run(a),
        Command::Metrics(a) => metrics(a),
        Command::Model {
            command: ModelCommand::Validate { config, dump },
        } => model_validate(&config, dump),
        Command::Gait {
            command: GaitCommand::Inspect { gait, samples, config },
        } => gait_inspect(&gait, samples, &config),
        Command::Traj {
            command: TrajCommand::Dump(a),
        } => traj_dump(&a),
        Command::Kin {
            command: CheckCommand::Check { samples, seed, config },
        } => kin_check(samples, seed, &config),
        Command::Dyn {
            command: CheckCommand::Check { samples, seed, config },
        } => dyn_check(samples, seed, &config),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match dispatch(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {:#}", f.error);
            ExitCode::from(f.code)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::CommandFactory;

    #[test]
    fn cli_definition_is_consistent() {
        Cli::command().debug_assert();
    }

    #[test]
    fn experiment_errors_map_to_exit_codes() {
        let spec = ExperimentError::Spec("bad".into());
        assert_eq!(Failure::from(spec).code, 2);
        let div = ExperimentError::Episode(hexapod_core::sim::EpisodeError::Divergence(
            hexapod_core::sim::SimError::Divergence {
                time: 1.0,
                reason: "x".into(),
            },
        ));
        assert_eq!(Failure::from(div).code, 3);
    }
}
