use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use perifrax_core::config::{self, ScenarioConfig};
use perifrax_core::damage::crack_angle_sweep;
use perifrax_core::driver::{run, Simulation, SimulationState};
use perifrax_core::output::{format_number, CsvTable};
use perifrax_core::thermal::analytic::PlateSeries;
use perifrax_core::Error;

#[derive(Parser, Debug)]
#[command(name = "perifrax", version, about = "Thermo-mechanical peridynamic fracture on a shared FE mesh")]
struct Cli {
    /// Increase log verbosity (-v info, -vv debug).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run a scenario file (or the name of a shipped scenario).
    Run {
        config: String,
        /// Output directory for frames, CSV tables and the final state.
        #[arg(short, long, default_value = "out")]
        output: PathBuf,
        /// Override the number of time steps.
        #[arg(long)]
        steps: Option<usize>,
        /// Resume from a saved state.json.
        #[arg(long)]
        resume: Option<PathBuf>,
    },
    /// Parse and check a scenario without running it.
    Validate {
        config: String,
        /// Also print the canonical TOML form.
        #[arg(long)]
        canonical: bool,
    },
    /// List the shipped scenarios.
    Scenarios,
    /// Damage of a point split by a crack at angles from 0° to 90° (CSV).
    SweepAngle {
        #[arg(long, default_value_t = 3.0)]
        delta_ratio: f64,
        /// Number of evenly spaced angles including both ends.
        #[arg(long, default_value_t = 19)]
        steps: usize,
    },
    /// Analytic temperature and displacement of the heated plate (CSV).
    OracleSeries {
        /// Dimensionless times k·t/L².
        #[arg(long, value_delimiter = ',', default_value = "0.05,0.1,0.25,0.5,1")]
        times: Vec<f64>,
        /// Heights as fractions of L.
        #[arg(long, value_delimiter = ',', default_value = "0.5,1")]
        heights: Vec<f64>,
        #[arg(long, default_value_t = 1.0)]
        height: f64,
        #[arg(long, default_value_t = 1.0)]
        diffusivity: f64,
        #[arg(long, default_value_t = 0.25)]
        poisson: f64,
        #[arg(long, default_value_t = 0.016)]
        expansion: f64,
    },
}

fn load(spec: &str) -> Result<ScenarioConfig, Error> {
    let path = Path::new(spec);
    if path.exists() {
        return ScenarioConfig::load(path);
    }
    match config::builtin(spec) {
        Some(c) => c,
        None => Err(Error::Config(format!(
            "'{spec}' is neither a file nor a shipped scenario (see `perifrax scenarios`)"
        ))),
    }
}

fn execute(command: Command) -> Result<(), Error> {
    match command {
        Command::Run {
            config,
            output,
            steps,
            resume,
        } => {
            let mut cfg = load(&config)?;
            if let Some(n) = steps {
                cfg.time.steps = n;
            }
            let mut sim = match resume {
                None => Simulation::new(cfg)?,
                Some(path) => {
                    let text = std::fs::read_to_string(&path).map_err(|e| Error::Io {
                        path: path.display().to_string(),
                        source: e,
                    })?;
                    Simulation::resume(cfg, SimulationState::from_json(&text)?)?
                }
            };
            let started = std::time::Instant::now();
            let out = run(&mut sim, Some(&output))?;
            println!(
                "{}: {} steps, {} bond pairs broken, {} frames in {} ({:.1} s)",
                sim.config().name,
                out.state.step,
                sim.network().broken_pairs(),
                out.frames.len(),
                output.display(),
                started.elapsed().as_secs_f64()
            );
        }
        Command::Validate { config, canonical } => {
            let cfg = load(&config)?;
            let warnings = cfg.validate()?;
            let sim = Simulation::new(cfg.clone())?;
            for w in &warnings {
                println!("warning: {w}");
            }
            let mesh = sim.mesh();
            let (dx, dy) = mesh.element_size();
            println!("scenario      {}", cfg.name);
            println!("mesh          {} nodes, {} elements, {dx} x {dy} m", mesh.num_nodes(), mesh.num_elements());
            let h = sim.network().horizon();
            println!(
                "horizon       δ = {} m, l = {} m, {} bonds per full neighbourhood, {} bonds",
                h.delta,
                h.length,
                sim.network().full_neighborhood_size(),
                sim.network().num_bonds()
            );
            println!("precracks     {} bond pairs broken", sim.network().broken_pairs());
            println!(
                "time          {} steps of {} s, θ = {}",
                cfg.time.steps, cfg.time.dt, cfg.time.theta
            );
            match sim.micromodulus() {
                Some(m) => {
                    println!("micromodulus  τ0 = {}", format_number(m.tau0));
                    match sim.critical_stretch() {
                        Some(s) => println!("fracture      s0 = {}", format_number(s)),
                        None => println!("fracture      disabled"),
                    }
                }
                None => println!("mechanics     disabled"),
            }
            if canonical {
                print!("{}", cfg.to_toml());
            }
        }
        Command::Scenarios => {
            for (name, _) in config::SCENARIOS {
                println!("{name}");
            }
        }
        Command::SweepAngle { delta_ratio, steps } => {
            if steps < 2 {
                return Err(Error::InvalidArgument("--steps must be at least 2".into()));
            }
            let mut table = CsvTable::new(&["angle_deg", "d1", "d2", "d"]);
            for i in 0..steps {
                let angle = 90.0 * i as f64 / (steps - 1) as f64;
                let p = crack_angle_sweep(angle, delta_ratio)?;
                table.push(&[
                    format!("{angle}"),
                    format_number(p.d1),
                    format_number(p.d2),
                    format_number(p.scalar),
                ]);
            }
            print!("{}", table.as_str());
        }
        Command::OracleSeries {
            times,
            heights,
            height,
            diffusivity,
            poisson,
            expansion,
        } => {
            let series = PlateSeries::new(diffusivity, height);
            let mut table = CsvTable::new(&["time", "y", "T", "u_y", "tail_bound"]);
            for &tau in &times {
                let t = tau * height * height / diffusivity;
                for &f in &heights {
                    let y = f * height;
                    table.push(&[
                        format_number(t),
                        format_number(y),
                        format_number(series.temperature(y, t)),
                        format_number(series.displacement(y, t, poisson, expansion)),
                        format_number(series.remainder_bound(t)),
                    ]);
                }
            }
            print!("{}", table.as_str());
        }
    }
    Ok(())
}

fn configure_threads() -> Result<(), Error> {
    let Ok(value) = std::env::var("PERIFRAX_THREADS") else {
        return Ok(());
    };
    let n: usize = value
        .trim()
        .parse()
        .map_err(|_| Error::Config(format!("PERIFRAX_THREADS must be a non-negative integer (got '{value}')")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| Error::Config(format!("cannot configure worker threads: {e}")))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    let result = configure_threads().and_then(|_| execute(cli.command));
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_solver_failure() {
                ExitCode::from(2)
            } else {
                ExitCode::from(1)
            }
        }
    }
}
