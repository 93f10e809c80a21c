mod report;

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::str::FromStr;

use anyhow::{anyhow, Context, Result};
use clap::{Args, Parser, Subcommand};
use equiselect::{
    density_from_json, h_theorem_check, integrate, limit_diagnostics, select_equilibria, simulate, stationary_measure,
    write_trajectory_csv, AnnealingSchedule, Density, Error, Game, SimConfig, SolverConfig,
};
use serde_json::Value;

#[derive(Parser)]
#[command(
    name = "equiselect",
    version,
    about = "Equilibrium selection by Fokker-Planck flows on strategy graphs"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Print players, strategies, potential and pure Nash equilibria.
    Inspect(InspectArgs),
    /// Integrate the Fokker-Planck equation and write the trajectory as CSV.
    Evolve(EvolveArgs),
    /// Compute the stationary measure at one noise level.
    Stationary(StationaryArgs),
    /// Anneal the noise to zero and rank the pure Nash equilibria.
    Select(SelectArgs),
    /// Relative entropy, Fisher information and free energy along a trajectory.
    Diagnose(DiagnoseArgs),
    /// Simulate the particle jump process and write the empirical trajectory.
    Simulate(SimulateArgs),
}

#[derive(Args)]
struct InspectArgs {
    #[arg(long)]
    game: PathBuf,
}

#[derive(Args)]
struct EvolveArgs {
    #[arg(long)]
    game: PathBuf,
    #[arg(long)]
    beta: f64,
    #[arg(long, default_value_t = 1e4)]
    t_max: f64,
    /// Stop once ‖dρ/dt‖_∞ falls below this.
    #[arg(long, default_value_t = 1e-10)]
    tol: f64,
    #[arg(long, default_value = "uniform")]
    rho0: Rho0,
    /// Sample spacing; every accepted step is recorded when omitted.
    #[arg(long)]
    step: Option<f64>,
    /// CSV destination (stdout when omitted).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct StationaryArgs {
    #[arg(long)]
    game: PathBuf,
    #[arg(long)]
    beta: f64,
    #[arg(long, default_value_t = 1e4)]
    t_max: f64,
    #[arg(long, default_value_t = 1e-10)]
    tol: f64,
    #[arg(long, default_value = "uniform")]
    rho0: Rho0,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SelectArgs {
    #[arg(long)]
    game: PathBuf,
    /// First noise level of the schedule.
    #[arg(long, default_value_t = 1.0)]
    beta: f64,
    #[arg(long, default_value_t = 1e4)]
    t_max: f64,
    /// Limit tolerance between consecutive stationary measures.
    #[arg(long, default_value_t = 1e-4)]
    tol: f64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct DiagnoseArgs {
    #[arg(long)]
    game: PathBuf,
    #[arg(long)]
    beta: f64,
    #[arg(long, default_value_t = 20.0)]
    t_max: f64,
    #[arg(long, default_value_t = 1e-10)]
    tol: f64,
    #[arg(long, default_value = "uniform")]
    rho0: Rho0,
    /// Sample spacing.
    #[arg(long, default_value_t = 1e-3)]
    step: f64,
    /// CSV destination for `t,H,I,F`; the summary goes to stdout.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long)]
    game: PathBuf,
    #[arg(long)]
    beta: f64,
    #[arg(long, default_value = "uniform")]
    rho0: Rho0,
    #[arg(long, default_value_t = 100_000)]
    particles: u64,
    /// Jump step `h`.
    #[arg(long, default_value_t = 1e-3)]
    step: f64,
    #[arg(long, default_value_t = 20.0)]
    horizon: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Debug)]
enum Rho0 {
    Uniform,
    File(PathBuf),
}

impl FromStr for Rho0 {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "uniform" => Ok(Rho0::Uniform),
            _ => match s.strip_prefix("file:") {
                Some(path) if !path.is_empty() => Ok(Rho0::File(path.into())),
                _ => Err(format!("expected `uniform` or `file:<path>`, got {s:?}")),
            },
        }
    }
}

impl Rho0 {
    fn load(&self, game: &Game) -> Result<Density> {
        match self {
            Rho0::Uniform => Ok(Density::uniform(game.size())),
            Rho0::File(path) => {
                let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
                density_from_json(game, &text).with_context(|| format!("initial density {}", path.display()))
            }
        }
    }
}

fn load_game(path: &Path) -> Result<Game> {
    Game::from_path(path).with_context(|| format!("loading game {}", path.display()))
}

fn sink(out: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match out {
        Some(path) => {
            let file = File::create(path).with_context(|| format!("creating {}", path.display()))?;
            Box::new(BufWriter::new(file))
        }
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn emit_json(value: &Value, out: Option<&Path>) -> Result<()> {
    let mut w = sink(out)?;
    serde_json::to_writer_pretty(&mut w, value)?;
    writeln!(w)?;
    w.flush()?;
    Ok(())
}

fn solver_config(beta: f64, t_max: f64, tol: f64) -> SolverConfig {
    SolverConfig::new(beta).with_t_max(t_max).with_tol_stat(tol)
}

fn inspect(args: InspectArgs) -> Result<()> {
    let game = load_game(&args.game)?;
    emit_json(&report::inspect(&game)?, None)
}

fn evolve(args: EvolveArgs) -> Result<()> {
    let game = load_game(&args.game)?;
    let graph = game.graph()?;
    let rho0 = args.rho0.load(&game)?;
    let mut config = solver_config(args.beta, args.t_max, args.tol);
    if let Some(step) = args.step {
        config = config.with_sample_interval(step);
    }
    config.validate()?;
    let labels = game.profile_labels();
    match integrate(&game, &graph, &rho0, &config) {
        Ok(traj) => {
            let mut w = sink(args.out.as_deref())?;
            write_trajectory_csv(&mut w, &labels, &traj.samples)?;
            w.flush()?;
            log::info!(
                "{:?} after {} steps at t = {}",
                traj.termination,
                traj.steps,
                traj.final_time()
            );
            Ok(())
        }
        Err(Error::StepUnderflow { t, dt_min, partial }) => {
            // keep what was computed before the failure
            let mut w = sink(args.out.as_deref())?;
            write_trajectory_csv(&mut w, &labels, &partial.samples)?;
            w.flush()?;
            Err(Error::StepUnderflow { t, dt_min, partial }.into())
        }
        Err(e) => Err(e.into()),
    }
}

fn stationary(args: StationaryArgs) -> Result<()> {
    let game = load_game(&args.game)?;
    let graph = game.graph()?;
    let rho0 = args.rho0.load(&game)?;
    let config = solver_config(args.beta, args.t_max, args.tol);
    config.validate()?;
    let measure = stationary_measure(&game, &graph, args.beta, &rho0, &config)?;
    emit_json(&report::stationary(&game, &measure)?, args.out.as_deref())
}

fn select(args: SelectArgs) -> Result<()> {
    let game = load_game(&args.game)?;
    let graph = game.graph()?;
    let schedule = AnnealingSchedule {
        beta_start: args.beta,
        tol_lim: args.tol,
        ..AnnealingSchedule::default()
    };
    schedule.validate()?;
    let config = SolverConfig::default().with_t_max(args.t_max);
    let ranked = select_equilibria(&game, &graph, &schedule, &config)?;
    let nash: Vec<usize> = ranked.nash.iter().map(|m| m.profile).collect();
    let limit_report = limit_diagnostics(&ranked.history, &nash);
    emit_json(&report::select(&game, &ranked, &limit_report)?, args.out.as_deref())
}

fn diagnose(args: DiagnoseArgs) -> Result<()> {
    let game = load_game(&args.game)?;
    let graph = game.graph()?;
    let rho0 = args.rho0.load(&game)?;
    let config = solver_config(args.beta, args.t_max, args.tol).with_sample_interval(args.step);
    config.validate()?;
    let traj = integrate(&game, &graph, &rho0, &config)?;
    let diagnostics = h_theorem_check(&traj, &game, &graph, args.beta)?;
    let mut w = sink(Some(&args.out))?;
    writeln!(w, "t,H,I,F")?;
    for s in &diagnostics.samples {
        writeln!(
            w,
            "{:.16e},{:.16e},{:.16e},{:.16e}",
            s.t, s.entropy, s.fisher, s.free_energy
        )?;
    }
    w.flush()?;
    emit_json(&report::diagnose(&diagnostics), None)
}

fn run_simulation(args: SimulateArgs) -> Result<()> {
    let game = load_game(&args.game)?;
    let graph = game.graph()?;
    let rho0 = args.rho0.load(&game)?;
    let config = SimConfig {
        particles: args.particles,
        step: args.step,
        horizon: args.horizon,
        seed: args.seed,
        ..SimConfig::default()
    };
    config.validate()?;
    let traj = simulate(&game, &graph, &rho0, &config, args.beta)?;
    let mut w = sink(args.out.as_deref())?;
    write_trajectory_csv(&mut w, &game.profile_labels(), &traj.samples)?;
    w.flush()?;
    Ok(())
}

fn configure_threads() -> Result<()> {
    let Ok(value) = std::env::var("EQUISELECT_THREADS") else {
        return Ok(());
    };
    let threads: usize = value
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| anyhow!("EQUISELECT_THREADS must be a positive integer, got {value:?}"))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
        .context("configuring the worker pool")
}

fn run(cli: Cli) -> Result<()> {
    configure_threads()?;
    match cli.command {
        Command::Inspect(a) => inspect(a),
        Command::Evolve(a) => evolve(a),
        Command::Stationary(a) => stationary(a),
        Command::Select(a) => select(a),
        Command::Diagnose(a) => diagnose(a),
        Command::Simulate(a) => run_simulation(a),
    }
}

const EXIT_INPUT: u8 = 2;
const EXIT_SOLVER: u8 = 3;

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => match err.downcast_ref::<Error>().and_then(report::solver_failure) {
            // stdout may already carry partial output, so the body goes to stderr
            Some(body) => {
                eprintln!("{body}");
                ExitCode::from(EXIT_SOLVER)
            }
            None => {
                eprintln!("error: {err:#}");
                ExitCode::from(EXIT_INPUT)
            }
        },
    }
}
