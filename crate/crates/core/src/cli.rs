//! Command-line front end. [`run`] returns the process exit code.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::json;

use crate::belief::DEFAULT_QUANTIZE_RESOLUTION;
use crate::error::{Result, SpbeError};
use crate::game::expected_total_reward;
use crate::io::{read_game, EquilibriumDocument, EXAMPLE_FORMAT, REPORT_FORMAT, SIMULATION_FORMAT};
use crate::pubgoods::{emit_region_map, reproduce_example, MapMode, PubGoodsParams};
use crate::solver::{forward_construct, EquilibriumGenerator, FixedPointConfig, NodeStatus, SelectionRule};
use crate::verify::{check_sequential_rationality, simulate, DEFAULT_VERIFY_TOLERANCE};

pub const EXIT_OK: i32 = 0;
pub const EXIT_VERIFY_FAIL: i32 = 1;
pub const EXIT_SOLVER_FAILURE: i32 = 2;
pub const EXIT_INPUT_ERROR: i32 = 3;

#[derive(Parser, Debug, Clone)]
#[command(name = "spbe", version, about = "Structured perfect Bayesian equilibria of finite dynamic games")]
pub struct Cli {
    /// Worker threads; defaults to the available hardware parallelism.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug, Clone)]
pub enum Command {
    /// Solve a game file and write the equilibrium document.
    Solve {
        #[arg(long)]
        game: PathBuf,
        #[arg(long, short)]
        out: Option<PathBuf>,
        #[command(flatten)]
        solver: SolverArgs,
        /// Also record every distinct stage fixed point found at each node.
        #[arg(long)]
        enumerate_fixed_points: bool,
    },
    /// Check sequential rationality and belief consistency of an equilibrium document.
    Verify {
        #[arg(long)]
        equilibrium: PathBuf,
        #[arg(long, default_value_t = DEFAULT_VERIFY_TOLERANCE)]
        tolerance: f64,
        #[arg(long, short)]
        out: Option<PathBuf>,
    },
    /// Monte Carlo estimate of each player's total reward under an equilibrium.
    Simulate {
        #[arg(long)]
        equilibrium: PathBuf,
        #[arg(long, default_value_t = 100_000)]
        episodes: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, short)]
        out: Option<PathBuf>,
    },
    /// Reproduce the public goods example.
    Example {
        #[command(flatten)]
        params: ParamArgs,
        #[command(flatten)]
        solver: SolverArgs,
        #[arg(long, short)]
        out: Option<PathBuf>,
    },
    /// Emit the last-stage region map of the public goods example as CSV.
    Map {
        #[arg(long, default_value_t = 0.01)]
        resolution: f64,
        #[arg(long, value_enum, default_value_t = MapModeArg::Canonical)]
        mode: MapModeArg,
        #[command(flatten)]
        params: ParamArgs,
        #[arg(long, short)]
        out: Option<PathBuf>,
    },
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct ParamArgs {
    #[arg(long, default_value_t = 0.1)]
    pub q: f64,
    #[arg(long, default_value_t = 0.2)]
    pub xl: f64,
    #[arg(long, default_value_t = 1.2)]
    pub xh: f64,
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct SolverArgs {
    #[arg(long, default_value_t = DEFAULT_QUANTIZE_RESOLUTION)]
    pub quantize_resolution: f64,
    #[arg(long, default_value_t = 0.5)]
    pub damping: f64,
    #[arg(long = "max-iter", default_value_t = 10_000)]
    pub max_iter: usize,
    /// Seed for random fixed-point initializations.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 1e-9)]
    pub fixed_point_tolerance: f64,
    #[arg(long, default_value_t = 1e-8)]
    pub argmax_tolerance: f64,
    #[arg(long, value_enum, default_value_t = SelectionArg::FirstConverged)]
    pub selection: SelectionArg,
    /// Skip support enumeration at the last stage and use the seeds only.
    #[arg(long)]
    pub no_support_enumeration: bool,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum SelectionArg {
    FirstConverged,
    LowestResidual,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum MapModeArg {
    Canonical,
    AllSolutions,
}

impl SolverArgs {
    pub fn to_config(&self) -> Result<FixedPointConfig> {
        let config = FixedPointConfig {
            max_iterations: self.max_iter,
            damping: self.damping,
            fixed_point_tolerance: self.fixed_point_tolerance,
            argmax_tolerance: self.argmax_tolerance,
            rng_seed: self.seed,
            quantize_resolution: self.quantize_resolution,
            selection: match self.selection {
                SelectionArg::FirstConverged => SelectionRule::FirstConverged,
                SelectionArg::LowestResidual => SelectionRule::LowestResidual,
            },
            support_enumeration: !self.no_support_enumeration,
            ..FixedPointConfig::default()
        };
        config.validate()?;
        Ok(config)
    }
}

/// Fully resolved invocation, embedded in every output. The thread count is
/// deliberately absent since results do not depend on it.
#[derive(Debug, Clone, Serialize)]
pub struct RunConfig {
    pub command: &'static str,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub input: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub solver: Option<FixedPointConfig>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rng_seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub episodes: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub resolution: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tolerance: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub params: Option<PubGoodsParams>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mode: Option<MapModeArg>,
    pub enumerate_fixed_points: bool,
    pub version: &'static str,
}

impl RunConfig {
    fn new(command: &'static str) -> Self {
        RunConfig {
            command,
            input: None,
            output: None,
            solver: None,
            rng_seed: None,
            episodes: None,
            resolution: None,
            tolerance: None,
            params: None,
            mode: None,
            enumerate_fixed_points: false,
            version: env!("CARGO_PKG_VERSION"),
        }
    }

    fn to_json(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("config serializes")
    }
}

fn exit_code(err: &SpbeError) -> i32 {
    match err {
        SpbeError::NoFixedPointFound { .. }
        | SpbeError::RejectedPrescription { .. }
        | SpbeError::MissingContinuation(_) => EXIT_SOLVER_FAILURE,
        _ => EXIT_INPUT_ERROR,
    }
}

fn emit(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(p) => std::fs::write(p, text)?,
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout.write_all(text.as_bytes())?;
            if !text.ends_with('\n') {
                stdout.write_all(b"\n")?;
            }
        }
    }
    Ok(())
}

/// Parses `args` (including the program name) and runs the command.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_INPUT_ERROR } else { EXIT_OK };
        }
    };
    run(&cli)
}

pub fn run(cli: &Cli) -> i32 {
    let threads = cli.threads.unwrap_or(0);
    let pool = match rayon::ThreadPoolBuilder::new().num_threads(threads).build() {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: cannot start thread pool: {e}");
            return EXIT_INPUT_ERROR;
        }
    };
    pool.install(|| match dispatch(&cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    })
}

fn dispatch(command: &Command) -> Result<i32> {
    match command {
        Command::Solve {
            game,
            out,
            solver,
            enumerate_fixed_points,
        } => solve(game, out.as_deref(), solver, *enumerate_fixed_points),
        Command::Verify {
            equilibrium,
            tolerance,
            out,
        } => verify(equilibrium, *tolerance, out.as_deref()),
        Command::Simulate {
            equilibrium,
            episodes,
            seed,
            out,
        } => simulate_cmd(equilibrium, *episodes, *seed, out.as_deref()),
        Command::Example { params, solver, out } => example(params, solver, out.as_deref()),
        Command::Map {
            resolution,
            mode,
            params,
            out,
        } => map(*resolution, *mode, params, out.as_deref()),
    }
}

fn solve(path: &Path, out: Option<&Path>, args: &SolverArgs, enumerate: bool) -> Result<i32> {
    let game = Arc::new(read_game(path)?);
    let config = args.to_config()?;
    let mut run = RunConfig::new("solve");
    run.input = Some(path.to_path_buf());
    run.output = out.map(Path::to_path_buf);
    run.solver = Some(config.clone());
    run.enumerate_fixed_points = enumerate;

    let generator = EquilibriumGenerator::new(game, config)?;
    let eq = forward_construct(&generator);
    let alternatives = enumerate.then(|| {
        (0..eq.tree().node_count())
            .map(|n| match (&eq.status[n], eq.beliefs.get(n)) {
                (NodeStatus::Solved(_), Some(b)) => generator.enumerate_fixed_points(eq.tree().stage(n), b).ok(),
                _ => None,
            })
            .collect()
    });
    let doc = EquilibriumDocument::from_equilibrium(&eq, run.to_json(), alternatives);
    emit(out, &doc.to_json())?;
    if let Some((history, err)) = eq.first_error() {
        eprintln!("error: stage solve failed at public history {history:?}: {err}");
        return Ok(exit_code(err).max(EXIT_SOLVER_FAILURE));
    }
    Ok(EXIT_OK)
}

fn verify(path: &Path, tolerance: f64, out: Option<&Path>) -> Result<i32> {
    if !(tolerance > 0.0) {
        return Err(SpbeError::InvalidArgument("tolerance must be positive".into()));
    }
    let doc = EquilibriumDocument::read(path)?;
    let game = doc.validated_game()?;
    let (profile, beliefs, _) = doc.to_parts(&game)?;
    let mut run = RunConfig::new("verify");
    run.input = Some(path.to_path_buf());
    run.output = out.map(Path::to_path_buf);
    run.tolerance = Some(tolerance);
    let report = match check_sequential_rationality(&game, &profile, &beliefs, tolerance) {
        Ok(r) => r,
        Err(SpbeError::MissingNode(h)) => {
            eprintln!("FAIL: no strategy or belief at public history {h:?}");
            return Ok(EXIT_VERIFY_FAIL);
        }
        Err(e) => return Err(e),
    };
    println!("{report}");
    if let Some(p) = out {
        let body = json!({ "format": REPORT_FORMAT, "config": run.to_json(), "report": report });
        emit(Some(p), &serde_json::to_string_pretty(&body).expect("report serializes"))?;
    }
    Ok(if report.pass { EXIT_OK } else { EXIT_VERIFY_FAIL })
}

fn simulate_cmd(path: &Path, episodes: u64, seed: u64, out: Option<&Path>) -> Result<i32> {
    let doc = EquilibriumDocument::read(path)?;
    let game = doc.validated_game()?;
    let (profile, _, _) = doc.to_parts(&game)?;
    if let Some(h) = profile.first_missing() {
        return Err(SpbeError::MissingNode(h));
    }
    let mut run = RunConfig::new("simulate");
    run.input = Some(path.to_path_buf());
    run.output = out.map(Path::to_path_buf);
    run.episodes = Some(episodes);
    run.rng_seed = Some(seed);
    let result = simulate(&game, &profile, episodes, seed)?;
    let exact: Option<Vec<f64>> = (0..game.num_players())
        .map(|i| expected_total_reward(&game, &profile, i).ok())
        .collect();
    println!("{:>6} {:>14} {:>12} {:>14}", "player", "mean", "std. err.", "exact");
    for i in 0..game.num_players() {
        let ex = exact.as_ref().map_or("-".to_string(), |e| format!("{:.9}", e[i]));
        println!(
            "{:>6} {:>14.9} {:>12.3e} {:>14}",
            i, result.means[i], result.standard_errors[i], ex
        );
    }
    if let Some(p) = out {
        let body = json!({ "format": SIMULATION_FORMAT, "config": run.to_json(), "result": result, "exact": exact });
        emit(Some(p), &serde_json::to_string_pretty(&body).expect("result serializes"))?;
    }
    Ok(EXIT_OK)
}

fn example(params: &ParamArgs, solver: &SolverArgs, out: Option<&Path>) -> Result<i32> {
    let p = PubGoodsParams::new(params.q, params.xl, params.xh)?;
    let config = solver.to_config()?;
    let mut run = RunConfig::new("example");
    run.output = out.map(Path::to_path_buf);
    run.params = Some(p);
    run.solver = Some(config.clone());
    let report = reproduce_example(&p, &config)?;
    println!("{report}");
    if let Some(path) = out {
        let body = json!({ "format": EXAMPLE_FORMAT, "config": run.to_json(), "report": report });
        emit(Some(path), &serde_json::to_string_pretty(&body).expect("report serializes"))?;
    }
    Ok(if report.pass { EXIT_OK } else { EXIT_VERIFY_FAIL })
}

fn map(resolution: f64, mode: MapModeArg, params: &ParamArgs, out: Option<&Path>) -> Result<i32> {
    let p = PubGoodsParams::new(params.q, params.xl, params.xh)?;
    let mode = match mode {
        MapModeArg::Canonical => MapMode::Canonical,
        MapModeArg::AllSolutions => MapMode::AllSolutions,
    };
    emit(out, &emit_region_map(resolution, &p, mode)?)?;
    Ok(EXIT_OK)
}
