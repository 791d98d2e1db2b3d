use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use lqprox::io::bench::{run_bench, BenchBackend, BenchConfig, CSV_HEADER};
use lqprox::io::format::{
    read_problem, read_solution, write_problem, write_solution, ProblemFile, SolutionFile,
};
use lqprox::io::generate::{generate, GeneratorConfig, InitKind};
use lqprox::io::speedup::SpeedupModel;
use lqprox::parallel::default_legs;
use lqprox::{
    kkt_residual, make_partition, solve_exact, solve_serial, Backend, LqError, ParallelSolver,
    PartitionStrategy, ProxLoopSettings, ProximalState, StageKernel,
};

const DEFAULT_MU: f64 = 1e-6;

#[derive(Parser)]
#[command(name = "lqprox", version, about = "Equality-constrained LQ solver: serial, block-sparse and parallel Riccati backends")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve a problem file.
    Solve {
        problem: PathBuf,
        #[arg(long, value_enum, default_value_t = BackendArg::Blocksparse)]
        backend: BackendArg,
        /// Number of leg boundaries J (J + 1 legs); defaults to one leg per worker.
        #[arg(long)]
        legs: Option<usize>,
        #[arg(long, env = "LQPROX_WORKERS", default_value_t = 4)]
        workers: usize,
        /// Proximal parameter; overrides the value stored in the problem file.
        #[arg(long)]
        mu: Option<f64>,
        /// Iterate the multiplier estimates until the unregularized KKT conditions hold.
        #[arg(long)]
        exact: bool,
        #[arg(long, default_value_t = 50)]
        max_iters: usize,
        #[arg(long, default_value_t = 1e-8)]
        tol: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print the KKT residuals of a solution file.
    Check {
        problem: PathBuf,
        solution: PathBuf,
        /// Exit with status 1 when either residual exceeds this value.
        #[arg(long)]
        tol: Option<f64>,
    },
    /// Write a seeded random problem.
    Generate {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long = "N", default_value_t = 16)]
        horizon: usize,
        #[arg(long, default_value_t = 4)]
        nx: usize,
        #[arg(long, default_value_t = 2)]
        nu: usize,
        #[arg(long, default_value_t = 0)]
        nc: usize,
        /// Use E = −I + 0.1·G instead of E = −I.
        #[arg(long)]
        implicit_e: bool,
        /// Drop the path constraints on every third stage.
        #[arg(long)]
        mixed_nc: bool,
        #[arg(long)]
        terminal_nc: Option<usize>,
        #[arg(long, value_enum, default_value_t = InitArg::Fixed)]
        init: InitArg,
        /// Rows of the initial constraint (constrained mode); defaults to nx.
        #[arg(long)]
        ng: Option<usize>,
        /// Proximal parameter to store in the file.
        #[arg(long)]
        mu: Option<f64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Time the backends over a sweep of horizons and print CSV.
    Bench {
        #[arg(long, value_delimiter = ',', default_values_t = [16, 32, 64, 128, 256, 512, 1024, 2048])]
        horizons: Vec<usize>,
        #[arg(long, default_value_t = 37)]
        nx: usize,
        #[arg(long, default_value_t = 12)]
        nu: usize,
        #[arg(long, default_value_t = 0)]
        nc: usize,
        #[arg(long, value_enum, value_delimiter = ',', default_values_t = [BackendArg::Serial, BackendArg::Blocksparse, BackendArg::Parallel])]
        backends: Vec<BackendArg>,
        /// Leg boundary counts J for the parallel backend.
        #[arg(long, value_delimiter = ',', default_values_t = [3])]
        legs: Vec<usize>,
        #[arg(long, value_delimiter = ',', default_values_t = [4])]
        workers: Vec<usize>,
        #[arg(long, default_value_t = 40)]
        reps: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = DEFAULT_MU)]
        mu: f64,
        /// Write the CSV here instead of stdout.
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Print the operation-count speedup model as CSV.
    SpeedupModel {
        #[arg(long, default_value_t = 37)]
        nx: usize,
        #[arg(long, default_value_t = 12)]
        nu: usize,
        #[arg(long, default_value_t = 0)]
        nc: usize,
        #[arg(long = "N", default_value_t = 80)]
        horizon: usize,
        /// Inclusive range `a..b` or comma-separated list of J values.
        #[arg(long, default_value = "1..12", value_parser = parse_range)]
        legs: LegValues,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum BackendArg {
    Serial,
    Blocksparse,
    Parallel,
}

#[derive(Clone, Copy, ValueEnum)]
enum InitArg {
    Fixed,
    Constrained,
    Cyclic,
}

#[derive(Clone)]
struct LegValues(Vec<usize>);

fn parse_range(s: &str) -> Result<LegValues, String> {
    if let Some((a, b)) = s.split_once("..") {
        let a: usize = a.trim().parse().map_err(|e| format!("bad range start: {e}"))?;
        let b: usize = b.trim().parse().map_err(|e| format!("bad range end: {e}"))?;
        if a > b {
            return Err(format!("empty range {a}..{b}"));
        }
        Ok(LegValues((a..=b).collect()))
    } else {
        s.split(',')
            .map(|v| v.trim().parse().map_err(|e| format!("bad value `{v}`: {e}")))
            .collect::<Result<_, _>>()
            .map(LegValues)
    }
}

/// Usage and input problems exit with 2, solver failures with 1.
enum Failure {
    Usage(String),
    Solver(String),
}

impl From<LqError> for Failure {
    fn from(e: LqError) -> Self {
        Failure::Solver(e.to_string())
    }
}

fn read(path: &Path) -> Result<String, Failure> {
    fs::read_to_string(path).map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))
}

fn emit(out: Option<&Path>, text: &str) -> Result<(), Failure> {
    match out {
        Some(p) => fs::write(p, text).map_err(|e| Failure::Usage(format!("{}: {e}", p.display()))),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn load_problem(path: &Path) -> Result<ProblemFile, Failure> {
    read_problem(&read(path)?).map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))
}

#[allow(clippy::too_many_arguments)]
fn solve(
    path: &Path,
    backend: BackendArg,
    legs: Option<usize>,
    workers: usize,
    mu: Option<f64>,
    exact: bool,
    max_iters: usize,
    tol: f64,
    out: Option<&Path>,
) -> Result<(), Failure> {
    let file = load_problem(path)?;
    let problem = &file.problem;
    let mu = mu.or(file.mu).unwrap_or(DEFAULT_MU);
    let n = problem.horizon();
    let j = legs.unwrap_or_else(|| default_legs(n, workers));

    let solver = match backend {
        BackendArg::Parallel => {
            let part = make_partition(n, j, PartitionStrategy::Equal)?;
            Some(ParallelSolver::new(part, workers, StageKernel::BlockSparse)?)
        }
        _ => None,
    };
    let solution = if exact {
        let settings = ProxLoopSettings {
            mu,
            max_iters,
            tol_stationarity: tol,
            tol_feasibility: tol,
            backend: match backend {
                BackendArg::Serial => Backend::SerialDense,
                BackendArg::Blocksparse => Backend::SerialBlockSparse,
                BackendArg::Parallel => Backend::Parallel(j),
            },
        };
        let res = match &solver {
            Some(s) => s.install(|| solve_exact(problem, &settings)),
            None => solve_exact(problem, &settings),
        }?;
        log::info!("converged in {} iterations", res.iterations);
        res.solution
    } else {
        let prox = ProximalState::zeros(problem, mu)?;
        match (&solver, backend) {
            (Some(s), _) => s.solve(problem, &prox)?,
            (None, BackendArg::Serial) => solve_serial(problem, &prox, StageKernel::Dense)?,
            (None, _) => solve_serial(problem, &prox, StageKernel::BlockSparse)?,
        }
    };
    let text = write_solution(&SolutionFile { solution, mu, exact })
        .map_err(|e| Failure::Solver(e.to_string()))?;
    emit(out, &text)
}

fn check(problem: &Path, solution: &Path, tol: Option<f64>) -> Result<(), Failure> {
    let file = load_problem(problem)?;
    let sol = read_solution(&read(solution)?)
        .map_err(|e| Failure::Usage(format!("{}: {e}", solution.display())))?;
    let p = &file.problem;
    sol.solution
        .check_dims(p)
        .map_err(|e| Failure::Usage(format!("{}: {e}", solution.display())))?;
    let r = if sol.exact {
        kkt_residual(p, None, &sol.solution)?
    } else {
        let prox = ProximalState::zeros(p, sol.mu)?;
        kkt_residual(p, Some(&prox), &sol.solution)?
    };
    println!("stationarity {:e}", r.stationarity);
    println!("feasibility {:e}", r.feasibility);
    match tol {
        Some(t) if r.max() > t => Err(Failure::Solver(format!("residual {:e} above {t:e}", r.max()))),
        _ => Ok(()),
    }
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Solve { problem, backend, legs, workers, mu, exact, max_iters, tol, out } => {
            solve(&problem, backend, legs, workers, mu, exact, max_iters, tol, out.as_deref())
        }
        Command::Check { problem, solution, tol } => check(&problem, &solution, tol),
        Command::Generate {
            seed,
            horizon,
            nx,
            nu,
            nc,
            implicit_e,
            mixed_nc,
            terminal_nc,
            init,
            ng,
            mu,
            out,
        } => {
            if horizon == 0 || nx == 0 || nu == 0 {
                return Err(Failure::Usage("N, nx and nu must be positive".into()));
            }
            let mut cfg = GeneratorConfig::new(seed, horizon, nx, nu, nc);
            cfg.implicit_e = implicit_e;
            cfg.mixed_nc = mixed_nc;
            cfg.terminal_nc = terminal_nc;
            cfg.init = match init {
                InitArg::Fixed => InitKind::Fixed,
                InitArg::Constrained => InitKind::Constrained { ng: ng.unwrap_or(nx) },
                InitArg::Cyclic => InitKind::Cyclic,
            };
            let file = ProblemFile { problem: generate(&cfg), mu };
            let text = write_problem(&file).map_err(|e| Failure::Usage(e.to_string()))?;
            emit(out.as_deref(), &text)
        }
        Command::Bench { horizons, nx, nu, nc, backends, legs, workers, reps, seed, mu, csv } => {
            let cfg = BenchConfig {
                horizons,
                nx,
                nu,
                nc,
                backends: backends
                    .into_iter()
                    .map(|b| match b {
                        BackendArg::Serial => BenchBackend::Serial,
                        BackendArg::Blocksparse => BenchBackend::BlockSparse,
                        BackendArg::Parallel => BenchBackend::Parallel,
                    })
                    .collect(),
                legs,
                workers,
                repetitions: reps,
                seed,
                mu,
            };
            let mut text = format!("{CSV_HEADER}\n");
            let to_stdout = csv.is_none();
            if to_stdout {
                println!("{CSV_HEADER}");
            }
            run_bench(&cfg, |row| {
                if to_stdout {
                    println!("{}", row.csv());
                } else {
                    log::info!("{}", row.csv());
                }
                text.push_str(&row.csv());
                text.push('\n');
            })?;
            match csv {
                Some(p) => emit(Some(&p), &text),
                None => Ok(()),
            }
        }
        Command::SpeedupModel { nx, nu, nc, horizon, legs } => {
            let model = SpeedupModel::new(nx, nu, nc);
            println!("J,legs,t_serial,t_parallel,speedup");
            for j in legs.0 {
                let tp = if j == 0 { model.t_serial(horizon) } else { model.t_parallel(horizon, j) };
                println!("{j},{},{},{tp},{}", j + 1, model.t_serial(horizon), model.speedup(horizon, j));
            }
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Solver(msg)) => {
            eprintln!("solver error: {msg}");
            ExitCode::from(1)
        }
    }
}
