//! Timing harness: one CSV row per (backend, N, J, workers) configuration.

use std::fmt::Write as _;
use std::time::Instant;

use crate::error::Result;
use crate::io::generate::{generate, GeneratorConfig};
use crate::io::speedup::SpeedupModel;
use crate::parallel::{make_partition, ParallelSolver, PartitionStrategy};
use crate::problem::{kkt_residual, KktResidual, LqProblem, ProximalState, Solution};
use crate::riccati::{solve_serial, StageKernel};

pub const CSV_HEADER: &str =
    "backend,N,nx,nu,nc,J,workers,mean_ms,std_ms,stat_resid,feas_resid,theory_speedup";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BenchBackend {
    /// Serial recursion with the dense stage kernel.
    Serial,
    /// Serial recursion with the block-sparse stage kernel.
    BlockSparse,
    Parallel,
}

impl BenchBackend {
    pub fn name(&self) -> &'static str {
        match self {
            BenchBackend::Serial => "serial",
            BenchBackend::BlockSparse => "blocksparse",
            BenchBackend::Parallel => "parallel",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchConfig {
    pub horizons: Vec<usize>,
    pub nx: usize,
    pub nu: usize,
    pub nc: usize,
    pub backends: Vec<BenchBackend>,
    pub legs: Vec<usize>,
    pub workers: Vec<usize>,
    pub repetitions: usize,
    pub seed: u64,
    pub mu: f64,
}

impl Default for BenchConfig {
    fn default() -> Self {
        BenchConfig {
            horizons: (4..=11).map(|k| 1usize << k).collect(),
            nx: 37,
            nu: 12,
            nc: 0,
            backends: vec![BenchBackend::Serial, BenchBackend::BlockSparse, BenchBackend::Parallel],
            legs: vec![3],
            workers: vec![4],
            repetitions: 40,
            seed: 0,
            mu: 1e-6,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchRow {
    pub backend: BenchBackend,
    pub horizon: usize,
    pub nx: usize,
    pub nu: usize,
    pub nc: usize,
    pub legs: usize,
    pub workers: usize,
    pub mean_ms: f64,
    pub std_ms: f64,
    pub residual: KktResidual,
    pub theory_speedup: f64,
}

impl BenchRow {
    pub fn csv(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{:.6},{:.6},{:.3e},{:.3e},{:.6}",
            self.backend.name(),
            self.horizon,
            self.nx,
            self.nu,
            self.nc,
            self.legs,
            self.workers,
            self.mean_ms,
            self.std_ms,
            self.residual.stationarity,
            self.residual.feasibility,
            self.theory_speedup
        )
    }
}

/// Mean and (sample) standard deviation in milliseconds of `reps` runs after one
/// untimed warm-up run. Returns the warm-up result.
pub fn time_runs<F>(reps: usize, mut run: F) -> Result<(Solution, f64, f64)>
where
    F: FnMut() -> Result<Solution>,
{
    let sol = run()?;
    let mut ms = Vec::with_capacity(reps);
    for _ in 0..reps {
        let t0 = Instant::now();
        std::hint::black_box(run()?);
        ms.push(t0.elapsed().as_secs_f64() * 1e3);
    }
    let n = ms.len().max(1) as f64;
    let mean = ms.iter().sum::<f64>() / n;
    let var = if ms.len() > 1 {
        ms.iter().map(|t| (t - mean).powi(2)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    Ok((sol, mean, var.sqrt()))
}

fn row_for(
    cfg: &BenchConfig,
    problem: &LqProblem,
    prox: &ProximalState,
    backend: BenchBackend,
    legs: usize,
    workers: usize,
) -> Result<BenchRow> {
    let n = problem.horizon();
    let (sol, mean, std) = match backend {
        BenchBackend::Serial => time_runs(cfg.repetitions, || solve_serial(problem, prox, StageKernel::Dense))?,
        BenchBackend::BlockSparse => {
            time_runs(cfg.repetitions, || solve_serial(problem, prox, StageKernel::BlockSparse))?
        }
        BenchBackend::Parallel => {
            let part = make_partition(n, legs, PartitionStrategy::Equal)?;
            let solver = ParallelSolver::new(part, workers, StageKernel::BlockSparse)?;
            time_runs(cfg.repetitions, || solver.solve(problem, prox))?
        }
    };
    let model = SpeedupModel::new(cfg.nx, cfg.nu, cfg.nc);
    Ok(BenchRow {
        backend,
        horizon: n,
        nx: cfg.nx,
        nu: cfg.nu,
        nc: cfg.nc,
        legs,
        workers,
        mean_ms: mean,
        std_ms: std,
        residual: kkt_residual(problem, Some(prox), &sol)?,
        theory_speedup: model.speedup(n, legs),
    })
}

/// Runs every configuration; parallel rows with `J ≥ N` are skipped.
pub fn run_bench(cfg: &BenchConfig, mut on_row: impl FnMut(&BenchRow)) -> Result<Vec<BenchRow>> {
    let mut rows = Vec::new();
    for &n in &cfg.horizons {
        let problem = generate(&GeneratorConfig::new(cfg.seed, n, cfg.nx, cfg.nu, cfg.nc));
        let prox = ProximalState::zeros(&problem, cfg.mu)?;
        for &b in &cfg.backends {
            let mut push = |row: BenchRow| {
                on_row(&row);
                rows.push(row);
            };
            match b {
                BenchBackend::Parallel => {
                    for &j in cfg.legs.iter().filter(|&&j| j >= 1 && j < n) {
                        for &w in &cfg.workers {
                            push(row_for(cfg, &problem, &prox, b, j, w)?);
                        }
                    }
                }
                _ => push(row_for(cfg, &problem, &prox, b, 0, 1)?),
            }
        }
    }
    Ok(rows)
}

pub fn to_csv(rows: &[BenchRow]) -> String {
    let mut s = String::from(CSV_HEADER);
    s.push('\n');
    for r in rows {
        let _ = writeln!(s, "{}", r.csv());
    }
    s
}
