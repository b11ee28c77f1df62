//! Wall-clock benchmark of parallel versus serial evaluation.
//!
//! Every cell of the grid (mode × dimension × sleep) runs L-BFGS-B on the
//! sleep-controlled quadratic from `(0.1, ..., 0.1)`. One warm-up run per
//! cell is discarded, then each repetition is timed. The reported time per
//! iteration is the elapsed wall time divided by the number of evaluation
//! batches, one batch being one objective/gradient couple.

use std::str::FromStr;
use std::sync::Arc;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::engine::{Scheme, WorkerPool};
use crate::error::{Error, Result};
use crate::optim::{optimize_with_pool, Method, OptimOptions};
use crate::problems::{sleep_quadratic, Problem};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BenchMode {
    SerialAnalytic,
    SerialApprox,
    ParallelAnalytic,
    ParallelApprox,
    ParallelForward,
}

impl BenchMode {
    pub const ALL: [BenchMode; 5] = [
        BenchMode::SerialAnalytic,
        BenchMode::SerialApprox,
        BenchMode::ParallelAnalytic,
        BenchMode::ParallelApprox,
        BenchMode::ParallelForward,
    ];

    pub fn name(self) -> &'static str {
        match self {
            BenchMode::SerialAnalytic => "serial_analytic",
            BenchMode::SerialApprox => "serial_approx",
            BenchMode::ParallelAnalytic => "parallel_analytic",
            BenchMode::ParallelApprox => "parallel_approx",
            BenchMode::ParallelForward => "parallel_forward",
        }
    }

    pub fn is_parallel(self) -> bool {
        !matches!(self, BenchMode::SerialAnalytic | BenchMode::SerialApprox)
    }

    pub fn is_analytic(self) -> bool {
        matches!(
            self,
            BenchMode::SerialAnalytic | BenchMode::ParallelAnalytic
        )
    }

    pub fn scheme(self) -> Scheme {
        match self {
            BenchMode::ParallelForward => Scheme::Forward,
            _ => Scheme::Central,
        }
    }
}

impl FromStr for BenchMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        BenchMode::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown benchmark mode {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchConfig {
    pub dims: Vec<usize>,
    /// Seconds each objective and gradient call sleeps.
    pub sleeps: Vec<f64>,
    pub modes: Vec<BenchMode>,
    pub repetitions: usize,
    /// Iteration budget (`maxit`) per run.
    pub iterations: usize,
    /// Pool size for the parallel modes.
    pub workers: usize,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            dims: vec![1, 2, 3],
            sleeps: vec![0.0, 0.05, 0.2, 0.4, 0.6, 0.8, 1.0],
            modes: BenchMode::ALL.to_vec(),
            repetitions: 5,
            iterations: 5,
            workers: 7,
        }
    }
}

impl BenchConfig {
    pub fn validate(&self) -> Result<()> {
        if self.repetitions == 0 || self.iterations == 0 || self.workers == 0 {
            return Err(Error::Config(
                "repetitions, iterations and workers must be at least 1".into(),
            ));
        }
        if self.dims.contains(&0) {
            return Err(Error::Config("dimensions must be at least 1".into()));
        }
        if let Some(s) = self.sleeps.iter().find(|s| !(s.is_finite() && **s >= 0.0)) {
            return Err(Error::Config(format!("invalid sleep duration {s}")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub mode: BenchMode,
    pub p: usize,
    #[serde(rename = "sleep")]
    pub sleep_s: f64,
    pub rep: usize,
    #[serde(rename = "elapsed_per_iter")]
    pub elapsed_per_iter_s: f64,
    pub batches: u64,
    pub fn_calls: u64,
    /// Optimizer error for this run; the row then carries NaN timing.
    #[serde(skip)]
    pub error: Option<String>,
}

pub fn sleep_problem(p: usize, sleep_s: f64) -> Result<Problem> {
    if p == 0 {
        return Err(Error::Config("dimension must be at least 1".into()));
    }
    let sleep = Duration::try_from_secs_f64(sleep_s)
        .map_err(|_| Error::Config(format!("invalid sleep duration {sleep_s}")))?;
    Ok(sleep_quadratic(p, sleep))
}

/// Runs the whole grid in `modes → dims → sleeps → repetitions` order.
pub fn run_benchmark(config: &BenchConfig) -> Result<Vec<BenchRow>> {
    run_benchmark_with(config, |_| {})
}

/// Like [`run_benchmark`], calling `progress` after every measured row.
pub fn run_benchmark_with(
    config: &BenchConfig,
    mut progress: impl FnMut(&BenchRow),
) -> Result<Vec<BenchRow>> {
    config.validate()?;
    let mut rows = Vec::new();
    for &mode in &config.modes {
        let pool = Arc::new(if mode.is_parallel() {
            WorkerPool::new(config.workers)?
        } else {
            WorkerPool::sequential()
        });
        for &p in &config.dims {
            for &sleep in &config.sleeps {
                let problem = sleep_problem(p, sleep)?;
                let _ = run_once(&problem, mode, config.iterations, &pool);
                for rep in 1..=config.repetitions {
                    let row = measure(&problem, mode, sleep, rep, config.iterations, &pool);
                    progress(&row);
                    rows.push(row);
                }
            }
        }
    }
    Ok(rows)
}

fn run_once(
    problem: &Problem,
    mode: BenchMode,
    iterations: usize,
    pool: &Arc<WorkerPool>,
) -> Result<crate::optim::OptimResult> {
    let options = OptimOptions {
        method: Method::Lbfgsb,
        maxit: iterations,
        scheme: mode.scheme(),
        workers: pool.size(),
        ..Default::default()
    };
    let gradient = mode
        .is_analytic()
        .then(|| problem.gradient.clone())
        .flatten();
    let par0 = vec![0.1; problem.dim];
    optimize_with_pool(
        problem.objective.clone(),
        gradient,
        &par0,
        &options,
        pool.clone(),
    )
}

fn measure(
    problem: &Problem,
    mode: BenchMode,
    sleep_s: f64,
    rep: usize,
    iterations: usize,
    pool: &Arc<WorkerPool>,
) -> BenchRow {
    let started = Instant::now();
    let outcome = run_once(problem, mode, iterations, pool);
    let elapsed = started.elapsed().as_secs_f64();
    let mut row = BenchRow {
        mode,
        p: problem.dim,
        sleep_s,
        rep,
        elapsed_per_iter_s: f64::NAN,
        batches: 0,
        fn_calls: 0,
        error: None,
    };
    match outcome {
        Ok(r) => {
            row.batches = r.counts.batches;
            row.fn_calls = r.counts.fn_calls;
            row.elapsed_per_iter_s = elapsed / r.counts.batches.max(1) as f64;
        }
        Err(e) => row.error = Some(e.to_string()),
    }
    row
}

/// CSV with header `mode,p,sleep,rep,elapsed_per_iter,batches,fn_calls`.
pub fn emit_bench_csv(rows: &[BenchRow]) -> String {
    let mut w = csv::WriterBuilder::new()
        .has_headers(false)
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(Vec::new());
    w.write_record([
        "mode",
        "p",
        "sleep",
        "rep",
        "elapsed_per_iter",
        "batches",
        "fn_calls",
    ])
    .expect("write to memory");
    for row in rows {
        w.serialize(row).expect("write to memory");
    }
    String::from_utf8(w.into_inner().expect("flush to memory")).expect("utf-8 output")
}

pub fn parse_bench_csv(text: &str) -> Result<Vec<BenchRow>> {
    let mut r = csv::Reader::from_reader(text.as_bytes());
    r.deserialize()
        .enumerate()
        .map(|(i, rec)| {
            rec.map_err(|e| Error::Parse {
                line: i + 2,
                token: e.to_string(),
            })
        })
        .collect()
}

/// Mean `elapsed_per_iter` over the repetitions of one cell.
pub fn cell_mean(rows: &[BenchRow], mode: BenchMode, p: usize, sleep_s: f64) -> Option<f64> {
    let times: Vec<f64> = rows
        .iter()
        .filter(|r| r.mode == mode && r.p == p && r.sleep_s == sleep_s && r.error.is_none())
        .map(|r| r.elapsed_per_iter_s)
        .collect();
    (!times.is_empty()).then(|| times.iter().sum::<f64>() / times.len() as f64)
}
