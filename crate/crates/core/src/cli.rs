//! Command-line front end. [`run`] is the whole program minus process exit.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use clap::{Args, Parser, Subcommand};

use crate::bench::{self, BenchConfig, BenchMode};
use crate::engine::{Scheme, WorkerPool};
use crate::error::{Error, Result};
use crate::gradcheck::{self, GRADCHECK_EPS};
use crate::optim::{optimize, Method, OptimOptions, OptimResult};
use crate::problems;

#[derive(Debug, Parser)]
#[command(
    name = "paropt",
    version,
    about = "Parallel gradient-based optimization"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Minimize a registered problem.
    Optimize(OptimizeArgs),
    /// Time parallel against serial evaluation on the sleep problem.
    Bench(BenchArgs),
    /// Compare analytic gradients with central differences.
    Gradcheck(GradcheckArgs),
    /// List registered problems.
    Problems,
    /// Write a seeded normal sample, one value per line.
    GenData(GenDataArgs),
}

#[derive(Debug, Args)]
struct OptimizeArgs {
    #[arg(long)]
    problem: String,
    /// Dataset file for data-driven problems.
    #[arg(long)]
    data: Option<PathBuf>,
    /// Starting point, e.g. `1,1`. Its length sets the dimension.
    #[arg(long, allow_hyphen_values = true, value_delimiter = ',', value_parser = parse_real)]
    par0: Vec<f64>,
    #[arg(long, default_value = "lbfgsb", value_parser = parse_method)]
    method: Method,
    /// Lower bounds; `-inf` for none. Overrides the problem default.
    #[arg(long, allow_hyphen_values = true, value_delimiter = ',', value_parser = parse_real)]
    lower: Option<Vec<f64>>,
    #[arg(long, allow_hyphen_values = true, value_delimiter = ',', value_parser = parse_real)]
    upper: Option<Vec<f64>>,
    /// Finite-difference steps, one per parameter or a single shared value.
    #[arg(long, value_delimiter = ',', value_parser = parse_real)]
    eps: Option<Vec<f64>>,
    /// Difference scheme. Without it the analytic gradient is used when the
    /// problem has one.
    #[arg(long, value_parser = parse_scheme)]
    scheme: Option<Scheme>,
    #[arg(long, default_value_t = 100)]
    maxit: usize,
    #[arg(long, env = "PAROPT_WORKERS")]
    workers: Option<usize>,
    #[arg(long)]
    loginfo: bool,
    /// Write the iteration log as CSV to this file (implies --loginfo).
    #[arg(long)]
    log_out: Option<PathBuf>,
    #[arg(long)]
    json: bool,
    /// Seconds the `sleep` problem waits per call.
    #[arg(long, default_value_t = 0.0)]
    sleep: f64,
}

#[derive(Debug, Args)]
struct BenchArgs {
    #[arg(long, value_delimiter = ',')]
    dims: Option<Vec<usize>>,
    #[arg(long, value_delimiter = ',', value_parser = parse_real)]
    sleeps: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',', value_parser = parse_mode)]
    modes: Option<Vec<BenchMode>>,
    #[arg(long)]
    reps: Option<usize>,
    #[arg(long)]
    iters: Option<usize>,
    #[arg(long)]
    workers: Option<usize>,
    /// CSV destination; standard output when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct GradcheckArgs {
    #[arg(long)]
    problem: String,
    #[arg(long, default_value_t = 10)]
    points: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Dimension for problems without a fixed one.
    #[arg(long, default_value_t = 3)]
    dim: usize,
    /// Dataset for data-driven problems; a seeded sample is generated otherwise.
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long, default_value_t = GRADCHECK_EPS)]
    eps: f64,
}

#[derive(Debug, Args)]
struct GenDataArgs {
    #[arg(long, default_value_t = 1000)]
    n: usize,
    #[arg(long, default_value_t = 5.0, allow_hyphen_values = true)]
    mean: f64,
    #[arg(long, default_value_t = 2.0)]
    sd: f64,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

/// One element of a comma-separated vector flag; `inf` and `-inf` are
/// accepted, NaN is not.
pub fn parse_real(s: &str) -> std::result::Result<f64, String> {
    match s.trim().parse::<f64>() {
        Ok(v) if !v.is_nan() => Ok(v),
        _ => Err(format!("invalid number {s:?}")),
    }
}

fn parse_method(s: &str) -> std::result::Result<Method, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn parse_scheme(s: &str) -> std::result::Result<Scheme, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn parse_mode(s: &str) -> std::result::Result<BenchMode, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

enum Failure {
    Usage(String),
    Run(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Config(_)
            | Error::Dimension { .. }
            | Error::OutOfBounds { .. }
            | Error::DegenerateBounds { .. }
            | Error::Io { .. }
            | Error::Parse { .. } => Failure::Usage(e.to_string()),
            _ => Failure::Run(e.to_string()),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Run(e.to_string())
    }
}

/// Parses `args` (program name first) and runs the command. Returns the exit
/// code: 0 success, 1 optimization failure, 2 usage or configuration error.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let text = e.render().to_string();
            let sink: &mut dyn Write = if e.use_stderr() { err } else { out };
            let _ = sink.write_all(text.as_bytes());
            return e.exit_code();
        }
    };
    let outcome = match cli.command {
        Command::Optimize(a) => cmd_optimize(a, out),
        Command::Bench(a) => cmd_bench(a, out, err),
        Command::Gradcheck(a) => cmd_gradcheck(a, out),
        Command::Problems => cmd_problems(out),
        Command::GenData(a) => cmd_gen_data(a, out),
    };
    match outcome {
        Ok(code) => code,
        Err(Failure::Usage(msg)) => {
            let _ = writeln!(err, "error: {msg}");
            2
        }
        Err(Failure::Run(msg)) => {
            let _ = writeln!(err, "error: {msg}");
            1
        }
    }
}

fn default_workers() -> usize {
    std::thread::available_parallelism().map_or(1, |n| n.get())
}

fn load_data(path: Option<&Path>) -> Result<Option<Arc<Vec<f64>>>> {
    path.map(|p| problems::load_dataset(p).map(Arc::new))
        .transpose()
}

fn write_file(path: &Path, text: impl AsRef<[u8]>) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}

fn sleep_duration(s: f64) -> Result<Duration> {
    Duration::try_from_secs_f64(s).map_err(|_| Error::Config(format!("invalid sleep duration {s}")))
}

fn cmd_optimize(a: OptimizeArgs, out: &mut dyn Write) -> std::result::Result<i32, Failure> {
    let data = load_data(a.data.as_deref())?;
    let problem =
        problems::build_problem(&a.problem, a.par0.len(), data, sleep_duration(a.sleep)?)?;
    if a.par0.len() != problem.dim {
        return Err(Error::Dimension {
            expected: problem.dim,
            got: a.par0.len(),
        }
        .into());
    }
    let dim = problem.dim;
    // problem default bounds only apply to the bounded method
    let default_bounds = a.method == Method::Lbfgsb;
    let lower = a.lower.or(problem.lower.clone().filter(|_| default_bounds));
    let upper = a.upper.or(problem.upper.clone().filter(|_| default_bounds));
    let eps = match a.eps {
        Some(e) if e.len() == 1 => Some(vec![e[0]; dim]),
        e => e,
    };
    let gradient = match a.scheme {
        None => problem.gradient.clone(),
        Some(_) => None,
    };
    let loginfo = a.loginfo || a.log_out.is_some();
    let options = OptimOptions {
        method: a.method,
        lower,
        upper,
        maxit: a.maxit,
        eps,
        scheme: a.scheme.unwrap_or(Scheme::Central),
        workers: a.workers.unwrap_or_else(default_workers),
        loginfo,
        ..Default::default()
    };
    let result = optimize(problem.objective.clone(), gradient, &a.par0, &options)?;

    if let (Some(path), Some(log)) = (&a.log_out, &result.log) {
        write_file(path, log.to_csv())?;
    }
    if a.json {
        writeln!(out, "{}", result_json(&result))?;
    } else {
        out.write_all(result_report(&result).as_bytes())?;
        match (&a.log_out, &result.log) {
            (Some(path), _) => writeln!(out, "log: {}", path.display())?,
            (None, Some(log)) => write!(out, "\n{}", log.to_csv())?,
            _ => {}
        }
    }
    Ok(if result.convergence.code() == 0 { 0 } else { 1 })
}

fn join(v: &[f64]) -> String {
    v.iter()
        .map(|x| x.to_string())
        .collect::<Vec<_>>()
        .join(", ")
}

/// Human-readable result block, one `key: value` per line.
pub fn result_report(r: &OptimResult) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "par: {}", join(&r.par));
    let _ = writeln!(s, "value: {}", r.value);
    let _ = writeln!(s, "convergence: {}", r.convergence.code());
    let _ = writeln!(s, "message: {}", r.message);
    let _ = writeln!(s, "iterations: {}", r.iterations);
    let _ = writeln!(s, "fn_calls: {}", r.counts.fn_calls);
    let _ = writeln!(s, "gr_calls: {}", r.counts.gr_calls);
    let _ = writeln!(s, "batches: {}", r.counts.batches);
    let _ = writeln!(s, "elapsed_s: {:.6}", r.elapsed.as_secs_f64());
    s
}

/// Flat JSON object with the same fields as [`result_report`].
pub fn result_json(r: &OptimResult) -> serde_json::Value {
    // serde_json writes non-finite floats as null
    serde_json::json!({
        "par": r.par,
        "value": r.value,
        "convergence": r.convergence.code(),
        "message": r.message,
        "iterations": r.iterations,
        "fn_calls": r.counts.fn_calls,
        "gr_calls": r.counts.gr_calls,
        "batches": r.counts.batches,
        "elapsed_s": r.elapsed.as_secs_f64(),
    })
}

fn cmd_bench(
    a: BenchArgs,
    out: &mut dyn Write,
    err: &mut dyn Write,
) -> std::result::Result<i32, Failure> {
    let d = BenchConfig::default();
    let config = BenchConfig {
        dims: a.dims.unwrap_or(d.dims),
        sleeps: a.sleeps.unwrap_or(d.sleeps),
        modes: a.modes.unwrap_or(d.modes),
        repetitions: a.reps.unwrap_or(d.repetitions),
        iterations: a.iters.unwrap_or(d.iterations),
        workers: a.workers.unwrap_or(d.workers),
    };
    let rows = bench::run_benchmark_with(&config, |row| {
        let _ = match &row.error {
            None => writeln!(
                err,
                "{} p={} sleep={} rep={}: {:.4} s/iter",
                row.mode.name(),
                row.p,
                row.sleep_s,
                row.rep,
                row.elapsed_per_iter_s
            ),
            Some(e) => writeln!(
                err,
                "{} p={} sleep={} rep={}: {e}",
                row.mode.name(),
                row.p,
                row.sleep_s,
                row.rep
            ),
        };
    })?;
    let csv = bench::emit_bench_csv(&rows);
    match &a.out {
        Some(path) => write_file(path, csv)?,
        None => out.write_all(csv.as_bytes())?,
    }
    Ok(if rows.iter().any(|r| r.error.is_some()) {
        1
    } else {
        0
    })
}

fn cmd_gradcheck(a: GradcheckArgs, out: &mut dyn Write) -> std::result::Result<i32, Failure> {
    let info = problems::lookup(&a.problem)?;
    let data = match load_data(a.data.as_deref())? {
        None if info.needs_data => Some(Arc::new(problems::gen_normal_dataset(
            1000, 5.0, 2.0, a.seed,
        )?)),
        d => d,
    };
    let problem = problems::build_problem(&a.problem, a.dim, data, Duration::ZERO)?;
    let report =
        gradcheck::gradcheck(&problem, a.points, a.seed, a.eps, &WorkerPool::sequential())?;
    let mut failed = 0;
    for (i, pt) in report.iter().enumerate() {
        let status = if pt.passed() { "ok" } else { "FAIL" };
        failed += usize::from(!pt.passed());
        writeln!(
            out,
            "{status} point {}: max_abs_diff={:e} tolerance={:e} par=[{}]",
            i + 1,
            pt.max_abs_diff,
            pt.tolerance,
            join(&pt.par)
        )?;
    }
    writeln!(
        out,
        "{}: {}/{} points agree",
        problem.name,
        report.len() - failed,
        report.len()
    )?;
    Ok(if failed == 0 { 0 } else { 1 })
}

fn cmd_problems(out: &mut dyn Write) -> std::result::Result<i32, Failure> {
    for p in problems::REGISTRY {
        let dim = match p.fixed_dim {
            Some(d) => format!("p={d}"),
            None => format!("p>={}", p.min_dim),
        };
        writeln!(out, "{:<14}{:<7}{}", p.name, dim, p.description)?;
    }
    Ok(0)
}

fn cmd_gen_data(a: GenDataArgs, out: &mut dyn Write) -> std::result::Result<i32, Failure> {
    let data = problems::gen_normal_dataset(a.n, a.mean, a.sd, a.seed)?;
    let mut text = String::new();
    for v in &data {
        let _ = writeln!(text, "{v}");
    }
    match &a.out {
        Some(path) => write_file(path, text)?,
        None => out.write_all(text.as_bytes())?,
    }
    Ok(0)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn call(args: &[&str]) -> (i32, String, String) {
        let (mut out, mut err) = (Vec::new(), Vec::new());
        let code = run(
            std::iter::once("paropt").chain(args.iter().copied()),
            &mut out,
            &mut err,
        );
        (
            code,
            String::from_utf8(out).unwrap(),
            String::from_utf8(err).unwrap(),
        )
    }

    #[test]
    fn vector_grammar() {
        assert_eq!(parse_real("2.5"), Ok(2.5));
        assert_eq!(parse_real("-inf"), Ok(f64::NEG_INFINITY));
        assert_eq!(parse_real(" inf"), Ok(f64::INFINITY));
        assert!(parse_real("nan").is_err());
        assert!(parse_real("").is_err());
        assert!(parse_real("x").is_err());
        let (code, out, _) = call(&[
            "optimize",
            "--problem",
            "quadratic",
            "--par0",
            "-1,0.5",
            "--lower",
            "-inf,-inf",
            "--upper",
            "inf,1",
        ]);
        assert_eq!(code, 0, "{out}");
        assert!(call(&["optimize", "--problem", "quadratic", "--par0", "1,,2"]).0 == 2);
    }

    #[test]
    fn problems_lists_registry() {
        let (code, out, _) = call(&["problems"]);
        assert_eq!(code, 0);
        for name in ["quadratic", "rosenbrock", "normal_negll", "sleep"] {
            assert!(out.contains(name));
        }
    }

    #[test]
    fn quadratic_report() {
        let (code, out, _) = call(&["optimize", "--problem", "quadratic", "--par0", "1,1"]);
        assert_eq!(code, 0, "{out}");
        assert!(out.contains("convergence: 0"));
        let (code, out, _) = call(&[
            "optimize",
            "--problem",
            "rosenbrock",
            "--par0",
            "-1.2,1",
            "--maxit",
            "2",
        ]);
        assert_eq!(code, 1);
        assert!(out.contains("convergence: 1"));
    }

    #[test]
    fn usage_errors_exit_two() {
        assert_eq!(call(&["frobnicate"]).0, 2);
        assert_eq!(call(&["optimize", "--problem", "quadratic"]).0, 2);
        assert_eq!(call(&["optimize", "--problem", "nope", "--par0", "1"]).0, 2);
        assert_eq!(
            call(&["optimize", "--problem", "quadratic", "--par0", "1,nan"]).0,
            2
        );
        assert_eq!(
            call(&["optimize", "--problem", "normal_negll", "--par0", "1,1"]).0,
            2
        );
        let (code, out, _) = call(&["--help"]);
        assert_eq!(code, 0);
        assert!(out.contains("optimize"));
    }
}
