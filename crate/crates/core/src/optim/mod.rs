//! Gradient-based minimizers driving a [`CoupledEvaluator`].
//!
//! Three methods share one driver loop:
//!
//! * `Lbfgsb`: projected L-BFGS. Coordinates pinned at a bound by the
//!   gradient are held fixed, the two-loop recursion runs on the rest and the
//!   line search never leaves the box.
//! * `Bfgs`: dense inverse-Hessian BFGS, unconstrained.
//! * `Cg`: Fletcher–Reeves conjugate gradients with a restart every `p`
//!   iterations.
//!
//! The optimizer itself is single-threaded; parallelism lives entirely in
//! the evaluator, so results do not depend on the worker count.

mod cg;
mod lbfgs;
mod linesearch;

use std::str::FromStr;
use std::sync::Arc;
use std::time::{Duration, Instant};

pub use cg::cg_direction;
pub use lbfgs::{lbfgs_direction, LbfgsHistory};
pub use linesearch::{
    line_search, max_feasible_step, LineSearchControl, LineSearchOutcome, SearchResult,
};

use crate::bounds::Bounds;
use crate::engine::{Scheme, WorkerPool};
use crate::error::{Error, Result};
use crate::evaluator::{
    CoupledEvaluator, EvalCounts, EvalRecord, GradientFn, GradientMode, Objective, DEFAULT_EPS,
};
use crate::log::IterationLog;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Method {
    #[default]
    Lbfgsb,
    Bfgs,
    Cg,
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "lbfgsb" | "l-bfgs-b" => Ok(Method::Lbfgsb),
            "bfgs" => Ok(Method::Bfgs),
            "cg" => Ok(Method::Cg),
            other => Err(Error::Config(format!("unknown method {other:?}"))),
        }
    }
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Lbfgsb => "L-BFGS-B",
            Method::Bfgs => "BFGS",
            Method::Cg => "CG",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimOptions {
    pub method: Method,
    pub lower: Option<Vec<f64>>,
    pub upper: Option<Vec<f64>>,
    pub maxit: usize,
    /// Number of correction pairs kept by L-BFGS-B.
    pub memory: usize,
    /// L-BFGS-B stops when the relative reduction falls below
    /// `factr * f64::EPSILON`.
    pub factr: f64,
    /// Sup-norm tolerance on the projected gradient; 0 only stops on an
    /// exactly stationary point.
    pub pgtol: f64,
    /// Relative reduction tolerance for BFGS and CG.
    pub reltol: f64,
    /// Finite-difference steps, `DEFAULT_EPS` per coordinate when absent.
    pub eps: Option<Vec<f64>>,
    pub scheme: Scheme,
    pub workers: usize,
    pub loginfo: bool,
}

impl Default for OptimOptions {
    fn default() -> Self {
        Self {
            method: Method::Lbfgsb,
            lower: None,
            upper: None,
            maxit: 100,
            memory: 5,
            factr: 1e7,
            pgtol: 0.0,
            reltol: f64::EPSILON.sqrt(),
            eps: None,
            scheme: Scheme::Central,
            workers: 1,
            loginfo: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Convergence {
    Converged,
    MaxitReached,
    LineSearchFailure,
    Degenerate,
}

impl Convergence {
    /// Numeric code in the usual `optim` convention.
    pub fn code(self) -> i32 {
        match self {
            Convergence::Converged => 0,
            Convergence::MaxitReached => 1,
            Convergence::Degenerate => 10,
            Convergence::LineSearchFailure => 52,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimResult {
    pub par: Vec<f64>,
    pub value: f64,
    pub counts: EvalCounts,
    pub convergence: Convergence,
    pub message: String,
    /// Accepted iterations.
    pub iterations: usize,
    /// Line-search trial points over the whole run.
    pub line_search_trials: usize,
    pub log: Option<IterationLog>,
    pub elapsed: Duration,
}

/// Minimizes `objective` from `par0`, using `gradient` when given and finite
/// differences otherwise. Spawns a pool of `options.workers` slots.
pub fn optimize(
    objective: Objective,
    gradient: Option<GradientFn>,
    par0: &[f64],
    options: &OptimOptions,
) -> Result<OptimResult> {
    let pool = Arc::new(WorkerPool::new(options.workers)?);
    optimize_with_pool(objective, gradient, par0, options, pool)
}

/// Like [`optimize`] but evaluates on an existing pool; `options.workers` is
/// ignored.
pub fn optimize_with_pool(
    objective: Objective,
    gradient: Option<GradientFn>,
    par0: &[f64],
    options: &OptimOptions,
    pool: Arc<WorkerPool>,
) -> Result<OptimResult> {
    let started = Instant::now();
    let dim = par0.len();
    validate(par0, options)?;
    let bounds = Bounds::from_parts(dim, options.lower.clone(), options.upper.clone())?;
    if let Some(b) = &bounds {
        if !b.contains(par0) {
            return Err(Error::OutOfBounds {
                point: par0.to_vec(),
            });
        }
    }
    let mode = match gradient {
        Some(g) => GradientMode::Analytic(g),
        None => match options.scheme {
            Scheme::Central => GradientMode::Central,
            Scheme::Forward => GradientMode::Forward,
        },
    };
    let eps = options
        .eps
        .clone()
        .unwrap_or_else(|| vec![DEFAULT_EPS; dim]);
    let mut ev = CoupledEvaluator::new(objective, mode, bounds.clone(), eps, pool)?;

    let mut current = ev.eval(par0)?.clone();
    let mut log = options.loginfo.then(|| IterationLog::new(dim));
    if let Some(log) = &mut log {
        log.append(&current.par, current.value, &current.gradient)?;
    }

    let mut strategy = Strategy::new(options.method, dim, options.memory);
    let mut iterations = 0usize;
    let mut trials_total = 0usize;

    let (convergence, message) = loop {
        let pg = match &bounds {
            Some(b) => b.projected_gradient(&current.par, &current.gradient),
            None => current.gradient.clone(),
        };
        if sup_norm(&pg) <= options.pgtol {
            break (
                Convergence::Converged,
                "projected gradient norm below pgtol".to_string(),
            );
        }
        if iterations >= options.maxit {
            break (
                Convergence::MaxitReached,
                format!("reached maxit = {}", options.maxit),
            );
        }

        let active = match &bounds {
            Some(b) => b.active_set(&current.par, &current.gradient),
            None => vec![false; dim],
        };
        let mut d = strategy.direction(&current.gradient, &active);
        block_outward(&mut d, &current.par, bounds.as_ref());
        if !(dot(&d, &current.gradient) < 0.0) {
            // quasi-Newton model lost descent; restart from steepest descent
            strategy.reset();
            d = strategy.direction(&current.gradient, &active);
            block_outward(&mut d, &current.par, bounds.as_ref());
            if !(dot(&d, &current.gradient) < 0.0) {
                break (
                    Convergence::Degenerate,
                    "no descent direction within the bounds".to_string(),
                );
            }
        }

        let control = strategy.control(&d, &current.gradient);
        let outcome = match line_search(&mut ev, &current, &d, bounds.as_ref(), &control)? {
            SearchResult::Accepted(out) => out,
            SearchResult::Failed { trials, reason } => {
                trials_total += trials;
                if !strategy.fresh() {
                    // stale curvature information; retry once from steepest descent
                    strategy.reset();
                    continue;
                }
                match options.method {
                    Method::Lbfgsb => {
                        break (
                            Convergence::LineSearchFailure,
                            format!("line search failed: {reason}"),
                        )
                    }
                    Method::Bfgs | Method::Cg => {
                        break (
                            Convergence::Converged,
                            "no further progress along steepest descent".to_string(),
                        )
                    }
                }
            }
        };
        trials_total += outcome.trials;
        iterations += 1;

        let next = outcome.record;
        let s: Vec<f64> = next
            .par
            .iter()
            .zip(&current.par)
            .map(|(a, b)| a - b)
            .collect();
        let y: Vec<f64> = next
            .gradient
            .iter()
            .zip(&current.gradient)
            .map(|(a, b)| a - b)
            .collect();
        strategy.update(s, y, &d, &current.gradient, outcome.step);

        let f_old = current.value;
        current = next;
        if let Some(log) = &mut log {
            log.append(&current.par, current.value, &current.gradient)?;
        }

        let f_new = current.value;
        let small_reduction = match options.method {
            Method::Lbfgsb => {
                (f_old - f_new) / f_old.abs().max(f_new.abs()).max(1.0)
                    <= options.factr * f64::EPSILON
            }
            Method::Bfgs | Method::Cg => {
                (f_old - f_new).abs() <= options.reltol * (f_old.abs() + options.reltol)
            }
        };
        if small_reduction {
            break (
                Convergence::Converged,
                "relative reduction of the objective below tolerance".to_string(),
            );
        }
    };

    Ok(finish(
        current,
        &ev,
        convergence,
        message,
        iterations,
        trials_total,
        log,
        started,
    ))
}

#[allow(clippy::too_many_arguments)]
fn finish(
    record: EvalRecord,
    ev: &CoupledEvaluator,
    convergence: Convergence,
    message: String,
    iterations: usize,
    line_search_trials: usize,
    log: Option<IterationLog>,
    started: Instant,
) -> OptimResult {
    OptimResult {
        par: record.par,
        value: record.value,
        counts: ev.counts(),
        convergence,
        message,
        iterations,
        line_search_trials,
        log,
        elapsed: started.elapsed(),
    }
}

fn validate(par0: &[f64], o: &OptimOptions) -> Result<()> {
    if par0.is_empty() {
        return Err(Error::Config("at least one parameter is required".into()));
    }
    if par0.iter().any(|v| !v.is_finite()) {
        return Err(Error::Config("initial parameters must be finite".into()));
    }
    if o.maxit == 0 {
        return Err(Error::Config("maxit must be at least 1".into()));
    }
    if o.memory == 0 {
        return Err(Error::Config("memory must be at least 1".into()));
    }
    for (name, v) in [("factr", o.factr), ("pgtol", o.pgtol), ("reltol", o.reltol)] {
        if !(v >= 0.0) {
            return Err(Error::Config(format!(
                "{name} must be non-negative, got {v}"
            )));
        }
    }
    if let Some(eps) = &o.eps {
        if eps.len() != par0.len() {
            return Err(Error::Dimension {
                expected: par0.len(),
                got: eps.len(),
            });
        }
    }
    if o.method != Method::Lbfgsb && (o.lower.is_some() || o.upper.is_some()) {
        return Err(Error::Config(format!(
            "bounds require L-BFGS-B, not {}",
            o.method.name()
        )));
    }
    Ok(())
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn sup_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

fn norm2(v: &[f64]) -> f64 {
    dot(v, v).sqrt()
}

/// Drops components that would push a coordinate already on its bound out
/// of the box.
fn block_outward(d: &mut [f64], x: &[f64], bounds: Option<&Bounds>) {
    let Some(b) = bounds else { return };
    for i in 0..d.len() {
        if (x[i] <= b.lower()[i] && d[i] < 0.0) || (x[i] >= b.upper()[i] && d[i] > 0.0) {
            d[i] = 0.0;
        }
    }
}

enum Strategy {
    Lbfgs(LbfgsHistory),
    Bfgs {
        dim: usize,
        /// Row-major inverse Hessian approximation; `None` until the first
        /// update so the initial scaling can be chosen from real curvature.
        inv_hessian: Option<Vec<f64>>,
    },
    Cg {
        dim: usize,
        since_restart: usize,
        previous: Option<(Vec<f64>, Vec<f64>)>,
        last_slope_step: Option<f64>,
    },
}

impl Strategy {
    fn new(method: Method, dim: usize, memory: usize) -> Self {
        match method {
            Method::Lbfgsb => Strategy::Lbfgs(LbfgsHistory::new(memory)),
            Method::Bfgs => Strategy::Bfgs {
                dim,
                inv_hessian: None,
            },
            Method::Cg => Strategy::Cg {
                dim,
                since_restart: 0,
                previous: None,
                last_slope_step: None,
            },
        }
    }

    fn reset(&mut self) {
        match self {
            Strategy::Lbfgs(h) => h.clear(),
            Strategy::Bfgs { inv_hessian, .. } => *inv_hessian = None,
            Strategy::Cg {
                since_restart,
                previous,
                last_slope_step,
                ..
            } => {
                *since_restart = 0;
                *previous = None;
                *last_slope_step = None;
            }
        }
    }

    fn direction(&mut self, g: &[f64], active: &[bool]) -> Vec<f64> {
        match self {
            Strategy::Lbfgs(h) => h.direction_on(g, active),
            Strategy::Bfgs { dim, inv_hessian } => match inv_hessian {
                None => g.iter().map(|v| -v).collect(),
                Some(h) => (0..*dim)
                    .map(|i| -dot(&h[i * *dim..(i + 1) * *dim], g))
                    .collect(),
            },
            Strategy::Cg {
                dim,
                since_restart,
                previous,
                last_slope_step,
            } => {
                if *since_restart >= *dim {
                    *since_restart = 0;
                    *previous = None;
                    *last_slope_step = None;
                }
                let prev = previous
                    .as_ref()
                    .map(|(gp, dp)| (gp.as_slice(), dp.as_slice()));
                let d = cg_direction(g, prev);
                if previous.is_some() && dot(&d, g) >= 0.0 {
                    *since_restart = 0;
                    *previous = None;
                    *last_slope_step = None;
                    return g.iter().map(|v| -v).collect();
                }
                d
            }
        }
    }

    fn fresh(&self) -> bool {
        match self {
            Strategy::Lbfgs(h) => h.is_empty(),
            Strategy::Bfgs { inv_hessian, .. } => inv_hessian.is_none(),
            Strategy::Cg { previous, .. } => previous.is_none(),
        }
    }

    /// Line-search settings for the next step along `d`. A fresh model takes
    /// a first step of unit length.
    fn control(&self, d: &[f64], g: &[f64]) -> LineSearchControl {
        let unit_length = 1.0 / norm2(d);
        match self {
            Strategy::Cg {
                last_slope_step, ..
            } => {
                let step = match last_slope_step {
                    Some(prev) if !self.fresh() => prev / dot(g, d),
                    _ => unit_length,
                };
                LineSearchControl::conjugate_gradient(step)
            }
            _ if self.fresh() => LineSearchControl::quasi_newton(unit_length),
            _ => LineSearchControl::quasi_newton(1.0),
        }
    }

    fn update(&mut self, s: Vec<f64>, y: Vec<f64>, d: &[f64], g_old: &[f64], step: f64) {
        match self {
            Strategy::Lbfgs(h) => {
                h.push(s, y);
            }
            Strategy::Bfgs { dim, inv_hessian } => {
                let sy = dot(&s, &y);
                let yy = dot(&y, &y);
                if !(sy > f64::EPSILON * yy) || !sy.is_finite() {
                    return;
                }
                let n = *dim;
                let h = inv_hessian.get_or_insert_with(|| {
                    let gamma = sy / yy;
                    let mut h = vec![0.0; n * n];
                    for i in 0..n {
                        h[i * n + i] = gamma;
                    }
                    h
                });
                bfgs_update(h, n, &s, &y, sy);
            }
            Strategy::Cg {
                since_restart,
                previous,
                last_slope_step,
                ..
            } => {
                *since_restart += 1;
                // step * g'd predicts the next initial step
                *last_slope_step = Some(step * dot(g_old, d));
                *previous = Some((g_old.to_vec(), d.to_vec()));
                let _ = (s, y);
            }
        }
    }
}

/// `H <- (I - rho s y') H (I - rho y s') + rho s s'`.
fn bfgs_update(h: &mut [f64], n: usize, s: &[f64], y: &[f64], sy: f64) {
    let rho = 1.0 / sy;
    let hy: Vec<f64> = (0..n).map(|i| dot(&h[i * n..(i + 1) * n], y)).collect();
    let yhy = dot(y, &hy);
    let coef = (1.0 + rho * yhy) * rho;
    for i in 0..n {
        for j in 0..n {
            h[i * n + j] += coef * s[i] * s[j] - rho * (hy[i] * s[j] + s[i] * hy[j]);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sum_sq() -> (Objective, GradientFn) {
        (
            Arc::new(|x: &[f64]| x.iter().map(|v| v * v).sum()),
            Arc::new(|x: &[f64]| x.iter().map(|v| 2.0 * v).collect()),
        )
    }

    #[test]
    fn lbfgsb_minimizes_sum_of_squares() {
        let (f, g) = sum_sq();
        let r = optimize(f, Some(g), &[1.0, 1.0], &OptimOptions::default()).unwrap();
        assert!(r.par.iter().all(|v| v.abs() <= 1e-6), "{:?}", r.par);
        assert!(r.value <= 1e-10);
        assert_eq!(r.convergence, Convergence::Converged);
    }

    #[test]
    fn upper_bound_becomes_active() {
        let f: Objective = Arc::new(|x: &[f64]| (x[0] - 2.0).powi(2));
        let g: GradientFn = Arc::new(|x: &[f64]| vec![2.0 * (x[0] - 2.0)]);
        let opts = OptimOptions {
            upper: Some(vec![1.0]),
            ..Default::default()
        };
        let r = optimize(f, Some(g), &[0.0], &opts).unwrap();
        assert_eq!(r.par, vec![1.0]);
        assert_eq!(r.convergence, Convergence::Converged);
        assert!(r.message.contains("pgtol"));
    }

    #[test]
    fn bfgs_update_satisfies_secant_equation() {
        let n = 3;
        let mut h = vec![0.0; 9];
        for i in 0..n {
            h[i * n + i] = 1.0;
        }
        let s = [0.5, -1.0, 0.25];
        let y = [1.0, -1.5, 0.75];
        bfgs_update(&mut h, n, &s, &y, dot(&s, &y));
        let hy: Vec<f64> = (0..n).map(|i| dot(&h[i * n..(i + 1) * n], &y)).collect();
        for (a, b) in hy.iter().zip(&s) {
            assert!((a - b).abs() < 1e-14);
        }
    }

    #[test]
    fn bounds_with_bfgs_are_rejected() {
        let (f, g) = sum_sq();
        let opts = OptimOptions {
            method: Method::Bfgs,
            lower: Some(vec![0.0]),
            ..Default::default()
        };
        assert!(matches!(
            optimize(f, Some(g), &[1.0], &opts),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn non_finite_start_is_an_error() {
        let f: Objective = Arc::new(|x: &[f64]| x[0].ln());
        assert!(optimize(f, None, &[-1.0], &OptimOptions::default())
            .unwrap_err()
            .is_non_finite());
    }

    #[test]
    fn maxit_is_reported() {
        let f: Objective =
            Arc::new(|x: &[f64]| 100.0 * (x[1] - x[0] * x[0]).powi(2) + (1.0 - x[0]).powi(2));
        let opts = OptimOptions {
            maxit: 2,
            ..Default::default()
        };
        let r = optimize(f, None, &[-1.2, 1.0], &opts).unwrap();
        assert_eq!(r.convergence, Convergence::MaxitReached);
        assert_eq!(r.convergence.code(), 1);
        assert_eq!(r.iterations, 2);
    }

    #[test]
    fn method_names_parse() {
        assert_eq!("L-BFGS-B".parse::<Method>().unwrap(), Method::Lbfgsb);
        assert_eq!("cg".parse::<Method>().unwrap(), Method::Cg);
        assert!("nelder-mead".parse::<Method>().is_err());
    }
}
