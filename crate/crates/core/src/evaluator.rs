//! Coupled value/gradient evaluation with a single-entry cache.
//!
//! Asking a [`CoupledEvaluator`] for either the value or the gradient at new
//! parameters evaluates both in one batch and keeps the result. The
//! companion query at bitwise-identical parameters is then answered from the
//! cache without calling user code.

use std::fmt;
use std::sync::Arc;

use crate::bounds::Bounds;
use crate::engine::{self, Scheme, WorkerPool};
use crate::error::{Error, Result};

/// User objective. Must be safe to call from several workers at once.
pub type Objective = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;

/// User gradient. Same thread-safety contract as [`Objective`].
pub type GradientFn = Arc<dyn Fn(&[f64]) -> Vec<f64> + Send + Sync>;

/// Default finite-difference step for every coordinate.
pub const DEFAULT_EPS: f64 = 1e-3;

#[derive(Clone)]
pub enum GradientMode {
    Analytic(GradientFn),
    Central,
    Forward,
}

impl GradientMode {
    pub fn scheme(&self) -> Option<Scheme> {
        match self {
            GradientMode::Analytic(_) => None,
            GradientMode::Central => Some(Scheme::Central),
            GradientMode::Forward => Some(Scheme::Forward),
        }
    }
}

impl fmt::Debug for GradientMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            GradientMode::Analytic(_) => f.write_str("Analytic"),
            GradientMode::Central => f.write_str("Central"),
            GradientMode::Forward => f.write_str("Forward"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalRecord {
    pub par: Vec<f64>,
    pub value: f64,
    pub gradient: Vec<f64>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash)]
pub struct EvalCounts {
    /// Raw objective invocations.
    pub fn_calls: u64,
    /// Raw analytic-gradient invocations.
    pub gr_calls: u64,
    /// Dispatched evaluation batches.
    pub batches: u64,
}

pub struct CoupledEvaluator {
    objective: Objective,
    mode: GradientMode,
    bounds: Option<Bounds>,
    eps: Vec<f64>,
    pool: Arc<WorkerPool>,
    cache: Option<EvalRecord>,
    counts: EvalCounts,
}

impl CoupledEvaluator {
    /// The dimension is taken from `eps`.
    pub fn new(
        objective: Objective,
        mode: GradientMode,
        bounds: Option<Bounds>,
        eps: Vec<f64>,
        pool: Arc<WorkerPool>,
    ) -> Result<Self> {
        if eps.is_empty() {
            return Err(Error::Config("at least one parameter is required".into()));
        }
        if let Some(&bad) = eps.iter().find(|e| !(e.is_finite() && **e > 0.0)) {
            return Err(Error::Config(format!(
                "finite-difference step must be positive and finite, got {bad}"
            )));
        }
        if let Some(b) = &bounds {
            if b.dim() != eps.len() {
                return Err(Error::Dimension {
                    expected: eps.len(),
                    got: b.dim(),
                });
            }
        }
        Ok(Self {
            objective,
            mode,
            bounds,
            eps,
            pool,
            cache: None,
            counts: EvalCounts::default(),
        })
    }

    pub fn dim(&self) -> usize {
        self.eps.len()
    }

    pub fn bounds(&self) -> Option<&Bounds> {
        self.bounds.as_ref()
    }

    pub fn mode(&self) -> &GradientMode {
        &self.mode
    }

    pub fn counts(&self) -> EvalCounts {
        self.counts
    }

    pub fn cached(&self) -> Option<&EvalRecord> {
        self.cache.as_ref()
    }

    pub fn eval_value(&mut self, par: &[f64]) -> Result<f64> {
        self.eval(par).map(|r| r.value)
    }

    pub fn eval_gradient(&mut self, par: &[f64]) -> Result<Vec<f64>> {
        self.eval(par).map(|r| r.gradient.clone())
    }

    /// Returns the record at `par`, dispatching one batch on a cache miss.
    /// Failed batches are counted but never cached.
    pub fn eval(&mut self, par: &[f64]) -> Result<&EvalRecord> {
        if par.len() != self.dim() {
            return Err(Error::Dimension {
                expected: self.dim(),
                got: par.len(),
            });
        }
        let hit = self.cache.as_ref().is_some_and(|c| same_bits(&c.par, par));
        if !hit {
            self.cache = None;
            let (value, gradient) = self.dispatch(par)?;
            self.cache = Some(EvalRecord {
                par: par.to_vec(),
                value,
                gradient,
            });
        }
        Ok(self.cache.as_ref().expect("cache filled above"))
    }

    fn dispatch(&mut self, par: &[f64]) -> Result<(f64, Vec<f64>)> {
        self.counts.batches += 1;
        match &self.mode {
            GradientMode::Analytic(gradient) => {
                self.counts.fn_calls += 1;
                self.counts.gr_calls += 1;
                engine::parallel_value_and_gradient(&self.pool, &*self.objective, &**gradient, par)
            }
            GradientMode::Central | GradientMode::Forward => {
                let scheme = self.mode.scheme().expect("finite-difference mode");
                let stencil = engine::build_stencil(par, &self.eps, scheme, self.bounds.as_ref())?;
                self.counts.fn_calls += stencil.len() as u64;
                let values =
                    engine::evaluate_batch(&self.pool, &*self.objective, stencil.points())?;
                engine::assemble_gradient(&values, &stencil)
            }
        }
    }
}

impl fmt::Debug for CoupledEvaluator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CoupledEvaluator")
            .field("mode", &self.mode)
            .field("dim", &self.dim())
            .field("pool", &self.pool)
            .field("counts", &self.counts)
            .finish()
    }
}

fn same_bits(a: &[f64], b: &[f64]) -> bool {
    a.len() == b.len() && a.iter().zip(b).all(|(x, y)| x.to_bits() == y.to_bits())
}
