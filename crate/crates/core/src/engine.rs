//! Batch evaluation engine.
//!
//! Finite-difference stencils are built here, dispatched as one batch of
//! independent objective calls to a [`WorkerPool`], and reassembled into a
//! gradient. Analytic objective/gradient pairs are run as two concurrent
//! tasks on the same pool.
//!
//! Results never depend on the pool size: every batch returns its values in
//! submission order and assembly happens on the calling thread.

use std::fmt;

use crate::bounds::Bounds;
use crate::error::{Error, Result};

/// Fixed-size set of evaluation slots.
///
/// With the `parallel` feature (default) a pool of size > 1 is backed by a
/// dedicated rayon thread pool. A pool of size 1, or any pool when the
/// feature is disabled, evaluates batches sequentially on the calling thread.
pub struct WorkerPool {
    size: usize,
    #[cfg(feature = "parallel")]
    threads: Option<rayon::ThreadPool>,
}

impl WorkerPool {
    pub fn new(size: usize) -> Result<Self> {
        if size == 0 {
            return Err(Error::Config(
                "worker pool needs at least one worker".into(),
            ));
        }
        #[cfg(feature = "parallel")]
        let threads = if size > 1 {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(size)
                .thread_name(|i| format!("paropt-worker-{i}"))
                .build()
                .map_err(|e| Error::Config(format!("cannot start worker pool: {e}")))?;
            Some(pool)
        } else {
            None
        };
        Ok(Self {
            size,
            #[cfg(feature = "parallel")]
            threads,
        })
    }

    pub fn sequential() -> Self {
        Self::new(1).expect("size 1 is valid")
    }

    pub fn size(&self) -> usize {
        self.size
    }

    /// True when batches actually run concurrently.
    pub fn is_parallel(&self) -> bool {
        #[cfg(feature = "parallel")]
        {
            self.threads.is_some()
        }
        #[cfg(not(feature = "parallel"))]
        {
            false
        }
    }

    /// Applies `f` to every item and returns the results in item order.
    pub fn map<T, R, F>(&self, items: &[T], f: F) -> Vec<R>
    where
        T: Sync,
        R: Send,
        F: Fn(&T) -> R + Sync + Send,
    {
        #[cfg(feature = "parallel")]
        if let Some(pool) = &self.threads {
            use rayon::prelude::*;
            // one item per task so that slow evaluations never share a slot
            return pool.install(|| items.par_iter().with_max_len(1).map(&f).collect());
        }
        items.iter().map(f).collect()
    }

    /// Runs both closures, concurrently when the pool has more than one slot.
    pub fn join<A, B, RA, RB>(&self, a: A, b: B) -> (RA, RB)
    where
        A: FnOnce() -> RA + Send,
        B: FnOnce() -> RB + Send,
        RA: Send,
        RB: Send,
    {
        #[cfg(feature = "parallel")]
        if let Some(pool) = &self.threads {
            return pool.install(|| rayon::join(a, b));
        }
        (a(), b())
    }
}

impl fmt::Debug for WorkerPool {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("WorkerPool")
            .field("size", &self.size)
            .field("parallel", &self.is_parallel())
            .finish()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Scheme {
    #[default]
    Central,
    Forward,
}

impl std::str::FromStr for Scheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "central" => Ok(Scheme::Central),
            "forward" => Ok(Scheme::Forward),
            other => Err(Error::Config(format!(
                "unknown difference scheme {other:?}"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PointRole {
    Center,
    Plus(usize),
    Minus(usize),
}

#[derive(Debug, Clone, PartialEq)]
pub struct StencilPoint {
    pub point: Vec<f64>,
    pub role: PointRole,
    /// Coefficient of this point's value in its coordinate's numerator.
    pub weight_num: f64,
    /// Denominator shared by the coordinate's difference quotient.
    pub weight_den: f64,
}

impl AsRef<[f64]> for StencilPoint {
    fn as_ref(&self) -> &[f64] {
        &self.point
    }
}

/// The set of points whose values make up one finite-difference gradient.
///
/// Points are ordered: the center first, then each coordinate in ascending
/// order with its plus point before its minus point. A side whose step was
/// clamped to zero has no point and reuses the center value instead.
#[derive(Debug, Clone, PartialEq)]
pub struct Stencil {
    center: Vec<f64>,
    points: Vec<StencilPoint>,
    scheme: Scheme,
    steps: Vec<(f64, f64)>,
}

impl Stencil {
    pub fn center(&self) -> &[f64] {
        &self.center
    }

    pub fn points(&self) -> &[StencilPoint] {
        &self.points
    }

    pub fn scheme(&self) -> Scheme {
        self.scheme
    }

    /// Effective `(h_plus, h_minus)` per coordinate, measured as the
    /// representable distance between the evaluated points and the center.
    pub fn effective_steps(&self) -> &[(f64, f64)] {
        &self.steps
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// Builds the stencil for a central or forward difference at `center`.
///
/// Near a bound the step on that side is shortened to the distance to the
/// bound; a side that collapses to zero turns the quotient one-sided. The
/// forward scheme falls back to a backward step when the center sits on its
/// upper bound.
pub fn build_stencil(
    center: &[f64],
    eps: &[f64],
    scheme: Scheme,
    bounds: Option<&Bounds>,
) -> Result<Stencil> {
    let dim = center.len();
    if eps.len() != dim {
        return Err(Error::Dimension {
            expected: dim,
            got: eps.len(),
        });
    }
    if let Some(&bad) = eps.iter().find(|e| !(e.is_finite() && **e > 0.0)) {
        return Err(Error::Config(format!(
            "finite-difference step must be positive and finite, got {bad}"
        )));
    }
    if let Some(b) = bounds {
        if b.dim() != dim {
            return Err(Error::Dimension {
                expected: dim,
                got: b.dim(),
            });
        }
        if !b.contains(center) {
            return Err(Error::OutOfBounds {
                point: center.to_vec(),
            });
        }
    }

    let mut steps = Vec::with_capacity(dim);
    let mut points = Vec::with_capacity(1 + 2 * dim);
    points.push(StencilPoint {
        point: center.to_vec(),
        role: PointRole::Center,
        weight_num: 0.0,
        weight_den: 1.0,
    });

    for (i, (&x, &h)) in center.iter().zip(eps).enumerate() {
        let (lo, hi) = bounds
            .map(|b| (b.lower()[i], b.upper()[i]))
            .unwrap_or((f64::NEG_INFINITY, f64::INFINITY));
        let plus = (x + h).min(hi);
        let minus = (x - h).max(lo);
        let h_plus = plus - x;
        let mut h_minus = x - minus;
        if scheme == Scheme::Forward && h_plus > 0.0 {
            h_minus = 0.0;
        }
        let den = h_plus + h_minus;
        if !(den > 0.0) {
            return Err(Error::DegenerateBounds { coord: i });
        }
        if h_plus > 0.0 {
            let mut point = center.to_vec();
            point[i] = plus;
            points.push(StencilPoint {
                point,
                role: PointRole::Plus(i),
                weight_num: 1.0,
                weight_den: den,
            });
        }
        if h_minus > 0.0 {
            let mut point = center.to_vec();
            point[i] = minus;
            points.push(StencilPoint {
                point,
                role: PointRole::Minus(i),
                weight_num: -1.0,
                weight_den: den,
            });
        }
        steps.push((h_plus, h_minus));
    }

    Ok(Stencil {
        center: center.to_vec(),
        points,
        scheme,
        steps,
    })
}

/// Evaluates `objective` at every point and returns the values in submission
/// order.
///
/// All points are evaluated before any error is reported; the reported point
/// is the first non-finite one in submission order. A panicking objective
/// propagates its panic once the batch has drained.
pub fn evaluate_batch<F, P>(pool: &WorkerPool, objective: &F, points: &[P]) -> Result<Vec<f64>>
where
    F: Fn(&[f64]) -> f64 + Sync + ?Sized,
    P: AsRef<[f64]> + Sync,
{
    if let Some(first) = points.first() {
        let dim = first.as_ref().len();
        if let Some(p) = points.iter().find(|p| p.as_ref().len() != dim) {
            return Err(Error::Dimension {
                expected: dim,
                got: p.as_ref().len(),
            });
        }
    }
    let values = pool.map(points, |p| objective(p.as_ref()));
    if let Some((p, &value)) = points.iter().zip(&values).find(|(_, v)| !v.is_finite()) {
        return Err(Error::NonFiniteObjective {
            point: p.as_ref().to_vec(),
            value,
        });
    }
    Ok(values)
}

/// Combines batch values into `(center value, gradient)`.
pub fn assemble_gradient(values: &[f64], stencil: &Stencil) -> Result<(f64, Vec<f64>)> {
    if values.len() != stencil.points.len() {
        return Err(Error::Internal(format!(
            "{} values for a stencil of {} points",
            values.len(),
            stencil.points.len()
        )));
    }
    let center_value = values[0];
    let mut numer = vec![0.0; stencil.steps.len()];
    for (sp, &v) in stencil.points.iter().zip(values) {
        match sp.role {
            PointRole::Center => {}
            PointRole::Plus(i) | PointRole::Minus(i) => numer[i] += sp.weight_num * v,
        }
    }
    let grad = numer
        .into_iter()
        .zip(&stencil.steps)
        .map(|(mut num, &(h_plus, h_minus))| {
            if h_plus == 0.0 {
                num += center_value;
            }
            if h_minus == 0.0 {
                num -= center_value;
            }
            num / (h_plus + h_minus)
        })
        .collect();
    Ok((center_value, grad))
}

/// Evaluates objective and analytic gradient at `par` as two concurrent
/// tasks.
pub fn parallel_value_and_gradient<F, G>(
    pool: &WorkerPool,
    objective: &F,
    gradient: &G,
    par: &[f64],
) -> Result<(f64, Vec<f64>)>
where
    F: Fn(&[f64]) -> f64 + Sync + ?Sized,
    G: Fn(&[f64]) -> Vec<f64> + Sync + ?Sized,
{
    let (value, grad) = pool.join(|| objective(par), || gradient(par));
    if !value.is_finite() {
        return Err(Error::NonFiniteObjective {
            point: par.to_vec(),
            value,
        });
    }
    if grad.len() != par.len() {
        return Err(Error::Dimension {
            expected: par.len(),
            got: grad.len(),
        });
    }
    if grad.iter().any(|g| !g.is_finite()) {
        return Err(Error::NonFiniteGradient {
            point: par.to_vec(),
        });
    }
    Ok((value, grad))
}
