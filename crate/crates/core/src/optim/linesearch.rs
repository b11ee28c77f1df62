//! Strong Wolfe line search along a feasible ray.
//!
//! Trial points are `x + alpha * d`, projected into the bounds, with `alpha`
//! capped at the largest feasible step. Every trial is one coupled
//! evaluation, so value and gradient at a trial cost a single batch.

use super::dot;
use crate::bounds::Bounds;
use crate::error::{Error, Result};
use crate::evaluator::{CoupledEvaluator, EvalRecord};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LineSearchControl {
    /// Sufficient-decrease constant.
    pub c1: f64,
    /// Curvature constant.
    pub c2: f64,
    pub max_trials: usize,
    pub initial_step: f64,
}

impl LineSearchControl {
    pub fn quasi_newton(initial_step: f64) -> Self {
        Self {
            c1: 1e-4,
            c2: 0.9,
            max_trials: 20,
            initial_step,
        }
    }

    pub fn conjugate_gradient(initial_step: f64) -> Self {
        Self {
            c2: 0.1,
            ..Self::quasi_newton(initial_step)
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LineSearchOutcome {
    pub step: f64,
    pub record: EvalRecord,
    /// Evaluated trial points, including failed ones.
    pub trials: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub enum SearchResult {
    Accepted(LineSearchOutcome),
    Failed { trials: usize, reason: String },
}

#[derive(Debug, Clone)]
struct Sample {
    alpha: f64,
    f: f64,
    slope: f64,
    record: Option<EvalRecord>,
}

/// Largest `alpha` keeping `x + alpha * d` inside the bounds.
pub fn max_feasible_step(x: &[f64], d: &[f64], bounds: Option<&Bounds>) -> f64 {
    let Some(b) = bounds else {
        return f64::INFINITY;
    };
    let mut limit = f64::INFINITY;
    for i in 0..x.len() {
        let step = if d[i] > 0.0 {
            (b.upper()[i] - x[i]) / d[i]
        } else if d[i] < 0.0 {
            (b.lower()[i] - x[i]) / d[i]
        } else {
            continue;
        };
        limit = limit.min(step);
    }
    limit.max(0.0)
}

struct Ray<'a> {
    x: &'a [f64],
    d: &'a [f64],
    bounds: Option<&'a Bounds>,
    alpha_max: f64,
}

impl Ray<'_> {
    #[allow(clippy::needless_range_loop)]
    fn point(&self, alpha: f64) -> Vec<f64> {
        let mut p: Vec<f64> = self
            .x
            .iter()
            .zip(self.d)
            .map(|(x, d)| x + alpha * d)
            .collect();
        if let Some(b) = self.bounds {
            if alpha >= self.alpha_max {
                // land exactly on the bound(s) that limit the step
                for i in 0..p.len() {
                    let hit = if self.d[i] > 0.0 {
                        (b.upper()[i] - self.x[i]) / self.d[i]
                    } else if self.d[i] < 0.0 {
                        (b.lower()[i] - self.x[i]) / self.d[i]
                    } else {
                        continue;
                    };
                    if hit <= self.alpha_max {
                        p[i] = if self.d[i] > 0.0 {
                            b.upper()[i]
                        } else {
                            b.lower()[i]
                        };
                    }
                }
            }
            b.project(&mut p);
        }
        p
    }
}

/// Searches for a step along `direction` from the evaluated point `start`
/// satisfying the strong Wolfe conditions.
///
/// Non-finite objective values at a trial shrink the step. When trials run
/// out after some trial achieved sufficient decrease, that trial is
/// returned instead of a failure.
pub fn line_search(
    ev: &mut CoupledEvaluator,
    start: &EvalRecord,
    direction: &[f64],
    bounds: Option<&Bounds>,
    control: &LineSearchControl,
) -> Result<SearchResult> {
    if direction.len() != start.par.len() {
        return Err(Error::Dimension {
            expected: start.par.len(),
            got: direction.len(),
        });
    }
    let f0 = start.value;
    let slope0 = dot(&start.gradient, direction);
    if !(slope0 < 0.0) {
        return Err(Error::NotDescent { slope: slope0 });
    }
    let ray = Ray {
        x: &start.par,
        d: direction,
        bounds,
        alpha_max: max_feasible_step(&start.par, direction, bounds),
    };
    if !(ray.alpha_max > 0.0) {
        return Ok(SearchResult::Failed {
            trials: 0,
            reason: "no feasible step along the search direction".into(),
        });
    }

    let mut trials = 0usize;
    let armijo = |s: &Sample| s.f <= f0 + control.c1 * s.alpha * slope0;
    let curvature = |s: &Sample| s.slope.abs() <= -control.c2 * slope0;

    let mut prev = Sample {
        alpha: 0.0,
        f: f0,
        slope: slope0,
        record: None,
    };
    let mut ceiling = f64::INFINITY;
    let mut alpha = if control.initial_step > 0.0 && control.initial_step.is_finite() {
        control.initial_step
    } else {
        1.0
    }
    .min(ray.alpha_max);

    let (mut lo, mut hi) = loop {
        if trials >= control.max_trials {
            return Ok(fail_or_fallback(
                &prev,
                trials,
                "bracketing phase ran out of trials",
            ));
        }
        let first = trials == 0;
        let Some(cur) = probe(ev, &ray, alpha, &mut trials)? else {
            ceiling = alpha;
            alpha = prev.alpha + 0.5 * (alpha - prev.alpha);
            continue;
        };
        if !armijo(&cur) || (!first && cur.f >= prev.f) {
            break (prev, cur);
        }
        if curvature(&cur) {
            return Ok(accept(cur, trials));
        }
        if cur.slope >= 0.0 {
            break (cur, prev);
        }
        if cur.alpha >= ray.alpha_max {
            // the ray leaves the box while still descending
            return Ok(accept(cur, trials));
        }
        let next = (2.0 * cur.alpha).min(ray.alpha_max);
        alpha = if ceiling.is_finite() {
            next.min(0.5 * (cur.alpha + ceiling))
        } else {
            next
        };
        prev = cur;
    };

    loop {
        if trials >= control.max_trials {
            return Ok(fail_or_fallback(
                &lo,
                trials,
                "zoom phase ran out of trials",
            ));
        }
        let width = (hi.alpha - lo.alpha).abs();
        if width <= f64::EPSILON * lo.alpha.abs().max(hi.alpha.abs()) {
            return Ok(fail_or_fallback(
                &lo,
                trials,
                "bracket collapsed to rounding level",
            ));
        }
        let alpha = interpolate(&lo, &hi);
        match probe(ev, &ray, alpha, &mut trials)? {
            None => {
                hi = Sample {
                    alpha,
                    f: f64::INFINITY,
                    slope: f64::NAN,
                    record: None,
                };
            }
            Some(cur) => {
                if !armijo(&cur) || cur.f >= lo.f {
                    hi = cur;
                } else {
                    if curvature(&cur) {
                        return Ok(accept(cur, trials));
                    }
                    if cur.slope * (hi.alpha - lo.alpha) >= 0.0 {
                        hi = lo;
                    }
                    lo = cur;
                }
            }
        }
    }
}

fn probe(
    ev: &mut CoupledEvaluator,
    ray: &Ray<'_>,
    alpha: f64,
    trials: &mut usize,
) -> Result<Option<Sample>> {
    *trials += 1;
    match ev.eval(&ray.point(alpha)) {
        Ok(rec) => Ok(Some(Sample {
            alpha,
            f: rec.value,
            slope: dot(&rec.gradient, ray.d),
            record: Some(rec.clone()),
        })),
        Err(e) if e.is_non_finite() => Ok(None),
        Err(e) => Err(e),
    }
}

fn accept(s: Sample, trials: usize) -> SearchResult {
    SearchResult::Accepted(LineSearchOutcome {
        step: s.alpha,
        record: s.record.expect("accepted samples are evaluated"),
        trials,
    })
}

fn fail_or_fallback(lo: &Sample, trials: usize, reason: &str) -> SearchResult {
    match &lo.record {
        Some(rec) if lo.alpha > 0.0 => SearchResult::Accepted(LineSearchOutcome {
            step: lo.alpha,
            record: rec.clone(),
            trials,
        }),
        _ => SearchResult::Failed {
            trials,
            reason: reason.to_string(),
        },
    }
}

/// Minimizer of the cubic matching value and slope at both ends, kept at
/// least a tenth of the bracket away from either end; bisection otherwise.
fn interpolate(lo: &Sample, hi: &Sample) -> f64 {
    let (a, b) = (lo.alpha, hi.alpha);
    let (left, right) = (a.min(b), a.max(b));
    let margin = 0.1 * (right - left);
    let mid = 0.5 * (a + b);
    if !(hi.f.is_finite() && hi.slope.is_finite()) {
        return mid;
    }
    let d1 = lo.slope + hi.slope - 3.0 * (lo.f - hi.f) / (a - b);
    let disc = d1 * d1 - lo.slope * hi.slope;
    if !(disc >= 0.0) {
        return mid;
    }
    let d2 = (b - a).signum() * disc.sqrt();
    let t = b - (b - a) * ((hi.slope + d2 - d1) / (hi.slope - lo.slope + 2.0 * d2));
    if t.is_finite() && t >= left + margin && t <= right - margin {
        t
    } else {
        mid
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::WorkerPool;
    use crate::evaluator::{GradientFn, GradientMode, Objective};
    use std::sync::Arc;

    fn quadratic_evaluator(bounds: Option<Bounds>) -> CoupledEvaluator {
        let f: Objective = Arc::new(|x: &[f64]| x.iter().map(|v| v * v).sum());
        let g: GradientFn = Arc::new(|x: &[f64]| x.iter().map(|v| 2.0 * v).collect());
        CoupledEvaluator::new(
            f,
            GradientMode::Analytic(g),
            bounds,
            vec![1e-3; 2],
            Arc::new(WorkerPool::sequential()),
        )
        .unwrap()
    }

    #[test]
    fn quadratic_reaches_line_minimum() {
        let mut ev = quadratic_evaluator(None);
        let start = ev.eval(&[1.0, 1.0]).unwrap().clone();
        let control = LineSearchControl::quasi_newton(1.0);
        let SearchResult::Accepted(out) =
            line_search(&mut ev, &start, &[-2.0, -2.0], None, &control).unwrap()
        else {
            panic!("line search failed");
        };
        assert_eq!(out.step, 0.5);
        assert_eq!(out.record.par, vec![0.0, 0.0]);
        assert_eq!(out.trials, 2);
    }

    #[test]
    fn ascent_direction_is_rejected() {
        let mut ev = quadratic_evaluator(None);
        let start = ev.eval(&[1.0, 1.0]).unwrap().clone();
        let control = LineSearchControl::quasi_newton(1.0);
        assert!(matches!(
            line_search(&mut ev, &start, &[1.0, 0.0], None, &control),
            Err(Error::NotDescent { .. })
        ));
    }

    #[test]
    fn nan_trial_backtracks() {
        // undefined beyond x = 2
        let f: Objective = Arc::new(|x: &[f64]| {
            if x[0] > 2.0 {
                f64::NAN
            } else {
                (x[0] - 1.5).powi(2)
            }
        });
        let g: GradientFn = Arc::new(|x: &[f64]| vec![2.0 * (x[0] - 1.5)]);
        let mut ev = CoupledEvaluator::new(
            f,
            GradientMode::Analytic(g),
            None,
            vec![1e-3],
            Arc::new(WorkerPool::sequential()),
        )
        .unwrap();
        let start = ev.eval(&[0.0]).unwrap().clone();
        let control = LineSearchControl::quasi_newton(1.0);
        let SearchResult::Accepted(out) =
            line_search(&mut ev, &start, &[3.0], None, &control).unwrap()
        else {
            panic!("line search failed");
        };
        assert!(out.trials >= 2);
        assert!(out.record.par[0] <= 2.0);
        assert!(out.record.value < start.value);
    }

    #[test]
    fn trials_stay_inside_bounds() {
        let b = Bounds::new(vec![0.5, -10.0], vec![10.0, 10.0]).unwrap();
        let mut ev = quadratic_evaluator(Some(b.clone()));
        let start = ev.eval(&[1.0, 1.0]).unwrap().clone();
        let d = [-2.0, -2.0];
        assert_eq!(max_feasible_step(&start.par, &d, Some(&b)), 0.25);
        let SearchResult::Accepted(out) = line_search(
            &mut ev,
            &start,
            &d,
            Some(&b),
            &LineSearchControl::quasi_newton(1.0),
        )
        .unwrap() else {
            panic!("line search failed");
        };
        assert_eq!(out.step, 0.25);
        assert_eq!(out.record.par, vec![0.5, 0.5]);
    }

    #[test]
    fn interpolation_is_exact_on_quadratics() {
        let lo = Sample {
            alpha: 0.0,
            f: 2.0,
            slope: -8.0,
            record: None,
        };
        let hi = Sample {
            alpha: 1.0,
            f: 2.0,
            slope: 8.0,
            record: None,
        };
        assert_eq!(interpolate(&lo, &hi), 0.5);
    }
}
