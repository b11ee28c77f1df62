//! Analytic gradient versus central differences at random points.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

use crate::engine::{self, Scheme, WorkerPool};
use crate::error::{Error, Result};
use crate::problems::Problem;

/// Step used by the check. Small enough that truncation error stays below
/// the absolute floor on the registered problems, large enough to keep
/// cancellation error there too.
pub const GRADCHECK_EPS: f64 = 1e-5;

#[derive(Debug, Clone, PartialEq)]
pub struct GradcheckPoint {
    pub par: Vec<f64>,
    pub analytic: Vec<f64>,
    pub numeric: Vec<f64>,
    pub max_abs_diff: f64,
    pub tolerance: f64,
}

impl GradcheckPoint {
    pub fn passed(&self) -> bool {
        self.max_abs_diff <= self.tolerance
    }
}

/// Agreement threshold `max(1e-6, 1e-4 * |g|_inf)`.
pub fn tolerance(analytic: &[f64]) -> f64 {
    let g_inf = analytic.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    1e-6f64.max(1e-4 * g_inf)
}

pub fn gradcheck(
    problem: &Problem,
    points: usize,
    seed: u64,
    eps: f64,
    pool: &WorkerPool,
) -> Result<Vec<GradcheckPoint>> {
    let gradient = problem
        .gradient
        .as_ref()
        .ok_or_else(|| Error::Config(format!("{} has no analytic gradient", problem.name)))?;
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let steps = vec![eps; problem.dim];
    (0..points)
        .map(|_| {
            let par: Vec<f64> = problem
                .sample_box
                .iter()
                .map(|&(lo, hi)| rng.gen_range(lo..hi))
                .collect();
            let analytic = gradient(&par);
            let stencil = engine::build_stencil(&par, &steps, Scheme::Central, None)?;
            let values = engine::evaluate_batch(pool, &*problem.objective, stencil.points())?;
            let (_, numeric) = engine::assemble_gradient(&values, &stencil)?;
            let max_abs_diff = analytic
                .iter()
                .zip(&numeric)
                .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
            Ok(GradcheckPoint {
                tolerance: tolerance(&analytic),
                par,
                analytic,
                numeric,
                max_abs_diff,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problems;
    use std::sync::Arc;

    #[test]
    fn registered_gradients_agree() {
        let data = Arc::new(problems::gen_normal_dataset(200, 5.0, 2.0, 3).unwrap());
        let pool = WorkerPool::sequential();
        for problem in [
            problems::quadratic(3),
            problems::rosenbrock(2),
            problems::rosenbrock(4),
            problems::normal_negll(data).unwrap(),
        ] {
            let report = gradcheck(&problem, 10, 11, GRADCHECK_EPS, &pool).unwrap();
            for pt in report {
                assert!(pt.passed(), "{}: {pt:?}", problem.name);
            }
        }
    }

    #[test]
    fn wrong_gradient_is_caught() {
        let mut p = problems::quadratic(2);
        p.gradient = Some(Arc::new(|x: &[f64]| {
            x.iter().map(|v| 2.0 * v + 0.01).collect()
        }));
        let report = gradcheck(&p, 5, 1, GRADCHECK_EPS, &WorkerPool::sequential()).unwrap();
        assert!(report.iter().all(|pt| !pt.passed()));
    }
}
