//! Parallel evaluation for gradient-based optimizers.
//!
//! `paropt` minimizes a function with L-BFGS-B, BFGS or nonlinear conjugate
//! gradients. Every optimizer step asks a [`CoupledEvaluator`] for the value
//! and gradient at a point; the evaluator computes both in a single batch,
//! either the objective and analytic gradient side by side or all points of a
//! finite-difference stencil at once, on a [`WorkerPool`]. A second query at
//! the same point is served from the evaluator's one-entry cache.
//!
//! Results are bitwise independent of the number of workers.
//!
//! ```
//! use std::sync::Arc;
//! use paropt::{optimize, OptimOptions};
//!
//! let f = Arc::new(|x: &[f64]| (x[0] - 1.0).powi(2) + (x[1] + 2.0).powi(2));
//! let opts = OptimOptions { workers: 4, ..Default::default() };
//! let r = optimize(f, None, &[0.0, 0.0], &opts).unwrap();
//! assert!((r.par[0] - 1.0).abs() < 1e-5 && (r.par[1] + 2.0).abs() < 1e-5);
//! ```

// `!(x > 0.0)` is used deliberately so that NaN takes the failure branch.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bench;
pub mod bounds;
pub mod cli;
pub mod engine;
pub mod error;
pub mod evaluator;
pub mod gradcheck;
pub mod log;
pub mod optim;
pub mod problems;

pub use bounds::Bounds;
pub use engine::{Scheme, WorkerPool};
pub use error::{Error, Result};
pub use evaluator::{
    CoupledEvaluator, EvalCounts, EvalRecord, GradientFn, GradientMode, Objective,
};
pub use log::IterationLog;
pub use optim::{optimize, optimize_with_pool, Convergence, Method, OptimOptions, OptimResult};
