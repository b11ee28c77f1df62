//! Registered test problems and dataset helpers.

use std::f64::consts::PI;
use std::path::Path;
use std::sync::Arc;
use std::time::Duration;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

use crate::error::{Error, Result};
use crate::evaluator::{GradientFn, Objective};

/// A ready-to-run problem: objective, optional analytic gradient, default
/// bounds and a box for drawing random test points.
#[derive(Clone)]
pub struct Problem {
    pub name: &'static str,
    pub dim: usize,
    pub objective: Objective,
    pub gradient: Option<GradientFn>,
    pub lower: Option<Vec<f64>>,
    pub upper: Option<Vec<f64>>,
    pub sample_box: Vec<(f64, f64)>,
}

impl std::fmt::Debug for Problem {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Problem")
            .field("name", &self.name)
            .field("dim", &self.dim)
            .field("analytic_gradient", &self.gradient.is_some())
            .finish()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ProblemInfo {
    pub name: &'static str,
    pub description: &'static str,
    /// Fixed dimension, or `None` when taken from the starting point.
    pub fixed_dim: Option<usize>,
    pub min_dim: usize,
    pub needs_data: bool,
}

pub const REGISTRY: &[ProblemInfo] = &[
    ProblemInfo {
        name: "quadratic",
        description: "sum of squares, minimum 0 at the origin",
        fixed_dim: None,
        min_dim: 1,
        needs_data: false,
    },
    ProblemInfo {
        name: "rosenbrock",
        description: "chained Rosenbrock function, minimum 0 at (1, ..., 1)",
        fixed_dim: None,
        min_dim: 2,
        needs_data: false,
    },
    ProblemInfo {
        name: "normal_negll",
        description: "normal negative log-likelihood in (mean, sd), needs --data",
        fixed_dim: Some(2),
        min_dim: 2,
        needs_data: true,
    },
    ProblemInfo {
        name: "sleep",
        description: "sum of squares that sleeps before each objective and gradient call",
        fixed_dim: None,
        min_dim: 1,
        needs_data: false,
    },
];

pub fn lookup(name: &str) -> Result<&'static ProblemInfo> {
    REGISTRY
        .iter()
        .find(|p| p.name == name)
        .ok_or_else(|| Error::Config(format!("unknown problem {name:?}")))
}

/// Instantiates a registered problem.
///
/// `dim` is ignored for fixed-dimension problems. `sleep` only affects the
/// `sleep` problem.
pub fn build_problem(
    name: &str,
    dim: usize,
    data: Option<Arc<Vec<f64>>>,
    sleep: Duration,
) -> Result<Problem> {
    let info = lookup(name)?;
    let dim = info.fixed_dim.unwrap_or(dim);
    if dim < info.min_dim {
        return Err(Error::Config(format!(
            "{name} needs at least {} parameters, got {dim}",
            info.min_dim
        )));
    }
    match info.name {
        "quadratic" => Ok(quadratic(dim)),
        "rosenbrock" => Ok(rosenbrock(dim)),
        "normal_negll" => {
            let data = data.ok_or_else(|| Error::Config("normal_negll needs a dataset".into()))?;
            normal_negll(data)
        }
        "sleep" => Ok(sleep_quadratic(dim, sleep)),
        _ => unreachable!("registry and constructors agree"),
    }
}

pub fn quadratic(dim: usize) -> Problem {
    Problem {
        name: "quadratic",
        dim,
        objective: Arc::new(|x: &[f64]| x.iter().map(|v| v * v).sum()),
        gradient: Some(Arc::new(|x: &[f64]| x.iter().map(|v| 2.0 * v).collect())),
        lower: None,
        upper: None,
        sample_box: vec![(-5.0, 5.0); dim],
    }
}

pub fn rosenbrock(dim: usize) -> Problem {
    let objective: Objective = Arc::new(|x: &[f64]| {
        x.windows(2)
            .map(|w| 100.0 * (w[1] - w[0] * w[0]).powi(2) + (1.0 - w[0]).powi(2))
            .sum()
    });
    let gradient: GradientFn = Arc::new(|x: &[f64]| {
        let mut g = vec![0.0; x.len()];
        for i in 0..x.len() - 1 {
            let r = x[i + 1] - x[i] * x[i];
            g[i] += -400.0 * x[i] * r - 2.0 * (1.0 - x[i]);
            g[i + 1] += 200.0 * r;
        }
        g
    });
    Problem {
        name: "rosenbrock",
        dim,
        objective,
        gradient: Some(gradient),
        lower: None,
        upper: None,
        sample_box: vec![(-2.0, 2.0); dim],
    }
}

/// Negative log-likelihood of an i.i.d. normal sample, parameterized by
/// `(mean, sd)`, with the lower bound `sd >= 1e-4`.
pub fn normal_negll(data: Arc<Vec<f64>>) -> Result<Problem> {
    if data.is_empty() {
        return Err(Error::Config("dataset is empty".into()));
    }
    let n = data.len() as f64;
    let half_log_2pi = 0.5 * (2.0 * PI).ln();
    let d = data.clone();
    let objective: Objective = Arc::new(move |par: &[f64]| {
        let (mu, sigma) = (par[0], par[1]);
        let ss: f64 = d.iter().map(|x| (x - mu).powi(2)).sum();
        n * (sigma.ln() + half_log_2pi) + ss / (2.0 * sigma * sigma)
    });
    let d = data.clone();
    let gradient: GradientFn = Arc::new(move |par: &[f64]| {
        let (mu, sigma) = (par[0], par[1]);
        let s1: f64 = d.iter().map(|x| x - mu).sum();
        let ss: f64 = d.iter().map(|x| (x - mu).powi(2)).sum();
        let s2 = sigma * sigma;
        vec![-s1 / s2, n / sigma - ss / (s2 * sigma)]
    });
    let center = data.iter().sum::<f64>() / n;
    Ok(Problem {
        name: "normal_negll",
        dim: 2,
        objective,
        gradient: Some(gradient),
        lower: Some(vec![f64::NEG_INFINITY, 1e-4]),
        upper: None,
        sample_box: vec![(center - 3.0, center + 3.0), (0.5, 5.0)],
    })
}

/// Sum of squares whose objective and gradient each sleep for `sleep`
/// before returning, so their cost is controlled wall time.
pub fn sleep_quadratic(dim: usize, sleep: Duration) -> Problem {
    let objective: Objective = Arc::new(move |x: &[f64]| {
        if !sleep.is_zero() {
            std::thread::sleep(sleep);
        }
        x.iter().map(|v| v * v).sum()
    });
    let gradient: GradientFn = Arc::new(move |x: &[f64]| {
        if !sleep.is_zero() {
            std::thread::sleep(sleep);
        }
        x.iter().map(|v| 2.0 * v).collect()
    });
    Problem {
        name: "sleep",
        dim,
        objective,
        gradient: Some(gradient),
        lower: None,
        upper: None,
        sample_box: vec![(-5.0, 5.0); dim],
    }
}

/// Closed-form maximum-likelihood estimate `(mean, sqrt(mean squared
/// deviation))` of a normal sample.
pub fn normal_mle(data: &[f64]) -> (f64, f64) {
    let n = data.len() as f64;
    let mean = data.iter().sum::<f64>() / n;
    let msd = data.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    (mean, msd.sqrt())
}

/// Draws `n` normal variates.
///
/// The stream is ChaCha20 seeded through `SeedableRng::seed_from_u64`;
/// uniforms are turned into normals with the Box–Muller transform, using
/// both the cosine and sine branch of each pair.
pub fn gen_normal_dataset(n: usize, mean: f64, sd: f64, seed: u64) -> Result<Vec<f64>> {
    if n == 0 {
        return Err(Error::Config("sample size must be at least 1".into()));
    }
    if !(sd > 0.0 && sd.is_finite()) || !mean.is_finite() {
        return Err(Error::Config(format!(
            "need a finite mean and a positive sd, got mean {mean}, sd {sd}"
        )));
    }
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        // 1 - u lies in (0, 1], keeping the logarithm finite
        let u1: f64 = 1.0 - rng.gen::<f64>();
        let u2: f64 = rng.gen::<f64>();
        let r = (-2.0 * u1.ln()).sqrt();
        let theta = 2.0 * PI * u2;
        out.push(mean + sd * r * theta.cos());
        if out.len() < n {
            out.push(mean + sd * r * theta.sin());
        }
    }
    Ok(out)
}

/// Parses newline-separated numbers. Blank lines and anything after `#` are
/// ignored.
pub fn parse_dataset(text: &str) -> Result<Vec<f64>> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let content = line.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let v: f64 = content.parse().map_err(|_| Error::Parse {
            line: i + 1,
            token: content.to_string(),
        })?;
        if !v.is_finite() {
            return Err(Error::Parse {
                line: i + 1,
                token: content.to_string(),
            });
        }
        out.push(v);
    }
    Ok(out)
}

pub fn load_dataset(path: &Path) -> Result<Vec<f64>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    parse_dataset(&text)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dataset_parsing() {
        assert_eq!(parse_dataset("1.0\n2.5\n").unwrap(), vec![1.0, 2.5]);
        assert_eq!(
            parse_dataset("# header\n\n3 # trailing\n  4\n").unwrap(),
            vec![3.0, 4.0]
        );
        assert_eq!(
            parse_dataset("1\nabc\n"),
            Err(Error::Parse {
                line: 2,
                token: "abc".into()
            })
        );
        assert!(parse_dataset("nan\n").is_err());
    }

    #[test]
    fn missing_file_is_io_error() {
        assert!(matches!(
            load_dataset(Path::new("/nonexistent/samples.txt")),
            Err(Error::Io { .. })
        ));
    }

    #[test]
    fn seeded_normal_sample() {
        let a = gen_normal_dataset(1000, 5.0, 2.0, 7).unwrap();
        let b = gen_normal_dataset(1000, 5.0, 2.0, 7).unwrap();
        assert_eq!(a, b);
        let (mean, sd) = normal_mle(&a);
        // three standard errors: 3 * 2 / sqrt(1000) ~ 0.19, sd error ~ 0.13
        assert!((mean - 5.0).abs() < 0.2, "{mean}");
        assert!((sd - 2.0).abs() < 0.15, "{sd}");
        assert_eq!(gen_normal_dataset(1, 0.0, 1.0, 1).unwrap().len(), 1);
        assert_ne!(a, gen_normal_dataset(1000, 5.0, 2.0, 8).unwrap());
    }

    #[test]
    fn invalid_generator_arguments() {
        assert!(gen_normal_dataset(10, 0.0, 0.0, 1).is_err());
        assert!(gen_normal_dataset(0, 0.0, 1.0, 1).is_err());
    }

    #[test]
    fn registry_problems_build() {
        for info in REGISTRY {
            let data = Arc::new(vec![1.0, 2.0, 3.0]);
            let p = build_problem(info.name, 3, Some(data), Duration::ZERO).unwrap();
            assert_eq!(p.dim, info.fixed_dim.unwrap_or(3));
        }
        assert!(build_problem("normal_negll", 2, None, Duration::ZERO).is_err());
        assert!(build_problem("rosenbrock", 1, None, Duration::ZERO).is_err());
        assert!(lookup("nelder").is_err());
    }

    #[test]
    fn rosenbrock_minimum_and_negll_value() {
        let r = rosenbrock(3);
        assert_eq!((r.objective)(&[1.0, 1.0, 1.0]), 0.0);
        assert_eq!((r.gradient.unwrap())(&[1.0, 1.0, 1.0]), vec![0.0; 3]);

        // single observation at the mean: -log density = log(sd) + log(2 pi) / 2
        let p = normal_negll(Arc::new(vec![0.0])).unwrap();
        let v = (p.objective)(&[0.0, 1.0]);
        assert!((v - 0.5 * (2.0 * PI).ln()).abs() < 1e-15);
    }

    #[test]
    fn sleep_problem_values() {
        let p = sleep_quadratic(2, Duration::ZERO);
        assert_eq!((p.objective)(&[1.0, 2.0]), 5.0);
        assert_eq!((p.gradient.unwrap())(&[1.0, 2.0]), vec![2.0, 4.0]);
    }
}
