use crate::error::{Error, Result};

/// Box constraints `lower <= x <= upper`. Infinite entries mean the side is
/// unconstrained.
#[derive(Debug, Clone, PartialEq)]
pub struct Bounds {
    lower: Vec<f64>,
    upper: Vec<f64>,
}

impl Bounds {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        if lower.len() != upper.len() {
            return Err(Error::Dimension {
                expected: lower.len(),
                got: upper.len(),
            });
        }
        for (i, (&l, &u)) in lower.iter().zip(&upper).enumerate() {
            if l.is_nan() || u.is_nan() {
                return Err(Error::Config(format!("bound {i} is NaN")));
            }
            if l > u {
                return Err(Error::Config(format!(
                    "lower bound {l} exceeds upper bound {u} for coordinate {i}"
                )));
            }
            if l == f64::INFINITY || u == f64::NEG_INFINITY {
                return Err(Error::Config(format!(
                    "bounds for coordinate {i} exclude every finite value"
                )));
            }
        }
        Ok(Self { lower, upper })
    }

    pub fn unbounded(dim: usize) -> Self {
        Self {
            lower: vec![f64::NEG_INFINITY; dim],
            upper: vec![f64::INFINITY; dim],
        }
    }

    /// Builds bounds from optional sides, filling the missing side with
    /// infinities. Returns `None` when neither side is given.
    pub fn from_parts(
        dim: usize,
        lower: Option<Vec<f64>>,
        upper: Option<Vec<f64>>,
    ) -> Result<Option<Self>> {
        if lower.is_none() && upper.is_none() {
            return Ok(None);
        }
        let lower = lower.unwrap_or_else(|| vec![f64::NEG_INFINITY; dim]);
        let upper = upper.unwrap_or_else(|| vec![f64::INFINITY; dim]);
        for side in [&lower, &upper] {
            if side.len() != dim {
                return Err(Error::Dimension {
                    expected: dim,
                    got: side.len(),
                });
            }
        }
        Self::new(lower, upper).map(Some)
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.len() == self.dim()
            && x.iter()
                .zip(self.lower.iter().zip(&self.upper))
                .all(|(&v, (&l, &u))| l <= v && v <= u)
    }

    pub fn project(&self, x: &mut [f64]) {
        for (v, (&l, &u)) in x.iter_mut().zip(self.lower.iter().zip(&self.upper)) {
            *v = v.clamp(l, u);
        }
    }

    /// Projected gradient: components that would push `x` out of the box are
    /// truncated at the distance to the bound.
    pub fn projected_gradient(&self, x: &[f64], g: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(g)
            .zip(self.lower.iter().zip(&self.upper))
            .map(|((&xi, &gi), (&l, &u))| {
                if gi < 0.0 {
                    gi.max(xi - u)
                } else if gi > 0.0 {
                    gi.min(xi - l)
                } else {
                    0.0
                }
            })
            .collect()
    }

    /// Coordinates sitting on a bound whose descent direction `-g` points out
    /// of the box. A coordinate on its bound with an inward-pointing gradient
    /// stays free.
    pub fn active_set(&self, x: &[f64], g: &[f64]) -> Vec<bool> {
        x.iter()
            .zip(g)
            .zip(self.lower.iter().zip(&self.upper))
            .map(|((&xi, &gi), (&l, &u))| (xi <= l && gi > 0.0) || (xi >= u && gi < 0.0))
            .collect()
    }
}
