use std::collections::VecDeque;

use super::dot;

/// Recent curvature pairs `(s, y)` for the two-loop recursion.
#[derive(Debug, Clone)]
pub struct LbfgsHistory {
    capacity: usize,
    pairs: VecDeque<Pair>,
}

#[derive(Debug, Clone)]
struct Pair {
    s: Vec<f64>,
    y: Vec<f64>,
    rho: f64,
}

impl LbfgsHistory {
    pub fn new(capacity: usize) -> Self {
        Self {
            capacity: capacity.max(1),
            pairs: VecDeque::with_capacity(capacity),
        }
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn clear(&mut self) {
        self.pairs.clear();
    }

    /// Stores the pair unless it violates the curvature condition
    /// `s'y > eps * y'y`. Returns whether the pair was kept.
    pub fn push(&mut self, s: Vec<f64>, y: Vec<f64>) -> bool {
        let sy = dot(&s, &y);
        let yy = dot(&y, &y);
        if !(sy > f64::EPSILON * yy) || !sy.is_finite() {
            return false;
        }
        if self.pairs.len() == self.capacity {
            self.pairs.pop_front();
        }
        self.pairs.push_back(Pair {
            s,
            y,
            rho: 1.0 / sy,
        });
        true
    }

    /// Initial inverse-Hessian scale `s'y / y'y` of the newest pair, 1 when
    /// the history is empty.
    pub fn gamma(&self) -> f64 {
        self.pairs
            .back()
            .map(|p| 1.0 / (p.rho * dot(&p.y, &p.y)))
            .unwrap_or(1.0)
    }

    /// Quasi-Newton descent direction `-H g`.
    pub fn direction(&self, g: &[f64]) -> Vec<f64> {
        let mut q = g.to_vec();
        let mut alpha = vec![0.0; self.pairs.len()];
        for (k, p) in self.pairs.iter().enumerate().rev() {
            alpha[k] = p.rho * dot(&p.s, &q);
            axpy(-alpha[k], &p.y, &mut q);
        }
        let gamma = self.gamma();
        q.iter_mut().for_each(|v| *v *= gamma);
        for (k, p) in self.pairs.iter().enumerate() {
            let beta = p.rho * dot(&p.y, &q);
            axpy(alpha[k] - beta, &p.s, &mut q);
        }
        q.iter_mut().for_each(|v| *v = -*v);
        q
    }

    /// Direction restricted to the free coordinates: active components of the
    /// gradient are dropped before the recursion and zeroed afterwards.
    pub fn direction_on(&self, g: &[f64], active: &[bool]) -> Vec<f64> {
        let masked: Vec<f64> = g
            .iter()
            .zip(active)
            .map(|(&v, &a)| if a { 0.0 } else { v })
            .collect();
        let mut d = self.direction(&masked);
        for (v, &a) in d.iter_mut().zip(active) {
            if a {
                *v = 0.0;
            }
        }
        d
    }
}

fn axpy(a: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

/// Two-loop recursion over `history` applied to `gradient`.
pub fn lbfgs_direction(history: &LbfgsHistory, gradient: &[f64]) -> Vec<f64> {
    history.direction(gradient)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_history_is_steepest_descent() {
        let h = LbfgsHistory::new(5);
        assert_eq!(h.gamma(), 1.0);
        assert_eq!(lbfgs_direction(&h, &[2.0, -4.0]), vec![-2.0, 4.0]);
    }

    #[test]
    fn identity_quadratic_recovers_identity() {
        // f = x'x / 2 so y = s exactly
        let mut h = LbfgsHistory::new(5);
        assert!(h.push(vec![0.3, -1.1, 2.0], vec![0.3, -1.1, 2.0]));
        let d = lbfgs_direction(&h, &[1.0, 2.0, -3.0]);
        for (di, gi) in d.iter().zip([1.0, 2.0, -3.0]) {
            assert!((di + gi).abs() < 1e-14);
        }
    }

    #[test]
    fn two_pairs_reproduce_diagonal_inverse_hessian() {
        // f = x1^2 + 5 x2^2, Hessian diag(2, 10); pairs along the axes
        let mut h = LbfgsHistory::new(5);
        h.push(vec![1.0, 0.0], vec![2.0, 0.0]);
        h.push(vec![0.0, 1.0], vec![0.0, 10.0]);
        let d = h.direction(&[4.0, 20.0]);
        assert!((d[0] + 2.0).abs() < 1e-14);
        assert!((d[1] + 2.0).abs() < 1e-14);
    }

    #[test]
    fn negative_curvature_pair_is_skipped() {
        let mut h = LbfgsHistory::new(5);
        h.push(vec![1.0, 0.0], vec![2.0, 0.0]);
        let before = h.direction(&[1.0, 1.0]);
        assert!(!h.push(vec![1.0, 1.0], vec![-1.0, -1.0]));
        assert!(!h.push(vec![1.0, 0.0], vec![0.0, 1.0]));
        assert_eq!(h.len(), 1);
        assert_eq!(h.direction(&[1.0, 1.0]), before);
    }

    #[test]
    fn capacity_evicts_oldest() {
        let mut h = LbfgsHistory::new(2);
        for k in 1..=3 {
            h.push(vec![k as f64], vec![k as f64 * 2.0]);
        }
        assert_eq!(h.len(), 2);
        assert_eq!(h.gamma(), 0.5);
    }

    #[test]
    fn masked_direction_leaves_active_coordinates_alone() {
        let h = LbfgsHistory::new(3);
        let d = h.direction_on(&[1.0, -2.0], &[true, false]);
        assert_eq!(d, vec![0.0, 2.0]);
    }
}
