use super::dot;

/// Fletcher–Reeves direction `-g + beta * d_prev` with
/// `beta = g'g / g_prev'g_prev`. Without a previous step this is steepest
/// descent.
pub fn cg_direction(gradient: &[f64], previous: Option<(&[f64], &[f64])>) -> Vec<f64> {
    let Some((g_prev, d_prev)) = previous else {
        return gradient.iter().map(|g| -g).collect();
    };
    let denom = dot(g_prev, g_prev);
    let beta = if denom > 0.0 {
        dot(gradient, gradient) / denom
    } else {
        0.0
    };
    gradient
        .iter()
        .zip(d_prev)
        .map(|(g, d)| -g + beta * d)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_iteration_is_steepest_descent() {
        assert_eq!(cg_direction(&[2.0, 4.0], None), vec![-2.0, -4.0]);
    }

    #[test]
    fn unchanged_gradient_gives_unit_beta() {
        let g = [1.0, -3.0];
        let d_prev = [0.5, 0.25];
        assert_eq!(cg_direction(&g, Some((&g, &d_prev))), vec![-0.5, 3.25]);
    }

    #[test]
    fn exact_line_searches_finish_a_2d_quadratic_in_two_steps() {
        // f = x1^2 + 10 x2^2, A = diag(2, 20); exact step -g'd / d'Ad
        let a = [2.0, 20.0];
        let grad = |x: &[f64]| vec![a[0] * x[0], a[1] * x[1]];
        let mut x = vec![3.0, -1.5];
        let mut prev: Option<(Vec<f64>, Vec<f64>)> = None;
        for _ in 0..2 {
            let g = grad(&x);
            let d = cg_direction(
                &g,
                prev.as_ref().map(|(gp, dp)| (gp.as_slice(), dp.as_slice())),
            );
            let dad: f64 = d.iter().zip(&a).map(|(d, a)| d * a * d).sum();
            let step = -dot(&g, &d) / dad;
            for (xi, di) in x.iter_mut().zip(&d) {
                *xi += step * di;
            }
            prev = Some((g, d));
        }
        let g = grad(&x);
        assert!(g.iter().all(|v| v.abs() < 1e-12), "{g:?}");
    }
}
