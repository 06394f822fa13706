//! Damped Newton maximization of smooth concave functions.

use nalgebra::{DMatrix, DVector};

use crate::linalg;

/// Value, gradient and Hessian at a point; `None` outside the domain.
pub type Evaluation = Option<(f64, DVector<f64>, DMatrix<f64>)>;

#[derive(Debug, Clone, Copy)]
pub struct NewtonOptions {
    /// Stop when the gradient sup-norm is at most this.
    pub gtol: f64,
    pub max_iter: usize,
    /// Armijo sufficient-increase constant.
    pub armijo: f64,
    /// Initial cap on the sup-norm of a step. The cap grows fourfold after
    /// every accepted capped step, so it only tames the first iterations of
    /// nearly linear objectives.
    pub max_step: f64,
}

impl Default for NewtonOptions {
    fn default() -> Self {
        NewtonOptions { gtol: 1e-10, max_iter: 500, armijo: 1e-4, max_step: f64::INFINITY }
    }
}

#[derive(Debug, Clone)]
pub struct NewtonResult {
    pub x: DVector<f64>,
    pub value: f64,
    pub grad: DVector<f64>,
    pub hess: DMatrix<f64>,
    pub iterations: usize,
    pub converged: bool,
}

impl NewtonResult {
    pub fn grad_norm(&self) -> f64 {
        if self.grad.is_empty() {
            0.0
        } else {
            self.grad.amax()
        }
    }
}

/// Maximizes a concave function from `x0`, which must lie in the domain.
///
/// Newton directions come from the negated Hessian (Cholesky, with a
/// pseudo-inverse fallback); steps are halved until they stay in the
/// domain and satisfy Armijo. Once the predicted increase drops below the
/// floating-point resolution of the objective, a full step is accepted if
/// it reduces the gradient instead.
pub fn maximize<F>(x0: DVector<f64>, mut eval: F, opts: NewtonOptions) -> Option<NewtonResult>
where
    F: FnMut(&DVector<f64>) -> Evaluation,
{
    let (mut value, mut grad, mut hess) = eval(&x0)?;
    let mut x = x0;
    let dim = x.len();
    if dim == 0 {
        return Some(NewtonResult { x, value, grad, hess, iterations: 0, converged: true });
    }
    let mut radius = opts.max_step;
    for it in 0..opts.max_iter {
        if grad.amax() <= opts.gtol {
            return Some(NewtonResult { x, value, grad, hess, iterations: it, converged: true });
        }
        let neg_h = -&hess;
        let mut dir = linalg::solve_spd(&neg_h, &grad);
        let mut slope = grad.dot(&dir);
        let mut fallback = false;
        if !(slope > 0.0) || dir.iter().any(|v| !v.is_finite()) {
            dir = grad.clone();
            slope = grad.dot(&dir);
            fallback = radius.is_finite();
        }
        let capped = fallback || dir.amax() > radius;
        if capped {
            let f = radius / dir.amax();
            dir *= f;
            slope *= f;
        }
        let gnorm = grad.amax();
        // Rounding level of the objective, absolute near zero.
        let noise = 1e-13 * (value.abs() + 1.0);
        let mut t = 1.0;
        let mut accepted = None;
        while t > 1e-20 {
            let trial = &x + &dir * t;
            if let Some((v, g, h)) = eval(&trial) {
                if v.is_finite() && v >= value + opts.armijo * t * slope {
                    accepted = Some((trial, v, g, h));
                    break;
                }
                if t == 1.0 && slope <= noise && g.amax() < 0.5 * gnorm && v >= value - noise {
                    accepted = Some((trial, v, g, h));
                    break;
                }
            }
            t *= 0.5;
        }
        match accepted {
            Some((nx, v, g, h)) => {
                if capped && t == 1.0 {
                    radius *= 4.0;
                }
                x = nx;
                value = v;
                grad = g;
                hess = h;
            }
            None => {
                // No representable progress left.
                let converged = grad.amax() <= opts.gtol;
                return Some(NewtonResult { x, value, grad, hess, iterations: it, converged });
            }
        }
    }
    let converged = grad.amax() <= opts.gtol;
    Some(NewtonResult { x, value, grad, hess, iterations: opts.max_iter, converged })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn maximizes_log_sum_exp_negation() {
        // f(x) = -ln(e^{x0} + e^{-x0} + e^{x1 - 1} + e^{-x1}) has a unique maximizer.
        let eval = |x: &DVector<f64>| {
            let t = [x[0].exp(), (-x[0]).exp(), (x[1] - 1.0).exp(), (-x[1]).exp()];
            let s: f64 = t.iter().sum();
            let g0 = -(t[0] - t[1]) / s;
            let g1 = -(t[2] - t[3]) / s;
            let m0 = (t[0] + t[1]) / s;
            let m1 = (t[2] + t[3]) / s;
            let c = (t[0] - t[1]) * (t[2] - t[3]) / (s * s);
            let h = DMatrix::from_row_slice(2, 2, &[-(m0 - g0 * g0), c, c, -(m1 - g1 * g1)]);
            Some((-s.ln(), DVector::from_vec(vec![g0, g1]), h))
        };
        let r = maximize(DVector::from_vec(vec![3.0, -4.0]), eval, NewtonOptions::default()).unwrap();
        assert!(r.converged);
        assert!(r.x[0].abs() < 1e-9);
        assert!((r.x[1] - 0.5).abs() < 1e-9);
    }

    #[test]
    fn respects_domain() {
        // max ln(x) - x on x > 0, started far to the right.
        let eval = |x: &DVector<f64>| {
            if x[0] <= 0.0 {
                return None;
            }
            Some((
                x[0].ln() - x[0],
                DVector::from_vec(vec![1.0 / x[0] - 1.0]),
                DMatrix::from_element(1, 1, -1.0 / (x[0] * x[0])),
            ))
        };
        let r = maximize(DVector::from_vec(vec![50.0]), eval, NewtonOptions::default()).unwrap();
        assert!((r.x[0] - 1.0).abs() < 1e-10);
    }
}
