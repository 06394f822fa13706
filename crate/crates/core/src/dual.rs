//! The dual problem
//! `min_{lambda > 0, Q} lambda (x - E_Q[B]) + E[Phi(lambda dQ/dP)]`
//! over the martingale polytope.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::finite_market::{relative_entropy, FiniteMarket, MartingaleMeasure, POLYTOPE_TOL};
use crate::newton::{self, NewtonOptions};
use crate::primal;
use crate::roots::safeguarded_newton;
use crate::utility::UtilityFunction;

/// Search interval for the multiplier.
pub const LAMBDA_MIN: f64 = 1e-12;
pub const LAMBDA_MAX: f64 = 1e12;
/// Floor on state probabilities while iterating.
pub const Q_FLOOR: f64 = 1e-14;
/// Target for both first-order residuals.
pub const DUAL_TOL: f64 = 1e-9;
const MAX_OUTER: usize = 500;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DualSolution {
    pub lambda_star: f64,
    pub q_star: MartingaleMeasure,
    pub value: f64,
    /// `|E[(dQ/dP) Phi'(lambda dQ/dP)] + x - E_Q[B]|`, relative to the data scale.
    pub foc_lambda_residual: f64,
    /// `E_Q*[v] - min_Q E_Q[v]` with `v = Phi'(lambda dQ*/dP) - B`, relative to the data scale.
    pub foc_q_residual: f64,
    /// `-Phi'(lambda dQ*/dP) + B`.
    pub f_b_recovered: Vec<f64>,
    pub primal_value: f64,
    pub duality_gap: f64,
    /// Exponential utility only: `-exp(-H(Q*|P) - gamma (x - E_Q*[B]))`.
    pub entropy_form_value: Option<f64>,
    pub outer_iterations: usize,
}

/// The unique `lambda > 0` with `E[(dQ/dP) Phi'(lambda dQ/dP)] + c = 0`.
pub fn lambda_foc(u: &UtilityFunction, q_density: &[f64], probs: &[f64], c: f64) -> Result<f64> {
    if q_density.len() != probs.len() {
        return Err(Error::Invalid("density and probabilities differ in length".into()));
    }
    if q_density.iter().any(|d| !(*d >= 0.0)) {
        return Err(Error::Invalid("densities must be nonnegative".into()));
    }
    let fdf = |t: f64| {
        let lam = t.exp();
        let mut f = c;
        let mut df = 0.0;
        for (d, p) in q_density.iter().zip(probs) {
            if *d > 0.0 {
                let y = lam * d;
                f += p * d * u.conjugate_prime(y);
                df += p * d * y * u.conjugate_second(y);
            }
        }
        (f, df)
    };
    let (lo, hi) = (LAMBDA_MIN.ln(), LAMBDA_MAX.ln());
    let (flo, _) = fdf(lo);
    let (fhi, _) = fdf(hi);
    if !(flo <= 0.0 && fhi >= 0.0) {
        return Err(Error::LambdaBracketFailure);
    }
    let ftol = 1e-14 * (1.0 + c.abs());
    let root = safeguarded_newton(fdf, lo, hi, 0.0, ftol, 400).ok_or(Error::LambdaBracketFailure)?;
    Ok(root.x.exp())
}

fn unit_scale(claim: &[f64], x: f64) -> f64 {
    1.0 + x.abs() + claim.iter().fold(0.0f64, |m, b| m.max(b.abs()))
}

/// Dual objective at `(lambda, q)`.
pub fn dual_objective(u: &UtilityFunction, probs: &[f64], claim: &[f64], x: f64, lambda: f64, q: &[f64]) -> f64 {
    let eq_b: f64 = q.iter().zip(claim).map(|(q, b)| q * b).sum();
    let mut v = lambda * (x - eq_b);
    for (qi, p) in q.iter().zip(probs) {
        v += p * u.conjugate_f64(lambda * qi / p);
    }
    v
}

/// `E_Q*[v] - min_Q E_Q[v]` over the polytope, `v = Phi'(lambda q/p) - B`.
pub fn variational_residual(m: &FiniteMarket, u: &UtilityFunction, claim: &[f64], lambda: f64, q: &[f64]) -> Result<f64> {
    let v = gradient_direction(u, m.probs(), claim, lambda, q);
    let at_q: f64 = q.iter().zip(&v).map(|(a, b)| a * b).sum();
    let (min, _) = m.polytope().lp_min(&v)?;
    Ok((at_q - min).max(0.0))
}

/// The same residual against given comparison measures.
pub fn variational_residual_against(u: &UtilityFunction, probs: &[f64], claim: &[f64], lambda: f64, q: &[f64], others: &[Vec<f64>]) -> f64 {
    let v = gradient_direction(u, probs, claim, lambda, q);
    let at_q: f64 = q.iter().zip(&v).map(|(a, b)| a * b).sum();
    others
        .iter()
        .map(|o| at_q - o.iter().zip(&v).map(|(a, b)| a * b).sum::<f64>())
        .fold(0.0f64, f64::max)
}

fn gradient_direction(u: &UtilityFunction, probs: &[f64], claim: &[f64], lambda: f64, q: &[f64]) -> Vec<f64> {
    q.iter()
        .zip(probs)
        .zip(claim)
        .map(|((qi, p), b)| u.conjugate_prime(lambda * qi.max(Q_FLOOR) / p) - b)
        .collect()
}

/// Minimizes `G(q) = E[Phi(lambda q/p)] / lambda - E_q[B]` along the polytope from `q`.
fn q_step(m: &FiniteMarket, u: &UtilityFunction, claim: &[f64], lambda: f64, q: &[f64], unit: f64) -> Vec<f64> {
    let probs = m.probs();
    let null: &DMatrix<f64> = m.polytope().null_basis();
    let k = null.ncols();
    if k == 0 {
        return q.to_vec();
    }
    let base = q.to_vec();
    let eval = |z: &DVector<f64>| -> newton::Evaluation {
        let qq = m.polytope().from_coordinates(&base, z);
        if qq.iter().any(|v| !(*v >= Q_FLOOR)) {
            return None;
        }
        let n = qq.len();
        let mut val = 0.0;
        let mut g = DVector::zeros(n);
        let mut h = DVector::zeros(n);
        for i in 0..n {
            let y = lambda * qq[i] / probs[i];
            val += probs[i] * u.conjugate_f64(y) / lambda - qq[i] * claim[i];
            g[i] = u.conjugate_prime(y) - claim[i];
            h[i] = lambda * u.conjugate_second(y) / probs[i];
        }
        let gz = null.transpose() * g;
        let hz = null.transpose() * DMatrix::from_diagonal(&h) * null;
        Some((-val / unit, -gz / unit, -hz / unit))
    };
    let opts = NewtonOptions { gtol: 1e-13, max_iter: 200, ..NewtonOptions::default() };
    match newton::maximize(DVector::zeros(k), eval, opts) {
        Some(r) => m.polytope().from_coordinates(&base, &r.x),
        None => base,
    }
}

pub fn minimize_dual(m: &FiniteMarket, u: &UtilityFunction, claim: &[f64], x: f64) -> Result<DualSolution> {
    m.check_claim(claim)?;
    let probs = m.probs();
    let unit = unit_scale(claim, x);
    let mut q = m.polytope().interior_point().to_vec();
    let density = |q: &[f64]| -> Vec<f64> { q.iter().zip(probs).map(|(a, p)| a / p).collect() };
    let c_of = |q: &[f64]| x - q.iter().zip(claim).map(|(a, b)| a * b).sum::<f64>();
    let mut lambda = lambda_foc(u, &density(&q), probs, c_of(&q))?;
    let mut outer = 0;
    loop {
        outer += 1;
        let q_new = q_step(m, u, claim, lambda, &q, unit);
        let lambda_new = lambda_foc(u, &density(&q_new), probs, c_of(&q_new))?;
        let moved = q_new.iter().zip(&q).fold(0.0f64, |a, (s, t)| a.max((s - t).abs()));
        let dl = (lambda_new - lambda).abs() / lambda;
        q = q_new;
        lambda = lambda_new;
        if (moved <= 1e-15 && dl <= 1e-14) || outer >= MAX_OUTER {
            break;
        }
    }

    let foc_q_residual = variational_residual(m, u, claim, lambda, &q)? / unit;
    let dens = density(&q);
    let foc_lambda_residual = {
        let s: f64 = dens.iter().zip(probs).filter(|(d, _)| **d > 0.0).map(|(d, p)| p * d * u.conjugate_prime(lambda * d)).sum();
        (s + c_of(&q)).abs() / unit
    };
    if !(foc_q_residual <= DUAL_TOL && foc_lambda_residual <= DUAL_TOL) {
        return Err(Error::NonConvergence {
            what: "dual alternating minimization",
            iterations: outer,
            residual: foc_q_residual.max(foc_lambda_residual),
        });
    }
    let value = dual_objective(u, probs, claim, x, lambda, &q);
    let f_b_recovered: Vec<f64> = dens.iter().zip(claim).map(|(d, b)| -u.conjugate_prime(lambda * d) + b).collect();
    let entropy_form_value = u.gamma().map(|g| -(-relative_entropy(&q, probs) - g * c_of(&q)).exp());
    let primal_value = primal::maximize(m, u, claim, x)?.value;
    let q_star = MartingaleMeasure::new(m, q)?;
    Ok(DualSolution {
        lambda_star: lambda,
        q_star,
        value,
        foc_lambda_residual,
        foc_q_residual,
        f_b_recovered,
        primal_value,
        duality_gap: (primal_value - value).abs(),
        entropy_form_value,
        outer_iterations: outer,
    })
}

/// `|primal value - dual value|`.
pub fn duality_gap(m: &FiniteMarket, u: &UtilityFunction, claim: &[f64], x: f64) -> Result<f64> {
    Ok(minimize_dual(m, u, claim, x)?.duality_gap)
}

/// The martingale measure of least relative entropy, read off the optimal
/// exponential-utility strategy: `q_i ~ p_i exp(-gamma h* . delta_s_i)`.
pub fn minimal_entropy_measure(m: &FiniteMarket, gamma: f64) -> Result<MartingaleMeasure> {
    let u = UtilityFunction::exponential(gamma)?;
    let n = m.n_states();
    let sol = primal::maximize(m, &u, &vec![0.0; n], 0.0)?;
    let gains = m.gains(&sol.h_star);
    let a: Vec<f64> = m.probs().iter().zip(&gains).map(|(p, g)| p.ln() - gamma * g).collect();
    let mx = a.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = a.iter().map(|v| (v - mx).exp()).collect();
    let s: f64 = e.iter().sum();
    let q: Vec<f64> = e.iter().map(|v| v / s).collect();
    let v: Vec<f64> = q.iter().zip(m.probs()).map(|(q, p)| (q / p).ln()).collect();
    let at_q: f64 = q.iter().zip(&v).map(|(a, b)| a * b).sum();
    let (min, _) = m.polytope().lp_min(&v)?;
    let residual = (at_q - min).max(0.0);
    if residual > DUAL_TOL || !m.polytope().contains(&q, POLYTOPE_TOL) {
        return Err(Error::NonConvergence { what: "minimal entropy measure", iterations: sol.iterations, residual });
    }
    MartingaleMeasure::new(m, q)
}

/// Linear sum `E_Q[f - x]`, zero at the optimum.
pub fn budget_residual(sol: &DualSolution, x: f64) -> f64 {
    sol.q_star.expect(&sol.f_b_recovered) - x
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn binary(p: f64) -> FiniteMarket {
        FiniteMarket::new(vec![p, 1.0 - p], vec![vec![1.0], vec![-1.0]], None, 0.0).unwrap()
    }

    fn trinomial() -> FiniteMarket {
        FiniteMarket::new(vec![0.2, 0.5, 0.3], vec![vec![1.0], vec![0.0], vec![-1.0]], None, 0.0).unwrap()
    }

    fn expo(g: f64) -> UtilityFunction {
        UtilityFunction::exponential(g).unwrap()
    }

    #[test]
    fn lambda_closed_form_examples() {
        let p = [0.3, 0.7];
        assert_relative_eq!(lambda_foc(&expo(1.0), &[1.0, 1.0], &p, 0.0).unwrap(), 1.0, epsilon = 1e-13);
        assert_relative_eq!(lambda_foc(&expo(2.0), &[1.0, 1.0], &p, 0.0).unwrap(), 2.0, epsilon = 1e-13);
    }

    #[test]
    fn lambda_shift_in_c() {
        let p = [0.3, 0.7];
        let d = [0.5 / 0.3, 0.5 / 0.7];
        let g = 1.7;
        let a = lambda_foc(&expo(g), &d, &p, 0.4).unwrap();
        let b = lambda_foc(&expo(g), &d, &p, 0.4 + 0.25).unwrap();
        assert!((b.ln() - a.ln() + g * 0.25).abs() < 1e-10);
        // gamma exp(-gamma c - H)
        let h = 0.5 * (0.5f64 / 0.3).ln() + 0.5 * (0.5f64 / 0.7).ln();
        assert_relative_eq!(a, g * (-g * 0.4 - h).exp(), max_relative = 1e-12);
    }

    #[test]
    fn lambda_for_custom_utility_solves_the_condition() {
        let u = UtilityFunction::log_quadratic().unwrap();
        let p = [0.25, 0.25, 0.5];
        let d = [1.2, 0.4, 1.2];
        let lam = lambda_foc(&u, &d, &p, -0.3).unwrap();
        let s: f64 = d.iter().zip(&p).map(|(d, p)| p * d * u.conjugate_prime(lam * d)).sum();
        assert!((s - 0.3).abs() < 1e-10);
    }

    #[test]
    fn symmetric_binary() {
        let s = minimize_dual(&binary(0.5), &expo(1.0), &[0.0, 0.0], 0.0).unwrap();
        assert_relative_eq!(s.q_star.q()[0], 0.5, epsilon = 1e-12);
        assert_relative_eq!(s.value, -1.0, epsilon = 1e-12);
        assert!(s.duality_gap <= 1e-9);
    }

    #[test]
    fn replicable_claim_has_the_same_value() {
        let m = binary(0.5);
        let a = minimize_dual(&m, &expo(1.0), &[1.0, -1.0], 0.0).unwrap();
        assert_relative_eq!(a.value, -1.0, epsilon = 1e-12);
        assert!(a.q_star.expect(&[1.0, -1.0]).abs() < 1e-14);
    }

    #[test]
    fn constant_claim_shifts_wealth() {
        let m = trinomial();
        let a = minimize_dual(&m, &expo(1.0), &[0.7; 3], 0.2).unwrap();
        let b = minimize_dual(&m, &expo(1.0), &[0.0; 3], 0.2 - 0.7).unwrap();
        assert_relative_eq!(a.lambda_star, b.lambda_star, max_relative = 1e-10);
        for (x, y) in a.q_star.q().iter().zip(b.q_star.q()) {
            assert!((x - y).abs() < 1e-10);
        }
    }

    #[test]
    fn minimal_entropy_examples() {
        let m = binary(0.7);
        let q = minimal_entropy_measure(&m, 1.0).unwrap();
        assert_relative_eq!(q.q()[0], 0.5, epsilon = 1e-12);
        let h = 0.5 * (0.5f64 / 0.7).ln() + 0.5 * (0.5f64 / 0.3).ln();
        assert_relative_eq!(q.entropy(m.probs()), h, epsilon = 1e-12);
        // Complete market: independent of gamma.
        let q2 = minimal_entropy_measure(&m, 3.0).unwrap();
        assert_relative_eq!(q2.q()[1], 0.5, epsilon = 1e-12);
        // P already a martingale measure.
        let m = FiniteMarket::new(vec![0.25, 0.5, 0.25], vec![vec![1.0], vec![0.0], vec![-1.0]], None, 0.0).unwrap();
        let q = minimal_entropy_measure(&m, 1.0).unwrap();
        assert!(q.entropy(m.probs()).abs() < 1e-14);
    }

    #[test]
    fn minimal_entropy_agrees_with_dual_at_zero_claim() {
        let m = trinomial();
        let a = minimal_entropy_measure(&m, 1.0).unwrap();
        let b = minimize_dual(&m, &expo(1.0), &[0.0; 3], 0.0).unwrap();
        for (x, y) in a.q().iter().zip(b.q_star.q()) {
            assert!((x - y).abs() < 1e-9);
        }
    }

    #[test]
    fn recovered_wealth_matches_primal_and_budget() {
        let m = trinomial();
        let u = expo(0.8);
        let claim = [1.0, -0.5, 0.3];
        let d = minimize_dual(&m, &u, &claim, 0.4).unwrap();
        let p = primal::maximize(&m, &u, &claim, 0.4).unwrap();
        for (a, b) in d.f_b_recovered.iter().zip(&p.f_b) {
            assert!((a - b).abs() < 1e-7);
        }
        assert!(budget_residual(&d, 0.4).abs() < 1e-8);
        assert!((d.entropy_form_value.unwrap() - d.value).abs() < 1e-9);
    }

    #[test]
    fn custom_utilities_close_the_gap() {
        let m = FiniteMarket::new(vec![0.1, 0.3, 0.4, 0.2], vec![vec![1.0, 0.5], vec![-0.5, 1.0], vec![0.2, -1.0], vec![-1.0, 0.1]], None, 0.0).unwrap();
        let claim = [0.3, -0.2, 0.8, 0.0];
        for u in [UtilityFunction::log_quadratic().unwrap(), UtilityFunction::exp_sum(&[(0.5, 1.0), (0.5, 2.0)]).unwrap()] {
            let d = minimize_dual(&m, &u, &claim, 0.5).unwrap();
            assert!(d.duality_gap < 1e-8, "{}: gap {}", u.name(), d.duality_gap);
            assert!(d.foc_q_residual <= DUAL_TOL);
        }
    }

    #[test]
    fn random_points_do_not_beat_the_optimum() {
        use rand::SeedableRng;
        let m = FiniteMarket::new(vec![0.1, 0.3, 0.4, 0.2], vec![vec![1.0], vec![-0.5], vec![0.2], vec![-1.0]], None, 0.0).unwrap();
        let u = expo(1.0);
        let claim = [0.3, -0.2, 0.8, 0.0];
        let d = minimize_dual(&m, &u, &claim, 0.0).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let pts: Vec<Vec<f64>> = (0..50).map(|_| m.polytope().random_point(&mut rng, 10)).collect();
        let r = variational_residual_against(&u, m.probs(), &claim, d.lambda_star, d.q_star.q(), &pts);
        assert!(r <= 1e-8);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn weak_duality(lam in 0.01f64..10.0, t in 0.0f64..1.0, h in -2.0f64..2.0) {
            // Any feasible dual point bounds any feasible primal point from above.
            let m = trinomial();
            let u = expo(1.0);
            let claim = [0.5, 0.0, -0.5];
            let v = m.polytope().vertices().unwrap();
            let q: Vec<f64> = v[0].iter().zip(&v[1]).map(|(a, b)| t * a + (1.0 - t) * b).collect();
            let d = dual_objective(&u, m.probs(), &claim, 0.1, lam, &q);
            let gains = m.gains(&[h]);
            let p: f64 = m.probs().iter().zip(&gains).zip(&claim).map(|((p, g), b)| p * u.u(0.1 + g - b)).sum();
            prop_assert!(d >= p - 1e-9);
        }
    }
}
