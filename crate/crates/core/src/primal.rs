//! Expected-utility maximization over trading strategies,
//! `U_B(x) = sup_h E[u(x + h . delta_s - B)]`.

use log::warn;
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::finite_market::FiniteMarket;
use crate::linalg;
use crate::newton::{self, NewtonOptions};
use crate::utility::{UtilityFunction, UtilityKind};

/// Gradient residual accepted as an interior optimum.
pub const PRIMAL_ACCEPT_TOL: f64 = 1e-8;
/// First Newton steps may change a state's utility exponent by at most this.
const STEP_EXPONENT: f64 = 8.0;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PrimalSolution {
    pub h_star: Vec<f64>,
    /// `U_B(x)`. May underflow to `-inf` for exponential utility at extreme
    /// claim sizes; `log_neg_value` stays accurate there.
    pub value: f64,
    /// `ln(-value)` when the value is negative (always so for exponential utility).
    pub log_neg_value: Option<f64>,
    /// Optimal terminal wealth before the claim, `x + h* . delta_s`.
    pub f_b: Vec<f64>,
    /// Sup-norm of the gradient in h, relative to the marginal utility scale.
    pub gradient_residual: f64,
    /// False when h* is not unique (redundant assets or flat utility).
    pub unique: bool,
    /// `E[u'(x + h* . delta_s - B)]`, the slope of the value in x.
    pub marginal: f64,
    pub iterations: usize,
    /// Assets whose increments vanish in every state; their position is 0.
    pub dropped_assets: Vec<usize>,
}

#[derive(Debug, Clone, Default)]
pub struct PrimalOptions {
    pub newton: NewtonOptions,
    pub warm_start: Option<Vec<f64>>,
}

pub fn maximize(m: &FiniteMarket, u: &UtilityFunction, claim: &[f64], x: f64) -> Result<PrimalSolution> {
    maximize_with(m, u, claim, x, &PrimalOptions::default())
}

pub fn maximize_with(m: &FiniteMarket, u: &UtilityFunction, claim: &[f64], x: f64, opts: &PrimalOptions) -> Result<PrimalSolution> {
    m.check_claim(claim)?;
    if !x.is_finite() {
        return Err(Error::Invalid(format!("initial wealth must be finite, got {x}")));
    }
    let ds = m.delta_s();
    let (n, d) = (ds.nrows(), ds.ncols());
    let kept: Vec<usize> = (0..d).filter(|&j| ds.column(j).iter().any(|v| *v != 0.0)).collect();
    let dropped: Vec<usize> = (0..d).filter(|j| !kept.contains(j)).collect();
    if !dropped.is_empty() {
        warn!("dropping assets with identically zero increments: {dropped:?}");
    }
    let red = DMatrix::from_fn(n, kept.len(), |i, k| ds[(i, kept[k])]);
    let x0 = match &opts.warm_start {
        Some(h) if h.len() == d => DVector::from_iterator(kept.len(), kept.iter().map(|&j| h[j])),
        Some(h) => return Err(Error::Invalid(format!("warm start has {} entries for {d} assets", h.len()))),
        None => DVector::zeros(kept.len()),
    };
    let scale = red.amax().max(f64::MIN_POSITIVE);
    let probs = m.probs();

    let (hk, iterations) = match u.kind() {
        UtilityKind::Exponential { gamma } => {
            // Maximize -ln E[exp(-gamma (h.dS - B))], scaled so the gradient is a
            // weighted mean of increments relative to their size.
            let s = 1.0 / (gamma * scale);
            let mut nopts = opts.newton;
            nopts.max_step = nopts.max_step.min(STEP_EXPONENT / (gamma * scale));
            let eval = |h: &DVector<f64>| exp_objective(probs, &red, claim, gamma, h).map(|(l, g, hs)| (-l * s, -g * s, -hs * s));
            run_newton(x0, eval, nopts)?
        }
        UtilityKind::Custom => {
            let base: f64 = probs.iter().zip(claim).map(|(p, b)| p * u.u_prime(x - b)).sum();
            let s = 1.0 / (base.max(f64::MIN_POSITIVE) * scale);
            // Local absolute risk aversion sets the natural step length.
            let aversion = claim.iter().fold(0.0f64, |a, b| a.max(-u.u_second(x - b) / u.u_prime(x - b)));
            let mut nopts = opts.newton;
            if aversion.is_finite() && aversion > 0.0 {
                nopts.max_step = nopts.max_step.min(STEP_EXPONENT / (aversion * scale));
            }
            let eval = |h: &DVector<f64>| generic_objective(probs, &red, claim, x, u, h).map(|(v, g, hs)| (v * s, g * s, hs * s));
            run_newton(x0, eval, nopts)?
        }
    };

    let mut h_star = vec![0.0; d];
    for (k, &j) in kept.iter().enumerate() {
        h_star[j] = hk[k];
    }
    let gains = &red * &hk;
    let f_b: Vec<f64> = (0..n).map(|i| x + gains[i]).collect();
    let wealth: Vec<f64> = f_b.iter().zip(claim).map(|(f, b)| f - b).collect();

    let (value, log_neg_value, marginal) = match u.kind() {
        UtilityKind::Exponential { gamma } => {
            let (l, _, _) = exp_objective(probs, &red, claim, gamma, &hk).expect("finite at the optimum");
            let lnv = l - gamma * x;
            (-lnv.exp(), Some(lnv), gamma * lnv.exp())
        }
        UtilityKind::Custom => {
            let v: f64 = probs.iter().zip(&wealth).map(|(p, w)| p * u.u(*w)).sum();
            let mg: f64 = probs.iter().zip(&wealth).map(|(p, w)| p * u.u_prime(*w)).sum();
            (v, (v < 0.0).then(|| (-v).ln()), mg)
        }
    };

    // Gradient E[u'(w) dS] / E[u'(w)], free of the utility's absolute scale.
    let gradient_residual = {
        let weights: Vec<f64> = match u.kind() {
            UtilityKind::Exponential { gamma } => softmax(&exp_exponents(probs, &red, claim, gamma, &hk)),
            UtilityKind::Custom => {
                let w: Vec<f64> = probs.iter().zip(&wealth).map(|(p, w)| p * u.u_prime(*w)).collect();
                let s: f64 = w.iter().sum();
                w.iter().map(|v| v / s).collect()
            }
        };
        let mut r = 0.0f64;
        for k in 0..red.ncols() {
            let g: f64 = (0..n).map(|i| weights[i] * red[(i, k)]).sum();
            r = r.max(g.abs() / scale);
        }
        r
    };
    if !(gradient_residual <= PRIMAL_ACCEPT_TOL) {
        return Err(Error::NonConvergence { what: "primal Newton", iterations, residual: gradient_residual });
    }

    let full_rank = linalg::rank(&red) == red.ncols();
    let strictly_concave = match u.kind() {
        UtilityKind::Exponential { .. } => true,
        UtilityKind::Custom => wealth.iter().all(|w| u.u_second(*w) < 0.0),
    };
    Ok(PrimalSolution {
        h_star,
        value,
        log_neg_value,
        f_b,
        gradient_residual,
        unique: full_rank && strictly_concave,
        marginal,
        iterations,
        dropped_assets: dropped,
    })
}

fn run_newton<F>(x0: DVector<f64>, eval: F, opts: NewtonOptions) -> Result<(DVector<f64>, usize)>
where
    F: FnMut(&DVector<f64>) -> newton::Evaluation,
{
    let r = newton::maximize(x0, eval, opts).ok_or_else(|| Error::Invalid("starting strategy outside the domain".into()))?;
    Ok((r.x, r.iterations))
}

fn exp_exponents(probs: &[f64], ds: &DMatrix<f64>, claim: &[f64], gamma: f64, h: &DVector<f64>) -> Vec<f64> {
    let gains = ds * h;
    (0..probs.len()).map(|i| probs[i].ln() - gamma * (gains[i] - claim[i])).collect()
}

fn softmax(a: &[f64]) -> Vec<f64> {
    let mx = a.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = a.iter().map(|v| (v - mx).exp()).collect();
    let s: f64 = e.iter().sum();
    e.iter().map(|v| v / s).collect()
}

/// `L(h) = ln E[exp(-gamma (h.dS - B))]` with gradient and Hessian.
fn exp_objective(probs: &[f64], ds: &DMatrix<f64>, claim: &[f64], gamma: f64, h: &DVector<f64>) -> newton::Evaluation {
    let a = exp_exponents(probs, ds, claim, gamma, h);
    let mx = a.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !mx.is_finite() {
        return None;
    }
    let w = softmax(&a);
    let l = mx + a.iter().map(|v| (v - mx).exp()).sum::<f64>().ln();
    let d = ds.ncols();
    let mut mean = DVector::zeros(d);
    let mut second = DMatrix::zeros(d, d);
    for (i, wi) in w.iter().enumerate() {
        let row = ds.row(i).transpose();
        mean += &row * *wi;
        second += &row * row.transpose() * *wi;
    }
    let grad = &mean * (-gamma);
    let hess = (second - &mean * mean.transpose()) * (gamma * gamma);
    Some((l, grad, hess))
}

fn generic_objective(probs: &[f64], ds: &DMatrix<f64>, claim: &[f64], x: f64, u: &UtilityFunction, h: &DVector<f64>) -> newton::Evaluation {
    let gains = ds * h;
    let d = ds.ncols();
    let mut v = 0.0;
    let mut grad = DVector::zeros(d);
    let mut hess = DMatrix::zeros(d, d);
    for i in 0..probs.len() {
        let w = x + gains[i] - claim[i];
        let ui = u.u(w);
        if !ui.is_finite() {
            return None;
        }
        let row = ds.row(i).transpose();
        v += probs[i] * ui;
        grad += &row * (probs[i] * u.u_prime(w));
        hess += &row * row.transpose() * (probs[i] * u.u_second(w));
    }
    Some((v, grad, hess))
}

/// Checks that `x -> U_B(x)` is nondecreasing and concave on the given
/// increasing grid, up to `tol` relative to the value scale.
pub fn concavity_certificate(m: &FiniteMarket, u: &UtilityFunction, claim: &[f64], xs: &[f64], tol: f64) -> Result<bool> {
    let mut vals = Vec::with_capacity(xs.len());
    for &x in xs {
        vals.push(maximize(m, u, claim, x)?.value);
    }
    let scale = vals.iter().fold(0.0f64, |a, v| a.max(v.abs())).max(1.0);
    let monotone = vals.windows(2).all(|w| w[1] >= w[0] - tol * scale);
    let concave = xs.windows(3).zip(vals.windows(3)).all(|(x, v)| {
        // Slopes must not increase.
        let s1 = (v[1] - v[0]) / (x[1] - x[0]);
        let s2 = (v[2] - v[1]) / (x[2] - x[1]);
        s2 <= s1 + tol * scale
    });
    Ok(monotone && concave)
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

    #[test]
    fn symmetric_binary_is_stationary_at_zero() {
        let u = UtilityFunction::exponential(1.0).unwrap();
        let s = maximize(&binary(0.5), &u, &[0.0, 0.0], 0.0).unwrap();
        assert!(s.h_star[0].abs() < 1e-14);
        assert_relative_eq!(s.value, -1.0, epsilon = 1e-14);
        assert!(s.unique);
    }

    #[test]
    fn binary_closed_form() {
        // E[-exp(-h dS)] with p = 0.7 is maximized at h = ln(p/(1-p))/2,
        // with value -2 sqrt(p(1-p)).
        let u = UtilityFunction::exponential(1.0).unwrap();
        let s = maximize(&binary(0.7), &u, &[0.0, 0.0], 0.0).unwrap();
        assert_relative_eq!(s.h_star[0], 0.5 * (0.7f64 / 0.3).ln(), epsilon = 1e-12);
        assert_relative_eq!(s.value, -2.0 * (0.21f64).sqrt(), epsilon = 1e-13);
    }

    #[test]
    fn constant_claim_translates_wealth() {
        let u = UtilityFunction::exponential(1.5).unwrap();
        let m = trinomial();
        let a = maximize(&m, &u, &[2.0; 3], 0.3).unwrap();
        let b = maximize(&m, &u, &[0.0; 3], 0.3 - 2.0).unwrap();
        assert_relative_eq!(a.value, b.value, max_relative = 1e-13);
        assert_relative_eq!(a.h_star[0], b.h_star[0], epsilon = 1e-10);
    }

    #[test]
    fn custom_utility_matches_exponential() {
        let e = UtilityFunction::exponential(1.0).unwrap();
        let c = UtilityFunction::exponential_numeric(1.0).unwrap();
        let m = trinomial();
        let claim = [0.4, -0.2, 1.0];
        let a = maximize(&m, &e, &claim, 0.1).unwrap();
        let b = maximize(&m, &c, &claim, 0.1).unwrap();
        assert_relative_eq!(a.value, b.value, max_relative = 1e-9);
        assert_relative_eq!(a.h_star[0], b.h_star[0], epsilon = 1e-6);
    }

    #[test]
    fn zero_columns_are_dropped() {
        let u = UtilityFunction::exponential(1.0).unwrap();
        let m = FiniteMarket::new(vec![0.7, 0.3], vec![vec![1.0, 0.0], vec![-1.0, 0.0]], None, 0.0).unwrap();
        let s = maximize(&m, &u, &[0.0, 0.0], 0.0).unwrap();
        assert_eq!(s.dropped_assets, vec![1]);
        assert_eq!(s.h_star[1], 0.0);
        assert_relative_eq!(s.value, -2.0 * (0.21f64).sqrt(), epsilon = 1e-13);
    }

    #[test]
    fn redundant_assets_flag_non_uniqueness() {
        let u = UtilityFunction::exponential(1.0).unwrap();
        let m = FiniteMarket::new(vec![0.7, 0.3], vec![vec![1.0, 2.0], vec![-1.0, -2.0]], None, 0.0).unwrap();
        let s = maximize(&m, &u, &[0.0, 0.0], 0.0).unwrap();
        assert!(!s.unique);
        assert_relative_eq!(s.value, -2.0 * (0.21f64).sqrt(), epsilon = 1e-12);
    }

    #[test]
    fn wrong_claim_length() {
        let u = UtilityFunction::exponential(1.0).unwrap();
        assert!(matches!(maximize(&binary(0.5), &u, &[0.0], 0.0), Err(Error::ClaimLength { .. })));
    }

    #[test]
    fn huge_claims_stay_finite_in_log_domain() {
        let u = UtilityFunction::exponential(1.0).unwrap();
        let m = trinomial();
        let s = maximize(&m, &u, &[1e4, 0.0, 0.0], 0.0).unwrap();
        let lnv = s.log_neg_value.unwrap();
        assert!(lnv.is_finite() && lnv > 1e3);
        assert!(s.gradient_residual <= PRIMAL_ACCEPT_TOL);
    }

    #[test]
    fn value_is_concave_in_wealth() {
        let u = UtilityFunction::log_quadratic().unwrap();
        let xs: Vec<f64> = (0..12).map(|k| -2.0 + 0.5 * k as f64).collect();
        assert!(concavity_certificate(&trinomial(), &u, &[0.3, 0.0, -0.5], &xs, 1e-9).unwrap());
    }

    proptest! {
        #[test]
        fn exponential_factorization(x in -5.0f64..5.0, g in 0.2f64..3.0) {
            let u = UtilityFunction::exponential(g).unwrap();
            let m = trinomial();
            let claim = [0.5, -1.0, 0.25];
            let v0 = maximize(&m, &u, &claim, 0.0).unwrap();
            let vx = maximize(&m, &u, &claim, x).unwrap();
            prop_assert!((vx.value - (-g * x).exp() * v0.value).abs() <= 1e-10 * vx.value.abs());
        }
    }
}
