//! The seller's indifference price `pi(B)`: the cash amount `p` with
//! `U_B(x + p) = U_0(x)`, together with its dual representation
//! `pi(B) = max_Q { E_Q[B] - alpha(Q) }`, bounds, volume asymptotics and
//! the convex risk-measure properties of `B -> pi(B)`.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dual;
use crate::error::{Error, Result};
use crate::ext::ExtReal;
use crate::finite_market::{replicable, FiniteMarket, MartingaleMeasure, Replication};
use crate::newton::{self, NewtonOptions};
use crate::primal::{self, PrimalOptions};
use crate::roots::safeguarded_newton;
use crate::utility::{UtilityFunction, UtilityKind};

/// Price-space tolerance of the root finder, relative to the claim scale.
pub const PRICE_RTOL: f64 = 1e-13;
/// Maximizers within this of the best value belong to the argmax set.
pub const ARGMAX_TOL: f64 = 1e-7;
pub const DEFAULT_RESTARTS: usize = 20;
const MAX_PRICE_ITER: usize = 200;

/// Outcome of the monotone root search.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PriceSolve {
    pub price: f64,
    /// `|U_B(x + p) - U_0(x)| / E[u']`, a price-space residual.
    pub residual: f64,
    pub iterations: usize,
}

/// Objective gap `p -> U_B(x + p) - U_0(x)` in a form that stays finite:
/// logarithmic for exponential utility, utility units otherwise.
struct PriceEquation<'a> {
    m: &'a FiniteMarket,
    u: &'a UtilityFunction,
    claim: &'a [f64],
    x: f64,
    target: f64,
    warm: Option<Vec<f64>>,
}

impl<'a> PriceEquation<'a> {
    fn new(m: &'a FiniteMarket, u: &'a UtilityFunction, claim: &'a [f64], x: f64) -> Result<Self> {
        let zero = vec![0.0; m.n_states()];
        let base = primal::maximize(m, u, &zero, x)?;
        if let ExtReal::Finite(sup) = u.u_infinity() {
            if !(base.value < sup) {
                return Err(Error::UtilitySaturation);
            }
        }
        let target = match u.kind() {
            UtilityKind::Exponential { .. } => base.log_neg_value.expect("exponential values are negative"),
            UtilityKind::Custom => base.value,
        };
        Ok(PriceEquation { m, u, claim, x, target, warm: None })
    }

    /// Returns (increasing gap, its slope in p).
    fn eval(&mut self, p: f64) -> Result<(f64, f64)> {
        let opts = PrimalOptions { warm_start: self.warm.clone(), ..PrimalOptions::default() };
        let s = primal::maximize_with(self.m, self.u, self.claim, self.x + p, &opts)?;
        self.warm = Some(s.h_star.clone());
        Ok(match self.u.kind() {
            // ln(-U) falls at rate gamma in p.
            UtilityKind::Exponential { gamma } => (self.target - s.log_neg_value.expect("negative"), gamma),
            UtilityKind::Custom => (s.value - self.target, s.marginal),
        })
    }
}

/// `pi(B)` by monotone root finding on `[min B, max B]`.
pub fn price_solve(m: &FiniteMarket, u: &UtilityFunction, claim: &[f64], x: f64) -> Result<PriceSolve> {
    m.check_claim(claim)?;
    let mut eq = PriceEquation::new(m, u, claim, x)?;
    let lo0 = claim.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi0 = claim.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let scale = 1.0 + lo0.abs().max(hi0.abs());
    let tol = PRICE_RTOL * scale;
    let (mut lo, mut hi) = (lo0, hi0);
    let (mut flo, slo) = eq.eval(lo)?;
    if hi - lo <= tol {
        return Ok(PriceSolve { price: lo, residual: flo.abs() / slo, iterations: 1 });
    }
    let (mut fhi, _) = eq.eval(hi)?;
    if flo > 0.0 || fhi < 0.0 {
        // Only possible through round-off at the bracket ends.
        if flo.abs() / slo <= tol {
            return Ok(PriceSolve { price: lo, residual: flo.abs() / slo, iterations: 2 });
        }
        if fhi <= 0.0 && fhi.abs() <= tol * slo {
            return Ok(PriceSolve { price: hi, residual: fhi.abs() / slo, iterations: 2 });
        }
        return Err(Error::NoRoot(format!("price not bracketed by [{lo}, {hi}]")));
    }
    let mut side = 0i8;
    for it in 1..=MAX_PRICE_ITER {
        let mut p = (lo * fhi - hi * flo) / (fhi - flo);
        if it % 3 == 0 || !(p > lo && p < hi) {
            p = 0.5 * (lo + hi);
        }
        let (f, slope) = eq.eval(p)?;
        let residual = f.abs() / slope;
        if residual <= tol || hi - lo <= tol {
            return Ok(PriceSolve { price: p, residual, iterations: it + 2 });
        }
        if f < 0.0 {
            lo = p;
            flo = f;
            if side == -1 {
                fhi *= 0.5;
            }
            side = -1;
        } else {
            hi = p;
            fhi = f;
            if side == 1 {
                flo *= 0.5;
            }
            side = 1;
        }
    }
    Err(Error::NonConvergence { what: "indifference price root", iterations: MAX_PRICE_ITER, residual: hi - lo })
}

pub fn price(m: &FiniteMarket, u: &UtilityFunction, claim: &[f64], x: f64) -> Result<f64> {
    Ok(price_solve(m, u, claim, x)?.price)
}

/// The two exponential-utility routes to the price.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExponentialPrice {
    /// `(1/gamma) ln(U_B(0) / U_0(0))`.
    pub price: f64,
    /// `max_Q { E_Q[B] - (H(Q|P) - H_min) / gamma }`.
    pub entropy_route: f64,
    pub maximizer: Vec<f64>,
}

impl ExponentialPrice {
    pub fn disagreement(&self) -> f64 {
        (self.price - self.entropy_route).abs()
    }
}

/// Agreement required between the two exponential routes.
pub const EXPONENTIAL_ROUTE_TOL: f64 = 1e-8;

/// Both exponential routes; the wealth level cancels from the ratio.
pub fn price_exponential(m: &FiniteMarket, gamma: f64, claim: &[f64], x: f64) -> Result<ExponentialPrice> {
    m.check_claim(claim)?;
    let u = UtilityFunction::exponential(gamma)?;
    let zero = vec![0.0; m.n_states()];
    let l0 = primal::maximize(m, &u, &zero, x)?.log_neg_value.expect("negative");
    let lb = primal::maximize(m, &u, claim, x)?.log_neg_value.expect("negative");
    let price = (lb - l0) / gamma;

    let h_min = dual::minimal_entropy_measure(m, gamma)?.entropy(m.probs());
    let (value, q) = maximize_entropy_penalized(m, gamma, claim)?;
    let out = ExponentialPrice { price, entropy_route: value + h_min / gamma, maximizer: q };
    let scale = 1.0 + claim.iter().fold(0.0f64, |a, b| a.max(b.abs()));
    if out.disagreement() > EXPONENTIAL_ROUTE_TOL * scale {
        return Err(Error::NonConvergence { what: "exponential price routes", iterations: 0, residual: out.disagreement() });
    }
    Ok(out)
}

/// `max_q E_q[B] - H(q|p)/gamma` over the polytope, by Newton in null-space
/// coordinates from the interior certificate.
fn maximize_entropy_penalized(m: &FiniteMarket, gamma: f64, claim: &[f64]) -> Result<(f64, Vec<f64>)> {
    let poly = m.polytope();
    let base = poly.interior_point().to_vec();
    let null = poly.null_basis().clone();
    let probs = m.probs();
    let scale = 1.0 + claim.iter().fold(0.0f64, |a, b| a.max(b.abs()));
    let eval = |z: &DVector<f64>| -> newton::Evaluation {
        let q = poly.from_coordinates(&base, z);
        if q.iter().any(|v| !(*v > 0.0)) {
            return None;
        }
        let n = q.len();
        let mut v = 0.0;
        let mut g = DVector::zeros(n);
        let mut h = DVector::zeros(n);
        for i in 0..n {
            let lr = (q[i] / probs[i]).ln();
            v += q[i] * claim[i] - q[i] * lr / gamma;
            g[i] = claim[i] - (lr + 1.0) / gamma;
            h[i] = -1.0 / (gamma * q[i]);
        }
        Some((v / scale, null.transpose() * g / scale, null.transpose() * DMatrix::from_diagonal(&h) * &null / scale))
    };
    let opts = NewtonOptions { gtol: 1e-12, max_iter: 1000, ..NewtonOptions::default() };
    let r = newton::maximize(DVector::zeros(null.ncols()), eval, opts)
        .ok_or_else(|| Error::Invalid("interior certificate outside the domain".into()))?;
    if !r.converged {
        return Err(Error::NonConvergence { what: "entropy-penalized maximization", iterations: r.iterations, residual: r.grad_norm() });
    }
    Ok((r.value * scale, poly.from_coordinates(&base, &r.x)))
}

/// The multiplier attaining `inf_lambda (E[Phi(lambda dQ/dP)] - U0) / lambda`,
/// i.e. the solution of `E[u(-Phi'(lambda dQ/dP))] = U0`.
fn penalty_lambda(u: &UtilityFunction, density: &[f64], probs: &[f64], u0: f64) -> Result<f64> {
    // f(t) = U0 - E[u(I(e^t d))] increases in t.
    let f = |t: f64| {
        let lam = t.exp();
        let mut s = u0;
        let mut ds = 0.0;
        for (d, p) in density.iter().zip(probs) {
            let y = lam * d;
            s -= p * u.u(-u.conjugate_prime(y));
            ds += p * y * y * u.conjugate_second(y);
        }
        (s, ds)
    };
    let (lo, hi) = (dual::LAMBDA_MIN.ln(), dual::LAMBDA_MAX.ln());
    if !(f(lo).0 <= 0.0 && f(hi).0 >= 0.0) {
        return Err(Error::LambdaBracketFailure);
    }
    let root = safeguarded_newton(f, lo, hi, 0.0, 1e-15 * (1.0 + u0.abs()), 400).ok_or(Error::LambdaBracketFailure)?;
    Ok(root.x.exp())
}

/// Minimal penalty `alpha(Q) = x + inf_lambda (E[Phi(lambda dQ/dP)] - U_0(x)) / lambda`.
pub fn penalty(m: &FiniteMarket, u: &UtilityFunction, q: &MartingaleMeasure, x: f64) -> Result<ExtReal> {
    let zero = vec![0.0; m.n_states()];
    let u0 = primal::maximize(m, u, &zero, x)?.value;
    penalty_given_value(m, u, q.q(), x, u0)
}

fn penalty_given_value(m: &FiniteMarket, u: &UtilityFunction, q: &[f64], x: f64, u0: f64) -> Result<ExtReal> {
    let probs = m.probs();
    if q.iter().any(|v| *v <= 0.0) && u.u_infinity().is_pos_inf() {
        return Ok(ExtReal::PosInf);
    }
    let density: Vec<f64> = q.iter().zip(probs).map(|(a, p)| a / p).collect();
    if let UtilityKind::Exponential { gamma } = u.kind() {
        // Closed-form minimizer; keeps extreme wealth levels finite.
        let h = crate::finite_market::relative_entropy(q, probs);
        let h_min = -(-u0).ln() - gamma * x;
        return Ok(ExtReal::Finite((h - h_min) / gamma));
    }
    let lam = penalty_lambda(u, &density, probs, u0)?;
    let phi: f64 = density.iter().zip(probs).map(|(d, p)| p * u.conjugate_f64(lam * d)).sum();
    Ok(ExtReal::Finite(x + (phi - u0) / lam))
}

/// The generic penalty formula even for exponential utility, for cross-checks.
pub fn penalty_numeric(m: &FiniteMarket, u: &UtilityFunction, q: &MartingaleMeasure, x: f64) -> Result<f64> {
    let zero = vec![0.0; m.n_states()];
    let u0 = primal::maximize(m, u, &zero, x)?.value;
    let probs = m.probs();
    let density: Vec<f64> = q.q().iter().zip(probs).map(|(a, p)| a / p).collect();
    let lam = penalty_lambda(u, &density, probs, u0)?;
    let phi: f64 = density.iter().zip(probs).map(|(d, p)| p * u.conjugate_f64(lam * d)).sum();
    Ok(x + (phi - u0) / lam)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DualPrice {
    pub price: f64,
    /// Distinct maximizers found from the restarts.
    pub maximizers: Vec<MartingaleMeasure>,
    /// `E_Q[B] - alpha(Q)` at each restart's end point.
    pub restart_values: Vec<f64>,
}

/// `max_Q { E_Q[B] - alpha(Q) }`, solved jointly over `(Q, mu = 1/lambda)`:
/// the objective `E_Q[B] - x + mu U0 - mu E[Phi(dQ/dP / mu)]` is concave.
pub fn dual_price_representation<R: Rng + ?Sized>(
    m: &FiniteMarket,
    u: &UtilityFunction,
    claim: &[f64],
    x: f64,
    restarts: usize,
    rng: &mut R,
) -> Result<DualPrice> {
    m.check_claim(claim)?;
    let zero = vec![0.0; m.n_states()];
    let u0 = primal::maximize(m, u, &zero, x)?.value;
    let poly = m.polytope();
    let probs = m.probs();
    let null = poly.null_basis().clone();
    let k = null.ncols();
    let scale = 1.0 + claim.iter().fold(0.0f64, |a, b| a.max(b.abs())) + x.abs();

    let mut ends: Vec<(f64, Vec<f64>)> = Vec::new();
    for r in 0..restarts.max(1) {
        let start = if r == 0 { poly.interior_point().to_vec() } else { pull_inside(poly.interior_point(), &poly.random_point(rng, 20)) };
        let density: Vec<f64> = start.iter().zip(probs).map(|(a, p)| a / p).collect();
        let mu0 = 1.0 / penalty_lambda(u, &density, probs, u0)?;
        let base = start.clone();
        // Variables (z, s) with q = base + N z and mu = exp(s).
        let eval = |v: &DVector<f64>| -> newton::Evaluation {
            let z = v.rows(0, k).into_owned();
            let mu = v[k].exp();
            let q = poly.from_coordinates(&base, &z);
            if q.iter().any(|a| !(*a > 0.0)) || !mu.is_finite() || mu <= 0.0 {
                return None;
            }
            let n = q.len();
            let mut val = -x + mu * u0;
            let mut gq = DVector::zeros(n);
            let mut hq = DVector::zeros(n);
            let mut hqmu = DVector::zeros(n);
            let mut gmu = u0;
            let mut hmumu = 0.0;
            for i in 0..n {
                let y = q[i] / (mu * probs[i]);
                let phi2 = u.conjugate_second(y);
                val += q[i] * claim[i] - mu * probs[i] * u.conjugate_f64(y);
                gq[i] = claim[i] - u.conjugate_prime(y);
                hq[i] = -phi2 / (mu * probs[i]);
                hqmu[i] = phi2 * y / mu;
                gmu -= probs[i] * u.u(-u.conjugate_prime(y));
                hmumu -= probs[i] * y * y * phi2 / mu;
            }
            if !val.is_finite() {
                return None;
            }
            let mut g = DVector::zeros(k + 1);
            g.rows_mut(0, k).copy_from(&(null.transpose() * &gq));
            g[k] = mu * gmu;
            let mut h = DMatrix::zeros(k + 1, k + 1);
            h.view_mut((0, 0), (k, k)).copy_from(&(null.transpose() * DMatrix::from_diagonal(&hq) * &null));
            let cross = null.transpose() * hqmu * mu;
            h.view_mut((0, k), (k, 1)).copy_from(&cross);
            h.view_mut((k, 0), (1, k)).copy_from(&cross.transpose());
            h[(k, k)] = mu * mu * hmumu + mu * gmu;
            Some((val / scale, g / scale, h / scale))
        };
        let mut x0 = DVector::zeros(k + 1);
        x0[k] = mu0.ln();
        let opts = NewtonOptions { gtol: 1e-12, max_iter: 1000, ..NewtonOptions::default() };
        let res = newton::maximize(x0, eval, opts).ok_or_else(|| Error::Invalid("restart outside the domain".into()))?;
        if !(res.grad_norm() <= 1e-9) {
            return Err(Error::NonConvergence { what: "dual price representation", iterations: res.iterations, residual: res.grad_norm() });
        }
        let q = poly.from_coordinates(&base, &res.x.rows(0, k).into_owned());
        ends.push((res.value * scale, q));
    }
    let best = ends.iter().map(|e| e.0).fold(f64::NEG_INFINITY, f64::max);
    let mut maximizers: Vec<MartingaleMeasure> = Vec::new();
    for (v, q) in &ends {
        if *v >= best - ARGMAX_TOL && !maximizers.iter().any(|mm| mm.q().iter().zip(q).all(|(a, b)| (a - b).abs() < 1e-6)) {
            maximizers.push(MartingaleMeasure::new(m, q.clone())?);
        }
    }
    Ok(DualPrice { price: best, maximizers, restart_values: ends.into_iter().map(|e| e.0).collect() })
}

// Moves a random polytope point a little towards the interior so that every
// state keeps positive mass.
fn pull_inside(interior: &[f64], q: &[f64]) -> Vec<f64> {
    q.iter().zip(interior).map(|(a, c)| 0.9 * a + 0.1 * c).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PriceBounds {
    /// `max E_Q[B]` over the zero-claim dual optimizers.
    pub lower: f64,
    /// `sup E_Q[B]` over all martingale measures.
    pub upper: f64,
}

impl PriceBounds {
    pub fn contains(&self, price: f64, tol: f64) -> bool {
        self.lower - tol <= price && price <= self.upper + tol
    }
}

pub fn price_bounds(m: &FiniteMarket, u: &UtilityFunction, claim: &[f64], x: f64) -> Result<PriceBounds> {
    m.check_claim(claim)?;
    let zero = vec![0.0; m.n_states()];
    let q0 = dual::minimize_dual(m, u, &zero, x)?.q_star;
    let (upper, _) = m.polytope().lp_max(claim)?;
    Ok(PriceBounds { lower: q0.expect(claim), upper })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VolumeAsymptotics {
    /// Extrapolated `lim_{b -> 0} pi(b B) / b`.
    pub slope_at_zero: f64,
    /// Extrapolated `lim_{b -> inf} pi(b B) / b`.
    pub slope_at_infinity: f64,
    /// `E_Q[B]` at the zero-claim dual optimizer.
    pub expected_at_zero: f64,
    /// `sup_Q E_Q[B]` over the polytope.
    pub expected_at_infinity: f64,
}

pub const SMALL_VOLUMES: [f64; 3] = [1e-2, 1e-3, 1e-4];
pub const LARGE_VOLUMES: [f64; 3] = [1e2, 1e3, 1e4];

/// Two Richardson levels for samples at `h, h/10, h/100` of a function
/// smooth in `h`.
pub fn richardson(s: [f64; 3]) -> f64 {
    let r12 = (10.0 * s[1] - s[0]) / 9.0;
    let r23 = (10.0 * s[2] - s[1]) / 9.0;
    (100.0 * r23 - r12) / 99.0
}

pub fn volume_asymptotics(m: &FiniteMarket, u: &UtilityFunction, claim: &[f64], x: f64) -> Result<VolumeAsymptotics> {
    let scaled = |b: f64| -> Result<f64> {
        let c: Vec<f64> = claim.iter().map(|v| b * v).collect();
        Ok(price(m, u, &c, x)? / b)
    };
    let small = [scaled(SMALL_VOLUMES[0])?, scaled(SMALL_VOLUMES[1])?, scaled(SMALL_VOLUMES[2])?];
    let large = [scaled(LARGE_VOLUMES[0])?, scaled(LARGE_VOLUMES[1])?, scaled(LARGE_VOLUMES[2])?];
    let b = price_bounds(m, u, claim, x)?;
    Ok(VolumeAsymptotics {
        slope_at_zero: richardson(small),
        slope_at_infinity: richardson(large),
        expected_at_zero: b.lower,
        expected_at_infinity: b.upper,
    })
}

/// Inputs for one round of the risk-measure checks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClaimPair {
    pub first: Vec<f64>,
    pub second: Vec<f64>,
    /// Mixing weight in (0, 1).
    pub t: f64,
}

/// Largest violations found; each should be at most its tolerance.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct AxiomReport {
    pub convexity: f64,
    pub monotonicity: f64,
    pub translation: f64,
    /// Largest decrease of `pi(B ^ n)` along increasing truncation levels.
    pub fatou_monotone: f64,
    /// `|pi(B ^ n) - pi(B)|` at the last level, where `B ^ n = B`.
    pub fatou_limit: f64,
    /// Convexity of `rho(B) = pi(-B)`.
    pub rho_convexity: f64,
    pub pairs: usize,
}

pub const AXIOM_TOL: f64 = 1e-8;
pub const FATOU_TOL: f64 = 1e-7;
pub const TRANSLATIONS: [f64; 3] = [-10.0, 0.5, 7.0];

impl AxiomReport {
    pub fn passed(&self) -> bool {
        self.convexity <= AXIOM_TOL
            && self.monotonicity <= AXIOM_TOL
            && self.translation <= AXIOM_TOL
            && self.rho_convexity <= AXIOM_TOL
            && self.fatou_monotone <= FATOU_TOL
            && self.fatou_limit <= FATOU_TOL
    }
}

/// Truncation levels `min B + (2^k - 1) step` up to the first level at or
/// above `max B`, where the truncation equals `B` exactly.
pub fn truncation_levels(claim: &[f64]) -> Vec<f64> {
    let lo = claim.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = claim.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let step = ((hi - lo) / 64.0).max(f64::MIN_POSITIVE);
    let mut levels = Vec::new();
    let mut k = 0;
    loop {
        let level = lo + (2f64.powi(k) - 1.0) * step;
        levels.push(level);
        if level >= hi {
            break;
        }
        k += 1;
    }
    levels
}

pub fn risk_measure_axioms(m: &FiniteMarket, u: &UtilityFunction, x: f64, pairs: &[ClaimPair]) -> Result<AxiomReport> {
    let pi = |c: &[f64]| price(m, u, c, x);
    let mut r = AxiomReport { pairs: pairs.len(), ..AxiomReport::default() };
    for pair in pairs {
        let (b1, b2, t) = (&pair.first, &pair.second, pair.t);
        let mix: Vec<f64> = b1.iter().zip(b2).map(|(a, b)| t * a + (1.0 - t) * b).collect();
        let (p1, p2, pm) = (pi(b1)?, pi(b2)?, pi(&mix)?);
        r.convexity = r.convexity.max(pm - t * p1 - (1.0 - t) * p2);

        let neg = |c: &[f64]| c.iter().map(|v| -v).collect::<Vec<f64>>();
        let (q1, q2, qm) = (pi(&neg(b1))?, pi(&neg(b2))?, pi(&neg(&mix))?);
        r.rho_convexity = r.rho_convexity.max(qm - t * q1 - (1.0 - t) * q2);

        let low: Vec<f64> = b1.iter().zip(b2).map(|(a, b)| a.min(*b)).collect();
        let high: Vec<f64> = b1.iter().zip(b2).map(|(a, b)| a.max(*b)).collect();
        r.monotonicity = r.monotonicity.max(pi(&low)? - pi(&high)?);

        for c in TRANSLATIONS {
            let shifted: Vec<f64> = b1.iter().map(|v| v + c).collect();
            r.translation = r.translation.max((pi(&shifted)? - p1 - c).abs());
        }

        let mut prev = f64::NEG_INFINITY;
        let mut last = f64::NAN;
        for level in truncation_levels(b1) {
            let cut: Vec<f64> = b1.iter().map(|v| v.min(level)).collect();
            let p = pi(&cut)?;
            r.fatou_monotone = r.fatou_monotone.max(prev - p);
            prev = p;
            last = p;
        }
        r.fatou_limit = r.fatou_limit.max((last - p1).abs());
    }
    Ok(r)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PenaltySample {
    pub q: Vec<f64>,
    pub penalty: ExtReal,
}

/// Everything the price command reports for one claim.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PriceReport {
    pub price: f64,
    pub price_residual: f64,
    pub penalty_at: Vec<PenaltySample>,
    pub argmax_measures: Vec<MartingaleMeasure>,
    pub dual_route_price: f64,
    pub lower_bound: f64,
    pub upper_bound: ExtReal,
    pub slope_at_zero: f64,
    pub slope_at_infinity: ExtReal,
    pub replication: Option<Replication>,
}

pub fn price_report<R: Rng + ?Sized>(
    m: &FiniteMarket,
    u: &UtilityFunction,
    claim: &[f64],
    x: f64,
    samples: usize,
    rng: &mut R,
) -> Result<PriceReport> {
    let solve = price_solve(m, u, claim, x)?;
    let dual = dual_price_representation(m, u, claim, x, DEFAULT_RESTARTS, rng)?;
    let bounds = price_bounds(m, u, claim, x)?;
    let asym = volume_asymptotics(m, u, claim, x)?;
    let zero = vec![0.0; m.n_states()];
    let u0 = primal::maximize(m, u, &zero, x)?.value;
    let mut penalty_at = Vec::with_capacity(samples);
    for _ in 0..samples {
        let q = pull_inside(m.polytope().interior_point(), &m.polytope().random_point(rng, 20));
        let penalty = penalty_given_value(m, u, &q, x, u0)?;
        penalty_at.push(PenaltySample { q, penalty });
    }
    Ok(PriceReport {
        price: solve.price,
        price_residual: solve.residual,
        penalty_at,
        argmax_measures: dual.maximizers,
        dual_route_price: dual.price,
        lower_bound: bounds.lower,
        upper_bound: ExtReal::Finite(bounds.upper),
        slope_at_zero: asym.slope_at_zero,
        slope_at_infinity: ExtReal::Finite(asym.slope_at_infinity),
        replication: replicable(m, claim)?,
    })
}
