//! Integrability conditions on claims.
//!
//! A claim enters the utility problem through the moments `E[u(-a B^+)]`
//! and `E[u_hat(a B^-)]`. On a finite probability space every such moment
//! is finite. The only unbounded claims supported here have exponential
//! tails, `B^+ ~ c Y` with `Y ~ Exp(rate)`, for which finiteness is decided
//! in closed form from the growth rate of `u_hat`.

use serde::{Deserialize, Serialize};

use crate::distribution::DiscreteDistribution;
use crate::ext::ExtReal;
use crate::utility::UtilityFunction;

/// Smallest epsilon tried when searching for `E[u(-(1+eps) B^+)] > -inf`.
pub const EPS_SEARCH_FLOOR_LOG2: i32 = 40;

/// The law of a claim, as far as integrability is concerned.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ClaimLaw {
    /// A claim on a finite probability space.
    Discrete(DiscreteDistribution),
    /// Positive and negative parts dominated by `pos_coef * Y` and
    /// `neg_coef * Y` (up to a bounded term) with `Y ~ Exp(rate)`.
    ExpTail { pos_coef: f64, neg_coef: f64, rate: f64 },
}

/// `sup { a > 0 : E[u_hat(a c Y)] < inf }` for `Y ~ Exp(rate)`.
pub fn exp_tail_threshold(coef: f64, rate: f64, u: &UtilityFunction) -> ExtReal {
    let growth = u.tail_rate();
    if coef <= 0.0 || growth <= 0.0 {
        ExtReal::PosInf
    } else {
        ExtReal::Finite(rate / (growth * coef))
    }
}

impl ClaimLaw {
    /// `L = sup { b : E[u_hat(b B^+)] < inf }`.
    pub fn positive_threshold(&self, u: &UtilityFunction) -> ExtReal {
        match self {
            ClaimLaw::Discrete(_) => ExtReal::PosInf,
            ClaimLaw::ExpTail { pos_coef, rate, .. } => exp_tail_threshold(*pos_coef, *rate, u),
        }
    }

    /// `l = sup { a : E[u_hat(a B^-)] < inf }`.
    pub fn negative_threshold(&self, u: &UtilityFunction) -> ExtReal {
        match self {
            ClaimLaw::Discrete(_) => ExtReal::PosInf,
            ClaimLaw::ExpTail { neg_coef, rate, .. } => exp_tail_threshold(*neg_coef, *rate, u),
        }
    }

    /// Whether `E[u_hat(a |B|)] < inf`. At the threshold itself the
    /// exponential moment diverges, hence the strict inequality.
    pub fn u_hat_moment_finite(&self, a: f64, u: &UtilityFunction) -> bool {
        let below = |t: ExtReal| match t {
            ExtReal::PosInf => true,
            ExtReal::Finite(t) => a < t,
            ExtReal::NegInf => false,
        };
        below(self.positive_threshold(u)) && below(self.negative_threshold(u))
    }

    /// Whether `E[u(-a |B|)] > -inf`, decided from the left tail of `u`
    /// directly rather than through `u_hat`.
    pub fn utility_moment_finite(&self, a: f64, u: &UtilityFunction) -> bool {
        match self {
            ClaimLaw::Discrete(d) => d.values().iter().all(|&v| u.u(-a * v.abs()).is_finite()),
            ClaimLaw::ExpTail { pos_coef, neg_coef, rate } => {
                let c = pos_coef.max(*neg_coef);
                // u(-x) decays like -exp(growth * x): integrable against
                // rate * exp(-rate y) iff a * c * growth < rate.
                c <= 0.0 || u.tail_rate() <= 0.0 || a * c * u.tail_rate() < *rate
            }
        }
    }
}

/// Result of the claim admissibility checks. Never an error: conditions
/// that fail are reported as such.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdmissibilityReport {
    /// `E[u(f - B)] < +inf` for test wealth `f`.
    pub gains: bool,
    /// `E[u(-B^+)] > -inf`.
    pub positive_bound: bool,
    /// `E[u(-(1+eps) B^+)] > -inf` for some `eps > 0`.
    pub eps_condition: bool,
    /// The epsilon that witnessed `eps_condition`.
    pub eps_witness: Option<f64>,
    /// Set when the threshold sits within `2^-40` of 1, where the search
    /// cannot separate the two answers.
    pub inconclusive: bool,
    #[serde(rename = "L")]
    pub big_l: ExtReal,
    #[serde(rename = "l")]
    pub small_l: ExtReal,
    /// Moments that were found to diverge.
    pub divergent: Vec<String>,
}

impl AdmissibilityReport {
    pub fn admissible(&self) -> bool {
        self.gains && self.positive_bound && self.eps_condition
    }
}

pub fn claim_admissible(claim: &ClaimLaw, u: &UtilityFunction) -> AdmissibilityReport {
    let big_l = claim.positive_threshold(u);
    let small_l = claim.negative_threshold(u);
    let pos_finite = |a: f64| match big_l {
        ExtReal::PosInf => true,
        ExtReal::Finite(t) => a < t,
        ExtReal::NegInf => false,
    };
    let mut divergent = Vec::new();

    // u <= u(0) + beta x, so E[u(f - B)] is finite once E[B^-] is; both
    // supported laws have integrable negative parts.
    let gains = match u.u_infinity() {
        ExtReal::Finite(_) => true,
        _ => match claim {
            ClaimLaw::Discrete(_) => true,
            ClaimLaw::ExpTail { neg_coef, rate, .. } => (neg_coef / rate).is_finite(),
        },
    };
    let positive_bound = pos_finite(1.0);
    if !positive_bound {
        divergent.push("E[u(-B+)]".to_string());
    }
    let mut eps_witness = None;
    for k in 0..=EPS_SEARCH_FLOOR_LOG2 {
        let eps = 2f64.powi(-k);
        if pos_finite(1.0 + eps) {
            eps_witness = Some(eps);
            break;
        }
    }
    let inconclusive = eps_witness.is_none()
        && matches!(big_l, ExtReal::Finite(t) if t > 1.0 && t <= 1.0 + 2f64.powi(-EPS_SEARCH_FLOOR_LOG2));
    if eps_witness.is_none() {
        divergent.push("E[u(-(1+eps)B+)] for all tested eps".to_string());
    }
    AdmissibilityReport {
        gains,
        positive_bound,
        eps_condition: eps_witness.is_some(),
        eps_witness,
        inconclusive,
        big_l,
        small_l,
        divergent,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn exp1() -> UtilityFunction {
        UtilityFunction::exponential(1.0).unwrap()
    }

    #[test]
    fn finite_claims_are_always_admissible() {
        let d = DiscreteDistribution::new(vec![-3.0, 100.0, 7.5], vec![0.2, 0.3, 0.5]).unwrap();
        let r = claim_admissible(&ClaimLaw::Discrete(d), &exp1());
        assert!(r.gains && r.positive_bound && r.eps_condition);
        assert_eq!(r.big_l, ExtReal::PosInf);
        assert_eq!(r.small_l, ExtReal::PosInf);
    }

    #[test]
    fn delta_y_claim_thresholds() {
        for &delta in &[0.1, 0.3, 0.9] {
            let claim = ClaimLaw::ExpTail { pos_coef: delta, neg_coef: 0.0, rate: 1.0 };
            let r = claim_admissible(&claim, &exp1());
            assert!(r.eps_condition);
            assert!(r.admissible());
            let l = r.big_l.finite().unwrap();
            assert!((l - 1.0 / delta).abs() < 1e-14);
            assert_eq!(r.small_l, ExtReal::PosInf);
        }
    }

    #[test]
    fn unit_exponential_claim_fails_eps_condition() {
        let claim = ClaimLaw::ExpTail { pos_coef: 1.0, neg_coef: 0.0, rate: 1.0 };
        let r = claim_admissible(&claim, &exp1());
        assert!(!r.eps_condition);
        assert!(!r.inconclusive);
        assert!(!r.positive_bound);
        assert!(!r.divergent.is_empty());
    }

    #[test]
    fn borderline_threshold_is_inconclusive() {
        let claim = ClaimLaw::ExpTail { pos_coef: 1.0 / (1.0 + 2f64.powi(-45)), neg_coef: 0.0, rate: 1.0 };
        let r = claim_admissible(&claim, &exp1());
        assert!(!r.eps_condition);
        assert!(r.inconclusive);
    }

    #[test]
    fn polynomial_utility_accepts_every_exponential_tail() {
        let u = UtilityFunction::log_quadratic().unwrap();
        let claim = ClaimLaw::ExpTail { pos_coef: 5.0, neg_coef: 5.0, rate: 1.0 };
        let r = claim_admissible(&claim, &u);
        assert!(r.admissible());
        assert_eq!(r.big_l, ExtReal::PosInf);
    }

    #[test]
    fn moment_classifications_agree() {
        let u = exp1();
        for &c in &[0.2, 0.5, 1.0, 2.0] {
            let claim = ClaimLaw::ExpTail { pos_coef: c, neg_coef: c / 2.0, rate: 1.0 };
            for k in 0..40 {
                let a = 0.1 * k as f64;
                assert_eq!(claim.u_hat_moment_finite(a, &u), claim.utility_moment_finite(a, &u), "c={c} a={a}");
            }
        }
        let d = DiscreteDistribution::new(vec![-1.0, 2.0], vec![0.5, 0.5]).unwrap();
        let claim = ClaimLaw::Discrete(d);
        for &a in &[0.0, 1.0, 50.0] {
            assert!(claim.u_hat_moment_finite(a, &u) && claim.utility_moment_finite(a, &u));
        }
    }
}
