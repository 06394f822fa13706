//! Utility functions, their convex conjugates and the induced Young pair.
//!
//! For a utility `u` (increasing, concave, finite on the whole line) the
//! conjugate is `Phi(y) = sup_x { u(x) - x y }`, `y >= 0`. The pair
//! `u_hat(x) = -u(-|x|) + u(0)` and its complementary function `Phi_hat`
//! generate the Orlicz spaces that the rest of the crate works in.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ext::ExtReal;
use crate::roots;

type ScalarFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// Tag describing which family a utility belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum UtilityKind {
    Exponential { gamma: f64 },
    Custom,
}

#[derive(Clone)]
struct CustomParts {
    name: String,
    u: ScalarFn,
    u_prime: Option<ScalarFn>,
    u_infinity: ExtReal,
    tail_rate: f64,
}

#[derive(Clone)]
enum Repr {
    Exponential { gamma: f64 },
    Custom(CustomParts),
}

/// A utility function together with the machinery derived from it.
///
/// Exponential utilities use closed forms everywhere. Custom utilities are
/// given as a callable `u` (plus an optional derivative) and every derived
/// quantity is computed numerically.
#[derive(Clone)]
pub struct UtilityFunction {
    repr: Repr,
}

impl fmt::Debug for UtilityFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.repr {
            Repr::Exponential { gamma } => write!(f, "Exponential(gamma={gamma})"),
            Repr::Custom(c) => write!(f, "Custom({})", c.name),
        }
    }
}

const DIFF_STEP: f64 = 1e-5;

impl UtilityFunction {
    /// `u(x) = -exp(-gamma x)`.
    pub fn exponential(gamma: f64) -> Result<Self> {
        if !(gamma > 0.0 && gamma.is_finite()) {
            return Err(Error::Invalid(format!("risk aversion must be positive, got {gamma}")));
        }
        Ok(UtilityFunction { repr: Repr::Exponential { gamma } })
    }

    /// Builds a utility from a callable. `u_infinity` is `lim_{x->inf} u(x)`.
    ///
    /// The shape (monotone, concave) is spot-checked on a grid; a failing
    /// check is a validation error.
    pub fn custom<U>(name: impl Into<String>, u: U, u_prime: Option<ScalarFn>, u_infinity: ExtReal) -> Result<Self>
    where
        U: Fn(f64) -> f64 + Send + Sync + 'static,
    {
        let mut parts = CustomParts {
            name: name.into(),
            u: Arc::new(u),
            u_prime,
            u_infinity,
            tail_rate: 0.0,
        };
        parts.tail_rate = estimate_tail_rate(&parts);
        let util = UtilityFunction { repr: Repr::Custom(parts) };
        util.check_shape(-20.0, 20.0, 401)?;
        Ok(util)
    }

    /// Exponential utility routed through the numeric (custom) code path.
    /// Used to cross-check the numerics against the closed forms.
    pub fn exponential_numeric(gamma: f64) -> Result<Self> {
        if !(gamma > 0.0) {
            return Err(Error::Invalid(format!("risk aversion must be positive, got {gamma}")));
        }
        Self::custom(
            format!("exponential-numeric(gamma={gamma})"),
            move |x| -(-gamma * x).exp(),
            Some(Arc::new(move |x: f64| gamma * (-gamma * x).exp())),
            ExtReal::Finite(0.0),
        )
    }

    /// `u(x) = -sum_k (w_k / g_k) exp(-g_k x)`; bounded above by 0.
    pub fn exp_sum(terms: &[(f64, f64)]) -> Result<Self> {
        if terms.is_empty() || terms.iter().any(|&(w, g)| !(w > 0.0) || !(g > 0.0)) {
            return Err(Error::Invalid("exp_sum needs positive weights and rates".into()));
        }
        let t1: Vec<(f64, f64)> = terms.to_vec();
        let t2 = t1.clone();
        let label = t1.iter().map(|(w, g)| format!("{w}:{g}")).collect::<Vec<_>>().join(",");
        Self::custom(
            format!("exp-sum[{label}]"),
            move |x| -t1.iter().map(|&(w, g)| w / g * (-g * x).exp()).sum::<f64>(),
            Some(Arc::new(move |x: f64| t2.iter().map(|&(w, g)| w * (-g * x).exp()).sum::<f64>())),
            ExtReal::Finite(0.0),
        )
    }

    /// `u(x) = ln(1 + x)` for `x >= 0` and `x - x^2 / 2` below; C^2 at the
    /// junction and unbounded above, so `Phi(0) = +inf`.
    pub fn log_quadratic() -> Result<Self> {
        Self::custom(
            "log-quadratic",
            |x: f64| if x >= 0.0 { x.ln_1p() } else { x - 0.5 * x * x },
            Some(Arc::new(|x: f64| if x >= 0.0 { 1.0 / (1.0 + x) } else { 1.0 - x })),
            ExtReal::PosInf,
        )
    }

    pub fn kind(&self) -> UtilityKind {
        match &self.repr {
            Repr::Exponential { gamma } => UtilityKind::Exponential { gamma: *gamma },
            Repr::Custom(_) => UtilityKind::Custom,
        }
    }

    /// Risk aversion when the utility is exponential.
    pub fn gamma(&self) -> Option<f64> {
        match &self.repr {
            Repr::Exponential { gamma } => Some(*gamma),
            Repr::Custom(_) => None,
        }
    }

    pub fn name(&self) -> String {
        match &self.repr {
            Repr::Exponential { gamma } => format!("exponential(gamma={gamma})"),
            Repr::Custom(c) => c.name.clone(),
        }
    }

    pub fn u(&self, x: f64) -> f64 {
        match &self.repr {
            Repr::Exponential { gamma } => -(-gamma * x).exp(),
            Repr::Custom(c) => (c.u)(x),
        }
    }

    pub fn u_prime(&self, x: f64) -> f64 {
        match &self.repr {
            Repr::Exponential { gamma } => gamma * (-gamma * x).exp(),
            Repr::Custom(c) => match &c.u_prime {
                Some(d) => d(x),
                None => {
                    let h = DIFF_STEP * x.abs().max(1.0);
                    ((c.u)(x + h) - (c.u)(x - h)) / (2.0 * h)
                }
            },
        }
    }

    pub fn u_second(&self, x: f64) -> f64 {
        match &self.repr {
            Repr::Exponential { gamma } => -gamma * gamma * (-gamma * x).exp(),
            Repr::Custom(_) => {
                let h = DIFF_STEP * x.abs().max(1.0);
                (self.u_prime(x + h) - self.u_prime(x - h)) / (2.0 * h)
            }
        }
    }

    /// `u(+inf)`.
    pub fn u_infinity(&self) -> ExtReal {
        match &self.repr {
            Repr::Exponential { .. } => ExtReal::Finite(0.0),
            Repr::Custom(c) => c.u_infinity,
        }
    }

    /// Left derivative of `u` at 0, the kink of `Phi_hat`.
    pub fn beta(&self) -> f64 {
        match &self.repr {
            Repr::Exponential { gamma } => *gamma,
            Repr::Custom(c) => match &c.u_prime {
                Some(d) => d(0.0),
                None => {
                    let h = DIFF_STEP;
                    ((c.u)(0.0) - (c.u)(-h)) / h
                }
            },
        }
    }

    /// Exponential growth rate of `u_hat`: `E[u_hat(a Y)]` is finite for
    /// `Y ~ Exp(r)` iff `a * rate < r`. Zero means sub-exponential growth.
    pub fn tail_rate(&self) -> f64 {
        match &self.repr {
            Repr::Exponential { gamma } => *gamma,
            Repr::Custom(c) => c.tail_rate,
        }
    }

    /// The maximizer of `x -> u(x) - x y`, i.e. `(u')^{-1}(y) = -Phi'(y)`.
    /// `None` when the supremum is not attained.
    pub fn marginal_inverse(&self, y: f64) -> Option<f64> {
        if !(y > 0.0) {
            return None;
        }
        match &self.repr {
            Repr::Exponential { gamma } => Some(-(y / gamma).ln() / gamma),
            Repr::Custom(_) => self.numeric_argmax(y),
        }
    }

    fn numeric_argmax(&self, y: f64) -> Option<f64> {
        let g = |x: f64| self.u_prime(x) - y;
        // u' is nonincreasing: find lo with g(lo) > 0 and hi with g(hi) < 0.
        let (mut lo, mut hi) = (-1.0, 1.0);
        let mut ok = false;
        for _ in 0..80 {
            let glo = g(lo);
            let ghi = g(hi);
            if glo >= 0.0 && ghi <= 0.0 {
                ok = true;
                break;
            }
            if glo < 0.0 {
                lo *= 2.0;
            }
            if ghi > 0.0 {
                hi *= 2.0;
            }
        }
        if ok {
            if let Some(r) = roots::bracketed_root(g, lo, hi, 1e-15, 400) {
                return Some(r.x);
            }
        }
        self.golden_fallback(y).and_then(|(x, _)| x.is_finite().then_some(x))
    }

    // Golden-section search on an expanding bracket. Returns (argmax, value);
    // an argmax pinned to the bracket edge at 1e8 means the sup is not attained.
    fn golden_fallback(&self, y: f64) -> Option<(f64, f64)> {
        let obj = |x: f64| self.u(x) - x * y;
        let mut half = 1.0;
        while half <= 1e8 {
            let (x, v) = roots::golden_max(obj, -half, half, 1e-14, 400);
            if x.abs() < 0.99 * half {
                return Some((x, v));
            }
            half *= 4.0;
        }
        None
    }

    /// `Phi(y) = sup_x { u(x) - x y }`. `+inf` for `y < 0`, `u(+inf)` at `y = 0`.
    pub fn conjugate(&self, y: f64) -> ExtReal {
        if y < 0.0 {
            return ExtReal::PosInf;
        }
        if y == 0.0 {
            return self.u_infinity();
        }
        match &self.repr {
            Repr::Exponential { gamma } => {
                let t = y / gamma;
                ExtReal::Finite(t * t.ln() - t)
            }
            Repr::Custom(_) => match self.numeric_argmax(y) {
                Some(x) => ExtReal::Finite(self.u(x) - x * y),
                None => ExtReal::PosInf,
            },
        }
    }

    /// `Phi` as a plain float; infinities become IEEE infinities.
    pub fn conjugate_f64(&self, y: f64) -> f64 {
        self.conjugate(y).to_f64()
    }

    /// `Phi'(y)` for `y > 0`.
    pub fn conjugate_prime(&self, y: f64) -> f64 {
        match &self.repr {
            Repr::Exponential { gamma } => (y / gamma).ln() / gamma,
            Repr::Custom(_) => match self.marginal_inverse(y) {
                Some(x) => -x,
                None => f64::NAN,
            },
        }
    }

    /// `Phi''(y) = -1 / u''(x*)` with `x*` the maximizer for `y`.
    pub fn conjugate_second(&self, y: f64) -> f64 {
        match &self.repr {
            Repr::Exponential { gamma } => 1.0 / (gamma * y),
            Repr::Custom(_) => match self.marginal_inverse(y) {
                Some(x) => -1.0 / self.u_second(x),
                None => f64::NAN,
            },
        }
    }

    pub fn young_pair(&self) -> YoungPair {
        YoungPair {
            utility: self.clone(),
            beta: self.beta(),
            u_zero: self.u(0.0),
        }
    }

    /// Spot-checks monotonicity and concavity on a uniform grid.
    pub fn check_shape(&self, lo: f64, hi: f64, points: usize) -> Result<()> {
        let xs: Vec<f64> = (0..points).map(|i| lo + (hi - lo) * i as f64 / (points - 1) as f64).collect();
        let vs: Vec<f64> = xs.iter().map(|&x| self.u(x)).collect();
        for (i, w) in vs.windows(2).enumerate() {
            if !(w[1] >= w[0] - 1e-12 * w[0].abs().max(1.0)) {
                return Err(Error::Invalid(format!(
                    "utility `{}` decreases between {} and {}",
                    self.name(),
                    xs[i],
                    xs[i + 1]
                )));
            }
        }
        for (i, w) in vs.windows(3).enumerate() {
            let second = w[2] - 2.0 * w[1] + w[0];
            if second > 1e-9 * w[1].abs().max(1.0) {
                return Err(Error::Invalid(format!(
                    "utility `{}` is not concave near {}",
                    self.name(),
                    xs[i + 1]
                )));
            }
        }
        Ok(())
    }
}

fn estimate_tail_rate(c: &CustomParts) -> f64 {
    let u_hat = |x: f64| -(c.u)(-x) + (c.u)(0.0);
    let rate_at = |x: f64| -> Option<f64> {
        let (a, b) = (u_hat(x), u_hat(2.0 * x));
        (a.is_finite() && b.is_finite() && a > 0.0 && b > 0.0).then(|| (b / a).ln() / x)
    };
    let mut x = 200.0;
    while x > 1.0 {
        if let (Some(far), Some(near)) = (rate_at(x), rate_at(x / 4.0)) {
            // Polynomial growth gives ln(b/a)/x ~ k ln2 / x, which shrinks with x.
            return if far < 0.5 * near { 0.0 } else { far };
        }
        x /= 2.0;
    }
    0.0
}

/// The Young function `u_hat` and its complementary function `Phi_hat`.
#[derive(Debug, Clone)]
pub struct YoungPair {
    utility: UtilityFunction,
    beta: f64,
    u_zero: f64,
}

impl YoungPair {
    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn utility(&self) -> &UtilityFunction {
        &self.utility
    }

    /// `u_hat(x) = -u(-|x|) + u(0)`.
    pub fn u_hat(&self, x: f64) -> f64 {
        match self.utility.gamma() {
            Some(g) => (g * x.abs()).exp_m1(),
            None => -self.utility.u(-x.abs()) + self.u_zero,
        }
    }

    /// Right derivative of `u_hat` on `[0, inf)`: `u'(-x)`.
    pub fn u_hat_prime(&self, x: f64) -> f64 {
        self.utility.u_prime(-x.abs())
    }

    /// `Phi_hat(y)`: zero on `[-beta, beta]`, `Phi(|y|) - Phi(beta)` outside,
    /// with `Phi(beta) = u(0)`.
    pub fn phi_hat(&self, y: f64) -> f64 {
        let a = y.abs();
        if a <= self.beta {
            0.0
        } else {
            (self.utility.conjugate_f64(a) - self.u_zero).max(0.0)
        }
    }
}

/// Serializable description of a utility, as used in files and the CLI.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum UtilitySpec {
    Exponential { gamma: f64 },
    ExponentialNumeric { gamma: f64 },
    ExpSum { terms: Vec<(f64, f64)> },
    LogQuadratic,
}

impl UtilitySpec {
    pub fn build(&self) -> Result<UtilityFunction> {
        match self {
            UtilitySpec::Exponential { gamma } => UtilityFunction::exponential(*gamma),
            UtilitySpec::ExponentialNumeric { gamma } => UtilityFunction::exponential_numeric(*gamma),
            UtilitySpec::ExpSum { terms } => UtilityFunction::exp_sum(terms),
            UtilitySpec::LogQuadratic => UtilityFunction::log_quadratic(),
        }
    }
}
