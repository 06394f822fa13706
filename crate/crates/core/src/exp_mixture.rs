//! A one-period market with an unbounded asset, `S = Y Z`, where `Y ~ Exp(1)`
//! is independent of a discrete `Z` with atoms in `(-1, 1]`, and an investor
//! with exponential utility `-exp(-gamma x)`.
//!
//! Everything reduces to per-atom integrals
//! `int_0^inf y^k exp(-(1 + gamma h z) y + gamma B(y, z)) dy`, available in
//! closed form when the claim is `delta Y`, zero, or constant, and by adaptive
//! quadrature otherwise. Because `inf z = -1` is not attained, the expected
//! utility is finite only for `h` in a half-open interval whose right end is
//! the optimum; the dual optimizer then carries singular mass, measured
//! through the budget identity.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::admissibility::ClaimLaw;
use crate::distribution::check_probs;
use crate::error::{Error, Result};
use crate::ext::ExtReal;
use crate::finite_market::LossModel;
use crate::quadrature;
use crate::roots::bracketed_root;
use crate::utility::UtilityFunction;

pub const DEFAULT_ATOMS: usize = 50;
pub const DEFAULT_P1: f64 = 0.99;
pub const DEFAULT_RATIO: f64 = 0.1;
/// Grid size of the construction-time check `g' > 0`.
pub const MONOTONE_GRID: usize = 64;

const QUAD_REL_TOL: f64 = 1e-13;
const QUAD_MAX_INTERVALS: usize = 4000;
const SIMPSON_DEPTH: u32 = 48;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Atom {
    pub z: f64,
    pub p: f64,
}

/// Atoms `z_1 = 1`, `z_n = 1/n - 1`, with `p_1 = p1`,
/// `p_n = (1 - p1)(1 - r) r^(n-2)` and the geometric tail folded into atom `n`.
pub fn default_atoms(n: usize, p1: f64, r: f64) -> Result<Vec<Atom>> {
    if n < 2 {
        return Err(Error::Invalid(format!("need at least 2 atoms, got {n}")));
    }
    if !(p1 > 0.0 && p1 < 1.0) {
        return Err(Error::Invalid(format!("p1 must lie in (0, 1), got {p1}")));
    }
    if !(r > 0.0 && r < 1.0) {
        return Err(Error::Invalid(format!("geometric ratio must lie in (0, 1), got {r}")));
    }
    let rest = 1.0 - p1;
    let mut atoms = vec![Atom { z: 1.0, p: p1 }];
    for k in 2..n {
        atoms.push(Atom { z: 1.0 / k as f64 - 1.0, p: rest * (1.0 - r) * r.powi(k as i32 - 2) });
    }
    atoms.push(Atom { z: 1.0 / n as f64 - 1.0, p: rest * r.powi(n as i32 - 2) });
    Ok(atoms)
}

type AlphaFn = Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>;

#[derive(Clone)]
enum AlphaRepr {
    Constant(f64),
    Function(AlphaFn),
    /// Per atom `z`, breakpoints `(y, value)` sorted by `y`.
    Grid(Vec<(f64, Vec<(f64, f64)>)>),
}

/// A bounded claim `alpha(Y, Z)` with a bound `|alpha| <= bound`.
#[derive(Clone)]
pub struct BoundedAlpha {
    label: String,
    bound: f64,
    repr: AlphaRepr,
}

impl fmt::Debug for BoundedAlpha {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "BoundedAlpha({}, |alpha| <= {})", self.label, self.bound)
    }
}

/// Atom values match grid values within this.
const Z_MATCH_TOL: f64 = 1e-9;

impl BoundedAlpha {
    pub fn constant(c: f64) -> Result<Self> {
        if !c.is_finite() {
            return Err(Error::Invalid("constant claim must be finite".into()));
        }
        Ok(BoundedAlpha { label: format!("{c}"), bound: c.abs(), repr: AlphaRepr::Constant(c) })
    }

    /// A callable claim with a certified bound, spot-checked on a grid.
    pub fn function<F>(label: impl Into<String>, f: F, bound: f64) -> Result<Self>
    where
        F: Fn(f64, f64) -> f64 + Send + Sync + 'static,
    {
        if !(bound >= 0.0 && bound.is_finite()) {
            return Err(Error::Invalid(format!("bound must be finite and nonnegative, got {bound}")));
        }
        for i in 0..=200 {
            let y = 0.25 * i as f64;
            for j in 0..=20 {
                let z = -1.0 + 0.1 * j as f64;
                let v = f(y, z);
                if !(v.abs() <= bound) {
                    return Err(Error::Invalid(format!("claim value {v} at (y={y}, z={z}) exceeds the bound {bound}")));
                }
            }
        }
        Ok(BoundedAlpha { label: label.into(), bound, repr: AlphaRepr::Function(Arc::new(f)) })
    }

    /// `0.5 tanh(y z)`, bounded by 0.5.
    pub fn default_tanh() -> Self {
        BoundedAlpha::function("0.5 tanh(y z)", |y, z| 0.5 * (y * z).tanh(), 0.5).expect("bounded by construction")
    }

    /// Piecewise linear in `y` for each `z`, flat beyond the last breakpoint.
    pub fn from_grid(points: &[[f64; 3]]) -> Result<Self> {
        let mut per_atom: Vec<(f64, Vec<(f64, f64)>)> = Vec::new();
        for &[y, z, v] in points {
            if !(y >= 0.0 && y.is_finite() && z.is_finite() && v.is_finite()) {
                return Err(Error::Invalid(format!("bad grid point [{y}, {z}, {v}]")));
            }
            match per_atom.iter_mut().find(|(zz, _)| (zz - z).abs() <= Z_MATCH_TOL) {
                Some((_, pts)) => pts.push((y, v)),
                None => per_atom.push((z, vec![(y, v)])),
            }
        }
        if per_atom.is_empty() {
            return Err(Error::Invalid("claim grid is empty".into()));
        }
        for (z, pts) in per_atom.iter_mut() {
            pts.sort_by(|a, b| a.0.total_cmp(&b.0));
            if pts.windows(2).any(|w| w[0].0 == w[1].0) {
                return Err(Error::Invalid(format!("duplicate y breakpoint for z = {z}")));
            }
        }
        let bound = points.iter().fold(0.0f64, |m, p| m.max(p[2].abs()));
        Ok(BoundedAlpha { label: format!("grid({} points)", points.len()), bound, repr: AlphaRepr::Grid(per_atom) })
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn bound(&self) -> f64 {
        self.bound
    }

    pub fn constant_value(&self) -> Option<f64> {
        match self.repr {
            AlphaRepr::Constant(c) => Some(c),
            _ => None,
        }
    }

    fn covers(&self, z: f64) -> bool {
        match &self.repr {
            AlphaRepr::Grid(g) => g.iter().any(|(zz, _)| (zz - z).abs() <= Z_MATCH_TOL),
            _ => true,
        }
    }

    pub fn eval(&self, y: f64, z: f64) -> f64 {
        match &self.repr {
            AlphaRepr::Constant(c) => *c,
            AlphaRepr::Function(f) => f(y, z),
            AlphaRepr::Grid(g) => match g.iter().find(|(zz, _)| (zz - z).abs() <= Z_MATCH_TOL) {
                Some((_, pts)) => interpolate(pts, y),
                None => f64::NAN,
            },
        }
    }
}

fn interpolate(pts: &[(f64, f64)], y: f64) -> f64 {
    if y <= pts[0].0 {
        return pts[0].1;
    }
    let last = pts[pts.len() - 1];
    if y >= last.0 {
        return last.1;
    }
    let k = pts.partition_point(|p| p.0 <= y);
    let (y0, v0) = pts[k - 1];
    let (y1, v1) = pts[k];
    v0 + (v1 - v0) * (y - y0) / (y1 - y0)
}

#[derive(Debug, Clone)]
pub enum MixtureClaim {
    Zero,
    DeltaY { delta: f64 },
    Bounded(BoundedAlpha),
}

impl MixtureClaim {
    pub fn value(&self, y: f64, z: f64) -> f64 {
        match self {
            MixtureClaim::Zero => 0.0,
            MixtureClaim::DeltaY { delta } => delta * y,
            MixtureClaim::Bounded(a) => a.eval(y, z),
        }
    }

    /// Tail description used for integrability thresholds.
    pub fn law(&self) -> ClaimLaw {
        match self {
            MixtureClaim::DeltaY { delta } => ClaimLaw::ExpTail { pos_coef: *delta, neg_coef: 0.0, rate: 1.0 },
            _ => ClaimLaw::ExpTail { pos_coef: 0.0, neg_coef: 0.0, rate: 1.0 },
        }
    }

    fn shift(&self) -> f64 {
        match self {
            MixtureClaim::DeltaY { delta } => *delta,
            _ => 0.0,
        }
    }

    fn bound(&self) -> f64 {
        match self {
            MixtureClaim::Bounded(a) => a.bound(),
            _ => 0.0,
        }
    }

    /// Constant value of a claim that does not depend on `(y, z)`.
    fn constant(&self) -> Option<f64> {
        match self {
            MixtureClaim::Zero => Some(0.0),
            MixtureClaim::DeltaY { .. } => None,
            MixtureClaim::Bounded(a) => a.constant_value(),
        }
    }

    pub fn describe(&self) -> String {
        match self {
            MixtureClaim::Zero => "B = 0".into(),
            MixtureClaim::DeltaY { delta } => format!("B = {delta} Y"),
            MixtureClaim::Bounded(a) => format!("B = alpha(Y, Z), alpha = {}", a.label()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossVariable {
    OnePlusY,
    OnePlusSqrtY,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Moment {
    /// `int exp(...) dy`
    Mass,
    /// `int y exp(...) dy`
    Y,
    /// `int B(y, z) exp(...) dy`
    Claim,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Route {
    /// Closed form where one exists, Gauss-Kronrod otherwise.
    Primary,
    /// Gauss-Kronrod where a closed form exists, adaptive Simpson otherwise.
    CrossCheck,
}

#[derive(Debug, Clone)]
pub struct ExpMixtureMarket {
    atoms: Vec<Atom>,
    gamma: f64,
    claim: MixtureClaim,
    loss: LossVariable,
    monotone_checked: bool,
}

#[derive(Debug, Clone)]
pub struct ExpMixtureBuilder {
    gamma: f64,
    atoms: Option<Vec<Atom>>,
    n_atoms: usize,
    p1: f64,
    ratio: f64,
    claim: MixtureClaim,
    loss: LossVariable,
    check_monotone: bool,
}

impl Default for ExpMixtureBuilder {
    fn default() -> Self {
        ExpMixtureBuilder {
            gamma: 1.0,
            atoms: None,
            n_atoms: DEFAULT_ATOMS,
            p1: DEFAULT_P1,
            ratio: DEFAULT_RATIO,
            claim: MixtureClaim::Zero,
            loss: LossVariable::OnePlusY,
            check_monotone: true,
        }
    }
}

impl ExpMixtureBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn gamma(mut self, gamma: f64) -> Self {
        self.gamma = gamma;
        self
    }

    pub fn atoms(mut self, atoms: Vec<Atom>) -> Self {
        self.atoms = Some(atoms);
        self
    }

    pub fn default_weights(mut self, n_atoms: usize, p1: f64, ratio: f64) -> Self {
        self.atoms = None;
        self.n_atoms = n_atoms;
        self.p1 = p1;
        self.ratio = ratio;
        self
    }

    pub fn claim(mut self, claim: MixtureClaim) -> Self {
        self.claim = claim;
        self
    }

    pub fn loss(mut self, loss: LossVariable) -> Self {
        self.loss = loss;
        self
    }

    /// Skips the `g' > 0` check; the optimum may then be interior.
    pub fn skip_monotonicity_check(mut self) -> Self {
        self.check_monotone = false;
        self
    }

    pub fn build(self) -> Result<ExpMixtureMarket> {
        if !(self.gamma > 0.0 && self.gamma.is_finite()) {
            return Err(Error::Invalid(format!("gamma must be positive, got {}", self.gamma)));
        }
        let atoms = match self.atoms {
            Some(a) => a,
            None => default_atoms(self.n_atoms, self.p1, self.ratio)?,
        };
        if atoms.is_empty() {
            return Err(Error::Invalid("no atoms".into()));
        }
        let probs: Vec<f64> = atoms.iter().map(|a| a.p).collect();
        check_probs(&probs)?;
        if atoms.iter().any(|a| !(a.p > 0.0)) {
            return Err(Error::Invalid("atom probabilities must be positive".into()));
        }
        if let Some(a) = atoms.iter().find(|a| !(a.z > -1.0 && a.z <= 1.0)) {
            return Err(Error::Invalid(format!("atom z = {} outside (-1, 1]", a.z)));
        }
        if atoms[0].z != 1.0 {
            return Err(Error::Invalid(format!("the first atom must be z = 1, got {}", atoms[0].z)));
        }
        match &self.claim {
            MixtureClaim::DeltaY { delta } => {
                if !(*delta > 0.0 && self.gamma * delta < 1.0) {
                    return Err(Error::Invalid(format!("delta must lie in (0, 1/gamma), got {delta}")));
                }
            }
            MixtureClaim::Bounded(a) => {
                if let Some(at) = atoms.iter().find(|at| !a.covers(at.z)) {
                    return Err(Error::Invalid(format!("claim grid has no values for atom z = {}", at.z)));
                }
            }
            MixtureClaim::Zero => {}
        }
        let m = ExpMixtureMarket { atoms, gamma: self.gamma, claim: self.claim, loss: self.loss, monotone_checked: self.check_monotone };
        if self.check_monotone {
            m.check_monotone()?;
        }
        Ok(m)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OptimalH {
    pub h_star: f64,
    pub attained_at_boundary: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SingularMass {
    /// `h* g'(h*) / (gamma N)`.
    pub value: f64,
    /// `E_Q[h* S]` integrated along the cross-check route.
    pub cross_check: f64,
}

impl SingularMass {
    pub fn relative_disagreement(&self) -> f64 {
        (self.value - self.cross_check).abs() / self.value.abs().max(f64::MIN_POSITIVE)
    }
}

/// A priori bounds on the singular part, given the combined contribution
/// `S = Q^s_hat(-B) + ||Q^s||`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SingularBounds {
    #[serde(rename = "L")]
    pub big_l: ExtReal,
    #[serde(rename = "l")]
    pub small_l: ExtReal,
    pub combined: f64,
    /// Bounds on `Q^s_hat(-B)`.
    pub action_lower: f64,
    pub action_upper: f64,
    /// Bounds on `||Q^s||`.
    pub norm_lower: f64,
    pub norm_upper: ExtReal,
    /// `Q^s(B) = 0`, which holds when every multiple of `B` has a finite moment.
    pub claim_invisible: bool,
}

impl ExpMixtureMarket {
    pub fn builder() -> ExpMixtureBuilder {
        ExpMixtureBuilder::new()
    }

    pub fn atoms(&self) -> &[Atom] {
        &self.atoms
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn claim(&self) -> &MixtureClaim {
        &self.claim
    }

    pub fn loss_variable(&self) -> LossVariable {
        self.loss
    }

    pub fn utility(&self) -> UtilityFunction {
        UtilityFunction::exponential(self.gamma).expect("gamma validated")
    }

    /// Same market without the claim.
    pub fn without_claim(&self) -> Result<ExpMixtureMarket> {
        let mut b = ExpMixtureBuilder::new().gamma(self.gamma).atoms(self.atoms.clone()).loss(self.loss).claim(MixtureClaim::Zero);
        if !self.monotone_checked {
            b = b.skip_monotonicity_check();
        }
        b.build()
    }

    /// `(lo, hi)`: `E[u(h S - B)]` is finite iff `lo < h <= hi`, for the
    /// infinite family whose atoms accumulate at `z = -1`.
    pub fn admissible_interval(&self) -> (f64, f64) {
        let s = self.claim.shift();
        let inv = 1.0 / self.gamma;
        (s - inv, inv - s)
    }

    pub fn is_admissible(&self, h: f64) -> bool {
        let (lo, hi) = self.admissible_interval();
        h > lo && h <= hi
    }

    /// Decay rate of `exp(-gamma (h z y - B)) exp(-y)` in `y`, ignoring a bounded claim.
    fn rate(&self, z: f64, h: f64) -> f64 {
        1.0 + self.gamma * (h * z - self.claim.shift())
    }

    fn integrand(&self, z: f64, h: f64, kind: Moment) -> impl Fn(f64) -> f64 + '_ {
        let g = self.gamma;
        move |y: f64| {
            let b = self.claim.value(y, z);
            let w = (-(1.0 + g * h * z) * y + g * b).exp();
            match kind {
                Moment::Mass => w,
                Moment::Y => y * w,
                Moment::Claim => b * w,
            }
        }
    }

    /// Truncation point beyond which every moment integrand is below
    /// `1e-16` of its size.
    fn y_max(&self, r: f64) -> f64 {
        let c = 2.0 * self.gamma * self.claim.bound() + 16.0 * std::f64::consts::LN_10;
        (c + 2.0 * (c + 1.0).ln() + 4.0) / r
    }

    /// A per-atom moment at `h`, which must satisfy `rate > 0`.
    pub fn atom_moment(&self, atom: usize, h: f64, kind: Moment, route: Route) -> f64 {
        let z = self.atoms[atom].z;
        let r = self.rate(z, h);
        debug_assert!(r > 0.0);
        let closed = match (&self.claim, kind) {
            (MixtureClaim::DeltaY { .. }, Moment::Mass) => Some(1.0 / r),
            (MixtureClaim::DeltaY { .. }, Moment::Y) => Some(1.0 / (r * r)),
            (MixtureClaim::DeltaY { delta }, Moment::Claim) => Some(delta / (r * r)),
            (c, k) => c.constant().map(|v| {
                let e = (self.gamma * v).exp();
                match k {
                    Moment::Mass => e / r,
                    Moment::Y => e / (r * r),
                    Moment::Claim => v * e / r,
                }
            }),
        };
        let top = self.y_max(r);
        match (route, closed) {
            (Route::Primary, Some(v)) => v,
            (Route::Primary, None) | (Route::CrossCheck, Some(_)) => {
                quadrature::integrate(self.integrand(z, h, kind), 0.0, top, QUAD_REL_TOL, 0.0, QUAD_MAX_INTERVALS).value
            }
            (Route::CrossCheck, None) => {
                let scale = (self.gamma * self.claim.bound()).exp() / r;
                let tol = 1e-14 * scale * if kind == Moment::Y { 1.0 / r } else { 1.0 };
                quadrature::simpson(self.integrand(z, h, kind), 0.0, top, tol, SIMPSON_DEPTH)
            }
        }
    }

    fn weighted_sum(&self, h: f64, kind: Moment, route: Route, weight: impl Fn(&Atom) -> f64) -> f64 {
        // Fixed summation order keeps results reproducible.
        self.atoms.iter().enumerate().map(|(n, a)| weight(a) * self.atom_moment(n, h, kind, route)).sum()
    }

    /// `g(h) = E[-exp(-gamma (h S - B))]`, `-inf` outside the admissible interval.
    pub fn g(&self, h: f64) -> ExtReal {
        self.g_route(h, Route::Primary)
    }

    pub fn g_route(&self, h: f64, route: Route) -> ExtReal {
        if !self.is_admissible(h) {
            return ExtReal::NegInf;
        }
        ExtReal::Finite(-self.weighted_sum(h, Moment::Mass, route, |a| a.p))
    }

    /// `g'(h) = gamma E[S exp(-gamma (h S - B))]`.
    pub fn g_prime(&self, h: f64) -> Result<f64> {
        self.g_prime_route(h, Route::Primary)
    }

    pub fn g_prime_route(&self, h: f64, route: Route) -> Result<f64> {
        if !self.is_admissible(h) {
            return Err(Error::Divergent(format!("g'({h}) diverges outside the admissible interval")));
        }
        Ok(self.gamma * self.weighted_sum(h, Moment::Y, route, |a| a.p * a.z))
    }

    fn check_monotone(&self) -> Result<()> {
        let (lo, hi) = self.admissible_interval();
        for k in 1..=MONOTONE_GRID {
            let h = lo + (hi - lo) * k as f64 / MONOTONE_GRID as f64;
            let slope = self.g_prime(h)?;
            if !(slope > 0.0) {
                return Err(Error::NotMonotone { h, slope });
            }
        }
        Ok(())
    }

    /// Maximizer of `g`: the right end of the admissible interval when `g`
    /// increases throughout, otherwise the interior root of `g'`.
    pub fn optimal_h(&self) -> Result<OptimalH> {
        let (lo, hi) = self.admissible_interval();
        let end_slope = self.g_prime(hi)?;
        if end_slope > 0.0 {
            return Ok(OptimalH { h_star: hi, attained_at_boundary: true });
        }
        if self.monotone_checked {
            return Err(Error::NotMonotone { h: hi, slope: end_slope });
        }
        // g is concave and g' blows up at the left end.
        let mut left = None;
        for k in 1..=60 {
            let h = lo + (hi - lo) * 0.5f64.powi(k);
            if self.g_prime(h)? > 0.0 {
                left = Some(h);
                break;
            }
        }
        let left = left.ok_or_else(|| Error::NoRoot("g' is nowhere positive".into()))?;
        let root = bracketed_root(|h| self.g_prime(h).unwrap_or(f64::NAN), left, hi, 1e-15, 400)
            .ok_or_else(|| Error::NoRoot("interior optimum of g".into()))?;
        Ok(OptimalH { h_star: root.x, attained_at_boundary: false })
    }

    pub fn dual_regular_density(&self) -> Result<RegularDensity<'_>> {
        let opt = self.optimal_h()?;
        let normalizer = self.weighted_sum(opt.h_star, Moment::Mass, Route::Primary, |a| a.p);
        if !(normalizer.is_finite() && normalizer > 0.0) {
            return Err(Error::Divergent("normalizer of the regular density".into()));
        }
        Ok(RegularDensity { market: self, h_star: opt.h_star, normalizer })
    }

    /// `Q^s_hat(-B) + ||Q^s|| = E_{Q^r}[f_B]` with `f_B = h* S`.
    pub fn singular_mass(&self) -> Result<SingularMass> {
        let d = self.dual_regular_density()?;
        let h = d.h_star;
        let value = h * self.g_prime(h)? / (self.gamma * d.normalizer);
        let cross_norm = self.weighted_sum(h, Moment::Mass, Route::CrossCheck, |a| a.p);
        let cross_mean = self.weighted_sum(h, Moment::Y, Route::CrossCheck, |a| a.p * a.z);
        Ok(SingularMass { value, cross_check: h * cross_mean / cross_norm })
    }

    pub fn singular_bounds(&self) -> Result<SingularBounds> {
        let u = self.utility();
        let law = self.claim.law();
        let big_l = law.positive_threshold(&u);
        let small_l = law.negative_threshold(&u);
        let combined = self.singular_mass()?.value;
        let inv = |t: ExtReal| match t {
            ExtReal::Finite(t) => 1.0 / t,
            _ => 0.0,
        };
        let (il, is) = (inv(big_l), inv(small_l));
        let norm_upper = if il < 1.0 { ExtReal::Finite(combined / (1.0 - il)) } else { ExtReal::PosInf };
        Ok(SingularBounds {
            big_l,
            small_l,
            combined,
            action_lower: if il < 1.0 { -combined * il / (1.0 - il) } else { f64::NEG_INFINITY },
            action_upper: combined * is / (1.0 + is),
            norm_lower: combined / (1.0 + is),
            norm_upper,
            claim_invisible: big_l.is_pos_inf() && small_l.is_pos_inf(),
        })
    }

    /// `E[Z]`.
    pub fn mean_z(&self) -> f64 {
        self.atoms.iter().map(|a| a.p * a.z).sum()
    }

    /// `Cov(B, S)`.
    pub fn covariance(&self) -> f64 {
        match &self.claim {
            MixtureClaim::Zero => 0.0,
            // Var[Y] = 1
            MixtureClaim::DeltaY { delta } => delta * self.mean_z(),
            MixtureClaim::Bounded(a) => {
                let top = self.y_max(1.0);
                let (mut eb, mut ebs) = (0.0, 0.0);
                for at in &self.atoms {
                    let z = at.z;
                    let m0 = quadrature::integrate(|y| a.eval(y, z) * (-y).exp(), 0.0, top, QUAD_REL_TOL, 1e-15, QUAD_MAX_INTERVALS).value;
                    let m1 = quadrature::integrate(|y| y * a.eval(y, z) * (-y).exp(), 0.0, top, QUAD_REL_TOL, 1e-15, QUAD_MAX_INTERVALS).value;
                    eb += at.p * m0;
                    ebs += at.p * z * m1;
                }
                ebs - eb * self.mean_z()
            }
        }
    }

    /// Whether `|S| <= c W` for some constant `c`.
    pub fn loss_suitable(&self) -> bool {
        self.loss == LossVariable::OnePlusY
    }
}

impl LossModel for ExpMixtureMarket {
    fn loss_integrability(&self, u: &UtilityFunction) -> ExtReal {
        match self.loss {
            LossVariable::OnePlusY => {
                let r = u.tail_rate();
                if r > 0.0 {
                    ExtReal::Finite(1.0 / r)
                } else {
                    ExtReal::PosInf
                }
            }
            LossVariable::OnePlusSqrtY => ExtReal::PosInf,
        }
    }
}

/// `h*_B - h*_0`: the extra position the claim induces.
pub fn hedging_delta(with_claim: &ExpMixtureMarket, without_claim: &ExpMixtureMarket) -> Result<f64> {
    Ok(with_claim.optimal_h()?.h_star - without_claim.optimal_h()?.h_star)
}

/// `dQ^r/dP = exp(-gamma (h* S - B)) / N`.
#[derive(Debug, Clone)]
pub struct RegularDensity<'a> {
    market: &'a ExpMixtureMarket,
    pub h_star: f64,
    pub normalizer: f64,
}

impl RegularDensity<'_> {
    /// Density at `Y = y` on atom `n`, relative to `P`.
    pub fn density(&self, atom: usize, y: f64) -> f64 {
        let m = self.market;
        let z = m.atoms[atom].z;
        (-m.gamma * (self.h_star * z * y - m.claim.value(y, z))).exp() / self.normalizer
    }

    /// `Q^r(Z = z_n)`.
    pub fn atom_mass(&self, atom: usize) -> f64 {
        self.market.atoms[atom].p * self.market.atom_moment(atom, self.h_star, Moment::Mass, Route::Primary) / self.normalizer
    }

    pub fn total_mass(&self) -> f64 {
        (0..self.market.atoms.len()).map(|n| self.atom_mass(n)).sum()
    }

    /// The normalizer along the cross-check route.
    pub fn normalizer_cross_check(&self) -> f64 {
        self.market.weighted_sum(self.h_star, Moment::Mass, Route::CrossCheck, |a| a.p)
    }

    /// `E_{Q^r}[Y | Z = z_n]`.
    pub fn conditional_mean_y(&self, atom: usize) -> f64 {
        let m = self.market;
        m.atom_moment(atom, self.h_star, Moment::Y, Route::Primary) / m.atom_moment(atom, self.h_star, Moment::Mass, Route::Primary)
    }

    /// `H(Q^r | P) = E_Q[-gamma (h* S - B)] - ln N`.
    pub fn entropy(&self) -> f64 {
        let m = self.market;
        let h = self.h_star;
        let s = m.weighted_sum(h, Moment::Y, Route::Primary, |a| a.p * a.z);
        let b = m.weighted_sum(h, Moment::Claim, Route::Primary, |a| a.p);
        m.gamma * (b - h * s) / self.normalizer - self.normalizer.ln()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn delta_market(delta: f64) -> ExpMixtureMarket {
        ExpMixtureMarket::builder().claim(MixtureClaim::DeltaY { delta }).build().unwrap()
    }

    #[test]
    fn default_weights_sum_to_one() {
        let a = default_atoms(50, 0.99, 0.1).unwrap();
        assert_eq!(a.len(), 50);
        assert!((a.iter().map(|x| x.p).sum::<f64>() - 1.0).abs() < 1e-15);
        assert_eq!(a[1].z, -0.5);
        assert!((a[49].z - (1.0 / 50.0 - 1.0)).abs() < 1e-16);
    }

    #[test]
    fn g_at_zero() {
        let m = delta_market(0.3);
        assert_relative_eq!(m.g(0.0).to_f64(), -1.0 / 0.7, epsilon = 1e-14);
        let z = ExpMixtureMarket::builder().build().unwrap();
        assert_relative_eq!(z.g(0.0).to_f64(), -1.0, epsilon = 1e-15);
    }

    #[test]
    fn g_outside_interval_is_minus_infinity() {
        let m = delta_market(0.3);
        assert_eq!(m.g(0.8), ExtReal::NegInf);
        assert_eq!(m.g(-0.7), ExtReal::NegInf);
        assert!(m.g(0.7).is_finite());
        assert!(m.g_prime(0.8).is_err());
    }

    #[test]
    fn g_prime_examples() {
        let single = ExpMixtureMarket::builder().atoms(vec![Atom { z: 1.0, p: 1.0 }]).claim(MixtureClaim::DeltaY { delta: 0.3 }).build().unwrap();
        for h in [-0.5, 0.0, 0.3, 0.7] {
            assert_relative_eq!(single.g_prime(h).unwrap(), 1.0 / (1.0 + h - 0.3f64).powi(2), max_relative = 1e-14);
        }
        let two = ExpMixtureMarket::builder()
            .atoms(vec![Atom { z: 1.0, p: 0.5 }, Atom { z: -0.5, p: 0.5 }])
            .skip_monotonicity_check()
            .build()
            .unwrap();
        assert_relative_eq!(two.g_prime(0.0).unwrap(), 0.25, epsilon = 1e-15);
    }

    #[test]
    fn g_prime_matches_finite_differences() {
        for m in [delta_market(0.3), ExpMixtureMarket::builder().claim(MixtureClaim::Bounded(BoundedAlpha::default_tanh())).build().unwrap()] {
            for h in [-0.3, 0.1, 0.5] {
                let e = 1e-5;
                let fd = (m.g(h + e).to_f64() - m.g(h - e).to_f64()) / (2.0 * e);
                assert!((fd - m.g_prime(h).unwrap()).abs() < 1e-6, "h={h}");
            }
        }
    }

    #[test]
    fn g_is_concave() {
        let m = delta_market(0.3);
        let (lo, hi) = m.admissible_interval();
        let step = (hi - lo) / 50.0;
        for k in 1..49 {
            let h = lo + step * k as f64;
            let second = m.g(h + step).to_f64() - 2.0 * m.g(h).to_f64() + m.g(h - step).to_f64();
            assert!(second <= 1e-8);
        }
    }

    #[test]
    fn closed_forms_agree_with_quadrature() {
        let m = delta_market(0.3);
        for n in [0, 1, 5, 49] {
            for kind in [Moment::Mass, Moment::Y, Moment::Claim] {
                for h in [-0.6, 0.0, 0.7] {
                    let a = m.atom_moment(n, h, kind, Route::Primary);
                    let b = m.atom_moment(n, h, kind, Route::CrossCheck);
                    assert!((a - b).abs() <= 1e-8 * a.abs(), "atom {n} {kind:?} h={h}: {a} vs {b}");
                }
            }
        }
    }

    #[test]
    fn optimal_h_at_the_boundary() {
        let m = delta_market(0.3);
        let o = m.optimal_h().unwrap();
        assert_eq!(o.h_star, 0.7);
        assert!(o.attained_at_boundary);
        assert!(m.g_prime(0.7).unwrap() > 0.0);
        let b = ExpMixtureMarket::builder().claim(MixtureClaim::Bounded(BoundedAlpha::constant(0.0).unwrap())).build().unwrap();
        assert_eq!(b.optimal_h().unwrap().h_star, 1.0);
        let single = ExpMixtureMarket::builder().atoms(vec![Atom { z: 1.0, p: 1.0 }]).claim(MixtureClaim::DeltaY { delta: 0.3 }).build().unwrap();
        assert_eq!(single.optimal_h().unwrap().h_star, 0.7);
    }

    #[test]
    fn heavy_tail_weights_fail_the_check() {
        let r = ExpMixtureMarket::builder().default_weights(50, 0.5, 0.1).claim(MixtureClaim::DeltaY { delta: 0.99 }).build();
        assert!(matches!(r, Err(Error::NotMonotone { .. })));
        // Overriding finds the interior optimum.
        let m = ExpMixtureMarket::builder()
            .default_weights(50, 0.5, 0.1)
            .claim(MixtureClaim::DeltaY { delta: 0.99 })
            .skip_monotonicity_check()
            .build()
            .unwrap();
        let o = m.optimal_h().unwrap();
        assert!(!o.attained_at_boundary);
        assert!(m.g_prime(o.h_star).unwrap().abs() < 1e-6);
    }

    #[test]
    fn regular_density_is_normalized() {
        let m = delta_market(0.3);
        let d = m.dual_regular_density().unwrap();
        assert!((d.total_mass() - 1.0).abs() < 1e-10);
        let exact: f64 = m.atoms().iter().map(|a| a.p / (0.7 * a.z + 0.7)).sum();
        assert_relative_eq!(d.normalizer, exact, max_relative = 1e-14);
        assert!((d.normalizer_cross_check() - exact).abs() < 1e-8 * exact);
        assert!(d.entropy().is_finite() && d.entropy() >= 0.0);
    }

    #[test]
    fn single_atom_density_is_a_tilted_exponential() {
        let m = ExpMixtureMarket::builder().atoms(vec![Atom { z: 1.0, p: 1.0 }]).build().unwrap();
        let d = m.dual_regular_density().unwrap();
        assert_eq!(d.h_star, 1.0);
        assert_relative_eq!(d.conditional_mean_y(0), 0.5, epsilon = 1e-15);
        assert_relative_eq!(d.density(0, 0.0), 2.0, epsilon = 1e-15);
    }

    #[test]
    fn singular_mass_two_routes() {
        let m = delta_market(0.3);
        let s = m.singular_mass().unwrap();
        assert!(s.value > 0.0);
        assert!(s.relative_disagreement() < 1e-8);
        let z = ExpMixtureMarket::builder().build().unwrap();
        assert!(z.singular_mass().unwrap().value > 0.0);
        let t = ExpMixtureMarket::builder().claim(MixtureClaim::Bounded(BoundedAlpha::default_tanh())).build().unwrap();
        let s = t.singular_mass().unwrap();
        assert!(s.value > 0.0);
        assert!(s.relative_disagreement() < 1e-8, "{s:?}");
    }

    #[test]
    fn bounds_for_delta_and_bounded_claims() {
        let b = delta_market(0.3).singular_bounds().unwrap();
        assert_relative_eq!(b.big_l.to_f64(), 1.0 / 0.3, epsilon = 1e-14);
        assert!(b.small_l.is_pos_inf());
        assert_eq!(b.action_upper, 0.0);
        assert!(b.action_lower < 0.0);
        assert!(!b.claim_invisible);
        let t = ExpMixtureMarket::builder().claim(MixtureClaim::Bounded(BoundedAlpha::default_tanh())).build().unwrap();
        let b = t.singular_bounds().unwrap();
        assert!(b.big_l.is_pos_inf() && b.small_l.is_pos_inf());
        assert_eq!((b.action_lower, b.action_upper), (0.0, 0.0));
        assert!(b.claim_invisible);
    }

    #[test]
    fn hedging_deltas() {
        let m = delta_market(0.3);
        let z = m.without_claim().unwrap();
        assert!((hedging_delta(&m, &z).unwrap() + 0.3).abs() < 1e-12);
        let t = ExpMixtureMarket::builder().claim(MixtureClaim::Bounded(BoundedAlpha::default_tanh())).build().unwrap();
        assert_eq!(hedging_delta(&t, &t.without_claim().unwrap()).unwrap(), 0.0);
        let small = delta_market(1e-9);
        assert!(hedging_delta(&small, &small.without_claim().unwrap()).unwrap().abs() < 1e-8);
    }

    #[test]
    fn covariance_positive_while_hedge_negative() {
        let m = delta_market(0.3);
        assert!(m.covariance() > 0.0);
        assert_relative_eq!(m.covariance(), 0.3 * m.mean_z(), epsilon = 1e-15);
        assert!(hedging_delta(&m, &m.without_claim().unwrap()).unwrap() < 0.0);
    }

    #[test]
    fn grid_claims_interpolate() {
        let atoms = vec![Atom { z: 1.0, p: 0.9 }, Atom { z: -0.5, p: 0.1 }];
        let grid = [[0.0, 1.0, 0.0], [2.0, 1.0, 0.4], [0.0, -0.5, 0.1], [1.0, -0.5, -0.1]];
        let a = BoundedAlpha::from_grid(&grid).unwrap();
        assert_relative_eq!(a.eval(1.0, 1.0), 0.2, epsilon = 1e-15);
        assert_relative_eq!(a.eval(5.0, -0.5), -0.1, epsilon = 1e-15);
        let m = ExpMixtureMarket::builder().atoms(atoms.clone()).claim(MixtureClaim::Bounded(a.clone())).build().unwrap();
        assert!(m.singular_mass().unwrap().relative_disagreement() < 1e-8);
        let missing = ExpMixtureMarket::builder().atoms(vec![Atom { z: 1.0, p: 0.5 }, Atom { z: -0.25, p: 0.5 }]).claim(MixtureClaim::Bounded(a)).build();
        assert!(missing.is_err());
    }

    #[test]
    fn loss_variable_compatibility() {
        use crate::finite_market::{check_compatible, Compatibility};
        let m = delta_market(0.3);
        let c = check_compatible(&m, &m.utility());
        assert_eq!(c, Compatibility { strong: false, weak: true });
        assert!(m.loss_suitable());
        let s = ExpMixtureMarket::builder().loss(LossVariable::OnePlusSqrtY).build().unwrap();
        assert_eq!(check_compatible(&s, &s.utility()), Compatibility { strong: true, weak: true });
        assert!(!s.loss_suitable());
    }

    #[test]
    fn invalid_inputs() {
        assert!(ExpMixtureMarket::builder().claim(MixtureClaim::DeltaY { delta: 1.0 }).build().is_err());
        assert!(ExpMixtureMarket::builder().atoms(vec![Atom { z: -0.5, p: 1.0 }]).build().is_err());
        assert!(ExpMixtureMarket::builder().atoms(vec![Atom { z: 1.0, p: 0.5 }, Atom { z: -1.0, p: 0.5 }]).build().is_err());
        assert!(ExpMixtureMarket::builder().atoms(vec![Atom { z: 1.0, p: 0.5 }]).build().is_err());
        assert!(BoundedAlpha::function("y", |y, _| y, 1.0).is_err());
    }
}
