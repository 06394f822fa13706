//! Seeded verification suites and the mixture example reports.
//!
//! Every suite reports the largest residual of each check it runs next to
//! the tolerance it is held to. Reports carry no timings, so equal seeds
//! give byte-identical output.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::distribution::DiscreteDistribution;
use crate::dual;
use crate::error::Result;
use crate::exp_mixture::{hedging_delta, BoundedAlpha, ExpMixtureMarket, MixtureClaim, SingularBounds, DEFAULT_ATOMS, DEFAULT_P1, DEFAULT_RATIO};
use crate::finite_market::{replicable, FiniteMarket};
use crate::indifference::{self, ClaimPair};
use crate::oracle::{self, GridSpec};
use crate::orlicz::luxemburg_norm;
use crate::random;
use crate::utility::UtilityFunction;

pub const GAMMAS: [f64; 3] = [0.5, 1.0, 2.0];

pub const SUITES: [&str; 9] = ["duality", "oracle", "routes", "replication", "axioms", "fatou", "asymptotics", "orlicz", "examples"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metric {
    pub name: String,
    pub max: f64,
    pub tolerance: f64,
}

impl Metric {
    pub fn passed(&self) -> bool {
        self.max <= self.tolerance
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteReport {
    pub name: String,
    pub cases: usize,
    pub metrics: Vec<Metric>,
    /// Solver failures, each counted as a failed case.
    pub errors: Vec<String>,
    pub passed: bool,
}

impl SuiteReport {
    fn new(name: &str) -> Self {
        SuiteReport { name: name.into(), cases: 0, metrics: Vec::new(), errors: Vec::new(), passed: false }
    }

    fn track(&mut self, name: &str, value: f64, tolerance: f64) {
        // Residuals are violations: negative means satisfied, NaN means failed.
        let v = if value.is_nan() { f64::INFINITY } else { value.max(0.0) };
        match self.metrics.iter_mut().find(|m| m.name == name) {
            Some(m) => m.max = m.max.max(v),
            None => self.metrics.push(Metric { name: name.into(), max: v, tolerance }),
        }
    }

    fn fail(&mut self, context: String, e: crate::Error) {
        self.errors.push(format!("{context}: {e}"));
    }

    fn finish(mut self) -> Self {
        self.passed = self.errors.is_empty() && self.metrics.iter().all(Metric::passed);
        self
    }

    pub fn max_residual(&self) -> f64 {
        self.metrics.iter().map(|m| m.max / m.tolerance).fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerifyOptions {
    pub seed: u64,
    /// Markets in the duality fuzz.
    pub markets: usize,
    /// Suites to run; all when empty.
    pub suites: Vec<String>,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        VerifyOptions { seed: random::DEFAULT_SEED, markets: 100, suites: Vec::new() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerifyReport {
    pub seed: u64,
    pub suites: Vec<SuiteReport>,
    pub passed: bool,
}

/// One fuzz instance: market, risk aversion and a bounded claim.
#[derive(Debug, Clone)]
pub struct Instance {
    pub market: FiniteMarket,
    pub gamma: f64,
    pub claim: Vec<f64>,
}

/// Markets with `n <= 6`, `d <= 2`, `gamma` cycling through 0.5, 1, 2 and
/// claims uniform in `[-1, 1]`.
pub fn fuzz_instances(seed: u64, count: usize) -> Result<Vec<Instance>> {
    let mut rng = random::rng(seed);
    (0..count)
        .map(|i| {
            let market = random::random_sized_market(&mut rng, 6, 2)?;
            let claim = random::random_claim(&mut rng, market.n_states(), 1.0);
            Ok(Instance { market, gamma: GAMMAS[i % 3], claim })
        })
        .collect()
}

pub fn run(opts: &VerifyOptions) -> Result<VerifyReport> {
    let wanted = |s: &str| opts.suites.is_empty() || opts.suites.iter().any(|w| w == s);
    let mut suites = Vec::new();
    let seed = opts.seed;
    if wanted("duality") {
        suites.push(duality_suite(seed, opts.markets)?);
    }
    if wanted("oracle") {
        suites.push(oracle_suite(seed, opts.markets.max(10), 10)?);
    }
    if wanted("routes") {
        suites.push(routes_suite(seed.wrapping_add(1), 50)?);
    }
    if wanted("replication") {
        suites.push(replication_suite(seed.wrapping_add(2), 50)?);
    }
    if wanted("axioms") {
        suites.push(axiom_suite(seed.wrapping_add(3), 100)?);
    }
    if wanted("fatou") {
        suites.push(fatou_suite(seed.wrapping_add(4), 100)?);
    }
    if wanted("asymptotics") {
        suites.push(asymptotics_suite(seed.wrapping_add(5), 10)?);
    }
    if wanted("orlicz") {
        suites.push(orlicz_suite(seed.wrapping_add(6), 100));
    }
    if wanted("examples") {
        suites.push(examples_suite());
    }
    let passed = suites.iter().all(|s| s.passed);
    Ok(VerifyReport { seed, suites, passed })
}

/// `|primal - dual|` and both first-order residuals on random markets.
pub fn duality_suite(seed: u64, count: usize) -> Result<SuiteReport> {
    let mut r = SuiteReport::new("duality");
    for (i, inst) in fuzz_instances(seed, count)?.iter().enumerate() {
        r.cases += 1;
        let u = UtilityFunction::exponential(inst.gamma)?;
        match dual::minimize_dual(&inst.market, &u, &inst.claim, 0.0) {
            Ok(s) => {
                r.track("duality gap", s.duality_gap, 1e-7);
                r.track("lambda condition", s.foc_lambda_residual, 1e-9);
                r.track("variational inequality", s.foc_q_residual, 1e-8);
            }
            Err(e) => r.fail(format!("market {i}"), e),
        }
    }
    Ok(r.finish())
}

/// Solver values against the grid oracles on the first `take` fuzz
/// markets whose polytope has dimension at most 2.
pub fn oracle_suite(seed: u64, pool: usize, take: usize) -> Result<SuiteReport> {
    let mut r = SuiteReport::new("oracle");
    let spec = GridSpec::default();
    let picked = fuzz_instances(seed, pool)?.into_iter().filter(|i| i.market.polytope().dimension() <= 2).take(take);
    for (i, inst) in picked.enumerate() {
        r.cases += 1;
        let u = UtilityFunction::exponential(inst.gamma)?;
        let res = (|| -> Result<()> {
            let s = dual::minimize_dual(&inst.market, &u, &inst.claim, 0.0)?;
            let gp = oracle::grid_primal(&inst.market, &u, &inst.claim, 0.0, &spec)?;
            let gd = oracle::grid_dual(&inst.market, &u, &inst.claim, 0.0, &spec)?;
            r.track("primal vs grid", (s.primal_value - gp.value).abs(), 1e-4);
            r.track("dual vs grid", (s.value - gd.value).abs(), 1e-3);
            r.track("weak duality on grids", oracle::weak_duality_violation(gp.value, gd.value.min(gd.coarse_min)), 1e-12);
            r.track("weak duality vs solver", oracle::weak_duality_violation(s.primal_value, gd.value.min(gd.coarse_min)), 1e-9);
            Ok(())
        })();
        if let Err(e) = res {
            r.fail(format!("market {i}"), e);
        }
    }
    Ok(r.finish())
}

/// Root finding, dual representation and the exponential closed form.
pub fn routes_suite(seed: u64, count: usize) -> Result<SuiteReport> {
    let mut r = SuiteReport::new("routes");
    let mut rng = random::rng(seed);
    for i in 0..count {
        r.cases += 1;
        let m = random::random_sized_market(&mut rng, 5, 2)?;
        let claim = random::random_claim(&mut rng, m.n_states(), 1.0);
        let gamma = GAMMAS[i % 3];
        let res = (|| -> Result<()> {
            let u = UtilityFunction::exponential(gamma)?;
            let root = indifference::price(&m, &u, &claim, 0.0)?;
            let rep = indifference::dual_price_representation(&m, &u, &claim, 0.0, indifference::DEFAULT_RESTARTS, &mut rng)?;
            let closed = indifference::price_exponential(&m, gamma, &claim, 0.0)?;
            r.track("root vs dual representation", (root - rep.price).abs(), 1e-7);
            r.track("root vs closed form", (root - closed.price).abs(), 1e-7);
            r.track("dual representation vs closed form", (rep.price - closed.price).abs(), 1e-7);
            r.track("closed form vs entropy route", closed.disagreement(), 1e-8);
            Ok(())
        })();
        if let Err(e) = res {
            r.fail(format!("instance {i}"), e);
        }
    }
    Ok(r.finish())
}

/// Claims `c + h . dS` are priced at `c`.
pub fn replication_suite(seed: u64, count: usize) -> Result<SuiteReport> {
    let mut r = SuiteReport::new("replication");
    let mut rng = random::rng(seed);
    for i in 0..count {
        r.cases += 1;
        let m = random::random_sized_market(&mut rng, 6, 2)?;
        let c = rng.gen_range(-3.0..3.0);
        let h: Vec<f64> = (0..m.n_assets()).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let claim: Vec<f64> = m.gains(&h).iter().map(|g| c + g).collect();
        let res = (|| -> Result<()> {
            for u in [UtilityFunction::exponential(GAMMAS[i % 3])?, UtilityFunction::log_quadratic()?] {
                r.track("price minus cash", (indifference::price(&m, &u, &claim, 0.0)? - c).abs(), 1e-9);
            }
            let flagged = replicable(&m, &claim)?.map_or(f64::INFINITY, |rep| (rep.cash - c).abs());
            r.track("replication detected", flagged, 1e-9);
            Ok(())
        })();
        if let Err(e) = res {
            r.fail(format!("instance {i}"), e);
        }
    }
    Ok(r.finish())
}

fn random_pairs<R: Rng + ?Sized>(rng: &mut R, n: usize, count: usize) -> Vec<ClaimPair> {
    (0..count)
        .map(|_| ClaimPair { first: random::random_claim(rng, n, 1.0), second: random::random_claim(rng, n, 1.0), t: rng.gen_range(0.05..0.95) })
        .collect()
}

/// Convexity, monotonicity and translation invariance on 4-state markets.
pub fn axiom_suite(seed: u64, pairs: usize) -> Result<SuiteReport> {
    let mut r = SuiteReport::new("axioms");
    let mut rng = random::rng(seed);
    let u = UtilityFunction::exponential(1.0)?;
    let m = random::random_market(&mut rng, 4, 1)?;
    let ps = random_pairs(&mut rng, 4, pairs);
    r.cases = ps.len();
    match indifference::risk_measure_axioms(&m, &u, 0.0, &ps) {
        Ok(a) => {
            r.track("convexity", a.convexity, indifference::AXIOM_TOL);
            r.track("monotonicity", a.monotonicity, indifference::AXIOM_TOL);
            r.track("translation", a.translation, indifference::AXIOM_TOL);
            r.track("convexity of rho", a.rho_convexity, indifference::AXIOM_TOL);
        }
        Err(e) => r.fail("axioms".into(), e),
    }
    Ok(r.finish())
}

/// `pi(B ^ n)` increases to `pi(B)` along truncation levels.
pub fn fatou_suite(seed: u64, claims: usize) -> Result<SuiteReport> {
    let mut r = SuiteReport::new("fatou");
    let mut rng = random::rng(seed);
    let u = UtilityFunction::exponential(1.0)?;
    let m = random::random_market(&mut rng, 4, 1)?;
    for i in 0..claims {
        r.cases += 1;
        let b = random::random_claim(&mut rng, 4, 1.0);
        let res = (|| -> Result<()> {
            let full = indifference::price(&m, &u, &b, 0.0)?;
            let mut prev = f64::NEG_INFINITY;
            let mut last = f64::NAN;
            for level in indifference::truncation_levels(&b) {
                let cut: Vec<f64> = b.iter().map(|v| v.min(level)).collect();
                let p = indifference::price(&m, &u, &cut, 0.0)?;
                r.track("decrease along levels", prev - p, indifference::FATOU_TOL);
                prev = p;
                last = p;
            }
            r.track("limit", (last - full).abs(), indifference::FATOU_TOL);
            Ok(())
        })();
        if let Err(e) = res {
            r.fail(format!("claim {i}"), e);
        }
    }
    Ok(r.finish())
}

/// Extrapolated slopes of `b -> pi(b B)` against the zero-claim
/// expectation and the polytope supremum (by vertex enumeration).
pub fn asymptotics_suite(seed: u64, count: usize) -> Result<SuiteReport> {
    let mut r = SuiteReport::new("asymptotics");
    let mut rng = random::rng(seed);
    for i in 0..count {
        r.cases += 1;
        let m = random::random_sized_market(&mut rng, 5, 2)?;
        let claim = random::random_claim(&mut rng, m.n_states(), 1.0);
        let res = (|| -> Result<()> {
            let gamma = GAMMAS[i % 3];
            let u = UtilityFunction::exponential(gamma)?;
            let v = indifference::volume_asymptotics(&m, &u, &claim, 0.0)?;
            let q_star = dual::minimal_entropy_measure(&m, gamma)?;
            r.track("slope at zero", (v.slope_at_zero - q_star.expect(&claim)).abs(), 1e-4);
            r.track("slope at infinity", (v.slope_at_infinity - oracle::vertex_sup(&m, &claim)?).abs(), 1e-3);
            Ok(())
        })();
        if let Err(e) = res {
            r.fail(format!("instance {i}"), e);
        }
    }
    Ok(r.finish())
}

/// Norms of constants, the norm axioms and the flat part of `Phi_hat`.
pub fn orlicz_suite(seed: u64, triples: usize) -> SuiteReport {
    let mut r = SuiteReport::new("orlicz");
    let mut rng = random::rng(seed);
    for &gamma in &GAMMAS {
        let yp = UtilityFunction::exponential(gamma).expect("positive gamma").young_pair();
        for &c in &[-3.0, -0.5, 0.25, 1.0, 4.0] {
            r.cases += 1;
            let f = DiscreteDistribution::new(vec![c, c], vec![0.5, 0.5]).expect("valid");
            r.track("constant norm", (luxemburg_norm(&f, &yp) - gamma * f64::abs(c) / std::f64::consts::LN_2).abs(), 1e-10);
        }
        let beta = yp.beta();
        let flat = (0..=200).map(|k| yp.phi_hat(-beta + 2.0 * beta * k as f64 / 200.0).abs()).fold(0.0, f64::max);
        r.track("Phi_hat on [-beta, beta]", flat, 0.0);
        r.track("Phi_hat positive outside", if yp.phi_hat(1.01 * beta) > 0.0 { 0.0 } else { 1.0 }, 0.0);
    }
    let yp = UtilityFunction::exponential(1.0).expect("positive gamma").young_pair();
    for _ in 0..triples {
        r.cases += 1;
        let n = rng.gen_range(2..=6);
        let probs = random::random_probs(&mut rng, n, 0.2);
        let dist = |v: Vec<f64>| DiscreteDistribution::new(v, probs.clone()).expect("valid");
        let f = dist(random::random_claim(&mut rng, n, 2.0));
        let g = dist(random::random_claim(&mut rng, n, 2.0));
        let a = rng.gen_range(-3.0..3.0);
        let nf = luxemburg_norm(&f, &yp);
        let ng = luxemburg_norm(&g, &yp);
        let sum = dist(f.values().iter().zip(g.values()).map(|(x, y)| x + y).collect());
        r.track("triangle", luxemburg_norm(&sum, &yp) - nf - ng, 1e-9);
        let scaled = dist(f.values().iter().map(|x| a * x).collect());
        r.track("homogeneity", (luxemburg_norm(&scaled, &yp) - a.abs() * nf).abs(), 1e-9 * (1.0 + nf * a.abs()));
    }
    r.finish()
}

pub fn examples_suite() -> SuiteReport {
    let mut r = SuiteReport::new("examples");
    let runs = [
        ExampleParams::second(0.3),
        ExampleParams::first(FirstClaim::Tanh),
        ExampleParams::first(FirstClaim::Zero),
    ];
    for p in runs {
        r.cases += 1;
        match example_report(&p) {
            Ok(rep) => {
                for c in &rep.checks {
                    r.track(&format!("{} ({})", c.name, rep.label), if c.passed { 0.0 } else { 1.0 }, 0.0);
                }
            }
            Err(e) => r.fail(format!("example {}", p.which), e),
        }
    }
    r.finish()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FirstClaim {
    /// `alpha(Y, Z) = tanh(Y Z) / 2`.
    Tanh,
    /// `alpha = 0`.
    Zero,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExampleParams {
    /// 1: bounded claim, 2: `B = delta Y`.
    pub which: u8,
    pub delta: f64,
    pub first_claim: FirstClaim,
    pub gamma: f64,
    pub atoms: usize,
    pub p1: f64,
    pub ratio: f64,
}

impl ExampleParams {
    pub fn first(claim: FirstClaim) -> Self {
        ExampleParams { which: 1, delta: 0.0, first_claim: claim, gamma: 1.0, atoms: DEFAULT_ATOMS, p1: DEFAULT_P1, ratio: DEFAULT_RATIO }
    }

    pub fn second(delta: f64) -> Self {
        ExampleParams { which: 2, delta, ..Self::first(FirstClaim::Tanh) }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExampleReport {
    pub label: String,
    pub claim: String,
    pub h_star: f64,
    pub attained_at_boundary: bool,
    /// `g'(h*)`.
    pub boundary_slope: f64,
    pub optimal_wealth: String,
    pub normalizer: f64,
    pub normalizer_cross_check: f64,
    pub singular_mass: f64,
    pub singular_mass_cross_check: f64,
    pub hedging_delta: f64,
    pub bounds: SingularBounds,
    pub entropy: f64,
    pub covariance: f64,
    pub checks: Vec<Check>,
}

impl ExampleReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }
}

fn check(name: &str, passed: bool, detail: String) -> Check {
    Check { name: name.into(), passed, detail }
}

/// Builds the mixture model for an example. Fails with `NotMonotone` when
/// the weights decay too slowly for the chosen claim.
pub fn example_market(p: &ExampleParams) -> Result<ExpMixtureMarket> {
    let claim = match (p.which, p.first_claim) {
        (2, _) => MixtureClaim::DeltaY { delta: p.delta },
        (_, FirstClaim::Tanh) => MixtureClaim::Bounded(BoundedAlpha::default_tanh()),
        (_, FirstClaim::Zero) => MixtureClaim::Bounded(BoundedAlpha::constant(0.0)?),
    };
    if p.which != 1 && p.which != 2 {
        return Err(crate::Error::Invalid(format!("no example {}", p.which)));
    }
    ExpMixtureMarket::builder().gamma(p.gamma).default_weights(p.atoms, p.p1, p.ratio).claim(claim).build()
}

pub fn example_report(p: &ExampleParams) -> Result<ExampleReport> {
    let m = example_market(p)?;
    let zero = m.without_claim()?;
    let opt = m.optimal_h()?;
    let h = opt.h_star;
    let slope = m.g_prime(h)?;
    let density = m.dual_regular_density()?;
    let mass = m.singular_mass()?;
    let delta = hedging_delta(&m, &zero)?;
    let bounds = m.singular_bounds()?;
    let covariance = m.covariance();
    let mut checks = vec![
        check("optimum at the right end", opt.attained_at_boundary && slope > 0.0, format!("h* = {h}, g'(h*) = {slope:e}")),
        check("singular mass positive", mass.value > 0.0, format!("{:e}", mass.value)),
        check("singular mass routes agree", mass.relative_disagreement() <= 1e-8, format!("relative {:e}", mass.relative_disagreement())),
    ];
    let label;
    if p.which == 2 {
        label = format!("delta = {}", p.delta);
        checks.push(check("h* = 1 - delta", h == 1.0 - p.delta, format!("{h}")));
        checks.push(check("excess hedge = -delta", (delta + p.delta).abs() <= 1e-12, format!("{delta}")));
        checks.push(check(
            "claim covaries with the asset but is hedged short",
            covariance > 0.0 && delta < 0.0,
            format!("Cov(B, S) = {covariance:e}, hedge {delta}"),
        ));
    } else {
        label = match p.first_claim {
            FirstClaim::Tanh => "alpha = tanh(YZ)/2".into(),
            FirstClaim::Zero => "alpha = 0".into(),
        };
        checks.push(check("h* = 1", h == 1.0, format!("{h}")));
        checks.push(check("no hedge for the claim", delta.abs() <= 1e-10, format!("{delta}")));
        checks.push(check("singular part ignores the claim", bounds.claim_invisible, "L = l = +inf".into()));
    }
    Ok(ExampleReport {
        label,
        claim: m.claim().describe(),
        h_star: h,
        attained_at_boundary: opt.attained_at_boundary,
        boundary_slope: slope,
        optimal_wealth: format!("f_B = {h} S = {h} Z Y"),
        normalizer: density.normalizer,
        normalizer_cross_check: density.normalizer_cross_check(),
        singular_mass: mass.value,
        singular_mass_cross_check: mass.cross_check,
        hedging_delta: delta,
        bounds,
        entropy: density.entropy(),
        covariance,
        checks,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn example_two_passes() {
        let r = example_report(&ExampleParams::second(0.3)).unwrap();
        assert!(r.passed(), "{:?}", r.checks);
        assert_eq!(r.h_star, 0.7);
    }

    #[test]
    fn example_one_passes_in_both_variants() {
        for c in [FirstClaim::Tanh, FirstClaim::Zero] {
            let r = example_report(&ExampleParams::first(c)).unwrap();
            assert!(r.passed(), "{:?}", r.checks);
            assert_eq!(r.h_star, 1.0);
        }
    }

    #[test]
    fn slow_weights_break_the_construction() {
        let p = ExampleParams { p1: 0.5, ..ExampleParams::second(0.99) };
        assert!(matches!(example_report(&p), Err(crate::Error::NotMonotone { .. })));
    }

    #[test]
    fn small_run_is_deterministic() {
        let opts = VerifyOptions { seed: 9, markets: 6, suites: vec!["duality".into(), "orlicz".into()] };
        let a = serde_json::to_string(&run(&opts).unwrap()).unwrap();
        let b = serde_json::to_string(&run(&opts).unwrap()).unwrap();
        assert_eq!(a, b);
        assert!(run(&opts).unwrap().passed);
    }

    #[test]
    fn suites_filter() {
        let opts = VerifyOptions { seed: 1, markets: 3, suites: vec!["examples".into()] };
        let r = run(&opts).unwrap();
        assert_eq!(r.suites.len(), 1);
        assert!(r.passed);
    }
}
