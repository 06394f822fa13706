//! One-period markets on a finite probability space.
//!
//! Prices move by `delta_s[i][j]` (state `i`, asset `j`) over the period.
//! A probability `q` is a martingale measure iff `sum_i q_i delta_s[i][j] = 0`
//! for every asset, so the dual feasible set is the polytope
//! `{ q >= 0, sum q = 1, delta_s^T q = 0 }`.

use minilp::{ComparisonOp, OptimizationDirection, Problem};
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::distribution::check_probs;
use crate::error::{Error, Result};
use crate::ext::ExtReal;
use crate::linalg;
use crate::utility::UtilityFunction;

/// Tolerance for membership in the martingale polytope.
pub const POLYTOPE_TOL: f64 = 1e-10;

/// A finite one-period market with a no-arbitrage certificate.
#[derive(Debug, Clone)]
pub struct FiniteMarket {
    probs: Vec<f64>,
    delta_s: DMatrix<f64>,
    loss: Vec<f64>,
    x0: f64,
    polytope: Polytope,
}

impl FiniteMarket {
    /// `delta_s` holds one row per state. When `loss` is `None`, the loss
    /// variable defaults to `W_i = 1 + max_j |delta_s[i][j]|`.
    pub fn new(probs: Vec<f64>, delta_s: Vec<Vec<f64>>, loss: Option<Vec<f64>>, x0: f64) -> Result<Self> {
        let n = probs.len();
        if n < 2 {
            return Err(Error::Invalid(format!("a market needs at least 2 states, got {n}")));
        }
        check_probs(&probs)?;
        if delta_s.len() != n {
            return Err(Error::Invalid(format!("delta_s has {} rows for {n} states", delta_s.len())));
        }
        let d = delta_s[0].len();
        if delta_s.iter().any(|r| r.len() != d) {
            return Err(Error::Invalid("delta_s rows must all have the same length".into()));
        }
        if delta_s.iter().flatten().any(|v| !v.is_finite()) || !x0.is_finite() {
            return Err(Error::Invalid("market data must be finite".into()));
        }
        let ds = DMatrix::from_fn(n, d, |i, j| delta_s[i][j]);
        let loss = match loss {
            Some(w) => {
                if w.len() != n {
                    return Err(Error::Invalid(format!("W has {} entries for {n} states", w.len())));
                }
                if let Some(bad) = w.iter().find(|v| !(**v >= 1.0)) {
                    return Err(Error::Invalid(format!("loss variable must be >= 1, got {bad}")));
                }
                w
            }
            None => (0..n).map(|i| 1.0 + ds.row(i).iter().fold(0.0f64, |m, v| m.max(v.abs()))).collect(),
        };
        let polytope = Polytope::for_increments(&ds)?;
        Ok(FiniteMarket { probs, delta_s: ds, loss, x0, polytope })
    }

    pub fn n_states(&self) -> usize {
        self.probs.len()
    }

    pub fn n_assets(&self) -> usize {
        self.delta_s.ncols()
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn delta_s(&self) -> &DMatrix<f64> {
        &self.delta_s
    }

    pub fn loss_variable(&self) -> &[f64] {
        &self.loss
    }

    pub fn x0(&self) -> f64 {
        self.x0
    }

    pub fn with_x0(&self, x0: f64) -> Self {
        FiniteMarket { x0, ..self.clone() }
    }

    pub fn polytope(&self) -> &Polytope {
        &self.polytope
    }

    /// Gains `h . delta_s` per state.
    pub fn gains(&self, h: &[f64]) -> Vec<f64> {
        (0..self.n_states())
            .map(|i| self.delta_s.row(i).iter().zip(h).map(|(a, b)| a * b).sum())
            .collect()
    }

    pub fn expect(&self, f: &[f64]) -> f64 {
        self.probs.iter().zip(f).map(|(p, v)| p * v).sum()
    }

    pub fn check_claim(&self, claim: &[f64]) -> Result<()> {
        if claim.len() != self.n_states() {
            return Err(Error::ClaimLength { expected: self.n_states(), got: claim.len() });
        }
        if claim.iter().any(|v| !v.is_finite()) {
            return Err(Error::Invalid("claim values must be finite".into()));
        }
        Ok(())
    }
}

/// A probability `q` with `delta_s^T q = 0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MartingaleMeasure {
    q: Vec<f64>,
}

impl MartingaleMeasure {
    /// Checks membership in the market's polytope within [`POLYTOPE_TOL`].
    pub fn new(market: &FiniteMarket, q: Vec<f64>) -> Result<Self> {
        if !market.polytope().contains(&q, POLYTOPE_TOL) {
            return Err(Error::Invalid("q is not a martingale measure of this market".into()));
        }
        Ok(MartingaleMeasure { q })
    }

    pub fn q(&self) -> &[f64] {
        &self.q
    }

    /// `dQ/dP` per state.
    pub fn density(&self, probs: &[f64]) -> Vec<f64> {
        self.q.iter().zip(probs).map(|(q, p)| q / p).collect()
    }

    pub fn expect(&self, f: &[f64]) -> f64 {
        self.q.iter().zip(f).map(|(q, v)| q * v).sum()
    }

    /// Relative entropy `H(Q|P)`.
    pub fn entropy(&self, probs: &[f64]) -> f64 {
        relative_entropy(&self.q, probs)
    }
}

pub fn relative_entropy(q: &[f64], p: &[f64]) -> f64 {
    q.iter().zip(p).filter(|(q, _)| **q > 0.0).map(|(q, p)| q * (q / p).ln()).sum()
}

/// `{ q >= 0, A q = b }` with `A = [1^T; delta_s^T]`, `b = (1, 0, ..., 0)`.
#[derive(Debug, Clone)]
pub struct Polytope {
    a: DMatrix<f64>,
    b: DVector<f64>,
    /// Full-row-rank version of the constraints.
    a_red: DMatrix<f64>,
    b_red: DVector<f64>,
    null: DMatrix<f64>,
    interior: Vec<f64>,
    certificate: f64,
}

/// Polytopes with more candidate bases than this are not vertex-enumerated.
pub const MAX_VERTEX_BASES: usize = 200_000;

impl Polytope {
    fn for_increments(ds: &DMatrix<f64>) -> Result<Self> {
        let (n, d) = ds.shape();
        let mut a = DMatrix::zeros(d + 1, n);
        a.row_mut(0).fill(1.0);
        for j in 0..d {
            a.row_mut(j + 1).copy_from(&ds.column(j).transpose());
        }
        let mut b = DVector::zeros(d + 1);
        b[0] = 1.0;
        let (a_red, b_red) = linalg::row_reduce(&a, &b);
        let null = linalg::null_space(&a_red);
        let mut poly = Polytope { a, b, a_red, b_red, null, interior: vec![], certificate: 0.0 };
        let (t, q) = poly.max_min_coordinate()?;
        let q = poly.project_affine(&q);
        if !(t > 1e-10) || q.iter().any(|&v| v <= 0.0) {
            return Err(Error::Arbitrage);
        }
        poly.certificate = t;
        poly.interior = q;
        Ok(poly)
    }

    // LP: maximize t subject to q_i >= t, q in the polytope.
    fn max_min_coordinate(&self) -> Result<(f64, Vec<f64>)> {
        let n = self.a.ncols();
        let mut lp = Problem::new(OptimizationDirection::Maximize);
        let t = lp.add_var(1.0, (0.0, 1.0));
        let qs: Vec<_> = (0..n).map(|_| lp.add_var(0.0, (0.0, 1.0))).collect();
        for &qi in &qs {
            lp.add_constraint([(qi, 1.0), (t, -1.0)], ComparisonOp::Ge, 0.0);
        }
        for r in 0..self.a.nrows() {
            let terms: Vec<_> = (0..n).map(|i| (qs[i], self.a[(r, i)])).collect();
            lp.add_constraint(terms.as_slice(), ComparisonOp::Eq, self.b[r]);
        }
        match lp.solve() {
            Ok(sol) => Ok((sol[t], qs.iter().map(|v| sol[*v]).collect())),
            Err(minilp::Error::Infeasible) => Err(Error::Arbitrage),
            Err(e) => Err(Error::Invalid(format!("martingale LP failed: {e}"))),
        }
    }

    pub fn n_states(&self) -> usize {
        self.a.ncols()
    }

    /// Dimension of the polytope (of its affine hull).
    pub fn dimension(&self) -> usize {
        self.null.ncols()
    }

    /// Equality constraints `(A, b)`: first row is the simplex, the rest the
    /// martingale conditions.
    pub fn equalities(&self) -> (&DMatrix<f64>, &DVector<f64>) {
        (&self.a, &self.b)
    }

    /// Orthonormal basis of the directions along the polytope.
    pub fn null_basis(&self) -> &DMatrix<f64> {
        &self.null
    }

    /// A strictly positive point (the no-arbitrage certificate).
    pub fn interior_point(&self) -> &[f64] {
        &self.interior
    }

    /// `min_i q_i` at the certificate; positive iff no arbitrage.
    pub fn certificate_margin(&self) -> f64 {
        self.certificate
    }

    pub fn contains(&self, q: &[f64], tol: f64) -> bool {
        if q.len() != self.n_states() || q.iter().any(|&v| v < -tol || !v.is_finite()) {
            return false;
        }
        let qv = DVector::from_column_slice(q);
        let r = &self.a * qv - &self.b;
        r.amax() <= tol
    }

    /// Orthogonal projection onto the affine hull `{A q = b}`.
    pub fn project_affine(&self, q: &[f64]) -> Vec<f64> {
        let qv = DVector::from_column_slice(q);
        if self.a_red.nrows() == 0 {
            return q.to_vec();
        }
        let resid = &self.a_red * &qv - &self.b_red;
        let gram = &self.a_red * self.a_red.transpose();
        let corr = self.a_red.transpose() * linalg::solve_spd(&gram, &resid);
        (qv - corr).iter().cloned().collect()
    }

    /// Maximum of `E_Q[c]` over the polytope and a maximizer (linear program).
    pub fn lp_max(&self, c: &[f64]) -> Result<(f64, Vec<f64>)> {
        let n = self.n_states();
        let mut lp = Problem::new(OptimizationDirection::Maximize);
        let qs: Vec<_> = (0..n).map(|i| lp.add_var(c[i], (0.0, f64::INFINITY))).collect();
        for r in 0..self.a.nrows() {
            let terms: Vec<_> = (0..n).map(|i| (qs[i], self.a[(r, i)])).collect();
            lp.add_constraint(terms.as_slice(), ComparisonOp::Eq, self.b[r]);
        }
        let sol = lp.solve().map_err(|e| Error::Invalid(format!("polytope LP failed: {e}")))?;
        let q: Vec<f64> = qs.iter().map(|v| sol[*v].max(0.0)).collect();
        let value = q.iter().zip(c).map(|(a, b)| a * b).sum();
        Ok((value, q))
    }

    pub fn lp_min(&self, c: &[f64]) -> Result<(f64, Vec<f64>)> {
        let neg: Vec<f64> = c.iter().map(|v| -v).collect();
        let (v, q) = self.lp_max(&neg)?;
        Ok((-v, q))
    }

    /// All vertices, by enumerating bases of the reduced constraint matrix.
    /// `None` when there are more than [`MAX_VERTEX_BASES`] candidate bases.
    pub fn vertices(&self) -> Option<Vec<Vec<f64>>> {
        let n = self.n_states();
        let r = self.a_red.nrows();
        if binomial(n, r) > MAX_VERTEX_BASES as f64 {
            return None;
        }
        let mut out: Vec<Vec<f64>> = Vec::new();
        for subset in Combinations::new(n, r) {
            let sub = DMatrix::from_fn(r, r, |i, j| self.a_red[(i, subset[j])]);
            let Some(lu) = Some(sub.clone().lu()) else { continue };
            if linalg::rank(&sub) < r {
                continue;
            }
            let Some(x) = lu.solve(&self.b_red) else { continue };
            if x.iter().any(|&v| v < -1e-12) {
                continue;
            }
            let mut q = vec![0.0; n];
            for (k, &i) in subset.iter().enumerate() {
                q[i] = x[k].max(0.0);
            }
            if !self.contains(&q, 1e-9) {
                continue;
            }
            if !out.iter().any(|v| v.iter().zip(&q).all(|(a, b)| (a - b).abs() < 1e-10)) {
                out.push(q);
            }
        }
        Some(out)
    }

    /// A random point of the polytope: a few hit-and-run steps from the
    /// interior certificate.
    pub fn random_point<R: Rng + ?Sized>(&self, rng: &mut R, steps: usize) -> Vec<f64> {
        let k = self.dimension();
        let mut q = self.interior.clone();
        if k == 0 {
            return q;
        }
        for _ in 0..steps {
            let z: Vec<f64> = (0..k).map(|_| rng.gen::<f64>() - 0.5).collect();
            let dir: Vec<f64> = (0..q.len())
                .map(|i| (0..k).map(|j| self.null[(i, j)] * z[j]).sum())
                .collect();
            let (mut tmin, mut tmax) = (f64::NEG_INFINITY, f64::INFINITY);
            for i in 0..q.len() {
                if dir[i] > 1e-15 {
                    tmin = tmin.max(-q[i] / dir[i]);
                } else if dir[i] < -1e-15 {
                    tmax = tmax.min(-q[i] / dir[i]);
                }
            }
            if !(tmin.is_finite() && tmax.is_finite()) {
                continue;
            }
            let t = tmin + rng.gen::<f64>() * (tmax - tmin);
            for i in 0..q.len() {
                q[i] = (q[i] + t * dir[i]).max(0.0);
            }
        }
        q
    }

    /// Point of the polytope in null-space coordinates around `base`.
    pub fn from_coordinates(&self, base: &[f64], z: &DVector<f64>) -> Vec<f64> {
        let shift = &self.null * z;
        base.iter().zip(shift.iter()).map(|(a, b)| a + b).collect()
    }
}

fn binomial(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

struct Combinations {
    n: usize,
    idx: Vec<usize>,
    done: bool,
}

impl Combinations {
    fn new(n: usize, k: usize) -> Self {
        Combinations { n, idx: (0..k).collect(), done: k > n }
    }
}

impl Iterator for Combinations {
    type Item = Vec<usize>;
    fn next(&mut self) -> Option<Vec<usize>> {
        if self.done {
            return None;
        }
        let out = self.idx.clone();
        let k = self.idx.len();
        let mut i = k;
        loop {
            if i == 0 {
                self.done = true;
                break;
            }
            i -= 1;
            if self.idx[i] < self.n - k + i {
                self.idx[i] += 1;
                for j in i + 1..k {
                    self.idx[j] = self.idx[j - 1] + 1;
                }
                break;
            }
        }
        Some(out)
    }
}

/// Suitability of the loss variable for the traded assets.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Suitability {
    pub suitable: bool,
    /// `max_{i,j} |delta_s[i][j]| / W_i`; the smallest multiple of `W`
    /// that would dominate every asset (1 or less when suitable).
    pub scale: f64,
}

pub fn check_suitable(m: &FiniteMarket) -> Suitability {
    let mut scale = 0.0f64;
    for i in 0..m.n_states() {
        for j in 0..m.n_assets() {
            scale = scale.max(m.delta_s[(i, j)].abs() / m.loss[i]);
        }
    }
    Suitability { suitable: scale <= 1.0, scale }
}

/// Anything carrying a loss variable `W`.
pub trait LossModel {
    /// `sup { a >= 0 : E[u_hat(a W)] < inf }`.
    fn loss_integrability(&self, u: &UtilityFunction) -> ExtReal;
}

impl LossModel for FiniteMarket {
    fn loss_integrability(&self, _u: &UtilityFunction) -> ExtReal {
        ExtReal::PosInf
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Compatibility {
    /// `E[u(-a W)] > -inf` for every `a > 0`.
    pub strong: bool,
    /// ... for some `a > 0`.
    pub weak: bool,
}

pub fn check_compatible<M: LossModel + ?Sized>(m: &M, u: &UtilityFunction) -> Compatibility {
    match m.loss_integrability(u) {
        ExtReal::PosInf => Compatibility { strong: true, weak: true },
        ExtReal::Finite(t) => Compatibility { strong: false, weak: t > 0.0 },
        ExtReal::NegInf => Compatibility { strong: false, weak: false },
    }
}

/// `B = c + h . delta_s` exactly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Replication {
    pub cash: f64,
    pub strategy: Vec<f64>,
    pub residual: f64,
}

/// Tolerance of the replication least-squares residual.
pub const REPLICATION_TOL: f64 = 1e-10;

pub fn replicable(m: &FiniteMarket, claim: &[f64]) -> Result<Option<Replication>> {
    m.check_claim(claim)?;
    let (n, d) = (m.n_states(), m.n_assets());
    let a = DMatrix::from_fn(n, d + 1, |i, j| if j == 0 { 1.0 } else { m.delta_s[(i, j - 1)] });
    let b = DVector::from_column_slice(claim);
    let (x, residual) = linalg::lstsq(&a, &b);
    let scale = claim.iter().fold(1.0f64, |s, v| s.max(v.abs()));
    if residual > REPLICATION_TOL * scale {
        return Ok(None);
    }
    Ok(Some(Replication { cash: x[0], strategy: x.iter().skip(1).cloned().collect(), residual }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn binary() -> FiniteMarket {
        FiniteMarket::new(vec![0.5, 0.5], vec![vec![1.0], vec![-1.0]], None, 0.0).unwrap()
    }

    fn trinomial(p: Vec<f64>) -> FiniteMarket {
        FiniteMarket::new(p, vec![vec![1.0], vec![0.0], vec![-1.0]], None, 0.0).unwrap()
    }

    #[test]
    fn arbitrage_is_rejected() {
        let e = FiniteMarket::new(vec![0.5, 0.5], vec![vec![1.0], vec![0.0]], None, 0.0).unwrap_err();
        assert!(matches!(e, Error::Arbitrage));
        let e = FiniteMarket::new(vec![0.5, 0.5], vec![vec![1.0], vec![2.0]], None, 0.0).unwrap_err();
        assert!(matches!(e, Error::Arbitrage));
    }

    #[test]
    fn unnormalized_probabilities_are_rejected() {
        let e = FiniteMarket::new(vec![0.5, 0.4], vec![vec![1.0], vec![-1.0]], None, 0.0).unwrap_err();
        assert!(matches!(e, Error::ProbabilitiesNotNormalized { .. }));
    }

    #[test]
    fn loss_variable_must_dominate_one() {
        assert!(FiniteMarket::new(vec![0.5, 0.5], vec![vec![1.0], vec![-1.0]], Some(vec![1.0, 0.5]), 0.0).is_err());
    }

    #[test]
    fn suitability() {
        let s = check_suitable(&FiniteMarket::new(vec![0.5, 0.5], vec![vec![1.0], vec![-1.0]], Some(vec![1.0, 1.0]), 0.0).unwrap());
        assert!(s.suitable);
        let s = check_suitable(&FiniteMarket::new(vec![0.5, 0.5], vec![vec![5.0], vec![-1.0]], Some(vec![1.0, 1.0]), 0.0).unwrap());
        assert!(!s.suitable);
        assert_eq!(s.scale, 5.0);
        // default W = 1 + max |delta_s|
        let s = check_suitable(&FiniteMarket::new(vec![0.2, 0.8], vec![vec![5.0, -3.0], vec![-1.0, 0.6]], None, 0.0).unwrap());
        assert!(s.suitable);
    }

    #[test]
    fn compatibility_is_trivial_on_finite_markets() {
        let c = check_compatible(&binary(), &UtilityFunction::exponential(1.0).unwrap());
        assert_eq!(c, Compatibility { strong: true, weak: true });
    }

    #[test]
    fn binary_polytope_is_a_point() {
        let m = binary();
        let poly = m.polytope();
        assert_eq!(poly.dimension(), 0);
        let v = poly.vertices().unwrap();
        assert_eq!(v.len(), 1);
        assert!((v[0][0] - 0.5).abs() < 1e-14 && (v[0][1] - 0.5).abs() < 1e-14);
        assert!((poly.interior_point()[0] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn trinomial_polytope_is_a_segment() {
        let m = trinomial(vec![0.2, 0.5, 0.3]);
        let poly = m.polytope();
        assert_eq!(poly.dimension(), 1);
        let mut v = poly.vertices().unwrap();
        v.sort_by(|a, b| a[0].partial_cmp(&b[0]).unwrap());
        assert_eq!(v.len(), 2);
        assert!((v[0][1] - 1.0).abs() < 1e-12);
        assert!((v[1][0] - 0.5).abs() < 1e-12 && (v[1][2] - 0.5).abs() < 1e-12);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..50 {
            let q = poly.random_point(&mut rng, 5);
            assert!(poly.contains(&q, POLYTOPE_TOL));
            // (t, 1 - 2t, t)
            assert!((q[0] - q[2]).abs() < 1e-12);
            assert!(q[0] >= 0.0 && q[0] <= 0.5);
        }
    }

    #[test]
    fn no_assets_gives_the_simplex() {
        let m = FiniteMarket::new(vec![0.2, 0.3, 0.5], vec![vec![], vec![], vec![]], None, 0.0).unwrap();
        assert_eq!(m.polytope().dimension(), 2);
        assert_eq!(m.polytope().vertices().unwrap().len(), 3);
    }

    #[test]
    fn lp_matches_vertex_enumeration() {
        let m = FiniteMarket::new(
            vec![0.1, 0.2, 0.3, 0.25, 0.15],
            vec![vec![1.0, 0.5], vec![-0.5, 1.0], vec![0.3, -1.0], vec![-1.0, 0.2], vec![0.4, -0.1]],
            None,
            0.0,
        )
        .unwrap();
        let c = [1.0, -2.0, 0.5, 3.0, 0.0];
        let (lp, _) = m.polytope().lp_max(&c).unwrap();
        let brute = m
            .polytope()
            .vertices()
            .unwrap()
            .iter()
            .map(|q| q.iter().zip(&c).map(|(a, b)| a * b).sum::<f64>())
            .fold(f64::MIN, f64::max);
        assert!((lp - brute).abs() < 1e-9, "{lp} vs {brute}");
    }

    #[test]
    fn replication() {
        let m = trinomial(vec![0.2, 0.5, 0.3]);
        let r = replicable(&m, &[1.0, 0.0, -1.0]).unwrap().unwrap();
        assert!(r.cash.abs() < 1e-12 && (r.strategy[0] - 1.0).abs() < 1e-12);
        let r = replicable(&m, &[5.0, 5.0, 5.0]).unwrap().unwrap();
        assert!((r.cash - 5.0).abs() < 1e-12 && r.strategy[0].abs() < 1e-12);
        assert!(replicable(&m, &[1.0, 0.0, 0.0]).unwrap().is_none());
        assert!(matches!(replicable(&m, &[1.0]), Err(Error::ClaimLength { .. })));
    }

    #[test]
    fn replicable_claims_have_one_price() {
        let m = FiniteMarket::new(
            vec![0.1, 0.2, 0.3, 0.4],
            vec![vec![1.0], vec![-2.0], vec![0.5], vec![-0.25]],
            None,
            0.0,
        )
        .unwrap();
        let claim: Vec<f64> = m.gains(&[0.7]).iter().map(|g| 2.5 + g).collect();
        let poly = m.polytope();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut points = poly.vertices().unwrap();
        points.extend((0..30).map(|_| poly.random_point(&mut rng, 8)));
        for q in points {
            let v: f64 = q.iter().zip(&claim).map(|(a, b)| a * b).sum();
            assert!((v - 2.5).abs() < 1e-9);
        }
    }
}
