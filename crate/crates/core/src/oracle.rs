//! Slow brute-force verifiers for small markets: grid search for the primal
//! and dual problems and vertex enumeration for the martingale polytope.
//!
//! Nothing here calls the solvers or their linear algebra; the only shared
//! pieces are the market and utility types.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::finite_market::FiniteMarket;
use crate::utility::{UtilityFunction, UtilityKind};

const PIVOT_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    /// Spacing of the first uniform grid.
    pub coarse_step: f64,
    /// Refinement stops once the spacing is at most this.
    pub final_step: f64,
    /// Points per axis in each zoomed grid.
    pub zoom_points: usize,
    /// Number of log-spaced multipliers in the first dual grid.
    pub lambda_points: usize,
    pub lambda_min: f64,
    pub lambda_max: f64,
}

impl Default for GridSpec {
    fn default() -> Self {
        GridSpec { coarse_step: 0.05, final_step: 1e-4, zoom_points: 21, lambda_points: 161, lambda_min: 1e-4, lambda_max: 1e4 }
    }
}

impl GridSpec {
    pub fn with_final_step(mut self, step: f64) -> Self {
        self.final_step = step;
        self
    }

    fn validate(&self) -> Result<()> {
        if !(self.coarse_step > 0.0 && self.final_step > 0.0 && self.zoom_points >= 5 && self.lambda_points >= 2) {
            return Err(Error::Invalid("grid spacing must be positive with at least 5 zoom points".into()));
        }
        if !(self.lambda_min > 0.0 && self.lambda_max > self.lambda_min) {
            return Err(Error::Invalid("multiplier grid needs 0 < min < max".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridPrimal {
    pub value: f64,
    pub h: Vec<f64>,
    pub evaluations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridDual {
    pub value: f64,
    pub lambda: f64,
    pub q: Vec<f64>,
    pub evaluations: usize,
    /// Smallest dual objective over the first (unrefined) product grid.
    pub coarse_min: f64,
}

fn primal_objective(m: &FiniteMarket, u: &UtilityFunction, claim: &[f64], x: f64, h: &[f64]) -> f64 {
    let ds = m.delta_s();
    let mut v = 0.0;
    for (i, p) in m.probs().iter().enumerate() {
        let mut w = x - claim[i];
        for (j, hj) in h.iter().enumerate() {
            w += hj * ds[(i, j)];
        }
        v += p * u.u(w);
    }
    v
}

/// Visits every point of the tensor grid `centre[k] + step * (i - half)`,
/// `i = 0..2 half`, in lexicographic order.
fn for_each_grid_point<F: FnMut(&[f64])>(centre: &[f64], step: f64, half: usize, mut f: F) {
    let d = centre.len();
    let per = 2 * half + 1;
    let total = per.pow(d as u32);
    let mut pt = vec![0.0; d];
    for idx in 0..total {
        let mut r = idx;
        for k in 0..d {
            pt[k] = centre[k] + step * ((r % per) as f64 - half as f64);
            r /= per;
        }
        f(&pt);
    }
}

/// Grid maximum of `E[u(x + h . dS - B)]`. The window doubles while the
/// best point sits on its edge, then zooms around the best cell.
pub fn grid_primal(m: &FiniteMarket, u: &UtilityFunction, claim: &[f64], x: f64, spec: &GridSpec) -> Result<GridPrimal> {
    spec.validate()?;
    m.check_claim(claim)?;
    let d = m.n_assets();
    if d > 2 || m.n_states() > 6 {
        return Err(Error::Invalid("grid oracle needs at most 2 assets and 6 states".into()));
    }
    let mut evaluations = 0;
    let mut best = (f64::NEG_INFINITY, vec![0.0; d]);
    let mut half = (1.0 / spec.coarse_step).round() as usize;
    let mut centre = vec![0.0; d];
    loop {
        let mut on_edge = false;
        let edge = half as f64 * spec.coarse_step * (1.0 - 1e-12);
        for_each_grid_point(&centre, spec.coarse_step, half, |h| {
            evaluations += 1;
            let v = primal_objective(m, u, claim, x, h);
            if v > best.0 {
                best = (v, h.to_vec());
            }
        });
        for k in 0..d {
            if (best.1[k] - centre[k]).abs() >= edge {
                on_edge = true;
            }
        }
        if !on_edge || half as f64 * spec.coarse_step > 1e6 {
            break;
        }
        centre = best.1.clone();
        half *= 2;
    }
    let quarter = spec.zoom_points / 2;
    let shrink = 2.0 * quarter as f64 / 4.0;
    let mut step = spec.coarse_step;
    while step > spec.final_step {
        // Window of two old cells either side of the incumbent.
        step = (step / shrink).max(spec.final_step);
        let c = best.1.clone();
        for_each_grid_point(&c, step, quarter, |h| {
            evaluations += 1;
            let v = primal_objective(m, u, claim, x, h);
            if v > best.0 {
                best = (v, h.to_vec());
            }
        });
    }
    Ok(GridPrimal { value: best.0, h: best.1, evaluations })
}

/// The polytope `{q >= 0, sum q = 1, q . dS = 0}` written as
/// `q_pivot = rhs - coeffs . q_free` by Gauss-Jordan elimination.
#[derive(Debug, Clone)]
pub struct Elimination {
    n: usize,
    pivots: Vec<usize>,
    free: Vec<usize>,
    rhs: Vec<f64>,
    coeffs: Vec<Vec<f64>>,
}

impl Elimination {
    pub fn new(m: &FiniteMarket) -> Self {
        let n = m.n_states();
        let d = m.n_assets();
        let ds = m.delta_s();
        let mut rows: Vec<Vec<f64>> = Vec::with_capacity(d + 1);
        rows.push(vec![1.0; n + 1]);
        for j in 0..d {
            let mut r: Vec<f64> = (0..n).map(|i| ds[(i, j)]).collect();
            r.push(0.0);
            rows.push(r);
        }
        let mut pivots = Vec::new();
        let mut row = 0;
        for col in 0..n {
            if row == rows.len() {
                break;
            }
            let (best, mag) = (row..rows.len()).map(|r| (r, rows[r][col].abs())).fold((row, -1.0), |a, b| if b.1 > a.1 { b } else { a });
            let scale = rows.iter().map(|r| r[col].abs()).fold(1.0f64, f64::max);
            if mag <= PIVOT_TOL * scale {
                continue;
            }
            rows.swap(row, best);
            let piv = rows[row][col];
            for v in rows[row].iter_mut() {
                *v /= piv;
            }
            for r in 0..rows.len() {
                if r != row {
                    let f = rows[r][col];
                    if f != 0.0 {
                        for c in 0..=n {
                            rows[r][c] -= f * rows[row][c];
                        }
                    }
                }
            }
            pivots.push(col);
            row += 1;
        }
        let free: Vec<usize> = (0..n).filter(|c| !pivots.contains(c)).collect();
        let rhs = (0..pivots.len()).map(|r| rows[r][n]).collect();
        let coeffs = (0..pivots.len()).map(|r| free.iter().map(|&c| rows[r][c]).collect()).collect();
        Elimination { n, pivots, free, rhs, coeffs }
    }

    pub fn dimension(&self) -> usize {
        self.free.len()
    }

    /// The full vector for given free coordinates, or `None` if some
    /// coordinate is negative.
    pub fn point(&self, free_values: &[f64]) -> Option<Vec<f64>> {
        let mut q = vec![0.0; self.n];
        for (k, &c) in self.free.iter().enumerate() {
            if free_values[k] < 0.0 {
                return None;
            }
            q[c] = free_values[k];
        }
        for (r, &c) in self.pivots.iter().enumerate() {
            let v = self.rhs[r] - self.coeffs[r].iter().zip(free_values).map(|(a, b)| a * b).sum::<f64>();
            if v < -1e-14 {
                return None;
            }
            q[c] = v.max(0.0);
        }
        Some(q)
    }
}

fn conjugate(u: &UtilityFunction, y: f64) -> f64 {
    match u.kind() {
        UtilityKind::Exponential { gamma } => {
            if y == 0.0 {
                0.0
            } else {
                let r = y / gamma;
                r * r.ln() - r
            }
        }
        UtilityKind::Custom => u.conjugate_f64(y),
    }
}

fn dual_objective_at(u: &UtilityFunction, probs: &[f64], claim: &[f64], x: f64, lambda: f64, q: &[f64]) -> f64 {
    let mut v = lambda * x;
    for i in 0..q.len() {
        v += -lambda * q[i] * claim[i] + probs[i] * conjugate(u, lambda * q[i] / probs[i]);
    }
    v
}

/// Grid minimum of `lambda (x - E_Q[B]) + E[Phi(lambda dQ/dP)]` over
/// martingale measures (free coordinates on a uniform grid in [0, 1]) and
/// log-spaced multipliers, refined around the best cell.
pub fn grid_dual(m: &FiniteMarket, u: &UtilityFunction, claim: &[f64], x: f64, spec: &GridSpec) -> Result<GridDual> {
    spec.validate()?;
    m.check_claim(claim)?;
    let el = Elimination::new(m);
    let k = el.dimension();
    if k > 2 {
        return Err(Error::Invalid("grid oracle needs a polytope of dimension at most 2".into()));
    }
    let probs = m.probs();
    let (t0, t1) = (spec.lambda_min.ln(), spec.lambda_max.ln());
    let tstep = (t1 - t0) / (spec.lambda_points - 1) as f64;
    let mut evaluations = 0;
    let mut best = (f64::INFINITY, vec![0.0; k], 0.0);

    let n_q = (1.0 / spec.coarse_step).round() as usize;
    let qstep = 1.0 / n_q as f64;
    let per_q = (n_q + 1).pow(k as u32);
    let mut z = vec![0.0; k];
    for idx in 0..per_q {
        let mut r = idx;
        for zk in z.iter_mut() {
            *zk = (r % (n_q + 1)) as f64 * qstep;
            r /= n_q + 1;
        }
        let Some(q) = el.point(&z) else { continue };
        for j in 0..spec.lambda_points {
            let t = t0 + tstep * j as f64;
            evaluations += 1;
            let v = dual_objective_at(u, probs, claim, x, t.exp(), &q);
            if v < best.0 {
                best = (v, z.clone(), t);
            }
        }
    }
    if !best.0.is_finite() {
        return Err(Error::Invalid("dual objective is infinite on the whole grid".into()));
    }
    let coarse_min = best.0;

    let quarter = spec.zoom_points / 2;
    let shrink = 2.0 * quarter as f64 / 4.0;
    let (mut qs, mut ts) = (qstep, tstep);
    let mut centre = vec![0.0; k + 1];
    while qs > spec.final_step || ts > spec.final_step {
        qs /= shrink;
        ts /= shrink;
        centre[..k].copy_from_slice(&best.1);
        centre[k] = best.2;
        let c = centre.clone();
        // Unit-step grid, scaled per axis below.
        for_each_grid_point(&vec![0.0; k + 1], 1.0, quarter, |off| {
            let zz: Vec<f64> = (0..k).map(|a| c[a] + off[a] * qs).collect();
            let t = (c[k] + off[k] * ts).clamp(t0, t1);
            if zz.iter().any(|v| *v > 1.0) {
                return;
            }
            let Some(q) = el.point(&zz) else { return };
            evaluations += 1;
            let v = dual_objective_at(u, probs, claim, x, t.exp(), &q);
            if v < best.0 {
                best = (v, zz, t);
            }
        });
    }
    let q = el.point(&best.1).expect("incumbent is feasible");
    Ok(GridDual { value: best.0, lambda: best.2.exp(), q, evaluations, coarse_min })
}

/// `max(0, primal - dual)`: any positive value breaks weak duality.
pub fn weak_duality_violation(primal_value: f64, dual_value: f64) -> f64 {
    (primal_value - dual_value).max(0.0)
}

/// Largest violation of `dual(lambda, Q) >= primal(h)` over every point of
/// the coarse primal and dual grids (both exhaustively enumerated).
pub fn exhaustive_weak_duality(m: &FiniteMarket, u: &UtilityFunction, claim: &[f64], x: f64, spec: &GridSpec) -> Result<f64> {
    let primal = grid_primal(m, u, claim, x, spec)?;
    let dual = grid_dual(m, u, claim, x, spec)?;
    // The best grid primal bounds every primal grid point and the smallest
    // dual grid value bounds every dual grid point from below.
    Ok(weak_duality_violation(primal.value, dual.value.min(dual.coarse_min)))
}

/// Vertices of the martingale polytope by enumerating every choice of
/// free coordinates set to zero.
pub fn enumerate_vertices(m: &FiniteMarket) -> Vec<Vec<f64>> {
    let n = m.n_states();
    let d = m.n_assets();
    let ds = m.delta_s();
    let mut rows: Vec<Vec<f64>> = vec![vec![1.0; n]];
    let mut rhs = vec![1.0];
    for j in 0..d {
        rows.push((0..n).map(|i| ds[(i, j)]).collect());
        rhs.push(0.0);
    }
    let mut out: Vec<Vec<f64>> = Vec::new();
    // Every support set; small n only.
    for mask in 1u32..(1u32 << n) {
        let support: Vec<usize> = (0..n).filter(|i| mask & (1 << i) != 0).collect();
        if let Some(q) = solve_on_support(&rows, &rhs, &support, n) {
            if q.iter().all(|v| *v >= -1e-12) && !out.iter().any(|o| o.iter().zip(&q).all(|(a, b)| (a - b).abs() < 1e-10)) {
                out.push(q.iter().map(|v| v.max(0.0)).collect());
            }
        }
    }
    out
}

// Unique solution of the equalities with support in `support`, if any.
fn solve_on_support(rows: &[Vec<f64>], rhs: &[f64], support: &[usize], n: usize) -> Option<Vec<f64>> {
    let s = support.len();
    let mut a: Vec<Vec<f64>> = rows.iter().zip(rhs).map(|(r, b)| support.iter().map(|&c| r[c]).chain([*b]).collect()).collect();
    let mut rank = 0;
    let mut pivcol = Vec::new();
    for col in 0..s {
        let (bi, mag) = (rank..a.len()).map(|r| (r, a[r][col].abs())).fold((rank, -1.0), |x, y| if y.1 > x.1 { y } else { x });
        if rank == a.len() || mag <= 1e-11 {
            return None;
        }
        a.swap(rank, bi);
        let p = a[rank][col];
        for v in a[rank].iter_mut() {
            *v /= p;
        }
        for r in 0..a.len() {
            if r != rank {
                let f = a[r][col];
                for c in 0..=s {
                    a[r][c] -= f * a[rank][c];
                }
            }
        }
        pivcol.push(col);
        rank += 1;
    }
    // Remaining rows must be consistent.
    if a[rank..].iter().any(|r| r[s].abs() > 1e-10) {
        return None;
    }
    let mut q = vec![0.0; n];
    for (r, &col) in pivcol.iter().enumerate() {
        q[support[col]] = a[r][s];
    }
    Some(q)
}

/// `sup_Q E_Q[c]` by vertex enumeration.
pub fn vertex_sup(m: &FiniteMarket, c: &[f64]) -> Result<f64> {
    m.check_claim(c)?;
    enumerate_vertices(m)
        .iter()
        .map(|q| q.iter().zip(c).map(|(a, b)| a * b).sum::<f64>())
        .fold(None, |acc: Option<f64>, v| Some(acc.map_or(v, |a| a.max(v))))
        .ok_or(Error::Arbitrage)
}
