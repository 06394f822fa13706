//! Seeded random markets and claims for property suites.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::finite_market::FiniteMarket;

pub const DEFAULT_SEED: u64 = 42;
pub const SEED_ENV: &str = "ORLICZ_INDIFF_SEED";

/// The seed from `ORLICZ_INDIFF_SEED`, or 42.
pub fn seed_from_env() -> u64 {
    std::env::var(SEED_ENV).ok().and_then(|s| s.trim().parse().ok()).unwrap_or(DEFAULT_SEED)
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Probabilities bounded below by `floor / n`.
pub fn random_probs<R: Rng + ?Sized>(rng: &mut R, n: usize, floor: f64) -> Vec<f64> {
    let w: Vec<f64> = (0..n).map(|_| floor + rng.gen::<f64>()).collect();
    let s: f64 = w.iter().sum();
    w.iter().map(|v| v / s).collect()
}

/// An arbitrage-free market with `n` states and `d` assets: a strictly
/// positive `q` is drawn first and each increment column is centred so
/// that `q . dS = 0`.
pub fn random_market<R: Rng + ?Sized>(rng: &mut R, n: usize, d: usize) -> Result<FiniteMarket> {
    assert!(n >= 2 && d >= 1 && d < n, "need 1 <= d < n");
    loop {
        let probs = random_probs(rng, n, 0.2);
        let q = random_probs(rng, n, 0.3);
        let mut cols: Vec<Vec<f64>> = Vec::with_capacity(d);
        for _ in 0..d {
            let raw: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let mean: f64 = raw.iter().zip(&q).map(|(a, b)| a * b).sum();
            cols.push(raw.iter().map(|v| v - mean).collect());
        }
        let rows: Vec<Vec<f64>> = (0..n).map(|i| cols.iter().map(|c| c[i]).collect()).collect();
        let m = FiniteMarket::new(probs, rows, None, 0.0)?;
        // Redundant draws are vanishingly rare; redraw rather than special-case.
        if crate::linalg::rank(m.delta_s()) == d {
            return Ok(m);
        }
    }
}

/// A market with a random size: `2 <= n <= max_states`, `1 <= d <= min(max_assets, n - 1)`.
pub fn random_sized_market<R: Rng + ?Sized>(rng: &mut R, max_states: usize, max_assets: usize) -> Result<FiniteMarket> {
    let n = rng.gen_range(2..=max_states);
    let d = rng.gen_range(1..=max_assets.min(n - 1));
    random_market(rng, n, d)
}

/// A claim with entries uniform in `[-scale, scale]`.
pub fn random_claim<R: Rng + ?Sized>(rng: &mut R, n: usize, scale: f64) -> Vec<f64> {
    (0..n).map(|_| rng.gen_range(-scale..=scale)).collect()
}
