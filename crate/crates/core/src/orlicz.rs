//! Luxemburg and Orlicz norms on finite probability spaces.

use crate::distribution::DiscreteDistribution;
use crate::roots::golden_max;
use crate::utility::YoungPair;

/// Relative tolerance and iteration cap of the norm bisections.
pub const NORM_RTOL: f64 = 1e-12;
pub const NORM_MAX_ITER: usize = 200;

fn modular(f: &DiscreteDistribution, yp: &YoungPair, c: f64) -> f64 {
    f.expect(|v| yp.u_hat(v / c))
}

/// `N(f) = inf { c > 0 : E[u_hat(f / c)] <= 1 }`, by bisection on `c`.
pub fn luxemburg_norm(f: &DiscreteDistribution, yp: &YoungPair) -> f64 {
    if f.is_zero() {
        return 0.0;
    }
    let start = f.max_abs();
    let (mut lo, mut hi) = (start, start);
    while !(modular(f, yp, hi) <= 1.0) {
        hi *= 2.0;
    }
    while modular(f, yp, lo) <= 1.0 {
        lo *= 0.5;
    }
    for _ in 0..NORM_MAX_ITER {
        if hi - lo <= NORM_RTOL * hi {
            break;
        }
        let mid = 0.5 * (lo + hi);
        if modular(f, yp, mid) <= 1.0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    hi
}

/// `||g|| = sup { E[|f g|] : E[u_hat(f)] <= 1 }`.
///
/// The constraint is active at the optimum and the KKT conditions give
/// `f_i = max(Phi'(|g_i| / mu), 0)` for a multiplier `mu > 0`, which is
/// found by bisection on `log mu`. If the multiplier search breaks down
/// (a custom utility whose conjugate cannot be evaluated) a projected
/// ascent is used instead.
pub fn orlicz_dual_norm(g: &DiscreteDistribution, yp: &YoungPair) -> f64 {
    if g.is_zero() {
        return 0.0;
    }
    kkt_dual_norm(g, yp).unwrap_or_else(|| ascent_dual_norm(g, yp))
}

fn kkt_dual_norm(g: &DiscreteDistribution, yp: &YoungPair) -> Option<f64> {
    let u = yp.utility();
    let beta = yp.beta();
    let optimal_f = |mu: f64| -> Vec<f64> {
        g.values()
            .iter()
            .map(|&gi| {
                let s = gi.abs() / mu;
                if s <= beta {
                    0.0
                } else {
                    u.conjugate_prime(s).max(0.0)
                }
            })
            .collect()
    };
    let constraint = |mu: f64| -> f64 {
        optimal_f(mu).iter().zip(g.probs()).map(|(&f, &p)| p * yp.u_hat(f)).sum()
    };
    // Large mu => f = 0 => constraint 0; small mu => constraint blows up.
    let gmax = g.max_abs();
    let mut hi = (gmax / beta.max(1e-300)).ln() + 1.0;
    let mut lo = hi - 1.0;
    let mut guard = 0;
    while !(constraint(lo.exp()) > 1.0) {
        lo -= 2.0;
        guard += 1;
        if guard > 400 {
            return None;
        }
    }
    guard = 0;
    while !(constraint(hi.exp()) <= 1.0) {
        hi += 2.0;
        guard += 1;
        if guard > 400 {
            return None;
        }
    }
    for _ in 0..NORM_MAX_ITER {
        if hi - lo <= 1e-15 {
            break;
        }
        let mid = 0.5 * (lo + hi);
        let c = constraint(mid.exp());
        if c.is_nan() {
            return None;
        }
        if c <= 1.0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    let f = optimal_f(hi.exp());
    let v: f64 = f.iter().zip(g.values()).zip(g.probs()).map(|((&f, &gi), &p)| p * f * gi.abs()).sum();
    v.is_finite().then_some(v)
}

fn ascent_dual_norm(g: &DiscreteDistribution, yp: &YoungPair) -> f64 {
    // The ratio E[|g| f] / N(f) is scale free, so optimize it over log f by coordinate search.
    let weights: Vec<f64> = g.values().iter().zip(g.probs()).map(|(gi, p)| p * gi.abs()).collect();
    let ratio = |theta: &[f64]| -> f64 {
        let f: Vec<f64> = theta.iter().map(|t| t.exp()).collect();
        let n = luxemburg_norm(&g.with_values(f.clone()).expect("same probabilities"), yp);
        f.iter().zip(&weights).map(|(a, b)| a * b).sum::<f64>() / n
    };
    let mut theta: Vec<f64> = weights.iter().map(|w| if *w > 0.0 { 0.0 } else { -60.0 }).collect();
    let mut best = ratio(&theta);
    for _ in 0..200 {
        let before = best;
        for i in 0..theta.len() {
            if weights[i] == 0.0 {
                continue;
            }
            let centre = theta[i];
            let mut probe = theta.clone();
            let (t, v) = golden_max(
                |x| {
                    probe[i] = x;
                    ratio(&probe)
                },
                centre - 8.0,
                centre + 8.0,
                1e-12,
                200,
            );
            if v > best {
                best = v;
                theta[i] = t;
            }
        }
        if best - before <= 1e-14 * best.abs() {
            break;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::utility::UtilityFunction;
    use proptest::prelude::*;

    fn yp(g: f64) -> YoungPair {
        UtilityFunction::exponential(g).unwrap().young_pair()
    }

    #[test]
    fn zero_has_zero_norms() {
        let z = DiscreteDistribution::new(vec![0.0, 0.0], vec![0.5, 0.5]).unwrap();
        assert_eq!(luxemburg_norm(&z, &yp(1.0)), 0.0);
        assert_eq!(orlicz_dual_norm(&z, &yp(1.0)), 0.0);
    }

    #[test]
    fn constant_norm_closed_form() {
        for &(g, c) in &[(1.0, 1.0), (2.0, -3.0), (0.5, 10.0), (1.0, 1e-6)] {
            let f = DiscreteDistribution::new(vec![c; 3], vec![0.2, 0.3, 0.5]).unwrap();
            let expected = g * f64::abs(c) / 2f64.ln();
            let got = luxemburg_norm(&f, &yp(g));
            assert!((got - expected).abs() <= 1e-10 * expected.max(1.0), "{got} vs {expected}");
        }
    }

    // Brute force: on the active constraint f2 is a function of f1, so a
    // fine 1-D grid over f1 sweeps every candidate optimum.
    #[test]
    fn two_point_dual_norm_matches_grid() {
        let g = DiscreteDistribution::new(vec![1.0, 1.0], vec![0.5, 0.5]).unwrap();
        let got = orlicz_dual_norm(&g, &yp(1.0));
        let f1_max = 3f64.ln(); // e^{f1} - 1 <= 2
        let steps = 200_000;
        let mut best = f64::MIN;
        for k in 0..=steps {
            let f1 = f1_max * k as f64 / steps as f64;
            let rest = 2.0 - f1.exp_m1();
            if rest < 0.0 {
                continue;
            }
            let f2 = rest.ln_1p();
            best = best.max(0.5 * f1 + 0.5 * f2);
        }
        assert!((got - best).abs() < 1e-6, "{got} vs {best}");
        assert!((got - 2f64.ln()).abs() < 1e-9);
    }

    #[test]
    fn ascent_fallback_agrees_with_kkt() {
        let g = DiscreteDistribution::new(vec![1.0, -2.0, 0.5], vec![0.2, 0.5, 0.3]).unwrap();
        let a = kkt_dual_norm(&g, &yp(1.0)).unwrap();
        let b = ascent_dual_norm(&g, &yp(1.0));
        assert!((a - b).abs() < 1e-6 * a, "{a} vs {b}");
    }

    fn dist3() -> impl Strategy<Value = (Vec<f64>, Vec<f64>, Vec<f64>, Vec<f64>)> {
        (
            prop::collection::vec(-5.0f64..5.0, 4),
            prop::collection::vec(-5.0f64..5.0, 4),
            prop::collection::vec(-5.0f64..5.0, 4),
            prop::collection::vec(0.05f64..1.0, 4),
        )
    }

    proptest! {
        #[test]
        fn norm_axioms((a, b, g, w) in dist3(), t in 0.01f64..50.0) {
            let s: f64 = w.iter().sum();
            let p: Vec<f64> = w.iter().map(|x| x / s).collect();
            let sum: f64 = p.iter().sum();
            let mut p = p;
            p[0] += 1.0 - sum;
            let yp = yp(1.0);
            let fa = DiscreteDistribution::new(a.clone(), p.clone()).unwrap();
            let fb = DiscreteDistribution::new(b.clone(), p.clone()).unwrap();
            let fab = DiscreteDistribution::new(a.iter().zip(&b).map(|(x, y)| x + y).collect(), p.clone()).unwrap();
            let na = luxemburg_norm(&fa, &yp);
            let nb = luxemburg_norm(&fb, &yp);
            prop_assert!(luxemburg_norm(&fab, &yp) <= na + nb + 1e-9);
            let ft = fa.map(|v| -t * v);
            prop_assert!((luxemburg_norm(&ft, &yp) - t * na).abs() <= 1e-9 * (t * na).max(1.0));
            // Orlicz-Hoelder with the generous constant 2.
            let gg = DiscreteDistribution::new(g, p).unwrap();
            let lhs: f64 = fa.values().iter().zip(gg.values()).zip(fa.probs()).map(|((x, y), p)| p * (x * y).abs()).sum();
            prop_assert!(lhs <= 2.0 * na * orlicz_dual_norm(&gg, &yp) + 1e-9);
        }
    }
}
