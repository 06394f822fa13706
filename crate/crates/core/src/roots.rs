//! Scalar root finding and one-dimensional maximization.

/// Outcome of a bracketed scalar solve.
#[derive(Debug, Clone, Copy)]
pub struct Root {
    pub x: f64,
    pub fx: f64,
    pub iterations: usize,
}

/// Finds a root of `f` in `[lo, hi]` where `f(lo)` and `f(hi)` have opposite
/// signs. Alternates secant (Illinois-damped regula falsi) and bisection,
/// keeping the bracket valid at every step.
///
/// Stops when the bracket is narrower than `xtol * (1 + |x|)` or `f` is
/// exactly zero.
pub fn bracketed_root<F>(mut f: F, mut lo: f64, mut hi: f64, xtol: f64, max_iter: usize) -> Option<Root>
where
    F: FnMut(f64) -> f64,
{
    let mut flo = f(lo);
    let mut fhi = f(hi);
    if flo == 0.0 {
        return Some(Root { x: lo, fx: 0.0, iterations: 0 });
    }
    if fhi == 0.0 {
        return Some(Root { x: hi, fx: 0.0, iterations: 0 });
    }
    if flo.is_nan() || fhi.is_nan() || flo.signum() == fhi.signum() {
        return None;
    }
    let mut side = 0i8;
    let mut best = if flo.abs() < fhi.abs() { (lo, flo) } else { (hi, fhi) };
    for it in 1..=max_iter {
        let width = hi - lo;
        let mid = 0.5 * (lo + hi);
        if width.abs() <= xtol * (1.0 + mid.abs()) {
            return Some(Root { x: best.0, fx: best.1, iterations: it });
        }
        // Odd iterations try regula falsi, even ones force a bisection so
        // the bracket shrinks geometrically no matter what.
        let mut x = if it % 2 == 1 && flo.is_finite() && fhi.is_finite() {
            (lo * fhi - hi * flo) / (fhi - flo)
        } else {
            mid
        };
        if !(x > lo && x < hi) {
            x = mid;
        }
        let fx = f(x);
        if fx.is_nan() {
            return None;
        }
        if fx.abs() < best.1.abs() {
            best = (x, fx);
        }
        if fx == 0.0 {
            return Some(Root { x, fx, iterations: it });
        }
        if fx.signum() == flo.signum() {
            lo = x;
            flo = fx;
            if side == -1 {
                fhi *= 0.5;
            }
            side = -1;
        } else {
            hi = x;
            fhi = fx;
            if side == 1 {
                flo *= 0.5;
            }
            side = 1;
        }
    }
    Some(Root { x: best.0, fx: best.1, iterations: max_iter })
}

/// Newton's method safeguarded by a sign-change bracket: any Newton step
/// that leaves the bracket (or fails to be finite) is replaced by bisection.
pub fn safeguarded_newton<F>(mut fdf: F, mut lo: f64, mut hi: f64, x0: f64, ftol: f64, max_iter: usize) -> Option<Root>
where
    F: FnMut(f64) -> (f64, f64),
{
    let (flo, _) = fdf(lo);
    let (fhi, _) = fdf(hi);
    if flo.is_nan() || fhi.is_nan() || (flo != 0.0 && fhi != 0.0 && flo.signum() == fhi.signum()) {
        return None;
    }
    let increasing = fhi > flo;
    let mut x = if x0 > lo && x0 < hi { x0 } else { 0.5 * (lo + hi) };
    let mut width_two_back = f64::INFINITY;
    let mut width_one_back = hi - lo;
    for it in 1..=max_iter {
        let (fx, dfx) = fdf(x);
        if fx.is_nan() {
            return None;
        }
        if fx.abs() <= ftol {
            return Some(Root { x, fx, iterations: it });
        }
        if (fx > 0.0) == increasing {
            hi = x;
        } else {
            lo = x;
        }
        let newton = x - fx / dfx;
        // Slow contraction means the derivative is unreliable; bisect instead.
        let stalled = hi - lo > 0.5 * width_two_back;
        width_two_back = width_one_back;
        width_one_back = hi - lo;
        let next = if !stalled && newton.is_finite() && newton > lo && newton < hi {
            newton
        } else {
            0.5 * (lo + hi)
        };
        if (next - x).abs() <= 4.0 * f64::EPSILON * x.abs().max(1e-300) || hi - lo <= 4.0 * f64::EPSILON * hi.abs() {
            let (fn_, _) = fdf(next);
            return Some(Root { x: next, fx: fn_, iterations: it });
        }
        x = next;
    }
    let (fx, _) = fdf(x);
    Some(Root { x, fx, iterations: max_iter })
}

const INV_PHI: f64 = 0.618_033_988_749_894_8;

/// Golden-section maximization of a unimodal function on `[a, b]`.
pub fn golden_max<F>(mut f: F, mut a: f64, mut b: f64, xtol: f64, max_iter: usize) -> (f64, f64)
where
    F: FnMut(f64) -> f64,
{
    let mut c = b - INV_PHI * (b - a);
    let mut d = a + INV_PHI * (b - a);
    let mut fc = f(c);
    let mut fd = f(d);
    for _ in 0..max_iter {
        if (b - a).abs() <= xtol * (1.0 + c.abs()) {
            break;
        }
        if fc >= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - INV_PHI * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + INV_PHI * (b - a);
            fd = f(d);
        }
    }
    if fc >= fd {
        (c, fc)
    } else {
        (d, fd)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bracketed_root_finds_cube_root() {
        let r = bracketed_root(|x| x * x * x - 2.0, 0.0, 2.0, 1e-15, 200).unwrap();
        assert!((r.x - 2f64.cbrt()).abs() < 1e-13);
    }

    #[test]
    fn bracketed_root_rejects_same_sign() {
        assert!(bracketed_root(|x| x * x + 1.0, -1.0, 1.0, 1e-12, 100).is_none());
    }

    #[test]
    fn newton_with_bad_derivative_still_converges() {
        // Derivative deliberately wrong by a factor of 50: bisection must rescue it.
        let r = safeguarded_newton(|x| (x.exp() - 3.0, 50.0 * x.exp()), -5.0, 5.0, 0.0, 1e-13, 500).unwrap();
        assert!((r.x - 3f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn golden_section_on_parabola() {
        let (x, fx) = golden_max(|x| -(x - 0.3) * (x - 0.3), -2.0, 4.0, 1e-12, 300);
        assert!((x - 0.3).abs() < 1e-7);
        assert!(fx <= 0.0);
    }
}
