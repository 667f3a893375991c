//! Inversion of non-decreasing scalar functions.

use super::{NumericsError, Result};

fn tolerance(y: f64) -> f64 {
    1e-10 * (1.0 + y.abs())
}

/// Solve `g(u) = y` on `[lo, hi]` for non-decreasing `g`.
///
/// Alternates secant (regula falsi) proposals with bisection so the bracket
/// at least halves every two steps.
pub fn invert_monotone<G: Fn(f64) -> f64>(g: G, y: f64, lo: f64, hi: f64) -> Result<f64> {
    let (mut a, mut b) = (lo, hi);
    let (mut ga, mut gb) = (g(a), g(b));
    let tol = tolerance(y);
    if !(ga <= y + tol && y - tol <= gb) {
        return Err(NumericsError::NotBracketed { y, g_lo: ga, g_hi: gb });
    }
    if (ga - y).abs() <= tol {
        return Ok(a);
    }
    if (gb - y).abs() <= tol {
        return Ok(b);
    }
    for it in 0..500 {
        let secant = if gb > ga {
            a + (y - ga) * (b - a) / (gb - ga)
        } else {
            f64::NAN
        };
        let mid = 0.5 * (a + b);
        let x = if it % 2 == 0 && secant > a && secant < b {
            secant
        } else {
            mid
        };
        if x <= a || x >= b {
            // bracket is at machine resolution
            return Ok(if (ga - y).abs() < (gb - y).abs() { a } else { b });
        }
        let gx = g(x);
        if (gx - y).abs() <= tol {
            return Ok(x);
        }
        if gx < y {
            a = x;
            ga = gx;
        } else {
            b = x;
            gb = gx;
        }
    }
    Ok(0.5 * (a + b))
}

/// Like [`invert_monotone`] but grows the upper end geometrically from `hi0`
/// until it brackets `y`.
pub fn invert_monotone_unbounded<G: Fn(f64) -> f64>(g: G, y: f64, lo: f64, hi0: f64) -> Result<f64> {
    let mut hi = hi0.max(lo + 1.0);
    let mut width = hi - lo;
    for _ in 0..2100 {
        let gh = g(hi);
        if gh >= y - tolerance(y) {
            return invert_monotone(&g, y, lo, hi);
        }
        if !hi.is_finite() {
            break;
        }
        width *= 2.0;
        hi = lo + width;
    }
    Err(NumericsError::NotBracketed {
        y,
        g_lo: g(lo),
        g_hi: g(hi),
    })
}
