//! Exponential integral and upper incomplete gamma for small (possibly negative) order.

pub use statrs::function::gamma::{gamma, ln_gamma};

const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;

/// `ln(e^x x^{-a} Gamma(a, x))` by Lentz's continued fraction; good for `x >= 1`, `a < 1`.
fn ln_upper_gamma_cf_scaled(a: f64, x: f64) -> f64 {
    const TINY: f64 = 1e-300;
    let mut b = x + 1.0 - a;
    let mut c = 1.0 / TINY;
    let mut d = 1.0 / b;
    let mut h = d;
    for i in 1..10_000 {
        let an = -(i as f64) * (i as f64 - a);
        b += 2.0;
        d = an * d + b;
        if d.abs() < TINY {
            d = TINY;
        }
        c = b + an / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        let del = d * c;
        h *= del;
        if (del - 1.0).abs() < 1e-16 {
            break;
        }
    }
    h.ln()
}

/// `E1(x) = int_x^inf e^{-t}/t dt` for `x > 0`.
pub fn exp_int_e1(x: f64) -> f64 {
    if x <= 0.0 {
        return f64::INFINITY;
    }
    if x < 1.0 {
        let mut sum = 0.0;
        let mut term = 1.0;
        for k in 1..200 {
            term *= -x / k as f64;
            let add = term / k as f64;
            sum += add;
            if add.abs() < 1e-17 * sum.abs().max(1e-300) {
                break;
            }
        }
        -EULER_GAMMA - x.ln() - sum
    } else {
        ln_exp_int_e1(x).exp()
    }
}

/// `ln E1(x)`, accurate where `E1` underflows.
pub fn ln_exp_int_e1(x: f64) -> f64 {
    if x < 1.0 {
        exp_int_e1(x).ln()
    } else {
        -x + ln_upper_gamma_cf_scaled(0.0, x)
    }
}

/// Upper incomplete gamma `Gamma(a, x)` for `a in (-1, 1)`, `x > 0`.
pub fn upper_gamma(a: f64, x: f64) -> f64 {
    ln_upper_gamma(a, x).exp()
}

/// `ln Gamma(a, x)` for `a in (-1, 1)`, `x > 0`.
pub fn ln_upper_gamma(a: f64, x: f64) -> f64 {
    debug_assert!(a > -1.0 && a < 1.0 && x > 0.0);
    if x >= 1.0 {
        return -x + a * x.ln() + ln_upper_gamma_cf_scaled(a, x);
    }
    if a == 0.0 {
        return exp_int_e1(x).ln();
    }
    if a > 0.0 {
        let q = statrs::function::gamma::gamma_ur(a, x);
        return ln_gamma(a) + q.ln();
    }
    // Gamma(a, x) = (x^a e^{-x} - Gamma(a + 1, x)) / (-a) for a in (-1, 0)
    let up = statrs::function::gamma::gamma_ur(a + 1.0, x) * gamma(a + 1.0);
    ((x.powf(a) * (-x).exp() - up) / (-a)).ln()
}
