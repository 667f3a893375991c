//! Scalar autonomous ODEs on `[0, inf)` with an absorbing floor at zero.

use crate::release_rate::ReleaseRate;

/// Level reached from `x0` after `dt` under `dx/dt = -r(x)`, clamped at zero.
///
/// Uses the release family's closed-form flow when it has one.
pub fn ode_flow(r: &ReleaseRate, x0: f64, dt: f64) -> f64 {
    r.flow(x0, dt, 0.0)
}

fn rk4<F: Fn(f64) -> f64>(rhs: &F, x: f64, h: f64) -> f64 {
    let f = |y: f64| rhs(y.max(0.0));
    let k1 = f(x);
    let k2 = f(x + 0.5 * h * k1);
    let k3 = f(x + 0.5 * h * k2);
    let k4 = f(x + h * k3);
    x + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
}

/// Integrate `dx/dt = rhs(x)` from `x0` over `dt` with step-doubling RK4.
///
/// `tol` bounds the local error per step relative to `max(1, |x|)`. Once the
/// path reaches zero and `rhs(0+) <= 0` it stays at zero.
pub fn integrate_autonomous<F: Fn(f64) -> f64>(rhs: F, x0: f64, dt: f64, tol: f64) -> f64 {
    if dt <= 0.0 {
        return x0;
    }
    let stuck_at_zero = |rhs: &F| rhs(f64::MIN_POSITIVE) <= 0.0;
    let mut x = x0.max(0.0);
    if x == 0.0 && stuck_at_zero(&rhs) {
        return 0.0;
    }
    let h_min = dt * 1e-13;
    let slope = rhs(x).abs();
    let mut h = if slope > 0.0 {
        (0.05 * x.max(1e-3) / slope).min(dt)
    } else {
        dt
    };
    let mut t = 0.0;
    while t < dt {
        h = h.min(dt - t).max(h_min.min(dt - t));
        let full = rk4(&rhs, x, h);
        let half = rk4(&rhs, rk4(&rhs, x, 0.5 * h), 0.5 * h);
        let err = (half - full).abs() / 15.0;
        let scale = tol * half.abs().max(1.0);
        if err <= scale || h <= h_min {
            if half < 0.0 || full < 0.0 {
                if h > h_min {
                    h *= 0.5;
                    continue;
                }
                x = 0.0;
                t += h;
                if stuck_at_zero(&rhs) {
                    return 0.0;
                }
                continue;
            }
            x = (half + (half - full) / 15.0).max(0.0);
            t += h;
            if x == 0.0 && stuck_at_zero(&rhs) {
                return 0.0;
            }
            let grow = if err > 0.0 {
                (0.9 * (scale / err).powf(0.2)).min(4.0)
            } else {
                4.0
            };
            h *= grow.max(1.0);
        } else {
            h *= (0.9 * (scale / err).powf(0.2)).max(0.1);
        }
    }
    x
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn linear_decay() {
        let x = integrate_autonomous(|x| -x, 5.0, 1.0, 1e-10);
        assert!((x - 5.0 * (-1f64).exp()).abs() < 1e-8);
    }

    #[test]
    fn constant_drain_absorbs() {
        let x = integrate_autonomous(|x| if x > 0.0 { -2.0 } else { 0.0 }, 3.0, 2.0, 1e-10);
        assert_eq!(x, 0.0);
    }

    #[test]
    fn sqrt_drain_hits_zero_in_finite_time() {
        // x(t) = (sqrt(x0) - t/2)^2
        let x = integrate_autonomous(|x: f64| -x.sqrt(), 4.0, 2.0, 1e-10);
        assert!((x - 1.0).abs() < 1e-7, "{x}");
        let y = integrate_autonomous(|x: f64| -x.sqrt(), 4.0, 5.0, 1e-10);
        assert_eq!(y, 0.0);
    }

    #[test]
    fn inflow_equilibrium() {
        // dx/dt = 1 - x from 0 approaches 1
        let x = integrate_autonomous(|x| 1.0 - x, 0.0, 3.0, 1e-10);
        assert!((x - (1.0 - (-3f64).exp())).abs() < 1e-8);
    }
}
