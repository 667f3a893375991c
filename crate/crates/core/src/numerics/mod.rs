//! Shared numeric kernel: adaptive quadrature, monotone inversion, ODE flows
//! and log-log regression.

mod fit;
mod ode;
mod quadrature;
mod roots;
pub mod special;

pub use fit::{fit_loglog, fit_semilog, FitResult};
pub use ode::{integrate_autonomous, ode_flow};
pub use quadrature::{integrate, integrate_semiinfinite, Estimate, QuadratureSpec};
pub use roots::{invert_monotone, invert_monotone_unbounded};

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum NumericsError {
    #[error("integrand returned a non-finite value at {at}")]
    NonFiniteEvaluation { at: f64 },
    #[error("integral diverges (estimate {estimate:.6e} still growing)")]
    Divergent { estimate: f64 },
    #[error("tolerance not met: value {value:.6e}, error {error:.3e}")]
    ToleranceNotMet { value: f64, error: f64 },
    #[error("target {y} not bracketed by [{g_lo}, {g_hi}]")]
    NotBracketed { y: f64, g_lo: f64, g_hi: f64 },
    #[error("degenerate regression input: {0}")]
    DegenerateInput(&'static str),
    #[error("invalid quadrature spec: {0}")]
    InvalidSpec(&'static str),
}

pub type Result<T> = std::result::Result<T, NumericsError>;

/// `n` points spaced evenly in log between `lo` and `hi` inclusive.
pub fn logspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    assert!(lo > 0.0 && hi >= lo && n >= 1);
    if n == 1 {
        return vec![lo];
    }
    let (a, b) = (lo.ln(), hi.ln());
    (0..n)
        .map(|i| {
            if i == n - 1 {
                hi
            } else {
                (a + (b - a) * i as f64 / (n - 1) as f64).exp()
            }
        })
        .collect()
}
