//! Weighted least-squares fits on log scales.

use serde::{Deserialize, Serialize};

use super::{NumericsError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub exponent: f64,
    pub intercept: f64,
    pub stderr: f64,
    pub r_squared: f64,
    pub n_points: usize,
}

fn weighted_line(xs: &[f64], ys: &[f64], weights: Option<&[f64]>) -> Result<FitResult> {
    let n = xs.len();
    if n != ys.len() || weights.is_some_and(|w| w.len() != n) {
        return Err(NumericsError::DegenerateInput("length mismatch"));
    }
    if n < 2 {
        return Err(NumericsError::DegenerateInput("fewer than two points"));
    }
    let w = |i: usize| weights.map_or(1.0, |w| w[i]);
    if (0..n).any(|i| !(w(i) >= 0.0) || !w(i).is_finite()) {
        return Err(NumericsError::DegenerateInput("invalid weight"));
    }
    let sw: f64 = (0..n).map(w).sum();
    if sw <= 0.0 {
        return Err(NumericsError::DegenerateInput("zero total weight"));
    }
    let mx = (0..n).map(|i| w(i) * xs[i]).sum::<f64>() / sw;
    let my = (0..n).map(|i| w(i) * ys[i]).sum::<f64>() / sw;
    let sxx: f64 = (0..n).map(|i| w(i) * (xs[i] - mx).powi(2)).sum();
    let sxy: f64 = (0..n).map(|i| w(i) * (xs[i] - mx) * (ys[i] - my)).sum();
    let syy: f64 = (0..n).map(|i| w(i) * (ys[i] - my).powi(2)).sum();
    let distinct = xs.iter().any(|&x| (x - xs[0]).abs() > 1e-12 * xs[0].abs().max(1.0));
    if !distinct || sxx <= 0.0 {
        return Err(NumericsError::DegenerateInput("fewer than two distinct abscissae"));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ssr: f64 = (0..n).map(|i| w(i) * (ys[i] - intercept - slope * xs[i]).powi(2)).sum();
    let r_squared = if syy > 0.0 { (1.0 - ssr / syy).clamp(0.0, 1.0) } else { 1.0 };
    // effective sample size keeps the stderr meaningful for non-unit weights
    let n_eff = sw * sw / (0..n).map(|i| w(i) * w(i)).sum::<f64>();
    let stderr = if n_eff > 2.0 {
        (ssr / sw * n_eff / (n_eff - 2.0) / (sxx / sw) / n_eff).sqrt()
    } else {
        0.0
    };
    Ok(FitResult {
        exponent: slope,
        intercept,
        stderr,
        r_squared,
        n_points: n,
    })
}

/// Fit `ln y = intercept + exponent * ln x`.
pub fn fit_loglog(xs: &[f64], ys: &[f64], weights: Option<&[f64]>) -> Result<FitResult> {
    if xs.iter().chain(ys).any(|&v| !(v > 0.0) || !v.is_finite()) {
        return Err(NumericsError::DegenerateInput("non-positive value"));
    }
    let lx: Vec<f64> = xs.iter().map(|x| x.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|y| y.ln()).collect();
    weighted_line(&lx, &ly, weights)
}

/// Fit `ln y = intercept + exponent * x` (exponential scale).
pub fn fit_semilog(xs: &[f64], ys: &[f64], weights: Option<&[f64]>) -> Result<FitResult> {
    if ys.iter().any(|&v| !(v > 0.0) || !v.is_finite()) || xs.iter().any(|x| !x.is_finite()) {
        return Err(NumericsError::DegenerateInput("non-positive value"));
    }
    let ly: Vec<f64> = ys.iter().map(|y| y.ln()).collect();
    weighted_line(xs, &ly, weights)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn exact_inverse_square() {
        let xs: Vec<f64> = (1..=10).map(|i| i as f64).collect();
        let ys: Vec<f64> = xs.iter().map(|x| x.powi(-2)).collect();
        let f = fit_loglog(&xs, &ys, None).unwrap();
        assert!((f.exponent + 2.0).abs() < 1e-12);
        assert!((f.r_squared - 1.0).abs() < 1e-12);
        assert_eq!(f.n_points, 10);
    }

    #[test]
    fn tiny_noise() {
        let xs: Vec<f64> = (1..=20).map(|i| i as f64 * 0.7).collect();
        let ys: Vec<f64> = xs
            .iter()
            .enumerate()
            .map(|(i, x)| 3.0 * x.sqrt() * (1.0 + if i % 2 == 0 { 5e-10 } else { -5e-10 }))
            .collect();
        let f = fit_loglog(&xs, &ys, None).unwrap();
        assert!((f.exponent - 0.5).abs() < 1e-6);
    }

    #[test]
    fn degenerate_inputs() {
        assert!(fit_loglog(&[2.0, 2.0], &[1.0, 3.0], None).is_err());
        assert!(fit_loglog(&[2.0], &[1.0], None).is_err());
        assert!(fit_loglog(&[1.0, 2.0], &[0.0, 1.0], None).is_err());
    }

    #[test]
    fn semilog_rate() {
        let xs: Vec<f64> = (0..8).map(|i| i as f64).collect();
        let ys: Vec<f64> = xs.iter().map(|x| 2.0 * (-0.5 * x).exp()).collect();
        let f = fit_semilog(&xs, &ys, None).unwrap();
        assert!((f.exponent + 0.5).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn planted_exponent(k in -4.0f64..4.0, c in 0.01f64..100.0, n in 2usize..30) {
            let xs: Vec<f64> = (0..n).map(|i| 1.0 + i as f64 * 1.3).collect();
            let ys: Vec<f64> = xs.iter().map(|x| c * x.powf(k)).collect();
            let f = fit_loglog(&xs, &ys, None).unwrap();
            prop_assert!((f.exponent - k).abs() < 1e-9);
            prop_assert!(f.stderr >= 0.0 && (0.0..=1.0).contains(&f.r_squared));
        }
    }
}
