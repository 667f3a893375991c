//! Lyapunov drift apparatus: the rate clock `Phi`, the profile `V_bar`,
//! generator evaluation, drift certificates, tail envelopes, TV lower bounds
//! and Wasserstein contraction.
//!
//! `V_bar` overflows `f64` for geometric rate functions long before the probe
//! grid ends, so everything downstream of it is computed in log space.

use std::fmt;
use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::classifier::{criterion_positive_recurrent, ClassifierConfig};
use crate::levy_input::{Activity, LevyInput};
use crate::numerics::{
    fit_loglog, integrate, integrate_semiinfinite, invert_monotone, invert_monotone_unbounded, logspace, FitResult,
    NumericsError, QuadratureSpec,
};
use crate::release_rate::{AsymptoticClass, ReleaseFamily, ReleaseRate};
use crate::rng::{stream, Purpose};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LyapunovError {
    #[error("jump integral diverges: {0}")]
    Divergent(String),
    #[error("(C3) fails: jump integral of V diverges at u = {u}")]
    C3Violation { u: f64 },
    #[error("invalid rate function: {0}")]
    InvalidRateFunction(String),
    #[error("hypothesis failed: {0}")]
    HypothesisFailed(String),
    #[error("invalid modulus: {0}")]
    InvalidModulus(String),
    #[error(transparent)]
    Numerics(#[from] NumericsError),
}

pub type Result<T> = std::result::Result<T, LyapunovError>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LyapunovConfig {
    pub probe_grid: Vec<f64>,
    pub decision_margin: f64,
    pub quadrature: QuadratureSpec,
    pub epsilon: f64,
    pub submult_pairs: usize,
    pub seed: u64,
}

impl Default for LyapunovConfig {
    fn default() -> Self {
        let c = ClassifierConfig::default();
        Self {
            probe_grid: c.probe_grid,
            decision_margin: c.decision_margin,
            quadrature: c.quadrature,
            epsilon: 0.1,
            submult_pairs: 1000,
            seed: 0x5eed,
        }
    }
}

impl LyapunovConfig {
    pub fn classifier(&self) -> ClassifierConfig {
        ClassifierConfig {
            probe_grid: self.probe_grid.clone(),
            decision_margin: self.decision_margin,
            quadrature: self.quadrature,
            symbolic: false,
        }
    }
}

fn last3_max(values: &[f64]) -> f64 {
    values[values.len().saturating_sub(3)..]
        .iter()
        .copied()
        .fold(f64::NEG_INFINITY, f64::max)
}

// ---------------------------------------------------------------------------
// rate functions

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "kebab-case", deny_unknown_fields)]
pub enum PhiFamily {
    /// `phi = 1`
    Constant,
    /// `phi(t) = c t`
    Linear { c: f64 },
    /// `phi(t) = t^a`, `a` in `(0, 1)`
    Power { a: f64 },
}

#[derive(Clone)]
pub struct CustomPhi {
    pub name: String,
    pub f: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
}

#[derive(Clone)]
enum PhiKind {
    Preset(PhiFamily),
    Custom(CustomPhi),
}

/// Non-decreasing concave `phi` on `[1, inf)`.
#[derive(Clone)]
pub struct RateFunction {
    kind: PhiKind,
}

impl fmt::Debug for RateFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.kind {
            PhiKind::Preset(p) => write!(f, "RateFunction({p:?})"),
            PhiKind::Custom(c) => write!(f, "RateFunction(custom {})", c.name),
        }
    }
}

impl fmt::Display for RateFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.kind {
            PhiKind::Preset(PhiFamily::Constant) => write!(f, "phi = 1"),
            PhiKind::Preset(PhiFamily::Linear { c }) => write!(f, "phi(t) = {c} t"),
            PhiKind::Preset(PhiFamily::Power { a }) => write!(f, "phi(t) = t^{a}"),
            PhiKind::Custom(c) => write!(f, "{}", c.name),
        }
    }
}

impl Serialize for RateFunction {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        use serde::ser::SerializeStruct;
        match &self.kind {
            PhiKind::Preset(p) => p.serialize(s),
            PhiKind::Custom(c) => {
                let mut st = s.serialize_struct("RateFunction", 2)?;
                st.serialize_field("family", "custom")?;
                st.serialize_field("name", &c.name)?;
                st.end()
            }
        }
    }
}

impl From<PhiFamily> for RateFunction {
    fn from(p: PhiFamily) -> Self {
        RateFunction {
            kind: PhiKind::Preset(p),
        }
    }
}

impl RateFunction {
    pub fn new(family: PhiFamily) -> Result<Self> {
        let rf = RateFunction::from(family);
        rf.validate()?;
        Ok(rf)
    }

    pub fn constant() -> Self {
        PhiFamily::Constant.into()
    }

    pub fn linear(c: f64) -> Self {
        PhiFamily::Linear { c }.into()
    }

    pub fn power(a: f64) -> Self {
        PhiFamily::Power { a }.into()
    }

    pub fn custom<F>(name: impl Into<String>, f: F) -> Self
    where
        F: Fn(f64) -> f64 + Send + Sync + 'static,
    {
        RateFunction {
            kind: PhiKind::Custom(CustomPhi {
                name: name.into(),
                f: Arc::new(f),
            }),
        }
    }

    pub fn family(&self) -> Option<PhiFamily> {
        match &self.kind {
            PhiKind::Preset(p) => Some(*p),
            PhiKind::Custom(_) => None,
        }
    }

    pub fn phi(&self, t: f64) -> f64 {
        match &self.kind {
            PhiKind::Preset(PhiFamily::Constant) => 1.0,
            PhiKind::Preset(PhiFamily::Linear { c }) => c * t,
            PhiKind::Preset(PhiFamily::Power { a }) => t.powf(*a),
            PhiKind::Custom(c) => (c.f)(t),
        }
    }

    /// Parameter checks plus sampled monotonicity and concavity on `[1, 1e6]`.
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(LyapunovError::InvalidRateFunction(m));
        match self.family() {
            Some(PhiFamily::Linear { c }) if !(c > 0.0 && c.is_finite()) => return bad(format!("c = {c}")),
            Some(PhiFamily::Power { a }) if !(a > 0.0 && a < 1.0) => return bad(format!("a = {a} not in (0, 1)")),
            _ => {}
        }
        let ts = logspace(1.0, 1e6, 121);
        let ys: Vec<f64> = ts.iter().map(|&t| self.phi(t)).collect();
        if !(ys[0] > 0.0) || ys.iter().any(|y| !y.is_finite()) {
            return bad("phi(1) must be positive and phi finite".into());
        }
        for w in ys.windows(2) {
            if w[1] < w[0] - 1e-12 * w[0].abs() {
                return bad("phi is decreasing somewhere on [1, 1e6]".into());
            }
        }
        let slopes: Vec<f64> = ts
            .windows(2)
            .zip(ys.windows(2))
            .map(|(t, y)| (y[1] - y[0]) / (t[1] - t[0]))
            .collect();
        let scale = slopes.iter().fold(0.0f64, |m, s| m.max(s.abs()));
        for w in slopes.windows(2) {
            if w[1] > w[0] + 1e-9 * scale.max(1e-300) {
                return bad("phi is not concave on [1, 1e6]".into());
            }
        }
        Ok(())
    }

    /// `Phi(t) = int_1^t ds / phi(s)`.
    pub fn big_phi(&self, t: f64) -> f64 {
        match &self.kind {
            PhiKind::Preset(PhiFamily::Constant) => t - 1.0,
            PhiKind::Preset(PhiFamily::Linear { c }) => t.ln() / c,
            PhiKind::Preset(PhiFamily::Power { a }) => (t.powf(1.0 - a) - 1.0) / (1.0 - a),
            PhiKind::Custom(c) => integrate(|s| 1.0 / (c.f)(s), 1.0, t, &QuadratureSpec::default())
                .map(|e| e.value)
                .unwrap_or(f64::NAN),
        }
    }

    /// `ln Phi^{-1}(s)` for `s >= 0`.
    pub fn ln_big_phi_inv(&self, s: f64) -> f64 {
        match &self.kind {
            PhiKind::Preset(PhiFamily::Constant) => s.ln_1p(),
            PhiKind::Preset(PhiFamily::Linear { c }) => c * s,
            PhiKind::Preset(PhiFamily::Power { a }) => ((1.0 - a) * s).ln_1p() / (1.0 - a),
            PhiKind::Custom(_) => self.big_phi_inv(s).ln(),
        }
    }

    pub fn big_phi_inv(&self, s: f64) -> f64 {
        match &self.kind {
            PhiKind::Custom(_) => invert_monotone_unbounded(|t| self.big_phi(t), s, 1.0, 2.0).unwrap_or(f64::NAN),
            _ => self.ln_big_phi_inv(s).exp(),
        }
    }

    /// `ln phi(Phi^{-1}(s))`.
    pub fn ln_phi_of_inv(&self, s: f64) -> f64 {
        match &self.kind {
            PhiKind::Preset(PhiFamily::Constant) => 0.0,
            PhiKind::Preset(PhiFamily::Linear { c }) => c.ln() + c * s,
            PhiKind::Preset(PhiFamily::Power { a }) => a / (1.0 - a) * ((1.0 - a) * s).ln_1p(),
            PhiKind::Custom(c) => (c.f)(self.big_phi_inv(s)).ln(),
        }
    }

    /// `ln phi(Phi^{-1}(s + ds)) - ln phi(Phi^{-1}(s))` without cancellation.
    pub fn ln_phi_of_inv_increment(&self, s: f64, ds: f64) -> f64 {
        match &self.kind {
            PhiKind::Preset(PhiFamily::Constant) => 0.0,
            PhiKind::Preset(PhiFamily::Linear { c }) => c * ds,
            PhiKind::Preset(PhiFamily::Power { a }) => a / (1.0 - a) * ((1.0 - a) * ds / (1.0 + (1.0 - a) * s)).ln_1p(),
            PhiKind::Custom(_) => self.ln_phi_of_inv(s + ds) - self.ln_phi_of_inv(s),
        }
    }

    /// `ln Phi^{-1}(s + ds) - ln Phi^{-1}(s)` without cancellation.
    pub fn ln_big_phi_inv_increment(&self, s: f64, ds: f64) -> f64 {
        match &self.kind {
            PhiKind::Preset(PhiFamily::Constant) => (ds / (1.0 + s)).ln_1p(),
            PhiKind::Preset(PhiFamily::Linear { c }) => c * ds,
            PhiKind::Preset(PhiFamily::Power { a }) => ((1.0 - a) * ds / (1.0 + (1.0 - a) * s)).ln_1p() / (1.0 - a),
            PhiKind::Custom(_) => self.ln_big_phi_inv(s + ds) - self.ln_big_phi_inv(s),
        }
    }

    /// Shape of `t -> phi(Phi^{-1}(t))`.
    pub fn tv_rate(&self) -> TvRate {
        match &self.kind {
            PhiKind::Preset(PhiFamily::Constant) => TvRate::Bounded,
            PhiKind::Preset(PhiFamily::Linear { c }) => TvRate::Geometric { c: *c },
            PhiKind::Preset(PhiFamily::Power { a }) => TvRate::Polynomial { exponent: a / (1.0 - a) },
            PhiKind::Custom(_) => {
                let (t0, t1) = (1e4, 1e6);
                let e = (self.ln_phi_of_inv(t1) - self.ln_phi_of_inv(t0)) / (t1 / t0).ln();
                TvRate::Polynomial { exponent: e }
            }
        }
    }
}

/// Growth of the predicted convergence rate `phi(Phi^{-1}(t))`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TvRate {
    /// `phi` bounded: convergence without a rate
    Bounded,
    Geometric {
        c: f64,
    },
    Polynomial {
        exponent: f64,
    },
}

impl TvRate {
    /// Exponent of the implied TV decay `t^{-exponent}`; `-inf` for geometric.
    pub fn decay_exponent(&self) -> f64 {
        match *self {
            TvRate::Bounded => 0.0,
            TvRate::Geometric { .. } => f64::NEG_INFINITY,
            TvRate::Polynomial { exponent } => -exponent,
        }
    }
}

// ---------------------------------------------------------------------------
// generator

/// A `C^1` test function with its derivative.
#[derive(Clone)]
pub struct TestFunction {
    pub name: String,
    pub f: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
    pub df: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
    pub monotone: bool,
    /// declared power growth at infinity; checked against the moments of `nu`
    pub growth: f64,
}

impl fmt::Debug for TestFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "TestFunction({})", self.name)
    }
}

impl TestFunction {
    pub fn constant(c: f64) -> Self {
        TestFunction {
            name: format!("{c}"),
            f: Arc::new(move |_| c),
            df: Arc::new(|_| 0.0),
            monotone: true,
            growth: 0.0,
        }
    }

    /// `u^p`, `p >= 1`.
    pub fn power(p: f64) -> Self {
        TestFunction {
            name: format!("u^{p}"),
            f: Arc::new(move |u: f64| u.powf(p)),
            df: Arc::new(move |u: f64| p * u.powf(p - 1.0)),
            monotone: true,
            growth: p,
        }
    }

    /// `(1 + u)^p`.
    pub fn shifted_power(p: f64) -> Self {
        TestFunction {
            name: format!("(1+u)^{p}"),
            f: Arc::new(move |u: f64| (1.0 + u).powf(p)),
            df: Arc::new(move |u: f64| p * (1.0 + u).powf(p - 1.0)),
            monotone: true,
            growth: p.max(0.0),
        }
    }

    pub fn custom<F, D>(name: impl Into<String>, f: F, df: D, monotone: bool, growth: f64) -> Self
    where
        F: Fn(f64) -> f64 + Send + Sync + 'static,
        D: Fn(f64) -> f64 + Send + Sync + 'static,
    {
        TestFunction {
            name: name.into(),
            f: Arc::new(f),
            df: Arc::new(df),
            monotone,
            growth,
        }
    }
}

fn check_growth(input: &LevyInput, f: &TestFunction) -> Result<()> {
    if f.growth > 0.0 && f.growth.is_finite() && input.moment_above_one(f.growth).is_err() {
        return Err(LyapunovError::Divergent(format!(
            "int v^{} nu(dv) over [1, inf) is infinite",
            f.growth
        )));
    }
    Ok(())
}

fn jump_integral<F: Fn(f64) -> f64>(g: F, spec: &QuadratureSpec, what: &str) -> Result<f64> {
    let settle = |res: std::result::Result<crate::numerics::Estimate, NumericsError>| match res {
        Ok(e) => Ok(e.value),
        Err(NumericsError::ToleranceNotMet { value, .. }) => Ok(value),
        Err(NumericsError::Divergent { .. }) | Err(NumericsError::NonFiniteEvaluation { .. }) => {
            Err(LyapunovError::Divergent(what.to_string()))
        }
        Err(e) => Err(e.into()),
    };
    // v = w^4 on [0, 1] tames the small-jump singularity of nu
    let head = settle(integrate(|w: f64| 4.0 * w.powi(3) * g(w.powi(4)), 0.0, 1.0, spec))?;
    let tail = settle(integrate_semiinfinite(|x| g(1.0 + x), spec))?;
    Ok(head + tail)
}

/// `-r(u) f'(u) + int_0^inf f'(u + v) nu_bar(v) dv`.
pub fn generator_fubini(input: &LevyInput, r: &ReleaseRate, f: &TestFunction, u: f64, spec: &QuadratureSpec) -> Result<f64> {
    check_growth(input, f)?;
    let jumps = jump_integral(|v| (f.df)(u + v) * input.tail(v), spec, &f.name)?;
    Ok(-r.rate(u) * (f.df)(u) + jumps)
}

/// `-r(u) f'(u) + int (f(u + v) - f(u)) nu(dv)` through the Lévy density.
pub fn generator_direct(input: &LevyInput, r: &ReleaseRate, f: &TestFunction, u: f64, spec: &QuadratureSpec) -> Result<f64> {
    check_growth(input, f)?;
    let fu = (f.f)(u);
    let jumps = jump_integral(|v| ((f.f)(u + v) - fu) * input.density(v), spec, &f.name)?;
    Ok(-r.rate(u) * (f.df)(u) + jumps)
}

/// `L f(u)`; the Fubini form for monotone `f`, the direct form otherwise.
pub fn generator_apply(input: &LevyInput, r: &ReleaseRate, f: &TestFunction, u: f64, spec: &QuadratureSpec) -> Result<f64> {
    if f.monotone {
        generator_fubini(input, r, f, u, spec)
    } else {
        generator_direct(input, r, f, u, spec)
    }
}

// ---------------------------------------------------------------------------
// drift certificate

#[derive(Debug, Clone, Serialize)]
pub struct DriftCertificate {
    pub phi: RateFunction,
    pub probes: Vec<f64>,
    /// ratio `int phi(V(u+v)) nu_bar(v) / r(u+v) dv / phi(V(u))` per probe
    pub ratios: Vec<f64>,
    pub drift_margin: f64,
    pub c3_probes: Vec<f64>,
    /// `int_[1,inf) V(u+v) nu(dv) / V(max(u, 1))` per probe
    pub c3_values: Vec<f64>,
    pub condition_c3: bool,
    pub valid: bool,
    pub v_bar_at_one: f64,
    pub tv_rate: TvRate,
    #[serde(skip)]
    release: ReleaseRate,
}

impl DriftCertificate {
    pub fn release(&self) -> &ReleaseRate {
        &self.release
    }

    /// The clock `int_1^u dv / r(v) + 1`, `u >= 1`.
    pub fn clock(&self, u: f64) -> f64 {
        1.0 + self.release.flow_time_integral(1.0, u.max(1.0)).unwrap_or(f64::INFINITY)
    }

    pub fn ln_v_bar(&self, u: f64) -> f64 {
        self.phi.ln_big_phi_inv(self.clock(u))
    }

    /// `V_bar` on `[1, inf)`, extended by a `C^1` quadratic with zero slope at 0.
    pub fn v(&self, u: f64) -> f64 {
        if u >= 1.0 {
            return self.ln_v_bar(u).exp();
        }
        let d1 = self.v_bar_slope(1.0);
        self.v_bar_at_one - 0.5 * d1 * (1.0 - u * u)
    }

    /// `V_bar'(u) = phi(V_bar(u)) / r(u)`.
    pub fn v_bar_slope(&self, u: f64) -> f64 {
        (self.phi.ln_phi_of_inv(self.clock(u)) - self.release.rate(u).ln()).exp()
    }

    /// Relative residual of `V_bar'(u) r(u) = phi(V_bar(u))`, with the
    /// derivative of `ln V_bar` from a Richardson-extrapolated forward difference.
    pub fn ode_residual(&self, u: f64) -> f64 {
        let s = self.clock(u);
        let slope = |h: f64| {
            let ds = self.release.flow_time_integral(u, u + h).unwrap_or(f64::NAN);
            self.phi.ln_big_phi_inv_increment(s, ds) / h
        };
        let h = 1e-4 * u;
        let dlnv = 2.0 * slope(0.5 * h) - slope(h);
        let ln_v = self.ln_v_bar(u);
        let ln_phi_v = self.phi.ln_phi_of_inv(s);
        dlnv * self.release.rate(u) * (ln_v - ln_phi_v).exp() - 1.0
    }

    /// `ln phi(Phi^{-1}(t))`.
    pub fn ln_predicted_tv_rate(&self, t: f64) -> f64 {
        self.phi.ln_phi_of_inv(t.max(0.0))
    }

    pub fn predicted_tv_rate(&self, t: f64) -> f64 {
        self.ln_predicted_tv_rate(t).exp()
    }

    /// `ln [1 / (phi(Phi^{-1}(u)) v phi(V_bar(u)))]`.
    pub fn ln_predicted_tail_upper(&self, u: f64) -> f64 {
        -self.phi.ln_phi_of_inv(u.max(0.0)).max(self.phi.ln_phi_of_inv(self.clock(u)))
    }

    pub fn predicted_tail_upper(&self, u: f64) -> f64 {
        self.ln_predicted_tail_upper(u).exp()
    }
}

/// Drift ratio at `u >= 1`; `+inf` when the jump integral diverges.
pub fn drift_ratio(input: &LevyInput, r: &ReleaseRate, phi: &RateFunction, u: f64, spec: &QuadratureSpec) -> f64 {
    let s = 1.0 + r.flow_time_integral(1.0, u).unwrap_or(f64::INFINITY);
    let integrand = |v: f64| {
        let ds = r.flow_time_integral(u, u + v).unwrap_or(f64::INFINITY);
        let ln = phi.ln_phi_of_inv_increment(s, ds) + input.ln_tail(v) - r.rate(u + v).ln();
        ln.exp()
    };
    match integrate_semiinfinite(integrand, spec) {
        Ok(e) => e.value,
        Err(NumericsError::ToleranceNotMet { value, .. }) => value,
        Err(_) => f64::INFINITY,
    }
}

fn c3_value(input: &LevyInput, r: &ReleaseRate, phi: &RateFunction, u: f64, spec: &QuadratureSpec) -> f64 {
    // V(u+1) nu_bar(1) + int_1^inf V'(u+v) nu_bar(v) dv, scaled by V(max(u, 1))
    let base = u.max(1.0);
    let s_base = 1.0 + r.flow_time_integral(1.0, base).unwrap_or(f64::INFINITY);
    let ln_v_base = phi.ln_big_phi_inv(s_base);
    let ln_v = |w: f64| phi.ln_big_phi_inv(s_base + r.flow_time_integral(base, w).unwrap_or(f64::INFINITY));
    let ln_dv = |w: f64| {
        let s = s_base + r.flow_time_integral(base, w).unwrap_or(f64::INFINITY);
        phi.ln_phi_of_inv(s) - r.rate(w).ln()
    };
    let head = (ln_v(u + 1.0) - ln_v_base + input.ln_tail(1.0)).exp();
    let tail = integrate_semiinfinite(|x| (ln_dv(u + 1.0 + x) - ln_v_base + input.ln_tail(1.0 + x)).exp(), spec);
    match tail {
        Ok(e) => head + e.value,
        Err(NumericsError::ToleranceNotMet { value, .. }) => head + value,
        Err(_) => f64::INFINITY,
    }
}

pub fn build_certificate(
    input: &LevyInput,
    r: &ReleaseRate,
    phi: &RateFunction,
    cfg: &LyapunovConfig,
) -> Result<DriftCertificate> {
    phi.validate()?;
    if !r.check_regularity(input.activity()).applicable {
        return Err(LyapunovError::HypothesisFailed("release-rate regularity".into()));
    }
    let spec = &cfg.quadrature;
    let mut c3_probes = vec![0.0, 1.0];
    c3_probes.extend(cfg.probe_grid.iter().copied());
    let c3_values: Vec<f64> = c3_probes.iter().map(|&u| c3_value(input, r, phi, u, spec)).collect();
    if let Some(i) = c3_values.iter().position(|v| !v.is_finite()) {
        return Err(LyapunovError::C3Violation { u: c3_probes[i] });
    }
    let ratios: Vec<f64> = cfg.probe_grid.iter().map(|&u| drift_ratio(input, r, phi, u, spec)).collect();
    let drift_margin = 1.0 - last3_max(&ratios);
    let v_bar_at_one = phi.big_phi_inv(1.0);
    Ok(DriftCertificate {
        phi: phi.clone(),
        probes: cfg.probe_grid.clone(),
        ratios,
        drift_margin,
        c3_probes,
        c3_values,
        condition_c3: true,
        valid: drift_margin > 0.0,
        v_bar_at_one,
        tv_rate: phi.tv_rate(),
        release: r.clone(),
    })
}

// ---------------------------------------------------------------------------
// uniform ergodicity

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UniformCheck {
    pub finite_time_integral: bool,
    pub pos_rec_criterion: bool,
    pub uniform: bool,
}

pub fn check_uniform(input: &LevyInput, r: &ReleaseRate) -> UniformCheck {
    let finite_time_integral = r.flow_time_integral(1.0, f64::INFINITY).is_ok();
    let pos_rec_criterion = criterion_positive_recurrent(input, r, &ClassifierConfig::default()).satisfied;
    UniformCheck {
        finite_time_integral,
        pos_rec_criterion,
        uniform: finite_time_integral && pos_rec_criterion,
    }
}

// ---------------------------------------------------------------------------
// tail envelopes

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EnvelopeKind {
    UpperPower,
    UpperExponential,
    UpperFromRate,
    LowerPolyQuotient,
    LowerLogScale,
}

impl EnvelopeKind {
    pub fn is_upper(&self) -> bool {
        matches!(
            self,
            EnvelopeKind::UpperPower | EnvelopeKind::UpperExponential | EnvelopeKind::UpperFromRate
        )
    }
}

type LnFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// Asymptotic bound on `pi_bar(u)` for `u >= u_report`, up to a constant factor.
#[derive(Clone)]
pub struct TailEnvelope {
    pub kind: EnvelopeKind,
    pub u_report: f64,
    pub epsilon: f64,
    /// the multiplicative constant is unknown (set to 1)
    pub up_to_constant: bool,
    ln_env: LnFn,
}

impl fmt::Debug for TailEnvelope {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("TailEnvelope")
            .field("kind", &self.kind)
            .field("u_report", &self.u_report)
            .field("epsilon", &self.epsilon)
            .finish()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EnvelopeSummary {
    pub kind: EnvelopeKind,
    pub u_report: f64,
    pub epsilon: f64,
    pub up_to_constant: bool,
    /// log-log slope over `[1e4, 1e6] u_report`
    pub exponent: f64,
    pub samples: Vec<(f64, f64)>,
}

impl TailEnvelope {
    pub fn ln_value(&self, u: f64) -> f64 {
        (self.ln_env)(u)
    }

    pub fn value(&self, u: f64) -> f64 {
        self.ln_value(u).exp()
    }

    pub fn asymptotic_exponent(&self) -> f64 {
        let (a, b) = (1e4 * self.u_report, 1e6 * self.u_report);
        (self.ln_value(b) - self.ln_value(a)) / (b / a).ln()
    }

    pub fn summary(&self, grid: &[f64]) -> EnvelopeSummary {
        EnvelopeSummary {
            kind: self.kind,
            u_report: self.u_report,
            epsilon: self.epsilon,
            up_to_constant: self.up_to_constant,
            exponent: self.asymptotic_exponent(),
            samples: grid.iter().map(|&u| (u, self.value(u))).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum UpperMode {
    FromRate { phi: PhiFamily },
    SubGeometric { epsilon: f64 },
    Exponential { c: f64, epsilon: f64 },
}

pub fn tail_upper(input: &LevyInput, r: &ReleaseRate, mode: &UpperMode, cfg: &LyapunovConfig) -> Result<TailEnvelope> {
    let fail = |m: &str| Err(LyapunovError::HypothesisFailed(m.to_string()));
    match *mode {
        UpperMode::FromRate { phi } => {
            let cert = build_certificate(input, r, &RateFunction::new(phi)?, cfg)?;
            if !cert.valid {
                return fail("drift ratio limsup < 1");
            }
            let cert = Arc::new(cert);
            Ok(TailEnvelope {
                kind: EnvelopeKind::UpperFromRate,
                u_report: 1.0,
                epsilon: 0.0,
                up_to_constant: true,
                ln_env: Arc::new(move |u| cert.ln_predicted_tail_upper(u)),
            })
        }
        UpperMode::SubGeometric { epsilon } => {
            if !(epsilon > 0.0) {
                return fail("epsilon > 0");
            }
            if !check_uniform(input, r).uniform {
                return fail("uniform ergodicity (int du/r finite and positive-recurrence criterion)");
            }
            let grid = logspace(1.0, 1e6, 61);
            let ln_q: Vec<f64> = grid
                .iter()
                .map(|&u| r.rate(u).ln() - (1.0 + epsilon) * u.ln() - input.ln_tail(u))
                .collect();
            if ln_q.iter().any(|q| !q.is_finite()) {
                return fail("nu_bar > 0");
            }
            // smallest grid point from which r / (u^{1+eps} nu_bar) is non-decreasing
            let mut start = ln_q.len() - 1;
            while start > 0 && ln_q[start - 1] <= ln_q[start] + 1e-12 * ln_q[start].abs() {
                start -= 1;
            }
            if start > ln_q.len() / 2 {
                return fail("r / (u^{1+eps} nu_bar) eventually non-decreasing");
            }
            let ratio = |u: f64| {
                let pre = (1.0 + epsilon) * u.ln() + input.ln_tail(u) - r.rate(u).ln();
                let res = integrate_semiinfinite(
                    |v| (pre + input.ln_tail(v) - (1.0 + epsilon) * (u + v).ln() - input.ln_tail(u + v)).exp(),
                    &cfg.quadrature,
                );
                match res {
                    Ok(e) => e.value,
                    Err(NumericsError::ToleranceNotMet { value, .. }) => value,
                    Err(_) => f64::INFINITY,
                }
            };
            let values: Vec<f64> = cfg.probe_grid.iter().map(|&u| ratio(u)).collect();
            if !(last3_max(&values) < 1.0 - cfg.decision_margin) {
                return fail("sub-geometric ratio limsup < 1");
            }
            let (inp, rr) = (input.clone(), r.clone());
            Ok(TailEnvelope {
                kind: EnvelopeKind::UpperPower,
                u_report: grid[start],
                epsilon,
                up_to_constant: true,
                ln_env: Arc::new(move |u| (1.0 + epsilon) * u.ln() + inp.ln_tail(u) - rr.rate(u).ln()),
            })
        }
        UpperMode::Exponential { c, epsilon } => {
            if !(epsilon > 0.0 && epsilon < c) {
                return fail("epsilon in (0, c)");
            }
            if matches!(r.asymptotic_class(), AsymptoticClass::Bounded { .. }) {
                return fail("r(u) -> inf");
            }
            if !check_uniform(input, r).uniform {
                return fail("uniform ergodicity (int du/r finite and positive-recurrence criterion)");
            }
            let grid = logspace(10.0, 1e3, 13);
            let w: Vec<f64> = grid.iter().map(|&u| c * u + input.ln_tail(u)).collect();
            if !(last3_max(&w) <= w[0] + 10f64.ln()) {
                return fail("limsup e^{cu} nu_bar(u) < inf");
            }
            let rr = r.clone();
            Ok(TailEnvelope {
                kind: EnvelopeKind::UpperExponential,
                u_report: 1.0,
                epsilon,
                up_to_constant: true,
                ln_env: Arc::new(move |u| -(c - epsilon) * u - rr.rate(u).ln()),
            })
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LowerScale {
    PolyQuotient,
    LogScale,
}

/// `ln(1/nu_bar)` strictly increasing on `grid` past `strict_from`, weakly before.
fn increasing_reciprocal<F: Fn(f64) -> f64>(ln_inv: F, grid: &[f64], strict_from: f64) -> bool {
    grid.windows(2).all(|w| {
        let (a, b) = (ln_inv(w[0]), ln_inv(w[1]));
        if w[0] >= strict_from {
            b > a
        } else {
            b >= a
        }
    })
}

/// Sampled submultiplicativity of `exp(g)`: `g(u+v) <= ln c + g(u) + g(v)` for
/// some `c` in {1, 2, 4, 8}. Returns the smallest passing `c`.
fn submultiplicative<F: Fn(f64) -> f64>(g: F, lo: f64, hi: f64, pairs: usize, seed: u64) -> Option<f64> {
    let mut rng = stream(seed, 0, Purpose::SpotCheck);
    let (la, lb) = (lo.ln(), hi.ln());
    let mut worst = f64::NEG_INFINITY;
    for _ in 0..pairs {
        let u = (la + (lb - la) * rng.random::<f64>()).exp();
        let v = (la + (lb - la) * rng.random::<f64>()).exp();
        worst = worst.max(g(u + v) - g(u) - g(v));
    }
    [1.0f64, 2.0, 4.0, 8.0].into_iter().find(|c| worst <= c.ln() + 1e-9)
}

/// Log-log slope of `f` over the last decade of `[lo, hi]`.
fn end_slope<F: Fn(f64) -> f64>(ln_f: F, hi: f64) -> f64 {
    (ln_f(hi) - ln_f(hi / 10.0)) / 10f64.ln()
}

pub fn tail_lower(input: &LevyInput, r: &ReleaseRate, eps: f64, scale: LowerScale, cfg: &LyapunovConfig) -> Result<TailEnvelope> {
    let fail = |m: &str| Err(LyapunovError::HypothesisFailed(m.to_string()));
    if !(eps > 0.0) {
        return fail("epsilon > 0");
    }
    let (inp, rr) = (input.clone(), r.clone());
    match scale {
        LowerScale::PolyQuotient => {
            let grid = logspace(1e-3, 1e6, 91);
            let ln_inv = |u: f64| -input.ln_tail(u);
            if grid.iter().any(|&u| !ln_inv(u).is_finite()) {
                return fail("nu_bar > 0");
            }
            if !increasing_reciprocal(ln_inv, &grid, 1.0) {
                return fail("1/nu_bar increasing");
            }
            if submultiplicative(ln_inv, 1e-3, 1e4, cfg.submult_pairs, cfg.seed).is_none() {
                return fail("1/nu_bar submultiplicative");
            }
            let ln_ratio = |u: f64| r.rate(u).ln() - u.ln();
            let rg = logspace(1.0, 1e6, 61);
            let decreasing = rg.windows(2).all(|w| ln_ratio(w[1]) < ln_ratio(w[0]));
            if !decreasing || !(end_slope(ln_ratio, 1e6) < -0.01) {
                return fail("r(u)/u decreasing to 0");
            }
            Ok(TailEnvelope {
                kind: EnvelopeKind::LowerPolyQuotient,
                u_report: 1.0,
                epsilon: eps,
                up_to_constant: true,
                ln_env: Arc::new(move |u| (1.0 - eps) * u.ln() + inp.ln_tail(u) - rr.rate(u).ln()),
            })
        }
        LowerScale::LogScale => {
            let ln_inv_exp = |x: f64| -input.ln_tail(x.exp());
            let grid = logspace(1e-3, 100.0, 91);
            if grid.iter().any(|&x| !ln_inv_exp(x).is_finite()) {
                return fail("nu_bar > 0");
            }
            if !increasing_reciprocal(ln_inv_exp, &grid, 0.0) {
                return fail("1/nu_bar(e^u) increasing");
            }
            if submultiplicative(ln_inv_exp, 1e-3, 50.0, cfg.submult_pairs, cfg.seed).is_none() {
                return fail("1/nu_bar(e^u) submultiplicative");
            }
            let ln_ratio = |u: f64| r.rate(u).ln() - u.ln() - u.ln().ln();
            let rg = logspace(10.0, 1e6, 51);
            let decreasing = rg.windows(2).all(|w| ln_ratio(w[1]) < ln_ratio(w[0]));
            if !decreasing || !(end_slope(ln_ratio, 1e6) < -0.01) {
                return fail("r(u)/(u log u) eventually decreasing to 0");
            }
            Ok(TailEnvelope {
                kind: EnvelopeKind::LowerLogScale,
                u_report: 1.0,
                epsilon: eps,
                up_to_constant: true,
                ln_env: Arc::new(move |u| -eps * u.ln() + inp.ln_tail(u)),
            })
        }
    }
}

// ---------------------------------------------------------------------------
// TV lower bound

/// Default `h` exponent: 0.1 below the largest finite power moment of `nu`.
pub fn default_h_exponent(input: &LevyInput) -> f64 {
    let a = input.tail_class().power_index();
    if a.is_finite() {
        a - 0.1
    } else {
        2.0
    }
}

/// `t -> 1/2 L(h^{-1}(F^{-1}(2 (h(x) + c t))))` with `h(u) = (1 + u)^{a_h}`.
#[derive(Clone)]
pub struct TvLowerBound {
    pub a_h: f64,
    pub x: f64,
    /// moment-drift constant: `sup_u L h(u)` on the probe grid
    pub c: f64,
    envelope: TailEnvelope,
    /// `ln w` past which `F` increases; `F^{-1}` is taken on that branch
    z_start: f64,
}

impl fmt::Debug for TvLowerBound {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("TvLowerBound")
            .field("a_h", &self.a_h)
            .field("x", &self.x)
            .field("c", &self.c)
            .finish()
    }
}

impl TvLowerBound {
    fn h(&self, u: f64) -> f64 {
        (1.0 + u).powf(self.a_h)
    }

    fn ln_h_inv_of_exp(&self, z: f64) -> f64 {
        // ln h^{-1}(e^z)
        ((z / self.a_h).exp() - 1.0).ln()
    }

    /// `ln F(e^z)` with `F(w) = w L(h^{-1}(w))`.
    fn ln_f(&self, z: f64) -> f64 {
        z + self.envelope.ln_value(self.ln_h_inv_of_exp(z).exp())
    }

    fn z_min(&self) -> f64 {
        // h^{-1}(w) >= 1
        self.a_h * 2f64.ln()
    }

    pub fn ln_eval(&self, t: f64) -> f64 {
        let target = (2.0 * (self.h(self.x) + self.c * t)).ln();
        let z0 = self.z_start;
        let z = if target <= self.ln_f(z0) {
            z0
        } else {
            invert_monotone_unbounded(|z| self.ln_f(z), target, z0, z0 + 1.0).unwrap_or(f64::NAN)
        };
        0.5f64.ln() + self.envelope.ln_value(self.ln_h_inv_of_exp(z).exp())
    }

    pub fn eval(&self, t: f64) -> f64 {
        self.ln_eval(t).exp()
    }

    /// Log-log fit of the bound over `t_grid`.
    pub fn fitted_exponent(&self, t_grid: &[f64]) -> Result<FitResult> {
        let ys: Vec<f64> = t_grid.iter().map(|&t| self.eval(t)).collect();
        Ok(fit_loglog(t_grid, &ys, None)?)
    }
}

pub fn tv_lower_rate(
    input: &LevyInput,
    r: &ReleaseRate,
    a_h: f64,
    x: f64,
    envelope: &TailEnvelope,
    cfg: &LyapunovConfig,
) -> Result<TvLowerBound> {
    let fail = |m: &str| Err(LyapunovError::HypothesisFailed(m.to_string()));
    if envelope.kind.is_upper() {
        return fail("lower tail envelope required");
    }
    if !(a_h > 0.0) {
        return fail("h exponent > 0");
    }
    let h = TestFunction::shifted_power(a_h);
    let mut probes = vec![0.0];
    probes.extend(logspace(1e-3, 1e6, 28));
    let mut c = f64::NEG_INFINITY;
    for &u in &probes {
        match generator_apply(input, r, &h, u, &cfg.quadrature) {
            Ok(v) => c = c.max(v),
            Err(_) => return fail("moment drift E h(X(t)) <= h(x) + ct"),
        }
    }
    let mut bound = TvLowerBound {
        a_h,
        x,
        c: c.max(1e-12),
        envelope: envelope.clone(),
        z_start: 0.0,
    };
    let z0 = bound.z_min();
    let zs: Vec<f64> = (0..=80).map(|i| z0 + i as f64 * 0.5).collect();
    let lf: Vec<f64> = zs.iter().map(|&z| bound.ln_f(z)).collect();
    if lf.iter().any(|v| !v.is_finite()) {
        return fail("F increasing to infinity");
    }
    // F only has to increase eventually: h and L are fixed up to constants
    let turn = (1..lf.len()).rev().find(|&i| lf[i] <= lf[i - 1]).unwrap_or(0);
    if turn > zs.len() / 4 || !(lf[lf.len() - 1] > lf[turn] + 10f64.ln()) {
        return fail("F increasing to infinity");
    }
    bound.z_start = zs[turn];
    Ok(bound)
}

// ---------------------------------------------------------------------------
// Wasserstein contraction

#[derive(Clone)]
pub enum ConvexModulus {
    /// `beta(t) = t^d`, `d >= 1`
    Power { d: f64 },
    Custom {
        name: String,
        f: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
    },
}

impl fmt::Debug for ConvexModulus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ConvexModulus::Power { d } => write!(f, "t^{d}"),
            ConvexModulus::Custom { name, .. } => write!(f, "{name}"),
        }
    }
}

impl ConvexModulus {
    pub fn power(d: f64) -> Self {
        ConvexModulus::Power { d }
    }

    pub fn custom<F: Fn(f64) -> f64 + Send + Sync + 'static>(name: impl Into<String>, f: F) -> Self {
        ConvexModulus::Custom {
            name: name.into(),
            f: Arc::new(f),
        }
    }

    pub fn eval(&self, t: f64) -> f64 {
        match self {
            ConvexModulus::Power { d } => t.powf(*d),
            ConvexModulus::Custom { f, .. } => f(t),
        }
    }

    /// `beta(0) = 0`, positive and convex on a sampled grid.
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(LyapunovError::InvalidModulus(m.to_string()));
        if let ConvexModulus::Power { d } = self {
            if !(*d >= 1.0) {
                return bad("t^d needs d >= 1 for convexity");
            }
        }
        if self.eval(0.0) != 0.0 {
            return bad("beta(0) = 0");
        }
        let ts = logspace(1e-6, 1e4, 101);
        if ts.iter().any(|&t| !(self.eval(t) > 0.0)) {
            return bad("beta(t) > 0 for t > 0");
        }
        let mut pts = vec![0.0];
        pts.extend(ts);
        let ys: Vec<f64> = pts.iter().map(|&t| self.eval(t)).collect();
        let slopes: Vec<f64> = pts
            .windows(2)
            .zip(ys.windows(2))
            .map(|(t, y)| (y[1] - y[0]) / (t[1] - t[0]))
            .collect();
        if slopes.windows(2).any(|w| w[1] < w[0] - 1e-9 * w[0].abs().max(1e-12)) {
            return bad("beta convex");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ContractionReport {
    pub pass: bool,
    /// max of `r(u) - r(v) + Gamma beta(v - u)` over the grid pairs
    pub worst_margin: f64,
    pub worst_pair: (f64, f64),
    /// closed-form verdict where one is known
    pub exact: Option<bool>,
}

/// Default level grid: 0 plus 60 log-spaced points on `[1e-3, 1e4]`.
pub fn contraction_grid() -> Vec<f64> {
    let mut g = vec![0.0];
    g.extend(logspace(1e-3, 1e4, 60));
    g
}

fn exact_contraction(r: &ReleaseRate, beta: &ConvexModulus, gamma: f64) -> Option<bool> {
    let d = match beta {
        ConvexModulus::Power { d } => *d,
        _ => return None,
    };
    match *r.family()? {
        ReleaseFamily::Constant { .. } | ReleaseFamily::Plateau { .. } => Some(false),
        ReleaseFamily::Affine { b, .. } => Some(d == 1.0 && gamma <= b),
        // u = 0 forces beta_r = d; superadditivity of t^d does the rest
        ReleaseFamily::Power { k, beta: br } => Some(br == d && d >= 1.0 && gamma <= k),
        ReleaseFamily::PowerSmoothed { .. } => None,
    }
}

pub fn check_wasserstein_contraction(
    r: &ReleaseRate,
    beta: &ConvexModulus,
    gamma: f64,
    grid: &[f64],
) -> Result<ContractionReport> {
    beta.validate()?;
    if !(gamma > 0.0) {
        return Err(LyapunovError::InvalidModulus("Gamma > 0".into()));
    }
    let mut worst = f64::NEG_INFINITY;
    let mut pair = (0.0, 0.0);
    let mut pass = true;
    for (i, &u) in grid.iter().enumerate() {
        for &v in &grid[i + 1..] {
            if v <= u {
                continue;
            }
            let (ru, rv) = (r.rate(u), r.rate(v));
            let m = ru - rv + gamma * beta.eval(v - u);
            if m > worst {
                worst = m;
                pair = (u, v);
            }
            if m > 1e-9 * (1.0 + ru.abs().max(rv.abs())) {
                pass = false;
            }
        }
    }
    Ok(ContractionReport {
        pass,
        worst_margin: worst,
        worst_pair: pair,
        exact: exact_contraction(r, beta, gamma),
    })
}

/// `t -> B_kappa^{-1}(Gamma t)` with `B_kappa(s) = int_s^kappa dw / beta(w)`.
#[derive(Debug, Clone)]
pub struct WassersteinRate {
    pub beta: ConvexModulus,
    pub gamma: f64,
    pub kappa: f64,
}

impl WassersteinRate {
    /// `B_kappa(s)` for `s` in `(0, kappa]`.
    pub fn b_kappa(&self, s: f64) -> f64 {
        match self.beta {
            ConvexModulus::Power { d: 1.0 } => (self.kappa / s).ln(),
            ConvexModulus::Power { d } => (s.powf(1.0 - d) - self.kappa.powf(1.0 - d)) / (d - 1.0),
            ConvexModulus::Custom { ref f, .. } => integrate(|w| 1.0 / f(w), s, self.kappa, &QuadratureSpec::default())
                .map(|e| e.value)
                .unwrap_or(f64::INFINITY),
        }
    }

    /// `B_kappa^{-1}(s)`.
    pub fn b_kappa_inv(&self, s: f64) -> f64 {
        if s <= 0.0 {
            return self.kappa;
        }
        match self.beta {
            ConvexModulus::Power { d: 1.0 } => self.kappa * (-s).exp(),
            ConvexModulus::Power { d } => (self.kappa.powf(1.0 - d) + (d - 1.0) * s).powf(-1.0 / (d - 1.0)),
            ConvexModulus::Custom { .. } => {
                // B is decreasing on (0, kappa]; solve in ln w against -B
                let g = |z: f64| -self.b_kappa(z.exp());
                let hi = self.kappa.ln();
                let mut lo = hi - 1.0;
                while g(lo) > -s {
                    lo -= 2.0 * (hi - lo);
                    if lo < -700.0 {
                        return 0.0;
                    }
                }
                invert_monotone(g, -s, lo, hi).map(f64::exp).unwrap_or(f64::NAN)
            }
        }
    }

    pub fn eval(&self, t: f64) -> f64 {
        self.b_kappa_inv(self.gamma * t)
    }
}

pub fn wasserstein_rate(beta: ConvexModulus, gamma: f64, kappa: f64) -> Result<WassersteinRate> {
    if !(kappa > 0.0) {
        return Err(LyapunovError::InvalidModulus("kappa > 0".into()));
    }
    beta.validate()?;
    Ok(WassersteinRate { beta, gamma, kappa })
}

// ---------------------------------------------------------------------------
// irreducibility

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IrreducibilityWitness {
    pub pass: bool,
    pub alpha: Option<f64>,
    pub theta: f64,
}

/// Searches for `nu(du) >= theta u^{-1-alpha} du` on `(0, 1)`.
pub fn check_irreducibility_sufficient(input: &LevyInput) -> IrreducibilityWitness {
    let none = IrreducibilityWitness {
        pass: false,
        alpha: None,
        theta: 0.0,
    };
    if input.activity() == Activity::Finite {
        return none;
    }
    let grid = logspace(1e-12, 1.0 - 1e-9, 121);
    let mut best = none;
    for i in 1..=9 {
        let alpha = i as f64 / 10.0;
        let g = |u: f64| input.density(u) * u.powf(1.0 + alpha);
        // theta must not degenerate as u -> 0
        if !(g(1e-12) >= 0.5 * g(1e-6)) {
            continue;
        }
        let theta = grid.iter().map(|&u| g(u)).fold(f64::INFINITY, f64::min);
        if theta > 0.0 && theta >= best.theta * (1.0 - 1e-6) {
            best = IrreducibilityWitness {
                pass: true,
                alpha: Some(alpha),
                theta,
            };
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::levy_input::{LevyFamily, TabulatedTail, TailExtension};

    fn cpp_exp() -> LevyInput {
        LevyInput::compound_poisson_exp(1.0, 1.0).unwrap()
    }

    fn spec() -> QuadratureSpec {
        QuadratureSpec::default()
    }

    #[test]
    fn generator_examples() {
        let l = generator_apply(
            &cpp_exp(),
            &ReleaseRate::constant(2.0),
            &TestFunction::power(1.0),
            3.0,
            &spec(),
        )
        .unwrap();
        assert!((l + 1.0).abs() < 1e-9);
        let l = generator_apply(
            &cpp_exp(),
            &ReleaseRate::constant(2.0),
            &TestFunction::constant(4.0),
            3.0,
            &spec(),
        )
        .unwrap();
        assert_eq!(l, 0.0);
        let sq = TestFunction::power(2.0);
        let r = ReleaseRate::affine(0.0, 1.0);
        let f = generator_fubini(&cpp_exp(), &r, &sq, 1.0, &spec()).unwrap();
        let d = generator_direct(&cpp_exp(), &r, &sq, 1.0, &spec()).unwrap();
        assert!((f - 2.0).abs() < 1e-9, "{f}");
        assert!((d - 2.0).abs() < 1e-7, "{d}");
    }

    #[test]
    fn generator_forms_agree_for_infinite_activity() {
        let g = LevyInput::gamma(1.0, 1.0).unwrap();
        let st = LevyInput::stable(0.5, 0.5).unwrap();
        let r = ReleaseRate::power(1.0, 2.0);
        for f in [TestFunction::shifted_power(0.3), TestFunction::power(1.5)] {
            for &u in &[0.5, 2.0, 10.0] {
                let a = generator_fubini(&g, &r, &f, u, &spec()).unwrap();
                let b = generator_direct(&g, &r, &f, u, &spec()).unwrap();
                assert!((a - b).abs() < 1e-6 * (1.0 + a.abs()), "{} {u}: {a} vs {b}", f.name);
            }
        }
        let f = TestFunction::shifted_power(0.3);
        let a = generator_fubini(&st, &r, &f, 1.0, &spec()).unwrap();
        let b = generator_direct(&st, &r, &f, 1.0, &spec()).unwrap();
        assert!((a - b).abs() < 1e-6 * (1.0 + a.abs()), "{a} vs {b}");
    }

    #[test]
    fn generator_growth_check() {
        let p = LevyInput::compound_poisson_pareto(1.0, 1.0).unwrap();
        let e = generator_apply(&p, &ReleaseRate::constant(2.0), &TestFunction::power(1.0), 1.0, &spec());
        assert!(matches!(e, Err(LyapunovError::Divergent(_))));
    }

    #[test]
    fn rate_function_closed_forms() {
        let lin = RateFunction::linear(0.5);
        assert!((lin.big_phi(std::f64::consts::E) - 2.0).abs() < 1e-12);
        let p = RateFunction::power(0.5);
        assert!((p.big_phi(9.0) - 4.0).abs() < 1e-12);
        assert!((p.big_phi_inv(4.0) - 9.0).abs() < 1e-9);
        let custom = RateFunction::custom("sqrt", |t: f64| t.sqrt());
        assert!((custom.big_phi(9.0) - 4.0).abs() < 1e-8);
        assert!((custom.big_phi_inv(4.0) - 9.0).abs() < 1e-6);
        assert_eq!(RateFunction::constant().big_phi(1.0), 0.0);
        assert!(RateFunction::power(1.2).validate().is_err());
        assert!(RateFunction::custom("convex", |t: f64| t * t).validate().is_err());
        assert!(RateFunction::custom("decreasing", |t: f64| 1.0 / t).validate().is_err());
        assert!(RateFunction::custom("log", |t: f64| t + (1.0 + t).ln()).validate().is_ok());
    }

    #[test]
    fn certificate_constant_release_geometric() {
        let cert = build_certificate(
            &cpp_exp(),
            &ReleaseRate::constant(2.0),
            &RateFunction::linear(0.5),
            &LyapunovConfig::default(),
        )
        .unwrap();
        assert!((cert.drift_margin - 1.0 / 3.0).abs() < 1e-6, "{}", cert.drift_margin);
        assert!(cert.valid);
        assert_eq!(cert.tv_rate, TvRate::Geometric { c: 0.5 });
        assert!((cert.predicted_tv_rate(2.0) - 0.5 * 1f64.exp()).abs() < 1e-12);
    }

    #[test]
    fn certificate_constant_release_polynomial() {
        let cert = build_certificate(
            &cpp_exp(),
            &ReleaseRate::constant(2.0),
            &RateFunction::power(0.5),
            &LyapunovConfig::default(),
        )
        .unwrap();
        assert!(cert.valid);
        assert!((cert.drift_margin - 0.5).abs() < 1e-3, "{}", cert.drift_margin);
        assert_eq!(cert.tv_rate, TvRate::Polynomial { exponent: 1.0 });
        // m_nu > a makes the same rate function fail
        let heavy = LevyInput::compound_poisson_exp(3.0, 1.0).unwrap();
        let cert = build_certificate(
            &heavy,
            &ReleaseRate::constant(2.0),
            &RateFunction::power(0.5),
            &LyapunovConfig::default(),
        )
        .unwrap();
        assert!(!cert.valid);
    }

    #[test]
    fn certificate_linear_release_vanishing_ratio() {
        let p = LevyInput::compound_poisson_pareto(1.0, 2.0).unwrap();
        let cert = build_certificate(
            &p,
            &ReleaseRate::affine(0.0, 1.0),
            &RateFunction::power(0.5),
            &LyapunovConfig::default(),
        )
        .unwrap();
        assert!(cert.valid);
        assert!(cert.ratios.windows(2).all(|w| w[1] < w[0]));
        assert!(cert.ratios[4] < 1e-3, "{:?}", cert.ratios);
    }

    #[test]
    fn certificate_with_unit_phi_matches_criterion() {
        let cfg = LyapunovConfig::default();
        for (input, r) in [
            (cpp_exp(), ReleaseRate::constant(2.0)),
            (
                LevyInput::compound_poisson_pareto(1.0, 1.0).unwrap(),
                ReleaseRate::power_smoothed(1.0, 0.5),
            ),
        ] {
            let cert = build_certificate(&input, &r, &RateFunction::constant(), &cfg).unwrap();
            let ev = criterion_positive_recurrent(&input, &r, &cfg.classifier());
            for (a, b) in cert.ratios.iter().zip(&ev.values) {
                assert!((a - b).abs() <= 1e-9 * b.abs().max(1.0), "{a} vs {b}");
            }
        }
    }

    #[test]
    fn c3_violation_detected() {
        let p = LevyInput::compound_poisson_pareto(1.0, 1.0).unwrap();
        let r = ReleaseRate::power_smoothed(1.0, 0.5);
        let e = build_certificate(&p, &r, &RateFunction::power(0.5), &LyapunovConfig::default());
        assert!(matches!(e, Err(LyapunovError::C3Violation { .. })), "{e:?}");
        let ok = build_certificate(&p, &r, &RateFunction::power(0.45), &LyapunovConfig::default()).unwrap();
        assert!(ok.valid, "{:?}", ok.ratios);
    }

    #[test]
    fn v_bar_identity_and_patch() {
        let cfg = LyapunovConfig::default();
        let cases = [
            (cpp_exp(), ReleaseRate::constant(2.0), RateFunction::linear(0.5)),
            (cpp_exp(), ReleaseRate::constant(2.0), RateFunction::power(0.5)),
            (
                LevyInput::compound_poisson_pareto(1.0, 2.0).unwrap(),
                ReleaseRate::affine(0.0, 1.0),
                RateFunction::power(0.5),
            ),
            (
                LevyInput::compound_poisson_pareto(1.0, 1.0).unwrap(),
                ReleaseRate::power_smoothed(1.0, 0.5),
                RateFunction::power(0.45),
            ),
        ];
        for (input, r, phi) in cases {
            let cert = build_certificate(&input, &r, &phi, &cfg).unwrap();
            assert!(cert.v_bar_at_one > 1.0);
            assert_eq!(phi.big_phi(1.0), 0.0);
            for u in logspace(1.0, 1e6, 25) {
                let res = cert.ode_residual(u);
                assert!(res.abs() < 1e-6, "{phi} {r} u={u}: {res}");
            }
            // C1 patch at u = 1
            let below = (cert.v(1.0) - cert.v(1.0 - 1e-7)) / 1e-7;
            assert!((below / cert.v_bar_slope(1.0) - 1.0).abs() < 1e-5);
            assert!((cert.v(1.0) - cert.v_bar_at_one).abs() < 1e-9 * cert.v_bar_at_one);
        }
    }

    #[test]
    fn from_rate_envelope_is_reciprocal_of_max() {
        let cfg = LyapunovConfig::default();
        let env = tail_upper(
            &cpp_exp(),
            &ReleaseRate::constant(2.0),
            &UpperMode::FromRate {
                phi: PhiFamily::Power { a: 0.5 },
            },
            &cfg,
        )
        .unwrap();
        let cert = build_certificate(&cpp_exp(), &ReleaseRate::constant(2.0), &RateFunction::power(0.5), &cfg).unwrap();
        for u in logspace(1.0, 1e5, 11) {
            let m = cert.predicted_tv_rate(u).max(cert.phi.phi(cert.v(u)));
            assert!((env.value(u) * m - 1.0).abs() < 1e-9);
        }
        let s = env.summary(&logspace(1.0, 1e4, 9));
        assert!(s.samples.windows(2).all(|w| w[1].1 <= w[0].1));
    }

    #[test]
    fn uniform_examples() {
        let p = LevyInput::compound_poisson_pareto(1.0, 1.0).unwrap();
        assert!(check_uniform(&p, &ReleaseRate::power(1.0, 2.0)).uniform);
        let u = check_uniform(&cpp_exp(), &ReleaseRate::affine(0.0, 1.0));
        assert!(!u.finite_time_integral && !u.uniform);
        assert!(!check_uniform(&cpp_exp(), &ReleaseRate::constant(2.0)).uniform);
    }

    #[test]
    fn upper_envelopes() {
        let cfg = LyapunovConfig::default();
        let p = LevyInput::compound_poisson_pareto(1.0, 1.0).unwrap();
        let r = ReleaseRate::power(1.0, 2.0);
        let env = tail_upper(&p, &r, &UpperMode::SubGeometric { epsilon: 0.1 }, &cfg).unwrap();
        assert!((env.asymptotic_exponent() + 1.9).abs() < 1e-9);
        let grid = logspace(env.u_report, 1e6, 30);
        assert!(grid.windows(2).all(|w| env.value(w[1]) <= env.value(w[0])));

        let env = tail_upper(&cpp_exp(), &r, &UpperMode::Exponential { c: 1.0, epsilon: 0.1 }, &cfg).unwrap();
        assert!((env.ln_value(10.0) - (-9.0 - 100f64.ln())).abs() < 1e-12);
        assert!(tail_upper(&cpp_exp(), &r, &UpperMode::Exponential { c: 2.0, epsilon: 0.1 }, &cfg).is_err());

        let weib = LevyInput::new(LevyFamily::CompoundPoisson {
            rate: 1.0,
            jump: crate::levy_input::JumpLaw::Weibull { shape: 2.0, scale: 1.0 },
        })
        .unwrap();
        let e = tail_upper(&weib, &r, &UpperMode::SubGeometric { epsilon: 0.1 }, &cfg);
        assert!(matches!(e, Err(LyapunovError::HypothesisFailed(_))), "{e:?}");
        assert!(tail_upper(&weib, &r, &UpperMode::Exponential { c: 1.0, epsilon: 0.1 }, &cfg).is_ok());
    }

    #[test]
    fn lower_envelopes() {
        let cfg = LyapunovConfig::default();
        let p = LevyInput::compound_poisson_pareto(1.0, 1.0).unwrap();
        let env = tail_lower(
            &p,
            &ReleaseRate::power_smoothed(1.0, 0.5),
            0.1,
            LowerScale::PolyQuotient,
            &cfg,
        )
        .unwrap();
        assert!((env.asymptotic_exponent() + 0.6).abs() < 1e-9);
        assert!(env.up_to_constant);
        let e = tail_lower(&p, &ReleaseRate::affine(0.0, 1.0), 0.1, LowerScale::PolyQuotient, &cfg);
        assert!(matches!(e, Err(LyapunovError::HypothesisFailed(ref m)) if m.contains("r(u)/u")));
        let env = tail_lower(&p, &ReleaseRate::affine(0.0, 1.0), 0.1, LowerScale::LogScale, &cfg).unwrap();
        assert!((env.asymptotic_exponent() + 1.1).abs() < 1e-9);
        let flat = LevyInput::new(LevyFamily::Tabulated(TabulatedTail {
            knots: vec![(0.0, 1.0), (1.0, 0.5), (2.0, 0.5), (4.0, 0.25)],
            extension: Some(TailExtension::Power { alpha: 1.0 }),
        }))
        .unwrap();
        let e = tail_lower(
            &flat,
            &ReleaseRate::power_smoothed(1.0, 0.5),
            0.1,
            LowerScale::PolyQuotient,
            &cfg,
        );
        assert!(
            matches!(e, Err(LyapunovError::HypothesisFailed(ref m)) if m.contains("increasing")),
            "{e:?}"
        );
    }

    #[test]
    fn tv_lower_rate_gates_and_exponent() {
        let cfg = LyapunovConfig::default();
        let p = LevyInput::compound_poisson_pareto(1.0, 1.5).unwrap();
        let r = ReleaseRate::constant(2.0);
        let env = tail_lower(&p, &r, 0.1, LowerScale::PolyQuotient, &cfg).unwrap();
        let b = tv_lower_rate(&p, &r, default_h_exponent(&p), 0.0, &env, &cfg).unwrap();
        assert!(b.c > 0.0);
        let fit = b.fitted_exponent(&logspace(1e4, 1e10, 25)).unwrap();
        // -q / (a_h - q) with q = 0.6, a_h = 1.4
        assert!((fit.exponent + 0.75).abs() < 0.02, "{}", fit.exponent);
        // h with the full alpha moment is not integrable against nu
        assert!(tv_lower_rate(&p, &r, 1.5, 0.0, &env, &cfg).is_err());
        // F = w L(h^{-1}(w)) is not increasing when a_h < q
        let e = tv_lower_rate(&p, &r, 0.5, 0.0, &env, &cfg);
        assert!(
            matches!(e, Err(LyapunovError::HypothesisFailed(ref m)) if m.contains("F increasing")),
            "{e:?}"
        );
    }

    #[test]
    fn contraction_examples() {
        let g = contraction_grid();
        let rep = check_wasserstein_contraction(&ReleaseRate::affine(0.0, 2.0), &ConvexModulus::power(1.0), 2.0, &g).unwrap();
        assert!(rep.pass && rep.exact == Some(true));
        assert!(rep.worst_margin.abs() < 1e-9);
        let rep = check_wasserstein_contraction(&ReleaseRate::power(1.0, 2.0), &ConvexModulus::power(2.0), 1.0, &g).unwrap();
        assert!(rep.pass && rep.exact == Some(true));
        let rep = check_wasserstein_contraction(&ReleaseRate::power(1.0, 2.0), &ConvexModulus::power(2.0), 1.5, &g).unwrap();
        assert!(!rep.pass && rep.exact == Some(false));
        let rep = check_wasserstein_contraction(&ReleaseRate::constant(1.0), &ConvexModulus::power(1.0), 0.1, &g).unwrap();
        assert!(!rep.pass && rep.exact == Some(false));
        assert!(check_wasserstein_contraction(&ReleaseRate::power(1.0, 0.5), &ConvexModulus::power(0.5), 1.0, &g).is_err());
    }

    #[test]
    fn wasserstein_rate_closed_forms() {
        let w = wasserstein_rate(ConvexModulus::power(1.0), 1.5, 2.0).unwrap();
        for i in 0..=40 {
            let t = i as f64 * 0.5;
            assert!((w.eval(t) - 2.0 * (-1.5 * t).exp()).abs() < 1e-12);
        }
        let w = wasserstein_rate(ConvexModulus::power(2.0), 1.0, 1.0).unwrap();
        assert!((w.eval(3.0) - 0.25).abs() < 1e-12);
        assert!((1e4 * w.eval(1e4) - 1.0).abs() < 1e-3);
        assert_eq!(w.eval(0.0), 1.0);
        let c = wasserstein_rate(ConvexModulus::custom("t^2", |t: f64| t * t), 1.0, 1.0).unwrap();
        for &t in &[0.5, 2.0, 10.0] {
            assert!((c.eval(t) - w.eval(t)).abs() < 1e-7, "{t}");
        }
        assert!(wasserstein_rate(ConvexModulus::power(1.0), 1.0, 0.0).is_err());
    }

    #[test]
    fn irreducibility_examples() {
        let st = LevyInput::stable(0.5, 0.5).unwrap();
        let w = check_irreducibility_sufficient(&st);
        assert!(w.pass);
        assert_eq!(w.alpha, Some(0.5));
        assert!((w.theta - 0.25).abs() < 1e-9);
        assert!(!check_irreducibility_sufficient(&LevyInput::gamma(1.0, 1.0).unwrap()).pass);
        assert!(!check_irreducibility_sufficient(&cpp_exp()).pass);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(64))]

            #[test]
            fn big_phi_inverse_roundtrip(a in 0.05f64..0.95, c in 0.05f64..3.0, s in 0.0f64..50.0) {
                for rf in [RateFunction::power(a), RateFunction::linear(c), RateFunction::constant()] {
                    let t = rf.big_phi_inv(s);
                    if t.is_finite() {
                        prop_assert!((rf.big_phi(t) - s).abs() < 1e-8 * (1.0 + s));
                    }
                }
            }

            #[test]
            fn wasserstein_rate_is_decreasing(d in 1.0f64..4.0, gamma in 0.1f64..3.0, kappa in 0.1f64..10.0, t in 0.0f64..100.0) {
                let w = wasserstein_rate(ConvexModulus::power(d), gamma, kappa).unwrap();
                prop_assert!(w.eval(t + 0.1) <= w.eval(t));
                prop_assert!(w.eval(t) <= kappa);
            }
        }
    }
}
