//! Release-rate families `r(u)`, their flows under `dx/dt = d - r(x)`,
//! regularity checks and the modulus `R(u) = sup_v (r(v) - r(v + u))`.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::levy_input::Activity;
use crate::numerics::{integrate, integrate_autonomous, integrate_semiinfinite, logspace, NumericsError, QuadratureSpec};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ReleaseError {
    #[error("invalid release parameter: {0}")]
    InvalidParameter(String),
    #[error("release rate is not finite at u = {u}")]
    NonFinite { u: f64 },
    #[error("time integral of 1/r over [{lo}, {hi}] diverges")]
    Divergent { lo: f64, hi: f64 },
    #[error(transparent)]
    Numerics(#[from] NumericsError),
}

pub type Result<T> = std::result::Result<T, ReleaseError>;

pub const DEFAULT_KNEE: f64 = 0.01;

fn default_knee() -> f64 {
    DEFAULT_KNEE
}

/// Parametric release families. Every family vanishes at `u = 0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ReleaseFamily {
    /// `a` on `(0, inf)`.
    Constant { a: f64 },
    /// `a + b u` on `(0, inf)`.
    Affine { a: f64, b: f64 },
    /// `k u^beta` on `(0, inf)`.
    Power { k: f64, beta: f64 },
    /// `k u^beta` above `knee`, linear through the origin below it.
    PowerSmoothed {
        k: f64,
        beta: f64,
        #[serde(default = "default_knee")]
        knee: f64,
    },
    /// `m` above `u0`; `m (2s - s^2)` with `s = u/u0` below (C1 at `u0`).
    Plateau { m: f64, u0: f64 },
}

/// Declared large-`u` behaviour of a release rate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "class", rename_all = "kebab-case", deny_unknown_fields)]
pub enum AsymptoticClass {
    Bounded { limsup: f64 },
    Linear { slope: f64 },
    Power { coef: f64, beta: f64 },
}

#[derive(Clone)]
pub struct CustomRate {
    pub name: String,
    pub f: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
    pub class: AsymptoticClass,
}

impl fmt::Debug for CustomRate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CustomRate")
            .field("name", &self.name)
            .field("class", &self.class)
            .finish()
    }
}

#[derive(Debug, Clone)]
enum Kind {
    Preset(ReleaseFamily),
    Custom(CustomRate),
}

#[derive(Debug, Clone)]
pub struct ReleaseRate {
    kind: Kind,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConditionSet {
    /// positivity plus local Lipschitz continuity
    C1C2,
    /// left continuity, positivity and integrable `1/r` at zero
    CBar1CBar2,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegularityReport {
    pub c1: bool,
    pub c2_local_lipschitz: bool,
    /// `(rho, Gamma_rho)` estimates on `[0, rho]`; infinite when the estimate blows up
    pub lipschitz_constants: Vec<(f64, f64)>,
    pub cbar1: bool,
    pub cbar2: bool,
    pub applicable: bool,
    pub route: Option<ConditionSet>,
}

impl From<ReleaseFamily> for ReleaseRate {
    fn from(f: ReleaseFamily) -> Self {
        ReleaseRate::new(f).expect("valid release family")
    }
}

fn positive(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(ReleaseError::InvalidParameter(format!("{name} must be positive, got {v}")))
    }
}

impl ReleaseRate {
    pub fn new(family: ReleaseFamily) -> Result<Self> {
        match &family {
            ReleaseFamily::Constant { a } => positive("a", *a)?,
            ReleaseFamily::Affine { a, b } => {
                if !(*a >= 0.0 && a.is_finite()) {
                    return Err(ReleaseError::InvalidParameter(format!("a must be >= 0, got {a}")));
                }
                positive("b", *b)?
            }
            ReleaseFamily::Power { k, beta } => {
                positive("k", *k)?;
                if *beta == 0.0 || !beta.is_finite() {
                    return Err(ReleaseError::InvalidParameter("beta must be finite and non-zero".into()));
                }
            }
            ReleaseFamily::PowerSmoothed { k, beta, knee } => {
                positive("k", *k)?;
                positive("beta", *beta)?;
                positive("knee", *knee)?;
            }
            ReleaseFamily::Plateau { m, u0 } => {
                positive("m", *m)?;
                positive("u0", *u0)?;
            }
        }
        Ok(Self {
            kind: Kind::Preset(family),
        })
    }

    pub fn custom<F>(name: impl Into<String>, f: F, class: AsymptoticClass) -> Self
    where
        F: Fn(f64) -> f64 + Send + Sync + 'static,
    {
        Self {
            kind: Kind::Custom(CustomRate {
                name: name.into(),
                f: Arc::new(f),
                class,
            }),
        }
    }

    pub fn constant(a: f64) -> Self {
        ReleaseFamily::Constant { a }.into()
    }
    pub fn affine(a: f64, b: f64) -> Self {
        ReleaseFamily::Affine { a, b }.into()
    }
    pub fn power(k: f64, beta: f64) -> Self {
        ReleaseFamily::Power { k, beta }.into()
    }
    pub fn power_smoothed(k: f64, beta: f64) -> Self {
        ReleaseFamily::PowerSmoothed {
            k,
            beta,
            knee: DEFAULT_KNEE,
        }
        .into()
    }
    pub fn plateau(m: f64, u0: f64) -> Self {
        ReleaseFamily::Plateau { m, u0 }.into()
    }

    pub fn family(&self) -> Option<&ReleaseFamily> {
        match &self.kind {
            Kind::Preset(f) => Some(f),
            Kind::Custom(_) => None,
        }
    }

    pub fn name(&self) -> String {
        match &self.kind {
            Kind::Preset(f) => match f {
                ReleaseFamily::Constant { a } => format!("constant(a={a})"),
                ReleaseFamily::Affine { a, b } => format!("affine(a={a}, b={b})"),
                ReleaseFamily::Power { k, beta } => format!("power(k={k}, beta={beta})"),
                ReleaseFamily::PowerSmoothed { k, beta, knee } => {
                    format!("power-smoothed(k={k}, beta={beta}, knee={knee})")
                }
                ReleaseFamily::Plateau { m, u0 } => format!("plateau(m={m}, u0={u0})"),
            },
            Kind::Custom(c) => format!("custom({})", c.name),
        }
    }

    /// `r(u)`; zero for `u <= 0`.
    pub fn rate(&self, u: f64) -> f64 {
        if u <= 0.0 {
            return 0.0;
        }
        match &self.kind {
            Kind::Preset(f) => match *f {
                ReleaseFamily::Constant { a } => a,
                ReleaseFamily::Affine { a, b } => a + b * u,
                ReleaseFamily::Power { k, beta } => k * u.powf(beta),
                ReleaseFamily::PowerSmoothed { k, beta, knee } => {
                    if u >= knee {
                        k * u.powf(beta)
                    } else {
                        k * knee.powf(beta - 1.0) * u
                    }
                }
                ReleaseFamily::Plateau { m, u0 } => {
                    if u >= u0 {
                        m
                    } else {
                        let s = u / u0;
                        m * s * (2.0 - s)
                    }
                }
            },
            Kind::Custom(c) => (c.f)(u),
        }
    }

    pub fn evaluate(&self, u: f64) -> Result<f64> {
        let r = self.rate(u);
        if r.is_finite() && r >= 0.0 {
            Ok(r)
        } else {
            Err(ReleaseError::NonFinite { u })
        }
    }

    pub fn asymptotic_class(&self) -> AsymptoticClass {
        match &self.kind {
            Kind::Preset(f) => match *f {
                ReleaseFamily::Constant { a } => AsymptoticClass::Bounded { limsup: a },
                ReleaseFamily::Affine { b, .. } => AsymptoticClass::Linear { slope: b },
                ReleaseFamily::Power { k, beta } | ReleaseFamily::PowerSmoothed { k, beta, .. } => {
                    if beta < 0.0 {
                        AsymptoticClass::Bounded { limsup: 0.0 }
                    } else if beta == 1.0 {
                        AsymptoticClass::Linear { slope: k }
                    } else {
                        AsymptoticClass::Power { coef: k, beta }
                    }
                }
                ReleaseFamily::Plateau { m, .. } => AsymptoticClass::Bounded { limsup: m },
            },
            Kind::Custom(c) => c.class,
        }
    }

    /// `limsup_{u -> inf} r(u)`.
    pub fn limsup(&self) -> f64 {
        match self.asymptotic_class() {
            AsymptoticClass::Bounded { limsup } => limsup,
            _ => f64::INFINITY,
        }
    }

    /// Growth exponent of `r` at infinity (0 for bounded rates).
    pub fn growth_exponent(&self) -> f64 {
        match self.asymptotic_class() {
            AsymptoticClass::Bounded { .. } => 0.0,
            AsymptoticClass::Linear { .. } => 1.0,
            AsymptoticClass::Power { beta, .. } => beta,
        }
    }

    pub fn has_closed_flow(&self) -> bool {
        matches!(self.kind, Kind::Preset(_))
    }

    /// `r(0+)`.
    pub fn rate_at_zero_plus(&self) -> f64 {
        match &self.kind {
            Kind::Preset(f) => match *f {
                ReleaseFamily::Constant { a } | ReleaseFamily::Affine { a, .. } => a,
                ReleaseFamily::Power { beta, .. } if beta < 0.0 => f64::INFINITY,
                _ => 0.0,
            },
            Kind::Custom(_) => self.rate(1e-300),
        }
    }

    /// Level after `dt` under `dx/dt = inflow - r(x)`, kept at zero once the
    /// path reaches it while `inflow <= r(0+)`.
    pub fn flow(&self, x0: f64, dt: f64, inflow: f64) -> f64 {
        if dt <= 0.0 {
            return x0;
        }
        if let Kind::Preset(f) = &self.kind {
            if let Some(x) = closed_flow(f, x0, dt, inflow) {
                return x;
            }
        }
        integrate_autonomous(|x| inflow - self.rate(x), x0, dt, 1e-10)
    }

    /// `int_lo^hi dv / r(v)`; `hi` may be infinite, `lo` may be zero.
    pub fn flow_time_integral(&self, lo: f64, hi: f64) -> Result<f64> {
        if !(lo >= 0.0) || !(hi >= lo) {
            return Err(ReleaseError::InvalidParameter(format!(
                "need 0 <= lo <= hi, got [{lo}, {hi}]"
            )));
        }
        if lo == hi {
            return Ok(0.0);
        }
        let div = ReleaseError::Divergent { lo, hi };
        match &self.kind {
            Kind::Preset(f) => closed_time_integral(f, lo, hi).ok_or(div),
            Kind::Custom(_) => {
                let spec = QuadratureSpec::default();
                let recip = |v: f64| {
                    let r = self.rate(v);
                    if r > 0.0 {
                        1.0 / r
                    } else {
                        f64::INFINITY
                    }
                };
                let res = if hi.is_infinite() {
                    integrate_semiinfinite(|v| recip(lo + v), &spec)
                } else {
                    integrate(recip, lo, hi, &spec)
                };
                match res {
                    Ok(e) => Ok(e.value),
                    Err(NumericsError::Divergent { .. }) | Err(NumericsError::NonFiniteEvaluation { .. }) => Err(div),
                    Err(e) => Err(e.into()),
                }
            }
        }
    }

    pub fn check_regularity(&self, activity: Activity) -> RegularityReport {
        let probe = logspace(1e-8, 1e6, 141);
        let at_zero = self.rate(0.0);
        let c1 = at_zero == 0.0
            && probe.iter().all(|&u| {
                let r = self.rate(u);
                r > 0.0 && r.is_finite()
            });

        let mut lipschitz_constants = Vec::new();
        let mut c2 = c1;
        for &rho in &[1.0, 10.0, 100.0] {
            // both grids must resolve features such as a smoothing knee
            let coarse = self.grid_lipschitz(rho, 1 << 14);
            let fine = self.grid_lipschitz(rho, 1 << 18);
            let ok = fine.is_finite() && fine <= 2.0 * coarse + 1e-12;
            lipschitz_constants.push((rho, if ok { fine } else { f64::INFINITY }));
            c2 &= ok;
        }
        // difference quotient at the origin must stay bounded
        let q1 = self.rate(1e-6) / 1e-6;
        let q2 = self.rate(1e-10) / 1e-10;
        let q3 = self.rate(1e-14) / 1e-14;
        let zero_ok = q3.is_finite() && q3 <= 2.0 * q1 + 1e-9 && q2 <= 2.0 * q1 + 1e-9;
        if !zero_ok {
            c2 = false;
            for lc in &mut lipschitz_constants {
                lc.1 = f64::INFINITY;
            }
        }

        // left continuity holds for every preset; custom rates declare it by construction
        let cbar1 = probe.iter().all(|&u| {
            let r = self.rate(u);
            r > 0.0 && r.is_finite()
        });
        let cbar2 = cbar1 && self.flow_time_integral(0.0, 1.0).is_ok_and(|v| v.is_finite());

        let smooth = c1 && c2;
        let bar = cbar1 && cbar2;
        let (applicable, route) = match activity {
            Activity::Infinite => (smooth, smooth.then_some(ConditionSet::C1C2)),
            Activity::Finite => {
                if smooth {
                    (true, Some(ConditionSet::C1C2))
                } else if bar {
                    (true, Some(ConditionSet::CBar1CBar2))
                } else {
                    (false, None)
                }
            }
        };
        RegularityReport {
            c1,
            c2_local_lipschitz: c2,
            lipschitz_constants,
            cbar1,
            cbar2,
            applicable,
            route,
        }
    }

    fn grid_lipschitz(&self, rho: f64, n: usize) -> f64 {
        let h = rho / n as f64;
        let mut best: f64 = 0.0;
        let mut prev = self.rate(0.0);
        for i in 1..=n {
            let cur = self.rate(i as f64 * h);
            best = best.max((cur - prev).abs() / h);
            prev = cur;
        }
        best
    }

    /// `R(u) = sup_{v >= 0} (r(v) - r(v + u))`, reported without flooring.
    ///
    /// Exact for presets; a grid maximum (a lower bound) for custom rates.
    pub fn modulus_r(&self, u: f64, probe_grid: &[f64]) -> f64 {
        let grid_max = || {
            std::iter::once(0.0)
                .chain(probe_grid.iter().copied())
                .map(|v| self.rate(v) - self.rate(v + u))
                .fold(f64::NEG_INFINITY, f64::max)
        };
        match &self.kind {
            Kind::Preset(f) => match *f {
                // r(0) = 0 makes v = 0 the worst candidate; every v > 0 gives 0
                ReleaseFamily::Constant { .. } => 0.0,
                ReleaseFamily::Affine { b, .. } => -b * u,
                ReleaseFamily::Power { k, beta } => {
                    if beta < 0.0 {
                        f64::INFINITY
                    } else if beta < 1.0 {
                        0.0
                    } else if beta == 1.0 {
                        -k * u
                    } else {
                        -k * u.powf(beta)
                    }
                }
                ReleaseFamily::PowerSmoothed { k, beta, .. } => {
                    if beta < 1.0 {
                        0.0
                    } else if beta == 1.0 {
                        -k * u
                    } else {
                        grid_max()
                    }
                }
                ReleaseFamily::Plateau { .. } => 0.0,
            },
            Kind::Custom(_) => grid_max(),
        }
    }
}

impl fmt::Display for ReleaseRate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name())
    }
}

fn power_flow(k: f64, beta: f64, x0: f64, dt: f64) -> f64 {
    if x0 <= 0.0 {
        return 0.0;
    }
    if beta == 1.0 {
        return x0 * (-k * dt).exp();
    }
    let g = 1.0 - beta;
    let w = x0.powf(g) - k * g * dt;
    if beta < 1.0 && w <= 0.0 {
        0.0
    } else {
        w.powf(1.0 / g)
    }
}

/// Time for `dx/dt = -k x^beta` to move from `hi` down to `lo`.
fn power_time(k: f64, beta: f64, lo: f64, hi: f64) -> Option<f64> {
    if beta == 1.0 {
        if lo == 0.0 || hi.is_infinite() {
            return None;
        }
        return Some((hi / lo).ln() / k);
    }
    let g = 1.0 - beta;
    if beta < 1.0 {
        if hi.is_infinite() {
            return None;
        }
        Some((hi.powf(g) - lo.powf(g)) / (k * g))
    } else {
        if lo == 0.0 {
            return None;
        }
        let top = if hi.is_infinite() { 0.0 } else { hi.powf(g) };
        Some((lo.powf(g) - top) / (k * -g))
    }
}

fn closed_flow(f: &ReleaseFamily, x0: f64, dt: f64, inflow: f64) -> Option<f64> {
    match *f {
        ReleaseFamily::Constant { a } => Some((x0 + (inflow - a) * dt).max(0.0)),
        ReleaseFamily::Affine { a, b } => {
            let eq = (inflow - a) / b;
            if x0 <= 0.0 && eq <= 0.0 {
                return Some(0.0);
            }
            if eq >= 0.0 {
                return Some(eq + (x0 - eq) * (-b * dt).exp());
            }
            // drains to zero at t0 and then stays there
            let t0 = ((x0 - eq) / -eq).ln() / b;
            if dt >= t0 {
                Some(0.0)
            } else {
                Some((eq + (x0 - eq) * (-b * dt).exp()).max(0.0))
            }
        }
        _ if inflow != 0.0 => None,
        ReleaseFamily::Power { k, beta } => {
            if beta < 0.0 {
                None
            } else {
                Some(power_flow(k, beta, x0, dt))
            }
        }
        ReleaseFamily::PowerSmoothed { k, beta, knee } => {
            if x0 <= knee {
                return Some(power_flow(k * knee.powf(beta - 1.0), 1.0, x0, dt));
            }
            let t_knee = power_time(k, beta, knee, x0).expect("finite between positive levels");
            if dt <= t_knee {
                Some(power_flow(k, beta, x0, dt).max(knee))
            } else {
                Some(power_flow(k * knee.powf(beta - 1.0), 1.0, knee, dt - t_knee))
            }
        }
        ReleaseFamily::Plateau { m, u0 } => {
            let (start, rest) = if x0 > u0 {
                let t1 = (x0 - u0) / m;
                if dt <= t1 {
                    return Some(x0 - m * dt);
                }
                (u0, dt - t1)
            } else {
                (x0, dt)
            };
            if start <= 0.0 {
                return Some(0.0);
            }
            // s / (2 - s) decays like exp(-2 m t / u0)
            let s0 = start / u0;
            let q = s0 / (2.0 - s0) * (-2.0 * m * rest / u0).exp();
            Some(u0 * 2.0 * q / (1.0 + q))
        }
    }
}

fn closed_time_integral(f: &ReleaseFamily, lo: f64, hi: f64) -> Option<f64> {
    match *f {
        ReleaseFamily::Constant { a } => hi.is_finite().then(|| (hi - lo) / a),
        ReleaseFamily::Affine { a, b } => {
            if hi.is_infinite() || (lo == 0.0 && a == 0.0) {
                None
            } else {
                Some(((a + b * hi) / (a + b * lo)).ln() / b)
            }
        }
        ReleaseFamily::Power { k, beta } => {
            if beta < 0.0 {
                // 1/r = u^{-beta}/k grows, so only finite upper limits converge
                return hi
                    .is_finite()
                    .then(|| (hi.powf(1.0 - beta) - lo.powf(1.0 - beta)) / (k * (1.0 - beta)));
            }
            power_time(k, beta, lo, hi)
        }
        ReleaseFamily::PowerSmoothed { k, beta, knee } => {
            let slope = k * knee.powf(beta - 1.0);
            let mut total = 0.0;
            if lo < knee {
                total += power_time(slope, 1.0, lo, hi.min(knee))?;
            }
            if hi > knee {
                total += power_time(k, beta, lo.max(knee), hi)?;
            }
            Some(total)
        }
        ReleaseFamily::Plateau { m, u0 } => {
            let mut total = 0.0;
            if lo < u0 {
                if lo == 0.0 {
                    return None;
                }
                let g = |u: f64| {
                    let s = u / u0;
                    (s / (2.0 - s)).ln()
                };
                total += u0 / (2.0 * m) * (g(hi.min(u0)) - g(lo));
            }
            if hi > u0 {
                if hi.is_infinite() {
                    return None;
                }
                total += (hi - lo.max(u0)) / m;
            }
            Some(total)
        }
    }
}
