//! Subordinator inputs: Lévy measure tail, first moment, Laplace exponent
//! and jump sampling with mean-compensated small-jump truncation.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::numerics::special::{exp_int_e1, gamma, ln_exp_int_e1, ln_upper_gamma};
use crate::numerics::{integrate, integrate_semiinfinite, NumericsError, QuadratureSpec};
use crate::rng::{stream, Purpose, StreamRng};

pub const DEFAULT_TRUNCATION_EPS: f64 = 1e-4;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LevyError {
    #[error("invalid input parameter: {0}")]
    InvalidParameter(String),
    #[error("level {u} lies beyond the last knot {last} and no tail extension is configured")]
    OutOfGrid { u: f64, last: f64 },
    #[error("tabulated tail needs a parametric extension beyond its last knot")]
    MissingExtension,
    #[error(transparent)]
    Numerics(#[from] NumericsError),
}

pub type Result<T> = std::result::Result<T, LevyError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activity {
    Finite,
    Infinite,
}

/// Jump-size law of a compound Poisson input.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "law", rename_all = "kebab-case", deny_unknown_fields)]
pub enum JumpLaw {
    Exponential {
        rate: f64,
    },
    /// `P(J > u) = min(1, (u/scale)^{-alpha})`
    Pareto {
        alpha: f64,
        scale: f64,
    },
    /// `P(J > u) = exp(-(u/scale)^shape)`
    Weibull {
        shape: f64,
        scale: f64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum TailExtension {
    /// `nu_bar(u) = nu_bar(last) (u/last)^{-alpha}`
    Power { alpha: f64 },
    /// `nu_bar(u) = nu_bar(last) exp(-rate (u - last))`
    Exponential { rate: f64 },
}

/// Piecewise-linear tail through `(u, nu_bar(u))` knots.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TabulatedTail {
    pub knots: Vec<(f64, f64)>,
    #[serde(default)]
    pub extension: Option<TailExtension>,
}

impl TabulatedTail {
    pub fn validate(&self) -> Result<()> {
        let k = &self.knots;
        if k.len() < 2 {
            return Err(LevyError::InvalidParameter("need at least two knots".into()));
        }
        if k[0].0 != 0.0 {
            return Err(LevyError::InvalidParameter("first knot must sit at u = 0".into()));
        }
        for w in k.windows(2) {
            if !(w[1].0 > w[0].0) {
                return Err(LevyError::InvalidParameter("knot levels must increase".into()));
            }
            if w[1].1 > w[0].1 {
                return Err(LevyError::InvalidParameter("tail values must not increase".into()));
            }
        }
        if k.iter().any(|&(u, v)| !u.is_finite() || !(v >= 0.0) || !v.is_finite()) {
            return Err(LevyError::InvalidParameter("knots must be finite and non-negative".into()));
        }
        match self.extension {
            Some(TailExtension::Power { alpha }) if !(alpha > 0.0) => {
                Err(LevyError::InvalidParameter("extension alpha must be positive".into()))
            }
            Some(TailExtension::Exponential { rate }) if !(rate > 0.0) => {
                Err(LevyError::InvalidParameter("extension rate must be positive".into()))
            }
            _ => Ok(()),
        }
    }

    fn last(&self) -> (f64, f64) {
        *self.knots.last().expect("validated")
    }

    pub fn eval(&self, u: f64) -> Result<f64> {
        let (ul, vl) = self.last();
        if u <= ul {
            return Ok(self.interpolate(u));
        }
        match self.extension {
            Some(TailExtension::Power { alpha }) => Ok(vl * (u / ul).powf(-alpha)),
            Some(TailExtension::Exponential { rate }) => Ok(vl * (-rate * (u - ul)).exp()),
            None => Err(LevyError::OutOfGrid { u, last: ul }),
        }
    }

    fn interpolate(&self, u: f64) -> f64 {
        let k = &self.knots;
        if u <= 0.0 {
            return k[0].1;
        }
        let i = k.partition_point(|&(x, _)| x <= u).min(k.len() - 1).max(1);
        let (x0, y0) = k[i - 1];
        let (x1, y1) = k[i];
        if u >= x1 {
            return y1;
        }
        y0 + (y1 - y0) * (u - x0) / (x1 - x0)
    }

    fn ln_eval(&self, u: f64) -> f64 {
        let (ul, vl) = self.last();
        match self.extension {
            Some(TailExtension::Power { alpha }) if u > ul => vl.ln() - alpha * (u / ul).ln(),
            Some(TailExtension::Exponential { rate }) if u > ul => vl.ln() - rate * (u - ul),
            _ => self.eval(u).map_or(f64::NEG_INFINITY, f64::ln),
        }
    }

    fn density(&self, u: f64) -> f64 {
        let (ul, vl) = self.last();
        if u > ul {
            return match self.extension {
                Some(TailExtension::Power { alpha }) => alpha / u * vl * (u / ul).powf(-alpha),
                Some(TailExtension::Exponential { rate }) => rate * vl * (-rate * (u - ul)).exp(),
                None => 0.0,
            };
        }
        let k = &self.knots;
        let i = k.partition_point(|&(x, _)| x <= u).clamp(1, k.len() - 1);
        let (x0, y0) = k[i - 1];
        let (x1, y1) = k[i];
        (y0 - y1) / (x1 - x0)
    }

    fn first_moment(&self) -> f64 {
        let (ul, vl) = self.last();
        let body: f64 = self
            .knots
            .windows(2)
            .map(|w| 0.5 * (w[0].1 + w[1].1) * (w[1].0 - w[0].0))
            .sum();
        let ext = match self.extension {
            Some(TailExtension::Power { alpha }) if alpha > 1.0 => vl * ul / (alpha - 1.0),
            Some(TailExtension::Power { .. }) if vl > 0.0 => f64::INFINITY,
            Some(TailExtension::Exponential { rate }) => vl / rate,
            _ => 0.0,
        };
        body + ext
    }

    /// Smallest `u` with `nu_bar(u) <= y` for `0 < y <= nu_bar(0)`.
    fn inverse(&self, y: f64) -> f64 {
        let (ul, vl) = self.last();
        if y < vl {
            return match self.extension {
                Some(TailExtension::Power { alpha }) => ul * (vl / y).powf(1.0 / alpha),
                Some(TailExtension::Exponential { rate }) => ul + (vl / y).ln() / rate,
                None => ul,
            };
        }
        let k = &self.knots;
        let i = k.partition_point(|&(_, v)| v > y).clamp(1, k.len() - 1);
        let (x0, y0) = k[i - 1];
        let (x1, y1) = k[i];
        if y0 == y1 {
            return x0;
        }
        x0 + (y0 - y) / (y0 - y1) * (x1 - x0)
    }
}

/// Lévy measure families, all parametrised through their tails.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "kebab-case", deny_unknown_fields)]
pub enum LevyFamily {
    /// `nu = 0`; used for pure-drain tests.
    NoInput,
    CompoundPoisson {
        rate: f64,
        jump: JumpLaw,
    },
    /// density `shape e^{-rate u} / u`
    Gamma {
        shape: f64,
        rate: f64,
    },
    /// `nu_bar(u) = scale u^{-alpha}`, `alpha in (0, 1)`
    Stable {
        alpha: f64,
        scale: f64,
    },
    /// density `scale alpha u^{-alpha-1} e^{-tempering u}`
    TemperedStable {
        alpha: f64,
        scale: f64,
        tempering: f64,
    },
    Tabulated(TabulatedTail),
}

/// Decay class of `nu_bar` at infinity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "class", rename_all = "kebab-case")]
pub enum TailClass {
    Zero,
    /// `nu_bar(u) ~ u^{-alpha}`
    Power {
        alpha: f64,
    },
    /// heavier than any exponential, lighter than any power
    Stretched,
    /// `nu_bar(u) ~ e^{-rate u}` up to polynomial factors
    Exponential {
        rate: f64,
    },
    /// lighter than any exponential
    Light,
}

impl TailClass {
    /// Power index, infinite for anything lighter than a power law.
    pub fn power_index(&self) -> f64 {
        match *self {
            TailClass::Power { alpha } => alpha,
            _ => f64::INFINITY,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LevyInput {
    family: LevyFamily,
    m_nu: f64,
    activity: Activity,
}

fn check_positive(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(LevyError::InvalidParameter(format!("{name} must be positive, got {v}")))
    }
}

fn check_index(v: f64) -> Result<()> {
    if v > 0.0 && v < 1.0 {
        Ok(())
    } else {
        Err(LevyError::InvalidParameter(format!("alpha must lie in (0, 1), got {v}")))
    }
}

impl LevyInput {
    pub fn new(family: LevyFamily) -> Result<Self> {
        use LevyFamily::*;
        let (m_nu, activity) = match &family {
            NoInput => (0.0, Activity::Finite),
            CompoundPoisson { rate, jump } => {
                check_positive("rate", *rate)?;
                let mean = match *jump {
                    JumpLaw::Exponential { rate: mu } => {
                        check_positive("jump rate", mu)?;
                        1.0 / mu
                    }
                    JumpLaw::Pareto { alpha, scale } => {
                        check_positive("jump alpha", alpha)?;
                        check_positive("jump scale", scale)?;
                        if alpha > 1.0 {
                            scale * alpha / (alpha - 1.0)
                        } else {
                            f64::INFINITY
                        }
                    }
                    JumpLaw::Weibull { shape, scale } => {
                        check_positive("jump shape", shape)?;
                        check_positive("jump scale", scale)?;
                        scale * gamma(1.0 + 1.0 / shape)
                    }
                };
                (rate * mean, Activity::Finite)
            }
            Gamma { shape, rate } => {
                check_positive("shape", *shape)?;
                check_positive("rate", *rate)?;
                (shape / rate, Activity::Infinite)
            }
            Stable { alpha, scale } => {
                check_index(*alpha)?;
                check_positive("scale", *scale)?;
                (f64::INFINITY, Activity::Infinite)
            }
            TemperedStable { alpha, scale, tempering } => {
                check_index(*alpha)?;
                check_positive("scale", *scale)?;
                check_positive("tempering", *tempering)?;
                (
                    scale * alpha * gamma(1.0 - alpha) * tempering.powf(alpha - 1.0),
                    Activity::Infinite,
                )
            }
            Tabulated(t) => {
                t.validate()?;
                if t.extension.is_none() {
                    return Err(LevyError::MissingExtension);
                }
                (t.first_moment(), Activity::Finite)
            }
        };
        Ok(Self { family, m_nu, activity })
    }

    pub fn no_input() -> Self {
        Self::new(LevyFamily::NoInput).expect("valid")
    }

    pub fn compound_poisson_exp(rate: f64, mu: f64) -> Result<Self> {
        Self::new(LevyFamily::CompoundPoisson {
            rate,
            jump: JumpLaw::Exponential { rate: mu },
        })
    }

    /// Compound Poisson with `nu_bar(u) = rate min(1, u^{-alpha})`.
    pub fn compound_poisson_pareto(rate: f64, alpha: f64) -> Result<Self> {
        Self::new(LevyFamily::CompoundPoisson {
            rate,
            jump: JumpLaw::Pareto { alpha, scale: 1.0 },
        })
    }

    pub fn gamma(shape: f64, rate: f64) -> Result<Self> {
        Self::new(LevyFamily::Gamma { shape, rate })
    }

    pub fn stable(alpha: f64, scale: f64) -> Result<Self> {
        Self::new(LevyFamily::Stable { alpha, scale })
    }

    pub fn family(&self) -> &LevyFamily {
        &self.family
    }

    pub fn activity(&self) -> Activity {
        self.activity
    }

    pub fn first_moment(&self) -> f64 {
        self.m_nu
    }

    /// `nu((u, inf))`; the total mass (possibly infinite) for `u <= 0`.
    pub fn tail(&self, u: f64) -> f64 {
        use LevyFamily::*;
        if u <= 0.0 {
            return match self.activity {
                Activity::Infinite => f64::INFINITY,
                Activity::Finite => self.total_mass(),
            };
        }
        match &self.family {
            NoInput => 0.0,
            CompoundPoisson { rate, jump } => rate * jump_survival(jump, u),
            Gamma { shape, rate } => shape * exp_int_e1(rate * u),
            Stable { alpha, scale } => scale * u.powf(-alpha),
            TemperedStable { .. } => self.ln_tail(u).exp(),
            Tabulated(t) => t.eval(u).expect("extension validated"),
        }
    }

    /// `ln nu_bar(u)`, finite far beyond where `nu_bar` underflows.
    pub fn ln_tail(&self, u: f64) -> f64 {
        use LevyFamily::*;
        if u <= 0.0 {
            return self.tail(u).ln();
        }
        match &self.family {
            NoInput => f64::NEG_INFINITY,
            CompoundPoisson { rate, jump } => {
                rate.ln()
                    + match *jump {
                        JumpLaw::Exponential { rate: mu } => -mu * u,
                        JumpLaw::Pareto { alpha, scale } => {
                            if u <= scale {
                                0.0
                            } else {
                                -alpha * (u / scale).ln()
                            }
                        }
                        JumpLaw::Weibull { shape, scale } => -(u / scale).powf(shape),
                    }
            }
            Gamma { shape, rate } => shape.ln() + ln_exp_int_e1(rate * u),
            Stable { alpha, scale } => scale.ln() - alpha * u.ln(),
            TemperedStable { alpha, scale, tempering } => {
                (scale * alpha).ln() + alpha * tempering.ln() + ln_upper_gamma(-alpha, tempering * u)
            }
            Tabulated(t) => t.ln_eval(u),
        }
    }

    /// Lévy density `-d nu_bar / du` at `u > 0`.
    pub fn density(&self, u: f64) -> f64 {
        use LevyFamily::*;
        if u <= 0.0 {
            return 0.0;
        }
        match &self.family {
            NoInput => 0.0,
            CompoundPoisson { rate, jump } => {
                rate * match *jump {
                    JumpLaw::Exponential { rate: mu } => mu * (-mu * u).exp(),
                    JumpLaw::Pareto { alpha, scale } => {
                        if u < scale {
                            0.0
                        } else {
                            alpha / scale * (u / scale).powf(-alpha - 1.0)
                        }
                    }
                    JumpLaw::Weibull { shape, scale } => {
                        let z = u / scale;
                        shape / scale * z.powf(shape - 1.0) * (-z.powf(shape)).exp()
                    }
                }
            }
            Gamma { shape, rate } => shape * (-rate * u).exp() / u,
            Stable { alpha, scale } => scale * alpha * u.powf(-alpha - 1.0),
            TemperedStable { alpha, scale, tempering } => scale * alpha * u.powf(-alpha - 1.0) * (-tempering * u).exp(),
            Tabulated(t) => t.density(u),
        }
    }

    fn total_mass(&self) -> f64 {
        use LevyFamily::*;
        match &self.family {
            NoInput => 0.0,
            CompoundPoisson { rate, .. } => *rate,
            Tabulated(t) => t.knots[0].1,
            _ => f64::INFINITY,
        }
    }

    pub fn tail_class(&self) -> TailClass {
        use LevyFamily::*;
        match &self.family {
            NoInput => TailClass::Zero,
            CompoundPoisson { jump, .. } => match *jump {
                JumpLaw::Exponential { rate } => TailClass::Exponential { rate },
                JumpLaw::Pareto { alpha, .. } => TailClass::Power { alpha },
                JumpLaw::Weibull { shape, scale } => {
                    if shape > 1.0 {
                        TailClass::Light
                    } else if shape == 1.0 {
                        TailClass::Exponential { rate: 1.0 / scale }
                    } else {
                        TailClass::Stretched
                    }
                }
            },
            Gamma { rate, .. } => TailClass::Exponential { rate: *rate },
            Stable { alpha, .. } => TailClass::Power { alpha: *alpha },
            TemperedStable { tempering, .. } => TailClass::Exponential { rate: *tempering },
            Tabulated(t) => match t.extension {
                Some(TailExtension::Power { alpha }) => TailClass::Power { alpha },
                Some(TailExtension::Exponential { rate }) => TailClass::Exponential { rate },
                None => TailClass::Zero,
            },
        }
    }

    /// `psi(lambda) = int (e^{-lambda u} - 1) nu(du)`.
    pub fn laplace_exponent(&self, lambda: f64) -> f64 {
        use LevyFamily::*;
        if lambda == 0.0 {
            return 0.0;
        }
        match &self.family {
            NoInput => 0.0,
            CompoundPoisson {
                rate,
                jump: JumpLaw::Exponential { rate: mu },
            } => -rate * lambda / (mu + lambda),
            Gamma { shape, rate } => -shape * (lambda / rate).ln_1p(),
            Stable { alpha, scale } => -scale * gamma(1.0 - alpha) * lambda.powf(*alpha),
            TemperedStable { alpha, scale, tempering } => {
                -scale * gamma(1.0 - alpha) * ((tempering + lambda).powf(*alpha) - tempering.powf(*alpha))
            }
            _ => self.laplace_exponent_quadrature(lambda),
        }
    }

    /// `-lambda int_0^inf e^{-lambda u} nu_bar(u) du`, valid for every family.
    pub fn laplace_exponent_quadrature(&self, lambda: f64) -> f64 {
        if lambda == 0.0 {
            return 0.0;
        }
        let spec = QuadratureSpec {
            rel_tol: 1e-11,
            abs_tol: 1e-14,
            tail_split: 50.0 / lambda,
            ..Default::default()
        };
        let f = |u: f64| (self.ln_tail(u) - lambda * u).exp();
        let mut total = 0.0;
        // kinks of tabulated and Pareto tails are integrated piecewise
        let mut cuts: Vec<f64> = match &self.family {
            LevyFamily::Tabulated(t) => t.knots.iter().map(|k| k.0).collect(),
            LevyFamily::CompoundPoisson {
                jump: JumpLaw::Pareto { scale, .. },
                ..
            } => vec![0.0, *scale],
            _ => vec![0.0],
        };
        cuts.retain(|&c| c.is_finite());
        for w in cuts.windows(2) {
            total += integrate(f, w[0], w[1], &spec).expect("bounded integrand").value;
        }
        let last = *cuts.last().expect("non-empty");
        total += integrate_semiinfinite(|v| f(last + v), &spec)
            .expect("exponentially damped integrand")
            .value;
        -lambda * total
    }

    /// `int_0^eps u nu(du)`.
    pub fn truncated_first_moment(&self, eps: f64) -> f64 {
        use LevyFamily::*;
        match &self.family {
            NoInput => 0.0,
            Gamma { shape, rate } => shape * (-(-rate * eps).exp_m1()) / rate,
            Stable { alpha, scale } => scale * alpha * eps.powf(1.0 - alpha) / (1.0 - alpha),
            TemperedStable { alpha, scale, tempering } => {
                let a = 1.0 - alpha;
                scale * alpha * tempering.powf(-a) * gamma(a) * statrs::function::gamma::gamma_lr(a, tempering * eps)
            }
            _ => {
                let spec = QuadratureSpec::default();
                integrate(|u| u * self.density(u), 0.0, eps, &spec)
                    .map(|e| e.value)
                    .unwrap_or(0.0)
            }
        }
    }

    /// `int_0^eps u^2 nu(du)`, the variance rate of discarded small jumps.
    pub fn truncated_second_moment(&self, eps: f64) -> f64 {
        use LevyFamily::*;
        match &self.family {
            NoInput => 0.0,
            Gamma { shape, rate } => {
                let x = rate * eps;
                shape * (1.0 - (-x).exp() * (1.0 + x)) / (rate * rate)
            }
            Stable { alpha, scale } => scale * alpha * eps.powf(2.0 - alpha) / (2.0 - alpha),
            TemperedStable { alpha, scale, tempering } => {
                let a = 2.0 - alpha;
                scale * alpha * tempering.powf(-a) * gamma(a) * statrs::function::gamma::gamma_lr(a, tempering * eps)
            }
            _ => {
                let spec = QuadratureSpec::default();
                integrate(|u| u * u * self.density(u), 0.0, eps, &spec)
                    .map(|e| e.value)
                    .unwrap_or(0.0)
            }
        }
    }

    /// `int_{[1, inf)} u^p nu(du)`; `Err` when infinite.
    pub fn moment_above_one(&self, p: f64) -> Result<f64> {
        let spec = QuadratureSpec::default();
        let tail_part = integrate_semiinfinite(
            |v: f64| {
                let u = 1.0 + v;
                (self.ln_tail(u) + (p - 1.0) * u.ln()).exp()
            },
            &spec,
        )?;
        Ok(self.tail(1.0) + p * tail_part.value)
    }

    /// Rate of retained jumps (all jumps for finite activity).
    pub fn big_jump_rate(&self, eps: f64) -> f64 {
        match self.activity {
            Activity::Finite => self.total_mass(),
            Activity::Infinite => self.tail(eps),
        }
    }

    /// One jump from `nu` restricted to `(eps, inf)` (to all of `(0, inf)` for finite activity).
    pub fn sample_big_jump<R: Rng + ?Sized>(&self, eps: f64, rng: &mut R) -> f64 {
        use LevyFamily::*;
        let open01 = |rng: &mut R| 1.0 - rng.random::<f64>();
        match &self.family {
            NoInput => 0.0,
            CompoundPoisson { jump, .. } => match *jump {
                JumpLaw::Exponential { rate } => -open01(rng).ln() / rate,
                JumpLaw::Pareto { alpha, scale } => scale * open01(rng).powf(-1.0 / alpha),
                JumpLaw::Weibull { shape, scale } => scale * (-open01(rng).ln()).powf(1.0 / shape),
            },
            Stable { alpha, .. } => eps * open01(rng).powf(-1.0 / alpha),
            TemperedStable { alpha, tempering, .. } => loop {
                let u = eps * open01(rng).powf(-1.0 / alpha);
                if rng.random::<f64>() < (-tempering * (u - eps)).exp() {
                    break u;
                }
            },
            Gamma { rate, .. } => {
                let split = (1.0 / rate).max(eps);
                let near = exp_int_e1(rate * eps) - exp_int_e1(rate * split);
                let far = exp_int_e1(rate * split);
                if rng.random::<f64>() * (near + far) < near {
                    // log-uniform proposal on (eps, split), accept with e^{-rate (u - eps)}
                    loop {
                        let u = eps * (split / eps).powf(rng.random::<f64>());
                        if rng.random::<f64>() < (-rate * (u - eps)).exp() {
                            break u;
                        }
                    }
                } else {
                    // shifted exponential proposal on (split, inf), accept with split / u
                    loop {
                        let u = split - open01(rng).ln() / rate;
                        if rng.random::<f64>() < split / u {
                            break u;
                        }
                    }
                }
            }
            Tabulated(t) => t.inverse(open01(rng) * t.knots[0].1),
        }
    }
}

fn jump_survival(jump: &JumpLaw, u: f64) -> f64 {
    match *jump {
        JumpLaw::Exponential { rate } => (-rate * u).exp(),
        JumpLaw::Pareto { alpha, scale } => {
            if u <= scale {
                1.0
            } else {
                (u / scale).powf(-alpha)
            }
        }
        JumpLaw::Weibull { shape, scale } => (-(u / scale).powf(shape)).exp(),
    }
}

/// Retained jumps of one path, in time order, plus the small-jump drift.
pub struct JumpStream<'a> {
    input: &'a LevyInput,
    rng: StreamRng,
    seed: u64,
    truncation_eps: f64,
    compensator_drift: f64,
    rate: f64,
}

impl<'a> JumpStream<'a> {
    pub fn new(input: &'a LevyInput, seed: u64, path_index: u64, truncation_eps: f64) -> Self {
        let compensator_drift = match input.activity {
            Activity::Finite => 0.0,
            Activity::Infinite => input.truncated_first_moment(truncation_eps),
        };
        Self {
            input,
            rng: stream(seed, path_index, Purpose::Jumps),
            seed,
            truncation_eps,
            compensator_drift,
            rate: input.big_jump_rate(truncation_eps),
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn truncation_eps(&self) -> f64 {
        self.truncation_eps
    }

    /// Deterministic inflow standing in for jumps below `truncation_eps`.
    pub fn compensator_drift(&self) -> f64 {
        self.compensator_drift
    }

    /// Waiting time to the next retained jump and its size; `None` if there are none.
    pub fn next_jump(&mut self) -> Option<(f64, f64)> {
        if !(self.rate > 0.0) {
            return None;
        }
        let gap = -(1.0 - self.rng.random::<f64>()).ln() / self.rate;
        let size = self.input.sample_big_jump(self.truncation_eps, &mut self.rng);
        Some((gap, size))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Increment {
    /// `A(t)` including the compensating drift
    pub total: f64,
    pub drift_part: f64,
    pub jumps: Vec<(f64, f64)>,
}

/// Sample `A(t)` and its retained jumps. Gaps are drawn sequentially, which
/// has the same law as a Poisson count with uniform jump times.
pub fn sample_increment(stream: &mut JumpStream<'_>, t: f64) -> Increment {
    let mut jumps = Vec::new();
    let mut now = 0.0;
    if t > 0.0 {
        while let Some((gap, size)) = stream.next_jump() {
            now += gap;
            if now > t {
                break;
            }
            jumps.push((now, size));
        }
    }
    let drift_part = stream.compensator_drift() * t.max(0.0);
    Increment {
        total: jumps.iter().map(|j| j.1).sum::<f64>() + drift_part,
        drift_part,
        jumps,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LaplaceCheck {
    pub lambda: f64,
    pub empirical: f64,
    pub analytic: f64,
    pub z: f64,
}

/// Compare the empirical mean of `exp(-lambda A(t))` with `exp(t psi(lambda))`.
pub fn laplace_check(
    input: &LevyInput,
    t: f64,
    lambdas: &[f64],
    n_paths: usize,
    seed: u64,
    truncation_eps: f64,
) -> Vec<LaplaceCheck> {
    let samples: Vec<f64> = (0..n_paths as u64)
        .into_par_iter()
        .map(|i| {
            let mut s = JumpStream::new(input, seed, i, truncation_eps);
            sample_increment(&mut s, t).total
        })
        .collect();
    let n = n_paths as f64;
    lambdas
        .iter()
        .map(|&lambda| {
            let analytic = (t * input.laplace_exponent(lambda)).exp();
            let (mut s1, mut s2) = (0.0, 0.0);
            for &a in &samples {
                let v = (-lambda * a).exp();
                s1 += v;
                s2 += v * v;
            }
            let empirical = s1 / n;
            let var = (s2 / n - empirical * empirical).max(0.0) * n / (n - 1.0).max(1.0);
            let se = (var / n).sqrt();
            let z = if se > 0.0 { (empirical - analytic) / se } else { 0.0 };
            LaplaceCheck {
                lambda,
                empirical,
                analytic,
                z,
            }
        })
        .collect()
}
