//! Transient / null-recurrent / positive-recurrent classification.
//!
//! Parametric (power-tail input, power-type release) pairs are decided
//! symbolically; everything else goes through the limit criteria evaluated on
//! a probe grid.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::levy_input::{LevyInput, TailClass};
use crate::numerics::{integrate_semiinfinite, NumericsError, QuadratureSpec};
use crate::release_rate::{AsymptoticClass, ReleaseFamily, ReleaseRate};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClassifierConfig {
    pub probe_grid: Vec<f64>,
    pub decision_margin: f64,
    pub quadrature: QuadratureSpec,
    /// allow the symbolic fast path for parametric families
    pub symbolic: bool,
}

impl Default for ClassifierConfig {
    fn default() -> Self {
        Self {
            probe_grid: vec![1e2, 1e3, 1e4, 1e5, 1e6],
            decision_margin: 0.05,
            quadrature: QuadratureSpec::default(),
            symbolic: true,
        }
    }
}

impl ClassifierConfig {
    pub fn numeric_only() -> Self {
        Self {
            symbolic: false,
            ..Self::default()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TransienceRoute {
    BoundedDrift,
    HeavyTailCriterion,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "regime", rename_all = "snake_case")]
pub enum Verdict {
    Transient { via: TransienceRoute },
    NullRecurrent,
    PositiveRecurrent,
    Inconclusive,
}

impl Verdict {
    pub fn label(&self) -> &'static str {
        match self {
            Verdict::Transient { .. } => "Transient",
            Verdict::NullRecurrent => "Null recurrent",
            Verdict::PositiveRecurrent => "Pos. recurrent",
            Verdict::Inconclusive => "Inconclusive",
        }
    }

    pub fn is_transient(&self) -> bool {
        matches!(self, Verdict::Transient { .. })
    }
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Symbolic,
    Numeric,
}

/// Criterion values on the probe grid. Divergent integrals appear as `+inf`
/// (serialized as `null`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CriterionEvidence {
    pub name: String,
    pub probes: Vec<f64>,
    pub values: Vec<f64>,
    /// liminf (min of last 3) or limsup (max of last 3) estimate
    pub estimate: f64,
    pub threshold: f64,
    /// distance of the estimate from the threshold, positive on the satisfied side
    pub margin: f64,
    pub satisfied: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundedDrift {
    pub limsup_r: f64,
    pub m_nu: f64,
    pub satisfied: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegimeReport {
    pub verdict: Verdict,
    pub label: String,
    pub method: Method,
    /// positive recurrent with `int_1^inf du / r(u) < inf`
    pub uniform: bool,
    pub bounded_drift: BoundedDrift,
    pub evidence: Vec<CriterionEvidence>,
}

pub fn criterion_bounded_drift(input: &LevyInput, r: &ReleaseRate) -> BoundedDrift {
    let limsup_r = r.limsup();
    let m_nu = input.first_moment();
    BoundedDrift {
        limsup_r,
        m_nu,
        satisfied: limsup_r < m_nu,
    }
}

fn quad_or_inf(res: Result<crate::numerics::Estimate, NumericsError>) -> f64 {
    match res {
        Ok(e) => e.value,
        // non-negative integrands: divergence is to +inf
        Err(NumericsError::Divergent { .. }) => f64::INFINITY,
        Err(NumericsError::ToleranceNotMet { value, .. }) => value,
        Err(_) => f64::NAN,
    }
}

fn last3(values: &[f64]) -> &[f64] {
    &values[values.len().saturating_sub(3)..]
}

/// Values of `(u / r(u)) int_0^inf nu_bar(u v) / (1 + v^2) dv`.
pub fn heavy_tail_values(input: &LevyInput, r: &ReleaseRate, probes: &[f64], spec: &QuadratureSpec) -> Vec<f64> {
    probes
        .iter()
        .map(|&u| {
            let s = QuadratureSpec {
                tail_split: spec.tail_split.min(1e3),
                ..*spec
            };
            let i = quad_or_inf(integrate_semiinfinite(|v| input.tail(u * v) / (1.0 + v * v), &s));
            u / r.rate(u) * i
        })
        .collect()
}

/// Values of `int_0^inf nu_bar(v) / r(u + v) dv`.
pub fn positive_recurrent_values(input: &LevyInput, r: &ReleaseRate, probes: &[f64], spec: &QuadratureSpec) -> Vec<f64> {
    probes
        .iter()
        .map(|&u| quad_or_inf(integrate_semiinfinite(|v| input.tail(v) / r.rate(u + v), spec)))
        .collect()
}

pub fn criterion_heavy_tail(input: &LevyInput, r: &ReleaseRate, cfg: &ClassifierConfig) -> CriterionEvidence {
    let values = heavy_tail_values(input, r, &cfg.probe_grid, &cfg.quadrature);
    let estimate = last3(&values).iter().copied().fold(f64::INFINITY, f64::min);
    let threshold = 1.0;
    CriterionEvidence {
        name: "heavy_tail".into(),
        probes: cfg.probe_grid.clone(),
        margin: estimate - threshold,
        satisfied: estimate > threshold + cfg.decision_margin,
        values,
        estimate,
        threshold,
    }
}

pub fn criterion_positive_recurrent(input: &LevyInput, r: &ReleaseRate, cfg: &ClassifierConfig) -> CriterionEvidence {
    let values = positive_recurrent_values(input, r, &cfg.probe_grid, &cfg.quadrature);
    let estimate = last3(&values).iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let threshold = 1.0;
    CriterionEvidence {
        name: "positive_recurrent".into(),
        probes: cfg.probe_grid.clone(),
        margin: threshold - estimate,
        satisfied: estimate < threshold - cfg.decision_margin,
        values,
        estimate,
        threshold,
    }
}

fn is_null_plateau(input: &LevyInput, r: &ReleaseRate) -> bool {
    let m = input.first_moment();
    matches!(r.family(), Some(ReleaseFamily::Plateau { m: p, .. }) if m.is_finite() && (p - m).abs() <= 1e-12 * m.max(1.0))
}

/// Verdict from tail index `alpha` and growth exponent `beta` alone, when both are known.
pub fn symbolic_verdict(input: &LevyInput, r: &ReleaseRate) -> Option<Verdict> {
    r.family()?;
    if is_null_plateau(input, r) {
        return Some(Verdict::NullRecurrent);
    }
    let m = input.first_moment();
    let class = input.tail_class();
    match r.asymptotic_class() {
        AsymptoticClass::Bounded { limsup } => {
            if limsup < m {
                Some(Verdict::Transient {
                    via: TransienceRoute::BoundedDrift,
                })
            } else if limsup > m {
                // the criterion integral equals m / a once u is past the ramp
                match r.family() {
                    Some(ReleaseFamily::Constant { .. }) | Some(ReleaseFamily::Plateau { .. }) => {
                        Some(Verdict::PositiveRecurrent)
                    }
                    _ => None,
                }
            } else {
                Some(Verdict::Inconclusive)
            }
        }
        AsymptoticClass::Linear { .. } | AsymptoticClass::Power { .. } => {
            let beta = r.growth_exponent();
            let alpha = match class {
                TailClass::Zero => return Some(Verdict::PositiveRecurrent),
                TailClass::Power { alpha } => alpha,
                _ => f64::INFINITY,
            };
            let s = alpha + beta;
            if (s - 1.0).abs() <= 1e-12 {
                Some(Verdict::Inconclusive)
            } else if s < 1.0 {
                Some(Verdict::Transient {
                    via: TransienceRoute::HeavyTailCriterion,
                })
            } else {
                Some(Verdict::PositiveRecurrent)
            }
        }
    }
}

fn numeric_verdict(
    input: &LevyInput,
    r: &ReleaseRate,
    bd: &BoundedDrift,
    heavy: &CriterionEvidence,
    pos: &CriterionEvidence,
) -> Verdict {
    if is_null_plateau(input, r) {
        Verdict::NullRecurrent
    } else if bd.satisfied {
        Verdict::Transient {
            via: TransienceRoute::BoundedDrift,
        }
    } else if heavy.satisfied {
        Verdict::Transient {
            via: TransienceRoute::HeavyTailCriterion,
        }
    } else if pos.satisfied {
        Verdict::PositiveRecurrent
    } else {
        Verdict::Inconclusive
    }
}

pub fn classify(input: &LevyInput, r: &ReleaseRate, cfg: &ClassifierConfig) -> RegimeReport {
    let bounded_drift = criterion_bounded_drift(input, r);
    let heavy = criterion_heavy_tail(input, r, cfg);
    let pos = criterion_positive_recurrent(input, r, cfg);
    let symbolic = if cfg.symbolic { symbolic_verdict(input, r) } else { None };
    let (verdict, method) = match symbolic {
        Some(v) => (v, Method::Symbolic),
        None => (numeric_verdict(input, r, &bounded_drift, &heavy, &pos), Method::Numeric),
    };
    let uniform = verdict == Verdict::PositiveRecurrent && r.flow_time_integral(1.0, f64::INFINITY).is_ok();
    RegimeReport {
        label: verdict.label().to_string(),
        verdict,
        method,
        uniform,
        bounded_drift,
        evidence: vec![heavy, pos],
    }
}

/// Convergence-rate family of an ergodicity row.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum RateFamily {
    Exponential,
    Polynomial { exponent: f64 },
    Uniform,
    Unknown,
}

/// Stationary-tail family of an ergodicity row.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum TailFamily {
    Exponential { upper_only: bool },
    StretchedExponential { power: f64 },
    Polynomial { exponent: f64, upper_only: bool },
    Unknown,
}

fn fmt_exp(x: f64) -> String {
    let s = format!("{:.3}", x);
    let s = s.trim_end_matches('0').trim_end_matches('.');
    s.to_string()
}

impl RateFamily {
    pub fn label(&self) -> String {
        match self {
            RateFamily::Exponential => "Exponential".into(),
            RateFamily::Polynomial { exponent } => format!("≈ t^{}", fmt_exp(*exponent)),
            RateFamily::Uniform => "Uniform".into(),
            RateFamily::Unknown => "Unknown".into(),
        }
    }
}

impl TailFamily {
    pub fn label(&self) -> String {
        match self {
            TailFamily::Exponential { upper_only: false } => "Exponential".into(),
            TailFamily::Exponential { upper_only: true } => "≼ Exponential".into(),
            TailFamily::StretchedExponential { power } => format!("≼ exp(-u^{})", fmt_exp(*power)),
            TailFamily::Polynomial { exponent, upper_only } => {
                format!("{} u^{}", if *upper_only { "≼" } else { "≈" }, fmt_exp(*exponent))
            }
            TailFamily::Unknown => "Unknown".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErgodicityRow {
    pub regime: String,
    pub rate: RateFamily,
    pub tail: TailFamily,
    pub rate_label: String,
    pub tail_label: String,
}

/// Ergodicity row (rate and tail families) for a positive-recurrent scenario.
pub fn ergodicity_row(input: &LevyInput, r: &ReleaseRate, report: &RegimeReport) -> ErgodicityRow {
    let (rate, tail) = if report.verdict != Verdict::PositiveRecurrent {
        (RateFamily::Unknown, TailFamily::Unknown)
    } else {
        let class = input.tail_class();
        let light = matches!(class, TailClass::Exponential { .. } | TailClass::Light | TailClass::Zero);
        let alpha = class.power_index();
        match r.asymptotic_class() {
            AsymptoticClass::Bounded { .. } => {
                if light {
                    (RateFamily::Exponential, TailFamily::Exponential { upper_only: false })
                } else if alpha.is_finite() && alpha > 1.0 {
                    (
                        RateFamily::Polynomial { exponent: 1.0 - alpha },
                        TailFamily::Polynomial {
                            exponent: 1.0 - alpha,
                            upper_only: false,
                        },
                    )
                } else {
                    (RateFamily::Unknown, TailFamily::Unknown)
                }
            }
            AsymptoticClass::Linear { .. } => {
                if light {
                    (RateFamily::Exponential, TailFamily::Exponential { upper_only: false })
                } else if alpha.is_finite() {
                    (
                        RateFamily::Exponential,
                        TailFamily::Polynomial {
                            exponent: -alpha,
                            upper_only: false,
                        },
                    )
                } else {
                    (RateFamily::Exponential, TailFamily::Unknown)
                }
            }
            AsymptoticClass::Power { beta, .. } if beta < 1.0 => {
                if light {
                    (
                        RateFamily::Exponential,
                        TailFamily::StretchedExponential { power: 1.0 - beta },
                    )
                } else if alpha.is_finite() {
                    (
                        RateFamily::Polynomial {
                            exponent: (1.0 - alpha - beta) / (1.0 - beta),
                        },
                        TailFamily::Polynomial {
                            exponent: 1.0 - alpha - beta,
                            upper_only: false,
                        },
                    )
                } else {
                    (RateFamily::Unknown, TailFamily::Unknown)
                }
            }
            AsymptoticClass::Power { beta, .. } => {
                if light {
                    (RateFamily::Uniform, TailFamily::Exponential { upper_only: true })
                } else if alpha.is_finite() {
                    (
                        RateFamily::Uniform,
                        TailFamily::Polynomial {
                            exponent: 1.0 - alpha - beta,
                            upper_only: true,
                        },
                    )
                } else {
                    (RateFamily::Uniform, TailFamily::Unknown)
                }
            }
        }
    };
    ErgodicityRow {
        regime: report.label.clone(),
        rate_label: rate.label(),
        tail_label: tail.label(),
        rate,
        tail,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::levy_input::LevyInput;

    fn power_release(beta: f64) -> ReleaseRate {
        if beta < 1.0 {
            ReleaseRate::power_smoothed(1.0, beta)
        } else {
            ReleaseRate::power(1.0, beta)
        }
    }

    #[test]
    fn bounded_drift_examples() {
        let cp2 = LevyInput::compound_poisson_exp(2.0, 1.0).unwrap();
        let cp1 = LevyInput::compound_poisson_exp(1.0, 1.0).unwrap();
        assert!(criterion_bounded_drift(&cp2, &ReleaseRate::constant(1.0)).satisfied);
        assert!(!criterion_bounded_drift(&cp1, &ReleaseRate::constant(2.0)).satisfied);
        assert!(!criterion_bounded_drift(&cp1, &ReleaseRate::power(1.0, 0.5)).satisfied);
        let rep = classify(&cp2, &ReleaseRate::constant(1.0), &ClassifierConfig::numeric_only());
        assert_eq!(
            rep.verdict,
            Verdict::Transient {
                via: TransienceRoute::BoundedDrift
            }
        );
    }

    #[test]
    fn heavy_tail_examples() {
        let cfg = ClassifierConfig::default();
        let st = LevyInput::stable(0.3, 1.0).unwrap();
        let ev = criterion_heavy_tail(&st, &ReleaseRate::power(1.0, 0.3), &cfg);
        assert!(ev.satisfied);
        assert!(ev.values.windows(2).all(|w| w[1] > w[0]));
        // u^{0.4} growth
        let ratio = ev.values[4] / ev.values[3];
        assert!((ratio - 10f64.powf(0.4)).abs() < 1e-6, "{ratio}");

        let exp_in = LevyInput::compound_poisson_exp(1.0, 1.0).unwrap();
        let ev = criterion_heavy_tail(&exp_in, &ReleaseRate::affine(0.0, 1.0), &cfg);
        assert!(!ev.satisfied);
        // direct value at u = 1e3: int e^{-1000 v}/(1+v^2) dv ~ 1e-3
        assert!(ev.values[1] < 1.1e-3 && ev.values[1] > 0.9e-3, "{}", ev.values[1]);

        let half = LevyInput::stable(0.5, 1.0).unwrap();
        let ev = criterion_heavy_tail(&half, &ReleaseRate::constant(2.0), &cfg);
        let expected = 1e2f64.sqrt() * std::f64::consts::PI / 2f64.sqrt() / 2.0;
        assert!((ev.values[0] - expected).abs() < 1e-6 * expected);
        assert!(ev.satisfied);
    }

    #[test]
    fn positive_recurrent_examples() {
        let cfg = ClassifierConfig::default();
        let cp = LevyInput::compound_poisson_exp(1.0, 1.0).unwrap();
        let ev = criterion_positive_recurrent(&cp, &ReleaseRate::constant(2.0), &cfg);
        assert!(ev.values.iter().all(|v| (v - 0.5).abs() < 1e-9));
        assert!(ev.satisfied);
        let st = LevyInput::stable(0.7, 1.0).unwrap();
        let ev = criterion_positive_recurrent(&st, &ReleaseRate::power(1.0, 0.7), &cfg);
        assert!(ev.satisfied && ev.values.windows(2).all(|w| w[1] < w[0]));
        let st = LevyInput::stable(0.3, 1.0).unwrap();
        let ev = criterion_positive_recurrent(&st, &ReleaseRate::power(1.0, 0.3), &cfg);
        assert!(!ev.satisfied);
        assert!(ev.values.iter().all(|v| v.is_infinite()));
    }

    #[test]
    fn classify_examples() {
        let cfg = ClassifierConfig::default();
        let st = LevyInput::stable(0.3, 1.0).unwrap();
        let rep = classify(&st, &ReleaseRate::power(1.0, 0.3), &cfg);
        assert_eq!(rep.label, "Transient");
        assert_eq!(rep.method, Method::Symbolic);
        let cp = LevyInput::compound_poisson_exp(1.0, 1.0).unwrap();
        assert_eq!(
            classify(&cp, &ReleaseRate::plateau(1.0, 1.0), &cfg).verdict,
            Verdict::NullRecurrent
        );
        assert_eq!(
            classify(&cp, &ReleaseRate::plateau(1.0, 1.0), &ClassifierConfig::numeric_only()).verdict,
            Verdict::NullRecurrent
        );
        assert_eq!(
            classify(&cp, &ReleaseRate::constant(2.0), &cfg).verdict,
            Verdict::PositiveRecurrent
        );
        assert_eq!(
            classify(&cp, &ReleaseRate::constant(2.0), &ClassifierConfig::numeric_only()).verdict,
            Verdict::PositiveRecurrent
        );
    }

    #[test]
    fn symbolic_and_numeric_agree_off_the_boundary() {
        let grid = [0.3, 0.7, 1.5];
        for &alpha in &grid {
            for &beta in &grid {
                if ((alpha + beta) - 1.0f64).abs() < 1e-9 {
                    continue;
                }
                let input = LevyInput::compound_poisson_pareto(1.0, alpha).unwrap();
                let r = power_release(beta);
                let sym = classify(&input, &r, &ClassifierConfig::default());
                let num = classify(&input, &r, &ClassifierConfig::numeric_only());
                assert_eq!(sym.method, Method::Symbolic);
                assert_eq!(num.method, Method::Numeric);
                assert_eq!(sym.label, num.label, "alpha={alpha} beta={beta}");
                assert_eq!(sym.uniform, num.uniform);
            }
        }
    }

    #[test]
    fn boundary_is_inconclusive() {
        let input = LevyInput::compound_poisson_pareto(1.0, 0.3).unwrap();
        let rep = classify(&input, &power_release(0.7), &ClassifierConfig::default());
        assert_eq!(rep.verdict, Verdict::Inconclusive);
        // a bounded rate equal to m_nu without the plateau structure
        let cp = LevyInput::compound_poisson_exp(1.0, 1.0).unwrap();
        let r = ReleaseRate::custom(
            "tends-to-m",
            |u| 1.0 - 1.0 / (2.0 + u),
            AsymptoticClass::Bounded { limsup: 1.0 },
        );
        assert_eq!(classify(&cp, &r, &ClassifierConfig::default()).verdict, Verdict::Inconclusive);
    }

    #[test]
    fn monotone_in_alpha_and_beta() {
        let grid = [0.3, 0.5, 0.8, 1.2, 1.5];
        let cfg = ClassifierConfig::numeric_only();
        for (i, &alpha) in grid.iter().enumerate() {
            for (j, &beta) in grid.iter().enumerate() {
                let v = classify(
                    &LevyInput::compound_poisson_pareto(1.0, alpha).unwrap(),
                    &power_release(beta),
                    &cfg,
                )
                .verdict;
                if v != Verdict::PositiveRecurrent {
                    continue;
                }
                for &a2 in &grid[i..] {
                    for &b2 in &grid[j..] {
                        let w = classify(
                            &LevyInput::compound_poisson_pareto(1.0, a2).unwrap(),
                            &power_release(b2),
                            &cfg,
                        )
                        .verdict;
                        assert!(!w.is_transient(), "({alpha},{beta}) -> ({a2},{b2})");
                    }
                }
            }
        }
    }

    #[test]
    fn deterministic_report() {
        let input = LevyInput::gamma(1.0, 1.0).unwrap();
        let r = ReleaseRate::power(1.0, 2.0);
        let a = classify(&input, &r, &ClassifierConfig::numeric_only());
        let b = classify(&input, &r, &ClassifierConfig::numeric_only());
        assert_eq!(a, b);
        assert!(a.uniform);
    }

    #[test]
    fn table2_rows() {
        let cfg = ClassifierConfig::default();
        let cases: Vec<(LevyInput, ReleaseRate, &str, &str)> = vec![
            (
                LevyInput::compound_poisson_exp(1.0, 1.0).unwrap(),
                ReleaseRate::constant(2.0),
                "Exponential",
                "Exponential",
            ),
            (
                LevyInput::compound_poisson_pareto(1.0, 1.5).unwrap(),
                ReleaseRate::constant(4.0),
                "≈ t^-0.5",
                "≈ u^-0.5",
            ),
            (
                LevyInput::compound_poisson_pareto(1.0, 0.5).unwrap(),
                ReleaseRate::affine(0.0, 1.0),
                "Exponential",
                "≈ u^-0.5",
            ),
            (
                LevyInput::compound_poisson_pareto(1.0, 1.0).unwrap(),
                ReleaseRate::power_smoothed(1.0, 0.5),
                "≈ t^-1",
                "≈ u^-0.5",
            ),
            (
                LevyInput::compound_poisson_pareto(1.0, 1.0).unwrap(),
                ReleaseRate::power(1.0, 2.0),
                "Uniform",
                "≼ u^-2",
            ),
        ];
        for (input, r, rate, tail) in cases {
            let rep = classify(&input, &r, &cfg);
            let row = ergodicity_row(&input, &r, &rep);
            assert_eq!(row.regime, "Pos. recurrent");
            assert_eq!(row.rate_label, rate, "{r}");
            assert_eq!(row.tail_label, tail, "{r}");
        }
    }
}
