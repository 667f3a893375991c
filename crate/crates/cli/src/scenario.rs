//! Scenario files: JSON with `"scenario_schema": 1`.

use anyhow::{anyhow, bail, Context, Result};
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use serde_json::{Map, Value};

use storagelab::levy_input::{LevyFamily, LevyInput, DEFAULT_TRUNCATION_EPS};
use storagelab::lyapunov::{ConvexModulus, PhiFamily, RateFunction};
use storagelab::numerics::logspace;
use storagelab::release_rate::{ReleaseFamily, ReleaseRate};

pub const SCHEMA_VERSION: u32 = 1;

/// Input law plus the small-jump truncation used when simulating it.
#[derive(Debug, Clone, PartialEq)]
pub struct InputSpec {
    pub family: LevyFamily,
    pub truncation_eps: f64,
}

impl Serialize for InputSpec {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let mut v = serde_json::to_value(&self.family).map_err(serde::ser::Error::custom)?;
        if let Value::Object(m) = &mut v {
            m.insert("truncation_eps".into(), self.truncation_eps.into());
        }
        v.serialize(s)
    }
}

impl<'de> Deserialize<'de> for InputSpec {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let mut m = Map::deserialize(d)?;
        let truncation_eps = match m.remove("truncation_eps") {
            Some(v) => v
                .as_f64()
                .ok_or_else(|| serde::de::Error::custom("truncation_eps must be a number"))?,
            None => DEFAULT_TRUNCATION_EPS,
        };
        let family = LevyFamily::deserialize(Value::Object(m)).map_err(serde::de::Error::custom)?;
        Ok(Self { family, truncation_eps })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ModulusSpec {
    /// `beta(t) = t^d` with contraction constant `gamma`
    Power {
        d: f64,
        #[serde(default = "one")]
        gamma: f64,
    },
}

fn one() -> f64 {
    1.0
}

impl ModulusSpec {
    pub fn modulus(&self) -> (ConvexModulus, f64) {
        match *self {
            ModulusSpec::Power { d, gamma } => (ConvexModulus::power(d), gamma),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Grids {
    #[serde(default = "default_probe_u")]
    pub probe_u: Vec<f64>,
    #[serde(default = "default_t_grid")]
    pub t_grid: Vec<f64>,
    #[serde(default = "default_u_grid")]
    pub u_grid: Vec<f64>,
}

fn default_probe_u() -> Vec<f64> {
    logspace(1e2, 1e6, 9)
}

fn default_t_grid() -> Vec<f64> {
    logspace(1.0, 100.0, 12)
}

fn default_u_grid() -> Vec<f64> {
    vec![0.0, 0.5, 1.0, 2.0, 4.0, 8.0, 16.0]
}

impl Default for Grids {
    fn default() -> Self {
        Self {
            probe_u: default_probe_u(),
            t_grid: default_t_grid(),
            u_grid: default_u_grid(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Budgets {
    /// ensemble size for decay curves and `simulate`
    #[serde(default = "default_n_paths")]
    pub n_paths: usize,
    /// burn-in of the stationary reference chains
    #[serde(default = "default_horizon")]
    pub horizon: f64,
    /// effective samples for tail estimates and reference samples
    #[serde(default = "default_samples")]
    pub samples: usize,
    /// time units per effective sample in long-run averages
    #[serde(default = "one")]
    pub thinning: f64,
    #[serde(default)]
    pub x0: f64,
    #[serde(default = "default_bootstrap")]
    pub bootstrap: usize,
}

fn default_n_paths() -> usize {
    10_000
}

fn default_horizon() -> f64 {
    1000.0
}

fn default_samples() -> usize {
    100_000
}

fn default_bootstrap() -> usize {
    storagelab::ergodicity_lab::DEFAULT_BOOTSTRAP
}

impl Default for Budgets {
    fn default() -> Self {
        Self {
            n_paths: default_n_paths(),
            horizon: default_horizon(),
            samples: default_samples(),
            thinning: 1.0,
            x0: 0.0,
            bootstrap: default_bootstrap(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Tolerances {
    #[serde(default = "default_margin")]
    pub decision_margin: f64,
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
}

fn default_margin() -> f64 {
    0.05
}

fn default_epsilon() -> f64 {
    0.1
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            decision_margin: default_margin(),
            epsilon: default_epsilon(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub scenario_schema: u32,
    pub name: String,
    #[serde(default)]
    pub seed: u64,
    pub input: InputSpec,
    pub release: ReleaseFamily,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub phi: Option<PhiFamily>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta_modulus: Option<ModulusSpec>,
    #[serde(default)]
    pub grids: Grids,
    #[serde(default)]
    pub budgets: Budgets,
    #[serde(default)]
    pub tolerances: Tolerances,
}

impl Scenario {
    pub fn from_value(v: Value) -> Result<Self> {
        let s: Scenario = serde_json::from_value(v).context("invalid scenario")?;
        if s.scenario_schema != SCHEMA_VERSION {
            bail!(
                "unsupported scenario_schema {} (expected {SCHEMA_VERSION})",
                s.scenario_schema
            );
        }
        s.input()?;
        s.release()?;
        s.rate_function()?;
        Ok(s)
    }

    pub fn input(&self) -> Result<LevyInput> {
        LevyInput::new(self.input.family.clone()).map_err(|e| anyhow!("input: {e}"))
    }

    pub fn release(&self) -> Result<ReleaseRate> {
        ReleaseRate::new(self.release.clone()).map_err(|e| anyhow!("release: {e}"))
    }

    pub fn rate_function(&self) -> Result<Option<RateFunction>> {
        self.phi
            .map(|f| RateFunction::new(f).map_err(|e| anyhow!("phi: {e}")))
            .transpose()
    }
}

/// Applies `key=value` overrides on dotted paths; values parse as JSON and
/// fall back to strings.
pub fn apply_overrides(mut v: Value, overrides: &[String]) -> Result<Value> {
    for o in overrides {
        let (key, raw) = o.split_once('=').ok_or_else(|| anyhow!("override `{o}` is not key=value"))?;
        let value: Value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
        let mut node = &mut v;
        let parts: Vec<&str> = key.split('.').collect();
        for (i, part) in parts.iter().enumerate() {
            let obj = node
                .as_object_mut()
                .ok_or_else(|| anyhow!("override `{key}`: `{part}` is not inside an object"))?;
            if i + 1 == parts.len() {
                obj.insert(part.to_string(), value.clone());
                break;
            }
            node = obj.entry(part.to_string()).or_insert_with(|| Value::Object(Map::new()));
        }
    }
    Ok(v)
}

/// `constant`, `linear:<c>` or `power:<a>`.
pub fn parse_phi(s: &str) -> Result<PhiFamily> {
    let (name, arg) = s.split_once(':').unwrap_or((s, ""));
    let num = || -> Result<f64> { arg.parse().with_context(|| format!("phi `{s}` needs a numeric parameter")) };
    Ok(match name {
        "constant" if arg.is_empty() => PhiFamily::Constant,
        "linear" => PhiFamily::Linear { c: num()? },
        "power" => PhiFamily::Power { a: num()? },
        _ => bail!("unknown phi `{s}` (expected constant, linear:<c> or power:<a>)"),
    })
}
