//! Monte Carlo estimates of stationary tails and of TV / Wasserstein decay,
//! with exponent fits and comparison against predicted rates.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::gamma_ur;

use crate::classifier::{classify, positive_recurrent_values, ClassifierConfig, Verdict};
use crate::levy_input::{JumpLaw, LevyFamily, LevyInput, DEFAULT_TRUNCATION_EPS};
use crate::lyapunov::{ConvexModulus, DriftCertificate, TvLowerBound, TvRate, WassersteinRate};
use crate::numerics::{fit_loglog, fit_semilog, logspace, FitResult, NumericsError, QuadratureSpec};
use crate::release_rate::{ReleaseFamily, ReleaseRate};
use crate::rng::{stream, Purpose, StreamRng};
use crate::simulator::{simulate_indexed, simulate_occupation, PathConfig, Record};

pub const DEFAULT_BOOTSTRAP: usize = 200;
pub const DEFAULT_BINS: usize = 64;
pub const MIN_SAMPLES: usize = 1000;
const BATCHES: usize = 100;
/// path indices at or above this offset are reserved for reference chains
const REFERENCE_INDEX: u64 = 1 << 40;
/// offset of the second ensemble in two-sample comparisons
const SECOND_INDEX: u64 = 1 << 41;
const FLOOR_INDEX: u64 = 1 << 42;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum LabError {
    #[error("scenario is not stationary (verdict {0})")]
    NotStationaryRegime(String),
    #[error("budget below {MIN_SAMPLES} effective samples")]
    BudgetTooSmall,
    #[error("every usable point lies below twice the noise floor")]
    NoiseFloorReached(Box<DecayCurve>),
    #[error("moment condition failed: {0}")]
    MomentConditionFailed(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error(transparent)]
    Numerics(#[from] NumericsError),
}

pub type Result<T> = std::result::Result<T, LabError>;

/// Seeds and sizes shared by the estimators.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LabConfig {
    pub seed: u64,
    pub bootstrap: usize,
    pub truncation_eps: f64,
}

impl Default for LabConfig {
    fn default() -> Self {
        Self {
            seed: 0x5eed,
            bootstrap: DEFAULT_BOOTSTRAP,
            truncation_eps: DEFAULT_TRUNCATION_EPS,
        }
    }
}

impl LabConfig {
    pub fn with_seed(seed: u64) -> Self {
        Self { seed, ..Self::default() }
    }
}

// ---------------------------------------------------------------------------
// small statistics

/// Pool-adjacent-violators projection onto non-increasing sequences.
pub fn isotonic_non_increasing(values: &[f64], weights: &[f64]) -> Vec<f64> {
    assert_eq!(values.len(), weights.len());
    // blocks of (mean, weight, length)
    let mut blocks: Vec<(f64, f64, usize)> = Vec::with_capacity(values.len());
    for (&v, &w) in values.iter().zip(weights) {
        blocks.push((v, w.max(1e-300), 1));
        while blocks.len() > 1 {
            let (m2, w2, n2) = blocks[blocks.len() - 1];
            let (m1, w1, n1) = blocks[blocks.len() - 2];
            if m1 >= m2 {
                break;
            }
            blocks.truncate(blocks.len() - 2);
            blocks.push(((m1 * w1 + m2 * w2) / (w1 + w2), w1 + w2, n1 + n2));
        }
    }
    blocks.into_iter().flat_map(|(m, _, n)| std::iter::repeat_n(m, n)).collect()
}

fn std_dev(xs: &[f64]) -> f64 {
    let n = xs.len() as f64;
    if n < 2.0 {
        return 0.0;
    }
    let m = xs.iter().sum::<f64>() / n;
    (xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
}

fn resample(n: usize, rng: &mut StreamRng) -> Vec<usize> {
    (0..n).map(|_| rng.random_range(0..n)).collect()
}

/// Column-wise standard deviation of `stat` over `reps` bootstrap draws.
fn bootstrap_se<S>(reps: usize, seed: u64, width: usize, stat: S) -> Vec<f64>
where
    S: Fn(&mut StreamRng) -> Vec<f64> + Sync,
{
    if reps < 2 {
        return vec![0.0; width];
    }
    let draws: Vec<Vec<f64>> = (0..reps as u64)
        .into_par_iter()
        .map(|b| stat(&mut stream(seed, b, Purpose::Bootstrap)))
        .collect();
    (0..width)
        .map(|k| std_dev(&draws.iter().map(|d| d[k]).collect::<Vec<_>>()))
        .collect()
}

// ---------------------------------------------------------------------------
// fits

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FitScale {
    /// `ln y ~ ln x`
    Power,
    /// `ln y ~ x`
    Exponential,
}

/// Both candidate fits and the scale with the better `r^2`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScaledFit {
    pub scale: FitScale,
    pub power: FitResult,
    pub exponential: FitResult,
}

impl ScaledFit {
    pub fn new(xs: &[f64], ys: &[f64]) -> Result<Self> {
        let power = fit_loglog(xs, ys, None)?;
        let exponential = fit_semilog(xs, ys, None)?;
        let scale = if exponential.r_squared > power.r_squared {
            FitScale::Exponential
        } else {
            FitScale::Power
        };
        Ok(Self {
            scale,
            power,
            exponential,
        })
    }

    pub fn selected(&self) -> &FitResult {
        match self.scale {
            FitScale::Power => &self.power,
            FitScale::Exponential => &self.exponential,
        }
    }
}

// ---------------------------------------------------------------------------
// stationary tail

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum TailMethod {
    /// One long path; exact occupation above each level after `burn_in`.
    /// Each effective sample accounts for `thinning` time units.
    LongRunTimeAverage { burn_in: Option<f64>, thinning: f64 },
    /// Independent endpoints at `horizon` from `x0 = 0`.
    EnsembleEndpoint { horizon: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TailEstimate {
    pub levels: Vec<f64>,
    pub pi_bar_hat: Vec<f64>,
    pub stderr: Vec<f64>,
    pub method: TailMethod,
    /// burn-in actually used by the long-run method
    pub burn_in: Option<f64>,
    pub samples: usize,
    pub warnings: Vec<String>,
}

/// Ten relaxation times, read off `1 - sup_u int nu_bar(v) / r(u+v) dv`.
pub fn default_burn_in(input: &LevyInput, r: &ReleaseRate) -> f64 {
    let probes = logspace(1.0, 1e4, 5);
    let vals = positive_recurrent_values(input, r, &probes, &QuadratureSpec::default());
    let worst = vals.iter().copied().fold(0.0, f64::max);
    let margin = 1.0 - worst;
    if margin > 0.0 && margin.is_finite() {
        (10.0 / margin).clamp(10.0, 1e4)
    } else {
        1e4
    }
}

/// Smallest doubling of `start` where `1 / phi(Phi^{-1}(T)) < 0.01`, capped.
pub fn endpoint_horizon(cert: &DriftCertificate, start: f64, cap: f64) -> f64 {
    let mut t = start.max(1.0);
    while t < cap && cert.ln_predicted_tv_rate(t) < 100f64.ln() {
        t *= 2.0;
    }
    t.min(cap)
}

fn regime_gate(input: &LevyInput, r: &ReleaseRate) -> Result<Vec<String>> {
    let report = classify(input, r, &ClassifierConfig::default());
    match report.verdict {
        Verdict::PositiveRecurrent => Ok(Vec::new()),
        Verdict::Transient { .. } => Err(LabError::NotStationaryRegime(report.label)),
        _ => Ok(vec![format!("verdict is {}; estimates may not settle", report.label)]),
    }
}

pub fn estimate_tail(
    input: &LevyInput,
    r: &ReleaseRate,
    method: TailMethod,
    u_grid: &[f64],
    samples: usize,
    cfg: &LabConfig,
) -> Result<TailEstimate> {
    if samples < MIN_SAMPLES {
        return Err(LabError::BudgetTooSmall);
    }
    if u_grid.windows(2).any(|w| w[1] < w[0]) || u_grid.iter().any(|u| !(*u >= 0.0)) {
        return Err(LabError::InvalidArgument("u_grid must be sorted and non-negative".into()));
    }
    let warnings = regime_gate(input, r)?;
    let k = u_grid.len();
    let (raw, stderr, burn_in) = match method {
        TailMethod::LongRunTimeAverage { burn_in, thinning } => {
            if !(thinning > 0.0) {
                return Err(LabError::InvalidArgument("thinning > 0".into()));
            }
            let burn = burn_in.unwrap_or_else(|| default_burn_in(input, r));
            let batch = samples as f64 * thinning / BATCHES as f64;
            let occ = simulate_occupation(input, r, 0.0, burn, batch, BATCHES, u_grid, cfg.seed, cfg.truncation_eps);
            let mean = |idx: &[usize]| -> Vec<f64> {
                (0..k)
                    .map(|j| idx.iter().map(|&b| occ.fractions[b][j]).sum::<f64>() / idx.len() as f64)
                    .collect()
            };
            let all: Vec<usize> = (0..BATCHES).collect();
            let est = mean(&all);
            let se = bootstrap_se(cfg.bootstrap, cfg.seed, k, |rng| mean(&resample(BATCHES, rng)));
            (est, se, Some(burn))
        }
        TailMethod::EnsembleEndpoint { horizon } => {
            let pc = PathConfig {
                truncation_eps: cfg.truncation_eps,
                ..PathConfig::endpoint(0.0, horizon, cfg.seed)
            };
            pc.validate().map_err(|e| LabError::InvalidArgument(e.to_string()))?;
            let xs: Vec<f64> = (0..samples as u64)
                .into_par_iter()
                .map(|i| simulate_indexed(input, r, &pc, i).endpoint())
                .collect();
            // levels strictly below x, per sample
            let above: Vec<usize> = xs.iter().map(|&x| u_grid.partition_point(|&u| u < x)).collect();
            let frac = |idx: &[usize]| -> Vec<f64> {
                let mut counts = vec![0usize; k + 1];
                for &i in idx {
                    counts[above[i]] += 1;
                }
                // count of samples exceeding level j = samples with above > j
                let mut out = vec![0.0; k];
                let mut acc = 0usize;
                for j in (0..k).rev() {
                    acc += counts[j + 1];
                    out[j] = acc as f64 / idx.len() as f64;
                }
                out
            };
            let all: Vec<usize> = (0..xs.len()).collect();
            let est = frac(&all);
            let se = bootstrap_se(cfg.bootstrap, cfg.seed, k, |rng| frac(&resample(xs.len(), rng)));
            (est, se, None)
        }
    };
    let w: Vec<f64> = stderr.iter().map(|s| 1.0 / (s * s).max(1e-12)).collect();
    let pi_bar_hat = isotonic_non_increasing(&raw, &w)
        .into_iter()
        .map(|v| v.clamp(0.0, 1.0))
        .collect();
    Ok(TailEstimate {
        levels: u_grid.to_vec(),
        pi_bar_hat,
        stderr,
        method,
        burn_in,
        samples,
        warnings,
    })
}

/// Closed-form stationary tail where one is known: exponential jumps with
/// constant release (workload of an M/M/1 queue with speed `a`) or with
/// linear release (Gamma(lambda / b, mu) shot noise).
pub fn exact_stationary_tail(input: &LevyInput, r: &ReleaseRate, u: f64) -> Option<f64> {
    let LevyFamily::CompoundPoisson {
        rate: lambda,
        jump: JumpLaw::Exponential { rate: mu },
    } = *input.family()
    else {
        return None;
    };
    match *r.family()? {
        ReleaseFamily::Constant { a } if lambda < a * mu => {
            let rho = lambda / (a * mu);
            Some(if u < 0.0 { 1.0 } else { rho * (-(mu - lambda / a) * u).exp() })
        }
        ReleaseFamily::Affine { a: 0.0, b } => Some(if u <= 0.0 { 1.0 } else { gamma_ur(lambda / b, mu * u) }),
        _ => None,
    }
}

/// Fit of `pi_bar` on levels in `[lo, hi]` with a positive estimate.
pub fn fit_tail(est: &TailEstimate, lo: f64, hi: f64) -> Result<ScaledFit> {
    let (xs, ys): (Vec<f64>, Vec<f64>) = est
        .levels
        .iter()
        .zip(&est.pi_bar_hat)
        .filter(|(u, p)| **u >= lo && **u <= hi && **p > 0.0)
        .map(|(u, p)| (*u, *p))
        .unzip();
    ScaledFit::new(&xs, &ys)
}

// ---------------------------------------------------------------------------
// reference samples and distances

/// Draws approximate samples of the stationary law: `chains` paths from
/// `x0`, each recorded `per_chain` times every `spacing` after `burn_in`.
/// `per_chain = 1` is the endpoint method.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReferenceSampler {
    pub chains: usize,
    pub burn_in: f64,
    pub spacing: f64,
    pub per_chain: usize,
    #[serde(default)]
    pub x0: f64,
}

/// Sorted reference sample.
pub fn sample_reference(input: &LevyInput, r: &ReleaseRate, sampler: &ReferenceSampler, cfg: &LabConfig) -> Result<Vec<f64>> {
    if sampler.chains == 0 || sampler.per_chain == 0 || !(sampler.burn_in > 0.0) || !(sampler.spacing >= 0.0) {
        return Err(LabError::InvalidArgument("reference sampler sizes".into()));
    }
    let times: Vec<f64> = (0..sampler.per_chain)
        .map(|k| sampler.burn_in + k as f64 * sampler.spacing)
        .collect();
    let pc = PathConfig {
        truncation_eps: cfg.truncation_eps,
        ..PathConfig::grid(sampler.x0, times, cfg.seed)
    };
    let mut xs: Vec<f64> = (0..sampler.chains as u64)
        .into_par_iter()
        .flat_map_iter(|i| simulate_indexed(input, r, &pc, REFERENCE_INDEX + i).values)
        .collect();
    xs.sort_by(f64::total_cmp);
    Ok(xs)
}

/// Interior equal-mass edges of a sorted reference sample, deduplicated,
/// plus the reference maximum so mass beyond the reference gets its own bin.
pub fn equal_mass_edges(reference: &[f64], bins: usize) -> Vec<f64> {
    let n = reference.len();
    let mut edges: Vec<f64> = (1..bins).map(|i| reference[(i * n / bins).min(n - 1)]).collect();
    edges.push(reference[n - 1]);
    edges.dedup();
    edges
}

/// Bin of `x` among `(-inf, e_1], (e_1, e_2], ..., (e_last, inf)`.
fn bin_of(edges: &[f64], x: f64) -> usize {
    edges.partition_point(|&e| e < x)
}

fn histogram(labels: &[u32], idx: Option<&[usize]>, nbins: usize) -> Vec<f64> {
    let mut h = vec![0.0; nbins];
    match idx {
        Some(ix) => ix.iter().for_each(|&i| h[labels[i] as usize] += 1.0),
        None => labels.iter().for_each(|&l| h[l as usize] += 1.0),
    }
    let n = h.iter().sum::<f64>();
    h.iter_mut().for_each(|v| *v /= n);
    h
}

fn half_l1(p: &[f64], q: &[f64]) -> f64 {
    0.5 * p.iter().zip(q).map(|(a, b)| (a - b).abs()).sum::<f64>()
}

/// Histogram TV between `sample` and a sorted `reference` on equal-mass bins.
pub fn tv_histogram(sample: &[f64], reference: &[f64], bins: usize) -> f64 {
    let edges = equal_mass_edges(reference, bins);
    let nb = edges.len() + 1;
    let ls: Vec<u32> = sample.iter().map(|&x| bin_of(&edges, x) as u32).collect();
    let lr: Vec<u32> = reference.iter().map(|&x| bin_of(&edges, x) as u32).collect();
    half_l1(&histogram(&ls, None, nb), &histogram(&lr, None, nb))
}

pub fn noise_floor(bins: usize, n: usize) -> f64 {
    (bins as f64 / n as f64).sqrt()
}

/// Exact `W_p` between two empirical laws by merging their quantile functions.
pub fn wasserstein_p(a: &[f64], b: &[f64], p: f64) -> f64 {
    assert!(p >= 1.0 && !a.is_empty() && !b.is_empty());
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (n, m) = (a.len(), b.len());
    if n == m {
        let s: f64 = a.iter().zip(&b).map(|(x, y)| (x - y).abs().powf(p)).sum();
        return (s / n as f64).powf(1.0 / p);
    }
    // quantile levels i/n and j/m, compared as integers i*m vs j*n
    let (mut i, mut j) = (0usize, 0usize);
    let mut last = 0u128;
    let mut acc = 0.0;
    let total = (n as u128) * (m as u128);
    while i < n && j < m {
        let na = (i as u128 + 1) * m as u128;
        let nb = (j as u128 + 1) * n as u128;
        let next = na.min(nb);
        acc += (next - last) as f64 / total as f64 * (a[i] - b[j]).abs().powf(p);
        last = next;
        if na == next {
            i += 1;
        }
        if nb == next {
            j += 1;
        }
    }
    acc.powf(1.0 / p)
}

/// `int |F_a(x) - F_b(x)| dx`, which equals `W_1`.
pub fn w1_cdf_area(a: &[f64], b: &[f64]) -> f64 {
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let mut pts: Vec<f64> = a.iter().chain(&b).copied().collect();
    pts.sort_by(f64::total_cmp);
    let (n, m) = (a.len() as f64, b.len() as f64);
    let (mut ia, mut ib) = (0usize, 0usize);
    let mut area = 0.0;
    for w in pts.windows(2) {
        while ia < a.len() && a[ia] <= w[0] {
            ia += 1;
        }
        while ib < b.len() && b[ib] <= w[0] {
            ib += 1;
        }
        area += (ia as f64 / n - ib as f64 / m).abs() * (w[1] - w[0]);
    }
    area
}

// ---------------------------------------------------------------------------
// decay curves

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "metric", rename_all = "snake_case")]
pub enum Metric {
    Tv,
    Wp { p: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Exclusion {
    Transient,
    NoiseFloor,
    Zero,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecayCurve {
    pub times: Vec<f64>,
    pub metric: Metric,
    pub values: Vec<f64>,
    pub stderr: Vec<f64>,
    pub noise_floor: Option<f64>,
    /// why each point was left out of the fit, if it was
    pub excluded: Vec<Option<Exclusion>>,
    pub fit: Option<ScaledFit>,
    pub reference_exponent: Option<f64>,
}

impl DecayCurve {
    /// Power-law exponent of the fit.
    pub fn exponent(&self) -> Option<f64> {
        self.fit.map(|f| f.power.exponent)
    }

    fn fit_points(&mut self) -> Result<()> {
        let n = self.times.len();
        let skip = n / 3;
        let floor2 = self.noise_floor.map_or(0.0, |f| 2.0 * f);
        self.excluded = (0..n)
            .map(|i| {
                if i < skip {
                    Some(Exclusion::Transient)
                } else if !(self.values[i] > 0.0) {
                    Some(Exclusion::Zero)
                } else if self.values[i] < floor2 {
                    Some(Exclusion::NoiseFloor)
                } else {
                    None
                }
            })
            .collect();
        let (xs, ys): (Vec<f64>, Vec<f64>) = (0..n)
            .filter(|&i| self.excluded[i].is_none())
            .map(|i| (self.times[i], self.values[i]))
            .unzip();
        if xs.len() < 2 {
            self.fit = None;
            return Err(LabError::NoiseFloorReached(Box::new(self.clone())));
        }
        self.fit = Some(ScaledFit::new(&xs, &ys)?);
        Ok(())
    }
}

fn check_times(t_grid: &[f64]) -> Result<()> {
    if t_grid.is_empty() || t_grid.windows(2).any(|w| w[1] <= w[0]) || !(t_grid[0] > 0.0) {
        return Err(LabError::InvalidArgument("t_grid must be positive and increasing".into()));
    }
    Ok(())
}

/// Ensemble values at each time, `out[t][path]`.
fn ensemble_columns<S>(
    input: &LevyInput,
    r: &ReleaseRate,
    start: S,
    t_grid: &[f64],
    n_paths: usize,
    offset: u64,
    cfg: &LabConfig,
) -> Vec<Vec<f64>>
where
    S: Fn(u64) -> f64 + Sync,
{
    let rows: Vec<Vec<f64>> = (0..n_paths as u64)
        .into_par_iter()
        .map(|i| {
            let pc = PathConfig {
                truncation_eps: cfg.truncation_eps,
                ..PathConfig::grid(start(i), t_grid.to_vec(), cfg.seed)
            };
            simulate_indexed(input, r, &pc, offset + i).values
        })
        .collect();
    (0..t_grid.len()).map(|k| rows.iter().map(|row| row[k]).collect()).collect()
}

/// TV between the time-`t` law from `x0` and a sorted stationary reference.
///
/// Returns `NoiseFloorReached` carrying the curve when fewer than two points
/// survive the fit exclusions.
#[allow(clippy::too_many_arguments)]
pub fn estimate_tv_decay(
    input: &LevyInput,
    r: &ReleaseRate,
    x0: f64,
    t_grid: &[f64],
    n_paths: usize,
    bins: usize,
    reference: &[f64],
    cfg: &LabConfig,
) -> Result<DecayCurve> {
    check_times(t_grid)?;
    if n_paths < 2 || bins < 2 || reference.len() < bins {
        return Err(LabError::InvalidArgument("ensemble, bins and reference sizes".into()));
    }
    let edges = equal_mass_edges(reference, bins);
    let nb = edges.len() + 1;
    let lr: Vec<u32> = reference.iter().map(|&x| bin_of(&edges, x) as u32).collect();
    let q = histogram(&lr, None, nb);
    let cols = ensemble_columns(input, r, |_| x0, t_grid, n_paths, 0, cfg);
    let mut values = Vec::with_capacity(t_grid.len());
    let mut stderr = Vec::with_capacity(t_grid.len());
    for (k, col) in cols.iter().enumerate() {
        let labels: Vec<u32> = col.iter().map(|&x| bin_of(&edges, x) as u32).collect();
        values.push(half_l1(&histogram(&labels, None, nb), &q));
        let se = bootstrap_se(cfg.bootstrap, cfg.seed ^ (k as u64) << 32, 1, |rng| {
            vec![half_l1(&histogram(&labels, Some(&resample(n_paths, rng)), nb), &q)]
        });
        stderr.push(se[0]);
    }
    let mut curve = DecayCurve {
        times: t_grid.to_vec(),
        metric: Metric::Tv,
        values,
        stderr,
        noise_floor: Some(noise_floor(bins, n_paths)),
        excluded: Vec::new(),
        fit: None,
        reference_exponent: None,
    };
    curve.fit_points()?;
    Ok(curve)
}

/// Initial law of the second ensemble in a Wasserstein comparison.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "law", content = "value", rename_all = "snake_case")]
pub enum InitialLaw {
    Dirac(f64),
    /// path `i` of `n` starts at sample quantile `i / n`
    Empirical(Vec<f64>),
}

impl InitialLaw {
    fn draw(&self, i: u64, n: u64) -> f64 {
        match self {
            InitialLaw::Dirac(x) => *x,
            InitialLaw::Empirical(xs) => {
                // sorted samples must be spread over, not read from the front
                let len = xs.len() as u128;
                xs[((i as u128 * len / n as u128) % len) as usize]
            }
        }
    }
}

/// Checks `int (u v u^p) nu(du) < inf`.
pub fn wasserstein_moment_condition(input: &LevyInput, p: f64) -> Result<()> {
    if !input.first_moment().is_finite() {
        return Err(LabError::MomentConditionFailed("first moment of nu is infinite".into()));
    }
    match input.moment_above_one(p) {
        Ok(v) if v.is_finite() => Ok(()),
        _ => Err(LabError::MomentConditionFailed(format!("int_1^inf u^{p} nu(du) is infinite"))),
    }
}

/// Exponent of the Wasserstein rate: `-Gamma` on the exponential scale for a
/// linear modulus, `-1/(d-1)` on the power scale otherwise.
pub fn wasserstein_reference_exponent(rate: &WassersteinRate) -> Option<f64> {
    match rate.beta {
        ConvexModulus::Power { d: 1.0 } => Some(-rate.gamma),
        ConvexModulus::Power { d } => Some(-1.0 / (d - 1.0)),
        ConvexModulus::Custom { .. } => None,
    }
}

/// `W_p` between two independent size-`n` draws from `sample`: the level an
/// ensemble-versus-ensemble distance settles at once both laws agree.
pub fn wasserstein_noise_floor(sample: &[f64], n: usize, p: f64, seed: u64) -> f64 {
    let mut rng = stream(seed, FLOOR_INDEX, Purpose::Bootstrap);
    let mut draw = || -> Vec<f64> {
        let mut v: Vec<f64> = (0..n).map(|_| sample[rng.random_range(0..sample.len())]).collect();
        v.sort_by(f64::total_cmp);
        v
    };
    let (a, b) = (draw(), draw());
    wasserstein_p(&a, &b, p)
}

/// Empirical `W_p` between the time-`t` laws from `x0` and from `mu0`.
///
/// With an empirical `mu0` the curve carries the sampling floor of
/// [`wasserstein_noise_floor`] and the fit skips points below twice it.
#[allow(clippy::too_many_arguments)]
pub fn estimate_wp_decay(
    input: &LevyInput,
    r: &ReleaseRate,
    x0: f64,
    mu0: &InitialLaw,
    p: f64,
    t_grid: &[f64],
    n_paths: usize,
    rate: Option<&WassersteinRate>,
    cfg: &LabConfig,
) -> Result<DecayCurve> {
    check_times(t_grid)?;
    if !(p >= 1.0) {
        return Err(LabError::InvalidArgument("p >= 1".into()));
    }
    if n_paths < 2 {
        return Err(LabError::InvalidArgument("n_paths >= 2".into()));
    }
    if let InitialLaw::Empirical(xs) = mu0 {
        if xs.is_empty() {
            return Err(LabError::InvalidArgument("empty initial sample".into()));
        }
    }
    wasserstein_moment_condition(input, p)?;
    let a = ensemble_columns(input, r, |_| x0, t_grid, n_paths, 0, cfg);
    let b = ensemble_columns(input, r, |i| mu0.draw(i, n_paths as u64), t_grid, n_paths, SECOND_INDEX, cfg);
    let mut values = Vec::with_capacity(t_grid.len());
    let mut stderr = Vec::with_capacity(t_grid.len());
    for (k, (ca, cb)) in a.iter().zip(&b).enumerate() {
        values.push(wasserstein_p(ca, cb, p));
        let se = bootstrap_se(cfg.bootstrap, cfg.seed ^ (k as u64) << 32, 1, |rng| {
            let ra: Vec<f64> = resample(n_paths, rng).into_iter().map(|i| ca[i]).collect();
            let rb: Vec<f64> = resample(n_paths, rng).into_iter().map(|i| cb[i]).collect();
            vec![wasserstein_p(&ra, &rb, p)]
        });
        stderr.push(se[0]);
    }
    let noise_floor = match mu0 {
        InitialLaw::Empirical(xs) => Some(wasserstein_noise_floor(xs, n_paths, p, cfg.seed)),
        InitialLaw::Dirac(_) => None,
    };
    let mut curve = DecayCurve {
        times: t_grid.to_vec(),
        metric: Metric::Wp { p },
        values,
        stderr,
        noise_floor,
        excluded: Vec::new(),
        fit: None,
        reference_exponent: rate.and_then(wasserstein_reference_exponent),
    };
    curve.fit_points()?;
    Ok(curve)
}

// ---------------------------------------------------------------------------
// comparison

/// Predicted decay of a curve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RatePrediction {
    /// `c t^lower <~ d(t) <~ C t^upper`
    Polynomial {
        upper: Option<f64>,
        lower: Option<f64>,
        epsilon: f64,
    },
    Geometric {
        rate: Option<f64>,
    },
}

impl RatePrediction {
    /// Upper exponent from a certificate, lower exponent from a TV lower bound
    /// fitted over `t_grid`.
    pub fn from_bounds(cert: Option<&DriftCertificate>, lower: Option<&TvLowerBound>, t_grid: &[f64], epsilon: f64) -> Self {
        if let Some(TvRate::Geometric { c }) = cert.map(|c| c.tv_rate) {
            return RatePrediction::Geometric { rate: Some(c) };
        }
        let upper = cert.and_then(|c| match c.tv_rate {
            TvRate::Polynomial { .. } => Some(c.tv_rate.decay_exponent()),
            _ => None,
        });
        let lower = lower.and_then(|b| b.fitted_exponent(t_grid).ok()).map(|f| f.exponent);
        RatePrediction::Polynomial { upper, lower, epsilon }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateComparison {
    pub fitted: f64,
    pub fitted_stderr: f64,
    pub scale: FitScale,
    pub predicted_upper: Option<f64>,
    pub predicted_lower: Option<f64>,
    pub tolerance: f64,
    pub pass: bool,
    pub note: String,
}

pub fn compare_rates(curve: &DecayCurve, prediction: &RatePrediction) -> Result<RateComparison> {
    let fit = curve
        .fit
        .ok_or_else(|| LabError::InvalidArgument("curve has no fit".into()))?;
    Ok(match *prediction {
        RatePrediction::Polynomial { upper, lower, epsilon } => {
            let tol = 2.0 * epsilon + 2.0 * fit.power.stderr;
            let e = fit.power.exponent;
            let ok_hi = upper.is_none_or(|u| e <= u + tol);
            let ok_lo = lower.is_none_or(|l| e >= l - tol);
            RateComparison {
                fitted: e,
                fitted_stderr: fit.power.stderr,
                scale: FitScale::Power,
                predicted_upper: upper,
                predicted_lower: lower,
                tolerance: tol,
                pass: ok_hi && ok_lo,
                note: match (ok_hi, ok_lo) {
                    (true, true) => "fitted exponent inside the predicted window".into(),
                    (false, _) => "decay slower than the upper bound allows".into(),
                    (_, false) => "decay faster than the lower bound allows".into(),
                },
            }
        }
        RatePrediction::Geometric { rate } => {
            let geometric = fit.scale == FitScale::Exponential && fit.exponential.exponent < 0.0;
            RateComparison {
                fitted: fit.exponential.exponent,
                fitted_stderr: fit.exponential.stderr,
                scale: fit.scale,
                predicted_upper: rate.map(|c| -c),
                predicted_lower: None,
                tolerance: 2.0 * fit.exponential.stderr,
                pass: geometric,
                note: if geometric {
                    "exponential decay as certified".into()
                } else {
                    "geometric certificate but the curve fits a power law better".into()
                },
            }
        }
    })
}

/// Convenience for scenarios without a reference sampler: chains from 0
/// recorded once at `horizon`.
pub fn endpoint_sampler(chains: usize, horizon: f64) -> ReferenceSampler {
    ReferenceSampler {
        chains,
        burn_in: horizon,
        spacing: 0.0,
        per_chain: 1,
        x0: 0.0,
    }
}

/// Record of a grid path, for callers that want raw ensembles.
pub fn grid_config(x0: f64, t_grid: &[f64], cfg: &LabConfig) -> PathConfig {
    PathConfig {
        x0,
        horizon: t_grid.last().copied().unwrap_or(0.0),
        record: Record::Grid(t_grid.to_vec()),
        seed: cfg.seed,
        truncation_eps: cfg.truncation_eps,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lyapunov::{wasserstein_rate, RateFunction};

    fn mm1() -> (LevyInput, ReleaseRate) {
        (LevyInput::compound_poisson_exp(1.0, 1.0).unwrap(), ReleaseRate::constant(2.0))
    }

    fn shot_noise() -> (LevyInput, ReleaseRate) {
        (
            LevyInput::compound_poisson_exp(2.0, 1.0).unwrap(),
            ReleaseRate::affine(0.0, 1.0),
        )
    }

    /// `P = rho e^{-(mu - lambda/a) u}`, `rho = lambda / (a mu)`
    fn mm1_tail(u: f64) -> f64 {
        0.5 * (-0.5 * u).exp()
    }

    /// Gamma(2, 1) survival function.
    fn gamma2_tail(u: f64) -> f64 {
        (1.0 + u) * (-u).exp()
    }

    #[test]
    fn closed_form_tails() {
        let (input, r) = mm1();
        assert!((exact_stationary_tail(&input, &r, 2.0).unwrap() - 0.183940).abs() < 1e-6);
        assert_eq!(exact_stationary_tail(&input, &r, 0.0), Some(0.5));
        let (input, r) = shot_noise();
        assert!((exact_stationary_tail(&input, &r, 2.0).unwrap() - gamma2_tail(2.0)).abs() < 1e-12);
        assert_eq!(exact_stationary_tail(&input, &ReleaseRate::constant(0.5), 1.0), None);
    }

    #[test]
    fn isotonic_projection() {
        let v = isotonic_non_increasing(&[1.0, 2.0, 0.5, 0.7, 0.1], &[1.0; 5]);
        assert_eq!(v, vec![1.5, 1.5, 0.6, 0.6, 0.1]);
        let w = isotonic_non_increasing(&[3.0, 2.0, 1.0], &[1.0; 3]);
        assert_eq!(w, vec![3.0, 2.0, 1.0]);
    }

    #[test]
    fn mm1_long_run_tail() {
        let (input, r) = mm1();
        let method = TailMethod::LongRunTimeAverage {
            burn_in: None,
            thinning: 1.0,
        };
        let est = estimate_tail(&input, &r, method, &[0.0, 1.0, 2.0, 4.0], 100_000, &LabConfig::default()).unwrap();
        assert!(est.warnings.is_empty());
        assert!(est.pi_bar_hat[0] < 1.0);
        assert!((est.pi_bar_hat[0] - 0.5).abs() < 4.0 * est.stderr[0]);
        for (j, &u) in est.levels.iter().enumerate().skip(1) {
            let z = (est.pi_bar_hat[j] - mm1_tail(u)) / est.stderr[j];
            assert!(z.abs() < 3.0, "u={u}: {} vs {} (z={z})", est.pi_bar_hat[j], mm1_tail(u));
        }
    }

    #[test]
    fn shot_noise_endpoint_tail() {
        let (input, r) = shot_noise();
        let method = TailMethod::EnsembleEndpoint { horizon: 20.0 };
        let est = estimate_tail(&input, &r, method, &[0.5, 2.0, 4.0], 20_000, &LabConfig::default()).unwrap();
        for (j, &u) in est.levels.iter().enumerate() {
            let z = (est.pi_bar_hat[j] - gamma2_tail(u)) / est.stderr[j];
            assert!(z.abs() < 3.5, "u={u}: z={z}");
        }
    }

    #[test]
    fn gamma_tail_is_exponential_scale() {
        let (input, r) = shot_noise();
        let levels: Vec<f64> = (2..=8).map(|u| u as f64).collect();
        let method = TailMethod::LongRunTimeAverage {
            burn_in: Some(50.0),
            thinning: 1.0,
        };
        let est = estimate_tail(&input, &r, method, &levels, 200_000, &LabConfig::default()).unwrap();
        let fit = fit_tail(&est, 2.0, 8.0).unwrap();
        assert_eq!(fit.scale, FitScale::Exponential);
        // (1 + u) bends the exact slope to about -0.82 on this window
        let exact: Vec<f64> = levels.iter().map(|&u| gamma2_tail(u)).collect();
        let oracle = fit_semilog(&levels, &exact, None).unwrap().exponent;
        assert!((oracle + 0.8208).abs() < 1e-3);
        assert!((fit.exponential.exponent - oracle).abs() < 0.15, "{:?}", fit.exponential);
    }

    #[test]
    fn seeds_agree_within_joint_error() {
        let (input, r) = mm1();
        let method = TailMethod::LongRunTimeAverage {
            burn_in: Some(20.0),
            thinning: 1.0,
        };
        let levels = [0.5, 1.0, 2.0, 4.0, 8.0];
        let a = estimate_tail(&input, &r, method, &levels, 20_000, &LabConfig::with_seed(1)).unwrap();
        let b = estimate_tail(&input, &r, method, &levels, 20_000, &LabConfig::with_seed(2)).unwrap();
        for j in 0..levels.len() {
            let s = (a.stderr[j].powi(2) + b.stderr[j].powi(2)).sqrt();
            assert!((a.pi_bar_hat[j] - b.pi_bar_hat[j]).abs() <= 6.0 * s);
        }
    }

    #[test]
    fn transient_scenario_is_refused() {
        let input = LevyInput::stable(0.3, 1.0).unwrap();
        let r = ReleaseRate::power_smoothed(1.0, 0.3);
        let m = TailMethod::EnsembleEndpoint { horizon: 1.0 };
        assert!(matches!(
            estimate_tail(&input, &r, m, &[1.0], 1000, &LabConfig::default()),
            Err(LabError::NotStationaryRegime(_))
        ));
        let (input, r) = mm1();
        assert_eq!(
            estimate_tail(&input, &r, m, &[1.0], 10, &LabConfig::default()),
            Err(LabError::BudgetTooSmall)
        );
    }

    #[test]
    fn tv_sanity() {
        let a: Vec<f64> = (0..10_000).map(|i| (i as f64 + 0.5) / 10_000.0).collect();
        assert_eq!(tv_histogram(&a, &a, 64), 0.0);
        let b: Vec<f64> = a.iter().map(|x| x + 10.0).collect();
        assert!((tv_histogram(&b, &a, 64) - 1.0).abs() < 0.02);
        // atoms collapse bins rather than split them
        let mut c = vec![0.0; 5000];
        c.extend(a.iter().take(5000));
        c.sort_by(f64::total_cmp);
        assert!(equal_mass_edges(&c, 64).len() < 64);
        assert_eq!(tv_histogram(&c, &c, 64), 0.0);
    }

    #[test]
    fn tv_of_two_stationary_samples_is_below_floor() {
        let (input, r) = mm1();
        let cfg = LabConfig::default();
        let refs = sample_reference(&input, &r, &endpoint_sampler(20_000, 40.0), &cfg).unwrap();
        let other = sample_reference(&input, &r, &endpoint_sampler(20_000, 40.0), &LabConfig::with_seed(99)).unwrap();
        assert!(tv_histogram(&other, &refs, 64) <= noise_floor(64, 20_000));
    }

    #[test]
    fn tv_decay_from_a_far_start() {
        let (input, r) = mm1();
        let cfg = LabConfig {
            bootstrap: 50,
            ..LabConfig::default()
        };
        let refs = sample_reference(&input, &r, &endpoint_sampler(20_000, 40.0), &cfg).unwrap();
        let ts = [0.01, 1.0, 2.0, 3.0, 4.0, 5.0];
        let curve = estimate_tv_decay(&input, &r, 1e3, &ts, 5000, 64, &refs, &cfg).unwrap();
        assert!(curve.values.iter().all(|&v| v >= 0.99));
        let ts = [0.5, 1.0, 2.0, 4.0, 6.0, 8.0, 10.0, 12.0];
        let c = estimate_tv_decay(&input, &r, 10.0, &ts, 5000, 64, &refs, &cfg);
        let curve = match c {
            Ok(c) => c,
            Err(LabError::NoiseFloorReached(c)) => *c,
            Err(e) => panic!("{e}"),
        };
        assert!(curve.values.iter().all(|v| (0.0..=1.0).contains(v)));
        assert!(curve.values[0] > curve.values[4]);
        assert_eq!(curve.excluded[0], Some(Exclusion::Transient));
    }

    #[test]
    fn tv_grows_with_initial_load() {
        let (input, r) = mm1();
        let cfg = LabConfig {
            bootstrap: 0,
            ..LabConfig::default()
        };
        let refs = sample_reference(&input, &r, &endpoint_sampler(20_000, 40.0), &cfg).unwrap();
        let ts = [1.0, 2.0, 3.0];
        let tv = |x0: f64| match estimate_tv_decay(&input, &r, x0, &ts, 5000, 64, &refs, &cfg) {
            Ok(c) => c.values,
            Err(LabError::NoiseFloorReached(c)) => c.values,
            Err(e) => panic!("{e}"),
        };
        let (a, b, c) = (tv(2.0), tv(4.0), tv(8.0));
        for k in 0..ts.len() {
            assert!(a[k] <= b[k] && b[k] <= c[k], "t={}: {} {} {}", ts[k], a[k], b[k], c[k]);
        }
    }

    #[test]
    fn wasserstein_identities() {
        let a = [0.3, 1.0, 2.5];
        assert_eq!(wasserstein_p(&a, &a, 2.0), 0.0);
        for p in [1.0, 2.0, 3.5] {
            assert!((wasserstein_p(&[0.0], &[2.5], p) - 2.5).abs() < 1e-15);
        }
        // unequal sizes: {0, 1} vs {0, 0.5, 1}
        let w = wasserstein_p(&[0.0, 1.0], &[0.0, 0.5, 1.0], 1.0);
        assert!((w - 1.0 / 6.0).abs() < 1e-15);
    }

    #[test]
    fn w1_two_routes_agree() {
        use rand::Rng;
        let mut rng = stream(3, 0, Purpose::SpotCheck);
        for (n, m) in [(50, 50), (37, 91), (200, 3)] {
            let a: Vec<f64> = (0..n).map(|_| rng.random::<f64>() * 5.0).collect();
            let b: Vec<f64> = (0..m).map(|_| rng.random::<f64>().powi(3) * 7.0).collect();
            let q = wasserstein_p(&a, &b, 1.0);
            let s = w1_cdf_area(&a, &b);
            assert!((q - s).abs() < 1e-12, "{q} vs {s}");
        }
    }

    #[test]
    fn affine_wasserstein_bound() {
        let (input, r) = shot_noise();
        let cfg = LabConfig {
            bootstrap: 50,
            ..LabConfig::default()
        };
        let refs = sample_reference(&input, &r, &endpoint_sampler(4000, 30.0), &cfg).unwrap();
        let ts = [0.5, 1.0, 2.0, 4.0];
        let rate = wasserstein_rate(ConvexModulus::power(1.0), 1.0, 5.0).unwrap();
        let curve = match estimate_wp_decay(
            &input,
            &r,
            5.0,
            &InitialLaw::Empirical(refs),
            1.0,
            &ts,
            4000,
            Some(&rate),
            &cfg,
        ) {
            Ok(c) => c,
            Err(LabError::NoiseFloorReached(c)) => *c,
            Err(e) => panic!("{e}"),
        };
        assert_eq!(curve.reference_exponent, Some(-1.0));
        for (k, &t) in ts.iter().enumerate() {
            assert!(curve.values[k] <= 2.0 * 5.0 * (-t).exp() + 3.0 * curve.stderr[k]);
        }
        assert!(curve.values[0] > curve.values[3]);
    }

    #[test]
    fn wasserstein_floor_shrinks_with_n() {
        assert_eq!(wasserstein_noise_floor(&[2.0; 10], 100, 1.0, 1), 0.0);
        let sample: Vec<f64> = (0..10_000).map(|i| i as f64 / 10_000.0).collect();
        let small = wasserstein_noise_floor(&sample, 100, 1.0, 1);
        let large = wasserstein_noise_floor(&sample, 10_000, 1.0, 1);
        assert!(small > 2.0 * large && large > 0.0, "{small} {large}");
    }

    #[test]
    fn heavy_input_fails_moment_condition() {
        let input = LevyInput::compound_poisson_pareto(1.0, 1.5).unwrap();
        assert!(wasserstein_moment_condition(&input, 1.0).is_ok());
        assert!(matches!(
            wasserstein_moment_condition(&input, 2.0),
            Err(LabError::MomentConditionFailed(_))
        ));
        let input = LevyInput::compound_poisson_pareto(1.0, 1.0).unwrap();
        assert!(wasserstein_moment_condition(&input, 1.0).is_err());
    }

    fn synthetic(values: Vec<f64>, times: Vec<f64>) -> DecayCurve {
        let mut c = DecayCurve {
            stderr: vec![0.0; values.len()],
            times,
            metric: Metric::Tv,
            values,
            noise_floor: None,
            excluded: Vec::new(),
            fit: None,
            reference_exponent: None,
        };
        c.fit_points().unwrap();
        c
    }

    #[test]
    fn comparison_paths() {
        let ts: Vec<f64> = (1..=12).map(|i| (i * 10) as f64).collect();
        let poly = synthetic(ts.iter().map(|t| 0.5 / t).collect(), ts.clone());
        let pred = RatePrediction::Polynomial {
            upper: Some(-1.0),
            lower: Some(-1.0),
            epsilon: 0.1,
        };
        let rep = compare_rates(&poly, &pred).unwrap();
        assert!(rep.pass && (rep.fitted + 1.0).abs() < 1e-9);
        let rep = compare_rates(
            &poly,
            &RatePrediction::Polynomial {
                upper: Some(-2.0),
                lower: None,
                epsilon: 0.1,
            },
        )
        .unwrap();
        assert!(!rep.pass);
        let rep = compare_rates(&poly, &RatePrediction::Geometric { rate: Some(0.5) }).unwrap();
        assert!(!rep.pass);
        let geo = synthetic(ts.iter().map(|t| (-0.05 * t).exp()).collect(), ts.clone());
        assert!(
            compare_rates(&geo, &RatePrediction::Geometric { rate: Some(0.05) })
                .unwrap()
                .pass
        );
    }

    #[test]
    fn predictions_from_certificates() {
        let (input, r) = mm1();
        let cfg = crate::lyapunov::LyapunovConfig::default();
        let cert = crate::lyapunov::build_certificate(&input, &r, &RateFunction::linear(0.5), &cfg).unwrap();
        assert!(matches!(
            RatePrediction::from_bounds(Some(&cert), None, &[1.0, 2.0], 0.1),
            RatePrediction::Geometric { .. }
        ));
        assert!(endpoint_horizon(&cert, 1.0, 1e4) <= 16.0);
        let burn = default_burn_in(&input, &r);
        assert!((burn - 20.0).abs() < 1e-6, "{burn}");
    }
}
