//! Event-driven simulation of `X(t) = x + A(t) - int_0^t r(X(s)) ds`.
//!
//! Between retained jumps the path follows `dx/dt = d - r(x)` exactly (closed
//! forms where the release family has one), where `d` is the compensating
//! drift of the discarded small jumps (zero for finite activity).

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::levy_input::{Activity, JumpStream, LevyInput, DEFAULT_TRUNCATION_EPS};
use crate::numerics::invert_monotone;
use crate::release_rate::ReleaseRate;

pub const DEFAULT_MERGE_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", content = "times", rename_all = "snake_case")]
pub enum Record {
    Endpoint,
    Grid(Vec<f64>),
    FullEvents,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PathConfig {
    pub x0: f64,
    pub horizon: f64,
    pub record: Record,
    pub seed: u64,
    #[serde(default = "default_eps")]
    pub truncation_eps: f64,
}

fn default_eps() -> f64 {
    DEFAULT_TRUNCATION_EPS
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SimError {
    #[error("invalid path configuration: {0}")]
    InvalidConfig(String),
}

impl PathConfig {
    pub fn endpoint(x0: f64, horizon: f64, seed: u64) -> Self {
        Self {
            x0,
            horizon,
            record: Record::Endpoint,
            seed,
            truncation_eps: DEFAULT_TRUNCATION_EPS,
        }
    }

    pub fn grid(x0: f64, times: Vec<f64>, seed: u64) -> Self {
        let horizon = times.iter().copied().fold(0.0, f64::max);
        Self {
            x0,
            horizon,
            record: Record::Grid(times),
            seed,
            truncation_eps: DEFAULT_TRUNCATION_EPS,
        }
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |m: &str| Err(SimError::InvalidConfig(m.to_string()));
        if !(self.horizon > 0.0 && self.horizon.is_finite()) {
            return bad("horizon must be positive and finite");
        }
        if !(self.x0 >= 0.0 && self.x0.is_finite()) {
            return bad("x0 must be a finite level >= 0");
        }
        if !(self.truncation_eps > 0.0) {
            return bad("truncation_eps must be positive");
        }
        if let Record::Grid(ts) = &self.record {
            if ts.windows(2).any(|w| w[1] < w[0]) {
                return bad("grid times must be sorted");
            }
            if ts.iter().any(|&t| !(0.0..=self.horizon).contains(&t)) {
                return bad("grid times must lie in [0, horizon]");
            }
        }
        Ok(())
    }

    fn record_times(&self) -> Vec<f64> {
        match &self.record {
            Record::Endpoint | Record::FullEvents => vec![self.horizon],
            Record::Grid(ts) => ts.clone(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JumpEvent {
    pub t: f64,
    pub size: f64,
    pub x_after: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathRecord {
    pub times: Vec<f64>,
    pub values: Vec<f64>,
    pub n_jumps: usize,
    pub compensator_used: bool,
    /// `horizon * int_0^eps u^2 nu(du)`; zero for finite activity
    pub bias_bound: f64,
    pub events: Vec<JumpEvent>,
}

impl PathRecord {
    pub fn endpoint(&self) -> f64 {
        *self.values.last().expect("at least one recorded time")
    }
}

fn bias_bound(input: &LevyInput, eps: f64, horizon: f64) -> f64 {
    match input.activity() {
        Activity::Finite => 0.0,
        Activity::Infinite => input.truncated_second_moment(eps) * horizon,
    }
}

/// Path number `index` of the ensemble seeded by `cfg.seed`.
pub fn simulate_indexed(input: &LevyInput, r: &ReleaseRate, cfg: &PathConfig, index: u64) -> PathRecord {
    let mut jumps = JumpStream::new(input, cfg.seed, index, cfg.truncation_eps);
    let d = jumps.compensator_drift();
    let full = cfg.record == Record::FullEvents;
    let grid = cfg.record_times();
    let mut times = Vec::with_capacity(grid.len() + 1);
    let mut values = Vec::with_capacity(grid.len() + 1);
    let mut events = Vec::new();
    if full {
        times.push(0.0);
        values.push(cfg.x0);
    }
    let mut next = 0usize;
    let (mut t, mut x) = (0.0, cfg.x0);
    let mut n_jumps = 0usize;
    loop {
        let (gap, size) = jumps.next_jump().unwrap_or((f64::INFINITY, 0.0));
        let t_jump = t + gap;
        while next < grid.len() && grid[next] < t_jump {
            if !full || grid[next] == cfg.horizon {
                times.push(grid[next]);
                values.push(r.flow(x, grid[next] - t, d));
            }
            next += 1;
        }
        if t_jump > cfg.horizon {
            break;
        }
        x = r.flow(x, gap, d) + size;
        t = t_jump;
        n_jumps += 1;
        if full {
            times.push(t);
            values.push(x);
            events.push(JumpEvent { t, size, x_after: x });
        }
    }
    PathRecord {
        times,
        values,
        n_jumps,
        compensator_used: d > 0.0,
        bias_bound: bias_bound(input, cfg.truncation_eps, cfg.horizon),
        events,
    }
}

pub fn simulate_path(input: &LevyInput, r: &ReleaseRate, cfg: &PathConfig) -> PathRecord {
    simulate_indexed(input, r, cfg, 0)
}

/// `n_paths` independent paths; path `i` uses stream `i` of `cfg.seed`.
pub fn simulate_ensemble(input: &LevyInput, r: &ReleaseRate, cfg: &PathConfig, n_paths: usize) -> Vec<PathRecord> {
    (0..n_paths as u64)
        .into_par_iter()
        .map(|i| simulate_indexed(input, r, cfg, i))
        .collect()
}

/// Endpoints of `n_paths` paths started from levels drawn by `start(i)`.
pub fn ensemble_endpoints<S>(input: &LevyInput, r: &ReleaseRate, cfg: &PathConfig, n_paths: usize, start: S) -> Vec<f64>
where
    S: Fn(u64) -> f64 + Sync,
{
    (0..n_paths as u64)
        .into_par_iter()
        .map(|i| {
            let c = PathConfig {
                x0: start(i),
                record: Record::Endpoint,
                ..cfg.clone()
            };
            simulate_indexed(input, r, &c, i).endpoint()
        })
        .collect()
}

/// Values of `n_paths` paths on a grid, row per path.
pub fn ensemble_grid(input: &LevyInput, r: &ReleaseRate, cfg: &PathConfig, n_paths: usize) -> Vec<Vec<f64>> {
    simulate_ensemble(input, r, cfg, n_paths)
        .into_iter()
        .map(|p| p.values)
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoupledRecord {
    pub upper: PathRecord,
    pub lower: PathRecord,
    pub times: Vec<f64>,
    /// `|X(t) - Z(t)|` on `times`
    pub distance: Vec<f64>,
    pub merge_time: Option<f64>,
}

/// Two paths from `x` and `y` driven by the same jumps (stream 0 of `cfg.seed`).
pub fn simulate_coupled(input: &LevyInput, r: &ReleaseRate, x: f64, y: f64, cfg: &PathConfig) -> CoupledRecord {
    simulate_coupled_indexed(input, r, x, y, cfg, 0, DEFAULT_MERGE_TOL)
}

pub fn simulate_coupled_indexed(
    input: &LevyInput,
    r: &ReleaseRate,
    x: f64,
    y: f64,
    cfg: &PathConfig,
    index: u64,
    merge_tol: f64,
) -> CoupledRecord {
    let mut jumps = JumpStream::new(input, cfg.seed, index, cfg.truncation_eps);
    let d = jumps.compensator_drift();
    let grid = cfg.record_times();
    let mut va = Vec::with_capacity(grid.len());
    let mut vb = Vec::with_capacity(grid.len());
    let (mut t, mut a, mut b) = (0.0, x, y);
    let mut merged = (a - b).abs() < merge_tol;
    let mut merge_time = merged.then_some(0.0);
    let mut n_jumps = 0usize;
    let mut next = 0usize;
    loop {
        let (gap, size) = jumps.next_jump().unwrap_or((f64::INFINITY, 0.0));
        let t_jump = t + gap;
        while next < grid.len() && grid[next] < t_jump {
            let dt = grid[next] - t;
            let fa = r.flow(a, dt, d);
            let fb = if merged { fa } else { r.flow(b, dt, d) };
            va.push(fa);
            vb.push(fb);
            if !merged && (fa - fb).abs() < merge_tol {
                merged = true;
                merge_time = Some(grid[next]);
            }
            next += 1;
        }
        if t_jump > cfg.horizon {
            break;
        }
        a = r.flow(a, gap, d) + size;
        b = if merged { a } else { r.flow(b, gap, d) + size };
        t = t_jump;
        n_jumps += 1;
        if !merged && (a - b).abs() < merge_tol {
            merged = true;
            merge_time = Some(t);
            b = a;
        }
    }
    let distance = va.iter().zip(&vb).map(|(p, q)| (p - q).abs()).collect();
    let mk = |values: Vec<f64>| PathRecord {
        times: grid.clone(),
        values,
        n_jumps,
        compensator_used: d > 0.0,
        bias_bound: bias_bound(input, cfg.truncation_eps, cfg.horizon),
        events: Vec::new(),
    };
    CoupledRecord {
        upper: mk(va),
        lower: mk(vb),
        times: grid.clone(),
        distance,
        merge_time,
    }
}

/// Exact time spent above each level, per batch, along one long path.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Occupation {
    pub levels: Vec<f64>,
    pub batch_length: f64,
    /// `fractions[b][k]`: fraction of batch `b` spent strictly above `levels[k]`
    pub fractions: Vec<Vec<f64>>,
    pub n_jumps: usize,
}

/// Time in `[0, dt]` spent above `u` by the monotone flow from `x0` reaching `x1`.
fn time_above(r: &ReleaseRate, x0: f64, x1: f64, dt: f64, d: f64, u: f64) -> f64 {
    if x0 > u && x1 > u {
        return dt;
    }
    if x0 <= u && x1 <= u {
        return 0.0;
    }
    // exactly one crossing; find it on the monotone flow
    let decreasing = x1 < x0;
    let closed = if decreasing && d == 0.0 {
        r.flow_time_integral(u, x0).ok().filter(|t| *t <= dt)
    } else {
        None
    };
    let tau = closed.unwrap_or_else(|| {
        let sign = if decreasing { -1.0 } else { 1.0 };
        invert_monotone(|s| sign * r.flow(x0, s, d), sign * u, 0.0, dt).unwrap_or(0.5 * dt)
    });
    if decreasing {
        tau
    } else {
        dt - tau
    }
}

/// Occupation fractions above `levels` over `n_batches` consecutive batches
/// of `batch_length` after `burn_in`, along path `index` of `seed`.
#[allow(clippy::too_many_arguments)]
pub fn simulate_occupation(
    input: &LevyInput,
    r: &ReleaseRate,
    x0: f64,
    burn_in: f64,
    batch_length: f64,
    n_batches: usize,
    levels: &[f64],
    seed: u64,
    truncation_eps: f64,
) -> Occupation {
    let mut jumps = JumpStream::new(input, seed, 0, truncation_eps);
    let d = jumps.compensator_drift();
    let end = burn_in + batch_length * n_batches as f64;
    let mut acc = vec![vec![0.0; levels.len()]; n_batches];
    let (mut t, mut x) = (0.0, x0);
    let mut n_jumps = 0usize;
    // batch b covers [edge(b), edge(b + 1)); edge(0) is the end of burn-in
    let edge = |b: usize| burn_in + b as f64 * batch_length;
    let credit = |b: Option<usize>, x_start: f64, dt: f64, x_end: f64, acc: &mut Vec<Vec<f64>>| {
        if let Some(b) = b.filter(|&b| b < n_batches) {
            for (k, &u) in levels.iter().enumerate() {
                acc[b][k] += time_above(r, x_start, x_end, dt, d, u);
            }
        }
    };
    // index of the batch containing the current time, None during burn-in
    let mut batch: Option<usize> = if burn_in > 0.0 { None } else { Some(0) };
    while t < end {
        let (gap, size) = jumps.next_jump().unwrap_or((f64::INFINITY, 0.0));
        let t_jump = (t + gap).min(end);
        // walk the flow segment, cutting it at batch boundaries
        let mut s = t;
        let mut xs = x;
        while s < t_jump {
            let boundary = edge(batch.map_or(0, |b| b + 1));
            let stop = boundary.min(t_jump);
            let xe = r.flow(xs, stop - s, d);
            credit(batch, xs, stop - s, xe, &mut acc);
            xs = xe;
            s = stop;
            if stop == boundary {
                batch = Some(batch.map_or(0, |b| b + 1));
            }
        }
        x = xs;
        t = t_jump;
        if t < end {
            x += size;
            n_jumps += 1;
        }
    }
    Occupation {
        levels: levels.to_vec(),
        batch_length,
        fractions: acc
            .into_iter()
            .map(|row| row.into_iter().map(|v| v / batch_length).collect())
            .collect(),
        n_jumps,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::ode_flow;

    fn cpp_exp(rate: f64) -> LevyInput {
        LevyInput::compound_poisson_exp(rate, 1.0).unwrap()
    }

    #[test]
    fn pure_drain() {
        let rec = simulate_path(
            &LevyInput::no_input(),
            &ReleaseRate::constant(2.0),
            &PathConfig::endpoint(3.0, 2.0, 1),
        );
        assert_eq!(rec.endpoint(), 0.0);
        assert_eq!(rec.n_jumps, 0);
        let r = ReleaseRate::power(1.0, 0.5);
        let rec = simulate_path(&LevyInput::no_input(), &r, &PathConfig::grid(2.0, vec![0.5, 1.0], 1));
        assert_eq!(rec.values, vec![ode_flow(&r, 2.0, 0.5), ode_flow(&r, 2.0, 1.0)]);
    }

    #[test]
    fn config_validation() {
        assert!(PathConfig::endpoint(0.0, 0.0, 1).validate().is_err());
        assert!(PathConfig::grid(0.0, vec![2.0, 1.0], 1).validate().is_err());
        let mut c = PathConfig::grid(0.0, vec![1.0, 2.0], 1);
        c.horizon = 1.5;
        assert!(c.validate().is_err());
        assert!(PathConfig::grid(1.0, vec![0.0, 1.0, 2.0], 1).validate().is_ok());
    }

    #[test]
    fn shot_noise_mean() {
        // m(t) = (lambda/mu)(1 - e^{-t}) for r(u) = u
        let cfg = PathConfig::endpoint(0.0, 1.0, 11);
        let xs: Vec<f64> = simulate_ensemble(&cpp_exp(1.0), &ReleaseRate::affine(0.0, 1.0), &cfg, 100_000)
            .iter()
            .map(|p| p.endpoint())
            .collect();
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
        let target = 1.0 - (-1.0f64).exp();
        assert!((mean - target).abs() < 3.0 * (var / n).sqrt(), "{mean} vs {target}");
    }

    #[test]
    fn full_events_are_consistent() {
        let cfg = PathConfig {
            record: Record::FullEvents,
            ..PathConfig::endpoint(1.0, 20.0, 3)
        };
        let rec = simulate_path(&cpp_exp(1.0), &ReleaseRate::constant(2.0), &cfg);
        assert_eq!(rec.events.len(), rec.n_jumps);
        assert_eq!(rec.times.len(), rec.n_jumps + 2);
        assert!(rec.times.windows(2).all(|w| w[1] >= w[0]));
        assert!(rec.values.iter().all(|&v| v >= 0.0));
        assert!(!rec.compensator_used);
        for e in &rec.events {
            assert!(e.x_after >= e.size);
        }
    }

    #[test]
    fn infinite_activity_uses_compensator() {
        let g = LevyInput::gamma(1.0, 1.0).unwrap();
        let rec = simulate_path(&g, &ReleaseRate::affine(0.0, 1.0), &PathConfig::grid(0.0, vec![1.0, 2.0], 5));
        assert!(rec.compensator_used);
        assert!(rec.bias_bound > 0.0 && rec.bias_bound < 1e-7);
    }

    #[test]
    fn coupled_affine_distance_is_exact() {
        let times = vec![0.5, 1.0, 2.0, 4.0];
        let cfg = PathConfig::grid(0.0, times.clone(), 9);
        for i in 0..20 {
            let c = simulate_coupled_indexed(
                &cpp_exp(1.0),
                &ReleaseRate::affine(0.0, 1.0),
                5.0,
                0.0,
                &cfg,
                i,
                DEFAULT_MERGE_TOL,
            );
            for (t, d) in times.iter().zip(&c.distance) {
                assert!((d - 5.0 * (-t).exp()).abs() < 1e-9, "t={t}: {d}");
            }
        }
    }

    #[test]
    fn coupled_identical_and_draining() {
        let cfg = PathConfig::grid(0.0, vec![0.1, 0.3, 0.5, 0.7, 1.0], 2);
        let c = simulate_coupled(&cpp_exp(1.0), &ReleaseRate::constant(2.0), 2.0, 2.0, &cfg);
        assert!(c.distance.iter().all(|&d| d == 0.0));
        assert_eq!(c.merge_time, Some(0.0));
        let c = simulate_coupled(&LevyInput::no_input(), &ReleaseRate::constant(2.0), 1.0, 0.0, &cfg);
        assert!(c.distance.windows(2).all(|w| w[1] <= w[0]));
        assert_eq!(c.distance[2], 0.0);
        assert_eq!(c.merge_time, Some(0.5));
    }

    #[test]
    fn coupling_preserves_order() {
        let times: Vec<f64> = (1..=40).map(|i| i as f64 * 0.25).collect();
        let cfg = PathConfig::grid(0.0, times, 21);
        let g = LevyInput::gamma(2.0, 1.0).unwrap();
        for (input, r) in [
            (cpp_exp(1.0), ReleaseRate::constant(2.0)),
            (cpp_exp(2.0), ReleaseRate::power(1.0, 2.0)),
            (g, ReleaseRate::power_smoothed(1.0, 0.5)),
        ] {
            for i in 0..10 {
                let c = simulate_coupled_indexed(&input, &r, 3.0, 1.0, &cfg, i, DEFAULT_MERGE_TOL);
                for (a, b) in c.upper.values.iter().zip(&c.lower.values) {
                    assert!(a >= b, "{r}: {a} < {b}");
                }
            }
        }
    }

    #[test]
    fn ensemble_is_deterministic_and_indexed() {
        let cfg = PathConfig::grid(1.0, vec![1.0, 5.0], 77);
        let input = cpp_exp(1.0);
        let r = ReleaseRate::constant(2.0);
        let a = simulate_ensemble(&input, &r, &cfg, 64);
        let b = simulate_ensemble(&input, &r, &cfg, 64);
        assert_eq!(a, b);
        assert_eq!(a[0], simulate_path(&input, &r, &cfg));
        assert_eq!(simulate_ensemble(&input, &r, &cfg, 1)[0], a[0]);
    }

    #[test]
    fn disjoint_seeds_agree() {
        let input = cpp_exp(1.0);
        let r = ReleaseRate::constant(2.0);
        let stats = |seed: u64| {
            let xs = ensemble_endpoints(&input, &r, &PathConfig::endpoint(0.0, 10.0, seed), 20_000, |_| 0.0);
            let n = xs.len() as f64;
            let m = xs.iter().sum::<f64>() / n;
            let v = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0);
            (m, v / n)
        };
        let (m1, v1) = stats(1);
        let (m2, v2) = stats(2);
        assert!((m1 - m2).abs() < 6.0 * (v1 + v2).sqrt());
    }

    #[test]
    fn occupation_of_a_deterministic_drain() {
        // x(t) = 4 - 2t on [0, 2]: above u = 1 until t = 1.5
        let occ = simulate_occupation(
            &LevyInput::no_input(),
            &ReleaseRate::constant(2.0),
            4.0,
            0.0,
            1.0,
            2,
            &[1.0, 3.0, 5.0],
            1,
            1e-4,
        );
        assert_eq!(occ.fractions[0], vec![1.0, 0.5, 0.0]);
        assert!((occ.fractions[1][0] - 0.5).abs() < 1e-12);
        assert_eq!(occ.fractions[1][1], 0.0);
        // shot noise decay crossing via bisection path
        let r = ReleaseRate::power(1.0, 2.0);
        let occ = simulate_occupation(&LevyInput::no_input(), &r, 1.0, 0.0, 1.0, 1, &[0.5], 1, 1e-4);
        // x(t) = 1/(1+t) hits 0.5 at t = 1
        assert!((occ.fractions[0][0] - 1.0).abs() < 1e-9);
        let occ = simulate_occupation(&LevyInput::no_input(), &r, 1.0, 0.0, 2.0, 1, &[0.5], 1, 1e-4);
        assert!((occ.fractions[0][0] - 0.5).abs() < 1e-9);
    }

    #[test]
    fn batch_edges_off_the_float_grid() {
        // burn_in + k * batch_length rounds; the walk used to stall on such edges
        let input = cpp_exp(1.0);
        let occ = simulate_occupation(
            &input,
            &ReleaseRate::affine(0.5, 1.0),
            0.0,
            83.00158137500496,
            10.0,
            100,
            &[1.0],
            3,
            1e-4,
        );
        assert_eq!(occ.fractions.len(), 100);
        assert!(occ.fractions.iter().all(|f| (0.0..=1.0).contains(&f[0])));
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(24))]

            #[test]
            fn paths_are_non_negative(seed in 0u64..1000, x0 in 0.0f64..5.0, beta in 0.3f64..2.5) {
                let times: Vec<f64> = (1..=20).map(|i| i as f64 * 0.5).collect();
                let cfg = PathConfig::grid(x0, times, seed);
                let r = ReleaseRate::power_smoothed(1.0, beta);
                let rec = simulate_path(&LevyInput::gamma(1.0, 2.0).unwrap(), &r, &cfg);
                prop_assert!(rec.values.iter().all(|&v| v >= 0.0));
                let rec = simulate_path(&cpp_exp(1.0), &r, &cfg);
                prop_assert!(rec.values.iter().all(|&v| v >= 0.0));
            }

            #[test]
            fn values_non_increasing_between_jumps(seed in 0u64..1000) {
                let times: Vec<f64> = (1..=200).map(|i| i as f64 * 0.05).collect();
                let cfg = PathConfig::grid(2.0, times.clone(), seed);
                let input = cpp_exp(0.5);
                let rec = simulate_path(&input, &ReleaseRate::affine(0.5, 1.0), &cfg);
                let ev = simulate_path(&input, &ReleaseRate::affine(0.5, 1.0), &PathConfig { record: Record::FullEvents, ..cfg.clone() });
                let jump_times: Vec<f64> = ev.events.iter().map(|e| e.t).collect();
                for (k, w) in rec.values.windows(2).enumerate() {
                    let (t0, t1) = (times[k], times[k + 1]);
                    if !jump_times.iter().any(|&s| s > t0 && s <= t1) {
                        prop_assert!(w[1] <= w[0]);
                    }
                }
            }
        }
    }
}
