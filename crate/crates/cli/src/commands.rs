//! One function per subcommand. Each writes its artifacts and returns a
//! one-line summary plus whether a hypothesis or criterion failed.

use std::fs;
use std::path::Path;

use anyhow::{anyhow, Result};
use serde::Serialize;
use serde_json::{json, Value};

use storagelab::classifier::{classify, ergodicity_row, ClassifierConfig, ErgodicityRow, RegimeReport, Verdict};
use storagelab::ergodicity_lab::{
    compare_rates, estimate_tail, estimate_tv_decay, estimate_wp_decay, exact_stationary_tail, fit_tail, sample_reference,
    wasserstein_p, DecayCurve, InitialLaw, LabConfig, LabError, RatePrediction, ReferenceSampler, TailMethod, DEFAULT_BINS,
};
use storagelab::lyapunov::{
    build_certificate, check_wasserstein_contraction, contraction_grid, default_h_exponent, tail_lower, tail_upper,
    tv_lower_rate, wasserstein_rate, DriftCertificate, LowerScale, LyapunovConfig, LyapunovError, RateFunction, TailEnvelope,
    TvLowerBound, UpperMode, WassersteinRate,
};
use storagelab::numerics::logspace;
use storagelab::simulator::{simulate_ensemble, PathConfig, Record};

use crate::output::{Cell, Csv, OutDir};
use crate::scenario::Scenario;

/// Whether the run met its hypotheses, plus a summary for stdout.
pub struct Outcome {
    pub ok: bool,
    pub summary: String,
}

impl Outcome {
    fn ok(summary: impl Into<String>) -> Self {
        Self {
            ok: true,
            summary: summary.into(),
        }
    }

    fn failed(summary: impl Into<String>) -> Self {
        Self {
            ok: false,
            summary: summary.into(),
        }
    }
}

fn lyapunov_config(s: &Scenario) -> LyapunovConfig {
    LyapunovConfig {
        probe_grid: s.grids.probe_u.clone(),
        decision_margin: s.tolerances.decision_margin,
        epsilon: s.tolerances.epsilon,
        seed: s.seed,
        ..LyapunovConfig::default()
    }
}

fn lab_config(s: &Scenario) -> LabConfig {
    LabConfig {
        seed: s.seed,
        bootstrap: s.budgets.bootstrap,
        truncation_eps: s.input.truncation_eps,
    }
}

fn classifier_config(s: &Scenario) -> ClassifierConfig {
    lyapunov_config(s).classifier()
}

fn regime(s: &Scenario) -> Result<(RegimeReport, ErgodicityRow)> {
    let (input, r) = (s.input()?, s.release()?);
    let report = classify(&input, &r, &classifier_config(s));
    let row = ergodicity_row(&input, &r, &report);
    Ok((report, row))
}

pub fn classify_cmd(s: &Scenario, out: &OutDir) -> Result<Outcome> {
    let (report, row) = regime(s)?;
    let mut csv = Csv::new(&["criterion", "u", "value"]);
    for ev in &report.evidence {
        for (u, v) in ev.probes.iter().zip(&ev.values) {
            csv.row(vec![ev.name.as_str().into(), (*u).into(), (*v).into()]);
        }
    }
    out.csv("classify.csv", &csv)?;
    out.json("classify.json", &json!({"scenario": s.name, "report": report, "row": row}))?;
    Ok(Outcome::ok(format!("{} (uniform: {})", report.label, report.uniform)))
}

fn certificate(s: &Scenario, phi: &RateFunction) -> Result<std::result::Result<DriftCertificate, LyapunovError>> {
    Ok(build_certificate(&s.input()?, &s.release()?, phi, &lyapunov_config(s)))
}

fn require_phi(s: &Scenario) -> Result<RateFunction> {
    s.rate_function()?.ok_or_else(|| anyhow!("scenario has no phi; pass --phi"))
}

pub fn certify_cmd(s: &Scenario, out: &OutDir) -> Result<Outcome> {
    let phi = require_phi(s)?;
    let cert = match certificate(s, &phi)? {
        Ok(c) => c,
        Err(e) => {
            out.json("certificate.json", &json!({"scenario": s.name, "error": e.to_string()}))?;
            return Ok(Outcome::failed(format!("no certificate: {e}")));
        }
    };
    let mut csv = Csv::new(&["u", "drift_ratio"]);
    for (u, q) in cert.probes.iter().zip(&cert.ratios) {
        csv.row(vec![(*u).into(), (*q).into()]);
    }
    out.csv("certificate.csv", &csv)?;
    let envelope = match s.phi {
        Some(phi) => envelope_json(
            &tail_upper(&s.input()?, &s.release()?, &UpperMode::FromRate { phi }, &lyapunov_config(s)),
            &envelope_grid(),
        ),
        None => Value::Null,
    };
    out.json(
        "certificate.json",
        &json!({"scenario": s.name, "certificate": cert, "tail_envelope": envelope}),
    )?;
    let line = format!(
        "margin {:.9}, C3 {}, valid {}, tv rate {:?}",
        cert.drift_margin, cert.condition_c3, cert.valid, cert.tv_rate
    );
    Ok(if cert.valid {
        Outcome::ok(line)
    } else {
        Outcome::failed(line)
    })
}

fn lower_bound(s: &Scenario) -> Result<std::result::Result<TvLowerBound, LyapunovError>> {
    let (input, r) = (s.input()?, s.release()?);
    let cfg = lyapunov_config(s);
    let env = tail_lower(&input, &r, cfg.epsilon, LowerScale::PolyQuotient, &cfg)
        .or_else(|_| tail_lower(&input, &r, cfg.epsilon, LowerScale::LogScale, &cfg));
    Ok(env.and_then(|env| tv_lower_rate(&input, &r, default_h_exponent(&input), s.budgets.x0, &env, &cfg)))
}

fn lower_fit_grid() -> Vec<f64> {
    logspace(1e4, 1e10, 25)
}

fn envelope_grid() -> Vec<f64> {
    logspace(1.0, 1e6, 25)
}

fn envelope_json(env: &std::result::Result<TailEnvelope, LyapunovError>, grid: &[f64]) -> Value {
    match env {
        Ok(e) => json!(e.summary(grid)),
        Err(e) => json!({"error": e.to_string()}),
    }
}

pub fn predict_cmd(s: &Scenario, out: &OutDir) -> Result<Outcome> {
    let (input, r) = (s.input()?, s.release()?);
    let cfg = lyapunov_config(s);
    let mode = match s.phi {
        Some(phi) => UpperMode::FromRate { phi },
        None => UpperMode::SubGeometric { epsilon: cfg.epsilon },
    };
    let upper = tail_upper(&input, &r, &mode, &cfg);
    let lower = tail_lower(&input, &r, cfg.epsilon, LowerScale::PolyQuotient, &cfg)
        .or_else(|_| tail_lower(&input, &r, cfg.epsilon, LowerScale::LogScale, &cfg));
    let grid = envelope_grid();
    let cert = s.rate_function()?.map(|phi| certificate(s, &phi)).transpose()?;
    let cert = cert.and_then(|c| c.ok()).filter(|c| c.valid);
    let lb = lower_bound(s)?;
    let mut csv = Csv::new(&["u_or_t", "value", "kind"]);
    for (kind, env) in [("tail_upper", &upper), ("tail_lower", &lower)] {
        if let Ok(e) = env {
            for &u in &grid {
                csv.row(vec![u.into(), e.value(u).into(), kind.into()]);
            }
        }
    }
    if let Some(c) = &cert {
        for &t in &s.grids.t_grid {
            csv.row(vec![t.into(), (1.0 / c.predicted_tv_rate(t)).into(), "tv_upper_rate".into()]);
        }
    }
    if let Ok(b) = &lb {
        for &t in &s.grids.t_grid {
            csv.row(vec![t.into(), b.eval(t).into(), "tv_lower".into()]);
        }
    }
    out.csv("predict.csv", &csv)?;
    let lower_exponent = lb
        .as_ref()
        .ok()
        .and_then(|b| b.fitted_exponent(&lower_fit_grid()).ok())
        .map(|f| f.exponent);
    let report = json!({
        "scenario": s.name,
        "tail_upper": envelope_json(&upper, &grid),
        "tail_lower": envelope_json(&lower, &grid),
        "tv_upper_exponent": cert.as_ref().map(|c| c.tv_rate.decay_exponent()),
        "tv_lower_exponent": lower_exponent,
        "tv_lower_error": lb.as_ref().err().map(|e| e.to_string()),
    });
    out.json("predict.json", &report)?;
    let any = upper.is_ok() || lower.is_ok();
    let line = format!(
        "tail upper {}, tail lower {}, tv lower exponent {}",
        upper
            .as_ref()
            .map_or("n/a".into(), |e| format!("{:.3}", e.asymptotic_exponent())),
        lower
            .as_ref()
            .map_or("n/a".into(), |e| format!("{:.3}", e.asymptotic_exponent())),
        lower_exponent.map_or("n/a".into(), |e| format!("{e:.3}")),
    );
    Ok(if any { Outcome::ok(line) } else { Outcome::failed(line) })
}

pub fn simulate_cmd(s: &Scenario, out: &OutDir, events: bool) -> Result<Outcome> {
    let (input, r) = (s.input()?, s.release()?);
    let record = if events {
        Record::FullEvents
    } else {
        Record::Grid(s.grids.t_grid.clone())
    };
    let horizon = s.grids.t_grid.last().copied().unwrap_or(s.budgets.horizon);
    let pc = PathConfig {
        x0: s.budgets.x0,
        horizon,
        record,
        seed: s.seed,
        truncation_eps: s.input.truncation_eps,
    };
    pc.validate()?;
    let paths = simulate_ensemble(&input, &r, &pc, s.budgets.n_paths);
    if events {
        let mut csv = Csv::new(&["path_id", "t", "jump_size", "x_after"]);
        for (i, p) in paths.iter().enumerate() {
            for e in &p.events {
                csv.row(vec![i.to_string().into(), e.t.into(), e.size.into(), e.x_after.into()]);
            }
        }
        out.csv("events.csv", &csv)?;
    } else {
        let mut csv = Csv::new(&["path_id", "t", "x"]);
        for (i, p) in paths.iter().enumerate() {
            for (&t, &x) in p.times.iter().zip(&p.values) {
                csv.row(vec![i.to_string().into(), t.into(), x.into()]);
            }
        }
        out.csv("paths.csv", &csv)?;
    }
    let jumps: usize = paths.iter().map(|p| p.n_jumps).sum();
    let bias = paths.first().map_or(0.0, |p| p.bias_bound);
    out.json(
        "simulate.json",
        &json!({"scenario": s.name, "n_paths": paths.len(), "horizon": horizon, "total_jumps": jumps, "truncation_bias_bound": bias}),
    )?;
    Ok(Outcome::ok(format!("{} paths, {jumps} jumps", paths.len())))
}

fn lab_failure(e: LabError) -> Result<Outcome> {
    match e {
        LabError::NotStationaryRegime(_) | LabError::MomentConditionFailed(_) | LabError::NoiseFloorReached(_) => {
            Ok(Outcome::failed(e.to_string()))
        }
        other => Err(other.into()),
    }
}

pub fn tail_cmd(s: &Scenario, out: &OutDir) -> Result<Outcome> {
    let (input, r) = (s.input()?, s.release()?);
    let method = TailMethod::LongRunTimeAverage {
        burn_in: None,
        thinning: s.budgets.thinning,
    };
    let est = match estimate_tail(&input, &r, method, &s.grids.u_grid, s.budgets.samples, &lab_config(s)) {
        Ok(e) => e,
        Err(e) => return lab_failure(e),
    };
    let mut csv = Csv::new(&["u_or_t", "estimate", "stderr", "reference"]);
    for (j, &u) in est.levels.iter().enumerate() {
        csv.row(vec![
            u.into(),
            est.pi_bar_hat[j].into(),
            est.stderr[j].into(),
            exact_stationary_tail(&input, &r, u).into(),
        ]);
    }
    out.csv("tail.csv", &csv)?;
    let lo = est.levels.iter().copied().find(|&u| u > 0.0).unwrap_or(1.0);
    let hi = est.levels.last().copied().unwrap_or(lo);
    let fit = fit_tail(&est, lo, hi).ok();
    out.json("tail.json", &json!({"scenario": s.name, "estimate": est, "fit": fit}))?;
    Ok(Outcome::ok(match fit {
        Some(f) => format!(
            "{} levels; power slope {:.3}, exponential slope {:.3}, preferred {:?}",
            est.levels.len(),
            f.power.exponent,
            f.exponential.exponent,
            f.scale
        ),
        None => format!("{} levels; no fit", est.levels.len()),
    }))
}

/// Refuses scenarios without a stationary law to converge to.
fn stationary_gate(s: &Scenario) -> Result<Option<Outcome>> {
    let (report, _) = regime(s)?;
    Ok(match report.verdict {
        Verdict::Transient { .. } | Verdict::NullRecurrent => Some(Outcome::failed(format!(
            "no stationary law to converge to (verdict {})",
            report.label
        ))),
        _ => None,
    })
}

fn reference(s: &Scenario) -> Result<Vec<f64>> {
    let per_chain = 100.min(s.budgets.samples).max(1);
    let sampler = ReferenceSampler {
        chains: (s.budgets.samples / per_chain).max(1),
        burn_in: s.budgets.horizon,
        spacing: s.budgets.thinning,
        per_chain,
        x0: 0.0,
    };
    Ok(sample_reference(&s.input()?, &s.release()?, &sampler, &lab_config(s))?)
}

fn curve_csv(curve: &DecayCurve, reference: impl Fn(f64) -> Option<f64>) -> Csv {
    let mut csv = Csv::new(&["u_or_t", "estimate", "stderr", "reference"]);
    for (k, &t) in curve.times.iter().enumerate() {
        csv.row(vec![
            t.into(),
            curve.values[k].into(),
            curve.stderr[k].into(),
            reference(t).into(),
        ]);
    }
    csv
}

fn valid_certificate(s: &Scenario) -> Result<Option<DriftCertificate>> {
    Ok(match s.rate_function()? {
        Some(phi) => certificate(s, &phi)?.ok().filter(|c| c.valid),
        None => None,
    })
}

fn tv_curve(s: &Scenario) -> Result<std::result::Result<DecayCurve, (DecayCurve, String)>> {
    let refs = reference(s)?;
    let res = estimate_tv_decay(
        &s.input()?,
        &s.release()?,
        s.budgets.x0,
        &s.grids.t_grid,
        s.budgets.n_paths,
        DEFAULT_BINS,
        &refs,
        &lab_config(s),
    );
    match res {
        Ok(c) => Ok(Ok(c)),
        Err(LabError::NoiseFloorReached(c)) => Ok(Err((*c, "every usable point lies below twice the noise floor".into()))),
        Err(e) => Err(e.into()),
    }
}

pub fn converge_tv_cmd(s: &Scenario, out: &OutDir) -> Result<Outcome> {
    if let Some(refusal) = stationary_gate(s)? {
        return Ok(refusal);
    }
    let cert = valid_certificate(s)?;
    let (curve, problem) = match tv_curve(s)? {
        Ok(c) => (c, None),
        Err((c, m)) => (c, Some(m)),
    };
    out.csv(
        "tv.csv",
        &curve_csv(&curve, |t| cert.as_ref().map(|c| 1.0 / c.predicted_tv_rate(t))),
    )?;
    out.json("tv.json", &json!({"scenario": s.name, "curve": curve, "problem": problem}))?;
    Ok(match problem {
        None => Outcome::ok(format!("TV fitted exponent {:.3}", curve.exponent().unwrap_or(f64::NAN))),
        Some(m) => Outcome::failed(m),
    })
}

fn contraction_rate(s: &Scenario, kappa: f64) -> Result<Option<WassersteinRate>> {
    let Some(spec) = s.beta_modulus else { return Ok(None) };
    let (modulus, gamma) = spec.modulus();
    let rep = check_wasserstein_contraction(&s.release()?, &modulus, gamma, &contraction_grid())?;
    if !rep.pass {
        return Ok(None);
    }
    Ok(Some(wasserstein_rate(modulus, gamma, kappa.max(1e-12))?))
}

pub fn converge_wp_cmd(s: &Scenario, out: &OutDir, p: f64) -> Result<Outcome> {
    if let Some(refusal) = stationary_gate(s)? {
        return Ok(refusal);
    }
    let (input, r) = (s.input()?, s.release()?);
    let refs = reference(s)?;
    let w0 = wasserstein_p(&[s.budgets.x0], &refs, p);
    let rate = contraction_rate(s, w0)?;
    let res = estimate_wp_decay(
        &input,
        &r,
        s.budgets.x0,
        &InitialLaw::Empirical(refs),
        p,
        &s.grids.t_grid,
        s.budgets.n_paths,
        rate.as_ref(),
        &lab_config(s),
    );
    let (curve, problem) = match res {
        Ok(c) => (c, None),
        Err(LabError::NoiseFloorReached(c)) => (*c, Some("fewer than two positive points to fit".to_string())),
        Err(e) => return lab_failure(e),
    };
    // (W_p(mu, nu) / kappa + 1) B_kappa^{-1}(Gamma t) with kappa = W_p(mu, nu)
    let bound = |t: f64| rate.as_ref().map(|w| 2.0 * w.eval(t));
    let floor = curve.noise_floor.unwrap_or(0.0);
    out.csv("wp.csv", &curve_csv(&curve, bound))?;
    out.json(
        "wp.json",
        &json!({"scenario": s.name, "p": p, "initial_distance": w0, "contraction": rate.is_some(), "curve": curve, "problem": problem}),
    )?;
    let within = curve
        .times
        .iter()
        .enumerate()
        .all(|(k, &t)| bound(t).is_none_or(|b| curve.values[k] <= b + 3.0 * curve.stderr[k] + floor));
    let line = format!(
        "W_{p} from {:.3} at t=0; bound honoured: {within}; fitted {}",
        w0,
        curve.fit.map_or("none".into(), |f| format!("{:?} scale", f.scale))
    );
    Ok(if within && problem.is_none() {
        Outcome::ok(line)
    } else {
        Outcome::failed(line)
    })
}

pub fn compare_cmd(s: &Scenario, out: &OutDir) -> Result<Outcome> {
    if let Some(refusal) = stationary_gate(s)? {
        return Ok(refusal);
    }
    let cert = valid_certificate(s)?;
    let lb = lower_bound(s)?.ok();
    let prediction = RatePrediction::from_bounds(cert.as_ref(), lb.as_ref(), &lower_fit_grid(), s.tolerances.epsilon);
    let curve = match tv_curve(s)? {
        Ok(c) => c,
        Err((c, m)) => {
            out.csv("compare.csv", &curve_csv(&c, |_| None))?;
            out.json(
                "compare.json",
                &json!({"scenario": s.name, "prediction": prediction, "problem": m}),
            )?;
            return Ok(Outcome::failed(m));
        }
    };
    let verdict = compare_rates(&curve, &prediction)?;
    out.csv("compare.csv", &curve_csv(&curve, |t| lb.as_ref().map(|b| b.eval(t))))?;
    out.json(
        "compare.json",
        &json!({"scenario": s.name, "prediction": prediction, "verdict": verdict, "curve": curve}),
    )?;
    let line = format!(
        "{}: fitted {:.3} +/- {:.3}, upper {:?}, lower {:?}, tol {:.3} ({})",
        if verdict.pass { "PASS" } else { "FAIL" },
        verdict.fitted,
        verdict.fitted_stderr,
        verdict.predicted_upper,
        verdict.predicted_lower,
        verdict.tolerance,
        verdict.note
    );
    Ok(if verdict.pass {
        Outcome::ok(line)
    } else {
        Outcome::failed(line)
    })
}

#[derive(Serialize)]
struct ReportRow<'a> {
    scenario: &'a str,
    regime: &'a str,
    rate: String,
    tail: String,
}

/// Aggregates earlier artifacts of the scenario next to a fresh ergodicity row.
pub fn report_cmd(s: &Scenario, root: &Path, out: &OutDir) -> Result<Outcome> {
    let (report, row) = regime(s)?;
    let mut artifacts = serde_json::Map::new();
    let base = root.join(&s.name);
    if let Ok(entries) = fs::read_dir(&base) {
        let mut dirs: Vec<_> = entries.flatten().map(|e| e.path()).filter(|p| p.is_dir()).collect();
        dirs.sort();
        for dir in dirs {
            let name = dir.file_name().unwrap_or_default().to_string_lossy().to_string();
            if name == "report" {
                continue;
            }
            let mut files: Vec<_> = fs::read_dir(&dir)?.flatten().map(|e| e.path()).collect();
            files.sort();
            for f in files.into_iter().filter(|f| f.extension().is_some_and(|e| e == "json")) {
                let v: Value = serde_json::from_str(&fs::read_to_string(&f)?)?;
                let key = format!("{name}/{}", f.file_name().unwrap_or_default().to_string_lossy());
                artifacts.insert(key, v);
            }
        }
    }
    let line = ReportRow {
        scenario: &s.name,
        regime: &report.label,
        rate: row.rate_label.clone(),
        tail: row.tail_label.clone(),
    };
    let mut csv = Csv::new(&["scenario", "regime", "tv_rate", "stationary_tail"]);
    csv.row(vec![
        Cell::Text(s.name.clone()),
        report.label.as_str().into(),
        row.rate_label.as_str().into(),
        row.tail_label.as_str().into(),
    ]);
    out.csv("report.csv", &csv)?;
    out.json(
        "report.json",
        &json!({"row": line, "uniform": report.uniform, "scenario_config": s, "artifacts": artifacts}),
    )?;
    Ok(Outcome::ok(format!(
        "{} | {} | {}",
        report.label, row.rate_label, row.tail_label
    )))
}
