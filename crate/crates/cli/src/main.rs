mod commands;
mod output;
mod presets;
mod scenario;

use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{anyhow, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde_json::json;

use output::OutDir;
use scenario::{apply_overrides, parse_phi, Scenario};

/// Simulation and analysis of storage processes with state-dependent release.
#[derive(Parser)]
#[command(name = "storagelab", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// `preset:<name>` or a path to a scenario JSON file
    scenario: String,
    /// `key=value` overrides on dotted scenario paths, e.g. `budgets.n_paths=500`
    overrides: Vec<String>,
    /// artifact root; `STORAGELAB_OUT` takes precedence
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// worker threads (default: all cores)
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Args)]
struct WithPhi {
    #[command(flatten)]
    common: Common,
    /// `constant`, `linear:<c>` or `power:<a>`; replaces the scenario's phi
    #[arg(long)]
    phi: Option<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Regime (transient, null or positive recurrent) and the ergodicity row
    Classify(Common),
    /// Drift certificate for a rate function phi
    Certify(WithPhi),
    /// Stationary tail envelopes and the TV lower bound
    Predict(WithPhi),
    /// Ensemble paths on the time grid, or every jump with --events
    Simulate {
        #[command(flatten)]
        common: Common,
        /// record jump events up to the last grid time instead of grid values
        #[arg(long)]
        events: bool,
    },
    /// Stationary tail estimate by long-run time average
    Tail(Common),
    /// Total-variation decay curve against a stationary reference
    ConvergeTv(Common),
    /// Wasserstein-p decay curve and the contraction bound
    ConvergeWp {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 1.0)]
        p: f64,
    },
    /// Fitted TV exponent against the predicted bounds
    Compare(WithPhi),
    /// Collects earlier artifacts of the scenario
    Report(Common),
    /// Lists the built-in presets
    Presets,
}

/// Failure classes mapped to exit codes.
enum Failure {
    Usage(anyhow::Error),
    Hypothesis(String),
}

fn out_root(common: &Common) -> PathBuf {
    std::env::var_os("STORAGELAB_OUT")
        .map(PathBuf::from)
        .unwrap_or_else(|| common.out.clone())
}

fn load(common: &Common, phi: Option<&str>) -> Result<Scenario> {
    let value = match common.scenario.strip_prefix("preset:") {
        Some(name) => presets::find(name)
            .ok_or_else(|| anyhow!("unknown preset `{name}`"))?
            .scenario(),
        None => {
            let text = fs::read_to_string(&common.scenario).with_context(|| format!("reading {}", common.scenario))?;
            serde_json::from_str(&text).with_context(|| format!("parsing {}", common.scenario))?
        }
    };
    let mut value = apply_overrides(value, &common.overrides)?;
    if let Some(phi) = phi {
        value["phi"] = serde_json::to_value(parse_phi(phi)?)?;
    }
    Scenario::from_value(value)
}

fn setup(common: &Common) -> Result<()> {
    if let Some(n) = common.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .context("configuring thread pool")?;
    }
    Ok(())
}

fn run(command: Command) -> std::result::Result<String, Failure> {
    let (common, phi, name) = match &command {
        Command::Presets => {
            let lines: Vec<String> = presets::PRESETS
                .iter()
                .map(|p| format!("{:<18} {:<15} {:<12} {:<15} {}", p.name, p.regime, p.rate, p.tail, p.about))
                .collect();
            return Ok(lines.join("\n"));
        }
        Command::Classify(c) => (c, None, "classify"),
        Command::Certify(w) => (&w.common, w.phi.as_deref(), "certify"),
        Command::Predict(w) => (&w.common, w.phi.as_deref(), "predict"),
        Command::Simulate { common, .. } => (common, None, "simulate"),
        Command::Tail(c) => (c, None, "tail"),
        Command::ConvergeTv(c) => (c, None, "converge-tv"),
        Command::ConvergeWp { common, .. } => (common, None, "converge-wp"),
        Command::Compare(w) => (&w.common, w.phi.as_deref(), "compare"),
        Command::Report(c) => (c, None, "report"),
    };
    setup(common).map_err(Failure::Usage)?;
    let s = load(common, phi).map_err(Failure::Usage)?;
    let root = out_root(common);
    let out = OutDir::new(&root, &s.name, name).map_err(Failure::Usage)?;
    let outcome = match command {
        Command::Classify(_) => commands::classify_cmd(&s, &out),
        Command::Certify(_) => commands::certify_cmd(&s, &out),
        Command::Predict(_) => commands::predict_cmd(&s, &out),
        Command::Simulate { events, .. } => commands::simulate_cmd(&s, &out, events),
        Command::Tail(_) => commands::tail_cmd(&s, &out),
        Command::ConvergeTv(_) => commands::converge_tv_cmd(&s, &out),
        Command::ConvergeWp { p, .. } => commands::converge_wp_cmd(&s, &out, p),
        Command::Compare(_) => commands::compare_cmd(&s, &out),
        Command::Report(_) => commands::report_cmd(&s, &root, &out),
        Command::Presets => unreachable!(),
    }
    .map_err(Failure::Usage)?;
    let line = format!("{name} {}: {}", s.name, outcome.summary);
    if outcome.ok {
        Ok(line)
    } else {
        Err(Failure::Hypothesis(line))
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => {
            // --help and --version
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            eprintln!("{}", json!({"error": "usage", "message": e.to_string().trim()}));
            return ExitCode::from(1);
        }
    };
    match run(cli.command) {
        Ok(line) => {
            println!("{line}");
            ExitCode::SUCCESS
        }
        Err(Failure::Hypothesis(line)) => {
            println!("{line}");
            eprintln!("{}", json!({"error": "hypothesis", "message": line}));
            ExitCode::from(2)
        }
        Err(Failure::Usage(e)) => {
            eprintln!("{}", json!({"error": "usage", "message": format!("{e:#}")}));
            ExitCode::from(1)
        }
    }
}
