//! Named scenarios with their documented regime and ergodicity row.

use serde_json::{json, Value};

pub struct Preset {
    pub name: &'static str,
    pub about: &'static str,
    pub regime: &'static str,
    pub rate: &'static str,
    pub tail: &'static str,
    body: fn() -> Value,
}

impl Preset {
    pub fn scenario(&self) -> Value {
        let mut v = (self.body)();
        v["scenario_schema"] = 1.into();
        v["name"] = self.name.into();
        v
    }
}

fn cpp_exp(rate: f64) -> Value {
    json!({"family": "compound-poisson", "rate": rate, "jump": {"law": "exponential", "rate": 1.0}})
}

fn cpp_pareto(alpha: f64) -> Value {
    json!({"family": "compound-poisson", "rate": 1.0, "jump": {"law": "pareto", "alpha": alpha, "scale": 1.0}})
}

pub const PRESETS: &[Preset] = &[
    Preset {
        name: "constant-mm1",
        about: "constant release 2, unit-rate exponential jumps (M/M/1 workload)",
        regime: "Pos. recurrent",
        rate: "Exponential",
        tail: "Exponential",
        body: || {
            json!({
                "seed": 1,
                "input": cpp_exp(1.0),
                "release": {"family": "constant", "a": 2.0},
                "phi": {"family": "linear", "c": 0.5},
                "grids": {"u_grid": [0.0, 1.0, 2.0, 4.0, 8.0], "t_grid": [0.1, 0.2, 0.3, 0.5, 0.7, 1.0, 1.5, 2.0, 3.0]},
                "budgets": {"horizon": 40.0}
            })
        },
    },
    Preset {
        name: "constant-release",
        about: "constant release 4, Pareto(1.5) jumps with mean 3",
        regime: "Pos. recurrent",
        rate: "≈ t^-0.5",
        tail: "≈ u^-0.5",
        body: || {
            json!({
                "seed": 2,
                "input": cpp_pareto(1.5),
                "release": {"family": "constant", "a": 4.0},
                "grids": {"u_grid": [1.0, 10.0, 100.0, 1000.0]}
            })
        },
    },
    Preset {
        name: "linear-release",
        about: "release 0.5 + u, Pareto(1.5) jumps",
        regime: "Pos. recurrent",
        rate: "Exponential",
        tail: "≈ u^-1.5",
        body: || {
            json!({
                "seed": 3,
                "input": cpp_pareto(1.5),
                "release": {"family": "affine", "a": 0.5, "b": 1.0},
                "beta_modulus": {"family": "power", "d": 1.0, "gamma": 1.0},
                "grids": {"u_grid": [1.0, 10.0, 100.0], "t_grid": [0.1, 0.2, 0.3, 0.5, 0.7, 1.0, 1.5, 2.0, 3.0]},
                "budgets": {"horizon": 50.0}
            })
        },
    },
    Preset {
        name: "shotnoise-gamma",
        about: "release u, rate-2 exponential jumps; stationary law Gamma(2, 1)",
        regime: "Pos. recurrent",
        rate: "Exponential",
        tail: "Exponential",
        body: || {
            json!({
                "seed": 4,
                "input": cpp_exp(2.0),
                "release": {"family": "affine", "a": 0.0, "b": 1.0},
                "beta_modulus": {"family": "power", "d": 1.0, "gamma": 1.0},
                "grids": {"u_grid": [0.5, 1.0, 2.0, 4.0, 8.0], "t_grid": [0.25, 0.5, 0.75, 1.0, 1.5, 2.0, 2.5, 3.0]},
                "budgets": {"horizon": 30.0, "x0": 5.0}
            })
        },
    },
    Preset {
        name: "power-release-0.5",
        about: "release u^0.5, Pareto(1) jumps",
        regime: "Pos. recurrent",
        rate: "≈ t^-1",
        tail: "≈ u^-0.5",
        body: || {
            json!({
                "seed": 5,
                "input": cpp_pareto(1.0),
                "release": {"family": "power", "k": 1.0, "beta": 0.5},
                "phi": {"family": "power", "a": 0.45},
                "grids": {"u_grid": [10.0, 31.6227766, 100.0, 316.227766, 1000.0]},
                "budgets": {"thinning": 10.0, "horizon": 2000.0}
            })
        },
    },
    Preset {
        name: "power-release-2",
        about: "release u^2, Pareto(1) jumps",
        regime: "Pos. recurrent",
        rate: "Uniform",
        tail: "≼ u^-2",
        body: || {
            json!({
                "seed": 6,
                "input": cpp_pareto(1.0),
                "release": {"family": "power", "k": 1.0, "beta": 2.0},
                "beta_modulus": {"family": "power", "d": 2.0, "gamma": 1.0},
                "grids": {"u_grid": [10.0, 31.6227766, 100.0, 316.227766, 1000.0], "t_grid": [0.1, 0.2, 0.3, 0.5, 0.7, 1.0, 1.5, 2.0, 3.0]},
                "budgets": {"thinning": 10.0, "horizon": 50.0}
            })
        },
    },
    Preset {
        name: "power-light",
        about: "release u^0.5, unit-rate exponential jumps",
        regime: "Pos. recurrent",
        rate: "Exponential",
        tail: "≼ exp(-u^0.5)",
        body: || {
            json!({
                "seed": 7,
                "input": cpp_exp(1.0),
                "release": {"family": "power", "k": 1.0, "beta": 0.5},
                "grids": {"t_grid": [0.1, 0.2, 0.3, 0.5, 0.7, 1.0, 1.5, 2.0, 3.0]},
                "budgets": {"horizon": 50.0}
            })
        },
    },
    Preset {
        name: "general-release",
        about: "smoothed release u^0.7, infinite-activity Gamma(1, 1) input",
        regime: "Pos. recurrent",
        rate: "Exponential",
        tail: "≼ exp(-u^0.3)",
        body: || {
            json!({
                "seed": 8,
                "input": {"family": "gamma", "shape": 1.0, "rate": 1.0, "truncation_eps": 1e-4},
                "release": {"family": "power-smoothed", "k": 1.0, "beta": 0.7},
                "grids": {"t_grid": [0.1, 0.2, 0.3, 0.5, 0.7, 1.0, 1.5, 2.0, 3.0]},
                "budgets": {"horizon": 50.0, "n_paths": 2000}
            })
        },
    },
    Preset {
        name: "plateau",
        about: "release levels off at the input mean 1",
        regime: "Null recurrent",
        rate: "Unknown",
        tail: "Unknown",
        body: || {
            json!({
                "seed": 9,
                "input": cpp_exp(1.0),
                "release": {"family": "plateau", "m": 1.0, "u0": 1.0}
            })
        },
    },
    Preset {
        name: "power-heavy",
        about: "release u^0.3, Pareto(0.3) jumps",
        regime: "Transient",
        rate: "Unknown",
        tail: "Unknown",
        body: || {
            json!({
                "seed": 10,
                "input": cpp_pareto(0.3),
                "release": {"family": "power", "k": 1.0, "beta": 0.3}
            })
        },
    },
    Preset {
        name: "sharp-power",
        about: "sharp-rate pair: release u^0.5, Pareto(1) jumps, TV ≈ t^-1",
        regime: "Pos. recurrent",
        rate: "≈ t^-1",
        tail: "≈ u^-0.5",
        body: || {
            json!({
                "seed": 11,
                "input": cpp_pareto(1.0),
                "release": {"family": "power", "k": 1.0, "beta": 0.5},
                "phi": {"family": "power", "a": 0.45},
                "grids": {"t_grid": [1.0, 1.52, 2.31, 3.51, 5.34, 8.11, 12.3, 18.7, 28.5, 43.3, 65.8, 100.0]},
                "budgets": {"n_paths": 100000, "horizon": 2000.0, "samples": 200000, "thinning": 50.0},
                "tolerances": {"epsilon": 0.1}
            })
        },
    },
    Preset {
        name: "sharp-constant",
        about: "sharp-rate pair: constant release 4, Pareto(1.5) jumps, TV ≈ t^-0.5",
        regime: "Pos. recurrent",
        rate: "≈ t^-0.5",
        tail: "≈ u^-0.5",
        body: || {
            json!({
                "seed": 12,
                "input": cpp_pareto(1.5),
                "release": {"family": "constant", "a": 4.0},
                "budgets": {"n_paths": 100000, "horizon": 2000.0, "samples": 200000, "thinning": 50.0},
                "tolerances": {"epsilon": 0.1}
            })
        },
    },
];

pub fn find(name: &str) -> Option<&'static Preset> {
    PRESETS.iter().find(|p| p.name == name)
}
