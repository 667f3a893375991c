//! Simulation and long-run analysis of storage processes
//! `X(t) = x + A(t) - int_0^t r(X(s)) ds` driven by a subordinator `A`.

pub mod classifier;
pub mod ergodicity_lab;
pub mod levy_input;
pub mod lyapunov;
pub mod numerics;
pub mod release_rate;
pub mod rng;
pub mod simulator;
