//! SIR epidemic dynamics with relapse, driven by compensated Poisson jump
//! noise on the contact rate.
//!
//! * [`model`]: parameters, states, jump measure and the right-hand sides.
//! * [`analysis`]: equilibria, reproduction numbers, stability and the
//!   jump-corrected extinction/persistence thresholds.
//! * [`sde`]: RK4 and jump-adapted Euler integrators with seeded streams.
//! * [`montecarlo`]: ensembles, time averages, growth-rate estimates,
//!   outcome classification and parameter sweeps.
//! * [`config`], [`cli`], [`presets`]: scenario files, commands and the
//!   built-in figure presets behind the `levysir` binary.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod cli;
pub mod config;
pub mod model;
pub mod montecarlo;
pub mod presets;
pub mod sde;
