//! Simulation and verification engine for Bell-type experiments with
//! retarded settings.
//!
//! * [`spacetime`]: setting schedules, interventions, simple and predictive
//!   retarded settings.
//! * [`models`]: local hidden-variable models and the quantum singlet.
//! * [`inequalities`]: retarded CHSH / CH expressions and verdicts.
//! * [`estimation`]: closed-form, quadrature and Monte Carlo correlations;
//!   correlation tables.
//! * [`scenarios`]: end-to-end experiment runs from a config file.
//! * [`optimizer`]: grid plus pattern search over setting angles.

// `!(x >= 0.0)` style checks are used on purpose so NaN is rejected.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod angle;
pub mod config;
pub mod error;
pub mod estimation;
pub mod inequalities;
pub mod models;
pub mod optimizer;
pub mod parallel;
pub mod scenarios;
pub mod spacetime;

pub use error::{Error, Result};
