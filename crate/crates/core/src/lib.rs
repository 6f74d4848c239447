//! Controlled SEIR epidemic dynamics with feedback vaccination: model,
//! integrators, control laws, normal-form transform, equilibrium analysis
//! and trajectory verification.

// `!(a < b)` is used on purpose so that NaN takes the failing branch.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod controllers;
pub mod equilibria;
pub mod error;
pub mod fblin;
pub mod integrator;
pub mod model;
pub mod verify;

pub use controllers::{evaluate, predicted_limits, validate_gains, AsymptoticPrediction, ControlLaw, GainConstraint};
pub use error::{Error, Result};
pub use integrator::{integrate, IntegratorConfig, PositivityPolicy, Sample, Trajectory};
pub use model::{derivative, ModelParams, SeirState, StateDerivative};
pub use nalgebra;
