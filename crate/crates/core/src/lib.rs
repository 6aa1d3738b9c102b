//! Explainable driving-style recognition.
//!
//! The crate covers the whole path from raw telemetry to driver advice:
//!
//! * [`simgen`] synthesizes labeled driving traces from behavior profiles,
//! * [`dataset`] cleans traces, slices them into 600-sample windows and splits them,
//! * [`features`] turns windows into the three feature configurations,
//! * [`models`] trains CART forests, gradient-boosted trees and a linear SVM,
//! * [`explain`] computes exact Shapley attributions for tree ensembles,
//! * [`recommend`] maps attributions to driving advice,
//! * [`eval`] computes confusion matrices and classification metrics,
//! * [`pipeline`] wires the stages together from a single [`pipeline::RunConfig`].

pub mod dataset;
pub mod error;
pub mod eval;
pub mod explain;
pub mod features;
pub mod models;
pub mod pipeline;
pub mod recommend;
pub mod simgen;

pub use error::{Error, ErrorKind, Result};

/// Fixed simulation / sampling step in seconds.
pub const DT: f64 = 0.05;

/// Maximum range of the obstacle sensor in meters.
pub const SENSOR_MAX_RANGE: f64 = 10.5;

/// Number of driving-style classes in the three-class task.
pub const N_PROFILES: usize = 3;
