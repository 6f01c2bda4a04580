//! Monte Carlo simulation of low-cost PM2.5 sensor networks.
//!
//! Sensors are placed on a grid by a siting strategy, every grid is served by
//! its nearest instrument, and the readings each grid is shown are scored
//! against the true field: absolute error, AQI misclassification, and how far
//! residents are from the instrument that serves them.

pub mod aqi;
pub mod assignment;
pub mod calibration;
pub mod domain;
pub mod error;
pub mod error_models;
pub mod experiment;
pub mod ingest;
pub mod metrics;
pub mod placement;
pub mod quantile;
pub mod rng;

pub use aqi::{classify, misclass, AqiBreakpoints, AqiClass, Misclass, MisclassKind};
pub use assignment::{assign_all, AssignmentMap, Instrument, InstrumentKind, SpatialIndex};
pub use calibration::{apply_correction, calibrate, qa_filter, CorrectionCoefficients, QaThresholds};
pub use domain::{DistanceMetric, GridCell, Point, Site, TruePm25Field, Weighting};
pub use error::{Error, Result};
pub use error_models::{ErrorModel, ResidualTable};
pub use experiment::{
    run_experiment, run_sweep, run_trial, ExperimentConfig, ExperimentInputs, LcsCount, Scenario, SweepSpec,
};
pub use metrics::{compute_metrics, MetricsReport, MetricsRow, Subset};
pub use placement::{select_sites, PlacementStrategy, SiteAttribute};
