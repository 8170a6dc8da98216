//! Expectation-maximization for equal-weight mixture models.
//!
//! The crate covers two regimes:
//!
//! * the population-level EM map for the symmetric two-component unit-scale
//!   Laplacian mixture ([`population`]), with its closed forms, derivatives
//!   and contraction constants;
//! * sample-based EM for equal-weight, unit-variance Gaussian mixtures
//!   ([`fit`]): naive EM, moment-regularized EM and the stochastic
//!   multi-objective variant that redraws the penalty weight every iteration.
//!
//! [`harness`] runs random-restart success-rate studies on top of both, and
//! [`metrics`] scores estimates against ground truth up to relabeling.

// `!(x > 0.0)` style checks are how NaN gets rejected along with bad values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod fit;
pub mod harness;
pub mod io;
pub mod math;
pub mod metrics;
pub mod mixture;
pub mod population;
pub mod quadrature;
pub mod rng;
pub mod verify;

pub use error::{Error, Result};
pub use fit::{
    fit, naive_em_step, regularized_em_step, regularized_objective, surrogate, Algorithm, EmStep,
    FitConfig, FitResult, LambdaSchedule, TraceRecord,
};
pub use harness::{
    generate_initialization, generate_instance, run_experiment, run_trial, ExperimentOutput,
    ExperimentSpec, InitStrategy, Instance, RunOptions, SuccessRow, SuccessTable, TrialResult,
};
pub use metrics::{is_success, match_components, moment_residual, MatchReport};
pub use mixture::{
    center_samples, density, log_density, log_likelihood, responsibilities, sample, Family, Means,
    MixtureModel, SampleSet,
};
pub use population::{
    contraction_constants, dm_deta_closed, dm_dlambda_closed, em_map_closed, em_map_quadrature,
    em_map_ratio_form, run_population_em, ContractionConstants, PopulationTrajectory,
};
pub use quadrature::QuadratureSettings;
