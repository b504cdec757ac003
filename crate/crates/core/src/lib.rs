//! Dynamics-similarity estimation and experience selection for linear
//! tracking systems.
//!
//! The crate measures how close two closed-loop systems behave over a
//! frequency range of interest — the worst-case chordal distance between
//! their frequency responses on the Riemann sphere — estimates that
//! distance from a handful of sinusoidal probe experiments driven by
//! Bayesian optimization, and checks that the resulting similarity ranking
//! predicts transfer-learning performance in an inverse-dynamics tracking
//! benchmark.
//!
//! Module map:
//! - [`lti`]: state-space plants, PD controllers, closed loops, simulation,
//!   analytic frequency response.
//! - [`similarity`]: Riemann projection, chordal distance, the dense-sweep
//!   worst-case distance oracle.
//! - [`probe`]: sinusoidal probe experiments and single-bin response
//!   estimation from input/output data.
//! - [`gp`]: Gaussian process regression with Matern 3/2 kernel, marginal
//!   likelihood and hyperparameter search.
//! - [`bo`]: expected improvement, the multi-source acquisition rule, and
//!   the iterative source-selection loop.
//! - [`transfer`]: analytic inverse models, online GP inverse-dynamics
//!   tracking, the transfer study, and test-trajectory generation.
//! - [`bank`]: JSON system-bank schema and construction.

pub mod bank;
pub mod bo;
pub mod error;
pub mod gp;
pub mod lti;
pub mod probe;
pub mod similarity;
pub mod transfer;

pub use bank::SystemBank;
pub use bo::{run_selection, SelectionConfig, SelectionResult, SimilarityEstimate};
pub use error::{CoreError, Result};
pub use lti::{
    check_minimum_phase, close_loop, frequency_response, sim_plant, simulate, ClosedLoopSystem,
    PDController, StateSpaceModel,
};
pub use probe::{estimate_response, run_probe, ProbeRecord};
pub use similarity::{
    chordal_distance, check_gap_condition, gap_sweep, riemann_project, ComplexResponse,
    FrequencyRange, SpherePoint,
};
pub use transfer::{
    analytic_inverse, make_test_trajectories, online_inverse_tracking, run_transfer_study,
    InverseModel, StudyReport, TrackingLog, Trajectory,
};
