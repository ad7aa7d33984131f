//! Multiply robust estimation of conditional survival probabilities under
//! right-censoring explained by time-varying covariates measured at fixed
//! visit times.
//!
//! The crate is organised bottom-up:
//!
//! - [`data`]: visit schedules, subject records, CSV ingestion and run configuration.
//! - [`stepfn`]: right-continuous step survival curves and exact Stieltjes sums.
//! - [`windows`]: per-window decomposition of follow-up into at-risk flags, local times and events.
//! - [`nuisance`]: conditional survival learners (Kaplan–Meier, Cox–Breslow, DGP oracle).
//! - [`pseudo`]: the doubly robust transform and the MR / G-computation / IPCW pseudo-outcomes.
//! - [`estimate`]: cross-fitted conditional and marginal estimators, isotonic projection, CDE contrasts.
//! - [`verify`]: brute-force enumeration oracles for the identification identities.
//! - [`simulate`]: the two-visit trial data-generating mechanism, truth oracles and the replication benchmark.
//!
//! Data-parallel loops (subjects, folds, replications) go through [`exec`], which uses rayon when
//! the `parallel` feature is enabled and falls back to plain iteration otherwise.

pub mod data;
pub mod error;
pub mod estimate;
pub mod exec;
pub mod nuisance;
pub mod pseudo;
pub mod simulate;
pub mod stepfn;
pub mod verify;
pub mod windows;

pub use data::{Dataset, RunConfig, SubjectRecord, VisitSchedule};
pub use error::{Error, Result};
pub use estimate::{ConditionalFit, EstimatorKind, MarginalFit};
pub use stepfn::StepSurvival;
