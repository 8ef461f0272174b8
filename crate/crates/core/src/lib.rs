//! Multiple testing of pairwise correlations for dependence-graph inference.
//!
//! The crate computes four families of correlation test statistics, their
//! asymptotic p-values and covariances, and applies FWER-controlling
//! procedures (Bonferroni, Šidák, nonparametric bootstrap, parametric MaxT,
//! each single-step or step-down) as well as Benjamini-Hochberg. A Monte
//! Carlo harness over stochastic-block-model correlation structures
//! measures FWER, power and FDP.

// `!(x < bound)` is used on purpose so that NaN fails range checks.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod correlation;
pub mod error;
pub mod normal;
pub mod pairs;
pub mod pipeline;
pub mod procedures;
pub mod quantiles;
pub mod rng;
pub mod sample;
pub mod simulation;
pub mod statistics;

pub use correlation::{empirical_correlation, CorrelationMatrix};
pub use error::{Error, Result};
pub use pairs::{pair_count, pair_to_flat, PairIndex};
pub use sample::SampleMatrix;
pub use statistics::{p_values, statistic, PValueVector, StatKind, StatVector};
pub use pipeline::{test_correlations, Calibration, OmegaSource};
pub use procedures::{Method, ProcedureKind, RejectionSet};

pub use nalgebra;
