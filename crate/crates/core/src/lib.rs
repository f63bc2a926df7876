//! Minimax robust aggregation of two conditionally independent forecasters.
//!
//! Nature picks an information structure from a discretized family, the
//! aggregator picks a function of the two reports, and the payoff is the
//! aggregator's regret against the omniscient Bayesian posterior. The solver
//! runs multiplicative weights for nature against exact or
//! Lipschitz-constrained best responses and certifies the averaged strategies
//! with matched lower and upper bounds.
//!
//! Numeric code is generic over [`Scalar`] (`f32` or `f64`); the aliases at
//! the crate root fix `f64`, which is what the command-line tool uses.

// `!(x > y)` is used on purpose so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod aggregator;
pub mod best_response;
pub mod error;
pub mod family;
pub mod info;
pub mod learning;
pub mod metrics;
pub mod qp;
pub mod regret;
pub mod scalar;
pub mod verify;

pub use aggregator::{baseline_eval, Aggregator, BaselineKind, FnAggregator, Omniscient};
pub use best_response::{build_target, closed_form_best_response, FillPolicy, ResponseTarget};
pub use error::{Error, Result};
pub use family::Family;
pub use info::{
    enumerate_grid, enumerate_keys, omniscient_posterior, predictions_to_signal_probs,
    signal_probs_to_predictions, support_distribution, Atom, EnumerateOptions, GridKey, GridSpec,
};
pub use learning::{run, EquilibriumCertificate, LearnConfig, RateMode, RunOutput};
pub use qp::{lipschitz_best_response, QpSettings, QpSolution, QpWarmStart};
pub use regret::{Paradigm, ParadigmKind};
pub use scalar::Scalar;

pub type AggregatorGrid = aggregator::AggregatorGrid<f64>;
pub type InformationStructure = info::InformationStructure<f64>;
pub type SignalProbabilities = info::SignalProbabilities<f64>;
pub type ReportDistribution = info::ReportDistribution<f64>;
