//! Threshold-based energy rationing for prepaid electricity customers.
//!
//! A household's appliances draw from a prepaid real wallet. A virtual wallet, topped up
//! daily with a share of the latest real recharge, is compared against per-load daily
//! thresholds to decide which loads may run. This crate simulates that scheme, builds
//! threshold plans for a greedy baseline, fixed thresholds and optimized thresholds, and
//! solves the threshold-selection problem exactly.

// `!(x > 0.0)` is used on purpose so NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod domain;
pub mod error;
pub mod ingest;
pub mod metrics;
pub mod milp;
pub mod policies;
pub mod rollout;
pub mod simkernel;

pub use domain::{
    build_time_grid, priority_factors, LoadSpec, LoadTrace, PriorityFactors, RechargeSchedule, Tariff,
    TimeGrid,
};
pub use error::{Error, Result};
pub use metrics::MetricsReport;
pub use milp::{brute_force, solve, Assignment, ModelInstance};
pub use policies::PolicyKind;
pub use rollout::{run_experiment, sweep, ExperimentConfig, ExperimentOutcome, Scenario};
pub use simkernel::{simulate, SimulationResult, ThresholdPlan, WalletState};
