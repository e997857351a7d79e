//! Reliability dynamics of single-fault-tolerant SSD RAID arrays.
//!
//! The array is modelled as a non-homogeneous continuous time Markov chain
//! whose state counts the stripes holding exactly one erroneous chunk. Error
//! rates grow with the erase count of each drive, so the generator changes
//! after every erasure performed by the array.
//!
//! - [`model`]: array configuration, parity placement, drive ages and error
//!   rates.
//! - [`solver`]: generator assembly and period-combining uniformization with
//!   error bounds, on the full or the state-truncated chain.
//! - [`sim`]: an event-driven Monte Carlo simulator of the same stochastic
//!   model, used as an independent check of the solver.

pub mod error;
pub mod model;
pub mod sim;
pub mod solver;

/// Crate version, recorded in run manifests.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

pub use error::{Error, Result};
pub use model::{
    aging_profile, chunk_error_rate, drive_ages, truncated_normal_parity, AgeState, AgingProfile,
    ArrayConfig, RateSchedule, Scheme,
};
pub use sim::{estimate_reliability, simulate_run, McEstimate, RunOutcome, SimResult, SimState};
pub use solver::{
    average_generator, build_generator, solve, truncated_solve, uniformized_interval, CurveMeta,
    CurveSample, GeneratorMatrix, IntervalReport, PoissonWeights, ReliabilityCurve,
    SolverSettings, StateVector, Truncation,
};
