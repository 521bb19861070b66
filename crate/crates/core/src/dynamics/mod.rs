//! Discrete learning dynamics: schedules, noise, update rules, trajectories
//! and Monte-Carlo lock-in estimates.

mod lockin;
mod rule;
mod run;
mod schedule;
mod spectra;

pub use lockin::{lockin_curve, monte_carlo_lockin, wilson_interval, LockInEstimate, LockInSpec, WILSON_Z};
pub use rule::{step, UpdateRule};
pub use run::{
    run, run_best_response, run_with, Record, RunConfig, TerminalReason, Trajectory, TrajectorySummary,
    DEFAULT_STOP_TOL,
};
pub use schedule::{NoiseKind, NoiseModel, Schedule, Schedules};
pub use spectra::{extremal_real, spectrum_snapshot, SpectrumSnapshot};
