//! Pseudo-range multilateration in any dimension.
//!
//! Sensors at known positions register the arrival times of signals that
//! travel at unit speed. From these times the crate recovers emission events
//! in closed form, tests whether a tuple of times can stem from one event,
//! matches unlabelled reception lists into events, and reconstructs planar
//! walls from first-order echoes.

pub mod acoustics;
pub mod cli;
pub mod error;
pub mod lateration;
pub mod matching;
pub mod numkernel;
pub mod relations;

pub use acoustics::{
    detect_walls, goodness_check, mirror_point, simulate_echoes, wall_from_mirror, EchoOptions, Room, Wall,
};
pub use error::{Error, Result};
pub use lateration::{check_geometry, solve, EmissionEvent, SensorArray, SolveConfig, SolvePath, SolveResult};
pub use matching::{match_events, MatchConfig, MatchReport, ReceptionTable};
pub use relations::{build_d, relation_residual, RelationMatrix};

#[cfg(doctest)]
#[doc = include_str!("../../../README.md")]
struct ReadmeDoctests;
