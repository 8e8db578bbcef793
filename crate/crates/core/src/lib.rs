//! Radial distribution feeder models and EV charging control under mass
//! charging load.
//!
//! The crate is `no_std` (with `alloc`) and carries every numerical piece of
//! the toolkit: the synthetic feeder builder, the DistFlow sweep solver and
//! its linearized oracles, seeded scenario synthesis, per-node voltage
//! threshold learning, the four charging controllers, the one-second
//! co-simulation engine and the comparison scores. File formats, hashing and
//! the command line live in the `aimdgrid` companion crate.

#![no_std]
// Dense loops index several arrays at once; negated float comparisons reject NaN.
#![allow(clippy::needless_range_loop, clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod controllers;
pub mod engine;
pub mod learning;
pub mod metrics;
pub mod powerflow;
pub mod scenario;
pub mod topology;

mod math;

pub use controllers::{AimdParams, ChargerState, CongestionSignal, ControllerKind, DroopCurve};
pub use engine::{BaselineRecording, SimConfig, SimError, SimResult};
pub use learning::{PolyCoefficients, RegressionSample, VoltageThreshold};
pub use metrics::ScoreReport;
pub use powerflow::{InjectionSet, PowerFlowSolution, SolverOptions};
pub use scenario::{EvSpec, HouseholdProfile, Scenario, ScenarioConfig};
pub use topology::{Branch, BranchKind, Bus, BusId, BusKind, FeederConfig, Network};
