//! Multi-class irregular repetition slotted ALOHA (IRSA).
//!
//! Frame-synchronous random access with ideal successive interference
//! cancellation, per-class throughput and delay measurement, and the
//! capacity region of a k-class network derived from its single-class dual.

// `!(x > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod cli_io;
pub mod degree_dist;
pub mod scheduling;
pub mod sic;
pub mod sim;

pub use analysis::{
    achievability_plan, capacity_region, de_iterate, de_threshold, make_dual, ActivationPlan,
    AnalysisError, CapacityRegion, DualNetwork,
};
pub use degree_dist::{mix_distributions, DegreeDistribution, DistError};
pub use scheduling::{ClassState, DelayStats, Policy, ScheduleError};
pub use sic::{build_frame, peel, DecodeResult, FrameError, FrameGraph, SlotDegreeHistogram};
pub use sim::{run_simulation, sweep_load, LoadVector, NetworkSpec, SimError, SimOptions, SimReport};

/// Nearest integer with halves rounded up. A 1e-9 nudge keeps products such
/// as 0.285 × 100 = 28.499999999999996 on the intended side.
pub fn round_half_up(x: f64) -> usize {
    if x <= 0.0 {
        return 0;
    }
    (x + 0.5 + 1e-9).floor() as usize
}
