//! Distributed successive convex approximation for multi-cell downlink
//! power and channel allocation.
//!
//! The numerical core is generic over the scalar (`f32` or `f64`); the
//! aliases below fix it to `f64`, which is what the harness uses.

pub mod algorithms;
pub mod envelope;
pub mod graph;
pub mod harness;
mod linalg;
pub mod mixing;
pub mod pgd;
pub mod projection;
pub mod sca;
pub mod scalar;
pub mod schedule;
pub mod scheduler;
pub mod wireless;

pub type Instance = wireless::ProblemInstance<f64>;
pub type Allocation = wireless::Allocation<f64>;
pub type Mixing = mixing::MixingMatrix<f64>;
pub type Schedule = schedule::ScheduleSet<f64>;
pub type Stop = sca::StopCriteria<f64>;
pub type Config = algorithms::AlgorithmConfig<f64>;
pub type Trajectory = sca::TrajectoryRecord<f64>;
pub type Throughput = scheduler::ThroughputState<f64>;
pub type Utility = scheduler::UtilityConfig<f64>;
