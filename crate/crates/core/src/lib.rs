//! Simulation of broadcast in a seven-node wireless body area network.
//!
//! The sink injects packets at a fixed rate; they are spread either by one of
//! six flat strategies over carrier-sense access, or by the cross-layer
//! protocol in [`clpb`], which gives each relay on the maximum-reliability
//! paths a dedicated slot.

pub mod channel;
pub mod clpb;
pub mod engine;
pub mod experiment;
pub mod metrics;
pub mod strategies;
pub mod topology;

pub use channel::{ChannelTable, LinkBudget, LinkStats, NodeId, Posture, PostureLinks};
pub use engine::{run, simulate, simulate_with_schedule, RunConfig, RunRecord, SimTime};
pub use metrics::RunMetrics;
pub use strategies::{StrategyKind, StrategyParams};
pub use topology::{Preprocessing, SenderSchedule};
