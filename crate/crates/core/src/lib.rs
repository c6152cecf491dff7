//! Joint flow-level / packet-level network model under MWUM-α control.
//!
//! The crate covers the static network description, the control policy, an
//! exact discrete-event simulator, the fluid model, capacity linear programs
//! and the workload / lifting-map toolkit for critically loaded systems.

pub mod capacity;
pub mod compare;
pub mod fixtures;
pub mod fluid;
pub mod lifting;
pub mod linalg;
pub mod lp;
pub mod network;
pub mod policy;
pub mod schedule;
pub mod sim;
pub mod tol;
pub mod workload;

pub use network::{build_network, compute_xi, implied_load, FlowSpec, NetError, Network, Queue, TopologyConfig};
pub use policy::{rate_allocation, schedule_weight, select_schedule, PolicyParams, TieBreak};
pub use schedule::{monotone_closure, Schedule, ScheduleSet};

/// Crate version, recorded in experiment manifests.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
