//! A laboratory for genuine atomic multicast over ranked overlays.
//!
//! Three protocol families run on a deterministic discrete-event WAN
//! simulation: a complete-DAG protocol that ships dependency histories
//! with its messages, a timestamp-voting baseline, and a tree-routed
//! baseline. Post-hoc checkers validate traces against the atomic
//! multicast properties, and the metrics layer turns traces into
//! latency/throughput/overhead tables.

pub mod baselines;
pub mod config;
pub mod flexcast;
pub mod history;
pub mod metrics;
pub mod overlay;
pub mod presets;
pub mod runner;
pub mod scenarios;
pub mod simnet;
pub mod trace;
pub mod verify;
pub mod workload;

pub use history::{History, MessageId, MessageRecord};
pub use overlay::{GroupId, GroupSet};
