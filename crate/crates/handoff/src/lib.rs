//! Deterministic discrete-event simulator for chained multi-robot
//! missions: per-robot hierarchical state-machine behaviors, a
//! trigger-gated sequential handoff protocol, and a domain-isolated
//! pub/sub transport with bridge rules, link outages and seeded
//! latency.
//!
//! Entry points:
//! - [`dsl`]: parse `.machine` / `.scenario` documents,
//! - [`sim::run_scenario`]: execute a scenario into an event log,
//! - [`report`]: latency statistics and timeline rendering,
//! - [`sweep`]: batch runs across seeds (rayon under the `parallel`
//!   feature, sequential otherwise).

pub mod actuation;
pub mod bus;
pub mod coordinator;
pub mod dsl;
pub mod fixtures;
pub mod hfsm;
pub mod report;
pub mod scenario;
pub mod sim;
pub mod sweep;
