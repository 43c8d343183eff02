//! Per-agent handoff lifecycle: wait for trigger, execute the assigned
//! behavior, probe the successor until reachable, publish its trigger.
//!
//! This module holds the protocol decisions (trigger acceptance,
//! deduplication, epoch bookkeeping); the event scheduler in `sim`
//! drives it and owns all timing.

use std::collections::BTreeSet;

/// The handoff token. `(mission_id, epoch, sender)` identifies a
/// trigger; receivers process each at most once.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TriggerMessage {
    pub mission_id: String,
    pub epoch: u32,
    pub sender: String,
    pub sent_at: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CoordinatorPhase {
    WaitingForTrigger,
    Executing,
    AwaitingReachability,
    TriggerSent,
    MissionDone,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TriggerDecision {
    Accepted,
    Duplicate,
    WrongPhase { reason: &'static str },
}

#[derive(Debug)]
pub struct Coordinator {
    pub id: String,
    pub phase: CoordinatorPhase,
    /// Epoch the next accepted trigger must carry.
    pub next_epoch: u32,
    /// Epoch currently (or last) executed.
    pub current_epoch: u32,
    /// Set when the behavior faulted or timed out; terminal for the run.
    pub fault: Option<String>,
    seen: BTreeSet<(String, u32, String)>,
}

impl Coordinator {
    pub fn new(id: impl Into<String>) -> Self {
        Self {
            id: id.into(),
            phase: CoordinatorPhase::WaitingForTrigger,
            next_epoch: 0,
            current_epoch: 0,
            fault: None,
            seen: BTreeSet::new(),
        }
    }

    /// Decides whether a delivered trigger starts an execution.
    /// Accepted triggers are remembered for deduplication and advance
    /// the expected epoch.
    pub fn on_trigger(&mut self, msg: &TriggerMessage) -> TriggerDecision {
        let key = (msg.mission_id.clone(), msg.epoch, msg.sender.clone());
        if self.seen.contains(&key) {
            return TriggerDecision::Duplicate;
        }
        if self.fault.is_some() {
            return TriggerDecision::WrongPhase { reason: "faulted" };
        }
        if self.phase != CoordinatorPhase::WaitingForTrigger {
            return TriggerDecision::WrongPhase { reason: "not_waiting" };
        }
        if msg.epoch != self.next_epoch {
            return TriggerDecision::WrongPhase {
                reason: "unexpected_epoch",
            };
        }
        self.seen.insert(key);
        self.current_epoch = msg.epoch;
        self.next_epoch = msg.epoch + 1;
        self.phase = CoordinatorPhase::Executing;
        TriggerDecision::Accepted
    }

    /// Epoch to stamp on the outgoing trigger: a trigger returning to
    /// the chain head opens the next cycle.
    pub fn out_epoch(&self, successor_is_head: bool) -> u32 {
        if successor_is_head {
            self.current_epoch + 1
        } else {
            self.current_epoch
        }
    }

    pub fn set_fault(&mut self, reason: impl Into<String>) {
        self.fault = Some(reason.into());
    }
}

/// Independent oracle for the trigger-release instant: the first probe
/// time `from + k * ping_interval` not covered by an outage, found by
/// brute-force enumeration. Returns None when no probe at or before
/// `horizon` succeeds.
pub fn first_successful_probe(
    from: u64,
    ping_interval: u64,
    outages: &[(u64, u64)],
    horizon: u64,
) -> Option<u64> {
    let step = ping_interval.max(1);
    let mut t = from;
    while t <= horizon {
        if !outages.iter().any(|&(s, e)| t >= s && t < e) {
            return Some(t);
        }
        t += step;
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;

    fn msg(epoch: u32, sender: &str) -> TriggerMessage {
        TriggerMessage {
            mission_id: "m".into(),
            epoch,
            sender: sender.into(),
            sent_at: 0,
        }
    }

    #[test]
    fn first_trigger_accepted() {
        let mut c = Coordinator::new("stinger");
        assert_eq!(c.on_trigger(&msg(0, "deployer")), TriggerDecision::Accepted);
        assert_eq!(c.phase, CoordinatorPhase::Executing);
        assert_eq!(c.next_epoch, 1);
    }

    #[test]
    fn redelivery_is_duplicate() {
        let mut c = Coordinator::new("stinger");
        c.on_trigger(&msg(0, "deployer"));
        assert_eq!(c.on_trigger(&msg(0, "deployer")), TriggerDecision::Duplicate);
    }

    #[test]
    fn trigger_mid_execution_is_wrong_phase() {
        let mut c = Coordinator::new("stinger");
        c.on_trigger(&msg(0, "deployer"));
        // A fresh (unseen) trigger while executing is ignored.
        assert!(matches!(
            c.on_trigger(&msg(1, "deployer")),
            TriggerDecision::WrongPhase { .. }
        ));
    }

    #[test]
    fn epoch_increments_toward_head() {
        let mut c = Coordinator::new("stinger");
        c.on_trigger(&msg(0, "deployer"));
        assert_eq!(c.out_epoch(true), 1);
        assert_eq!(c.out_epoch(false), 0);
    }

    #[test]
    fn probe_oracle_examples() {
        // No outages: the first probe instant wins.
        assert_eq!(first_successful_probe(8000, 500, &[], 60_000), Some(8000));
        // Outage [5000,12000): probes 8000, 8500, ... fail until 12000.
        assert_eq!(
            first_successful_probe(8000, 500, &[(5000, 12_000)], 60_000),
            Some(12_000)
        );
        // Non-aligned boundary: first probe instant >= 12100 is 12500.
        assert_eq!(
            first_successful_probe(8000, 500, &[(5000, 12_100)], 60_000),
            Some(12_500)
        );
        // Horizon exhausted.
        assert_eq!(first_successful_probe(0, 500, &[(0, 10_000)], 5_000), None);
    }
}
