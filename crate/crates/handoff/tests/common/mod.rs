//! Shared helpers for the integration tests: tiny behavior builders,
//! random scenario generators and log inspection shortcuts.

// Each test binary uses a different subset of these helpers.
#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

use handoff::bus::{BridgeRule, LatencyModel};
use handoff::hfsm::{
    ActionRef, GoalValue, MachineDef, StateDef, StateKind, TransitionTarget, REJECTED_OUTCOME,
};
use handoff::scenario::{RobotSpec, Scenario};

/// A behavior that waits `duration_ms` on the timer server and
/// finishes. Completion time is exactly start + duration.
pub fn timer_machine(duration_ms: u64) -> MachineDef {
    let state = StateDef {
        name: "Wait".to_string(),
        kind: StateKind::Atomic {
            action: ActionRef {
                server: "timer".to_string(),
                actuator: "delay".to_string(),
                target: GoalValue::Literal(duration_ms as i64),
                store: None,
            },
            on_success: "done".to_string(),
            on_abort: "fail".to_string(),
        },
    };
    let mut transitions = BTreeMap::new();
    for outcome in ["done", "fail", REJECTED_OUTCOME] {
        let terminal = if outcome == "done" { "finished" } else { "failed" };
        transitions.insert(
            ("Wait".to_string(), outcome.to_string()),
            TransitionTarget::Terminal(terminal.to_string()),
        );
    }
    MachineDef {
        name: "Delay".to_string(),
        states: [("Wait".to_string(), state)].into(),
        initial: "Wait".to_string(),
        transitions,
        terminal_outcomes: ["finished", "failed"].map(str::to_string).into(),
    }
}

/// Linear chain of `n` timer robots r1..rn, one domain each, with
/// bridge rules wiring every hop. Fixed latency keeps completion
/// times easy to reason about.
pub fn chain_scenario(n: usize, durations: &[u64], seed: u64, horizon: u64) -> Scenario {
    let mut sc = Scenario::new("chain", seed, horizon);
    sc.latency = LatencyModel::Fixed(50);
    for i in 0..n {
        let id = format!("r{}", i + 1);
        let mut robot = RobotSpec::new(&id, (i + 1) as u32, timer_machine(durations[i % durations.len()]));
        if i + 1 < n {
            robot.successor = Some(format!("r{}", i + 2));
            sc.bridges.push(BridgeRule {
                from_domain: (i + 1) as u32,
                to_domain: (i + 2) as u32,
                topic: format!("trigger_r{}", i + 2),
            });
        }
        sc.robots.push(robot);
    }
    sc
}

/// Random outage schedule over `[0, horizon)` with up to `max_windows`
/// windows of up to `max_len` ms.
pub fn random_outages(rng: &mut ChaCha8Rng, horizon: u64, max_windows: usize, max_len: u64) -> Vec<(u64, u64)> {
    let windows = rng.random_range(0..=max_windows);
    (0..windows)
        .map(|_| {
            let start = rng.random_range(0..horizon);
            let len = rng.random_range(1..=max_len);
            (start, (start + len).min(horizon))
        })
        .collect()
}

/// Random but structurally valid machine: a shuffled chain of atomic
/// timer states, optionally nesting one composite level. Used for the
/// serializer round-trip property.
pub fn random_valid_machine(rng: &mut ChaCha8Rng, name: &str, allow_composite: bool) -> MachineDef {
    let n = rng.random_range(1..=5);
    let state_names: Vec<String> = (0..n).map(|i| format!("S{i}")).collect();
    let mut states = BTreeMap::new();
    let mut transitions = BTreeMap::new();
    for (i, sname) in state_names.iter().enumerate() {
        let nest = allow_composite && rng.random_bool(0.25);
        let (state, outcomes) = if nest {
            let child = random_valid_machine(rng, &format!("{name}C{i}"), false);
            let mut outcome_map = BTreeMap::new();
            for term in &child.terminal_outcomes {
                let own = if term == "finished" { "done" } else { "fail" };
                outcome_map.insert(term.clone(), own.to_string());
            }
            let outcomes: BTreeSet<String> =
                outcome_map.values().cloned().collect();
            (
                StateDef {
                    name: sname.clone(),
                    kind: StateKind::Composite { child, outcome_map },
                },
                outcomes,
            )
        } else {
            (
                StateDef {
                    name: sname.clone(),
                    kind: StateKind::Atomic {
                        action: ActionRef {
                            server: "timer".to_string(),
                            actuator: "delay".to_string(),
                            target: if rng.random_bool(0.2) {
                                GoalValue::ContextKey("pause".to_string())
                            } else {
                                GoalValue::Literal(rng.random_range(0..5000))
                            },
                            store: rng.random_bool(0.2).then(|| "mark".to_string()),
                        },
                        on_success: "done".to_string(),
                        on_abort: "fail".to_string(),
                    },
                },
                ["done", "fail", REJECTED_OUTCOME]
                    .map(str::to_string)
                    .into(),
            )
        };
        for outcome in outcomes {
            let target = if outcome == "done" && i + 1 < n {
                TransitionTarget::State(state_names[i + 1].clone())
            } else if outcome == "done" {
                TransitionTarget::Terminal("finished".to_string())
            } else {
                TransitionTarget::Terminal("failed".to_string())
            };
            transitions.insert((sname.clone(), outcome), target);
        }
        states.insert(sname.clone(), state);
    }
    MachineDef {
        name: name.to_string(),
        states,
        initial: state_names[0].clone(),
        transitions,
        terminal_outcomes: ["finished", "failed"].map(str::to_string).into(),
    }
}
