//! HFSM behavior engine: machine definitions, structural validation and
//! single-threaded clock-driven execution.

mod def;
mod exec;
mod validate;

pub use def::{
    is_token, ActionRef, GoalValue, MachineDef, StateDef, StateKind, TransitionTarget,
    UnmappedOutcome, REJECTED_OUTCOME,
};
pub use exec::{
    ActionStatus, ContextValue, EngineEvent, Execution, ExecutionContext, ExecutionStatus,
    ResolvedAction,
};
pub use validate::{validate_machine, ValidationIssue, ValidationReport};

/// Smallest well-formed machine: one zero-duration timer state that
/// terminates with "finished". Used throughout the tests and handy as a
/// placeholder behavior in scenarios.
pub fn noop_machine() -> MachineDef {
    use std::collections::{BTreeMap, BTreeSet};

    let state = StateDef {
        name: "Noop".into(),
        kind: StateKind::Atomic {
            action: ActionRef {
                server: "timer".into(),
                actuator: "delay".into(),
                target: GoalValue::Literal(0),
                store: None,
            },
            on_success: "done".into(),
            on_abort: "done".into(),
        },
    };
    let mut states = BTreeMap::new();
    states.insert("Noop".to_string(), state);
    let mut transitions = BTreeMap::new();
    transitions.insert(
        ("Noop".to_string(), "done".to_string()),
        TransitionTarget::Terminal("finished".to_string()),
    );
    transitions.insert(
        ("Noop".to_string(), REJECTED_OUTCOME.to_string()),
        TransitionTarget::Terminal("finished".to_string()),
    );
    MachineDef {
        name: "Noop".into(),
        states,
        initial: "Noop".into(),
        transitions,
        terminal_outcomes: BTreeSet::from(["finished".to_string()]),
    }
}
