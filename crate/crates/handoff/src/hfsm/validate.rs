//! Structural validation of machine definitions.
//!
//! The validator walks the whole machine tree and reports every
//! violation it finds, not just the first, so a fixture author sees the
//! full damage in one pass.

use std::collections::{BTreeSet, VecDeque};

use super::def::{is_token, MachineDef, StateKind, TransitionTarget};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ValidationIssue {
    /// Dotted path locating the violation, e.g. `Deployer.Pick` or
    /// `Stinger.Centering/CenteringSeq`.
    pub locus: String,
    pub message: String,
}

impl std::fmt::Display for ValidationIssue {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}: {}", self.locus, self.message)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ValidationReport {
    pub issues: Vec<ValidationIssue>,
}

impl ValidationReport {
    pub fn ok(&self) -> bool {
        self.issues.is_empty()
    }
}

/// Checks all MachineDef invariants, recursively through composite
/// states. Returns an empty report iff the machine is executable.
pub fn validate_machine(def: &MachineDef) -> ValidationReport {
    let mut report = ValidationReport::default();
    let mut seen_names = BTreeSet::new();
    validate_one(def, def.name.clone(), &mut seen_names, &mut report);
    report
}

fn issue(report: &mut ValidationReport, locus: &str, message: String) {
    report.issues.push(ValidationIssue {
        locus: locus.to_string(),
        message,
    });
}

fn validate_one(
    def: &MachineDef,
    locus: String,
    machine_names: &mut BTreeSet<String>,
    report: &mut ValidationReport,
) {

    if !is_token(&def.name) {
        issue(report, &locus, format!("machine name is not a token: {:?}", def.name));
    }
    if !machine_names.insert(def.name.clone()) {
        issue(report, &locus, format!("duplicate machine name: {}", def.name));
    }
    if def.terminal_outcomes.is_empty() {
        issue(report, &locus, "machine declares no terminal outcomes".into());
    }
    for t in &def.terminal_outcomes {
        if !is_token(t) {
            issue(report, &locus, format!("terminal outcome is not a token: {t:?}"));
        }
    }

    if !def.states.contains_key(&def.initial) {
        issue(report, 
            &locus,
            format!("initial state does not exist: {}", def.initial),
        );
    }

    for (key, state) in &def.states {
        let state_locus = format!("{locus}.{key}");
        if key != &state.name {
            issue(report, 
                &state_locus,
                format!("state map key {:?} does not match state name {:?}", key, state.name),
            );
        }
        if !is_token(&state.name) {
            issue(report, &state_locus, format!("state name is not a token: {:?}", state.name));
        }
        for o in state.outcomes() {
            if !is_token(&o) {
                issue(report, &state_locus, format!("outcome label is not a token: {o:?}"));
            }
        }
        match &state.kind {
            StateKind::Atomic { action, .. } => {
                if !is_token(&action.server) || !is_token(&action.actuator) {
                    issue(report, &state_locus, "action binding has a non-token server or actuator".into());
                }
            }
            StateKind::Composite { child, outcome_map } => {
                // outcome_map must be total over the child's terminals and
                // reference only declared child terminals.
                for child_terminal in &child.terminal_outcomes {
                    if !outcome_map.contains_key(child_terminal) {
                        issue(report, 
                            &state_locus,
                            format!("outcome_map misses child terminal outcome: {child_terminal}"),
                        );
                    }
                }
                for mapped in outcome_map.keys() {
                    if !child.terminal_outcomes.contains(mapped) {
                        issue(report, 
                            &state_locus,
                            format!("outcome_map key is not a child terminal outcome: {mapped}"),
                        );
                    }
                }
                validate_one(
                    child,
                    format!("{locus}.{key}/{}", child.name),
                    machine_names,
                    report,
                );
            }
        }
    }

    // Transition table: exactly one entry per declared (state, outcome)
    // pair, no entries for undeclared pairs, targets must exist.
    for (state_name, state) in &def.states {
        for outcome in state.outcomes() {
            if !def
                .transitions
                .contains_key(&(state_name.clone(), outcome.clone()))
            {
                issue(report, 
                    &format!("{locus}.{state_name}"),
                    format!("missing transition for declared outcome: {outcome}"),
                );
            }
        }
    }
    for ((state_name, outcome), target) in &def.transitions {
        let tr_locus = format!("{locus}.{state_name}");
        match def.states.get(state_name) {
            None => {
                issue(report, &tr_locus, format!("transition source state does not exist: {state_name}"));
                continue;
            }
            Some(state) => {
                if !state.outcomes().contains(outcome) {
                    issue(report, 
                        &tr_locus,
                        format!("transition outcome not declared by state: {outcome}"),
                    );
                }
            }
        }
        match target {
            TransitionTarget::State(next) => {
                if !def.states.contains_key(next) {
                    issue(report, &tr_locus, format!("unknown transition target: {next}"));
                }
            }
            TransitionTarget::Terminal(out) => {
                if !def.terminal_outcomes.contains(out) {
                    issue(report, &tr_locus, format!("unknown terminal outcome target: {out}"));
                }
            }
        }
    }

    // Reachability from initial over the transition graph.
    if def.states.contains_key(&def.initial) {
        let mut reachable = BTreeSet::new();
        let mut queue = VecDeque::from([def.initial.clone()]);
        while let Some(s) = queue.pop_front() {
            if !reachable.insert(s.clone()) {
                continue;
            }
            for ((from, _), target) in &def.transitions {
                if from == &s {
                    if let TransitionTarget::State(next) = target {
                        if !reachable.contains(next) {
                            queue.push_back(next.clone());
                        }
                    }
                }
            }
        }
        for state_name in def.states.keys() {
            if !reachable.contains(state_name) {
                issue(report, 
                    &format!("{locus}.{state_name}"),
                    "state is unreachable from initial".into(),
                );
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hfsm::{noop_machine, ActionRef, GoalValue, StateDef};
    use std::collections::BTreeMap;

    #[test]
    fn minimal_machine_ok() {
        let report = validate_machine(&noop_machine());
        assert!(report.ok(), "{:?}", report.issues);
    }

    #[test]
    fn ghost_transition_target() {
        let mut m = noop_machine();
        m.transitions.insert(
            ("Noop".into(), "done".into()),
            TransitionTarget::State("Ghost".into()),
        );
        let report = validate_machine(&m);
        assert!(report
            .issues
            .iter()
            .any(|i| i.message.contains("unknown transition target: Ghost")
                && i.locus.contains("Noop")));
    }

    #[test]
    fn missing_transition_reported() {
        let mut m = noop_machine();
        m.transitions
            .remove(&("Noop".to_string(), "rejected".to_string()));
        let report = validate_machine(&m);
        assert!(report
            .issues
            .iter()
            .any(|i| i.message.contains("missing transition")));
    }

    #[test]
    fn unreachable_state_reported() {
        let mut m = noop_machine();
        let orphan = StateDef {
            name: "Orphan".into(),
            kind: crate::hfsm::StateKind::Atomic {
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
        m.states.insert("Orphan".into(), orphan);
        for out in ["done", "rejected"] {
            m.transitions.insert(
                ("Orphan".into(), out.into()),
                TransitionTarget::Terminal("finished".into()),
            );
        }
        let report = validate_machine(&m);
        assert!(report
            .issues
            .iter()
            .any(|i| i.message.contains("unreachable")));
    }

    #[test]
    fn composite_map_totality() {
        let child = noop_machine();
        let composite = StateDef {
            name: "Wrap".into(),
            kind: crate::hfsm::StateKind::Composite {
                child,
                // Misses the child terminal "finished" entirely.
                outcome_map: BTreeMap::new(),
            },
        };
        let mut states = BTreeMap::new();
        states.insert("Wrap".into(), composite);
        let m = crate::hfsm::MachineDef {
            name: "Parent".into(),
            states,
            initial: "Wrap".into(),
            transitions: BTreeMap::new(),
            terminal_outcomes: std::collections::BTreeSet::from(["done".to_string()]),
        };
        let report = validate_machine(&m);
        assert!(report
            .issues
            .iter()
            .any(|i| i.message.contains("misses child terminal outcome: finished")));
    }

    #[test]
    fn all_violations_reported_not_just_first() {
        let mut m = noop_machine();
        m.initial = "Nowhere".into();
        m.transitions.insert(
            ("Noop".into(), "done".into()),
            TransitionTarget::Terminal("ghost_terminal".into()),
        );
        let report = validate_machine(&m);
        assert!(report.issues.len() >= 2, "{:?}", report.issues);
    }
}
