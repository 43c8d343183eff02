//! Clock-driven execution of a validated machine.
//!
//! An execution is strictly sequential: exactly one leaf state is active
//! at any instant, atomic states dispatch an action goal on entry and
//! yield, and the machine advances only when an action result arrives.
//! The engine never looks at a clock itself; callers feed it results and
//! timestamp the emitted events.

use std::collections::BTreeMap;

use super::def::{GoalValue, MachineDef, StateKind, TransitionTarget, REJECTED_OUTCOME};
use super::validate::{validate_machine, ValidationReport};

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ContextValue {
    Int(i64),
    Str(String),
}

/// String-keyed values shared across the states of one execution.
/// Reads of never-written keys are a runtime fault.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ExecutionContext {
    entries: BTreeMap<String, ContextValue>,
}

impl ExecutionContext {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn set(&mut self, key: impl Into<String>, value: ContextValue) {
        self.entries.insert(key.into(), value);
    }

    pub fn get(&self, key: &str) -> Option<&ContextValue> {
        self.entries.get(key)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ExecutionStatus {
    Idle,
    /// Active state path from the root machine down to the single leaf.
    Running(Vec<String>),
    Completed(String),
    Faulted(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ActionStatus {
    Succeeded,
    Aborted,
    Rejected,
}

/// An action binding with all goal parameters resolved to literals.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ResolvedAction {
    pub server: String,
    pub actuator: String,
    pub target: i64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum EngineEvent {
    Entered {
        state: String,
        /// Path from root to this state, inclusive.
        path: Vec<String>,
    },
    Exited {
        state: String,
        outcome: String,
    },
    /// Request to submit a goal to an action server. The caller must
    /// answer with `on_action_result` carrying the same token.
    Dispatch {
        token: u64,
        action: ResolvedAction,
        /// Context key receiving the final position on success.
        store: Option<String>,
    },
    /// Root machine reached a terminal outcome.
    Completed {
        outcome: String,
    },
    Faulted {
        reason: String,
    },
}

#[derive(Debug)]
pub struct Execution {
    def: MachineDef,
    ctx: ExecutionContext,
    status: ExecutionStatus,
    path: Vec<String>,
    inflight: Option<InflightGoal>,
    next_token: u64,
}

#[derive(Debug)]
struct InflightGoal {
    token: u64,
    store: Option<String>,
}

impl Execution {
    /// Starts an execution: validates the machine, descends from the
    /// root initial state to the first leaf, and dispatches its action.
    pub fn start(
        def: MachineDef,
        ctx: ExecutionContext,
    ) -> Result<(Execution, Vec<EngineEvent>), ValidationReport> {
        let report = validate_machine(&def);
        if !report.ok() {
            return Err(report);
        }
        let mut exec = Execution {
            path: Vec::new(),
            status: ExecutionStatus::Idle,
            inflight: None,
            next_token: 0,
            def,
            ctx,
        };
        let mut events = Vec::new();
        let initial = exec.def.initial.clone();
        exec.enter(0, &initial, &mut events);
        exec.sync_status(&mut events);
        Ok((exec, events))
    }

    pub fn status(&self) -> &ExecutionStatus {
        &self.status
    }

    pub fn context(&self) -> &ExecutionContext {
        &self.ctx
    }

    /// Feeds the result of the in-flight action goal. `final_position`
    /// is the actuator position reported by the server (ignored unless
    /// the state stores it).
    pub fn on_action_result(
        &mut self,
        token: u64,
        status: ActionStatus,
        final_position: i64,
    ) -> Vec<EngineEvent> {
        let mut events = Vec::new();
        if !matches!(self.status, ExecutionStatus::Running(_)) {
            self.fault("stale action result: execution not running", &mut events);
            return events;
        }
        let inflight = match self.inflight.take() {
            Some(g) if g.token == token => g,
            _ => {
                self.fault("stale action result", &mut events);
                return events;
            }
        };

        let leaf_depth = self.path.len() - 1;
        let leaf_name = self.path[leaf_depth].clone();
        let leaf_machine = self.machine_at(leaf_depth);
        let state = leaf_machine
            .state(&leaf_name)
            .expect("active leaf exists in its machine");
        let outcome = match (&state.kind, status) {
            (StateKind::Atomic { on_success, .. }, ActionStatus::Succeeded) => on_success.clone(),
            (StateKind::Atomic { on_abort, .. }, ActionStatus::Aborted) => on_abort.clone(),
            (StateKind::Atomic { .. }, ActionStatus::Rejected) => REJECTED_OUTCOME.to_string(),
            (StateKind::Composite { .. }, _) => {
                self.fault("action result delivered to a composite state", &mut events);
                return events;
            }
        };
        // Runtime assertion: emitted outcomes stay in the declared set.
        if !state.outcomes().contains(&outcome) {
            self.fault(&format!("undeclared outcome emitted: {outcome}"), &mut events);
            return events;
        }
        if status == ActionStatus::Succeeded {
            if let Some(key) = inflight.store {
                self.ctx.set(key, ContextValue::Int(final_position));
            }
        }
        self.propagate_outcome(outcome, &mut events);
        self.sync_status(&mut events);
        events
    }

    /// Applies a leaf outcome, walking transitions and propagating
    /// terminal outcomes up through composite outcome maps.
    fn propagate_outcome(&mut self, mut outcome: String, events: &mut Vec<EngineEvent>) {
        loop {
            let depth = self.path.len() - 1;
            let state_name = self.path[depth].clone();
            events.push(EngineEvent::Exited {
                state: state_name.clone(),
                outcome: outcome.clone(),
            });
            let machine = self.machine_at(depth);
            let target = match machine.resolve_transition(&state_name, &outcome) {
                Ok(t) => t.clone(),
                Err(e) => {
                    self.fault(&e.to_string(), events);
                    return;
                }
            };
            self.path.pop();
            match target {
                TransitionTarget::State(next) => {
                    self.enter(depth, &next, events);
                    return;
                }
                TransitionTarget::Terminal(terminal) => {
                    if self.path.is_empty() {
                        self.status = ExecutionStatus::Completed(terminal.clone());
                        events.push(EngineEvent::Completed { outcome: terminal });
                        return;
                    }
                    // Map the child machine's terminal through the
                    // enclosing composite's outcome_map and keep going.
                    let parent_depth = self.path.len() - 1;
                    let parent_name = self.path[parent_depth].clone();
                    let parent_machine = self.machine_at(parent_depth);
                    let parent = parent_machine
                        .state(&parent_name)
                        .expect("parent composite exists");
                    let mapped = match &parent.kind {
                        StateKind::Composite { outcome_map, .. } => {
                            outcome_map.get(&terminal).cloned()
                        }
                        StateKind::Atomic { .. } => None,
                    };
                    match mapped {
                        Some(m) => outcome = m,
                        None => {
                            self.fault(
                                &format!(
                                    "unmapped child terminal outcome {terminal} in {parent_name}"
                                ),
                                events,
                            );
                            return;
                        }
                    }
                }
            }
        }
    }

    /// Enters `state` at `depth`, descending through composites until an
    /// atomic leaf dispatches its action.
    fn enter(&mut self, depth: usize, state: &str, events: &mut Vec<EngineEvent>) {
        self.path.truncate(depth);
        self.path.push(state.to_string());
        events.push(EngineEvent::Entered {
            state: state.to_string(),
            path: self.path.clone(),
        });
        // Clone the state's payload so the machine borrow ends before
        // we mutate execution bookkeeping below.
        let kind = {
            let machine = self.machine_at(depth);
            machine
                .state(state)
                .expect("validated state exists")
                .kind
                .clone()
        };
        match &kind {
            StateKind::Composite { child, .. } => {
                let child_initial = child.initial.clone();
                self.enter(depth + 1, &child_initial, events);
            }
            StateKind::Atomic { action, .. } => {
                let target = match &action.target {
                    GoalValue::Literal(v) => *v,
                    GoalValue::ContextKey(key) => match self.ctx.get(key) {
                        Some(ContextValue::Int(v)) => *v,
                        Some(ContextValue::Str(_)) => {
                            self.fault(
                                &format!("context key {key} is not numeric"),
                                events,
                            );
                            return;
                        }
                        None => {
                            self.fault(
                                &format!("context key never written: {key}"),
                                events,
                            );
                            return;
                        }
                    },
                };
                let token = self.next_token;
                self.next_token += 1;
                let resolved = ResolvedAction {
                    server: action.server.clone(),
                    actuator: action.actuator.clone(),
                    target,
                };
                self.inflight = Some(InflightGoal {
                    token,
                    store: action.store.clone(),
                });
                events.push(EngineEvent::Dispatch {
                    token,
                    action: resolved,
                    store: action.store.clone(),
                });
            }
        }
    }

    fn sync_status(&mut self, _events: &mut [EngineEvent]) {
        if matches!(
            self.status,
            ExecutionStatus::Idle | ExecutionStatus::Running(_)
        ) {
            self.status = ExecutionStatus::Running(self.path.clone());
        }
    }

    fn fault(&mut self, reason: &str, events: &mut Vec<EngineEvent>) {
        self.status = ExecutionStatus::Faulted(reason.to_string());
        self.inflight = None;
        events.push(EngineEvent::Faulted {
            reason: reason.to_string(),
        });
    }

    fn machine_at(&self, depth: usize) -> &MachineDef {
        let mut machine = &self.def;
        for name in &self.path[..depth] {
            machine = machine
                .state(name)
                .and_then(|s| s.child())
                .expect("path prefixes name composites");
        }
        machine
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hfsm::{noop_machine, ActionRef, MachineDef, StateDef, StateKind};
    use std::collections::{BTreeMap, BTreeSet};

    fn dispatch_token(events: &[EngineEvent]) -> u64 {
        events
            .iter()
            .find_map(|e| match e {
                EngineEvent::Dispatch { token, .. } => Some(*token),
                _ => None,
            })
            .expect("a dispatch event")
    }

    #[test]
    fn noop_machine_completes() {
        let (mut exec, events) =
            Execution::start(noop_machine(), ExecutionContext::new()).unwrap();
        assert!(matches!(
            events[0],
            EngineEvent::Entered { ref state, .. } if state == "Noop"
        ));
        assert_eq!(
            exec.status(),
            &ExecutionStatus::Running(vec!["Noop".to_string()])
        );
        let token = dispatch_token(&events);
        let events = exec.on_action_result(token, ActionStatus::Succeeded, 0);
        assert!(events.iter().any(|e| matches!(
            e,
            EngineEvent::Completed { outcome } if outcome == "finished"
        )));
        assert_eq!(exec.status(), &ExecutionStatus::Completed("finished".into()));
    }

    #[test]
    fn invalid_machine_rejected() {
        let mut m = noop_machine();
        m.initial = "Ghost".into();
        assert!(Execution::start(m, ExecutionContext::new()).is_err());
    }

    #[test]
    fn stale_result_faults() {
        let (mut exec, events) =
            Execution::start(noop_machine(), ExecutionContext::new()).unwrap();
        let token = dispatch_token(&events);
        let events = exec.on_action_result(token + 7, ActionStatus::Succeeded, 0);
        assert!(events
            .iter()
            .any(|e| matches!(e, EngineEvent::Faulted { reason } if reason.contains("stale"))));
        assert!(matches!(exec.status(), ExecutionStatus::Faulted(_)));
    }

    /// Root machine with one composite initial state wrapping the noop
    /// machine. Starting it must enter both levels at once.
    fn composite_machine() -> MachineDef {
        let child = noop_machine();
        let composite = StateDef {
            name: "Wrap".into(),
            kind: StateKind::Composite {
                child,
                outcome_map: BTreeMap::from([("finished".to_string(), "ok".to_string())]),
            },
        };
        MachineDef {
            name: "Parent".into(),
            states: BTreeMap::from([("Wrap".to_string(), composite)]),
            initial: "Wrap".into(),
            transitions: BTreeMap::from([(
                ("Wrap".to_string(), "ok".to_string()),
                crate::hfsm::TransitionTarget::Terminal("finished".to_string()),
            )]),
            terminal_outcomes: BTreeSet::from(["finished".to_string()]),
        }
    }

    #[test]
    fn composite_initial_enters_both_levels() {
        let (exec, events) =
            Execution::start(composite_machine(), ExecutionContext::new()).unwrap();
        let entered: Vec<&str> = events
            .iter()
            .filter_map(|e| match e {
                EngineEvent::Entered { state, .. } => Some(state.as_str()),
                _ => None,
            })
            .collect();
        assert_eq!(entered, vec!["Wrap", "Noop"]);
        assert_eq!(
            exec.status(),
            &ExecutionStatus::Running(vec!["Wrap".to_string(), "Noop".to_string()])
        );
    }

    #[test]
    fn child_terminal_propagates_through_outcome_map() {
        let (mut exec, events) =
            Execution::start(composite_machine(), ExecutionContext::new()).unwrap();
        let token = dispatch_token(&events);
        let events = exec.on_action_result(token, ActionStatus::Succeeded, 0);
        let exits: Vec<(&str, &str)> = events
            .iter()
            .filter_map(|e| match e {
                EngineEvent::Exited { state, outcome } => Some((state.as_str(), outcome.as_str())),
                _ => None,
            })
            .collect();
        assert_eq!(exits, vec![("Noop", "done"), ("Wrap", "ok")]);
        assert_eq!(exec.status(), &ExecutionStatus::Completed("finished".into()));
    }

    #[test]
    fn context_key_missing_faults() {
        let mut m = noop_machine();
        if let StateKind::Atomic { action, .. } = &mut m.states.get_mut("Noop").unwrap().kind {
            action.target = crate::hfsm::GoalValue::ContextKey("never_set".into());
        }
        let (exec, events) = Execution::start(m, ExecutionContext::new()).unwrap();
        assert!(events.iter().any(|e| matches!(
            e,
            EngineEvent::Faulted { reason } if reason.contains("never_set")
        )));
        assert!(matches!(exec.status(), ExecutionStatus::Faulted(_)));
    }

    #[test]
    fn store_then_read_chain() {
        // First state stores its final position, second state reads it
        // from the context as its target.
        let first = StateDef {
            name: "First".into(),
            kind: StateKind::Atomic {
                action: ActionRef {
                    server: "timer".into(),
                    actuator: "delay".into(),
                    target: crate::hfsm::GoalValue::Literal(5),
                    store: Some("mark".into()),
                },
                on_success: "done".into(),
                on_abort: "done".into(),
            },
        };
        let second = StateDef {
            name: "Second".into(),
            kind: StateKind::Atomic {
                action: ActionRef {
                    server: "timer".into(),
                    actuator: "delay".into(),
                    target: crate::hfsm::GoalValue::ContextKey("mark".into()),
                    store: None,
                },
                on_success: "done".into(),
                on_abort: "done".into(),
            },
        };
        let mut transitions = BTreeMap::new();
        transitions.insert(
            ("First".to_string(), "done".to_string()),
            crate::hfsm::TransitionTarget::State("Second".to_string()),
        );
        for (s, o) in [("First", "rejected"), ("Second", "rejected"), ("Second", "done")] {
            transitions.insert(
                (s.to_string(), o.to_string()),
                crate::hfsm::TransitionTarget::Terminal("finished".to_string()),
            );
        }
        let m = MachineDef {
            name: "Chain".into(),
            states: BTreeMap::from([
                ("First".to_string(), first),
                ("Second".to_string(), second),
            ]),
            initial: "First".into(),
            transitions,
            terminal_outcomes: BTreeSet::from(["finished".to_string()]),
        };
        let (mut exec, events) = Execution::start(m, ExecutionContext::new()).unwrap();
        let token = dispatch_token(&events);
        let events = exec.on_action_result(token, ActionStatus::Succeeded, 5);
        let dispatched = events
            .iter()
            .find_map(|e| match e {
                EngineEvent::Dispatch { action, .. } => Some(action.clone()),
                _ => None,
            })
            .expect("second dispatch");
        assert_eq!(dispatched.target, 5);
        assert_eq!(
            exec.context().get("mark"),
            Some(&ContextValue::Int(5))
        );
    }
}
