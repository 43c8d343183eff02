//! Hierarchical state machine definitions.
//!
//! A machine is a set of named states wired by an outcome-labeled
//! transition table. States are either atomic (bound to an action goal)
//! or composite (nesting a child machine whose terminal outcomes map
//! onto the parent state's outcomes).

use std::collections::{BTreeMap, BTreeSet};

/// Reserved outcome emitted by an atomic state whose action goal was
/// rejected by its server. Machines must map it like any other outcome.
pub const REJECTED_OUTCOME: &str = "rejected";

/// A goal parameter: either a literal value or a context-key reference
/// resolved against the execution context at dispatch time.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum GoalValue {
    Literal(i64),
    ContextKey(String),
}

/// Binding of an atomic state to an action server goal.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ActionRef {
    /// Action server name, e.g. `move_motor` or the built-in `timer`.
    pub server: String,
    /// Actuator id within the server (ignored by `timer`).
    pub actuator: String,
    /// Goal target in ticks (or milliseconds for `timer`).
    pub target: GoalValue,
    /// Optional context key receiving the final position on success.
    pub store: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum StateKind {
    Atomic {
        action: ActionRef,
        /// Outcome emitted when the action succeeds.
        on_success: String,
        /// Outcome emitted when the action aborts.
        on_abort: String,
    },
    Composite {
        child: MachineDef,
        /// Child terminal outcome -> this state's outcome. Must be total
        /// over the child's declared terminal outcomes.
        outcome_map: BTreeMap<String, String>,
    },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StateDef {
    pub name: String,
    pub kind: StateKind,
}

impl StateDef {
    /// The declared outcome set of this state. Atomic states always
    /// include the reserved `rejected` outcome.
    pub fn outcomes(&self) -> BTreeSet<String> {
        match &self.kind {
            StateKind::Atomic {
                on_success,
                on_abort,
                ..
            } => {
                let mut set = BTreeSet::new();
                set.insert(on_success.clone());
                set.insert(on_abort.clone());
                set.insert(REJECTED_OUTCOME.to_string());
                set
            }
            StateKind::Composite { outcome_map, .. } => {
                outcome_map.values().cloned().collect()
            }
        }
    }

    pub fn is_composite(&self) -> bool {
        matches!(self.kind, StateKind::Composite { .. })
    }

    pub fn child(&self) -> Option<&MachineDef> {
        match &self.kind {
            StateKind::Composite { child, .. } => Some(child),
            StateKind::Atomic { .. } => None,
        }
    }
}

/// Where a transition leads: another state of the same machine, or one
/// of the machine's declared terminal outcomes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TransitionTarget {
    State(String),
    Terminal(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MachineDef {
    pub name: String,
    /// States keyed by name; the key always equals `StateDef::name`.
    pub states: BTreeMap<String, StateDef>,
    pub initial: String,
    /// (state name, outcome label) -> target.
    pub transitions: BTreeMap<(String, String), TransitionTarget>,
    pub terminal_outcomes: BTreeSet<String>,
}

impl MachineDef {
    pub fn state(&self, name: &str) -> Option<&StateDef> {
        self.states.get(name)
    }

    /// Looks up the unique transition entry for (state, outcome).
    pub fn resolve_transition(
        &self,
        state: &str,
        outcome: &str,
    ) -> Result<&TransitionTarget, UnmappedOutcome> {
        self.transitions
            .get(&(state.to_string(), outcome.to_string()))
            .ok_or_else(|| UnmappedOutcome {
                machine: self.name.clone(),
                state: state.to_string(),
                outcome: outcome.to_string(),
            })
    }
}

/// A (state, outcome) pair with no transition entry. The validator
/// rejects machines that can produce this at runtime.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unmapped outcome: machine {machine}, state {state}, outcome {outcome}")]
pub struct UnmappedOutcome {
    pub machine: String,
    pub state: String,
    pub outcome: String,
}

/// True for the token charset accepted in names, outcome labels,
/// actuator ids and context keys.
pub fn is_token(s: &str) -> bool {
    !s.is_empty()
        && s.chars()
            .all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-' || c == '.')
}
