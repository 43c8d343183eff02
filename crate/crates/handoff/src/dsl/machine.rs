//! Parser and canonical serializer for `.machine` documents.
//!
//! A document declares one or more named machines; composite states
//! reference a sibling machine by name, and the `root:` header (or the
//! first machine) selects the entry point. The schema is strict:
//! unknown or duplicated fields are errors.

use std::collections::{BTreeMap, BTreeSet};

use crate::hfsm::{
    is_token, validate_machine, ActionRef, GoalValue, MachineDef, StateDef, StateKind,
    TransitionTarget,
};

use super::diag::{has_error_diags, ParseDiagnostic};
use super::reader::{lex, parse_i64_token, KeyLine};

/// Successful parses may still carry warnings.
pub type ParseResult<T> = Result<(T, Vec<ParseDiagnostic>), Vec<ParseDiagnostic>>;

#[derive(Debug, Default)]
struct RawState {
    name: String,
    line: usize,
    kind: Option<String>,
    server: Option<String>,
    actuator: Option<String>,
    target: Option<String>,
    success: Option<String>,
    abort: Option<String>,
    store: Option<String>,
    child: Option<String>,
    maps: Vec<(String, String)>,
}

#[derive(Debug, Default)]
struct RawMachine {
    name: String,
    line: usize,
    initial: Option<String>,
    terminals: Vec<String>,
    states: Vec<RawState>,
    transitions: Vec<(String, String, String, usize, usize)>,
}

pub fn parse_machine(text: &str) -> ParseResult<MachineDef> {
    let mut diags = Vec::new();
    let lines = lex(text, &mut diags);

    let mut version_seen = false;
    let mut root: Option<String> = None;
    let mut machines: Vec<RawMachine> = Vec::new();
    let mut current_machine: Option<RawMachine> = None;
    let mut current_state: Option<RawState> = None;

    let set_once = |slot: &mut Option<String>, line: &KeyLine, diags: &mut Vec<ParseDiagnostic>| {
        if slot.is_some() {
            diags.push(ParseDiagnostic::error(
                line.line,
                line.key_col,
                format!("duplicate field: {}", line.key),
            ));
        } else {
            *slot = Some(line.value.clone());
        }
    };

    for line in &lines {
        match (&mut current_machine, &mut current_state, line.key.as_str()) {
            (None, None, "version") => {
                if version_seen {
                    diags.push(ParseDiagnostic::error(line.line, line.key_col, "duplicate field: version"));
                } else if line.value != "1" {
                    diags.push(ParseDiagnostic::error(
                        line.line,
                        line.value_col,
                        format!("unsupported version: {}", line.value),
                    ));
                }
                version_seen = true;
            }
            (None, None, "root") => set_once(&mut root, line, &mut diags),
            (None, None, "machine") => {
                current_machine = Some(RawMachine {
                    name: line.value.clone(),
                    line: line.line,
                    ..RawMachine::default()
                });
            }
            (None, None, _) => diags.push(ParseDiagnostic::error(
                line.line,
                line.key_col,
                format!("unknown field: {}", line.key),
            )),
            (Some(machine), None, key) => match key {
                "initial" => set_once(&mut machine.initial, line, &mut diags),
                "terminal" => machine.terminals.push(line.value.clone()),
                "state" => {
                    current_state = Some(RawState {
                        name: line.value.clone(),
                        line: line.line,
                        ..RawState::default()
                    });
                }
                "transition" => {
                    if let Some(parts) = parse_transition_value(&line.value) {
                        machine.transitions.push((
                            parts.0,
                            parts.1,
                            parts.2,
                            line.line,
                            line.value_col,
                        ));
                    } else {
                        diags.push(ParseDiagnostic::error(
                            line.line,
                            line.value_col,
                            "expected 'transition: <state> / <outcome> -> <target>'",
                        ));
                    }
                }
                "end" => {
                    if line.value != "machine" {
                        diags.push(ParseDiagnostic::error(
                            line.line,
                            line.value_col,
                            format!("expected 'end: machine', got 'end: {}'", line.value),
                        ));
                    }
                    machines.push(current_machine.take().unwrap());
                }
                _ => diags.push(ParseDiagnostic::error(
                    line.line,
                    line.key_col,
                    format!("unknown field in machine section: {key}"),
                )),
            },
            (Some(_), Some(state), key) => match key {
                "kind" => set_once(&mut state.kind, line, &mut diags),
                "server" => set_once(&mut state.server, line, &mut diags),
                "actuator" => set_once(&mut state.actuator, line, &mut diags),
                "target" => set_once(&mut state.target, line, &mut diags),
                "success" => set_once(&mut state.success, line, &mut diags),
                "abort" => set_once(&mut state.abort, line, &mut diags),
                "store" => set_once(&mut state.store, line, &mut diags),
                "child" => set_once(&mut state.child, line, &mut diags),
                "map" => {
                    if let Some((from, to)) = line.value.split_once("->") {
                        state.maps.push((from.trim().to_string(), to.trim().to_string()));
                    } else {
                        diags.push(ParseDiagnostic::error(
                            line.line,
                            line.value_col,
                            "expected 'map: <child terminal> -> <outcome>'",
                        ));
                    }
                }
                "end" => {
                    if line.value != "state" {
                        diags.push(ParseDiagnostic::error(
                            line.line,
                            line.value_col,
                            format!("expected 'end: state', got 'end: {}'", line.value),
                        ));
                    }
                    let finished = current_state.take().unwrap();
                    current_machine.as_mut().unwrap().states.push(finished);
                }
                _ => diags.push(ParseDiagnostic::error(
                    line.line,
                    line.key_col,
                    format!("unknown field in state section: {key}"),
                )),
            },
            (None, Some(_), _) => unreachable!("state sections only open inside machines"),
        }
    }
    if let Some(state) = &current_state {
        diags.push(ParseDiagnostic::error(
            state.line,
            1,
            format!("state section never closed: {}", state.name),
        ));
    }
    if let Some(machine) = &current_machine {
        diags.push(ParseDiagnostic::error(
            machine.line,
            1,
            format!("machine section never closed: {}", machine.name),
        ));
    }
    if !version_seen {
        diags.push(ParseDiagnostic::error(1, 1, "missing required field: version"));
    }
    if machines.is_empty() && current_machine.is_none() {
        diags.push(ParseDiagnostic::error(1, 1, "document declares no machine"));
    }
    if has_error_diags(&diags) {
        return Err(diags);
    }

    // Resolve the machine graph into one nested MachineDef.
    let mut by_name: BTreeMap<String, &RawMachine> = BTreeMap::new();
    for machine in &machines {
        if by_name.insert(machine.name.clone(), machine).is_some() {
            diags.push(ParseDiagnostic::error(
                machine.line,
                1,
                format!("duplicate machine name: {}", machine.name),
            ));
        }
    }
    let root_name = root.unwrap_or_else(|| machines[0].name.clone());
    if !by_name.contains_key(&root_name) {
        diags.push(ParseDiagnostic::error(1, 1, format!("unknown root machine: {root_name}")));
    }
    if has_error_diags(&diags) {
        return Err(diags);
    }

    let mut used = BTreeSet::new();
    let mut stack = Vec::new();
    let def = build_machine(&root_name, &by_name, &mut used, &mut stack, &mut diags);
    if has_error_diags(&diags) {
        return Err(diags);
    }
    let def = def.expect("no errors implies a machine");

    for machine in &machines {
        if !used.contains(&machine.name) {
            diags.push(ParseDiagnostic::warning(
                machine.line,
                1,
                format!("machine is never referenced: {}", machine.name),
            ));
        }
    }

    // The structural validator gets the last word; its issues are
    // anchored to the root machine's section line.
    let root_line = by_name[&root_name].line;
    let report = validate_machine(&def);
    for issue in report.issues {
        diags.push(ParseDiagnostic::error(root_line, 1, issue.to_string()));
    }
    if has_error_diags(&diags) {
        return Err(diags);
    }
    Ok((def, diags))
}

pub fn parse_machine_bytes(bytes: &[u8]) -> ParseResult<MachineDef> {
    match super::reader::decode_utf8(bytes) {
        Ok(text) => parse_machine(text),
        Err(diag) => Err(vec![diag]),
    }
}

fn parse_transition_value(value: &str) -> Option<(String, String, String)> {
    let (source, target) = value.split_once("->")?;
    let (state, outcome) = source.split_once('/')?;
    let (state, outcome, target) = (state.trim(), outcome.trim(), target.trim());
    if state.is_empty() || outcome.is_empty() || target.is_empty() {
        return None;
    }
    Some((state.to_string(), outcome.to_string(), target.to_string()))
}

fn build_machine(
    name: &str,
    by_name: &BTreeMap<String, &RawMachine>,
    used: &mut BTreeSet<String>,
    stack: &mut Vec<String>,
    diags: &mut Vec<ParseDiagnostic>,
) -> Option<MachineDef> {
    let raw = by_name.get(name)?;
    if stack.iter().any(|s| s == name) {
        diags.push(ParseDiagnostic::error(
            raw.line,
            1,
            format!("recursive child machine reference: {name}"),
        ));
        return None;
    }
    used.insert(name.to_string());
    stack.push(name.to_string());

    let mut states = BTreeMap::new();
    for raw_state in &raw.states {
        let Some(state) = build_state(raw_state, by_name, used, stack, diags) else {
            continue;
        };
        if states.insert(state.name.clone(), state).is_some() {
            diags.push(ParseDiagnostic::error(
                raw_state.line,
                1,
                format!("duplicate state name: {}", raw_state.name),
            ));
        }
    }

    let mut transitions = BTreeMap::new();
    for (state, outcome, target, line, col) in &raw.transitions {
        let target = match target.strip_prefix('!') {
            Some(terminal) => TransitionTarget::Terminal(terminal.to_string()),
            None => TransitionTarget::State(target.clone()),
        };
        if transitions
            .insert((state.clone(), outcome.clone()), target)
            .is_some()
        {
            diags.push(ParseDiagnostic::error(
                *line,
                *col,
                format!("duplicate transition for ({state}, {outcome})"),
            ));
        }
    }

    let initial = match &raw.initial {
        Some(i) => i.clone(),
        None => {
            diags.push(ParseDiagnostic::error(
                raw.line,
                1,
                format!("missing required field: initial (machine {})", raw.name),
            ));
            String::new()
        }
    };

    stack.pop();
    Some(MachineDef {
        name: raw.name.clone(),
        states,
        initial,
        transitions,
        terminal_outcomes: raw.terminals.iter().cloned().collect(),
    })
}

fn build_state(
    raw: &RawState,
    by_name: &BTreeMap<String, &RawMachine>,
    used: &mut BTreeSet<String>,
    stack: &mut Vec<String>,
    diags: &mut Vec<ParseDiagnostic>,
) -> Option<StateDef> {
    let mut error = |message: String| {
        diags.push(ParseDiagnostic::error(raw.line, 1, message));
    };
    let kind = match raw.kind.as_deref() {
        Some("atomic") => true,
        Some("composite") => false,
        Some(other) => {
            error(format!(
                "state {}: kind must be 'atomic' or 'composite', got {other:?}",
                raw.name
            ));
            return None;
        }
        None => {
            error(format!("state {}: missing required field: kind", raw.name));
            return None;
        }
    };
    if kind {
        for (field, present) in [
            ("child", raw.child.is_some()),
            ("map", !raw.maps.is_empty()),
        ] {
            if present {
                error(format!(
                    "state {}: field {field} is not allowed for atomic states",
                    raw.name
                ));
            }
        }
        let mut missing = Vec::new();
        for (field, present) in [
            ("server", raw.server.is_some()),
            ("actuator", raw.actuator.is_some()),
            ("target", raw.target.is_some()),
            ("success", raw.success.is_some()),
            ("abort", raw.abort.is_some()),
        ] {
            if !present {
                missing.push(field);
            }
        }
        if !missing.is_empty() {
            for field in missing {
                error(format!(
                    "state {}: missing required field: {field}",
                    raw.name
                ));
            }
            return None;
        }
        let target_raw = raw.target.as_deref().unwrap();
        let target = if let Some(key) = target_raw.strip_prefix('@') {
            if !is_token(key) {
                error(format!("state {}: bad context key: {key:?}", raw.name));
                return None;
            }
            GoalValue::ContextKey(key.to_string())
        } else {
            let mut local = Vec::new();
            let value = parse_i64_token(target_raw, raw.line, 1, "target", &mut local)?;
            diags.extend(local);
            GoalValue::Literal(value)
        };
        Some(StateDef {
            name: raw.name.clone(),
            kind: StateKind::Atomic {
                action: ActionRef {
                    server: raw.server.clone().unwrap(),
                    actuator: raw.actuator.clone().unwrap(),
                    target,
                    store: raw.store.clone(),
                },
                on_success: raw.success.clone().unwrap(),
                on_abort: raw.abort.clone().unwrap(),
            },
        })
    } else {
        for (field, present) in [
            ("server", raw.server.is_some()),
            ("actuator", raw.actuator.is_some()),
            ("target", raw.target.is_some()),
            ("success", raw.success.is_some()),
            ("abort", raw.abort.is_some()),
            ("store", raw.store.is_some()),
        ] {
            if present {
                error(format!(
                    "state {}: field {field} is not allowed for composite states",
                    raw.name
                ));
            }
        }
        let Some(child_name) = &raw.child else {
            error(format!("state {}: missing required field: child", raw.name));
            return None;
        };
        if !by_name.contains_key(child_name) {
            error(format!(
                "state {}: unknown child machine: {child_name}",
                raw.name
            ));
            return None;
        }
        let child = build_machine(child_name, by_name, used, stack, diags)?;
        Some(StateDef {
            name: raw.name.clone(),
            kind: StateKind::Composite {
                child,
                outcome_map: raw.maps.iter().cloned().collect(),
            },
        })
    }
}

/// Canonical serialization: machines and states in sorted name order,
/// transitions sorted, LF line endings. `parse_machine` of the output
/// reproduces an equal MachineDef.
pub fn serialize_machine(def: &MachineDef) -> String {
    let mut flattened = BTreeMap::new();
    collect_machines(def, &mut flattened);
    let mut out = String::from("version: 1\n");
    out.push_str(&format!("root: {}\n", def.name));
    for machine in flattened.values() {
        out.push('\n');
        out.push_str(&format!("machine: {}\n", machine.name));
        out.push_str(&format!("initial: {}\n", machine.initial));
        for terminal in &machine.terminal_outcomes {
            out.push_str(&format!("terminal: {terminal}\n"));
        }
        for state in machine.states.values() {
            out.push_str(&format!("state: {}\n", state.name));
            match &state.kind {
                StateKind::Atomic {
                    action,
                    on_success,
                    on_abort,
                } => {
                    out.push_str("kind: atomic\n");
                    out.push_str(&format!("server: {}\n", action.server));
                    out.push_str(&format!("actuator: {}\n", action.actuator));
                    match &action.target {
                        GoalValue::Literal(v) => out.push_str(&format!("target: {v}\n")),
                        GoalValue::ContextKey(k) => out.push_str(&format!("target: @{k}\n")),
                    }
                    out.push_str(&format!("success: {on_success}\n"));
                    out.push_str(&format!("abort: {on_abort}\n"));
                    if let Some(store) = &action.store {
                        out.push_str(&format!("store: {store}\n"));
                    }
                }
                StateKind::Composite { child, outcome_map } => {
                    out.push_str("kind: composite\n");
                    out.push_str(&format!("child: {}\n", child.name));
                    for (from, to) in outcome_map {
                        out.push_str(&format!("map: {from} -> {to}\n"));
                    }
                }
            }
            out.push_str("end: state\n");
        }
        for ((state, outcome), target) in &machine.transitions {
            let target = match target {
                TransitionTarget::State(s) => s.clone(),
                TransitionTarget::Terminal(t) => format!("!{t}"),
            };
            out.push_str(&format!("transition: {state} / {outcome} -> {target}\n"));
        }
        out.push_str("end: machine\n");
    }
    out
}

fn collect_machines<'a>(def: &'a MachineDef, into: &mut BTreeMap<String, &'a MachineDef>) {
    into.insert(def.name.clone(), def);
    for state in def.states.values() {
        if let Some(child) = state.child() {
            collect_machines(child, into);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hfsm::noop_machine;

    const NOOP_DOC: &str = "\
version: 1
machine: Noop
initial: Noop
terminal: finished
state: Noop
kind: atomic
server: timer
actuator: delay
target: 0
success: done
abort: done
end: state
transition: Noop / done -> !finished
transition: Noop / rejected -> !finished
end: machine
";

    #[test]
    fn parse_minimal_machine() {
        let (def, warnings) = parse_machine(NOOP_DOC).unwrap();
        assert!(warnings.is_empty());
        assert_eq!(def, noop_machine());
    }

    #[test]
    fn missing_initial_diagnosed() {
        let doc = NOOP_DOC.replace("initial: Noop\n", "");
        let diags = parse_machine(&doc).unwrap_err();
        assert!(
            diags
                .iter()
                .any(|d| d.message.contains("missing required field: initial")),
            "{diags:?}"
        );
    }

    #[test]
    fn unknown_field_is_strict_error() {
        let doc = NOOP_DOC.replace("server: timer\n", "server: timer\ncolour: red\n");
        let diags = parse_machine(&doc).unwrap_err();
        assert!(diags.iter().any(|d| d.message.contains("unknown field")
            && d.message.contains("colour")));
    }

    #[test]
    fn duplicate_key_diagnosed() {
        let doc = NOOP_DOC.replace("target: 0\n", "target: 0\ntarget: 1\n");
        let diags = parse_machine(&doc).unwrap_err();
        assert!(diags
            .iter()
            .any(|d| d.message.contains("duplicate field: target")));
    }

    #[test]
    fn bad_enum_value_diagnosed() {
        let doc = NOOP_DOC.replace("kind: atomic", "kind: quantum");
        let diags = parse_machine(&doc).unwrap_err();
        assert!(diags.iter().any(|d| d.message.contains("quantum")));
    }

    #[test]
    fn diagnostics_locate_every_error() {
        let doc = "version: 1\nmachine: M\nbogus: x\nnonsense: y\ninitial: A\nend: machine\n";
        let diags = parse_machine(doc).unwrap_err();
        assert!(diags.len() >= 2);
        for d in &diags {
            assert!(d.line >= 1 && d.line <= 6, "{d:?}");
            assert!(d.column >= 1);
        }
    }

    #[test]
    fn recursive_child_machine_rejected() {
        let doc = "\
version: 1
machine: A
initial: S
terminal: finished
state: S
kind: composite
child: A
map: finished -> done
end: state
transition: S / done -> !finished
end: machine
";
        let diags = parse_machine(doc).unwrap_err();
        assert!(diags
            .iter()
            .any(|d| d.message.contains("recursive child machine reference: A")));
    }

    #[test]
    fn roundtrip_noop() {
        let doc = serialize_machine(&noop_machine());
        let (def, _) = parse_machine(&doc).unwrap();
        assert_eq!(def, noop_machine());
    }

    #[test]
    fn serialization_is_canonical_under_reordering() {
        // Same machine with sections in scrambled order parses to the
        // same canonical serialization.
        let scrambled = "\
version: 1
machine: Noop
terminal: finished
state: Noop
kind: atomic
abort: done
success: done
target: 0
actuator: delay
server: timer
end: state
transition: Noop / rejected -> !finished
transition: Noop / done -> !finished
initial: Noop
end: machine
";
        let (def, _) = parse_machine(scrambled).unwrap();
        assert_eq!(serialize_machine(&def), serialize_machine(&noop_machine()));
    }

    #[test]
    fn parse_never_panics_on_garbage() {
        for input in [
            "",
            ":",
            ":::",
            "version: 2",
            "end: machine",
            "machine: \u{1F600}",
            "machine: M\nstate: S\n",
        ] {
            let _ = parse_machine(input);
        }
        let _ = parse_machine_bytes(&[0xff, 0xfe, 0x00]);
    }
}
