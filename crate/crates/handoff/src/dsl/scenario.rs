//! Parser for `.scenario` documents plus behavior-file resolution.

use std::collections::BTreeMap;
use std::path::PathBuf;

use crate::actuation::ActuatorModel;
use crate::bus::{BridgeRule, LatencyModel, LinkSchedule};
use crate::hfsm::ContextValue;
use crate::scenario::{RobotSpec, Scenario, Severity};

use super::diag::{has_error_diags, DiagSeverity, ParseDiagnostic};
use super::machine::{parse_machine_bytes, ParseResult};
use super::reader::{lex, parse_i64_token, parse_u64, KeyLine};

/// Where robot behaviors referenced by `behavior:` lines come from.
pub trait BehaviorSource {
    fn load(&self, name: &str) -> Result<Vec<u8>, String>;
}

/// Loads behaviors as files relative to a directory — normally the
/// directory containing the scenario document.
pub struct DirSource {
    pub root: PathBuf,
}

impl BehaviorSource for DirSource {
    fn load(&self, name: &str) -> Result<Vec<u8>, String> {
        std::fs::read(self.root.join(name)).map_err(|e| e.to_string())
    }
}

/// In-memory source for tests.
#[derive(Debug, Default)]
pub struct MapSource(pub BTreeMap<String, String>);

impl BehaviorSource for MapSource {
    fn load(&self, name: &str) -> Result<Vec<u8>, String> {
        self.0
            .get(name)
            .map(|s| s.clone().into_bytes())
            .ok_or_else(|| format!("no such behavior: {name}"))
    }
}

#[derive(Debug, Default)]
struct RawRobot {
    id: String,
    line: usize,
    domain: Option<(u32, usize)>,
    behavior: Option<(String, usize, usize)>,
    trigger_topic: Option<String>,
    successor: Option<String>,
    probe_peer: Option<String>,
    ping_interval: Option<u64>,
    success: Option<String>,
    actuators: Vec<ActuatorModel>,
    params: BTreeMap<String, ContextValue>,
}

pub fn parse_scenario(text: &str, behaviors: &dyn BehaviorSource) -> ParseResult<Scenario> {
    let mut diags = Vec::new();
    let lines = lex(text, &mut diags);

    let mut version_seen = false;
    let mut mission: Option<String> = None;
    let mut seed: Option<u64> = None;
    let mut epochs: Option<u64> = None;
    let mut horizon: Option<(u64, usize)> = None;
    let mut ping_interval: Option<(u64, usize)> = None;
    let mut feedback_interval: Option<(u64, usize)> = None;
    let mut latency: Option<LatencyModel> = None;
    let mut bridges: Vec<BridgeRule> = Vec::new();
    // Raw outage intervals per pair; merged per pair at the end.
    let mut outages: Vec<(String, String, u64, u64, usize)> = Vec::new();
    let mut robots: Vec<RawRobot> = Vec::new();
    let mut current: Option<RawRobot> = None;

    for line in &lines {
        match (&mut current, line.key.as_str()) {
            (None, "version") => {
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
            (None, "mission") => {
                set_string(&mut mission, line, &mut diags);
            }
            (None, "seed") => {
                if dup_check(seed.is_some(), line, &mut diags) {
                    seed = parse_u64(line, "seed", &mut diags);
                }
            }
            (None, "epochs") => {
                if dup_check(epochs.is_some(), line, &mut diags) {
                    epochs = parse_u64(line, "epochs", &mut diags);
                }
            }
            (None, "horizon") => {
                if dup_check(horizon.is_some(), line, &mut diags) {
                    horizon = parse_u64(line, "horizon", &mut diags).map(|v| (v, line.line));
                }
            }
            (None, "ping_interval") => {
                if dup_check(ping_interval.is_some(), line, &mut diags) {
                    ping_interval =
                        parse_u64(line, "ping_interval", &mut diags).map(|v| (v, line.line));
                }
            }
            (None, "feedback_interval") => {
                if dup_check(feedback_interval.is_some(), line, &mut diags) {
                    feedback_interval =
                        parse_u64(line, "feedback_interval", &mut diags).map(|v| (v, line.line));
                }
            }
            (None, "latency") => {
                if dup_check(latency.is_some(), line, &mut diags) {
                    latency = parse_latency(line, &mut diags);
                }
            }
            (None, "bridge") => {
                if let Some(rule) = parse_bridge(line, &mut diags) {
                    bridges.push(rule);
                }
            }
            (None, "outage") => {
                if let Some(o) = parse_outage(line, &mut diags) {
                    outages.push(o);
                }
            }
            (None, "robot") => {
                current = Some(RawRobot {
                    id: line.value.clone(),
                    line: line.line,
                    ..RawRobot::default()
                });
            }
            (None, other) => diags.push(ParseDiagnostic::error(
                line.line,
                line.key_col,
                format!("unknown field: {other}"),
            )),
            (Some(robot), key) => match key {
                "domain" => {
                    if dup_check(robot.domain.is_some(), line, &mut diags) {
                        robot.domain = line
                            .value
                            .parse::<u32>()
                            .ok()
                            .map(|d| (d, line.line))
                            .or_else(|| {
                                diags.push(ParseDiagnostic::error(
                                    line.line,
                                    line.value_col,
                                    format!("domain must be a small integer, got {:?}", line.value),
                                ));
                                None
                            });
                    }
                }
                "behavior" => {
                    if dup_check(robot.behavior.is_some(), line, &mut diags) {
                        robot.behavior = Some((line.value.clone(), line.line, line.value_col));
                    }
                }
                "trigger_topic" => set_string(&mut robot.trigger_topic, line, &mut diags),
                "successor" => set_string(&mut robot.successor, line, &mut diags),
                "probe_peer" => set_string(&mut robot.probe_peer, line, &mut diags),
                "ping_interval" => {
                    if dup_check(robot.ping_interval.is_some(), line, &mut diags) {
                        robot.ping_interval = parse_u64(line, "ping_interval", &mut diags);
                        if robot.ping_interval == Some(0) {
                            diags.push(ParseDiagnostic::error(
                                line.line,
                                line.value_col,
                                "ping_interval must be positive",
                            ));
                        }
                    }
                }
                "success" => set_string(&mut robot.success, line, &mut diags),
                "actuator" => {
                    if let Some(model) = parse_actuator(line, &mut diags) {
                        robot.actuators.push(model);
                    }
                }
                "param" => {
                    if let Some((k, v)) = parse_param(line, &mut diags) {
                        if robot.params.insert(k, v).is_some() {
                            diags.push(ParseDiagnostic::error(
                                line.line,
                                line.value_col,
                                "duplicate param key",
                            ));
                        }
                    }
                }
                "end" => {
                    if line.value != "robot" {
                        diags.push(ParseDiagnostic::error(
                            line.line,
                            line.value_col,
                            format!("expected 'end: robot', got 'end: {}'", line.value),
                        ));
                    }
                    robots.push(current.take().unwrap());
                }
                other => diags.push(ParseDiagnostic::error(
                    line.line,
                    line.key_col,
                    format!("unknown field in robot section: {other}"),
                )),
            },
        }
    }
    if let Some(robot) = &current {
        diags.push(ParseDiagnostic::error(
            robot.line,
            1,
            format!("robot section never closed: {}", robot.id),
        ));
    }
    if !version_seen {
        diags.push(ParseDiagnostic::error(1, 1, "missing required field: version"));
    }
    let mission = mission.unwrap_or_else(|| {
        diags.push(ParseDiagnostic::error(1, 1, "missing required field: mission"));
        String::new()
    });
    let horizon = horizon.unwrap_or_else(|| {
        diags.push(ParseDiagnostic::error(1, 1, "missing required field: horizon"));
        (0, 1)
    });
    let epochs = match epochs {
        Some(e) if e == 0 || e > u32::MAX as u64 => {
            diags.push(ParseDiagnostic::error(1, 1, "epochs out of range"));
            1
        }
        Some(e) => e as u32,
        None => 1,
    };
    if ping_interval.is_some_and(|(v, _)| v == 0) {
        let line = ping_interval.unwrap().1;
        diags.push(ParseDiagnostic::error(line, 1, "ping_interval must be positive"));
    }
    if feedback_interval.is_some_and(|(v, _)| v == 0) {
        let line = feedback_interval.unwrap().1;
        diags.push(ParseDiagnostic::error(line, 1, "feedback_interval must be positive"));
    }
    if has_error_diags(&diags) {
        return Err(diags);
    }

    let mut sc = Scenario::new(mission, seed.unwrap_or(0), horizon.0);
    sc.epochs = epochs;
    if let Some((v, _)) = ping_interval {
        sc.ping_interval = v;
    }
    if let Some((v, _)) = feedback_interval {
        sc.feedback_interval = v;
    }
    if let Some(model) = latency {
        sc.latency = model;
    }
    sc.bridges = bridges;

    // Merge outage lines per unordered pair, warning on overlaps since
    // they usually signal a typo in hand-written schedules.
    let mut per_pair: BTreeMap<(String, String), (Vec<(u64, u64)>, usize)> = BTreeMap::new();
    for (x, y, start, end, line) in outages {
        let key = if x <= y { (x, y) } else { (y, x) };
        let entry = per_pair.entry(key).or_insert((Vec::new(), line));
        if entry.0.iter().any(|&(s, e)| start < e && s < end) {
            diags.push(ParseDiagnostic::warning(
                line,
                1,
                "outage overlaps an earlier interval for the same link; merging",
            ));
        }
        entry.0.push((start, end));
    }
    for ((a, b), (intervals, _)) in per_pair {
        sc.links.push(LinkSchedule::new(a, b, intervals));
    }

    let mut robot_lines: BTreeMap<String, usize> = BTreeMap::new();
    for raw in robots {
        robot_lines.entry(raw.id.clone()).or_insert(raw.line);
        let Some((domain, _)) = raw.domain else {
            diags.push(ParseDiagnostic::error(
                raw.line,
                1,
                format!("robot {}: missing required field: domain", raw.id),
            ));
            continue;
        };
        let Some((behavior_name, bline, bcol)) = raw.behavior else {
            diags.push(ParseDiagnostic::error(
                raw.line,
                1,
                format!("robot {}: missing required field: behavior", raw.id),
            ));
            continue;
        };
        let bytes = match behaviors.load(&behavior_name) {
            Ok(bytes) => bytes,
            Err(e) => {
                diags.push(ParseDiagnostic::error(
                    bline,
                    bcol,
                    format!("cannot load behavior {behavior_name:?}: {e}"),
                ));
                continue;
            }
        };
        let behavior = match parse_machine_bytes(&bytes) {
            Ok((def, inner_warnings)) => {
                for w in inner_warnings {
                    diags.push(ParseDiagnostic::warning(
                        bline,
                        bcol,
                        format!("{behavior_name}:{w}"),
                    ));
                }
                def
            }
            Err(inner) => {
                for d in inner {
                    diags.push(ParseDiagnostic::error(
                        bline,
                        bcol,
                        format!("{behavior_name}:{d}"),
                    ));
                }
                continue;
            }
        };
        let mut spec = RobotSpec::new(raw.id, domain, behavior);
        spec.behavior_path = behavior_name;
        if let Some(topic) = raw.trigger_topic {
            spec.trigger_topic = topic;
        }
        spec.successor = raw.successor;
        spec.probe_peer = raw.probe_peer;
        spec.ping_interval = raw.ping_interval;
        if let Some(success) = raw.success {
            spec.success_outcome = success;
        }
        spec.actuators = raw.actuators;
        spec.params = raw.params;
        sc.robots.push(spec);
    }
    if has_error_diags(&diags) {
        return Err(diags);
    }

    // Cross-reference validation. Issues mentioning a robot are
    // anchored to that robot's section line.
    for issue in crate::scenario::validate_scenario(&sc) {
        let line = robot_lines
            .iter()
            .find(|(id, _)| issue.message.starts_with(&format!("robot {id}")))
            .map(|(_, line)| *line)
            .unwrap_or(1);
        let diag = match issue.severity {
            Severity::Error => ParseDiagnostic::error(line, 1, issue.message),
            Severity::Warning => ParseDiagnostic::warning(line, 1, issue.message),
        };
        diags.push(diag);
    }
    if has_error_diags(&diags) {
        return Err(diags);
    }
    Ok((sc, diags))
}

pub fn parse_scenario_bytes(bytes: &[u8], behaviors: &dyn BehaviorSource) -> ParseResult<Scenario> {
    match super::reader::decode_utf8(bytes) {
        Ok(text) => parse_scenario(text, behaviors),
        Err(diag) => Err(vec![diag]),
    }
}

/// True when the parse succeeded and carries no error diagnostics —
/// used by callers that demoted warnings.
pub fn only_warnings(diags: &[ParseDiagnostic]) -> bool {
    diags.iter().all(|d| d.severity == DiagSeverity::Warning)
}

fn dup_check(already: bool, line: &KeyLine, diags: &mut Vec<ParseDiagnostic>) -> bool {
    if already {
        diags.push(ParseDiagnostic::error(
            line.line,
            line.key_col,
            format!("duplicate field: {}", line.key),
        ));
    }
    !already
}

fn set_string(slot: &mut Option<String>, line: &KeyLine, diags: &mut Vec<ParseDiagnostic>) {
    if dup_check(slot.is_some(), line, diags) {
        *slot = Some(line.value.clone());
    }
}

/// `latency: fixed <ms>` or `latency: uniform <lo> <hi>`.
fn parse_latency(line: &KeyLine, diags: &mut Vec<ParseDiagnostic>) -> Option<LatencyModel> {
    let tokens: Vec<&str> = line.value.split_whitespace().collect();
    let bad = |diags: &mut Vec<ParseDiagnostic>| {
        diags.push(ParseDiagnostic::error(
            line.line,
            line.value_col,
            "expected 'latency: fixed <ms>' or 'latency: uniform <lo> <hi>'",
        ));
        None
    };
    match tokens.as_slice() {
        ["fixed", ms] => match ms.parse::<u64>() {
            Ok(ms) => Some(LatencyModel::Fixed(ms)),
            Err(_) => bad(diags),
        },
        ["uniform", lo, hi] => match (lo.parse::<u64>(), hi.parse::<u64>()) {
            (Ok(lo), Ok(hi)) if lo <= hi => Some(LatencyModel::Uniform { lo, hi }),
            (Ok(lo), Ok(hi)) => {
                diags.push(ParseDiagnostic::error(
                    line.line,
                    line.value_col,
                    format!("latency bounds inverted: {lo} > {hi}"),
                ));
                None
            }
            _ => bad(diags),
        },
        _ => bad(diags),
    }
}

/// `bridge: <from_domain> -> <to_domain> <topic>`.
fn parse_bridge(line: &KeyLine, diags: &mut Vec<ParseDiagnostic>) -> Option<BridgeRule> {
    let bad = |diags: &mut Vec<ParseDiagnostic>| {
        diags.push(ParseDiagnostic::error(
            line.line,
            line.value_col,
            "expected 'bridge: <from_domain> -> <to_domain> <topic>'",
        ));
        None
    };
    let Some((from, rest)) = line.value.split_once("->") else {
        return bad(diags);
    };
    let rest: Vec<&str> = rest.split_whitespace().collect();
    let [to, topic] = rest.as_slice() else {
        return bad(diags);
    };
    match (from.trim().parse::<u32>(), to.parse::<u32>()) {
        (Ok(from_domain), Ok(to_domain)) => Some(BridgeRule {
            from_domain,
            to_domain,
            topic: topic.to_string(),
        }),
        _ => bad(diags),
    }
}

/// `outage: <robot> <robot> <start_ms> <end_ms>`.
fn parse_outage(
    line: &KeyLine,
    diags: &mut Vec<ParseDiagnostic>,
) -> Option<(String, String, u64, u64, usize)> {
    let tokens: Vec<&str> = line.value.split_whitespace().collect();
    let bad = |diags: &mut Vec<ParseDiagnostic>, why: &str| {
        diags.push(ParseDiagnostic::error(
            line.line,
            line.value_col,
            format!("bad outage: {why} (expected 'outage: <a> <b> <start> <end>')"),
        ));
        None
    };
    let [a, b, start, end] = tokens.as_slice() else {
        return bad(diags, "wrong number of fields");
    };
    let (Ok(start), Ok(end)) = (start.parse::<u64>(), end.parse::<u64>()) else {
        return bad(diags, "times must be non-negative integers");
    };
    if start >= end {
        return bad(diags, "start must precede end");
    }
    Some((a.to_string(), b.to_string(), start, end, line.line))
}

/// `actuator: <id> init <pos> min <lo> max <hi> speed <ticks_per_s>`.
fn parse_actuator(line: &KeyLine, diags: &mut Vec<ParseDiagnostic>) -> Option<ActuatorModel> {
    let tokens: Vec<&str> = line.value.split_whitespace().collect();
    let bad = |diags: &mut Vec<ParseDiagnostic>| {
        diags.push(ParseDiagnostic::error(
            line.line,
            line.value_col,
            "expected 'actuator: <id> init <pos> min <lo> max <hi> speed <ticks_per_s>'",
        ));
        None
    };
    let [id, "init", init, "min", lo, "max", hi, "speed", speed] = tokens.as_slice() else {
        return bad(diags);
    };
    let init = parse_i64_token(init, line.line, line.value_col, "init", diags)?;
    let lo = parse_i64_token(lo, line.line, line.value_col, "min", diags)?;
    let hi = parse_i64_token(hi, line.line, line.value_col, "max", diags)?;
    let Ok(speed) = speed.parse::<u32>() else {
        return bad(diags);
    };
    if speed == 0 {
        diags.push(ParseDiagnostic::error(
            line.line,
            line.value_col,
            "actuator speed must be positive",
        ));
        return None;
    }
    if lo > hi || init < lo || init > hi {
        diags.push(ParseDiagnostic::error(
            line.line,
            line.value_col,
            "actuator limits must satisfy min <= init <= max",
        ));
        return None;
    }
    Some(ActuatorModel::new(id.to_string(), init, (lo, hi), speed))
}

/// `param: <key> <value>` where an integer value becomes Int, anything
/// else a string.
fn parse_param(
    line: &KeyLine,
    diags: &mut Vec<ParseDiagnostic>,
) -> Option<(String, ContextValue)> {
    let Some((key, value)) = line.value.split_once(char::is_whitespace) else {
        diags.push(ParseDiagnostic::error(
            line.line,
            line.value_col,
            "expected 'param: <key> <value>'",
        ));
        return None;
    };
    let value = value.trim();
    let value = match value.parse::<i64>() {
        Ok(v) => ContextValue::Int(v),
        Err(_) => ContextValue::Str(value.to_string()),
    };
    Some((key.to_string(), value))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsl::machine::serialize_machine;
    use crate::hfsm::noop_machine;

    fn source() -> MapSource {
        let mut map = BTreeMap::new();
        map.insert("noop.machine".to_string(), serialize_machine(&noop_machine()));
        MapSource(map)
    }

    const DOC: &str = "\
version: 1
mission: survey
seed: 7
horizon: 60000
latency: fixed 100
bridge: 1 -> 2 trigger_b
outage: a b 1000 2000
outage: a b 3000 4000

robot: a
domain: 1
behavior: noop.machine
successor: b
end: robot

robot: b
domain: 2
behavior: noop.machine
actuator: arm init 0 min 0 max 600 speed 100
param: retries 3
end: robot
";

    #[test]
    fn parse_full_scenario() {
        let (sc, warnings) = parse_scenario(DOC, &source()).unwrap();
        assert!(warnings.is_empty(), "{warnings:?}");
        assert_eq!(sc.mission, "survey");
        assert_eq!(sc.seed, 7);
        assert_eq!(sc.latency, LatencyModel::Fixed(100));
        assert_eq!(sc.robots.len(), 2);
        assert_eq!(sc.robots[0].id, "a");
        assert_eq!(sc.links.len(), 1);
        assert_eq!(sc.links[0].outages, vec![(1000, 2000), (3000, 4000)]);
        assert_eq!(sc.robots[1].actuators[0].speed, 100);
        assert_eq!(
            sc.robots[1].params["retries"],
            ContextValue::Int(3)
        );
    }

    #[test]
    fn overlapping_outages_merge_with_warning() {
        let doc = DOC.replace("outage: a b 3000 4000", "outage: b a 1500 2500");
        let (sc, warnings) = parse_scenario(&doc, &source()).unwrap();
        assert_eq!(sc.links[0].outages, vec![(1000, 2500)]);
        assert!(warnings.iter().any(|w| w.message.contains("overlaps")));
    }

    #[test]
    fn missing_behavior_file_diagnosed() {
        let doc = DOC.replace("behavior: noop.machine\nsuccessor", "behavior: nope.machine\nsuccessor");
        let diags = parse_scenario(&doc, &source()).unwrap_err();
        assert!(diags.iter().any(|d| d.message.contains("nope.machine")));
    }

    #[test]
    fn behavior_parse_errors_carry_inner_location() {
        let mut map = source();
        map.0.insert("bad.machine".to_string(), "version: 1\nmachine: M\n".to_string());
        let doc = DOC.replace("behavior: noop.machine\nsuccessor", "behavior: bad.machine\nsuccessor");
        let diags = parse_scenario(&doc, &map).unwrap_err();
        assert!(
            diags.iter().any(|d| d.message.starts_with("bad.machine:")),
            "{diags:?}"
        );
    }

    #[test]
    fn cross_reference_issues_anchor_to_robot_section() {
        let doc = DOC.replace("successor: b", "successor: ghost");
        let diags = parse_scenario(&doc, &source()).unwrap_err();
        let issue = diags
            .iter()
            .find(|d| d.message.contains("unknown successor"))
            .unwrap();
        assert_eq!(issue.line, 10); // "robot: a" line
    }

    #[test]
    fn bad_outage_times_diagnosed() {
        let doc = DOC.replace("outage: a b 1000 2000", "outage: a b 2000 1000");
        let diags = parse_scenario(&doc, &source()).unwrap_err();
        assert!(diags.iter().any(|d| d.message.contains("start must precede end")));
        let doc = DOC.replace("outage: a b 1000 2000", "outage: a b -5 1000");
        let diags = parse_scenario(&doc, &source()).unwrap_err();
        assert!(diags.iter().any(|d| d.message.contains("non-negative")));
    }

    #[test]
    fn unknown_top_level_field_diagnosed() {
        let doc = DOC.replace("seed: 7", "seed: 7\nweather: sunny");
        let diags = parse_scenario(&doc, &source()).unwrap_err();
        assert!(diags
            .iter()
            .any(|d| d.message.contains("unknown field: weather") && d.line == 4));
    }
}
