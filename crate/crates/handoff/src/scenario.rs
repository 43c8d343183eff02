//! Scenario model: the fleet, its chain wiring, network configuration
//! and simulation parameters. Scenarios come from `.scenario` documents
//! (see the `dsl` module) or are built programmatically in tests.

use std::collections::{BTreeMap, BTreeSet};

use crate::actuation::ActuatorModel;
use crate::bus::{BridgeRule, LatencyModel, LinkSchedule};
use crate::hfsm::{validate_machine, ContextValue, MachineDef, StateKind};

pub const MOTOR_SERVER: &str = "move_motor";
pub const TIMER_SERVER: &str = "timer";

/// Default probe cadence, matching the latency granularity.
pub const DEFAULT_PING_INTERVAL: u64 = 500;
pub const DEFAULT_FEEDBACK_INTERVAL: u64 = 250;

#[derive(Debug, Clone, PartialEq)]
pub struct RobotSpec {
    pub id: String,
    pub domain: u32,
    pub trigger_topic: String,
    pub successor: Option<String>,
    /// Reachability peer; defaults to the successor.
    pub probe_peer: Option<String>,
    /// Per-robot override of the scenario ping interval.
    pub ping_interval: Option<u64>,
    pub behavior: MachineDef,
    /// Relative path the behavior was loaded from (empty when built
    /// programmatically).
    pub behavior_path: String,
    /// Root terminal outcome counted as success; anything else is a
    /// behavior failure and suppresses the outgoing trigger.
    pub success_outcome: String,
    pub actuators: Vec<ActuatorModel>,
    /// Initial execution-context entries.
    pub params: BTreeMap<String, ContextValue>,
}

impl RobotSpec {
    pub fn new(id: impl Into<String>, domain: u32, behavior: MachineDef) -> Self {
        let id = id.into();
        Self {
            trigger_topic: format!("trigger_{id}"),
            id,
            domain,
            successor: None,
            probe_peer: None,
            ping_interval: None,
            behavior,
            behavior_path: String::new(),
            success_outcome: "finished".into(),
            actuators: Vec::new(),
            params: BTreeMap::new(),
        }
    }

    pub fn probe_peer(&self) -> Option<&str> {
        self.probe_peer
            .as_deref()
            .or(self.successor.as_deref())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub mission: String,
    pub seed: u64,
    /// Number of full chain traversals. More than one requires a cyclic
    /// chain (a successor pointing back at the head).
    pub epochs: u32,
    pub horizon: u64,
    pub ping_interval: u64,
    pub feedback_interval: u64,
    pub latency: LatencyModel,
    /// Declaration order; the first robot is the chain head and
    /// receives the operator's initial trigger at t=0.
    pub robots: Vec<RobotSpec>,
    pub bridges: Vec<BridgeRule>,
    pub links: Vec<LinkSchedule>,
}

impl Scenario {
    pub fn new(mission: impl Into<String>, seed: u64, horizon: u64) -> Self {
        Self {
            mission: mission.into(),
            seed,
            epochs: 1,
            horizon,
            ping_interval: DEFAULT_PING_INTERVAL,
            feedback_interval: DEFAULT_FEEDBACK_INTERVAL,
            latency: crate::bus::DEFAULT_LATENCY,
            robots: Vec::new(),
            bridges: Vec::new(),
            links: Vec::new(),
        }
    }

    pub fn head(&self) -> Option<&RobotSpec> {
        self.robots.first()
    }

    pub fn robot(&self, id: &str) -> Option<&RobotSpec> {
        self.robots.iter().find(|r| r.id == id)
    }

    pub fn ping_interval_for(&self, robot: &RobotSpec) -> u64 {
        robot.ping_interval.unwrap_or(self.ping_interval)
    }

    /// True when following successors from the head returns to the head.
    pub fn is_cyclic(&self) -> bool {
        let Some(head) = self.head() else { return false };
        let mut seen = BTreeSet::new();
        let mut current = head;
        while let Some(next_id) = &current.successor {
            if next_id == &head.id {
                return true;
            }
            if !seen.insert(next_id.clone()) {
                return false;
            }
            match self.robot(next_id) {
                Some(next) => current = next,
                None => return false,
            }
        }
        false
    }

    /// Robot ids on the chain from the head, in trigger order.
    pub fn chain(&self) -> Vec<String> {
        let Some(head) = self.head() else { return Vec::new() };
        let mut order = vec![head.id.clone()];
        let mut seen = BTreeSet::from([head.id.clone()]);
        let mut current = head;
        while let Some(next_id) = &current.successor {
            if !seen.insert(next_id.clone()) {
                break;
            }
            match self.robot(next_id) {
                Some(next) => {
                    order.push(next.id.clone());
                    current = next;
                }
                None => break,
            }
        }
        order
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Severity {
    Error,
    Warning,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ScenarioIssue {
    pub severity: Severity,
    pub message: String,
}

impl std::fmt::Display for ScenarioIssue {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let tag = match self.severity {
            Severity::Error => "error",
            Severity::Warning => "warning",
        };
        write!(f, "{tag}: {}", self.message)
    }
}

fn err(issues: &mut Vec<ScenarioIssue>, message: String) {
    issues.push(ScenarioIssue {
        severity: Severity::Error,
        message,
    });
}

/// Cross-reference validation of a fully assembled scenario. Errors
/// make the scenario unrunnable; warnings flag likely mistakes.
pub fn validate_scenario(sc: &Scenario) -> Vec<ScenarioIssue> {
    let mut issues = Vec::new();

    if sc.epochs == 0 {
        err(&mut issues, "epochs must be at least 1".into());
    }
    if sc.horizon == 0 {
        err(&mut issues, "horizon must be positive".into());
    }
    if let LatencyModel::Uniform { lo, hi } = sc.latency {
        if lo > hi {
            err(&mut issues, format!("latency bounds inverted: {lo} > {hi}"));
        }
    }

    let mut ids = BTreeSet::new();
    let mut topics = BTreeSet::new();
    let mut domains = BTreeSet::new();
    for robot in &sc.robots {
        if !ids.insert(robot.id.clone()) {
            err(&mut issues, format!("duplicate robot id: {}", robot.id));
        }
        if !topics.insert(robot.trigger_topic.clone()) {
            err(&mut issues, format!("duplicate trigger topic: {}", robot.trigger_topic));
        }
        // Every robot hosts a behavior engine, and an engine cannot be
        // instantiated twice within one domain.
        if !domains.insert(robot.domain) {
            err(&mut issues, format!(
                "robot {}: domain {} already hosts a behavior engine (one engine per domain)",
                robot.id, robot.domain
            ));
        }
    }

    for robot in &sc.robots {
        if let Some(successor) = &robot.successor {
            if successor == &robot.id {
                err(&mut issues, format!("robot {}: successor is itself", robot.id));
            } else if sc.robot(successor).is_none() {
                err(&mut issues, format!("robot {}: unknown successor: {successor}", robot.id));
            }
        }
        if let Some(peer) = robot.probe_peer() {
            if sc.robot(peer).is_none() {
                err(&mut issues, format!("robot {}: unknown probe peer: {peer}", robot.id));
            }
        }
        let report = validate_machine(&robot.behavior);
        for issue in report.issues {
            err(&mut issues, format!("robot {}: behavior {issue}", robot.id));
        }
        check_action_bindings(robot, &mut issues);
    }

    for rule in &sc.bridges {
        for d in [rule.from_domain, rule.to_domain] {
            if !domains.contains(&d) {
                issues.push(ScenarioIssue {
                    severity: Severity::Error,
                    message: format!("bridge rule references unknown domain: {d}"),
                });
            }
        }
    }

    for link in &sc.links {
        for agent in [&link.a, &link.b] {
            if sc.robot(agent).is_none() {
                issues.push(ScenarioIssue {
                    severity: Severity::Error,
                    message: format!("link schedule references unknown robot: {agent}"),
                });
            }
        }
    }

    if sc.epochs > 1 && !sc.is_cyclic() {
        issues.push(ScenarioIssue {
            severity: Severity::Error,
            message: "epochs > 1 requires a cyclic chain back to the head".into(),
        });
    }

    // A cross-domain trigger without a matching bridge rule can never
    // arrive; flag it loudly.
    for robot in &sc.robots {
        let Some(successor) = robot.successor.as_ref().and_then(|s| sc.robot(s)) else {
            continue;
        };
        if successor.domain != robot.domain {
            let bridged = sc.bridges.iter().any(|r| {
                r.from_domain == robot.domain
                    && r.to_domain == successor.domain
                    && r.topic == successor.trigger_topic
            });
            if !bridged {
                issues.push(ScenarioIssue {
                    severity: Severity::Warning,
                    message: format!(
                        "robot {}: successor {} is in domain {} but no bridge rule forwards {}",
                        robot.id, successor.id, successor.domain, successor.trigger_topic
                    ),
                });
            }
        }
    }

    let on_chain: BTreeSet<String> = sc.chain().into_iter().collect();
    for robot in &sc.robots {
        if !on_chain.contains(&robot.id) {
            issues.push(ScenarioIssue {
                severity: Severity::Warning,
                message: format!("robot {} is not reachable from the chain head", robot.id),
            });
        }
    }

    issues
}

/// Every atomic action binding must name a known server, and motor
/// goals must reference a declared actuator.
fn check_action_bindings(robot: &RobotSpec, issues: &mut Vec<ScenarioIssue>) {
    let actuator_ids: BTreeSet<&str> = robot.actuators.iter().map(|a| a.id.as_str()).collect();
    let mut walk = vec![&robot.behavior];
    while let Some(machine) = walk.pop() {
        for state in machine.states.values() {
            match &state.kind {
                StateKind::Composite { child, .. } => walk.push(child),
                StateKind::Atomic { action, .. } => match action.server.as_str() {
                    TIMER_SERVER => {}
                    MOTOR_SERVER => {
                        if !actuator_ids.contains(action.actuator.as_str()) {
                            issues.push(ScenarioIssue {
                                severity: Severity::Error,
                                message: format!(
                                    "robot {}: state {} drives undeclared actuator {}",
                                    robot.id, state.name, action.actuator
                                ),
                            });
                        }
                    }
                    other => issues.push(ScenarioIssue {
                        severity: Severity::Error,
                        message: format!(
                            "robot {}: state {} binds unknown action server {other}",
                            robot.id, state.name
                        ),
                    }),
                },
            }
        }
    }
}

pub fn has_errors(issues: &[ScenarioIssue]) -> bool {
    issues.iter().any(|i| i.severity == Severity::Error)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hfsm::noop_machine;

    fn two_robot_scenario() -> Scenario {
        let mut sc = Scenario::new("m", 1, 60_000);
        let mut r1 = RobotSpec::new("deployer", 1, noop_machine());
        r1.successor = Some("stinger".into());
        let r2 = RobotSpec::new("stinger", 2, noop_machine());
        sc.robots = vec![r1, r2];
        sc.bridges.push(BridgeRule {
            from_domain: 1,
            to_domain: 2,
            topic: "trigger_stinger".into(),
        });
        sc
    }

    #[test]
    fn valid_scenario_passes() {
        let issues = validate_scenario(&two_robot_scenario());
        assert!(!has_errors(&issues), "{issues:?}");
    }

    #[test]
    fn unknown_successor_rejected() {
        let mut sc = two_robot_scenario();
        sc.robots[0].successor = Some("R9".into());
        let issues = validate_scenario(&sc);
        assert!(issues
            .iter()
            .any(|i| i.message.contains("unknown successor: R9")));
    }

    #[test]
    fn one_engine_per_domain() {
        let mut sc = two_robot_scenario();
        sc.robots[1].domain = 1;
        let issues = validate_scenario(&sc);
        assert!(issues
            .iter()
            .any(|i| i.severity == Severity::Error && i.message.contains("one engine per domain")));
    }

    #[test]
    fn epochs_require_cycle() {
        let mut sc = two_robot_scenario();
        sc.epochs = 3;
        let issues = validate_scenario(&sc);
        assert!(issues.iter().any(|i| i.message.contains("cyclic")));
        sc.robots[1].successor = Some("deployer".into());
        sc.bridges.push(BridgeRule {
            from_domain: 2,
            to_domain: 1,
            topic: "trigger_deployer".into(),
        });
        let issues = validate_scenario(&sc);
        assert!(!has_errors(&issues), "{issues:?}");
        assert!(sc.is_cyclic());
    }

    #[test]
    fn missing_bridge_warned() {
        let mut sc = two_robot_scenario();
        sc.bridges.clear();
        let issues = validate_scenario(&sc);
        assert!(issues
            .iter()
            .any(|i| i.severity == Severity::Warning && i.message.contains("no bridge rule")));
    }

    #[test]
    fn chain_order() {
        let sc = two_robot_scenario();
        assert_eq!(sc.chain(), vec!["deployer".to_string(), "stinger".to_string()]);
        assert!(!sc.is_cyclic());
    }
}
